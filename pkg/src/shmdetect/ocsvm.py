"""nu-one-class SVM trained by SMO on the dual.

Dual problem::

    min_a  1/2 a^T Q a    s.t.  0 <= a_i <= 1/(nu N),  sum(a) = 1

with ``Q_ij = K(x_i, x_j)``. The decision value of ``x`` is
``sum_i a_i K(x, x_i) - rho``; points with a negative value are outliers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConvergenceError, DataError

log = logging.getLogger(__name__)

KERNELS = ("rbf", "poly", "linear")
NU_MIN = 1e-3


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice. ``gamma`` (rbf) and ``scale`` (poly) default to ``1 / (d * var)``."""

    kind: str = "rbf"
    gamma: float | None = None
    order: int = 3
    coef0: float = 1.0
    scale: float | None = None

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.kind == "poly" and not 2 <= self.order <= 4:
            raise ValueError("polynomial order must lie in [2, 4]")

    def resolved(self, X: np.ndarray) -> "KernelSpec":
        """Fill unset scale parameters from training data ``X``."""
        X = np.atleast_2d(X)
        var = float(X.var())
        heuristic = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        spec = self
        if spec.kind == "rbf" and spec.gamma is None:
            spec = replace(spec, gamma=heuristic)
        if spec.kind == "poly" and spec.scale is None:
            spec = replace(spec, scale=heuristic)
        return spec


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A, B = np.atleast_2d(np.asarray(A, float)), np.atleast_2d(np.asarray(B, float))
    if A.shape[1] != B.shape[1]:
        raise ValueError("dimension mismatch")
    if spec.kind == "rbf":
        if spec.gamma is None:
            raise ValueError("rbf kernel needs gamma; call KernelSpec.resolved first")
        return np.exp(-spec.gamma * cdist(A, B, "sqeuclidean"))
    dot = A @ B.T
    if spec.kind == "linear":
        return dot
    scale = 1.0 if spec.scale is None else spec.scale
    return (scale * dot + spec.coef0) ** spec.order


def kernel_eval(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> float:
    return float(kernel_matrix(spec, a, b)[0, 0])


@dataclass(frozen=True, eq=False)
class OcSvmModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    rho: float
    kernel: KernelSpec
    nu: float
    training_size: int
    support_indices: np.ndarray
    n_updates: int = 0
    max_violation: float = 0.0

    @property
    def upper_bound(self) -> float:
        return 1.0 / (self.nu * self.training_size)


@dataclass
class DualSolution:
    alpha: np.ndarray
    grad: np.ndarray
    n_updates: int
    max_violation: float


def _violation(alpha: np.ndarray, grad: np.ndarray, upper: float) -> tuple[float, int, int]:
    up = alpha < upper
    down = alpha > 0
    if not up.any() or not down.any():  # every variable pinned: nothing can move
        return 0.0, -1, -1
    i = int(np.flatnonzero(up)[np.argmin(grad[up])])
    j = int(np.flatnonzero(down)[np.argmax(grad[down])])
    return float(grad[j] - grad[i]), i, j


def _polish(Q: np.ndarray, sol: DualSolution, upper: float) -> DualSolution:
    """Re-solve the equality-constrained system on the identified active set.

    SMO stops at a tolerance; once the free / at-bound partition is known the
    optimum is the solution of a small linear system, which removes the
    residual solver error. Kept only if it is feasible and no worse.
    """
    alpha = sol.alpha
    tiny = 1e-9 * min(upper, 1.0)
    free = np.flatnonzero((alpha > tiny) & (alpha < upper - tiny))
    at_upper = np.flatnonzero(alpha >= upper - tiny)
    if free.size == 0:
        return sol
    m = free.size
    lhs = np.zeros((m + 1, m + 1))
    lhs[:m, :m] = Q[np.ix_(free, free)]
    lhs[:m, m] = -1.0
    lhs[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[:m] = -upper * Q[np.ix_(free, at_upper)].sum(axis=1)
    rhs[m] = 1.0 - upper * at_upper.size
    if np.linalg.cond(lhs) > 1e12:
        return sol
    x = np.linalg.solve(lhs, rhs)
    a_free = x[:m]
    if not np.all(np.isfinite(a_free)) or np.any(a_free <= 0) or np.any(a_free >= upper):
        return sol
    new = np.zeros_like(alpha)
    new[at_upper] = upper
    new[free] = a_free
    grad = Q @ new
    gap = _violation(new, grad, upper)[0]
    if gap > max(sol.max_violation, 0.0) + 1e-12:
        return sol
    return DualSolution(new, grad, sol.n_updates, max(gap, 0.0))


def solve_dual(Q: np.ndarray, upper: float, tol: float = 1e-6,
               max_updates: int = 100_000, polish: bool = True) -> DualSolution:
    """SMO with maximal-violating-pair working-set selection."""
    n = Q.shape[0]
    if n * upper < 1 - 1e-12:
        raise DataError("box constraint cannot sum to one")
    alpha = np.zeros(n)
    remaining = 1.0
    for i in range(n):
        alpha[i] = min(upper, remaining)
        remaining -= alpha[i]
        if remaining <= 0:
            break
    grad = Q @ alpha
    diag = np.diag(Q)
    updates = 0
    while True:
        gap, i, j = _violation(alpha, grad, upper)
        if gap < tol:
            break
        if updates >= max_updates:
            raise ConvergenceError(
                f"SMO did not converge in {max_updates} updates (max KKT violation {gap:.3g})")
        quad = diag[i] + diag[j] - 2.0 * Q[i, j]
        step = gap / max(quad, 1e-12)
        room_i, room_j = upper - alpha[i], alpha[j]
        if step >= room_i or step >= room_j:
            step = min(room_i, room_j)
            # snap whichever variable hits its bound exactly (both, on a tie)
            alpha[i] = upper if step == room_i else alpha[i] + step
            alpha[j] = 0.0 if step == room_j else alpha[j] - step
        else:
            alpha[i] += step
            alpha[j] -= step
        grad += step * (Q[:, i] - Q[:, j])
        updates += 1
    sol = DualSolution(alpha, grad, updates, max(gap, 0.0))
    return _polish(Q, sol, upper) if polish else sol


def _offset(alpha: np.ndarray, grad: np.ndarray, upper: float) -> float:
    tiny = 1e-9 * min(upper, 1.0)
    free = (alpha > tiny) & (alpha < upper - tiny)
    if np.any(free):
        return float(np.median(grad[free]))
    return float(np.max(grad[alpha >= upper - tiny]))


def clamp_nu(nu: float) -> float:
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    return float(min(max(nu, NU_MIN), 1.0))


def fit(features: np.ndarray, nu: float, kernel: KernelSpec | None = None,
        tol: float = 1e-6, max_updates: int = 100_000) -> OcSvmModel:
    X = np.atleast_2d(np.asarray(features, dtype=float))
    n = X.shape[0]
    if n < 1:
        raise DataError("cannot fit a one-class SVM on zero points")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite training features")
    nu = clamp_nu(nu)
    spec = (kernel or KernelSpec()).resolved(X)
    upper = 1.0 / (nu * n)
    Q = kernel_matrix(spec, X, X)
    sol = solve_dual(Q, upper, tol, max_updates)
    alpha = sol.alpha
    rho = _offset(alpha, sol.grad, upper)
    sv = np.flatnonzero(alpha > 0)
    log.debug("oc-svm: N=%d nu=%.4g, %d SVs, %d updates", n, nu, sv.size, sol.n_updates)
    return OcSvmModel(X[sv].copy(), alpha[sv].copy(), rho, spec, nu, n, sv,
                      sol.n_updates, sol.max_violation)


def dual_objective(alpha: np.ndarray, Q: np.ndarray) -> float:
    return 0.5 * float(alpha @ Q @ alpha)


def full_alphas(model: OcSvmModel) -> np.ndarray:
    out = np.zeros(model.training_size)
    out[model.support_indices] = model.alphas
    return out


def decision(model: OcSvmModel, x: np.ndarray) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    values = kernel_matrix(model.kernel, np.atleast_2d(x), model.support_vectors) @ model.alphas
    values = values - model.rho
    return float(values[0]) if single else values


def classify(model: OcSvmModel, x: np.ndarray) -> np.ndarray | bool:
    """True for inliers (decision value >= 0)."""
    d = decision(model, x)
    return bool(d >= 0) if np.ndim(d) == 0 else d >= 0
