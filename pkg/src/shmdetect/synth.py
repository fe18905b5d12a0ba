"""Lumped-mass shear-frame simulator used to emulate the benchmark structure.

Stories are numbered from 1 (ground floor) upward; DOF ``i`` is the lateral
displacement of story ``i + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import NumericalError
from .signals import SensorRecord


@dataclass(frozen=True)
class StructuralModel:
    story_masses: tuple[float, ...]
    story_stiffnesses: tuple[float, ...]
    damping_ratio: float = 0.02

    def __post_init__(self):
        masses = tuple(float(m) for m in self.story_masses)
        stiff = tuple(float(k) for k in self.story_stiffnesses)
        if not masses or len(masses) != len(stiff):
            raise ValueError("need equal, non-empty mass and stiffness lists")
        if min(masses) <= 0 or min(stiff) <= 0:
            raise ValueError("masses and stiffnesses must be strictly positive")
        if not 0 <= self.damping_ratio <= 0.2:
            raise ValueError("damping ratio must lie in [0, 0.2]")
        object.__setattr__(self, "story_masses", masses)
        object.__setattr__(self, "story_stiffnesses", stiff)

    @property
    def story_count(self) -> int:
        return len(self.story_masses)

    def damaged(self, scenario: "DamageScenario") -> "StructuralModel":
        mult = scenario.stiffness_multipliers
        if len(mult) != self.story_count:
            raise ValueError("scenario does not match the story count")
        return replace(self, story_stiffnesses=tuple(k * a for k, a in
                                                     zip(self.story_stiffnesses, mult)))


@dataclass(frozen=True)
class DamageScenario:
    scenario_id: int
    stiffness_multipliers: tuple[float, ...]

    def __post_init__(self):
        mult = tuple(float(a) for a in self.stiffness_multipliers)
        if any(not 0 < a <= 1 for a in mult):
            raise ValueError("stiffness multipliers must lie in (0, 1]")
        object.__setattr__(self, "stiffness_multipliers", mult)

    @property
    def undamaged(self) -> bool:
        return all(a == 1.0 for a in self.stiffness_multipliers)

    @property
    def severity(self) -> float:
        """Mean fractional stiffness loss over the stories."""
        return 1.0 - float(np.mean(self.stiffness_multipliers))


@dataclass(frozen=True)
class ExcitationSpec:
    duration_s: float = 120.0
    sampling_rate_hz: float = 200.0
    band_low_hz: float = 5.0
    band_high_hz: float = 50.0
    seed: int = 0
    amplitude: float = 100.0  # RMS force in N

    def __post_init__(self):
        if self.duration_s <= 0 or self.sampling_rate_hz <= 0:
            raise ValueError("duration and sampling rate must be positive")
        if not 0 < self.band_low_hz < self.band_high_hz < self.sampling_rate_hz / 2:
            raise ValueError("band must satisfy 0 < low < high < Nyquist")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sampling_rate_hz))


def mass_matrix(model: StructuralModel) -> np.ndarray:
    return np.diag(model.story_masses)


def stiffness_matrix(model: StructuralModel) -> np.ndarray:
    """Tridiagonal chain stiffness; story ``i`` spring links floor ``i`` to the one below."""
    k = np.asarray(model.story_stiffnesses)
    n = k.size
    K = np.zeros((n, n))
    for i in range(n):
        K[i, i] += k[i]
        if i + 1 < n:
            K[i, i] += k[i + 1]
            K[i, i + 1] = K[i + 1, i] = -k[i + 1]
    return K


def analytic_modes(model: StructuralModel) -> list[tuple[float, np.ndarray]]:
    """Natural frequencies (Hz, ascending) and unit-peak mode shapes."""
    lam, phi = linalg.eigh(stiffness_matrix(model), mass_matrix(model))
    assert np.all(lam > 0), "stiffness/mass must be positive definite"
    modes = []
    for j in np.argsort(lam):
        shape = phi[:, j] / phi[np.argmax(np.abs(phi[:, j])), j]
        modes.append((float(np.sqrt(lam[j]) / (2 * np.pi)), shape))
    return modes


def rayleigh_damping(model: StructuralModel) -> np.ndarray:
    """``C = a0 M + a1 K`` matching the damping ratio at the first two modes."""
    M, K = mass_matrix(model), stiffness_matrix(model)
    omegas = [2 * np.pi * f for f, _ in analytic_modes(model)]
    zeta = model.damping_ratio
    if len(omegas) == 1:
        return 2 * zeta * omegas[0] * M
    w1, w2 = omegas[0], omegas[1]
    a0 = 2 * zeta * w1 * w2 / (w1 + w2)
    a1 = 2 * zeta / (w1 + w2)
    return a0 * M + a1 * K


def calibrated_model(masses: Sequence[float] = (1000.0, 1000.0, 1000.0, 750.0),
                     first_mode_hz: float = 7.5,
                     stiffness_profile: Sequence[float] | None = None,
                     damping_ratio: float = 0.02) -> StructuralModel:
    """Shear frame whose stiffnesses are scaled so the first mode sits at ``first_mode_hz``."""
    profile = np.ones(len(masses)) if stiffness_profile is None else np.asarray(stiffness_profile)
    trial = StructuralModel(tuple(masses), tuple(profile), damping_ratio)
    f1 = analytic_modes(trial)[0][0]
    scale = (first_mode_hz / f1) ** 2
    return StructuralModel(tuple(masses), tuple(profile * scale), damping_ratio)


def default_ladder(story_count: int = 4) -> list[DamageScenario]:
    """Nine scenarios: undamaged, then graded stiffness loss.

    Scenarios 2 and 6 are deliberately mild; 9 is the most severe.
    """
    if story_count != 4:
        base = [1.0, 0.95, 0.9, 0.8, 0.7, 0.93, 0.55, 0.45, 0.35]
        return [DamageScenario(i + 1, (a,) * story_count) for i, a in enumerate(base)]
    rows = [
        (1.0, 1.0, 1.0, 1.0),
        (0.85, 1.0, 1.0, 1.0),
        (0.8, 1.0, 1.0, 0.8),
        (0.75, 0.75, 0.75, 0.75),
        (0.6, 0.6, 0.7, 0.7),
        (0.8, 0.85, 1.0, 1.0),
        (0.45, 0.45, 0.45, 0.45),
        (0.4, 0.4, 0.35, 0.35),
        (0.3, 0.3, 0.3, 0.3),
    ]
    return [DamageScenario(i + 1, r) for i, r in enumerate(rows)]


def bandlimited_noise(spec: ExcitationSpec) -> np.ndarray:
    """Gaussian noise with a flat spectrum on ``[band_low, band_high]`` and zero elsewhere.

    Scaled to RMS ``spec.amplitude``.
    """
    n = spec.n_samples
    rng = np.random.default_rng(spec.seed)
    freqs = np.fft.rfftfreq(n, d=1.0 / spec.sampling_rate_hz)
    coeffs = rng.standard_normal(freqs.size) + 1j * rng.standard_normal(freqs.size)
    mask = (freqs >= spec.band_low_hz) & (freqs <= spec.band_high_hz)
    coeffs[~mask] = 0.0
    x = np.fft.irfft(coeffs, n=n)
    return x * (spec.amplitude / np.sqrt(np.mean(x * x)))


def newmark(M: np.ndarray, C: np.ndarray, K: np.ndarray, force: np.ndarray, dt: float,
            x0: np.ndarray | None = None, v0: np.ndarray | None = None,
            beta: float = 0.25, gamma: float = 0.5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Newmark-beta integration of ``M a + C v + K x = f``.

    ``force`` has shape ``(steps, dof)``; row 0 is the load at t = 0. Returns
    displacement, velocity and acceleration histories of the same shape.
    """
    force = np.asarray(force, dtype=float)
    steps, n = force.shape
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    v = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float)
    a = np.linalg.solve(M, force[0] - C @ v - K @ x)

    # One step is linear in (x, v, a, f_next): state_{n+1} = A state_n + B f_{n+1}.
    k_eff = K + gamma / (beta * dt) * C + M / (beta * dt ** 2)
    k_inv = np.linalg.inv(k_eff)
    I = np.eye(n)
    Z = np.zeros((n, n))
    px = M / (beta * dt ** 2) + gamma / (beta * dt) * C
    pv = M / (beta * dt) + (gamma / beta - 1) * C
    pa = (1 / (2 * beta) - 1) * M + dt * (gamma / (2 * beta) - 1) * C
    Ax = np.hstack([k_inv @ px, k_inv @ pv, k_inv @ pa])
    Bx = k_inv
    # v, a expressed through x_{n+1}
    dx = np.hstack([-I, Z, Z]) + Ax  # x_{n+1} - x_n
    Av = gamma / (beta * dt) * dx + np.hstack([Z, (1 - gamma / beta) * I,
                                               dt * (1 - gamma / (2 * beta)) * I])
    Aa = dx / (beta * dt ** 2) + np.hstack([Z, -I / (beta * dt), -(1 / (2 * beta) - 1) * I])
    A = np.vstack([Ax, Av, Aa])
    B = np.vstack([Bx, gamma / (beta * dt) * Bx, Bx / (beta * dt ** 2)])

    drive = force @ B.T
    out = np.empty((steps, 3 * n))
    state = np.concatenate([x, v, a])
    out[0] = state
    for i in range(1, steps):
        state = A @ state + drive[i]
        out[i] = state
    if not np.all(np.isfinite(out)):
        raise NumericalError("Newmark integration produced non-finite values")
    return out[:, :n], out[:, n:2 * n], out[:, 2 * n:]


def simulate(model: StructuralModel, scenario: DamageScenario, spec: ExcitationSpec,
             force_story: int | None = None, snr_db: float | None = 40.0,
             substeps: int = 4, noise_seed: int | None = None) -> list[SensorRecord]:
    """Story accelerations of the damaged frame under band-limited shaker force.

    The force is synthesised and integrated at ``substeps`` times the output
    rate, then every ``substeps``-th sample is kept (the response is
    band-limited well below the output Nyquist frequency). Additive Gaussian
    measurement noise is applied per channel at ``snr_db`` (``None`` disables it).
    """
    if force_story is None:
        force_story = model.story_count
    if not 1 <= force_story <= model.story_count:
        raise ValueError(f"force_story must lie in 1..{model.story_count}")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    damaged = model.damaged(scenario)
    fine = replace(spec, sampling_rate_hz=spec.sampling_rate_hz * substeps)
    n_out = spec.n_samples
    load = bandlimited_noise(fine)[: n_out * substeps]
    force = np.zeros((load.size, model.story_count))
    force[:, force_story - 1] = load
    _, _, acc = newmark(mass_matrix(damaged), rayleigh_damping(damaged),
                        stiffness_matrix(damaged), force, 1.0 / fine.sampling_rate_hz)
    acc = acc[::substeps][:n_out]
    if snr_db is not None:
        rng = np.random.default_rng(spec.seed + 7919 if noise_seed is None else noise_seed)
        rms = np.sqrt(np.mean(acc ** 2, axis=0))
        acc = acc + rng.standard_normal(acc.shape) * rms * 10 ** (-snr_db / 20)
    return [SensorRecord(i + 1, acc[:, i].copy(), spec.sampling_rate_hz)
            for i in range(model.story_count)]
