"""Dense feed-forward networks with hand-written reverse-mode gradients.

Inputs are batched row-wise: ``x`` has shape ``(batch, in_dim)`` (a 1-D vector
is treated as a batch of one and the output is squeezed back). Everything runs
in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError

ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "identity")
LEAKY_SLOPE = 0.01


def _sigmoid(a: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def activate(name: str, a: np.ndarray) -> np.ndarray:
    if name == "identity":
        return a
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "leaky_relu":
        return np.where(a > 0, a, LEAKY_SLOPE * a)
    if name == "sigmoid":
        return _sigmoid(a)
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, a: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Derivative of the activation w.r.t. its pre-activation ``a``."""
    if name == "identity":
        return np.ones_like(a)
    if name == "relu":
        return (a > 0).astype(a.dtype)
    if name == "leaky_relu":
        return np.where(a > 0, 1.0, LEAKY_SLOPE)
    if name == "sigmoid":
        return out * (1.0 - out)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class DenseNetwork:
    layers: list[DenseLayer]
    seed: int | None = None

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"layer dimensions do not chain: {prev.out_dim} -> {nxt.in_dim}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        params = []
        for layer in self.layers:
            params.extend((layer.weight, layer.bias))
        return params

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(
            [DenseLayer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers],
            self.seed,
        )


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    outputs: list[np.ndarray]
    squeezed: bool


def init_network(layer_sizes: Sequence[int], activations: Sequence[str] | str,
                 seed: int) -> DenseNetwork:
    """Glorot-uniform weights, zero biases.

    ``layer_sizes`` lists every width including input and output, so a network
    with ``len(layer_sizes) - 1`` layers is built. ``activations`` is either one
    name per layer or a single name used everywhere.
    """
    sizes = list(layer_sizes)
    if len(sizes) < 2:
        raise ValueError("layer_sizes needs at least input and output widths")
    if any(int(s) < 1 for s in sizes):
        raise ValueError("all layer sizes must be >= 1")
    n_layers = len(sizes) - 1
    if isinstance(activations, str):
        activations = [activations] * n_layers
    activations = list(activations)
    if len(activations) != n_layers:
        raise ValueError(f"expected {n_layers} activations, got {len(activations)}")
    for name in activations:
        if name not in ACTIVATIONS:
            raise ValueError(f"unknown activation {name!r}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return DenseNetwork(layers, seed)


def forward(net: DenseNetwork, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=float)
    squeezed = x.ndim == 1
    h = x[None, :] if squeezed else x
    if h.shape[1] != net.in_dim:
        raise ValueError(f"input width {h.shape[1]} does not match network input {net.in_dim}")
    cache = ForwardCache([], [], [], squeezed)
    for layer in net.layers:
        a = h @ layer.weight.T + layer.bias
        out = activate(layer.activation, a)
        cache.inputs.append(h)
        cache.pre.append(a)
        cache.outputs.append(out)
        h = out
    return (h[0] if squeezed else h), cache


def backward(net: DenseNetwork, cache: ForwardCache,
             output_gradient: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients of ``sum(output * output_gradient)`` w.r.t. parameters and input.

    Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered like
    :meth:`DenseNetwork.parameters`.
    """
    g = np.asarray(output_gradient, dtype=float)
    if cache.squeezed:
        g = g[None, :]
    if len(cache.pre) != len(net.layers) or g.shape != cache.outputs[-1].shape:
        raise ValueError("stale cache: does not match this network/output gradient")
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))  # type: ignore[list-item]
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        if cache.inputs[idx].shape[1] != layer.in_dim:
            raise ValueError("stale cache: layer shape changed since forward")
        delta = g * activation_grad(layer.activation, cache.pre[idx], cache.outputs[idx])
        grads[2 * idx] = delta.T @ cache.inputs[idx]
        grads[2 * idx + 1] = delta.sum(axis=0)
        g = delta @ layer.weight
    return grads, (g[0] if cache.squeezed else g)


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def make_optimizer(kind: str, learning_rate: float,
                   params: Sequence[np.ndarray]) -> OptimizerState:
    kind = kind.lower()
    if kind not in ("adam", "sgd"):
        raise ValueError(f"unknown optimizer {kind!r}")
    if not learning_rate > 0:
        raise ValueError("learning rate must be positive")
    state = OptimizerState(kind, float(learning_rate))
    if kind == "adam":
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    return state


def optimizer_step(state: OptimizerState, params: Sequence[np.ndarray],
                   grads: Sequence[np.ndarray]) -> Sequence[np.ndarray]:
    """Update ``params`` in place and return them."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient passed to optimizer")
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            p -= state.learning_rate * g
        return params
    if len(state.m) != len(params) or any(m.shape != p.shape for m, p in zip(state.m, params)):
        raise ValueError("Adam moment shapes do not match parameters")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return params


def numerical_gradient(loss: Callable[[], float], params: Sequence[np.ndarray],
                       h: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of ``loss()`` w.r.t. every entry of ``params``.

    ``loss`` must read the arrays in ``params`` (they are perturbed in place and
    restored).
    """
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss()
            flat[i] = orig - h
            down = loss()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def relative_error(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> float:
    """Largest per-array ``|a - b| / max(|a|, |b|)`` in the Euclidean norm."""
    worst = 0.0
    for x, y in zip(a, b):
        denom = max(np.linalg.norm(x), np.linalg.norm(y))
        if denom == 0.0:
            continue
        worst = max(worst, float(np.linalg.norm(x - y) / denom))
    return worst
