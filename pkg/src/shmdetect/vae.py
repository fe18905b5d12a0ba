"""Variational autoencoder over normalized frames, plus a plain-AE mode.

Frames are rows of a ``(N, s)`` array with values in [0, 1]. The encoder emits
``(mu, log_var)`` and the decoder ends in a sigmoid. In ``deterministic`` mode
the encoder emits the code directly and the KL term is dropped, which gives
the ordinary autoencoder baseline through the same training loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import neural
from .errors import TrainingError
from .signals import NormalizationStats, holdout_indices

log = logging.getLogger(__name__)

VARIATIONAL = "variational"
DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class Architecture:
    hidden_layers: int = 1
    neurons: int = 60
    activation: str = "sigmoid"
    latent_dim: int = 20

    def __post_init__(self):
        if self.hidden_layers < 0 or self.neurons < 1 or self.latent_dim < 1:
            raise ValueError(f"invalid architecture {self}")
        if self.activation not in neural.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 1000
    patience: int = 50
    validation_fraction: float = 0.2
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    batch_size: int = 32
    beta: float = 0.003
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or not 0 < self.patience < self.max_epochs:
            raise ValueError("need 0 < patience < max_epochs")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation fraction must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class VaeModel:
    encoder: neural.DenseNetwork
    decoder: neural.DenseNetwork
    latent_dim: int
    mode: str = VARIATIONAL
    normalization: NormalizationStats | None = None

    def __post_init__(self):
        if self.mode not in (VARIATIONAL, DETERMINISTIC):
            raise ValueError(f"unknown mode {self.mode!r}")
        width = 2 * self.latent_dim if self.mode == VARIATIONAL else self.latent_dim
        if self.encoder.out_dim != width:
            raise ValueError(f"encoder must emit {width} values in {self.mode} mode")
        if self.decoder.in_dim != self.latent_dim:
            raise ValueError("decoder input width must equal latent_dim")
        if self.decoder.layers[-1].activation != "sigmoid":
            raise ValueError("decoder output layer must be sigmoid")

    @property
    def frame_length(self) -> int:
        return self.encoder.in_dim

    def parameters(self) -> list[np.ndarray]:
        return self.encoder.parameters() + self.decoder.parameters()

    def copy(self) -> "VaeModel":
        return VaeModel(self.encoder.copy(), self.decoder.copy(), self.latent_dim,
                        self.mode, self.normalization)


def build_model(frame_length: int, arch: Architecture, seed: int,
                mode: str = VARIATIONAL,
                normalization: NormalizationStats | None = None) -> VaeModel:
    """Mirror-image encoder/decoder with ``arch.hidden_layers`` hidden layers each."""
    hidden = [arch.neurons] * arch.hidden_layers
    code = 2 * arch.latent_dim if mode == VARIATIONAL else arch.latent_dim
    enc = neural.init_network([frame_length, *hidden, code],
                              [arch.activation] * arch.hidden_layers + ["identity"], seed)
    dec = neural.init_network([arch.latent_dim, *hidden, frame_length],
                              [arch.activation] * arch.hidden_layers + ["sigmoid"], seed + 1)
    return VaeModel(enc, dec, arch.latent_dim, mode, normalization)


def _split_code(model: VaeModel, code: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if model.mode == DETERMINISTIC:
        return code, np.full_like(code, -np.inf)
    L = model.latent_dim
    return code[..., :L], code[..., L:]


def encode(model: VaeModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and log-variance; in deterministic mode log-variance is ``-inf``."""
    code, _ = neural.forward(model.encoder, x)
    return _split_code(model, code)


def reparameterize(mu: np.ndarray, log_var: np.ndarray, eps: np.ndarray) -> np.ndarray:
    mu, log_var, eps = np.broadcast_arrays(np.asarray(mu, float), np.asarray(log_var, float),
                                           np.asarray(eps, float))
    return mu + np.exp(0.5 * log_var) * eps


def decode(model: VaeModel, z: np.ndarray) -> np.ndarray:
    out, _ = neural.forward(model.decoder, z)
    return out


def kl_to_standard_normal(mu: np.ndarray, log_var: np.ndarray) -> np.ndarray | float:
    """``KL(N(mu, diag(exp(log_var))) || N(0, I))``, summed over the last axis."""
    mu = np.asarray(mu, dtype=float)
    log_var = np.asarray(log_var, dtype=float)
    # expm1(lv) - lv keeps precision when log_var is near zero
    kl = 0.5 * np.sum(mu * mu + np.expm1(log_var) - log_var, axis=-1)
    return float(kl) if np.ndim(kl) == 0 else kl


def elbo_loss(x: np.ndarray, x_hat: np.ndarray, mu: np.ndarray, log_var: np.ndarray,
              beta: float = 1.0) -> tuple[float, float, float]:
    """Negative ELBO as ``(total, recon, kl)`` averaged over frames.

    ``recon`` is the squared reconstruction error summed over the frame.
    Pass ``log_var = -inf`` (deterministic codes) to get ``kl = 0``.
    """
    x, x_hat = np.atleast_2d(x), np.atleast_2d(x_hat)
    recon = float(np.mean(np.sum((x - x_hat) ** 2, axis=-1)))
    lv = np.atleast_2d(log_var)
    if np.all(np.isneginf(lv)):
        kl = 0.0
    else:
        kl = float(np.mean(kl_to_standard_normal(np.atleast_2d(mu), lv)))
    return recon + beta * kl, recon, kl


def loss_and_gradients(model: VaeModel, x: np.ndarray, eps: np.ndarray | None,
                       beta: float = 1.0) -> tuple[float, list[np.ndarray]]:
    """Negative ELBO on a batch with fixed noise ``eps`` and its exact gradient.

    Gradients follow :meth:`VaeModel.parameters` order (encoder then decoder).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    code, enc_cache = neural.forward(model.encoder, x)
    variational = model.mode == VARIATIONAL
    if variational:
        L = model.latent_dim
        mu, log_var = code[:, :L], code[:, L:]
        std = np.exp(0.5 * log_var)
        z = mu + std * eps
    else:
        z = code
    x_hat, dec_cache = neural.forward(model.decoder, z)
    diff = x_hat - x
    recon = np.sum(diff * diff) / n
    total = recon
    if variational:
        kl = 0.5 * np.sum(mu * mu + np.expm1(log_var) - log_var) / n
        total = recon + beta * kl
    dec_grads, dz = neural.backward(model.decoder, dec_cache, 2.0 * diff / n)
    if variational:
        dmu = dz + beta * mu / n
        dlv = dz * eps * 0.5 * std + beta * 0.5 * np.expm1(log_var) / n
        dcode = np.hstack([dmu, dlv])
    else:
        dcode = dz
    enc_grads, _ = neural.backward(model.encoder, enc_cache, dcode)
    return float(total), enc_grads + dec_grads


def reconstruct(model: VaeModel, x: np.ndarray) -> np.ndarray:
    """Deterministic reconstruction through the posterior mean (no sampling)."""
    mu, _ = encode(model, x)
    return decode(model, mu)


def evaluate(model: VaeModel, x: np.ndarray, beta: float = 1.0) -> tuple[float, float, float]:
    """``(total, recon, kl)`` on ``x`` with ``z = mu``."""
    mu, log_var = encode(model, x)
    return elbo_loss(x, decode(model, mu), mu, log_var, beta)


class EarlyStopping:
    """Tracks the best validation loss; ``update`` returns True when training should stop."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.wait = 0

    def update(self, epoch: int, loss: float) -> bool:
        if loss < self.best:
            self.best, self.best_epoch, self.wait = loss, epoch, 0
            return False
        self.wait += 1
        return self.wait >= self.patience


@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_recon_mse: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.train_loss)


def train(frames: np.ndarray, arch: Architecture, config: TrainConfig,
          mode: str = VARIATIONAL,
          normalization: NormalizationStats | None = None) -> tuple[VaeModel, TrainingHistory]:
    """Fit on undamaged frames with mini-batch gradient descent and early stopping.

    A ``validation_fraction`` share of the frames drives early stopping; the
    returned model holds the parameters of the best validation epoch. Each
    epoch draws one fresh noise vector per frame.
    """
    x = np.asarray(frames, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise TrainingError("need at least two frames to train")
    tr_idx, va_idx = holdout_indices(x.shape[0], config.validation_fraction, config.seed)
    if tr_idx.size == 0:
        raise TrainingError("empty training set after the validation split")
    x_tr, x_va = x[tr_idx], x[va_idx]

    model = build_model(x.shape[1], arch, config.seed, mode, normalization)
    params = model.parameters()
    opt = neural.make_optimizer(config.optimizer, config.learning_rate, params)
    rng = np.random.default_rng(config.seed + 104729)
    beta = config.beta if mode == VARIATIONAL else 0.0
    history = TrainingHistory()
    stopper = EarlyStopping(config.patience)
    best = model.copy()

    for epoch in range(config.max_epochs):
        order = rng.permutation(x_tr.shape[0])
        eps_all = rng.standard_normal((x_tr.shape[0], arch.latent_dim))
        epoch_loss = 0.0
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, grads = loss_and_gradients(model, x_tr[batch], eps_all[batch], beta)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            neural.optimizer_step(opt, params, grads)
            epoch_loss += loss * batch.size
        val_total, val_recon, _ = evaluate(model, x_va, beta)
        if not np.isfinite(val_total):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        history.train_loss.append(epoch_loss / x_tr.shape[0])
        history.val_loss.append(val_total)
        history.val_recon_mse.append(val_recon / x.shape[1])
        stop = stopper.update(epoch, val_total)
        if stopper.best_epoch == epoch:
            best = model.copy()
        if stop:
            history.stopped_early = True
            break
    history.best_epoch = stopper.best_epoch
    log.debug("trained %s model: %d epochs, best %d (val %.5g)", mode, history.epochs,
              history.best_epoch, stopper.best)
    return best, history


def reconstruction_mse(model: VaeModel, x: np.ndarray) -> float:
    """Mean per-sample squared error of :func:`reconstruct` over all frames."""
    x = np.atleast_2d(x)
    return float(np.mean((x - reconstruct(model, x)) ** 2))


def encoder_means(model: VaeModel, x: np.ndarray) -> np.ndarray:
    mu, _ = encode(model, np.atleast_2d(x))
    return mu


def architecture_from(config: dict) -> Architecture:
    return Architecture(int(config["hidden_layers"]), int(config["neurons"]),
                        str(config["activation"]), int(config["latent_dim"]))


def batch_frames(frames: Sequence[np.ndarray]) -> np.ndarray:
    return np.stack([np.asarray(f, dtype=float) for f in frames])
