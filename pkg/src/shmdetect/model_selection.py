"""Cross-validated hyperparameter search for the VAE and the one-class SVM.

Two strategies share one driver: uniform random sampling, and a Gaussian-process
surrogate that proposes the candidate with the highest expected improvement
after a random warm start.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import linalg, stats

from . import ocsvm, vae
from .errors import NumericalError, ShmError
from .features import FeatureScaler
from .signals import kfold_indices

log = logging.getLogger(__name__)

WARM_START = 10
CANDIDATES = 2000


@dataclass(frozen=True)
class IntParam:
    name: str
    low: int
    high: int

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.low, self.high + 1))

    def contains(self, v: Any) -> bool:
        return isinstance(v, (int, np.integer)) and self.low <= v <= self.high

    def encode(self, v: Any) -> list[float]:
        return [(v - self.low) / (self.high - self.low)]


@dataclass(frozen=True)
class ChoiceParam:
    name: str
    options: tuple

    def sample(self, rng: np.random.Generator) -> Any:
        return self.options[int(rng.integers(len(self.options)))]

    def contains(self, v: Any) -> bool:
        return v in self.options

    def encode(self, v: Any) -> list[float]:
        return [1.0 if v == o else 0.0 for o in self.options]


@dataclass(frozen=True)
class LogFloatParam:
    name: str
    low: float
    high: float

    def sample(self, rng: np.random.Generator) -> float:
        return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))

    def contains(self, v: Any) -> bool:
        return isinstance(v, (int, float)) and self.low <= v <= self.high

    def encode(self, v: Any) -> list[float]:
        return [math.log(v / self.low) / math.log(self.high / self.low)]


@dataclass(frozen=True)
class SearchSpace:
    params: tuple

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def sample(self, rng: np.random.Generator) -> dict[str, Any]:
        return {p.name: p.sample(rng) for p in self.params}

    def contains(self, config: dict[str, Any]) -> bool:
        return set(config) == set(self.names) and all(p.contains(config[p.name])
                                                      for p in self.params)

    def encode(self, config: dict[str, Any]) -> np.ndarray:
        """Point in the unit cube (categoricals one-hot) for the surrogate."""
        out: list[float] = []
        for p in self.params:
            out.extend(p.encode(config[p.name]))
        return np.array(out)


VAE_SPACE = SearchSpace((
    IntParam("hidden_layers", 1, 3),
    IntParam("neurons", 4, 128),
    ChoiceParam("activation", ("relu", "leaky_relu", "sigmoid")),
    IntParam("latent_dim", 2, 40),
    ChoiceParam("optimizer", ("adam", "sgd")),
    ChoiceParam("learning_rate", (1e-4, 1e-3, 1e-2)),
))

OCSVM_SPACE = SearchSpace((
    LogFloatParam("nu", ocsvm.NU_MIN, 1.0),
    ChoiceParam("kernel", ("rbf", "poly", "linear")),
    IntParam("poly_order", 2, 4),
))


@dataclass
class TrialRecord:
    trial: int
    config: dict[str, Any]
    objective: float
    fold_values: list[float]
    wall_time_s: float
    seed: int
    failed: bool = False
    error: str = ""
    timestamp: float = field(default_factory=time.time)

    def to_json(self) -> str:
        d = asdict(self)
        d["objective"] = _json_float(self.objective)
        d["fold_values"] = [_json_float(v) for v in self.fold_values]
        return json.dumps(d, sort_keys=True)


def _json_float(v: float) -> float | str:
    return v if math.isfinite(v) else repr(v)


@dataclass
class SearchResult:
    best: TrialRecord
    history: list[TrialRecord]
    minimize: bool

    def running_best(self) -> list[float]:
        pick = min if self.minimize else max
        out, cur = [], None
        for r in self.history:
            if not r.failed:
                cur = r.objective if cur is None else pick(cur, r.objective)
            out.append(math.nan if cur is None else cur)
        return out


# ---------------------------------------------------------------------------
# objectives


def train_config_for(config: dict[str, Any], seed: int, base: vae.TrainConfig | None = None
                     ) -> tuple[vae.Architecture, vae.TrainConfig]:
    base = base or vae.TrainConfig()
    arch = vae.Architecture(hidden_layers=config["hidden_layers"], neurons=config["neurons"],
                            activation=config["activation"], latent_dim=config["latent_dim"])
    tc = vae.TrainConfig(max_epochs=base.max_epochs, patience=base.patience,
                         validation_fraction=base.validation_fraction,
                         learning_rate=float(config["learning_rate"]),
                         optimizer=config["optimizer"], batch_size=base.batch_size,
                         beta=base.beta, seed=seed)
    return arch, tc


def cv_folds_vae(config: dict[str, Any], frames: np.ndarray, k: int = 10, seed: int = 0,
                 base: vae.TrainConfig | None = None, mode: str = vae.VARIATIONAL) -> list[float]:
    """Validation reconstruction MSE of one VAE per fold (normalized frames)."""
    frames = np.atleast_2d(frames)
    out = []
    for fold, (tr, va) in enumerate(kfold_indices(len(frames), k, seed)):
        arch, tc = train_config_for(config, seed + fold, base)
        model, _ = vae.train(frames[tr], arch, tc, mode=mode)
        out.append(vae.reconstruction_mse(model, frames[va]))
    return out


def cv_objective_vae(config: dict[str, Any], frames: np.ndarray, k: int = 10, seed: int = 0,
                     base: vae.TrainConfig | None = None, mode: str = vae.VARIATIONAL) -> float:
    """Mean validation reconstruction error over ``k`` folds; +inf if training fails."""
    try:
        return float(np.mean(cv_folds_vae(config, frames, k, seed, base, mode)))
    except NumericalError:
        return math.inf


def _kernel_for(config: dict[str, Any]) -> ocsvm.KernelSpec:
    if config["kernel"] == "poly":
        return ocsvm.KernelSpec("poly", order=int(config.get("poly_order", 3)))
    return ocsvm.KernelSpec(config["kernel"])


def cv_folds_ocsvm(config: dict[str, Any], features: np.ndarray, k: int = 10,
                   seed: int = 0) -> list[float]:
    """Validation inlier fraction per fold; scaling is refit on each training fold."""
    features = np.atleast_2d(features)
    out = []
    for tr, va in kfold_indices(len(features), k, seed):
        scaler = FeatureScaler.fit(features[tr])
        model = ocsvm.fit(scaler.transform(features[tr]), config["nu"], _kernel_for(config))
        out.append(float(np.mean(ocsvm.classify(model, scaler.transform(features[va])))))
    return out


def cv_objective_ocsvm(config: dict[str, Any], features: np.ndarray, k: int = 10,
                       seed: int = 0) -> float:
    """Mean validation inlier fraction in [0, 1]; -inf if a fold cannot be fitted."""
    try:
        return float(np.mean(cv_folds_ocsvm(config, features, k, seed)))
    except (NumericalError, ValueError):
        return -math.inf


# ---------------------------------------------------------------------------
# surrogate


def _gp_posterior(X: np.ndarray, y: np.ndarray, Xq: np.ndarray, length: float,
                  noise: float = 1e-6) -> tuple[np.ndarray, np.ndarray, float]:
    def k(a, b):
        d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
        return np.exp(-0.5 * d2 / length ** 2)

    K = k(X, X) + noise * np.eye(len(X))
    c = linalg.cho_factor(K, lower=True)
    alpha = linalg.cho_solve(c, y)
    Ks = k(Xq, X)
    mean = Ks @ alpha
    v = linalg.solve_triangular(c[0], Ks.T, lower=True)
    var = np.maximum(1.0 - np.sum(v * v, axis=0), 1e-12)
    loglik = -0.5 * y @ alpha - np.sum(np.log(np.diag(c[0])))
    return mean, var, float(loglik)


def expected_improvement(mean: np.ndarray, std: np.ndarray, best: float) -> np.ndarray:
    """EI for minimization."""
    z = (best - mean) / std
    return (best - mean) * stats.norm.cdf(z) + std * stats.norm.pdf(z)


def propose(space: SearchSpace, history: Sequence[TrialRecord], minimize: bool,
            rng: np.random.Generator) -> dict[str, Any]:
    done = [r for r in history if not r.failed]
    cands = [space.sample(rng) for _ in range(CANDIDATES)]
    if len(done) < 2:
        return cands[0]
    X = np.stack([space.encode(r.config) for r in done])
    y = np.array([r.objective for r in done], dtype=float)
    if not minimize:
        y = -y
    spread = y.std()
    y = (y - y.mean()) / (spread if spread > 0 else 1.0)
    Xq = np.stack([space.encode(c) for c in cands])
    best = None
    for length in (0.1, 0.2, 0.4, 0.8, 1.6):
        try:
            mean, var, ll = _gp_posterior(X, y, Xq, length)
        except linalg.LinAlgError:
            continue
        if best is None or ll > best[0]:
            best = (ll, mean, var)
    if best is None:
        return cands[0]
    _, mean, var = best
    ei = expected_improvement(mean, np.sqrt(var), float(y.min()))
    return cands[int(np.argmax(ei))]


# ---------------------------------------------------------------------------
# driver


def search(space: SearchSpace, objective: Callable[[dict[str, Any]], float | Sequence[float]],
           trials: int, strategy: str = "random", seed: int = 0, minimize: bool = True,
           history_path: str | Path | None = None) -> SearchResult:
    """Evaluate ``trials`` configurations and return the best one with the full history.

    ``objective`` returns either a scalar or per-fold values (averaged). Any
    package error or non-finite result marks that trial failed.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if strategy not in ("random", "surrogate"):
        raise ValueError(f"unknown strategy {strategy!r}")
    rng = np.random.default_rng(seed)
    history: list[TrialRecord] = []
    sink = Path(history_path).open("w") if history_path is not None else None
    try:
        for t in range(trials):
            if strategy == "surrogate" and t >= WARM_START:
                config = propose(space, history, minimize, rng)
            else:
                config = space.sample(rng)
            assert space.contains(config)
            start = time.perf_counter()
            error = ""
            try:
                value = objective(config)
                folds = [float(v) for v in value] if np.ndim(value) else [float(value)]
                result = float(np.mean(folds))
            except ShmError as exc:
                folds, result, error = [], math.nan, f"{type(exc).__name__}: {exc}"
            failed = not math.isfinite(result)
            record = TrialRecord(t, config, result, folds, time.perf_counter() - start, seed,
                                 failed, error)
            history.append(record)
            log.info("trial %d %s -> %s", t, config, result)
            if sink is not None:
                sink.write(record.to_json() + "\n")
                sink.flush()
    finally:
        if sink is not None:
            sink.close()
    ok = [r for r in history if not r.failed]
    if not ok:
        raise NumericalError(f"all {trials} trials failed")
    pick = min if minimize else max
    best = pick(ok, key=lambda r: r.objective)
    return SearchResult(best, history, minimize)


def read_history(path: str | Path) -> list[TrialRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        d = json.loads(line)
        d["objective"] = float(d["objective"])
        d["fold_values"] = [float(v) for v in d["fold_values"]]
        out.append(TrialRecord(**d))
    return out
