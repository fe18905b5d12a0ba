"""Run configuration: a flat TOML document where every key has a default."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

from .errors import ConfigError
from .neural import ACTIVATIONS
from .ocsvm import KERNELS, NU_MIN

STRATEGIES = ("random", "surrogate")
VAE_MODES = ("variational", "deterministic")

DEFAULT_LADDER = (
    (1.0, 1.0, 1.0, 1.0),
    (0.85, 1.0, 1.0, 1.0),
    (0.8, 1.0, 1.0, 0.8),
    (0.75, 0.75, 0.75, 0.75),
    (0.6, 0.6, 0.7, 0.7),
    (0.8, 0.85, 1.0, 1.0),
    (0.45, 0.45, 0.45, 0.45),
    (0.4, 0.4, 0.35, 0.35),
    (0.3, 0.3, 0.3, 0.3),
)
# Record lengths in seconds per scenario. The undamaged record is the long one:
# with only ~120 training frames the VAE overfits and held-out frames drift
# outside the OC-SVM boundary.
DEFAULT_DURATIONS = (360.0, 120.0, 120.0, 120.0, 120.0, 300.0, 360.0, 360.0, 360.0)


@dataclass(frozen=True)
class RunConfig:
    # framing and splits
    frame_length: int = 128
    seed: int = 0  # splits, initialization and training noise
    data_seed: int = 0  # synthetic excitation and measurement noise
    folds: int = 10
    holdout_fraction: float = 0.2
    # search
    fast: bool = True
    strategy: str = "random"
    vae_trials: int = 100
    ocsvm_trials: int = 50
    # fixed-config VAE
    hidden_layers: int = 1
    neurons: int = 60
    activation: str = "sigmoid"
    latent_dim: int = 20
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta: float = 0.003
    batch_size: int = 32
    max_epochs: int = 1000
    patience: int = 50
    validation_fraction: float = 0.2
    vae_mode: str = "variational"
    kl_mode: str = "gaussian_fit"
    # fixed-config OC-SVM
    kernel: str = "rbf"
    nu: float = NU_MIN
    poly_order: int = 3
    # synthetic data
    story_masses: tuple[float, ...] = (1000.0, 1000.0, 1000.0, 750.0)
    first_mode_hz: float = 10.0
    damping_ratio: float = 0.01
    sampling_rate_hz: float = 200.0
    band_low_hz: float = 5.0
    band_high_hz: float = 50.0
    force_amplitude: float = 100.0
    force_story: int = 4
    snr_db: float = 40.0
    ladder: tuple[tuple[float, ...], ...] = DEFAULT_LADDER
    durations_s: tuple[float, ...] = DEFAULT_DURATIONS
    # frequency domain decomposition
    nfft: int = 1024
    overlap: float = 0.5
    fdd_band_low_hz: float = 1.0
    fdd_band_high_hz: float = 60.0
    min_prominence_db: float = 6.0
    n_modes: int = 2
    max_shift: float = 0.0  # 0 disables the pairing window

    def __post_init__(self):
        try:
            self._validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def _validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigError(msg)

        need(self.frame_length >= 2, "frame_length must be >= 2")
        need(self.folds >= 2, "folds must be >= 2")
        need(0 < self.holdout_fraction < 1, "holdout_fraction must lie in (0, 1)")
        need(0 < self.validation_fraction < 1, "validation_fraction must lie in (0, 1)")
        need(self.strategy in STRATEGIES, f"strategy must be one of {STRATEGIES}")
        need(self.vae_trials >= 1 and self.ocsvm_trials >= 1, "trial budgets must be >= 1")
        need(1 <= self.hidden_layers <= 3, "hidden_layers must lie in [1, 3]")
        need(self.neurons >= 1, "neurons must be >= 1")
        need(self.activation in ACTIVATIONS, f"activation must be one of {ACTIVATIONS}")
        need(self.latent_dim >= 1, "latent_dim must be >= 1")
        need(self.optimizer in ("adam", "sgd"), "optimizer must be adam or sgd")
        need(self.learning_rate > 0, "learning_rate must be positive")
        need(self.beta >= 0, "beta must be non-negative")
        need(self.batch_size >= 1 and self.max_epochs >= 1 and self.patience >= 1,
             "batch_size, max_epochs and patience must be >= 1")
        need(self.vae_mode in VAE_MODES, f"vae_mode must be one of {VAE_MODES}")
        need(self.kl_mode in ("gaussian_fit", "prior"), "kl_mode must be gaussian_fit or prior")
        need(self.kernel in KERNELS, f"kernel must be one of {KERNELS}")
        need(0 < self.nu <= 1, "nu must lie in (0, 1]")
        need(2 <= self.poly_order <= 4, "poly_order must lie in [2, 4]")
        need(len(self.story_masses) >= 1 and all(m > 0 for m in self.story_masses),
             "story_masses must be positive")
        need(self.first_mode_hz > 0, "first_mode_hz must be positive")
        need(0 <= self.damping_ratio <= 0.2, "damping_ratio must lie in [0, 0.2]")
        need(0 < self.band_low_hz < self.band_high_hz < self.sampling_rate_hz / 2,
             "excitation band must satisfy 0 < low < high < fs/2")
        need(1 <= self.force_story <= len(self.story_masses), "force_story out of range")
        need(len(self.ladder) >= 2, "ladder needs the undamaged scenario plus at least one more")
        need(all(len(row) == len(self.story_masses) for row in self.ladder),
             "every ladder row needs one multiplier per story")
        need(all(0 < v <= 1 for row in self.ladder for v in row),
             "ladder multipliers must lie in (0, 1]")
        need(all(v == 1.0 for v in self.ladder[0]), "the first ladder scenario must be undamaged")
        need(len(self.durations_s) == len(self.ladder), "durations_s must match the ladder length")
        need(all(d > 0 for d in self.durations_s), "durations must be positive")
        need(self.nfft >= 2 and self.nfft & (self.nfft - 1) == 0, "nfft must be a power of two")
        need(0 <= self.overlap < 1, "overlap must lie in [0, 1)")
        need(0 <= self.fdd_band_low_hz < self.fdd_band_high_hz, "fdd band must be increasing")
        need(self.n_modes >= 1, "n_modes must be >= 1")
        need(self.max_shift >= 0, "max_shift must be non-negative")

    @property
    def scenario_ids(self) -> list[int]:
        return list(range(1, len(self.ladder) + 1))

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        kwargs = {}
        for name, value in data.items():
            default = known[name].default
            kwargs[name] = _coerce(name, value, default)
        return cls(**kwargs)


def _coerce(name: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name} must be an array")
        try:
            if default and isinstance(default[0], tuple):
                return tuple(tuple(float(v) for v in row) for row in value)
            return tuple(float(v) for v in value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name} must hold numbers") from exc
    return value


def load_config(path: str | Path | None = None, **overrides: Any) -> RunConfig:
    """Read a TOML config (or defaults when ``path`` is None) and apply overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with Path(path).open("rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        nested = [k for k, v in data.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"config must be flat; found table(s): {', '.join(nested)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(data)


def dump_config(config: RunConfig) -> str:
    """Serialize to TOML text that :func:`load_config` reads back identically."""
    lines = []
    for name, value in config.to_dict().items():
        lines.append(f"{name} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return "[" + ", ".join(_toml_value(x) for x in v) + "]"
