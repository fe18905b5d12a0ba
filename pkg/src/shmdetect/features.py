"""Damage-sensitive features computed from a frame and its reconstruction."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import vae
from .signals import Frame, frames_to_array

log = logging.getLogger(__name__)

ORSR_FLOOR_DB = -120.0


@dataclass(frozen=True)
class FeatureVector:
    mse: float
    orsr_db: float
    sensor: int
    case: int
    index: int

    def as_array(self) -> np.ndarray:
        return np.array([self.mse, self.orsr_db])


def mse_feature(x: np.ndarray, x_hat: np.ndarray) -> np.ndarray | float:
    """Mean squared reconstruction error along the last axis."""
    x, x_hat = np.asarray(x, float), np.asarray(x_hat, float)
    if x.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x_hat.shape}")
    if x.shape[-1] < 1:
        raise ValueError("empty frame")
    out = np.mean((x - x_hat) ** 2, axis=-1)
    return float(out) if out.ndim == 0 else out


def orsr_feature(x: np.ndarray, x_hat: np.ndarray,
                 floor_db: float = ORSR_FLOOR_DB) -> np.ndarray | float:
    """Original-to-reconstructed energy ratio in dB along the last axis.

    Frames with zero energy get ``floor_db`` (with a warning) instead of -inf.
    """
    x, x_hat = np.asarray(x, float), np.asarray(x_hat, float)
    if x.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x_hat.shape}")
    e_x = np.sum(x * x, axis=-1)
    e_hat = np.sum(x_hat * x_hat, axis=-1)
    if np.any(e_hat <= 0):
        raise ValueError("reconstruction has zero energy")
    dead = e_x <= 0
    if np.any(dead):
        warnings.warn(f"{int(np.sum(dead))} zero-energy frame(s); ORSR floored at {floor_db} dB",
                      RuntimeWarning, stacklevel=2)
    with np.errstate(divide="ignore"):
        out = np.where(dead, floor_db, 10.0 * np.log10(np.where(dead, 1.0, e_x) / e_hat))
    return float(out) if out.ndim == 0 else out


def feature_matrix(model: vae.VaeModel, x: np.ndarray) -> np.ndarray:
    """Raw ``(N, 2)`` array of ``[mse, orsr_db]`` for normalized frames ``x``."""
    x = np.atleast_2d(np.asarray(x, float))
    x_hat = vae.reconstruct(model, x)
    return np.column_stack([mse_feature(x, x_hat), orsr_feature(x, x_hat)])


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature standardization fitted on undamaged training features."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        features = np.atleast_2d(features)
        if features.shape[0] < 2:
            raise ValueError("need at least two feature rows to standardize")
        std = features.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(features.mean(axis=0), std)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(features) - self.mean) / self.std


def extract(frames: Sequence[Frame], model: vae.VaeModel) -> list[FeatureVector]:
    """One raw feature vector per (already normalized) frame, order preserved."""
    if not frames:
        return []
    raw = feature_matrix(model, frames_to_array(frames))
    return [FeatureVector(float(m), float(o), f.source_sensor, f.source_case, f.index)
            for (m, o), f in zip(raw, frames)]


def write_feature_csv(features: Sequence[FeatureVector], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sensor", "case", "index", "mse", "orsr_db"])
        for f in features:
            w.writerow([f.sensor, f.case, f.index, repr(f.mse), repr(f.orsr_db)])


def read_feature_csv(path: str | Path) -> list[FeatureVector]:
    with Path(path).open(newline="") as fh:
        return [FeatureVector(float(r["mse"]), float(r["orsr_db"]), int(r["sensor"]),
                              int(r["case"]), int(r["index"]))
                for r in csv.DictReader(fh)]
