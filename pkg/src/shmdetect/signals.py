"""Sensor records, framing, min-max normalization and seeded data splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TypeVar

import numpy as np

from .errors import DataError

T = TypeVar("T")

UNDAMAGED_CASE = 1


@dataclass(frozen=True, eq=False)
class SensorRecord:
    sensor_id: int
    samples: np.ndarray
    sampling_rate_hz: float = 200.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise DataError(f"sensor {self.sensor_id}: samples must be a non-empty 1-D series")
        if not np.all(np.isfinite(samples)):
            raise DataError(f"sensor {self.sensor_id}: samples contain non-finite values")
        if not self.sampling_rate_hz > 0:
            raise DataError(f"sensor {self.sensor_id}: sampling rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True, eq=False)
class Frame:
    values: np.ndarray
    source_sensor: int
    source_case: int
    index: int


@dataclass(frozen=True)
class NormalizationStats:
    minimum: float
    maximum: float

    def __post_init__(self):
        if not (np.isfinite(self.minimum) and np.isfinite(self.maximum)):
            raise DataError("normalization bounds must be finite")
        if not self.maximum > self.minimum:
            raise DataError(
                f"degenerate normalization range: min={self.minimum}, max={self.maximum}")


@dataclass(frozen=True)
class SplitPlan:
    k: int = 10
    holdout_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not 0 < self.holdout_fraction < 1:
            raise ValueError("holdout fraction must lie in (0, 1)")


def load_csv(path: str | Path, sampling_rate_hz: float = 200.0) -> list[SensorRecord]:
    """Read one column per sensor; the header row holds integer sensor ids."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        try:
            ids = [int(h.strip()) for h in header]
        except ValueError:
            raise DataError(f"{path}, row 1: header must list integer sensor ids") from None
        rows = []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(ids):
                raise DataError(
                    f"{path}, row {rownum}: expected {len(ids)} columns, found {len(row)}")
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}, row {rownum}, column {col}: non-numeric cell {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}, row {rownum}, column {col}: non-finite value")
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows after the header")
    data = np.array(rows, dtype=float)
    return [SensorRecord(sid, data[:, j].copy(), sampling_rate_hz) for j, sid in enumerate(ids)]


def save_csv(records: Sequence[SensorRecord], path: str | Path) -> None:
    """Write records in the format :func:`load_csv` reads (17 significant digits)."""
    lengths = {len(r) for r in records}
    if len(lengths) != 1:
        raise DataError("records must have equal length to share a CSV file")
    data = np.column_stack([r.samples for r in records])
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(str(r.sensor_id) for r in records) + "\n")
        for row in data:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def frame_count(d: int, s: int) -> int:
    return d // s


def window(record: SensorRecord, s: int, case: int = UNDAMAGED_CASE) -> list[Frame]:
    """Cut ``record`` into ``floor(d / s)`` contiguous frames, dropping the remainder."""
    if s < 1:
        raise ValueError("frame length must be >= 1")
    n = frame_count(len(record), s)
    blocks = record.samples[: n * s].reshape(n, s)
    return [Frame(blocks[i].copy(), record.sensor_id, case, i) for i in range(n)]


def frames_to_array(frames: Sequence[Frame]) -> np.ndarray:
    if not frames:
        return np.empty((0, 0))
    return np.stack([f.values for f in frames])


def fit_normalization(frames: Sequence[Frame] | np.ndarray) -> NormalizationStats:
    if len(frames) == 0:
        raise DataError("cannot fit normalization on an empty frame set")
    data = frames if isinstance(frames, np.ndarray) else frames_to_array(frames)
    return NormalizationStats(float(data.min()), float(data.max()))


def normalize(values: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    scaled = (np.asarray(values, dtype=float) - stats.minimum) / (stats.maximum - stats.minimum)
    return np.clip(scaled, 0.0, 1.0)


def apply_normalization(frame: Frame, stats: NormalizationStats) -> Frame:
    return Frame(normalize(frame.values, stats), frame.source_sensor, frame.source_case,
                 frame.index)


def holdout_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise DataError("cannot split an empty set")
    if not 0 < fraction < 1:
        raise ValueError("holdout fraction must lie in (0, 1)")
    n_test = min(n, math.ceil(fraction * n - 1e-9))
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def holdout_split(frames: Sequence[T], fraction: float, seed: int) -> tuple[list[T], list[T]]:
    """Seeded split; the test part holds ``ceil(fraction * N)`` items."""
    train, test = holdout_indices(len(frames), fraction, seed)
    return [frames[i] for i in train], [frames[i] for i in test]


def kfold_indices(n: int, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise DataError(f"need at least k={k} items for k-fold, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    pairs = []
    for i, val in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        pairs.append((np.sort(train), np.sort(val)))
    return pairs


def kfold(frames: Sequence[T], k: int, seed: int) -> list[tuple[list[T], list[T]]]:
    return [([frames[i] for i in tr], [frames[i] for i in va])
            for tr, va in kfold_indices(len(frames), k, seed)]


def export_frames(frames: Sequence[Frame], path: str | Path) -> None:
    """Debug dump: one line per frame, ``sensor_id,case_id,v1,...,vs``."""
    with Path(path).open("w") as fh:
        for f in frames:
            fh.write(",".join([str(f.source_sensor), str(f.source_case)]
                              + [format(v, ".17g") for v in f.values]) + "\n")
