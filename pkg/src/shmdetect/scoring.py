"""Probability-of-damage aggregation and latent-space KL diagnostics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .detector import SensorDetector
from .errors import DataError

VAR_FLOOR = 1e-12
KL_MODES = ("gaussian_fit", "prior")


def pod(outlier_count: int, frame_count: int) -> float:
    """Percentage of frames flagged as damaged."""
    if frame_count < 1:
        raise ValueError("frame count must be >= 1")
    if not 0 <= outlier_count <= frame_count:
        raise ValueError("outlier count must lie in [0, frame_count]")
    return 100.0 * outlier_count / frame_count


@dataclass(frozen=True)
class PodSummary:
    mean: float
    std: float
    min: float
    max: float


def pod_avg(pods: Sequence[float]) -> PodSummary:
    """Unweighted mean over sensors with population std, min and max."""
    values = np.asarray(pods, dtype=float)
    if values.size == 0:
        raise ValueError("no PoD values to average")
    return PodSummary(float(values.mean()), float(values.std()), float(values.min()),
                      float(values.max()))


@dataclass(frozen=True)
class PodEntry:
    frame_count: int
    outlier_count: int

    @property
    def pod(self) -> float:
        return pod(self.outlier_count, self.frame_count)


@dataclass
class PodReport:
    sensors: list[int]
    cases: list[int]
    entries: dict[tuple[int, int], PodEntry] = field(default_factory=dict)

    def value(self, sensor: int, case: int) -> float:
        return self.entries[(sensor, case)].pod

    def summary(self, case: int) -> PodSummary:
        return pod_avg([self.value(s, case) for s in self.sensors])

    def matrix(self) -> np.ndarray:
        return np.array([[self.value(s, c) for c in self.cases] for s in self.sensors])

    def to_text(self) -> str:
        head = f"{'Sensor':<10}" + "".join(f"{'Case ' + str(c):>10}" for c in self.cases)
        lines = [head, "-" * len(head)]
        for s in self.sensors:
            lines.append(f"{s:<10}" + "".join(f"{self.value(s, c):>10.2f}" for c in self.cases))
        lines.append("-" * len(head))
        summaries = [self.summary(c) for c in self.cases]
        for label, attr in (("PoD_avg", "mean"), ("std", "std"), ("min", "min"), ("max", "max")):
            lines.append(f"{label:<10}" + "".join(f"{getattr(x, attr):>10.2f}" for x in summaries))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sensor", "case", "frame_count", "outlier_count", "pod_percent"])
        for s in self.sensors:
            for c in self.cases:
                e = self.entries[(s, c)]
                w.writerow([s, c, e.frame_count, e.outlier_count, f"{e.pod:.2f}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PodReport":
        sensors: list[int] = []
        cases: list[int] = []
        entries = {}
        for row in csv.DictReader(io.StringIO(text)):
            s, c = int(row["sensor"]), int(row["case"])
            if s not in sensors:
                sensors.append(s)
            if c not in cases:
                cases.append(c)
            entries[(s, c)] = PodEntry(int(row["frame_count"]), int(row["outlier_count"]))
        return cls(sensors, cases, entries)


@dataclass(frozen=True, eq=False)
class LatentSummary:
    mean: np.ndarray
    var: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.size


def summarize_latents(mu: np.ndarray) -> LatentSummary:
    mu = np.atleast_2d(mu)
    if mu.shape[0] < 2:
        raise DataError("need at least two frames for a latent summary")
    return LatentSummary(mu.mean(axis=0), np.maximum(mu.var(axis=0), VAR_FLOOR))


def latent_summary(detector: SensorDetector, raw_frames: np.ndarray) -> LatentSummary:
    """Diagonal Gaussian fitted to the encoder means of one case's frames."""
    return summarize_latents(detector.latent_means(raw_frames))


def kl_between(a: LatentSummary, b: LatentSummary) -> float:
    """``KL(a || b)`` for diagonal Gaussians."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    ratio = a.var / b.var
    kl = 0.5 * np.sum(-np.log(ratio) + ratio + (a.mean - b.mean) ** 2 / b.var - 1.0)
    return max(float(kl), 0.0)


@dataclass
class KlTable:
    sensors: list[int]
    cases: list[int]
    values: dict[tuple[int, int], float] = field(default_factory=dict)
    mode: str = "gaussian_fit"

    def average(self, case: int) -> float:
        return float(np.mean([self.values[(s, case)] for s in self.sensors]))

    def to_text(self) -> str:
        head = f"{'Sensor':<10}" + "".join(f"{'Case ' + str(c):>10}" for c in self.cases)
        lines = [head, "-" * len(head)]
        for s in self.sensors:
            lines.append(f"{s:<10}" + "".join(f"{self.values[(s, c)]:>10.3f}" for c in self.cases))
        lines.append("-" * len(head))
        lines.append(f"{'KL_avg':<10}" + "".join(f"{self.average(c):>10.3f}" for c in self.cases))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sensor", "case", "kl"])
        for s in self.sensors:
            for c in self.cases:
                w.writerow([s, c, repr(self.values[(s, c)])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, mode: str = "gaussian_fit") -> "KlTable":
        sensors: list[int] = []
        cases: list[int] = []
        values = {}
        for row in csv.DictReader(io.StringIO(text)):
            s, c = int(row["sensor"]), int(row["case"])
            if s not in sensors:
                sensors.append(s)
            if c not in cases:
                cases.append(c)
            values[(s, c)] = float(row["kl"])
        return cls(sensors, cases, values, mode)


def build_report(detectors: Mapping[int, SensorDetector],
                 case_frames: Mapping[int, Mapping[int, np.ndarray]],
                 reference_case: int = 1,
                 reference_frames: Mapping[int, np.ndarray] | None = None,
                 kl_mode: str = "gaussian_fit") -> tuple[PodReport, KlTable]:
    """PoD matrix over (sensor, case) and the KL table of damaged cases.

    ``case_frames[case][sensor]`` holds raw frames to classify; for the
    reference case this should be the held-out frames only. ``reference_frames``
    (default: the reference case's entry) define the undamaged latent
    distribution that damaged cases are compared against.
    """
    if kl_mode not in KL_MODES:
        raise ValueError(f"unknown kl_mode {kl_mode!r}")
    cases = sorted(case_frames)
    sensors = sorted(detectors)
    for c in cases:
        missing = set(case_frames[c]) - set(detectors)
        if missing:
            raise DataError(f"no trained model for sensor(s) {sorted(missing)} (case {c})")
    report = PodReport(sensors, cases)
    for c in cases:
        for s in sensors:
            if s not in case_frames[c]:
                raise DataError(f"case {c} has no frames for sensor {s}")
            frames = case_frames[c][s]
            flags = detectors[s].is_outlier(frames)
            report.entries[(s, c)] = PodEntry(int(flags.size), int(flags.sum()))

    damaged = [c for c in cases if c != reference_case]
    table = KlTable(sensors, damaged, mode=kl_mode)
    ref = reference_frames if reference_frames is not None else case_frames.get(reference_case)
    for s in sensors:
        det = detectors[s]
        if kl_mode == "prior":
            for c in damaged:
                table.values[(s, c)] = det.mean_prior_kl(case_frames[c][s])
            continue
        if ref is None:
            raise DataError("reference frames are required for the KL table")
        base = latent_summary(det, ref[s])
        for c in damaged:
            table.values[(s, c)] = kl_between(latent_summary(det, case_frames[c][s]), base)
    return report, table


def write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text)
