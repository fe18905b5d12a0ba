"""Frequency Domain Decomposition baseline.

Welch cross-spectral matrices -> per-frequency singular values -> peak picking
on the first singular value spectrum.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal

from .errors import DataError
from .signals import SensorRecord


@dataclass(frozen=True, eq=False)
class CpsdEstimate:
    frequencies: np.ndarray  # (F,)
    matrices: np.ndarray  # (F, n, n) complex, G[f, i, j] = E[X_i(f) conj(X_j(f))]
    nfft: int
    overlap: float
    window: str = "hann"
    n_segments: int = 0


@dataclass(frozen=True, eq=False)
class ModalEstimate:
    frequencies: list[float]
    spectrum_frequencies: np.ndarray
    first_singular: np.ndarray


def _as_channels(records: Sequence[SensorRecord] | np.ndarray,
                 fs: float | None) -> tuple[np.ndarray, float]:
    if isinstance(records, np.ndarray):
        if fs is None:
            raise ValueError("sampling rate required for raw arrays")
        return np.atleast_2d(records).astype(float), float(fs)
    if not records:
        raise DataError("no records given")
    lengths = {len(r) for r in records}
    rates = {r.sampling_rate_hz for r in records}
    if len(lengths) != 1 or len(rates) != 1:
        raise DataError("records must share length and sampling rate")
    return np.stack([r.samples for r in records]), rates.pop()


def welch_cpsd(records: Sequence[SensorRecord] | np.ndarray, nfft: int = 1024,
               overlap: float = 0.5, fs: float | None = None) -> CpsdEstimate:
    """One-sided cross-power spectral density matrices by Welch averaging.

    Hann window, per-segment mean removal, density scaling (units^2/Hz).
    ``records`` may also be a ``(channels, samples)`` array together with ``fs``.
    """
    data, fs = _as_channels(records, fs)
    n_ch, n = data.shape
    if nfft < 2 or nfft & (nfft - 1):
        raise ValueError("nfft must be a power of two")
    if n < nfft:
        raise DataError(f"records ({n} samples) shorter than nfft={nfft}")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must lie in [0, 1)")
    step = nfft - int(round(overlap * nfft))
    starts = np.arange(0, n - nfft + 1, step)
    win = signal.get_window("hann", nfft)
    segs = np.stack([data[:, s:s + nfft] for s in starts], axis=0)  # (S, n_ch, nfft)
    segs = segs - segs.mean(axis=-1, keepdims=True)
    spec = np.fft.rfft(segs * win, axis=-1)  # (S, n_ch, F)
    G = np.einsum("sif,sjf->fij", spec, spec.conj()) / len(starts)
    G /= fs * np.sum(win ** 2)
    G[1:] *= 2.0
    if nfft % 2 == 0:
        G[-1] /= 2.0
    return CpsdEstimate(np.fft.rfftfreq(nfft, 1.0 / fs), G, nfft, overlap, "hann", len(starts))


def svd_spectrum(cpsd: CpsdEstimate) -> np.ndarray:
    """Singular values of every cross-spectral matrix, ``(F, n)``, descending."""
    return np.linalg.svd(cpsd.matrices, compute_uv=False)


def pick_peaks(frequencies: np.ndarray, spectrum: np.ndarray,
               band: tuple[float, float], min_prominence_db: float = 6.0,
               window_hz: float = 5.0) -> list[float]:
    """Prominent local maxima of ``spectrum`` inside ``band``.

    Prominence is measured in dB against the surrounding troughs within
    ``window_hz`` on either side. Each peak is refined by fitting a parabola
    through the log-spectrum at the three bins around it.
    """
    f = np.asarray(frequencies, float)
    lo, hi = band
    sel = np.flatnonzero((f >= lo) & (f <= hi))
    if sel.size < 3:
        raise ValueError(f"band {band} holds fewer than three frequency bins")
    db = 10.0 * np.log10(np.maximum(np.asarray(spectrum, float), 1e-300))
    df = f[1] - f[0]
    wlen = max(3, 2 * int(round(window_hz / df)) + 1)
    local, _ = signal.find_peaks(db[sel], prominence=min_prominence_db, wlen=wlen)
    peaks = []
    for k in sel[local]:
        a, b, c = db[k - 1], db[k], db[k + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
        peaks.append(float(f[k] + shift * df))
    return sorted(peaks)


def identify_modes(records: Sequence[SensorRecord] | np.ndarray, nfft: int = 1024,
                   overlap: float = 0.5, band: tuple[float, float] = (1.0, 60.0),
                   min_prominence_db: float = 6.0, fs: float | None = None) -> ModalEstimate:
    cpsd = welch_cpsd(records, nfft, overlap, fs)
    s1 = svd_spectrum(cpsd)[:, 0]
    return ModalEstimate(pick_peaks(cpsd.frequencies, s1, band, min_prominence_db),
                         cpsd.frequencies, s1)


def frequency_shift_table(undamaged: Sequence[float], damaged: Sequence[float],
                          max_shift: float | None = None) -> list[float | None]:
    """Percent change per undamaged mode; modes are paired in ascending order.

    A mode with no partner (or, when ``max_shift`` is given, a partner further
    than that fraction away) is reported as ``None``.
    """
    out: list[float | None] = []
    for i, fu in enumerate(sorted(undamaged)):
        if fu == 0:
            raise ValueError("undamaged frequency is zero")
        if i >= len(damaged):
            out.append(None)
            continue
        fd = sorted(damaged)[i]
        change = (fd - fu) / fu
        out.append(None if max_shift is not None and abs(change) > max_shift else 100.0 * change)
    return out


@dataclass
class FrequencyTable:
    """Identified frequencies per case and their change from the reference case."""

    cases: list[int]
    frequencies: dict[int, list[float]]
    reference_case: int = 1
    n_modes: int = 2
    max_shift: float | None = None

    def shifts(self, case: int) -> list[float | None]:
        ref = self.frequencies[self.reference_case][: self.n_modes]
        return frequency_shift_table(ref, self.frequencies[case], self.max_shift)

    def to_text(self) -> str:
        head = f"{'Mode':<6}" + "".join(f"{'Case ' + str(c):>18}" for c in self.cases)
        lines = [head, "-" * len(head)]
        for m in range(self.n_modes):
            cells = []
            for c in self.cases:
                fr = self.frequencies[c]
                shift = self.shifts(c)[m] if m < len(self.shifts(c)) else None
                if m < len(fr) and shift is not None:
                    cells.append(f"{fr[m]:.2f} ({shift:.2f})")
                else:
                    cells.append("-")
            lines.append(f"{m + 1:<6}" + "".join(f"{cell:>18}" for cell in cells))
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "mode", "frequency_hz", "shift_percent"])
            for c in self.cases:
                shifts = self.shifts(c)
                for m, fr in enumerate(self.frequencies[c]):
                    s = shifts[m] if m < len(shifts) else None
                    w.writerow([c, m + 1, repr(fr), "" if s is None else repr(s)])

    @classmethod
    def read_csv(cls, path: str | Path, n_modes: int = 2) -> "FrequencyTable":
        freqs: dict[int, list[float]] = {}
        with Path(path).open(newline="") as fh:
            for row in csv.DictReader(fh):
                freqs.setdefault(int(row["case"]), []).append(float(row["frequency_hz"]))
        return cls(sorted(freqs), freqs, min(freqs), n_modes)


def write_spectrum_csv(estimate: ModalEstimate, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frequency_hz", "first_singular_value"])
        for f, s in zip(estimate.spectrum_frequencies, estimate.first_singular):
            w.writerow([repr(float(f)), repr(float(s))])
