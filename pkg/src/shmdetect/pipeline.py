"""End-to-end orchestration: synthetic data, per-sensor training, scoring and FDD."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Callable

import numpy as np

from . import bundle as bundle_io
from . import fdd, features, model_selection, ocsvm, scoring, synth, vae
from .config import RunConfig
from .detector import SensorDetector
from .errors import DataError, ShmError
from .signals import (UNDAMAGED_CASE, SensorRecord, fit_normalization, frames_to_array,
                      holdout_indices, load_csv, normalize, save_csv, window)

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
POD_TEXT, POD_CSV = "pod_report.txt", "pod_report.csv"
KL_TEXT, KL_CSV = "kl_table.txt", "kl_table.csv"
FDD_TEXT, FDD_CSV = "fdd_table.txt", "fdd_table.csv"


def case_file(case: int) -> str:
    return f"case_{case}.csv"


# ---------------------------------------------------------------------------
# data


def structure(config: RunConfig) -> synth.StructuralModel:
    return synth.calibrated_model(config.story_masses, config.first_mode_hz,
                                  damping_ratio=config.damping_ratio)


def scenarios(config: RunConfig) -> list[synth.DamageScenario]:
    return [synth.DamageScenario(i, row) for i, row in zip(config.scenario_ids, config.ladder)]


def excitation(config: RunConfig, case: int) -> synth.ExcitationSpec:
    return synth.ExcitationSpec(duration_s=config.durations_s[case - 1],
                                sampling_rate_hz=config.sampling_rate_hz,
                                band_low_hz=config.band_low_hz, band_high_hz=config.band_high_hz,
                                seed=1000 * config.data_seed + case,
                                amplitude=config.force_amplitude)


def generate(config: RunConfig, out_dir: str | Path) -> dict:
    """Simulate every ladder scenario into ``case_<id>.csv`` plus a JSON manifest."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out}: {exc}") from exc
    model = structure(config)
    manifest = {"sampling_rate_hz": config.sampling_rate_hz,
                "story_stiffnesses": list(model.story_stiffnesses),
                "story_masses": list(model.story_masses), "scenarios": []}
    for sc in scenarios(config):
        records = synth.simulate(model, sc, excitation(config, sc.scenario_id),
                                 force_story=config.force_story, snr_db=config.snr_db)
        try:
            save_csv(records, out / case_file(sc.scenario_id))
        except OSError as exc:
            raise DataError(f"cannot write {out / case_file(sc.scenario_id)}: {exc}") from exc
        modes = synth.analytic_modes(model.damaged(sc))
        manifest["scenarios"].append({
            "case": sc.scenario_id, "file": case_file(sc.scenario_id),
            "stiffness_multipliers": list(sc.stiffness_multipliers),
            "severity": sc.severity, "duration_s": config.durations_s[sc.scenario_id - 1],
            "analytic_frequencies_hz": [f for f, _ in modes]})
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest


def read_manifest(data_dir: str | Path) -> dict | None:
    path = Path(data_dir) / MANIFEST
    return json.loads(path.read_text()) if path.is_file() else None


def load_dataset(data_dir: str | Path, sampling_rate_hz: float = 200.0
                 ) -> dict[int, list[SensorRecord]]:
    """All ``case_<id>.csv`` files of a directory, keyed by case id."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"data directory not found: {data_dir}")
    manifest = read_manifest(data_dir)
    if manifest is not None:
        sampling_rate_hz = float(manifest.get("sampling_rate_hz", sampling_rate_hz))
    out = {}
    for path in sorted(data_dir.glob("case_*.csv")):
        try:
            case = int(path.stem.split("_", 1)[1])
        except ValueError:
            continue
        out[case] = load_csv(path, sampling_rate_hz)
    if UNDAMAGED_CASE not in out:
        raise DataError(f"{data_dir}: undamaged scenario {case_file(UNDAMAGED_CASE)} is missing")
    return dict(sorted(out.items()))


def sensor_frames(records: list[SensorRecord], s: int, case: int) -> dict[int, np.ndarray]:
    return {r.sensor_id: frames_to_array(window(r, s, case)) for r in records}


# ---------------------------------------------------------------------------
# training


def _train_config(config: RunConfig, **changes) -> vae.TrainConfig:
    base = dict(max_epochs=config.max_epochs, patience=config.patience,
                validation_fraction=config.validation_fraction,
                learning_rate=config.learning_rate, optimizer=config.optimizer,
                batch_size=config.batch_size, beta=config.beta, seed=config.seed)
    base.update(changes)
    return vae.TrainConfig(**base)


def _kernel(config: RunConfig) -> ocsvm.KernelSpec:
    if config.kernel == "poly":
        return ocsvm.KernelSpec("poly", order=config.poly_order)
    return ocsvm.KernelSpec(config.kernel)


def train_sensor(sensor_id: int, raw_frames: np.ndarray, config: RunConfig,
                 history_dir: str | Path | None = None) -> SensorDetector:
    """Fit the normalization -> VAE -> scaler -> OC-SVM chain on undamaged frames.

    The held-out share of frames is set aside first and never seen in training;
    its indices travel with the detector so scoring can reuse them.
    """
    raw_frames = np.atleast_2d(raw_frames)
    train_idx, test_idx = holdout_indices(len(raw_frames), config.holdout_fraction, config.seed)
    stats = fit_normalization(raw_frames[train_idx])
    x = normalize(raw_frames[train_idx], stats)
    arch = vae.Architecture(config.hidden_layers, config.neurons, config.activation,
                            config.latent_dim)
    tc = _train_config(config)
    if not config.fast:
        vae_cfg = _select_vae(sensor_id, x, config, history_dir)
        arch, tc = model_selection.train_config_for(vae_cfg, config.seed, tc)
    model, hist = vae.train(x, arch, tc, mode=config.vae_mode, normalization=stats)
    log.info("sensor %d: VAE trained for %d epochs (best %d)", sensor_id, hist.epochs,
             hist.best_epoch)
    raw_feats = features.feature_matrix(model, x)
    nu, kernel = config.nu, _kernel(config)
    if not config.fast:
        svm_cfg = _select_ocsvm(sensor_id, raw_feats, config, history_dir)
        nu, kernel = svm_cfg["nu"], model_selection._kernel_for(svm_cfg)
    scaler = features.FeatureScaler.fit(raw_feats)
    svm = ocsvm.fit(scaler.transform(raw_feats), nu, kernel)
    return SensorDetector(sensor_id, stats, model, scaler, svm, test_idx)


def _history_path(history_dir, sensor_id: int, stage: str) -> Path | None:
    if history_dir is None:
        return None
    Path(history_dir).mkdir(parents=True, exist_ok=True)
    return Path(history_dir) / f"sensor_{sensor_id}_{stage}_trials.jsonl"


def _select_vae(sensor_id: int, x: np.ndarray, config: RunConfig, history_dir) -> dict:
    base = _train_config(config)

    def objective(cfg):
        return model_selection.cv_folds_vae(cfg, x, config.folds, config.seed, base,
                                            config.vae_mode)

    result = model_selection.search(model_selection.VAE_SPACE, objective, config.vae_trials,
                                    config.strategy, config.seed, minimize=True,
                                    history_path=_history_path(history_dir, sensor_id, "vae"))
    log.info("sensor %d: best VAE config %s (cv mse %.5g)", sensor_id, result.best.config,
             result.best.objective)
    return result.best.config


def _select_ocsvm(sensor_id: int, feats: np.ndarray, config: RunConfig, history_dir) -> dict:
    def objective(cfg):
        return model_selection.cv_folds_ocsvm(cfg, feats, config.folds, config.seed)

    result = model_selection.search(model_selection.OCSVM_SPACE, objective,
                                    config.ocsvm_trials, config.strategy, config.seed,
                                    minimize=False,
                                    history_path=_history_path(history_dir, sensor_id, "ocsvm"))
    return result.best.config


def train(config: RunConfig, data_dir: str | Path,
          history_dir: str | Path | None = None) -> bundle_io.ModelBundle:
    data = load_dataset(data_dir, config.sampling_rate_hz)
    frames = sensor_frames(data[UNDAMAGED_CASE], config.frame_length, UNDAMAGED_CASE)
    out = bundle_io.ModelBundle(config)
    for sensor_id, raw in sorted(frames.items()):
        out.detectors[sensor_id] = _with_context(
            sensor_id, lambda: train_sensor(sensor_id, raw, config, history_dir))
        out.frame_counts[sensor_id] = len(raw)
    return out


def _with_context(sensor_id: int, fn: Callable):
    try:
        return fn()
    except ShmError as exc:
        exc.args = (f"sensor {sensor_id}: {exc}",) + exc.args[1:]
        raise


# ---------------------------------------------------------------------------
# scoring


def score(model: bundle_io.ModelBundle, data_dir: str | Path,
          out_dir: str | Path | None = None) -> tuple[scoring.PodReport, scoring.KlTable]:
    """PoD and KL tables for every case; the undamaged column uses held-out frames only."""
    config = model.config
    data = load_dataset(data_dir, config.sampling_rate_hz)
    per_case = {c: sensor_frames(recs, config.frame_length, c) for c, recs in data.items()}
    for c, frames in per_case.items():
        if set(frames) != set(model.detectors):
            raise DataError(f"case {c}: sensors {sorted(frames)} do not match the bundle's "
                            f"{model.sensors}")
    reference = per_case[UNDAMAGED_CASE]
    held_out = {}
    for s, det in model.detectors.items():
        expected = model.frame_counts.get(s)
        if expected is not None and expected != len(reference[s]):
            raise DataError(f"sensor {s}: undamaged record has {len(reference[s])} frames, "
                            f"the bundle was trained on {expected}")
        held_out[s] = reference[s][det.holdout_indices]
    case_frames = dict(per_case)
    case_frames[UNDAMAGED_CASE] = held_out
    report, kl = scoring.build_report(model.detectors, case_frames, UNDAMAGED_CASE,
                                      reference_frames=reference, kl_mode=config.kl_mode)
    if out_dir is not None:
        write_scores(report, kl, out_dir)
    return report, kl


def write_scores(report: scoring.PodReport, kl: scoring.KlTable, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / POD_TEXT).write_text(report.to_text())
    (out / POD_CSV).write_text(report.to_csv())
    (out / KL_TEXT).write_text(kl.to_text())
    (out / KL_CSV).write_text(kl.to_csv())


# ---------------------------------------------------------------------------
# frequency domain decomposition


def run_fdd(config: RunConfig, data_dir: str | Path,
            out_dir: str | Path | None = None) -> fdd.FrequencyTable:
    data = load_dataset(data_dir, config.sampling_rate_hz)
    freqs: dict[int, list[float]] = {}
    spectra = {}
    for case, records in data.items():
        est = fdd.identify_modes(records, config.nfft, config.overlap,
                                 (config.fdd_band_low_hz, config.fdd_band_high_hz),
                                 config.min_prominence_db)
        freqs[case] = est.frequencies
        spectra[case] = est
    table = fdd.FrequencyTable(sorted(freqs), freqs, UNDAMAGED_CASE, config.n_modes,
                               config.max_shift or None)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / FDD_TEXT).write_text(table.to_text())
        table.write_csv(out / FDD_CSV)
        for case, est in spectra.items():
            fdd.write_spectrum_csv(est, out / f"spectrum_case_{case}.csv")
    return table


def assemble_report(out_dir: str | Path) -> str:
    """Concatenate whichever tables exist in ``out_dir`` into ``report.txt``."""
    out = Path(out_dir)
    sections = [("Probability of damage (%)", POD_TEXT),
                ("KL divergence from the undamaged case", KL_TEXT),
                ("Identified modal frequencies in Hz (change in %)", FDD_TEXT)]
    parts = []
    for title, name in sections:
        path = out / name
        if path.is_file():
            parts.append(f"{title}\n\n{path.read_text()}")
    if not parts:
        raise DataError(f"{out}: no score or FDD tables to report; run score or fdd first")
    text = "\n".join(parts)
    (out / "report.txt").write_text(text)
    return text
