"""Versioned, human-readable persistence of trained per-sensor detectors.

The container is JSON. Floats are written with Python's shortest round-trip
representation, so every weight, support vector and offset reloads bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import features, neural, ocsvm, vae
from .config import RunConfig
from .detector import SensorDetector
from .errors import DataError
from .signals import NormalizationStats

FORMAT = "shmdetect-bundle"
VERSION = 1


@dataclass(eq=False)
class ModelBundle:
    config: RunConfig
    detectors: dict[int, SensorDetector] = field(default_factory=dict)
    frame_counts: dict[int, int] = field(default_factory=dict)  # undamaged frames per sensor

    @property
    def sensors(self) -> list[int]:
        return sorted(self.detectors)


def _arr(a: np.ndarray) -> Any:
    return np.asarray(a, dtype=float).tolist()


def _network_to_dict(net: neural.DenseNetwork) -> dict:
    return {"seed": net.seed,
            "layers": [{"activation": l.activation, "weight": _arr(l.weight),
                        "bias": _arr(l.bias)} for l in net.layers]}


def _network_from_dict(d: dict) -> neural.DenseNetwork:
    layers = []
    for l in d["layers"]:
        w = np.array(l["weight"], dtype=float)
        b = np.array(l["bias"], dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise DataError("malformed layer in bundle")
        layers.append(neural.DenseLayer(w, b, l["activation"]))
    return neural.DenseNetwork(layers, d.get("seed"))


def _detector_to_dict(det: SensorDetector) -> dict:
    k = det.svm.kernel
    return {
        "sensor_id": det.sensor_id,
        "normalization": {"minimum": det.normalization.minimum,
                          "maximum": det.normalization.maximum},
        "vae": {"mode": det.model.mode, "latent_dim": det.model.latent_dim,
                "encoder": _network_to_dict(det.model.encoder),
                "decoder": _network_to_dict(det.model.decoder)},
        "scaler": {"mean": _arr(det.scaler.mean), "std": _arr(det.scaler.std)},
        "ocsvm": {"support_vectors": _arr(det.svm.support_vectors),
                  "alphas": _arr(det.svm.alphas), "rho": det.svm.rho,
                  "nu": det.svm.nu, "training_size": det.svm.training_size,
                  "support_indices": [int(i) for i in det.svm.support_indices],
                  "kernel": {"kind": k.kind, "gamma": k.gamma, "order": k.order,
                             "coef0": k.coef0, "scale": k.scale}},
        "holdout_indices": [int(i) for i in det.holdout_indices],
    }


def _detector_from_dict(d: dict) -> SensorDetector:
    norm = NormalizationStats(float(d["normalization"]["minimum"]),
                              float(d["normalization"]["maximum"]))
    v = d["vae"]
    model = vae.VaeModel(_network_from_dict(v["encoder"]), _network_from_dict(v["decoder"]),
                         int(v["latent_dim"]), v["mode"], norm)
    scaler = features.FeatureScaler(np.array(d["scaler"]["mean"], dtype=float),
                                    np.array(d["scaler"]["std"], dtype=float))
    s = d["ocsvm"]
    kernel = ocsvm.KernelSpec(**s["kernel"])
    svm = ocsvm.OcSvmModel(np.array(s["support_vectors"], dtype=float).reshape(-1, scaler.mean.size),
                           np.array(s["alphas"], dtype=float), float(s["rho"]), kernel,
                           float(s["nu"]), int(s["training_size"]),
                           np.array(s["support_indices"], dtype=int))
    return SensorDetector(int(d["sensor_id"]), norm, model, scaler, svm,
                          np.array(d["holdout_indices"], dtype=int))


def to_json(bundle: ModelBundle) -> str:
    doc = {"format": FORMAT, "version": VERSION,
           "config": bundle.config.to_dict(),
           "frame_counts": {str(k): v for k, v in sorted(bundle.frame_counts.items())},
           "sensors": [_detector_to_dict(bundle.detectors[s]) for s in bundle.sensors]}
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def from_json(text: str) -> ModelBundle:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"bundle is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise DataError("not a model bundle (missing format tag)")
    if doc.get("version") != VERSION:
        raise DataError(f"unsupported bundle version {doc.get('version')!r}; "
                        f"this build reads version {VERSION}")
    try:
        config = RunConfig.from_dict(doc["config"])
        detectors = {}
        for entry in doc["sensors"]:
            det = _detector_from_dict(entry)
            detectors[det.sensor_id] = det
        counts = {int(k): int(v) for k, v in doc.get("frame_counts", {}).items()}
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed bundle: {exc}") from exc
    return ModelBundle(config, detectors, counts)


def save(bundle: ModelBundle, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(bundle))
    return path


def load(path: str | Path) -> ModelBundle:
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise DataError(f"bundle not found: {path}") from exc
    return from_json(text)
