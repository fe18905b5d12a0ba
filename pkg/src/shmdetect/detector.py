"""Per-sensor trained chain: normalization -> VAE -> feature scaling -> OC-SVM."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import features, ocsvm, vae
from .signals import NormalizationStats, normalize


@dataclass(eq=False)
class SensorDetector:
    sensor_id: int
    normalization: NormalizationStats
    model: vae.VaeModel
    scaler: features.FeatureScaler
    svm: ocsvm.OcSvmModel
    holdout_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def normalize(self, raw_frames: np.ndarray) -> np.ndarray:
        return normalize(np.atleast_2d(raw_frames), self.normalization)

    def features(self, raw_frames: np.ndarray) -> np.ndarray:
        """Standardized ``[mse, orsr]`` rows for raw (unnormalized) frames."""
        raw = features.feature_matrix(self.model, self.normalize(raw_frames))
        return self.scaler.transform(raw)

    def is_outlier(self, raw_frames: np.ndarray) -> np.ndarray:
        return ~np.asarray(ocsvm.classify(self.svm, self.features(raw_frames)), dtype=bool)

    def latent_means(self, raw_frames: np.ndarray) -> np.ndarray:
        return vae.encoder_means(self.model, self.normalize(raw_frames))

    def mean_prior_kl(self, raw_frames: np.ndarray) -> float:
        mu, log_var = vae.encode(self.model, self.normalize(raw_frames))
        if self.model.mode == vae.DETERMINISTIC:
            return float("nan")
        return float(np.mean(vae.kl_to_standard_normal(mu, log_var)))
