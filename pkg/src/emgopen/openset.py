"""Nearest-prototype classification and TPR-anchored novelty rejection."""

import math
from dataclasses import dataclass

import numpy as np

from . import signal
from .cpn import CpnModel, cpn_forward
from .lda import LdaModel, mahalanobis_squared
from .spdmetric import MetricKind, sled_squared


def prototype_distance(f: np.ndarray, proto: np.ndarray, metric: MetricKind,
                       lda_model: LdaModel | None = None, class_idx: int | None = None) -> float:
    """Distance D (not squared) between a feature and one prototype."""
    if metric == MetricKind.SLED:
        return math.sqrt(sled_squared(f, proto))
    if metric == MetricKind.ED:
        return float(np.linalg.norm(np.asarray(f) - np.asarray(proto)))
    if lda_model is None or class_idx is None:
        raise ValueError("MD requires an LDA model with class covariances")
    return math.sqrt(mahalanobis_squared(lda_model, f, class_idx))


def nearest_prototype(f: np.ndarray, prototypes: np.ndarray, metric: MetricKind,
                      lda_model: LdaModel | None = None) -> tuple[int, float]:
    """Argmin-distance prototype; ties broken toward the smallest index."""
    prototypes = np.asarray(prototypes, dtype=np.float64)
    if prototypes.ndim != 2 or prototypes.shape[0] == 0:
        raise ValueError("empty prototype set")
    dists = np.array([
        prototype_distance(f, prototypes[i], metric, lda_model, i)
        for i in range(prototypes.shape[0])
    ])
    label = int(np.argmin(dists))
    return label, float(dists[label])


def calibrate_threshold(target_distances, tpr_goal: float = 0.9) -> float:
    """Smallest order statistic covering at least tpr_goal of the distances."""
    d = np.sort(np.asarray(target_distances, dtype=np.float64))
    n = d.size
    if n < 10:
        raise ValueError(f"insufficient calibration data: {n} < 10")
    if not 0.0 < tpr_goal < 1.0:
        raise ValueError("tpr_goal must lie in (0, 1)")
    return float(d[math.ceil(tpr_goal * n) - 1])


@dataclass(frozen=True)
class DetectionOutcome:
    is_novel: bool
    label: int  # nearest target label either way
    distance: float


@dataclass(frozen=True)
class Detector:
    extractor: object  # CpnModel or LdaModel
    metric: MetricKind
    prototypes: np.ndarray
    threshold: float

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if self.metric == MetricKind.MD and not isinstance(self.extractor, LdaModel):
            raise ValueError("MD requires an LDA extractor")

    def extract(self, m: signal.FeatureMap) -> np.ndarray:
        if isinstance(self.extractor, CpnModel):
            return cpn_forward(self.extractor, signal.upsample_nearest(m))
        return self.extractor.project(signal.flatten_map(m))


def detect(det: Detector, m: signal.FeatureMap) -> DetectionOutcome:
    """Classify one window's feature map, rejecting beyond the threshold."""
    f = det.extract(m)
    lda = det.extractor if isinstance(det.extractor, LdaModel) else None
    label, dist = nearest_prototype(f, det.prototypes, det.metric, lda)
    return DetectionOutcome(is_novel=dist > det.threshold, label=label, distance=dist)
