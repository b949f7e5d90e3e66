"""Open-set myoelectric pattern recognition with SPD-manifold distances."""

from .backend import backend_name
from .cpn import CpnModel, TrainConfig, cpn_forward, cpn_loss, cpn_train, load_cpn, save_cpn
from .evaluate import EvalReport, ExperimentConfig, auc, confusion, kfold_by_repetition, roc_curve, run_experiment
from .lda import LdaModel, lda_fit, lda_prototypes, load_lda, mahalanobis_squared, save_lda
from .openset import DetectionOutcome, Detector, calibrate_threshold, detect, nearest_prototype
from .signal import (
    FeatureMap,
    RawRecording,
    WindowConfig,
    feature_map,
    flatten_map,
    psd_descriptors,
    segment,
    td_features,
    upsample_nearest,
)
from .spdmetric import MetricKind, ed_squared, led_squared, lift, matrix_log, sled_squared, sled_squared_grad
from .synthdata import SynthConfig, generate, read_dataset, write_dataset

__version__ = "0.1.0"
