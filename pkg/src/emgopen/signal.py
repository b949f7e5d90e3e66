"""Windowing of raw 8-channel recordings and per-window feature maps.

Each analysis window yields an 8x10 feature map: per channel, four
time-domain features (MAV, WL, ZC, SSC) followed by six log-moment
power-spectrum descriptors built from m0/m2/m4 via discrete derivatives.
The map is nearest-upsampled to 80x80 for the convolutional extractor
or flattened to an 80-vector for the LDA path.
"""

from dataclasses import dataclass, field

import numpy as np

N_CHANNELS = 8
N_FEATURES = 10
UPSAMPLED_HW = 80
_EPS = 1e-12


@dataclass(frozen=True)
class WindowConfig:
    window_ms: float = 240.0
    step_ms: float = 80.0
    zc_threshold: float = 0.0
    ssc_threshold: float = 0.0

    def __post_init__(self):
        if self.window_ms <= 0 or self.step_ms <= 0:
            raise ValueError("window_ms and step_ms must be positive")
        if self.step_ms > self.window_ms:
            raise ValueError("step_ms must not exceed window_ms")


@dataclass(frozen=True)
class RawRecording:
    samples: np.ndarray  # (n_samples, 8)
    sampling_rate_hz: float
    motion_id: int
    repetition: int
    is_target: bool = True

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 2 or s.shape[1] != N_CHANNELS:
            raise ValueError(f"samples must be (n, {N_CHANNELS}), got {s.shape}")
        if self.sampling_rate_hz <= 0:
            raise ValueError("sampling_rate_hz must be positive")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class FeatureMap:
    values: np.ndarray  # (8, 10)
    source: tuple = field(default=(-1, -1, -1))  # (motion_id, repetition, window_index)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (N_CHANNELS, N_FEATURES):
            raise ValueError(f"feature map must be {(N_CHANNELS, N_FEATURES)}, got {v.shape}")
        object.__setattr__(self, "values", v)


def window_samples(cfg: WindowConfig, fs: float) -> tuple[int, int]:
    """Window and hop lengths in samples (rounded)."""
    return int(round(cfg.window_ms * fs / 1000.0)), int(round(cfg.step_ms * fs / 1000.0))


def segment(rec: RawRecording, cfg: WindowConfig) -> list[np.ndarray]:
    """Slice a recording into overlapping (W, 8) blocks; no padding."""
    w, h = window_samples(cfg, rec.sampling_rate_hz)
    n = rec.samples.shape[0]
    if n < w:
        raise ValueError(f"recording too short: {n} samples < window of {w}")
    count = (n - w) // h + 1
    return [rec.samples[i * h : i * h + w] for i in range(count)]


def td_features(ch: np.ndarray, cfg: WindowConfig = WindowConfig()) -> np.ndarray:
    """MAV, WL, ZC, SSC of one channel."""
    x = np.asarray(ch, dtype=np.float64)
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("invalid sample: non-finite value in window")
    d = np.diff(x)
    mav = np.mean(np.abs(x))
    wl = np.sum(np.abs(d))
    zc = np.count_nonzero((x[:-1] * x[1:] < 0) & (np.abs(d) > cfg.zc_threshold))
    ssc = np.count_nonzero((x[1:-1] - x[:-2]) * (x[1:-1] - x[2:]) > cfg.ssc_threshold)
    return np.array([mav, wl, float(zc), float(ssc)])


def psd_descriptors(ch: np.ndarray) -> np.ndarray:
    """Six log-moment spectral descriptors from m0/m2/m4 surrogates."""
    x = np.asarray(ch, dtype=np.float64)
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("invalid sample: non-finite value in window")
    d1 = np.diff(x)
    d2 = np.diff(d1)
    m0 = np.sum(x * x)
    m2 = np.sum(d1 * d1)
    m4 = np.sum(d2 * d2)
    return np.array(
        [
            np.log(m0 + _EPS),
            np.log(m2 + _EPS),
            np.log(m4 + _EPS),
            np.log(m0 / (np.sqrt(m2 * m4) + _EPS) + _EPS),
            np.log(m2 / (np.sqrt(m0 * m4) + _EPS) + _EPS),
            np.log(np.sum(np.abs(d1)) / (np.sum(np.abs(d2)) + _EPS) + _EPS),
        ]
    )


def feature_map(window: np.ndarray, cfg: WindowConfig = WindowConfig(), source=(-1, -1, -1)) -> FeatureMap:
    """Per-channel feature rows: 4 time-domain then 6 spectral."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[1] != N_CHANNELS:
        raise ValueError(f"window must be (W, {N_CHANNELS}), got {window.shape}")
    rows = np.empty((N_CHANNELS, N_FEATURES))
    for c in range(N_CHANNELS):
        rows[c, :4] = td_features(window[:, c], cfg)
        rows[c, 4:] = psd_descriptors(window[:, c])
    return FeatureMap(rows, source)


def upsample_nearest(m: FeatureMap) -> np.ndarray:
    """Nearest-neighbor expansion of the 8x10 map to 80x80."""
    return np.repeat(np.repeat(m.values, UPSAMPLED_HW // N_CHANNELS, axis=0),
                     UPSAMPLED_HW // N_FEATURES, axis=1)


def flatten_map(m: FeatureMap) -> np.ndarray:
    """Row-major 80-vector for the LDA path."""
    return m.values.reshape(-1).copy()


def recording_feature_maps(rec: RawRecording, cfg: WindowConfig = WindowConfig()) -> list[FeatureMap]:
    """Feature maps of every analysis window in a recording."""
    return [
        feature_map(block, cfg, source=(rec.motion_id, rec.repetition, i))
        for i, block in enumerate(segment(rec, cfg))
    ]
