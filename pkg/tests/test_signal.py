import numpy as np
import pytest

from emgopen.signal import (
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


def make_rec(n_samples, fs=1000.0, seed=0):
    rng = np.random.default_rng(seed)
    return RawRecording(rng.standard_normal((n_samples, 8)), fs, motion_id=0, repetition=0)


# ---------------------------------------------------------------- segmenting

def test_segment_counts():
    assert len(segment(make_rec(2000), WindowConfig())) == 23
    assert len(segment(make_rec(240), WindowConfig())) == 1


def test_segment_too_short():
    with pytest.raises(ValueError, match="too short"):
        segment(make_rec(239), WindowConfig())


def test_segment_offsets_and_shapes():
    rec = make_rec(1000)
    blocks = segment(rec, WindowConfig())
    for i, b in enumerate(blocks):
        assert b.shape == (240, 8)
        assert np.array_equal(b, rec.samples[i * 80 : i * 80 + 240])


def test_window_count_formula_random_sizes():
    rng = np.random.default_rng(7)
    for _ in range(200):
        w = int(rng.integers(3, 200))
        h = int(rng.integers(1, w + 1))
        n = int(rng.integers(w, 2000))
        cfg = WindowConfig(window_ms=w, step_ms=h)  # 1000 Hz: ms == samples
        blocks = segment(make_rec(n), cfg)
        assert len(blocks) == (n - w) // h + 1


# ------------------------------------------------------- time-domain features

def td_oracle(x, zc_thr=0.0, ssc_thr=0.0):
    """Definitional scalar-loop recomputation."""
    n = len(x)
    mav = sum(abs(v) for v in x) / n
    wl = sum(abs(x[i + 1] - x[i]) for i in range(n - 1))
    zc = sum(
        1
        for i in range(n - 1)
        if x[i] * x[i + 1] < 0 and abs(x[i + 1] - x[i]) > zc_thr
    )
    ssc = sum(
        1
        for i in range(1, n - 1)
        if (x[i] - x[i - 1]) * (x[i] - x[i + 1]) > ssc_thr
    )
    return np.array([mav, wl, zc, ssc], dtype=float)


def test_td_hand_example():
    out = td_features(np.array([1.0, -1.0, 1.0, -1.0]))
    assert np.allclose(out, [1.0, 6.0, 3.0, 2.0])


def test_td_zero_vector():
    assert np.allclose(td_features(np.zeros(10)), 0.0)


def test_td_matches_oracle():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        x = rng.standard_normal(int(rng.integers(3, 60)))
        got = td_features(x)
        want = td_oracle(list(x))
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_td_rejects_nonfinite():
    with pytest.raises(ValueError, match="invalid sample"):
        td_features(np.array([1.0, np.nan, 2.0]))


# --------------------------------------------------------- spectral features

def psd_oracle(x):
    eps = 1e-12
    n = len(x)
    d1 = [x[i + 1] - x[i] for i in range(n - 1)]
    d2 = [d1[i + 1] - d1[i] for i in range(n - 2)]
    m0 = sum(v * v for v in x)
    m2 = sum(v * v for v in d1)
    m4 = sum(v * v for v in d2)
    import math

    return np.array(
        [
            math.log(m0 + eps),
            math.log(m2 + eps),
            math.log(m4 + eps),
            math.log(m0 / (math.sqrt(m2 * m4) + eps) + eps),
            math.log(m2 / (math.sqrt(m0 * m4) + eps) + eps),
            math.log(sum(abs(v) for v in d1) / (sum(abs(v) for v in d2) + eps) + eps),
        ]
    )


def test_psd_zero_vector():
    out = psd_descriptors(np.zeros(8))
    assert np.allclose(out[:3], np.log(1e-12))
    assert np.all(np.isfinite(out))


def test_psd_constant_vector():
    c = 3.0
    out = psd_descriptors(np.full(4, c))
    assert out[0] == pytest.approx(np.log(4 * c * c + 1e-12))
    assert np.all(np.isfinite(out))


def test_psd_matches_oracle():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        x = rng.standard_normal(int(rng.integers(3, 60)))
        assert np.allclose(psd_descriptors(x), psd_oracle(list(x)), rtol=1e-12)


def test_psd_rejects_nonfinite():
    with pytest.raises(ValueError, match="invalid sample"):
        psd_descriptors(np.array([np.inf, 0.0, 1.0]))


# -------------------------------------------------------------- feature maps

def test_feature_map_zero_window():
    m = feature_map(np.zeros((240, 8)))
    assert np.allclose(m.values[:, :4], 0.0)
    assert np.allclose(m.values[:, 4:6], np.log(1e-12))


def test_feature_map_scaled_channel():
    rng = np.random.default_rng(5)
    win = rng.standard_normal((240, 8))
    win[:, 3] = 2.5 * win[:, 1]
    m = feature_map(win)
    # MAV and WL scale linearly with amplitude
    assert m.values[3, 0] == pytest.approx(2.5 * m.values[1, 0])
    assert m.values[3, 1] == pytest.approx(2.5 * m.values[1, 1])


def test_feature_map_deterministic():
    rng = np.random.default_rng(6)
    win = rng.standard_normal((240, 8))
    a = feature_map(win)
    b = feature_map(win.copy())
    assert np.array_equal(a.values, b.values)


def test_feature_map_finite_random():
    rng = np.random.default_rng(8)
    for _ in range(20):
        m = feature_map(rng.standard_normal((240, 8)) * rng.uniform(0.01, 100))
        assert np.all(np.isfinite(m.values))


# ----------------------------------------------------------------- upsampling

def test_upsample_single_nonzero():
    vals = np.zeros((8, 10))
    vals[0, 0] = 7.0
    up = upsample_nearest(FeatureMap(vals))
    assert up.shape == (80, 80)
    assert np.count_nonzero(up) == 80
    assert np.all(up[:10, :8] == 7.0)


def test_upsample_constant():
    up = upsample_nearest(FeatureMap(np.full((8, 10), 2.5)))
    assert np.all(up == 2.5)


def test_upsample_index_rule_and_multiset():
    rng = np.random.default_rng(9)
    vals = rng.standard_normal((8, 10))
    up = upsample_nearest(FeatureMap(vals))
    for r in range(80):
        for c in range(0, 80, 7):
            assert up[r, c] == vals[r * 8 // 80, c * 10 // 80]
    assert np.array_equal(np.sort(up.ravel()), np.sort(np.repeat(vals.ravel(), 80)))


# ------------------------------------------------------------------- flatten

def test_flatten_row_major():
    vals = np.arange(80, dtype=float).reshape(8, 10)
    vals[0, 0] = 5.0
    flat = flatten_map(FeatureMap(vals))
    assert flat[0] == 5.0
    assert flat[10] == vals[1, 0]
    assert np.array_equal(flat.reshape(8, 10), vals)
