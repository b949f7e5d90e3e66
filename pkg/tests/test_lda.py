import numpy as np
import pytest

from emgopen.lda import (
    LdaModel,
    lda_fit,
    lda_prototypes,
    load_lda,
    mahalanobis_squared,
    save_lda,
)


def gaussian_blobs(k=3, p=10, n_per=40, sep=6.0, seed=50):
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((k, p)) * sep
    x = np.concatenate([centers[c] + rng.standard_normal((n_per, p)) for c in range(k)])
    y = np.repeat(np.arange(k), n_per)
    return x, y


def test_fit_shapes():
    x, y = gaussian_blobs(k=4, p=12)
    m = lda_fit(x, y)
    assert m.projection.shape == (12, 3)
    assert m.class_means.shape == (4, 3)
    assert m.class_covariances.shape == (4, 3, 3)


def test_fit_separates_blobs():
    x, y = gaussian_blobs()
    m = lda_fit(x, y)
    z = m.project(x)
    protos = lda_prototypes(m)
    pred = np.array([np.argmin([np.sum((v - p) ** 2) for p in protos]) for v in z])
    assert np.mean(pred == y) >= 0.99


def test_fit_input_validation():
    x, y = gaussian_blobs(k=2, n_per=3)
    with pytest.raises(ValueError, match="0..k-1"):
        lda_fit(x, y + 1)
    with pytest.raises(ValueError, match="at least 2 classes"):
        lda_fit(x, np.zeros(len(y), dtype=int))
    with pytest.raises(ValueError):
        lda_fit(x[:3], y[:3])


def test_projected_means_match_definition():
    x, y = gaussian_blobs(seed=51)
    m = lda_fit(x, y)
    z = m.project(x)
    for c in range(3):
        assert np.allclose(m.class_means[c], z[y == c].mean(axis=0), rtol=1e-10)


def test_mahalanobis_identity_covariance_is_euclidean():
    m = LdaModel(
        projection=np.eye(2),
        class_means=np.array([[0.0, 0.0], [5.0, 0.0]]),
        class_covariances=np.array([np.eye(2), np.eye(2)]),
    )
    v = np.array([3.0, 4.0])
    assert mahalanobis_squared(m, v, 0) == pytest.approx(25.0)
    assert mahalanobis_squared(m, v, 1) == pytest.approx(20.0)


def test_mahalanobis_scales_with_variance():
    cov = np.diag([4.0, 1.0])
    m = LdaModel(
        projection=np.eye(2),
        class_means=np.zeros((2, 2)),
        class_covariances=np.array([cov, np.eye(2)]),
    )
    v = np.array([2.0, 0.0])
    assert mahalanobis_squared(m, v, 0) == pytest.approx(1.0)
    assert mahalanobis_squared(m, v, 1) == pytest.approx(4.0)


def test_mahalanobis_zero_at_mean():
    x, y = gaussian_blobs(seed=52)
    m = lda_fit(x, y)
    assert mahalanobis_squared(m, m.class_means[1], 1) == 0.0


def test_fit_deterministic():
    x, y = gaussian_blobs(seed=53)
    a = lda_fit(x, y)
    b = lda_fit(x.copy(), y.copy())
    assert np.array_equal(a.projection, b.projection)
    assert np.array_equal(a.class_means, b.class_means)
    assert np.array_equal(a.class_covariances, b.class_covariances)


def test_save_load_round_trip(tmp_path):
    x, y = gaussian_blobs(seed=54)
    m = lda_fit(x, y)
    path = str(tmp_path / "model.lda")
    save_lda(m, path)
    back = load_lda(path)
    assert np.array_equal(back.projection, m.projection)
    assert np.array_equal(back.class_means, m.class_means)
    assert np.array_equal(back.class_covariances, m.class_covariances)
    assert back.shrinkage == m.shrinkage


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "bad.lda"
    p.write_bytes(b"XXXX" + b"\x00" * 32)
    with pytest.raises(ValueError, match="not an LDA model"):
        load_lda(str(p))
