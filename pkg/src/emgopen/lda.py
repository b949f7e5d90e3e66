"""Fisher LDA extractor: projection, class-mean prototypes, Mahalanobis."""

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg

_SW_SHRINK = 1e-3
_COV_SHRINK = 1e-6
_MAGIC = b"LDA1"


@dataclass
class LdaModel:
    projection: np.ndarray  # (p, k-1)
    class_means: np.ndarray  # (k, k-1), the prototypes
    class_covariances: np.ndarray  # (k, k-1, k-1), shrunk, SPD
    shrinkage: float = _SW_SHRINK

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[0]

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.projection


def lda_fit(features: np.ndarray, labels: np.ndarray, shrinkage: float = _SW_SHRINK) -> LdaModel:
    """Fisher projection to k-1 dims plus per-class means/covariances."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    k = classes.size
    p = x.shape[1]
    if k < 2:
        raise ValueError("need at least 2 classes")
    if x.shape[0] < 2 * k:
        raise ValueError("need at least 2 samples per class on average")
    if not np.array_equal(classes, np.arange(k)):
        raise ValueError("labels must be 0..k-1")

    mean_all = x.mean(axis=0)
    sw = np.zeros((p, p))
    sb = np.zeros((p, p))
    means = np.empty((k, p))
    for c in range(k):
        xc = x[y == c]
        if xc.shape[0] == 0:
            raise ValueError(f"class without samples: {c}")
        means[c] = xc.mean(axis=0)
        dc = xc - means[c]
        sw += dc.T @ dc
        db = means[c] - mean_all
        sb += xc.shape[0] * np.outer(db, db)

    sw_reg = sw + shrinkage * (np.trace(sw) / p) * np.eye(p)
    try:
        evals, evecs = scipy.linalg.eigh(sb, sw_reg)
    except scipy.linalg.LinAlgError as e:
        raise ValueError(f"degenerate scatter after shrinkage: {e}") from e
    proj = evecs[:, np.argsort(evals)[::-1][: k - 1]]

    z = x @ proj
    d = k - 1
    cmeans = np.empty((k, d))
    ccovs = np.empty((k, d, d))
    for c in range(k):
        zc = z[y == c]
        cmeans[c] = zc.mean(axis=0)
        dz = zc - cmeans[c]
        cov = dz.T @ dz / max(zc.shape[0] - 1, 1)
        cov += (_COV_SHRINK * np.trace(cov) / d + _COV_SHRINK) * np.eye(d)
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise ValueError(f"class {c} covariance singular after shrinkage") from e
        ccovs[c] = cov
    return LdaModel(projection=proj, class_means=cmeans, class_covariances=ccovs, shrinkage=shrinkage)


def lda_prototypes(m: LdaModel) -> np.ndarray:
    """Class means in the projected space."""
    return m.class_means.copy()


def mahalanobis_squared(m: LdaModel, x: np.ndarray, class_idx: int) -> float:
    x = np.asarray(x, dtype=np.float64)
    d = x - m.class_means[class_idx]
    try:
        sol = np.linalg.solve(m.class_covariances[class_idx], d)
    except np.linalg.LinAlgError as e:
        raise ValueError(f"class {class_idx} covariance singular") from e
    return float(max(d @ sol, 0.0))


# -------------------------------------------------------------- serialization

def save_lda(m: LdaModel, path: str) -> None:
    p, d = m.projection.shape
    k = m.class_means.shape[0]
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<3i", p, k, d))
        f.write(struct.pack("<d", m.shrinkage))
        for arr in (m.projection, m.class_means, m.class_covariances):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_lda(path: str) -> LdaModel:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError(f"{path}: not an LDA model file")
        p, k, d = struct.unpack("<3i", f.read(12))
        (shrinkage,) = struct.unpack("<d", f.read(8))
        read = lambda *shape: np.frombuffer(
            f.read(8 * int(np.prod(shape))), dtype="<f8"
        ).reshape(shape).astype(np.float64)
        proj = read(p, d)
        means = read(k, d)
        covs = read(k, d, d)
    return LdaModel(projection=proj, class_means=means, class_covariances=covs, shrinkage=shrinkage)
