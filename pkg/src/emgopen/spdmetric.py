"""SPD-manifold distances: exact log-Euclidean and its O(n) closed form.

A feature vector a lifts to the SPD matrix a^T a + lambda*I. At
lambda = 1 the log-Euclidean distance between two lifted matrices
collapses to a closed form in |a|^2, |b|^2 and the dot product, which
is what the prototype losses and the detector use. The eigendecomposition
route (lift + matrix_log + led_squared) is kept as the exact oracle.
"""

import enum

import numpy as np

_CROSS_GUARD = 1e-30


class MetricKind(enum.Enum):
    SLED = "sled"
    ED = "ed"
    MD = "md"


def lift(a: np.ndarray, lambda_lift: float = 1.0) -> np.ndarray:
    """Rank-1-plus-identity SPD embedding of a vector."""
    a = np.asarray(a, dtype=np.float64)
    if lambda_lift <= 0:
        raise ValueError("lambda_lift must be positive")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite input vector")
    return np.outer(a, a) + lambda_lift * np.eye(a.size)


def matrix_log(x: np.ndarray) -> np.ndarray:
    """Principal matrix logarithm via symmetric eigendecomposition."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError("matrix_log expects a square matrix")
    if not np.allclose(x, x.T, atol=1e-10):
        raise ValueError("matrix not SPD: not symmetric")
    w, v = np.linalg.eigh(x)
    if w[-1] <= 0 or w[0] <= 1e-12 * w[-1]:
        raise ValueError("matrix not SPD: non-positive eigenvalue")
    return (v * np.log(w)) @ v.T


def led_squared(x: np.ndarray, y: np.ndarray) -> float:
    """Squared log-Euclidean distance Tr((log X - log Y)^2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = matrix_log(x) - matrix_log(y)
    return float(np.sum(d * d))


def sled_squared(a: np.ndarray, b: np.ndarray) -> float:
    """Closed-form squared distance between lift(a, 1) and lift(b, 1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(a @ a)
    nb = float(b @ b)
    ap = np.log1p(na)
    bp = np.log1p(nb)
    denom = na * nb
    if denom < _CROSS_GUARD:
        # analytic limit: the cross term vanishes with |a| or |b|
        cross = 0.0
    else:
        dot = float(a @ b)
        # grouping keeps the expression symmetric in (a, b) at the
        # floating-point level, so d(a, b) == d(b, a) and d(a, a) == 0 exactly
        cross = 2.0 * (ap * bp) * (dot * dot / denom)
    return max(ap * ap + bp * bp - cross, 0.0)


def sled_squared_grad(a: np.ndarray, b: np.ndarray):
    """Value of sled_squared plus its analytic gradients wrt a and b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(a @ a)
    nb = float(b @ b)
    ap = np.log1p(na)
    bp = np.log1p(nb)
    dap = 2.0 * a / (na + 1.0)  # d a' / d a
    dbp = 2.0 * b / (nb + 1.0)
    denom = na * nb
    if denom < _CROSS_GUARD:
        val = max(ap * ap + bp * bp, 0.0)
        return val, 2.0 * ap * dap, 2.0 * bp * dbp
    dot = float(a @ b)
    c = dot * dot / denom
    val = max(ap * ap + bp * bp - 2.0 * (ap * bp) * c, 0.0)
    # d c / d a = 2*dot*b/(na*nb) - 2*dot^2*a/(na^2*nb), symmetrically for b
    dc_da = 2.0 * dot * b / denom - 2.0 * dot * dot * a / (na * denom)
    dc_db = 2.0 * dot * a / denom - 2.0 * dot * dot * b / (nb * denom)
    ga = (2.0 * ap - 2.0 * bp * c) * dap - 2.0 * ap * bp * dc_da
    gb = (2.0 * bp - 2.0 * ap * c) * dbp - 2.0 * ap * bp * dc_db
    return val, ga, gb


def ed_squared(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Euclidean distance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(d @ d)
