"""Dense kernels shared by the metric branches.

Descriptor sets are stored column-wise: a ``(d, n)`` array holds ``n``
descriptors of dimension ``d``.
"""

import numpy as np

from .errors import InvalidArgumentError, NumericalDomainError

EPSILON_NORM = 1e-12


def _as_matrix(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return a


def normalize_columns(a, axis=-2):
    """Scale every descriptor along ``axis`` to unit length.

    Descriptors whose norm is below ``EPSILON_NORM`` become all-zero, so they
    have cosine 0 against everything.
    """
    a = np.asarray(a, dtype=np.float64)
    norms = np.sqrt(np.sum(a * a, axis=axis, keepdims=True))
    dead = norms < EPSILON_NORM
    return np.where(dead, 0.0, a / np.where(dead, 1.0, norms))


def cosine_matrix(a, b):
    """Pairwise cosine similarity between the columns of ``a`` (d, p) and ``b`` (d, q).

    Returns a (p, q) array with entries clipped to [-1, 1].
    """
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[0] != b.shape[0]:
        raise InvalidArgumentError(
            f"descriptor dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    r = normalize_columns(a, axis=0).T @ normalize_columns(b, axis=0)
    return np.clip(r, -1.0, 1.0)


def row_topk(m, k):
    """Sum of the ``k`` largest entries along the last axis.

    Works on any leading shape. Ties are broken by ascending column index
    (stable sort), so the selected entries and the summation order are
    reproducible bit for bit.
    """
    m = np.asarray(m, dtype=np.float64)
    q = m.shape[-1]
    if not 1 <= k <= q:
        raise InvalidArgumentError(f"k must lie in [1, {q}], got {k}")
    if k == 1:
        return m.max(axis=-1)
    order = np.argsort(-m, axis=-1, kind="stable")[..., :k]
    return np.take_along_axis(m, order, axis=-1).sum(axis=-1)


def row_topk_sum(m, k):
    """Sum over rows of the sum of each row's ``k`` largest entries."""
    m = _as_matrix(m, "m")
    return float(row_topk(m, k).sum())


def mean_vector(descriptors):
    """Arithmetic mean of the columns of a (d, n) descriptor matrix."""
    x = _as_matrix(descriptors, "descriptors")
    if x.shape[1] == 0:
        raise InvalidArgumentError("cannot take the mean of zero descriptors")
    return x.mean(axis=1)


def covariance(descriptors, shrinkage=0.0):
    """Biased (1/n) sample covariance of the columns plus ``shrinkage * I``.

    The result is symmetrized explicitly so downstream Cholesky factorizations
    see an exactly symmetric matrix.
    """
    x = _as_matrix(descriptors, "descriptors")
    d, n = x.shape
    if n == 0:
        raise InvalidArgumentError("cannot take the covariance of zero descriptors")
    if shrinkage < 0 or not np.isfinite(shrinkage):
        raise InvalidArgumentError(f"shrinkage must be a finite value >= 0, got {shrinkage}")
    centered = x - x.mean(axis=1, keepdims=True)
    s = centered @ centered.T / n
    s = 0.5 * (s + s.T)
    s[np.diag_indices(d)] += shrinkage
    return s


def cholesky(sigma):
    """Lower Cholesky factor, raising :class:`NumericalDomainError` if ``sigma`` is not SPD."""
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NumericalDomainError(
            "covariance is not positive definite; increase the shrinkage") from exc


def sqrtm_psd(sigma):
    """Principal square root of a symmetric PSD matrix.

    Negative eigenvalues produced by rounding are clamped to zero.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    try:
        vals, vecs = np.linalg.eigh(0.5 * (sigma + np.swapaxes(sigma, -1, -2)))
    except np.linalg.LinAlgError as exc:
        raise NumericalDomainError("eigendecomposition did not converge") from exc
    root = np.sqrt(np.clip(vals, 0.0, None))
    return (vecs * root[..., None, :]) @ np.swapaxes(vecs, -1, -2)
