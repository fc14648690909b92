"""Part-level, pixel-level and distribution-level similarity branches.

Each branch compares one query image against one support class (the pooled
descriptors of its ``M`` shots):

* ``part_score``: cosine correlation between channel planes, summing the
  ``xi`` best matches per query channel.
* ``pixel_score``: the image-to-class nearest-neighbour measure over channel
  fibers, summing the ``k`` best matches per query position.
* distribution branch: Gaussians fitted to the pixel descriptors, compared
  with KL divergence or a 2-Wasserstein distance (exact or approximate).

``episode_scores`` evaluates all three branches for every (query, class)
pair of an episode at once and is what the harness uses; the scalar
functions are the reference surface and are tested against it.
"""

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .descriptors import part_view, pixel_view, stack_maps
from .errors import InvalidArgumentError, NumericalDomainError
from .tensor import (cholesky, cosine_matrix, covariance, mean_vector,
                     normalize_columns, row_topk, row_topk_sum, sqrtm_psd)


class DistributionKind(str, enum.Enum):
    KL = "kl"
    WASSERSTEIN_APPROX = "wass"
    WASSERSTEIN_EXACT = "wass-exact"


class KLDirection(str, enum.Enum):
    SUPPORT_QUERY = "support||query"  # F_KL(S || Q), the default
    QUERY_SUPPORT = "query||support"


@dataclass(frozen=True)
class MetricConfig:
    """Hyperparameters of the three branches.

    ``shrinkage`` is added to covariance diagonals. With ``relative_shrinkage``
    it is multiplied by the mean diagonal of the sample covariance first,
    which keeps KL invariant to a global rescaling of the features.
    """

    xi: int = 1
    k: int = 1
    distribution: DistributionKind = DistributionKind.KL
    shrinkage: float = 1e-3
    relative_shrinkage: bool = True
    kl_direction: KLDirection = KLDirection.SUPPORT_QUERY

    def __post_init__(self):
        object.__setattr__(self, "distribution", DistributionKind(self.distribution))
        object.__setattr__(self, "kl_direction", KLDirection(self.kl_direction))
        if int(self.xi) != self.xi or self.xi < 1:
            raise InvalidArgumentError(f"xi must be an integer >= 1, got {self.xi}")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidArgumentError(f"k must be an integer >= 1, got {self.k}")
        if not (self.shrinkage >= 0 and np.isfinite(self.shrinkage)):
            raise InvalidArgumentError(f"shrinkage must be >= 0, got {self.shrinkage}")


class GaussianStats(NamedTuple):
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def dim(self):
        return self.mu.shape[0]


class BranchScores(NamedTuple):
    d_part: float
    d_pixel: float
    d_dist: float


def part_score(query, support, xi=1):
    """Part-level similarity between a query part view (HW, C) and a support part view (HW, M*C)."""
    query = np.asarray(query, dtype=np.float64)
    support = np.asarray(support, dtype=np.float64)
    if query.shape[0] != support.shape[0]:
        raise InvalidArgumentError(
            f"part descriptors differ in length (H*W): {query.shape[0]} vs {support.shape[0]}")
    if xi > support.shape[1]:
        raise InvalidArgumentError(f"xi={xi} exceeds the {support.shape[1]} support parts")
    return row_topk_sum(cosine_matrix(query, support), xi)


def pixel_score(query, support, k=1):
    """Image-to-class similarity between a query pixel view (C, HW) and a support pixel view (C, M*HW)."""
    query = np.asarray(query, dtype=np.float64)
    support = np.asarray(support, dtype=np.float64)
    if query.shape[0] != support.shape[0]:
        raise InvalidArgumentError(
            f"pixel descriptors differ in channels: {query.shape[0]} vs {support.shape[0]}")
    if k > support.shape[1]:
        raise InvalidArgumentError(f"k={k} exceeds the {support.shape[1]} support pixels")
    return row_topk_sum(cosine_matrix(query, support), k)


def fit_gaussian(pixels, shrinkage=0.0):
    """Gaussian moments of a (C, n) pixel descriptor set, with ``shrinkage * I`` added."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2 or pixels.shape[1] < 1:
        raise InvalidArgumentError("fit_gaussian needs at least one descriptor")
    return GaussianStats(mean_vector(pixels), covariance(pixels, shrinkage))


def _effective_shrinkage(sample_cov_diag_mean, cfg):
    if cfg.relative_shrinkage and sample_cov_diag_mean > 0:
        return cfg.shrinkage * sample_cov_diag_mean
    return cfg.shrinkage


def fit_gaussian_cfg(pixels, cfg):
    """``fit_gaussian`` with the shrinkage resolved from a :class:`MetricConfig`."""
    raw = fit_gaussian(pixels, 0.0)
    lam = _effective_shrinkage(np.trace(raw.sigma) / raw.dim, cfg)
    sigma = raw.sigma.copy()
    sigma[np.diag_indices(raw.dim)] += lam
    return GaussianStats(raw.mu, sigma)


def _check_dims(a, b):
    if a.dim != b.dim:
        raise InvalidArgumentError(f"Gaussian dimensions differ: {a.dim} vs {b.dim}")


def kl_divergence(s, q):
    """KL(S || Q) between two Gaussians, using Q's covariance as the reference.

    0.5 * (tr(Sq^-1 Ss) + ln det Sq - ln det Ss + dmu^T Sq^-1 dmu - c)
    """
    _check_dims(s, q)
    lq = cholesky(q.sigma)
    ls = cholesky(s.sigma)
    c = q.dim
    lq_inv = np.linalg.solve(lq, np.eye(c))
    # tr(Sq^-1 Ss) = ||Lq^-1 Ls||_F^2
    trace_term = np.sum((lq_inv @ ls) ** 2)
    logdet_q = 2.0 * np.sum(np.log(np.diag(lq)))
    logdet_s = 2.0 * np.sum(np.log(np.diag(ls)))
    z = lq_inv @ (q.mu - s.mu)
    value = 0.5 * (trace_term + logdet_q - logdet_s + z @ z - c)
    if not np.isfinite(value):
        raise NumericalDomainError("KL divergence is not finite; increase the shrinkage")
    return float(value)


def wasserstein_exact(a, b):
    """Squared 2-Wasserstein distance between Gaussians ``a`` (query) and ``b`` (support)."""
    _check_dims(a, b)
    root_a = sqrtm_psd(a.sigma)
    cross = sqrtm_psd(root_a @ b.sigma @ root_a)
    diff = a.mu - b.mu
    value = diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * np.trace(cross)
    return float(value)


def wasserstein_approx(a, b):
    """Squared mean gap plus squared Frobenius norm of the covariance gap."""
    _check_dims(a, b)
    diff = a.mu - b.mu
    gap = a.sigma - b.sigma
    return float(diff @ diff + np.sum(gap * gap))


def distribution_distance(query, support, cfg):
    """Distribution-level distance between query and support-class Gaussians per ``cfg``."""
    kind = cfg.distribution
    if kind is DistributionKind.KL:
        if cfg.kl_direction is KLDirection.SUPPORT_QUERY:
            return kl_divergence(support, query)
        return kl_divergence(query, support)
    if kind is DistributionKind.WASSERSTEIN_EXACT:
        return wasserstein_exact(query, support)
    return wasserstein_approx(query, support)


def branch_scores(query_map, support_maps, cfg=MetricConfig()):
    """All three branch values for one query image against one support class."""
    query = stack_maps(query_map)
    support = stack_maps(support_maps)
    if query.shape[0] != 1:
        raise InvalidArgumentError("branch_scores takes exactly one query map")
    if query.shape[1:] != support.shape[1:]:
        raise InvalidArgumentError(
            f"query shape {query.shape[1:]} does not match support shape {support.shape[1:]}")
    q_pix = pixel_view(query)
    s_pix = pixel_view(support)
    d_part = part_score(part_view(query), part_view(support), cfg.xi)
    d_pixel = pixel_score(q_pix, s_pix, cfg.k)
    d_dist = distribution_distance(fit_gaussian_cfg(q_pix, cfg), fit_gaussian_cfg(s_pix, cfg), cfg)
    return BranchScores(d_part, d_pixel, d_dist)


# -- batched evaluation --------------------------------------------------------

def _batched_gaussians(pix, cfg):
    """Moments of a stack of (C, n) descriptor sets, shape (B, C, n)."""
    n = pix.shape[-1]
    mu = pix.mean(axis=-1)
    centered = pix - mu[..., None]
    sigma = centered @ np.swapaxes(centered, -1, -2) / n
    sigma = 0.5 * (sigma + np.swapaxes(sigma, -1, -2))
    c = sigma.shape[-1]
    diag_mean = np.trace(sigma, axis1=-2, axis2=-1) / c
    if cfg.relative_shrinkage:
        lam = np.where(diag_mean > 0, cfg.shrinkage * diag_mean, cfg.shrinkage)
    else:
        lam = np.full(diag_mean.shape, cfg.shrinkage)
    sigma = sigma + lam[..., None, None] * np.eye(c)
    return mu, sigma


def _batched_cholesky(sigma):
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NumericalDomainError(
            "covariance is not positive definite; increase the shrinkage") from exc


def _pairwise_kl(mu_s, sig_s, mu_r, sig_r):
    """KL(S || R) for every pair; S indexed on axis 0 of the result or axis 1 as arranged by the caller.

    ``mu_s``/``sig_s`` carry shape (A, C)/(A, C, C), ``mu_r``/``sig_r`` (B, C)/(B, C, C).
    Returns (A, B).
    """
    c = mu_s.shape[-1]
    l_r = _batched_cholesky(sig_r)
    l_s = _batched_cholesky(sig_s)
    l_r_inv = np.linalg.solve(l_r, np.broadcast_to(np.eye(c), l_r.shape))
    prec_r = np.swapaxes(l_r_inv, -1, -2) @ l_r_inv
    trace_term = np.einsum("bij,aji->ab", prec_r, sig_s)
    logdet_r = 2.0 * np.log(np.diagonal(l_r, axis1=-2, axis2=-1)).sum(axis=-1)
    logdet_s = 2.0 * np.log(np.diagonal(l_s, axis1=-2, axis2=-1)).sum(axis=-1)
    diff = mu_r[None, :, :] - mu_s[:, None, :]
    z = np.einsum("bij,abj->abi", l_r_inv, diff)
    maha = np.sum(z * z, axis=-1)
    out = 0.5 * (trace_term + logdet_r[None, :] - logdet_s[:, None] + maha - c)
    if not np.all(np.isfinite(out)):
        raise NumericalDomainError("KL divergence is not finite; increase the shrinkage")
    return out


def _pairwise_distribution(mu_q, sig_q, mu_s, sig_s, cfg):
    """(Q, N) distribution-level distances."""
    kind = cfg.distribution
    if kind is DistributionKind.KL:
        if cfg.kl_direction is KLDirection.SUPPORT_QUERY:
            return _pairwise_kl(mu_s, sig_s, mu_q, sig_q).T
        return _pairwise_kl(mu_q, sig_q, mu_s, sig_s)
    diff = mu_q[:, None, :] - mu_s[None, :, :]
    mean_term = np.sum(diff * diff, axis=-1)
    if kind is DistributionKind.WASSERSTEIN_APPROX:
        gap = sig_q[:, None] - sig_s[None, :]
        return mean_term + np.sum(gap * gap, axis=(-2, -1))
    root_q = sqrtm_psd(sig_q)
    inner = root_q[:, None] @ sig_s[None, :] @ root_q[:, None]
    try:
        eig = np.linalg.eigvalsh(0.5 * (inner + np.swapaxes(inner, -1, -2)))
    except np.linalg.LinAlgError as exc:
        raise NumericalDomainError("eigendecomposition did not converge") from exc
    cross = np.sqrt(np.clip(eig, 0.0, None)).sum(axis=-1)
    tr_q = np.trace(sig_q, axis1=-2, axis2=-1)
    tr_s = np.trace(sig_s, axis1=-2, axis2=-1)
    return mean_term + tr_q[:, None] + tr_s[None, :] - 2.0 * cross


def episode_scores(queries, support, cfg=MetricConfig()):
    """Branch scores for every query against every support class.

    ``queries`` has shape (Q, C, H, W) and ``support`` (N, M, C, H, W).
    Returns a (Q, N, 3) array ordered (part, pixel, dist).
    """
    queries = np.asarray(queries, dtype=np.float64)
    support = np.asarray(support, dtype=np.float64)
    if queries.ndim != 4 or support.ndim != 5 or queries.shape[1:] != support.shape[2:]:
        raise InvalidArgumentError(
            f"incompatible shapes: queries {queries.shape}, support {support.shape}")
    nq, c, h, w = queries.shape
    n, m = support.shape[:2]
    hw = h * w
    if cfg.xi > m * c:
        raise InvalidArgumentError(f"xi={cfg.xi} exceeds the {m * c} support parts")
    if cfg.k > m * hw:
        raise InvalidArgumentError(f"k={cfg.k} exceeds the {m * hw} support pixels")

    q_flat = queries.reshape(nq, c, hw)
    s_flat = support.reshape(n, m, c, hw)

    # part level: descriptors are rows of (C, HW), normalized over HW
    q_part = normalize_columns(q_flat, axis=-1)
    s_part = normalize_columns(s_flat, axis=-1).reshape(n, m * c, hw)
    r_part = (q_part.reshape(nq * c, hw) @ s_part.reshape(n * m * c, hw).T)
    r_part = np.clip(r_part.reshape(nq, c, n, m * c).transpose(0, 2, 1, 3), -1.0, 1.0)
    d_part = row_topk(r_part, cfg.xi).sum(axis=-1)

    # pixel level: descriptors are columns of (C, HW), normalized over C
    q_pix = normalize_columns(q_flat, axis=-2)
    s_pix_raw = s_flat.transpose(0, 2, 1, 3).reshape(n, c, m * hw)
    s_pix = normalize_columns(s_pix_raw, axis=-2)
    r_pixel = q_pix.transpose(0, 2, 1).reshape(nq * hw, c) @ s_pix.transpose(1, 0, 2).reshape(c, n * m * hw)
    r_pixel = np.clip(r_pixel.reshape(nq, hw, n, m * hw).transpose(0, 2, 1, 3), -1.0, 1.0)
    d_pixel = row_topk(r_pixel, cfg.k).sum(axis=-1)

    mu_q, sig_q = _batched_gaussians(q_flat, cfg)
    mu_s, sig_s = _batched_gaussians(s_pix_raw, cfg)
    d_dist = _pairwise_distribution(mu_q, sig_q, mu_s, sig_s, cfg)

    return np.stack([d_part, d_pixel, d_dist], axis=-1)
