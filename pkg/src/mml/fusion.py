"""Fusion layer: standardize each branch, combine with learnable weights, softmax.

For one query the three branch vectors (length N each) are standardized
per branch, then combined as::

    score_n = w1 * z_part[n] + w2 * z_pixel[n] - w3 * z_dist[n] + (b1 + b2 + b3)

The distribution branch enters with a minus sign because it is a distance.
In training mode the standardization uses the statistics of the N class
scores of each query and updates running estimates, like batch
normalization; in evaluation mode the running estimates are used.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericalDomainError

EPSILON_VAR = 1e-8
BRANCH_SIGNS = np.array([1.0, 1.0, -1.0])
CHECKPOINT_VERSION = 1


@dataclass
class FusionWeights:
    w: np.ndarray = field(default_factory=lambda: np.ones(3))
    b: np.ndarray = field(default_factory=lambda: np.zeros(3))
    running_mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    running_var: np.ndarray = field(default_factory=lambda: np.ones(3))
    momentum: float = 0.9

    def __post_init__(self):
        for name in ("w", "b", "running_mean", "running_var"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.shape != (3,):
                raise InvalidArgumentError(f"{name} must have 3 entries, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"{name} must be finite")
            setattr(self, name, arr)
        if np.any(self.running_var < 0):
            raise InvalidArgumentError("running variances must be >= 0")
        if not 0 < self.momentum < 1:
            raise InvalidArgumentError(f"momentum must lie in (0, 1), got {self.momentum}")

    def copy(self):
        return FusionWeights(self.w.copy(), self.b.copy(), self.running_mean.copy(),
                             self.running_var.copy(), self.momentum)

    def to_dict(self):
        return {
            "version": CHECKPOINT_VERSION,
            "w": self.w.tolist(),
            "b": self.b.tolist(),
            "running_mean": self.running_mean.tolist(),
            "running_var": self.running_var.tolist(),
            "momentum": self.momentum,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != CHECKPOINT_VERSION:
            raise InvalidArgumentError(f"unsupported checkpoint version {d.get('version')!r}")
        return cls(d["w"], d["b"], d["running_mean"], d["running_var"], float(d["momentum"]))

    def save(self, path):
        # json writes floats with repr(), which round-trips exactly
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def __eq__(self, other):
        if not isinstance(other, FusionWeights):
            return NotImplemented
        return (np.array_equal(self.w, other.w) and np.array_equal(self.b, other.b)
                and np.array_equal(self.running_mean, other.running_mean)
                and np.array_equal(self.running_var, other.running_var)
                and self.momentum == other.momentum)


@dataclass
class ScoreVector:
    scores: np.ndarray
    probs: np.ndarray

    @property
    def n_way(self):
        return self.scores.shape[-1]


def _as_scores(per_class):
    arr = np.asarray(per_class, dtype=np.float64)
    if arr.ndim < 2 or arr.shape[-1] != 3:
        raise InvalidArgumentError(f"branch scores must have shape (..., N, 3), got {arr.shape}")
    if arr.shape[-2] < 2:
        raise InvalidArgumentError("fusion needs at least two classes")
    return arr


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def standardize(per_class, mean, var):
    return (per_class - mean) / np.sqrt(np.maximum(var, EPSILON_VAR))


def batch_stats(per_class):
    """Per-branch mean and (biased) variance over the class axis, shape (..., 3)."""
    return per_class.mean(axis=-2), per_class.var(axis=-2)


def combine(z, weights):
    """Weighted sum of standardized branch vectors, shape (..., N)."""
    return z @ (weights.w * BRANCH_SIGNS) + weights.b.sum()


def fuse(per_class, weights, train_mode=False):
    """Fuse per-class branch scores of shape (N, 3), or (Q, N, 3) for a stack of queries.

    With ``train_mode`` the running statistics of ``weights`` are updated in
    place, one momentum step per query.
    """
    arr = _as_scores(per_class)
    if train_mode:
        mean, var = batch_stats(arr)
        z = standardize(arr, mean[..., None, :], var[..., None, :])
        for m, v in zip(mean.reshape(-1, 3), var.reshape(-1, 3)):
            weights.running_mean = weights.momentum * weights.running_mean + (1 - weights.momentum) * m
            weights.running_var = weights.momentum * weights.running_var + (1 - weights.momentum) * v
    else:
        z = standardize(arr, weights.running_mean, weights.running_var)
    scores = combine(z, weights)
    return ScoreVector(scores, softmax(scores))


def ce_loss(scores, label):
    """Cross-entropy of one fused score vector against ``label``."""
    s = scores.scores if isinstance(scores, ScoreVector) else np.asarray(scores, dtype=np.float64)
    if not 0 <= label < s.shape[-1]:
        raise InvalidArgumentError(f"label {label} outside [0, {s.shape[-1]})")
    return float(-log_softmax(s)[label])


def _stack_batch(batch):
    per_class = np.stack([np.asarray(item[0], dtype=np.float64) for item in batch])
    labels = np.array([int(item[1]) for item in batch])
    return _as_scores(per_class), labels


def loss_and_grad(batch, weights):
    """Mean training-mode CE loss over ``batch`` and its gradient w.r.t. ``w`` and ``b``.

    ``batch`` is a sequence of ``(per_class (N, 3), label)`` pairs. The
    standardization uses each query's own statistics, so the result does not
    depend on (and does not modify) the running statistics.
    """
    per_class, labels = _stack_batch(batch)
    mean, var = batch_stats(per_class)
    z = standardize(per_class, mean[:, None, :], var[:, None, :])
    scores = combine(z, weights)
    logp = log_softmax(scores)
    rows = np.arange(len(labels))
    loss = -logp[rows, labels].mean()
    delta = np.exp(logp)
    delta[rows, labels] -= 1.0
    delta /= len(labels)
    grad_w = BRANCH_SIGNS * np.einsum("qn,qnb->b", delta, z)
    # the bias shifts every class equally, so its gradient vanishes identically
    grad_b = np.full(3, delta.sum())
    return float(loss), grad_w, grad_b


def train_step(batch, weights, lr):
    """One gradient-descent step on the mean CE loss.

    Returns ``(new_weights, loss)``; ``weights`` itself is left untouched.
    Raises :class:`NumericalDomainError` if the loss or gradient is not finite.
    """
    if not batch:
        raise InvalidArgumentError("train_step needs a non-empty batch")
    if not lr >= 0:
        raise InvalidArgumentError(f"learning rate must be >= 0, got {lr}")
    if not all(np.all(np.isfinite(item[0])) for item in batch):
        raise NumericalDomainError("non-finite branch scores in batch; step aborted")
    with np.errstate(over="ignore", invalid="ignore"):
        loss, grad_w, grad_b = loss_and_grad(batch, weights)
    if not (np.isfinite(loss) and np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
        raise NumericalDomainError("non-finite loss or gradient; step aborted")
    new = weights.copy()
    per_class, _ = _stack_batch(batch)
    fuse(per_class, new, train_mode=True)
    with np.errstate(over="ignore", invalid="ignore"):
        new.w = new.w - lr * grad_w
        new.b = new.b - lr * grad_b
    if not all(np.all(np.isfinite(v)) for v in (new.w, new.b, new.running_var)):
        raise NumericalDomainError("non-finite parameters after update; step aborted")
    return new, loss
