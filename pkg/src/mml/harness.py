"""Episodic evaluation, fusion training and xi/k sweeps."""

import dataclasses
import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bank_io import load_bank
from .episodes import (DEFAULT_QUERIES, FeatureBank, Split, SyntheticSpec,
                       generate_synthetic, sample_episode, task_seed)
from .errors import InvalidArgumentError, MMLError, NumericalDomainError
from .fusion import FusionWeights, fuse, train_step
from .metrics import MetricConfig, episode_scores

BRANCHES = ("part", "pixel", "dist")
CI_Z = 1.96


def parse_branches(spec):
    if isinstance(spec, str):
        spec = [s.strip() for s in spec.split(",") if s.strip()]
    out = tuple(b for b in BRANCHES if b in set(spec))
    unknown = set(spec) - set(BRANCHES)
    if unknown:
        raise InvalidArgumentError(f"unknown branches: {sorted(unknown)}")
    if not out:
        raise InvalidArgumentError("branch mask must name at least one branch")
    return out


@dataclass
class RunConfig:
    bank: object = None  # FeatureBank, SyntheticSpec or a path to an MMLF file
    n_way: int = 5
    m_shot: int = 1
    queries_per_class: int = DEFAULT_QUERIES
    tasks: int = 1000
    metric: MetricConfig = field(default_factory=MetricConfig)
    branches: tuple = BRANCHES
    mode: str = "eval"
    seed: int = 0
    output_path: str = None
    split: str = "test"
    lr: float = 0.1
    batch_size: int = 4
    lr_decay_every: int = 0

    def __post_init__(self):
        self.branches = parse_branches(self.branches)
        if self.mode not in ("eval", "train-fusion", "sweep"):
            raise InvalidArgumentError(f"unknown mode {self.mode!r}")
        if self.tasks < 0 or (self.tasks < 1 and self.mode != "train-fusion"):
            raise InvalidArgumentError(f"tasks must be >= 1, got {self.tasks}")
        if self.n_way < 2:
            raise InvalidArgumentError("n_way must be >= 2")
        if self.m_shot < 1 or self.queries_per_class < 1:
            raise InvalidArgumentError("m_shot and queries_per_class must be >= 1")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        Split.parse(self.split)

    def load_bank(self):
        if isinstance(self.bank, FeatureBank):
            return self.bank
        if isinstance(self.bank, SyntheticSpec):
            return generate_synthetic(self.bank)
        if self.bank is None:
            raise InvalidArgumentError("no feature bank configured")
        return load_bank(self.bank)

    def echo(self):
        if isinstance(self.bank, SyntheticSpec):
            source = {"synthetic": dataclasses.asdict(self.bank)}
        elif isinstance(self.bank, FeatureBank):
            source = {"in_memory_classes": len(self.bank)}
        else:
            source = {"path": str(self.bank)}
        return {
            "bank": source,
            "split": Split.parse(self.split).name.lower(),
            "n_way": self.n_way,
            "m_shot": self.m_shot,
            "queries_per_class": self.queries_per_class,
            "tasks": self.tasks,
            "xi": self.metric.xi,
            "k": self.metric.k,
            "distribution": self.metric.distribution.value,
            "shrinkage": self.metric.shrinkage,
            "relative_shrinkage": self.metric.relative_shrinkage,
            "kl_direction": self.metric.kl_direction.value,
            "branches": list(self.branches),
            "mode": self.mode,
            "seed": self.seed,
        }


@dataclass
class RunReport:
    accuracy: float
    ci95: float
    task_accuracies: np.ndarray
    branch_means: np.ndarray
    stream_hash: str
    config: dict
    wall_time: float = 0.0
    scores: np.ndarray = None  # (tasks, Q, N, 3) when requested

    def to_dict(self, timing=True):
        d = {
            "config": self.config,
            "accuracy": self.accuracy,
            "ci95": self.ci95,
            "tasks": int(len(self.task_accuracies)),
            "branch_means": dict(zip(BRANCHES, self.branch_means.tolist())),
            "stream_hash": self.stream_hash,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d

    TSV_COLUMNS = ("xi", "k", "distribution", "branches", "n_way", "m_shot", "tasks",
                   "accuracy", "ci95", "mean_part", "mean_pixel", "mean_dist", "stream_hash")

    def tsv_row(self):
        c = self.config
        values = [c["xi"], c["k"], c["distribution"], ",".join(c["branches"]), c["n_way"],
                  c["m_shot"], len(self.task_accuracies), repr(self.accuracy), repr(self.ci95),
                  *(repr(float(v)) for v in self.branch_means), self.stream_hash]
        return "\t".join(str(v) for v in values)


def ci95(task_accuracies):
    """Half-width of the 95% interval, 1.96 * sample sd / sqrt(tasks)."""
    acc = np.asarray(task_accuracies, dtype=np.float64)
    if acc.size < 2:
        return 0.0
    return float(CI_Z * acc.std(ddof=1) / math.sqrt(acc.size))


def apply_mask(scores, weights, branches):
    """Zero masked-out branch scores and neutralize their fusion parameters."""
    scores = np.array(scores, dtype=np.float64)
    weights = weights.copy()
    for i, name in enumerate(BRANCHES):
        if name not in branches:
            scores[..., i] = 0.0
            weights.w[i] = 0.0
            weights.running_mean[i] = 0.0
            weights.running_var[i] = 1.0
    return scores, weights


def _episode_scores(bank, cfg, index, metric):
    seed = task_seed(cfg.seed, index)
    try:
        ep = sample_episode(bank, cfg.n_way, cfg.m_shot, cfg.queries_per_class, seed)
        return ep, episode_scores(ep.queries, ep.support, metric)
    except MMLError as exc:
        raise type(exc)(f"task {index} (episode seed {seed}): {exc}") from exc


def evaluate(cfg, weights=None, keep_scores=False, bank=None):
    """Mean accuracy and 95% interval of the fused classifier over ``cfg.tasks`` episodes."""
    start = time.perf_counter()
    weights = weights if weights is not None else FusionWeights()
    bank = (bank if bank is not None else cfg.load_bank()).split(cfg.split)
    digest = hashlib.sha256()
    accs = np.empty(cfg.tasks)
    sums = np.zeros(3)
    count = 0
    kept = []
    for i in range(cfg.tasks):
        ep, raw = _episode_scores(bank, cfg, i, cfg.metric)
        digest.update(ep.index_record())
        sums += raw.reshape(-1, 3).sum(axis=0)
        count += raw.shape[0] * raw.shape[1]
        scores, w = apply_mask(raw, weights, cfg.branches)
        probs = fuse(scores, w, train_mode=False).probs
        accs[i] = np.mean(np.argmax(probs, axis=-1) == ep.labels)
        if keep_scores:
            kept.append(raw)
    return RunReport(
        accuracy=float(accs.mean()),
        ci95=ci95(accs),
        task_accuracies=accs,
        branch_means=sums / count,
        stream_hash=digest.hexdigest(),
        config=cfg.echo(),
        wall_time=time.perf_counter() - start,
        scores=np.stack(kept) if keep_scores else None,
    )


def train_fusion(cfg, weights=None, checkpoint_path=None, bank=None):
    """Train the fusion parameters on episodes from the train split.

    Runs ``cfg.tasks`` episodes in batches of ``cfg.batch_size`` (one
    gradient step per batch). The final weights are written to
    ``checkpoint_path`` when given. On a non-finite loss the last finite
    weights are written there before :class:`NumericalDomainError` is raised.
    """
    weights = weights.copy() if weights is not None else FusionWeights()
    bank = (bank if bank is not None else cfg.load_bank()).split(Split.TRAIN)
    lr = cfg.lr
    step = 0
    batch = []
    for i in range(cfg.tasks):
        ep, raw = _episode_scores(bank, cfg, i, cfg.metric)
        scores, _ = apply_mask(raw, weights, cfg.branches)
        batch.extend(zip(scores, ep.labels))
        if len(batch) and ((i + 1) % cfg.batch_size == 0 or i + 1 == cfg.tasks):
            try:
                new, loss = train_step(batch, weights, lr)
                if not math.isfinite(loss):
                    raise NumericalDomainError(f"loss became {loss}")
            except NumericalDomainError as exc:
                if checkpoint_path:
                    weights.save(checkpoint_path)
                raise NumericalDomainError(
                    f"training diverged at step {step} (task {i}); last finite weights kept: {exc}"
                ) from exc
            for j, name in enumerate(BRANCHES):
                if name not in cfg.branches:
                    new.w[j], new.running_mean[j], new.running_var[j] = 0.0, 0.0, 1.0
            weights = new
            batch = []
            step += 1
            if cfg.lr_decay_every and step % cfg.lr_decay_every == 0:
                lr *= 0.5
    if checkpoint_path:
        weights.save(checkpoint_path)
    return weights


def sweep(cfg, xi_values, k_values, weights=None, keep_scores=False):
    """One :func:`evaluate` per (xi, k) cell, all cells on the same episode stream.

    Returns reports in row-major order (xi outer, k inner).
    """
    bank = cfg.load_bank()
    reports = []
    for xi in xi_values:
        for k in k_values:
            metric = dataclasses.replace(cfg.metric, xi=int(xi), k=int(k))
            cell = dataclasses.replace(cfg, metric=metric)
            reports.append(evaluate(cell, weights, keep_scores=keep_scores, bank=bank))
    hashes = {r.stream_hash for r in reports}
    if len(hashes) != 1:
        raise MMLError("sweep cells saw different episode streams")
    return reports
