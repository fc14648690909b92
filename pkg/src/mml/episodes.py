"""Feature banks, episodic task sampling and synthetic data.

All randomness comes from explicit 64-bit seeds fed to numpy's PCG64
generator. Per-task seeds are derived with :func:`task_seed`, a SplitMix64
mix of the run seed and the task index, so any task of a stream can be
regenerated on its own.
"""

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateClassError, InvalidArgumentError

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
DEFAULT_QUERIES = 15


class Split(enum.IntEnum):
    TRAIN = 0
    VAL = 1
    TEST = 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise InvalidArgumentError(f"unknown split {value!r}") from None
        return cls(int(value))


def splitmix64(x):
    """SplitMix64 finalizer on a Python int, returning an int in [0, 2**64)."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def task_seed(seed, index):
    """Seed of task ``index`` in the stream started by ``seed``."""
    return splitmix64((int(seed) + (int(index) + 1) * GOLDEN_GAMMA) & MASK64)


def make_rng(seed):
    if not 0 <= int(seed) <= MASK64:
        raise InvalidArgumentError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass
class BankClass:
    class_id: int
    split: Split
    maps: np.ndarray  # (n_images, C, H, W), float32

    def __post_init__(self):
        self.split = Split.parse(self.split)
        self.maps = np.asarray(self.maps, dtype=np.float32)


@dataclass
class FeatureBank:
    classes: list
    names: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        shapes = {c.maps.shape[1:] for c in self.classes}
        if len(shapes) > 1:
            raise InvalidArgumentError(f"classes have different map shapes: {sorted(shapes)}")
        seen = {}
        for c in self.classes:
            if c.maps.ndim != 4:
                raise InvalidArgumentError(f"class {c.class_id}: maps must be (n, C, H, W)")
            if c.class_id in seen:
                raise DuplicateClassError(
                    f"class-id {c.class_id} appears twice (splits {seen[c.class_id].name} "
                    f"and {c.split.name})")
            seen[c.class_id] = c.split
            if not np.all(np.isfinite(c.maps)):
                raise InvalidArgumentError(f"class {c.class_id} has non-finite values")

    @property
    def shape(self):
        if not self.classes:
            return None
        return tuple(int(s) for s in self.classes[0].maps.shape[1:])

    def split(self, which):
        which = Split.parse(which)
        return FeatureBank([c for c in self.classes if c.split == which], self.names)

    def __len__(self):
        return len(self.classes)

    def __eq__(self, other):
        if not isinstance(other, FeatureBank) or len(self) != len(other):
            return False
        return all(a.class_id == b.class_id and a.split == b.split
                   and a.maps.shape == b.maps.shape and np.array_equal(a.maps, b.maps)
                   for a, b in zip(self.classes, other.classes))


@dataclass
class Episode:
    support: np.ndarray  # (N, M, C, H, W)
    queries: np.ndarray  # (N * q, C, H, W), grouped by class
    labels: np.ndarray  # (N * q,)
    class_ids: tuple
    support_index: np.ndarray  # (N, M) image indices within each class
    query_index: np.ndarray  # (N, q)

    @property
    def n_way(self):
        return self.support.shape[0]

    @property
    def m_shot(self):
        return self.support.shape[1]

    def index_record(self):
        """The sampled (class, image) indices as a byte string, for stream hashing."""
        return b"".join([
            np.asarray(self.class_ids, dtype="<i8").tobytes(),
            np.asarray(self.support_index, dtype="<i8").tobytes(),
            np.asarray(self.query_index, dtype="<i8").tobytes(),
        ])


def sample_episode(bank, n_way, m_shot, queries_per_class=DEFAULT_QUERIES, rng_seed=0):
    """Sample one N-way M-shot task from ``bank`` (all of its classes are eligible)."""
    if n_way < 1 or m_shot < 1 or queries_per_class < 0:
        raise InvalidArgumentError("n_way and m_shot must be >= 1, queries_per_class >= 0")
    if len(bank.classes) < n_way:
        raise InvalidArgumentError(
            f"bank has {len(bank.classes)} classes, {n_way}-way needs {n_way} "
            f"(short by {n_way - len(bank.classes)})")
    need = m_shot + queries_per_class
    for c in bank.classes:
        if c.maps.shape[0] < need:
            raise InvalidArgumentError(
                f"class {c.class_id} has {c.maps.shape[0]} images, {m_shot}-shot with "
                f"{queries_per_class} queries needs {need} (short by {need - c.maps.shape[0]})")
    rng = make_rng(rng_seed)
    chosen = rng.choice(len(bank.classes), size=n_way, replace=False)
    support, queries, s_idx, q_idx = [], [], [], []
    for ci in chosen:
        maps = bank.classes[ci].maps
        picks = rng.choice(maps.shape[0], size=need, replace=False)
        s_idx.append(picks[:m_shot])
        q_idx.append(picks[m_shot:])
        support.append(maps[picks[:m_shot]])
        queries.append(maps[picks[m_shot:]])
    shape = bank.shape
    return Episode(
        support=np.stack(support).astype(np.float64),
        queries=np.concatenate(queries).astype(np.float64).reshape(-1, *shape),
        labels=np.repeat(np.arange(n_way), queries_per_class),
        class_ids=tuple(int(bank.classes[ci].class_id) for ci in chosen),
        support_index=np.array(s_idx, dtype=np.int64),
        query_index=np.array(q_idx, dtype=np.int64).reshape(n_way, queries_per_class),
    )


def episode_stream(bank, n_way, m_shot, queries_per_class, tasks, seed):
    """Yield ``tasks`` episodes, task ``i`` sampled with ``task_seed(seed, i)``."""
    for i in range(tasks):
        yield sample_episode(bank, n_way, m_shot, queries_per_class, task_seed(seed, i))


def stream_hash(episodes):
    h = hashlib.sha256()
    for ep in episodes:
        h.update(ep.index_record())
    return h.hexdigest()


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic feature bank.

    Each class ``c`` owns a mean tensor ``class_mean_scale * G_c`` with
    ``G_c`` standard normal of shape (C, H, W); an image is that tensor plus
    ``noise_scale`` times standard normal noise.

    With ``part_signal`` two further class properties are added:

    * a bank of channel planes ``class_mean_scale * P_c`` that every image
      carries in a fresh random channel order. The multiset of part
      descriptors identifies the class while the channel fibers (pixel
      descriptors) are scrambled by the permutation, so the part branch sees
      signal the pixel branch does not.
    * a per-class permutation of a fixed channel energy profile that scales
      the noise, giving every class its own covariance.

    ``identical_classes`` draws one model for all classes (a chance-level
    control). ``relu`` clips every value at zero, mimicking backbone
    features taken after a ReLU; all cosine similarities are then >= 0.
    ``split_counts`` assigns the first classes to train, then val, then
    test; by default every class is a test class.
    """

    num_classes: int = 20
    per_class: int = 20
    shape: tuple = (16, 5, 5)
    class_mean_scale: float = 1.0
    noise_scale: float = 1.0
    part_signal: bool = False
    seed: int = 0
    identical_classes: bool = False
    relu: bool = False
    split_counts: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if len(self.shape) != 3 or min(self.shape) < 1:
            raise InvalidArgumentError(f"shape must be (C, H, W) with entries >= 1, got {self.shape}")
        if self.num_classes < 1:
            raise InvalidArgumentError("num_classes must be >= 1")
        if self.per_class < 2:
            raise InvalidArgumentError("per_class must be >= 2")
        if not (self.class_mean_scale > 0 and self.noise_scale > 0):
            raise InvalidArgumentError("class_mean_scale and noise_scale must be > 0")
        if self.split_counts is not None:
            counts = tuple(int(n) for n in self.split_counts)
            if len(counts) != 3 or min(counts) < 0 or sum(counts) != self.num_classes:
                raise InvalidArgumentError(
                    f"split_counts must be three counts summing to {self.num_classes}, got {counts}")
            object.__setattr__(self, "split_counts", counts)

    def splits(self):
        counts = self.split_counts or (0, 0, self.num_classes)
        return [Split.TRAIN] * counts[0] + [Split.VAL] * counts[1] + [Split.TEST] * counts[2]


def generate_synthetic(spec):
    rng = make_rng(spec.seed)
    c, h, w = spec.shape
    energy = np.linspace(0.5, 1.5, c)

    def draw_class_model():
        mean = spec.class_mean_scale * rng.standard_normal((c, h, w))
        if not spec.part_signal:
            return mean, None, np.ones(c)
        parts = spec.class_mean_scale * rng.standard_normal((c, h, w))
        return mean, parts, rng.permutation(energy)

    shared = draw_class_model() if spec.identical_classes else None
    classes = []
    for class_id, split in enumerate(spec.splits()):
        mean, parts, scales = shared or draw_class_model()
        maps = np.empty((spec.per_class, c, h, w))
        for i in range(spec.per_class):
            x = mean + spec.noise_scale * scales[:, None, None] * rng.standard_normal((c, h, w))
            if parts is not None:
                x = x + parts[rng.permutation(c)]
            maps[i] = np.maximum(x, 0.0) if spec.relu else x
        classes.append(BankClass(class_id, split, maps.astype(np.float32)))
    return FeatureBank(classes)
