import numpy as np
import pytest

from mml.episodes import (BankClass, FeatureBank, Split, SyntheticSpec, generate_synthetic,
                          sample_episode, splitmix64, stream_hash, task_seed, episode_stream)
from mml.errors import DuplicateClassError, InvalidArgumentError
from mml.metrics import pixel_score
from mml.descriptors import pixel_view


def tiny_bank(n_classes, n_images, shape=(2, 2, 2), split=Split.TEST):
    classes = []
    for cid in range(n_classes):
        maps = np.arange(n_images * np.prod(shape), dtype=np.float32).reshape(n_images, *shape)
        classes.append(BankClass(cid, split, maps + 1000 * cid))
    return FeatureBank(classes)


def test_splitmix64_reference_values():
    # first outputs of the SplitMix64 generator seeded with 0
    assert splitmix64(0x9E3779B97F4A7C15) == 0xE220A8397B1DCDAF
    assert splitmix64((2 * 0x9E3779B97F4A7C15) & (2 ** 64 - 1)) == 0x6E789E6AA1B965F4


def test_task_seeds_distinct_and_stable():
    seeds = [task_seed(42, i) for i in range(1000)]
    assert len(set(seeds)) == 1000
    assert seeds == [task_seed(42, i) for i in range(1000)]
    assert all(0 <= s < 2 ** 64 for s in seeds)


def test_forced_selection():
    bank = tiny_bank(5, 2)
    ep = sample_episode(bank, 5, 1, 1, rng_seed=3)
    assert sorted(ep.class_ids) == [0, 1, 2, 3, 4]
    for j in range(5):
        assert sorted([ep.support_index[j, 0], ep.query_index[j, 0]]) == [0, 1]
    assert ep.support.shape == (5, 1, 2, 2, 2)
    assert ep.queries.shape == (5, 2, 2, 2)
    assert ep.labels.tolist() == [0, 1, 2, 3, 4]


def test_same_seed_same_episode():
    bank = tiny_bank(10, 8)
    a, b = sample_episode(bank, 5, 2, 3, 99), sample_episode(bank, 5, 2, 3, 99)
    assert a.index_record() == b.index_record()
    np.testing.assert_array_equal(a.support, b.support)
    assert sample_episode(bank, 5, 2, 3, 100).index_record() != a.index_record()


def test_episode_invariants():
    bank = tiny_bank(10, 8)
    for seed in range(50):
        ep = sample_episode(bank, 4, 3, 4, seed)
        assert len(set(ep.class_ids)) == 4
        assert set(ep.labels.tolist()) == set(range(4))
        for j in range(4):
            used = list(ep.support_index[j]) + list(ep.query_index[j])
            assert len(set(used)) == len(used)
        for q, label in zip(ep.queries, ep.labels):
            # query maps are never also support maps (values encode class and image)
            assert not any(np.array_equal(q, s) for s in ep.support.reshape(-1, 2, 2, 2))
            assert int(q.flat[0]) // 1000 == ep.class_ids[label]


def test_uniform_class_frequencies():
    bank = tiny_bank(20, 3, shape=(1, 1, 1))
    episodes = 10_000
    counts = np.zeros(20)
    for i in range(episodes):
        ep = sample_episode(bank, 5, 1, 1, task_seed(7, i))
        counts[list(ep.class_ids)] += 1
    p = 5 / 20
    sigma = np.sqrt(episodes * p * (1 - p))
    assert np.all(np.abs(counts - episodes * p) <= 3 * sigma)


def test_insufficient_data_errors():
    with pytest.raises(InvalidArgumentError, match="short by 2"):
        sample_episode(tiny_bank(3, 5), 5, 1, 1, 0)
    with pytest.raises(InvalidArgumentError, match="short by 1"):
        sample_episode(tiny_bank(6, 3), 5, 2, 2, 0)


def test_duplicate_class_rejected():
    maps = np.zeros((2, 1, 1, 1))
    with pytest.raises(DuplicateClassError, match="class-id 4"):
        FeatureBank([BankClass(4, Split.TRAIN, maps), BankClass(4, Split.TEST, maps)])


def test_split_view():
    spec = SyntheticSpec(num_classes=6, per_class=3, shape=(2, 2, 2), split_counts=(3, 1, 2))
    bank = generate_synthetic(spec)
    assert [c.class_id for c in bank.split("train").classes] == [0, 1, 2]
    assert [c.class_id for c in bank.split(Split.VAL).classes] == [3]
    assert [c.class_id for c in bank.split("test").classes] == [4, 5]


def test_synthetic_deterministic():
    spec = SyntheticSpec(num_classes=4, per_class=3, shape=(3, 2, 2), part_signal=True, seed=11)
    assert generate_synthetic(spec) == generate_synthetic(spec)
    other = SyntheticSpec(num_classes=4, per_class=3, shape=(3, 2, 2), part_signal=True, seed=12)
    assert generate_synthetic(spec) != generate_synthetic(other)


def test_synthetic_noise_limit():
    spec = SyntheticSpec(num_classes=3, per_class=4, shape=(8, 3, 3), noise_scale=1e-6, seed=1)
    bank = generate_synthetic(spec)
    for cls in bank.classes:
        maps = cls.maps.astype(np.float64)
        assert pixel_score(pixel_view(maps[0]), pixel_view(maps[1]), 1) == pytest.approx(9, abs=1e-6)


def test_identical_classes_share_model():
    spec = SyntheticSpec(num_classes=3, per_class=400, shape=(2, 1, 1), identical_classes=True,
                         noise_scale=0.5)
    means = [c.maps.mean(axis=0) for c in generate_synthetic(spec).classes]
    np.testing.assert_allclose(means[0], means[1], atol=0.15)
    np.testing.assert_allclose(means[0], means[2], atol=0.15)


def test_synthetic_spec_validation():
    with pytest.raises(InvalidArgumentError):
        SyntheticSpec(per_class=1)
    with pytest.raises(InvalidArgumentError):
        SyntheticSpec(noise_scale=0)
    with pytest.raises(InvalidArgumentError):
        SyntheticSpec(num_classes=4, split_counts=(1, 1, 1))


def test_stream_hash_depends_on_indices():
    bank = tiny_bank(8, 4)
    h1 = stream_hash(episode_stream(bank, 3, 1, 2, 5, seed=1))
    assert h1 == stream_hash(episode_stream(bank, 3, 1, 2, 5, seed=1))
    assert h1 != stream_hash(episode_stream(bank, 3, 1, 2, 5, seed=2))
