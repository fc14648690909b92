import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mml import oracles
from mml.errors import InvalidArgumentError, NumericalDomainError
from mml.fusion import FusionWeights, ce_loss, fuse, loss_and_grad, train_step
from mml.metrics import BranchScores


def random_batch(rng, size=8, n=5):
    return [(rng.standard_normal((n, 3)) * rng.uniform(0.5, 5, size=3), int(rng.integers(n)))
            for _ in range(size)]


def finite_difference(batch, weights, h=1e-5):
    grads = {}
    for name in ("w", "b"):
        g = np.empty(3)
        for i in range(3):
            plus, minus = weights.copy(), weights.copy()
            getattr(plus, name)[i] += h
            getattr(minus, name)[i] -= h
            g[i] = (loss_and_grad(batch, plus)[0] - loss_and_grad(batch, minus)[0]) / (2 * h)
        grads[name] = g
    return grads["w"], grads["b"]


def rel_err(a, b, floor=1e-6):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


class TestFuse:
    def test_single_branch_selects_largest_part(self):
        per_class = [BranchScores(3.0, 1.0, 9.0), BranchScores(5.0, 0.0, 9.0), BranchScores(1.0, 7.0, 0.0)]
        weights = FusionWeights(w=[1, 0, 0])
        for train in (False, True):
            assert np.argmax(fuse(per_class, weights.copy(), train_mode=train).probs) == 1

    def test_identical_classes_are_uniform(self):
        out = fuse([BranchScores(1, 2, 3)] * 2, FusionWeights())
        np.testing.assert_allclose(out.probs, [0.5, 0.5], atol=1e-15)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(0)
        per_class = rng.standard_normal((5, 3))
        weights = FusionWeights(w=[0.7, -1.2, 2.0], b=[0.1, 0.2, -0.3],
                                running_mean=[0.5, -0.1, 2.0], running_var=[2.0, 0.3, 4.0])
        out = fuse(per_class, weights)
        scores, probs = oracles.fuse(per_class, weights.w, weights.b, weights.running_mean,
                                     weights.running_var)
        np.testing.assert_allclose(out.scores, scores, rtol=1e-12)
        np.testing.assert_allclose(out.probs, probs, rtol=1e-12)
        assert out.probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_train_mode_uses_batch_stats_and_updates_running(self):
        rng = np.random.default_rng(1)
        per_class = rng.standard_normal((5, 3)) * 3 + 1
        weights = FusionWeights(w=[0.3, 0.9, 1.5])
        out = fuse(per_class, weights, train_mode=True)
        mean, var = oracles.batch_stats(per_class)
        _, probs = oracles.fuse(per_class, [0.3, 0.9, 1.5], [0, 0, 0], mean, var)
        np.testing.assert_allclose(out.probs, probs, rtol=1e-12)
        np.testing.assert_allclose(weights.running_mean, 0.1 * np.array(mean), rtol=1e-12)
        np.testing.assert_allclose(weights.running_var, 0.9 + 0.1 * np.array(var), rtol=1e-12)

    def test_zero_variance_branch_is_finite(self):
        per_class = np.array([[1.0, 2.0, 3.0], [1.0, 5.0, 3.0]])
        out = fuse(per_class, FusionWeights(), train_mode=True)
        assert np.all(np.isfinite(out.probs))

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        per_class = rng.standard_normal((4, 3))
        weights = FusionWeights(w=[1.0, 2.0, 0.5])
        a = fuse(per_class, weights)
        shifted = fuse(per_class, FusionWeights(w=[1.0, 2.0, 0.5], b=[3.0, -1.0, 7.5]))
        np.testing.assert_allclose(a.probs, shifted.probs, atol=1e-12)

    def test_distribution_sign(self):
        weights = FusionWeights(w=[0, 0, 1])
        base = np.array([[1.0, 1.0, 2.0], [1.0, 1.0, 2.5], [1.0, 1.0, 3.0]])
        p0 = fuse(base, weights).probs[1]
        lower = base.copy()
        lower[1, 2] = 1.5
        assert fuse(lower, weights).probs[1] > p0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100))
    def test_argmax_invariant_to_common_scale(self, seed, c):
        rng = np.random.default_rng(seed)
        per_class = rng.standard_normal((5, 3))
        weights = FusionWeights(w=rng.uniform(0.1, 2, 3), running_mean=rng.standard_normal(3),
                                running_var=rng.uniform(0.5, 2, 3))
        scaled = FusionWeights(w=weights.w, running_mean=c * weights.running_mean,
                               running_var=c * c * weights.running_var)
        assert np.argmax(fuse(per_class, weights).probs) == np.argmax(fuse(c * per_class, scaled).probs)

    def test_needs_two_classes(self):
        with pytest.raises(InvalidArgumentError):
            fuse([BranchScores(1, 1, 1)], FusionWeights())


class TestCELoss:
    def test_uniform(self):
        assert ce_loss(np.zeros(5), 3) == pytest.approx(math.log(5), abs=1e-15)

    def test_confident_limit(self):
        assert ce_loss(np.array([0.0, 800.0, -800.0]), 1) == pytest.approx(0.0, abs=1e-300)

    def test_frozen_logits(self):
        # 50-digit softmax + log reference
        assert ce_loss(np.array([1.928, -1.977, -0.188, -1.022]), 2) == \
            pytest.approx(2.292465591549548, rel=1e-14)

    def test_bad_label(self):
        with pytest.raises(InvalidArgumentError):
            ce_loss(np.zeros(3), 3)


class TestTraining:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            batch = random_batch(rng)
            weights = FusionWeights(w=rng.uniform(-2, 2, 3), b=rng.uniform(-1, 1, 3))
            _, gw, gb = loss_and_grad(batch, weights)
            fw, fb = finite_difference(batch, weights)
            assert np.all(rel_err(gw, fw) <= 1e-4)
            assert np.all(rel_err(gb, fb) <= 1e-4)

    def test_zero_learning_rate_keeps_parameters(self):
        rng = np.random.default_rng(4)
        batch = random_batch(rng)
        weights = FusionWeights(w=[0.5, 1.5, 2.5])
        new, loss = train_step(batch, weights, 0.0)
        np.testing.assert_array_equal(new.w, weights.w)
        np.testing.assert_array_equal(new.b, weights.b)
        assert loss == pytest.approx(loss_and_grad(batch, weights)[0])

    def test_distribution_only_signal_raises_w3(self):
        rng = np.random.default_rng(5)
        batch = []
        for _ in range(16):
            per_class = rng.standard_normal((5, 3))
            label = int(rng.integers(5))
            per_class[label, 2] = per_class[:, 2].min() - rng.uniform(0.1, 1.0)
            batch.append((per_class, label))
        weights = FusionWeights()
        start = weights.w[2]
        for _ in range(100):
            weights, _ = train_step(batch, weights, 0.1)
        assert weights.w[2] > start

    def test_non_finite_aborts(self):
        batch = [(np.array([[np.inf, 0, 0], [0, 0, 0]]), 0)]
        with pytest.raises(NumericalDomainError):
            train_step(batch, FusionWeights(), 0.1)

    def test_deterministic_trajectory(self):
        def run():
            rng = np.random.default_rng(6)
            weights = FusionWeights()
            for _ in range(10):
                weights, _ = train_step(random_batch(rng), weights, 0.05)
            return weights
        a, b = run(), run()
        assert a == b


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    weights = FusionWeights(w=rng.standard_normal(3), b=rng.standard_normal(3) / 3,
                            running_mean=rng.standard_normal(3), running_var=rng.uniform(0, 9, 3),
                            momentum=0.95)
    path = tmp_path / "w.json"
    weights.save(path)
    assert FusionWeights.load(path) == weights
    assert '"version": 1' in path.read_text()


def test_weights_validation():
    with pytest.raises(InvalidArgumentError):
        FusionWeights(running_var=[1, -1, 1])
    with pytest.raises(InvalidArgumentError):
        FusionWeights(momentum=1.0)
