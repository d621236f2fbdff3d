import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from geotrack.loss import (L_hard, L_soft, LossConfig, SATISFIED_EPS, TripletBatch, delta, deltas, grad_L_hard,
                           grad_L_soft, l_hard, l_soft)
from geotrack.projection import SparseGridMap
from geotrack.selfcheck import gradient_errors, random_loss_instance, random_sparse_map

mpmath.mp.dps = 50


def soft_oracle(d, t):
    return float(t * mpmath.log1p(mpmath.exp(mpmath.mpf(d) / t)))


def batch_with_deltas(values, margin=0.1):
    """Batch whose deltas (for the given margin) equal ``values``."""
    values = np.asarray(values, dtype=float)
    return TripletBatch(0.0, margin - values)


@pytest.mark.parametrize("dp, dn, m, expected", [(-1.0, -0.5, 0.1, -0.4), (-0.3, -0.3, 0.0, 0.0),
                                                 (-0.2, -0.9, 0.1, 0.8)])
def test_delta_examples(dp, dn, m, expected):
    assert delta(TripletBatch(dp, [dn]), LossConfig(m, 0.1), 0) == pytest.approx(expected, abs=1e-15)


def test_hard_loss_examples():
    cfg = LossConfig()
    res = L_hard(batch_with_deltas([-0.3, -0.1, 0.0]), cfg)
    assert res.value == 0.0 and res.degenerate
    assert L_hard(batch_with_deltas([0.4, -0.1, 0.2]), cfg).value == pytest.approx(0.3)
    assert L_hard(batch_with_deltas([0.5]), cfg).value == pytest.approx(0.5)
    assert l_hard(-2.0) == 0.0


@pytest.mark.parametrize("d, expected", [(0.0, 0.0693147), (0.5, 0.5006715), (-2.0, 2.06e-10)])
def test_l_soft_examples(d, expected):
    value = l_soft(d, 0.1)
    assert value == pytest.approx(soft_oracle(d, 0.1), rel=1e-12)
    assert value == pytest.approx(expected, rel=1e-3 if d < 0 else 1e-6)


@given(st.floats(-50, 50), st.sampled_from([1e-4, 1e-2, 0.1, 1.0]))
def test_l_soft_against_high_precision(d, t):
    assert l_soft(d, t) == pytest.approx(soft_oracle(d, t), rel=1e-12, abs=1e-300)


def test_soft_loss_examples():
    cfg = LossConfig(0.1, 0.1)
    assert L_soft(batch_with_deltas([0.0]), cfg).value == pytest.approx(0.1386294, abs=1e-7)
    d0 = 0.23
    sigma = 1 / (1 + np.exp(-d0 / 0.1))
    assert L_soft(batch_with_deltas([d0] * 7), cfg).value == pytest.approx(l_soft(d0, 0.1) / sigma)
    big = np.array([5.0, 7.0, 9.0])
    assert L_soft(batch_with_deltas(big), cfg).value == pytest.approx(big.mean(), rel=1e-9)


def test_soft_loss_degenerate_batch():
    res = L_soft(batch_with_deltas([-10.0, -12.0]), LossConfig(0.1, 0.1))
    assert res.value == 0.0 and res.degenerate
    with pytest.raises(ValueError):
        L_soft(TripletBatch(0.0, []), LossConfig())


def test_soft_loss_near_satisfied_batch_is_finite():
    # weights below 1e-12 but the denominator above 1e-30: plain quotient, about T
    res = L_soft(batch_with_deltas([-3.0, -3.5]), LossConfig(0.1, 0.1))
    assert not res.degenerate
    assert res.value == pytest.approx(0.1, rel=1e-9)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=10), st.integers(0, 9), st.floats(0.001, 0.5))
def test_numerator_is_monotone_in_delta(values, which, bump):
    values = np.array(values)
    which %= len(values)
    bumped = values.copy()
    bumped[which] += bump
    assert np.sum(l_soft(bumped, 0.1)) >= np.sum(l_soft(values, 0.1))


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=20))
def test_soft_tends_to_hard(scores):
    batch = TripletBatch.from_scores(scores, 0)
    d = deltas(batch, LossConfig())
    if np.min(np.abs(d)) < 1e-2:
        return
    soft = L_soft(batch, LossConfig(0.1, 1e-4)).value
    assert abs(soft - L_hard(batch, LossConfig()).value) < 1e-3


def gradient_instance(seed, size=8):
    return random_loss_instance(np.random.default_rng(seed), size=size, channels=4, hypotheses=6)


@pytest.mark.parametrize("seed", [0, 1])
def test_gradient_matches_finite_differences_8x8(seed):
    ma, ground = gradient_instance(seed)
    rel, rel_full = gradient_errors(ma, ground, LossConfig())
    assert rel < 1e-4
    assert rel_full > 1e-3  # differentiating the denominator too gives a different answer


def test_satisfied_batch_has_zero_gradient(rng):
    ma = random_sparse_map(rng, 6, 6, 3, 0.9)
    far = [SparseGridMap(ma.spec, -ma.features, ma.valid.copy()) for _ in range(4)]
    ground = [SparseGridMap(ma.spec, ma.features.copy(), ma.valid.copy())] + far
    res = grad_L_soft(ma, ground, 0, LossConfig(0.1, 0.1))
    # delta = -1 + 0.1 - 1 = -1.9: sigma(-19) ~ 5.6e-9 is not yet below the threshold
    assert np.any(res.grad_aerial != 0)
    res = grad_L_soft(ma, ground, 0, LossConfig(0.1, 0.05))
    assert 1 / (1 + np.exp(1.9 / 0.05)) < SATISFIED_EPS
    assert np.all(res.grad_aerial == 0) and all(np.all(g == 0) for g in res.grad_ground)


def test_invalid_ground_pixels_get_exactly_zero_gradient():
    ma, ground = gradient_instance(3)
    res = grad_L_soft(ma, ground, 0, LossConfig())
    for g, mg in zip(res.grad_ground, ground):
        assert np.all(g[~mg.valid] == 0.0)
    assert np.all(res.grad_aerial[~ma.valid] == 0.0)
    assert any(np.any(g[mg.valid] != 0) for g, mg in zip(res.grad_ground, ground))


def test_hard_gradient_uses_hard_negatives_only():
    ma, ground = gradient_instance(4)
    res = grad_L_hard(ma, ground, 0, LossConfig())
    batch = TripletBatch.from_scores(res.scores, 0)
    d = deltas(batch, LossConfig())
    for n, idx in enumerate(batch.negative_indices):
        assert np.any(res.grad_ground[idx] != 0) == bool(d[n] > 0)
    assert res.value == pytest.approx(L_hard(batch, LossConfig()).value)


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=12), st.sampled_from([1e-3, 0.1, 1.0]))
def test_losses_are_never_negative(scores, t):
    batch = TripletBatch.from_scores(scores, 0)
    assert L_soft(batch, LossConfig(0.1, t)).value >= 0
    assert L_hard(batch, LossConfig(0.1, t)).value >= 0
