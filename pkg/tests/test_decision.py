import pytest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from bayespilot.decision import (
    Decision, EstimationError, HypothesisLabel, HypothesisProbs, TIE_ORDER,
    decide, decide_many, errors, expected_loss, expected_losses, loss,
    loss_table, posterior_probs_from_samples
)
from bayespilot.stats import RngStream


def test_loss_table():
    c1, c2, c3 = 0.2, 0.5, 0.3
    expected = [
        [0, c2, c2],
        [c1 + c3, 0, c3],
        [c1, c1 + c2, 0],
    ]
    assert_allclose(loss_table((c1, c2, c3)), expected)
    for d in Decision:
        for h in HypothesisLabel:
            assert loss(d, h, (c1, c2, c3)) == pytest.approx(expected[d][h])


def test_errors():
    assert errors(Decision.g, HypothesisLabel.A) == (True, True, False)
    assert errors(Decision.a, HypothesisLabel.R) == (True, False, True)
    assert errors(Decision.r, HypothesisLabel.R) == (False, False, False)
    assert errors(Decision.a, HypothesisLabel.A) == (False, False, False)
    assert errors(Decision.g, HypothesisLabel.G) == (False, False, False)


def test_expected_loss_consistency():
    gen = RngStream(11).generator
    probs = gen.dirichlet(np.ones(3), size=500)
    cs = gen.dirichlet(np.ones(3), size=500)
    for p, c in zip(probs, cs):
        for d in Decision:
            expected = sum(p[h] * loss(d, h, c) for h in HypothesisLabel)
            assert abs(expected_loss(d, p, c) - expected) < 1e-12


def test_expected_loss_example():
    assert expected_loss(Decision.g, (1, 0, 0), (0.2, 0.6, 0.2)) == pytest.approx(0.2)
    assert expected_loss(Decision.r, (0, 0.5, 0.5), (0.2, 0.6, 0.2)) == pytest.approx(0.6)


def test_decide_exhaustive():
    gen = RngStream(12).generator
    probs = gen.dirichlet(np.ones(3), size=2000)
    c = gen.dirichlet(np.ones(3))
    decisions = decide_many(probs, c)
    for p, d in zip(probs, decisions):
        e = [sum(p[h] * loss(di, h, c) for h in HypothesisLabel) for di in Decision]
        assert e[d] == pytest.approx(min(e), abs=1e-12)


@pytest.mark.parametrize('p,c,expected', [
    # r has expected loss 2/9, a and g tie at 1/3
    ((1 / 3, 1 / 3, 1 / 3), (1 / 3, 1 / 3, 1 / 3), Decision.r),
    # Three-way tie at 0.25
    ((0.5, 0, 0.5), (0.5, 0.5, 0), Decision.r),
    # a and g tie at 0.1
    ((0.5, 0, 0.5), (0.2, 0.8, 0), Decision.g),
    ((0, 0, 1), (0.2, 0.6, 0.2), Decision.g),
    ((1, 0, 0), (0.2, 0.6, 0.2), Decision.r),
    ((0, 1, 0), (0.2, 0.6, 0.2), Decision.a),
])
def test_decide(p, c, expected):
    assert decide(p, c) == expected


def test_tie_order():
    assert TIE_ORDER[0] == Decision.r
    assert set(TIE_ORDER) == set(Decision)


@pytest.mark.parametrize('c1', [0.1, 0.2, 0.5, 0.8])
def test_binary_reduction(c1):
    pG = np.linspace(0.001, 0.999, 999)
    pG = pG[np.abs(pG - c1) > 1e-9]
    probs = np.stack((1 - pG, np.zeros_like(pG), pG), axis=-1)
    d = decide_many(probs, (c1, 1 - c1, 0))
    expected = np.where(pG > c1, Decision.g, Decision.r)
    assert_array_equal(d, expected)


def test_decide_scale_invariant():
    gen = RngStream(13).generator
    probs = gen.dirichlet(np.ones(3), size=200)
    c = np.array([0.2, 0.5, 0.3])
    # Powers of two scale exactly
    assert_array_equal(decide_many(probs, c), decide_many(probs, 4 * c))


def test_expected_losses_shape():
    probs = np.full((4, 5, 3), 1 / 3)
    assert expected_losses(probs, (0.2, 0.6, 0.2)).shape == (4, 5, 3)


def test_hypothesis_probs():
    p = HypothesisProbs(0.2, 0.3, 0.5 + 5e-7)
    assert abs(sum(p) - 1) < 1e-12
    with pytest.raises(EstimationError):
        HypothesisProbs(0.5, 0.5, 0.5)
    with pytest.raises(EstimationError):
        HypothesisProbs(-0.1, 0.6, 0.5)
    with pytest.raises(EstimationError):
        HypothesisProbs(np.nan, 0.5, 0.5)


def test_hypothesis_probs_from_labels():
    p = HypothesisProbs.from_labels([0, 0, 1, 2])
    assert p == (0.5, 0.25, 0.25)
    with pytest.raises(EstimationError):
        HypothesisProbs.from_labels([])
    with pytest.raises(EstimationError):
        HypothesisProbs.from_labels([0, 3])


class ThresholdPartition:

    def classify(self, samples):
        x = np.asarray(samples['x'])
        return np.where(x < 0, HypothesisLabel.R,
                        np.where(x < 1, HypothesisLabel.A, HypothesisLabel.G))


def test_posterior_probs_from_samples():
    samples = {'x': np.array([-1, -0.5, 0.2, 0.5, 0.7, 2, 3, 4])}
    p = posterior_probs_from_samples(samples, ThresholdPartition())
    assert_allclose(p, (0.25, 0.375, 0.375))
