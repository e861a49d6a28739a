import pytest

import numpy as np
from numpy.testing import assert_allclose
from scipy import stats

from bayespilot.conjugate import (
    ConjugateData, ConjugateParams, ConjugateScenario, classify_conjugate,
    exact_ocs, exact_pG, simulate_conjugate
)
from bayespilot.decision import HypothesisLabel
from bayespilot.elicitation import LossParams
from bayespilot.ocengine import build_matrix, ocs_for_loss
from bayespilot.stats import DistSpec, ParameterDomainError, RngStream
from bayespilot.util import CapacityError


def test_prior_mass(conjugate_scenario):
    draws = conjugate_scenario.prior_draws(10**6, RngStream(1))
    labels = classify_conjugate(draws, conjugate_scenario)
    fraction = np.mean(labels == HypothesisLabel.G)
    assert abs(fraction - 0.28) < 0.005
    expected = stats.beta(40, 10).sf(0.8) * stats.beta(11.2, 4.8).sf(0.7)
    assert abs(fraction - expected) < 0.002


def test_classify_boundaries(conjugate_scenario):
    s = conjugate_scenario
    assert classify_conjugate(ConjugateParams(0.8, 0.7), s) == HypothesisLabel.G
    assert classify_conjugate(ConjugateParams(0.79, 0.9), s) == HypothesisLabel.R
    assert classify_conjugate(ConjugateParams(0.9, 0.69), s) == HypothesisLabel.R
    labels = classify_conjugate({'p_f': np.linspace(0, 1, 101),
                                 'p_a': np.linspace(0, 1, 101)}, s)
    assert not np.any(labels == HypothesisLabel.A)


def test_simulate(conjugate_scenario):
    params = ConjugateParams(0.8, 0.6)
    stream = RngStream(2)
    data = [simulate_conjugate(params, conjugate_scenario, stream) for _ in range(10**4)]
    x_f = np.array([d.x_f for d in data])
    x_a = np.array([d.x_a for d in data])
    assert abs(x_f.mean() - 48) < 0.5
    assert abs(x_a.mean() - 18) < 0.5
    assert x_f.max() <= 60
    assert x_a.max() <= 30
    assert data[0].N_f == 60
    assert data[0].N_a == 30


def test_exact_pG_extremes(conjugate_scenario):
    s = conjugate_scenario
    assert exact_pG(ConjugateData(60, 30), s) > 0.99
    assert exact_pG(ConjugateData(0, 0), s) < 1e-10
    assert exact_pG(ConjugateData(60, 0), s) < 1e-6


@pytest.mark.parametrize('x_f,x_a', [(48, 21), (50, 20), (45, 25)])
def test_exact_pG_monte_carlo(conjugate_scenario, x_f, x_a):
    s = conjugate_scenario
    gen = RngStream(3).generator
    p_f = gen.beta(1 + x_f, 1 + 60 - x_f, 10**6)
    p_a = gen.beta(1 + x_a, 1 + 30 - x_a, 10**6)
    labels = classify_conjugate({'p_f': p_f, 'p_a': p_a}, s)
    expected = np.mean(labels == HypothesisLabel.G)
    assert abs(exact_pG(ConjugateData(x_f, x_a), s) - expected) < 0.002


def test_exact_pG_vectorized(conjugate_scenario):
    x_f = np.arange(61)
    pG = exact_pG(ConjugateData(x_f, np.full(61, 20)), conjugate_scenario)
    assert pG.shape == (61,)
    assert np.all(np.diff(pG) >= 0)


def test_exact_pG_out_of_range(conjugate_scenario):
    with pytest.raises(ParameterDomainError):
        exact_pG(ConjugateData(61, 10), conjugate_scenario)
    with pytest.raises(ParameterDomainError):
        exact_pG(ConjugateData(10, -1), conjugate_scenario)


def test_analyse(conjugate_scenario):
    result = conjugate_scenario.analyse(ConjugateData(50, 22, 60, 30), RngStream(1))
    assert result.probs.pA == 0
    assert result.converged
    assert_allclose(sum(result.probs), 1)


def test_exact_ocs(conjugate_scenario):
    report = exact_ocs(conjugate_scenario, 0.2)
    assert abs(report.oc1 - 0.19) < 0.01
    assert abs(report.oc2 - 0.05) < 0.01
    assert report.oc3 == 0
    assert report.se1 == 0
    assert_allclose(report.expected_loss, 0.2 * report.oc1 + 0.8 * report.oc2)


def test_exact_ocs_resolution(conjugate_scenario):
    a = exact_ocs(conjugate_scenario, 0.2, grid_resolution=100)
    b = exact_ocs(conjugate_scenario, 0.2, grid_resolution=400)
    assert abs(a.oc1 - b.oc1) < 1e-4
    assert abs(a.oc2 - b.oc2) < 1e-4


def test_exact_ocs_threshold_tradeoff(conjugate_scenario):
    # Raising c1 makes g harder to reach
    reports = [exact_ocs(conjugate_scenario, c1) for c1 in (0.1, 0.3, 0.5, 0.7, 0.9)]
    oc1 = [r.oc1 for r in reports]
    oc2 = [r.oc2 for r in reports]
    assert np.all(np.diff(oc1) <= 0)
    assert np.all(np.diff(oc2) >= 0)


def test_exact_ocs_sample_size():
    small = exact_ocs(ConjugateScenario(n_per_arm=10), 0.2)
    large = exact_ocs(ConjugateScenario(n_per_arm=60), 0.2)
    assert large.expected_loss < small.expected_loss


def test_exact_ocs_errors(conjugate_scenario):
    with pytest.raises(ParameterDomainError):
        exact_ocs(conjugate_scenario, 0.2, grid_resolution=50)
    with pytest.raises(ParameterDomainError):
        exact_ocs(conjugate_scenario, 1.5)
    with pytest.raises(CapacityError):
        exact_ocs(ConjugateScenario(n_per_arm=3000), 0.2)


@pytest.mark.parametrize('kwargs', [
    {'n_per_arm': 0},
    {'n_per_arm': 2.5},
    {'followup_threshold': 1},
    {'adherence_threshold': 0},
    {'design_prior_f': DistSpec.normal(0.8, 0.1)},
])
def test_scenario_validation(kwargs):
    with pytest.raises(ParameterDomainError):
        ConjugateScenario(**kwargs)


def test_with_size(conjugate_scenario):
    s = conjugate_scenario.with_size(50)
    assert s.n_per_arm == 50
    assert s.N_f == 100
    assert s.design_prior_f == conjugate_scenario.design_prior_f
    assert s.as_dict()['followup_threshold'] == 0.8


def test_replicate_reproducible(conjugate_scenario):
    a = conjugate_scenario.run_replicate(RngStream(4).substream(10))
    b = conjugate_scenario.run_replicate(RngStream(4).substream(10))
    assert np.isnan(a.pop('max_rhat'))
    b.pop('max_rhat')
    assert a == b
    assert a['replicate'] == 10


@pytest.mark.slow
def test_monte_carlo_matches_exact(conjugate_scenario):
    c = LossParams.binary(0.2)
    matrix = build_matrix(conjugate_scenario, 10**5, RngStream(5), threads=4)
    mc = ocs_for_loss(matrix, c)
    exact = exact_ocs(conjugate_scenario, 0.2)
    assert abs(mc.oc1 - 0.19) < 0.01
    assert abs(mc.oc2 - 0.05) < 0.01
    assert abs(mc.oc1 - exact.oc1) < 3 * mc.se1
    assert abs(mc.oc2 - exact.oc2) < 3 * mc.se2
    assert mc.oc3 == 0
    assert abs(np.mean(matrix.labels == HypothesisLabel.G) - 0.28) < 0.01
