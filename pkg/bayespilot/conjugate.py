'''
Two-endpoint binomial pilot with beta priors

Follow-up is observed on all 2n randomized participants and adherence on the n
participants of the intervention arm. Both endpoints are conjugate, so the
posterior probability that both rates exceed their progression thresholds is
available in closed form. There is no amber decision: the main trial goes
ahead (g) whenever that probability exceeds c1.
'''
import logging
log = logging.getLogger(__name__)

from collections import namedtuple

import numpy as np
import pandas as pd
from numpy.polynomial import legendre
from scipy import stats

from .decision import HypothesisLabel, HypothesisProbs
from .ocengine import AnalysisResult, BaseScenario, OCReport
from .stats import DistSpec, ParameterDomainError, beta_sf, draw
from .util import CapacityError, getfield


MAX_OUTCOMES = int(1e7)


ConjugateParams = namedtuple('ConjugateParams', ('p_f', 'p_a'))


class ConjugateData(namedtuple('ConjugateData', ('x_f', 'x_a', 'N_f', 'N_a'))):
    '''
    Observed counts. `x_f` of `N_f` participants were followed up and `x_a` of
    `N_a` were adherent. If the denominators are omitted they are taken from
    the scenario.
    '''

    def __new__(cls, x_f, x_a, N_f=None, N_a=None):
        return super().__new__(cls, x_f, x_a, N_f, N_a)


class ConjugateScenario(BaseScenario):
    '''
    Pilot trial with a follow-up and an adherence endpoint

    Parameters
    ----------
    n_per_arm : int
        Participants randomized to each arm. Follow-up is assessed on
        `2 * n_per_arm` participants and adherence on `n_per_arm`.
    followup_threshold : float
        Follow-up rate required for the main trial to be feasible.
    adherence_threshold : float
        Adherence rate required for the main trial to be feasible.
    design_prior_f, design_prior_a : DistSpec
        Beta design priors for the follow-up and adherence rates.
    analysis_prior_f, analysis_prior_a : DistSpec
        Beta analysis priors for the follow-up and adherence rates.
    '''
    model = 'conjugate'
    binary = True
    param_names = ConjugateParams._fields

    def __init__(self, n_per_arm=30, followup_threshold=0.8,
                 adherence_threshold=0.7, design_prior_f=None,
                 design_prior_a=None, analysis_prior_f=None,
                 analysis_prior_a=None):
        if design_prior_f is None:
            design_prior_f = DistSpec.beta(40, 10)
        if design_prior_a is None:
            design_prior_a = DistSpec.beta(11.2, 4.8)
        if analysis_prior_f is None:
            analysis_prior_f = DistSpec.beta(1, 1)
        if analysis_prior_a is None:
            analysis_prior_a = DistSpec.beta(1, 1)

        if int(n_per_arm) != n_per_arm or n_per_arm < 1:
            raise ParameterDomainError(f'n_per_arm must be a positive integer, got {n_per_arm}')
        for name, t in (('followup_threshold', followup_threshold),
                        ('adherence_threshold', adherence_threshold)):
            if not (0 < t < 1):
                raise ParameterDomainError(f'{name} must be in (0, 1), got {t}')
        for name, d in (('design_prior_f', design_prior_f),
                        ('design_prior_a', design_prior_a),
                        ('analysis_prior_f', analysis_prior_f),
                        ('analysis_prior_a', analysis_prior_a)):
            if not isinstance(d, DistSpec) or d.kind != 'beta':
                raise ParameterDomainError(f'{name} must be a beta distribution, got {d!r}')

        self.n_per_arm = int(n_per_arm)
        self.followup_threshold = float(followup_threshold)
        self.adherence_threshold = float(adherence_threshold)
        self.design_prior_f = design_prior_f
        self.design_prior_a = design_prior_a
        self.analysis_prior_f = analysis_prior_f
        self.analysis_prior_a = analysis_prior_a

    @property
    def N_f(self):
        return 2 * self.n_per_arm

    @property
    def N_a(self):
        return self.n_per_arm

    @property
    def size(self):
        return self.n_per_arm

    def with_size(self, size):
        d = self.as_dict()
        del d['model']
        d['n_per_arm'] = size
        return ConjugateScenario.from_dict(d)

    def as_dict(self):
        return {
            'model': self.model,
            'n_per_arm': self.n_per_arm,
            'followup_threshold': self.followup_threshold,
            'adherence_threshold': self.adherence_threshold,
            'design_prior_f': self.design_prior_f.as_dict(),
            'design_prior_a': self.design_prior_a.as_dict(),
            'analysis_prior_f': self.analysis_prior_f.as_dict(),
            'analysis_prior_a': self.analysis_prior_a.as_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ('design_prior_f', 'design_prior_a', 'analysis_prior_f',
                    'analysis_prior_a'):
            if isinstance(d.get(key), dict):
                d[key] = DistSpec.from_dict(d[key])
        return cls(**d)

    ############################################################################
    # BaseScenario interface
    ############################################################################
    def sample_params(self, stream):
        p_f = draw(self.design_prior_f, stream)
        p_a = draw(self.design_prior_a, stream)
        return ConjugateParams(p_f, p_a)._asdict()

    def simulate(self, params, stream):
        return simulate_conjugate(ConjugateParams(**params), self, stream)

    def true_label(self, params):
        return classify_conjugate(ConjugateParams(**params), self)

    def analyse(self, data, stream):
        pG = exact_pG(data, self)
        return AnalysisResult(HypothesisProbs(1 - pG, 0, pG), True, np.nan)

    def prior_draws(self, N, stream):
        p_f = draw(self.design_prior_f, stream, N)
        p_a = draw(self.design_prior_a, stream, N)
        return pd.DataFrame({'p_f': p_f, 'p_a': p_a})

    def label_columns(self, draws):
        return {'combined': classify_conjugate(draws, self)}


def classify_conjugate(params, scenario):
    '''
    True hypothesis label of follow-up and adherence rates

    Returns G when both rates reach their thresholds (boundaries inclusive) and
    R otherwise. A is never returned. Accepts scalars or arrays (in which case
    an array of label codes is returned).
    '''
    p_f = np.asarray(getfield(params, 'p_f'))
    p_a = np.asarray(getfield(params, 'p_a'))
    green = (p_f >= scenario.followup_threshold) & (p_a >= scenario.adherence_threshold)
    labels = np.where(green, HypothesisLabel.G, HypothesisLabel.R)
    if labels.ndim == 0:
        return HypothesisLabel(int(labels))
    return labels


def simulate_conjugate(params, scenario, stream):
    '''
    Simulate follow-up and adherence counts for one pilot trial.
    '''
    x_f = draw(DistSpec.binomial(scenario.N_f, params.p_f), stream)
    x_a = draw(DistSpec.binomial(scenario.N_a, params.p_a), stream)
    return ConjugateData(x_f, x_a, scenario.N_f, scenario.N_a)


def exact_pG(data, scenario):
    '''
    Posterior probability that both rates reach their thresholds

    Parameters
    ----------
    data : ConjugateData
        Observed counts. Counts may be arrays, in which case an array of
        probabilities is returned.
    scenario : ConjugateScenario
        Supplies thresholds and the beta analysis priors.

    Returns
    -------
    pG : float or array
        Product of the posterior survival probabilities of the two rates at
        their thresholds.
    '''
    N_f = scenario.N_f if data.N_f is None else data.N_f
    N_a = scenario.N_a if data.N_a is None else data.N_a
    x_f = np.asarray(data.x_f)
    x_a = np.asarray(data.x_a)
    if np.any(x_f < 0) or np.any(x_f > N_f) or np.any(x_a < 0) or np.any(x_a > N_a):
        raise ParameterDomainError(f'Counts out of range: x_f={x_f} of {N_f}, x_a={x_a} of {N_a}')
    a_f, b_f = scenario.analysis_prior_f.params
    a_a, b_a = scenario.analysis_prior_a.params
    pf = beta_sf(scenario.followup_threshold, a_f + x_f, b_f + N_f - x_f)
    pa = beta_sf(scenario.adherence_threshold, a_a + x_a, b_a + N_a - x_a)
    return pf * pa


def _prior_quadrature(prior, threshold, resolution):
    '''
    Gauss-Legendre nodes and prior-weighted weights on [0, 1], split at the
    threshold so that the discontinuity of the hypothesis indicator falls on a
    panel boundary.
    '''
    x, w = legendre.leggauss(resolution)
    nodes, weights = [], []
    for lb, ub in ((0, threshold), (threshold, 1)):
        half = (ub - lb) / 2
        nodes.append(lb + half * (x + 1))
        weights.append(half * w)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights) * prior.frozen().pdf(nodes)
    return nodes, weights


def exact_ocs(scenario, c1, grid_resolution=200):
    '''
    Operating characteristics of the rule "g iff pG > c1" without simulation

    Every outcome (x_f, x_a) is enumerated and the design prior is integrated
    by tensor-product Gauss-Legendre quadrature. OC3 is zero since there is no
    amber decision.

    Parameters
    ----------
    scenario : ConjugateScenario
    c1 : float
        Weight of an infeasible main trial (c2 = 1 - c1, c3 = 0).
    grid_resolution : int
        Number of quadrature nodes on each side of each threshold.

    Returns
    -------
    report : OCReport
        Standard errors are zero.

    Raises
    ------
    CapacityError
        If the number of outcomes is too large to enumerate.
    '''
    if grid_resolution < 100:
        raise ParameterDomainError(f'grid_resolution must be at least 100, got {grid_resolution}')
    if not (0 <= c1 <= 1):
        raise ParameterDomainError(f'c1 must be in [0, 1], got {c1}')
    N_f, N_a = scenario.N_f, scenario.N_a
    if N_f * N_a > MAX_OUTCOMES:
        raise CapacityError(f'Enumerating {N_f} x {N_a} outcomes is not feasible. '
                            'Use the Monte Carlo path (build_matrix) instead.')

    x_f = np.arange(N_f + 1)
    x_a = np.arange(N_a + 1)
    a_f, b_f = scenario.analysis_prior_f.params
    a_a, b_a = scenario.analysis_prior_a.params
    pG_f = beta_sf(scenario.followup_threshold, a_f + x_f, b_f + N_f - x_f)
    pG_a = beta_sf(scenario.adherence_threshold, a_a + x_a, b_a + N_a - x_a)
    go = (np.outer(pG_f, pG_a) > c1).astype(np.double)

    pf, wf = _prior_quadrature(scenario.design_prior_f,
                               scenario.followup_threshold, grid_resolution)
    pa, wa = _prior_quadrature(scenario.design_prior_a,
                               scenario.adherence_threshold, grid_resolution)
    log.debug('Prior mass captured by quadrature: %f (follow-up), %f (adherence)',
              wf.sum(), wa.sum())
    wf = wf / wf.sum()
    wa = wa / wa.sum()

    # Probability of g at each (p_f, p_a) node
    B_f = stats.binom.pmf(x_f[:, np.newaxis], N_f, pf[np.newaxis])
    B_a = stats.binom.pmf(x_a[:, np.newaxis], N_a, pa[np.newaxis])
    p_go = B_f.T @ go @ B_a

    green = (pf[:, np.newaxis] >= scenario.followup_threshold) & \
        (pa[np.newaxis] >= scenario.adherence_threshold)
    w = np.outer(wf, wa)
    oc1 = float(np.sum(w * p_go * ~green))
    oc2 = float(np.sum(w * (1 - p_go) * green))
    expected_loss = c1 * oc1 + (1 - c1) * oc2
    log.info('Exact OCs for n=%d, c1=%f: OC1=%f, OC2=%f', scenario.n_per_arm,
             c1, oc1, oc2)
    return OCReport(oc1=oc1, oc2=oc2, oc3=0.0, se1=0.0, se2=0.0, se3=0.0,
                    expected_loss=expected_loss, se_loss=0.0,
                    n_replicates=0, n_unconverged=0)
