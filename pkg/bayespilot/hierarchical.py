'''
Cluster-randomized pilot with a random-intercept outcome model

Each of the 2k clusters (k per arm) has m_j residents with m_j drawn from a
normal distribution around the mean cluster size mu_c (rounded, at least 1).
Residents are followed up with probability p_f. Intervention clusters adhere
(all or nothing) with probability p_a. Followed-up residents contribute an
outcome

    y_ij = X_j * Y_j * mu + u_j + e_ij

where X_j flags the intervention arm, Y_j adherence, u_j ~ N(0, sigma2_b) is a
cluster effect and e_ij ~ N(0, sigma2_w). The between-cluster variance is
parametrized through the intracluster correlation rho = sigma2_b / (sigma2_b +
sigma2_w).

The substantive parameters (mu_c, p_f, p_a, mu) are split in two pairs. The
information pair (p_f, mu_c) and the efficacy pair (p_a, mu) are each labelled
R, A or G by a partition with trade-off lines, and the two labels are combined
into the overall hypothesis.
'''
import logging
log = logging.getLogger(__name__)

from collections import namedtuple

import numpy as np
import pandas as pd
from scipy import special

from .decision import HypothesisLabel, posterior_probs_from_samples
from .mcmc import McmcConfig, StepAdapter, rw_update, split_rhat
from .ocengine import AnalysisResult, BaseScenario
from .stats import DistSpec, ParameterDomainError, draw, logpdf
from .util import get_cb, getfield


SUBSTANTIVE = ('mu_c', 'p_f', 'p_a', 'mu')
NUISANCE = ('sigma2_c', 'rho', 'sigma2_w')


################################################################################
# Parameters and priors
################################################################################
class HierParams(namedtuple('HierParams', SUBSTANTIVE + NUISANCE)):
    '''
    Parameters of the cluster-randomized pilot model. Fields may be scalars or
    arrays of equal shape (e.g., a batch of prior draws).
    '''

    def __new__(cls, mu_c, p_f, p_a, mu, sigma2_c, rho, sigma2_w):
        for name, value in (('sigma2_c', sigma2_c), ('sigma2_w', sigma2_w)):
            if not np.all(np.asarray(value) > 0):
                raise ParameterDomainError(f'{name} must be positive')
        if not np.all((np.asarray(rho) >= 0) & (np.asarray(rho) < 1)):
            raise ParameterDomainError('rho must be in [0, 1)')
        for name, value in (('p_f', p_f), ('p_a', p_a)):
            if not np.all((np.asarray(value) >= 0) & (np.asarray(value) <= 1)):
                raise ParameterDomainError(f'{name} must be in [0, 1]')
        return super().__new__(cls, mu_c, p_f, p_a, mu, sigma2_c, rho, sigma2_w)

    @property
    def sigma2_b(self):
        rho = np.asarray(self.rho)
        return rho / (1 - rho) * self.sigma2_w


_DESIGN_KINDS = {
    'cluster': 'normal_inverse_gamma',
    'p_f': 'beta',
    'p_a': 'beta',
    'mu': 'normal',
    'sigma2_w': 'inverse_gamma',
    'rho': 'beta',
}


def _check_kind(name, dist, kind):
    if not isinstance(dist, DistSpec) or dist.kind != kind:
        raise ParameterDomainError(f'Prior for {name} must be {kind}, got {dist!r}')


def _blocks_from_dict(d, allowed):
    extra = set(d) - set(allowed)
    if extra:
        raise ParameterDomainError(f'Unknown prior components: {sorted(extra)}')
    return {k: v if isinstance(v, DistSpec) else DistSpec.from_dict(v)
            for k, v in d.items()}


class DesignPrior(namedtuple('DesignPrior', tuple(_DESIGN_KINDS))):
    '''
    Design prior of the cluster-randomized pilot

    (sigma2_c, mu_c) share a normal-inverse-gamma prior (`cluster`); the
    remaining parameters have independent priors.
    '''

    def __new__(cls, cluster=None, p_f=None, p_a=None, mu=None, sigma2_w=None,
                rho=None):
        default = DEFAULT_DESIGN
        values = {
            'cluster': cluster or default['cluster'],
            'p_f': p_f or default['p_f'],
            'p_a': p_a or default['p_a'],
            'mu': mu or default['mu'],
            'sigma2_w': sigma2_w or default['sigma2_w'],
            'rho': rho or default['rho'],
        }
        for name, dist in values.items():
            _check_kind(name, dist, _DESIGN_KINDS[name])
        return super().__new__(cls, **values)

    @classmethod
    def from_dict(cls, d):
        return cls(**_blocks_from_dict(d, cls._fields))

    def as_dict(self):
        return {k: v.as_dict() for k, v in self._asdict().items()}


DEFAULT_DESIGN = {
    'cluster': DistSpec.normal_inverse_gamma(10, 6, 20, 39),
    'p_f': DistSpec.beta(22.4, 9.6),
    'p_a': DistSpec.beta(28.8, 3.2),
    'mu': DistSpec.normal(0.2, 0.25),
    'sigma2_w': DistSpec.inverse_gamma(50, 45),
    'rho': DistSpec.beta(1.6, 30.4),
}


_ANALYSIS_KINDS = {
    'cluster': 'normal_inverse_gamma',
    'mu_c': 'normal',
    'sigma2_c': 'inverse_gamma',
    'p_f': 'beta',
    'p_a': 'beta',
    'mu': 'normal',
    'sigma2_w': 'inverse_gamma',
    'rho': 'beta',
}


PRESETS = ('WI', 'IN', 'INA', 'design')


WEAKLY_INFORMATIVE = {
    'mu_c': DistSpec.normal(0, 10),
    'sigma2_c': DistSpec.inverse_gamma(2, 2),
    'p_f': DistSpec.beta(1, 1),
    'p_a': DistSpec.beta(1, 1),
    'mu': DistSpec.normal(0, 10),
    'sigma2_w': DistSpec.inverse_gamma(2, 2),
    'rho': DistSpec.beta(1, 1),
}


class AnalysisPriorSpec(namedtuple('AnalysisPriorSpec',
                                   ('preset',) + tuple(_ANALYSIS_KINDS))):
    '''
    Analysis prior of the cluster-randomized pilot

    The cluster-size parameters take either a joint normal-inverse-gamma prior
    (`cluster`) or independent normal (`mu_c`) and inverse-gamma
    (`sigma2_c`) priors, never both. All other parameters have one prior each.

    Use `AnalysisPriorSpec.from_preset` to build one of the named presets:

    WI
        Weakly informative priors on every parameter.
    IN
        WI for the substantive parameters with design-prior components for the
        nuisance parameters (sigma2_c, rho, sigma2_w).
    INA
        IN plus the design prior on adherence.
    design
        The design prior itself.
    '''

    def __new__(cls, preset=None, cluster=None, mu_c=None, sigma2_c=None,
                p_f=None, p_a=None, mu=None, sigma2_w=None, rho=None):
        values = dict(cluster=cluster, mu_c=mu_c, sigma2_c=sigma2_c, p_f=p_f,
                      p_a=p_a, mu=mu, sigma2_w=sigma2_w, rho=rho)
        if cluster is not None:
            if mu_c is not None or sigma2_c is not None:
                raise ParameterDomainError('Specify either a cluster prior or mu_c and sigma2_c priors, not both')
        elif mu_c is None or sigma2_c is None:
            raise ParameterDomainError('Priors for mu_c and sigma2_c are required')
        for name, dist in values.items():
            if dist is None:
                if name in ('cluster', 'mu_c', 'sigma2_c'):
                    continue
                raise ParameterDomainError(f'Missing analysis prior for {name}')
            _check_kind(name, dist, _ANALYSIS_KINDS[name])
        return super().__new__(cls, preset, **values)

    @classmethod
    def from_preset(cls, name, design_prior=None):
        if design_prior is None:
            design_prior = DesignPrior()
        if name not in PRESETS:
            raise ParameterDomainError(f'Unknown analysis prior preset "{name}". '
                                       f'Valid presets are {PRESETS}.')
        if name == 'design':
            return cls(preset=name, **design_prior._asdict())
        blocks = dict(WEAKLY_INFORMATIVE)
        if name in ('IN', 'INA'):
            _, _, alpha0, beta0 = design_prior.cluster.params
            blocks['sigma2_c'] = DistSpec.inverse_gamma(alpha0, beta0)
            blocks['rho'] = design_prior.rho
            blocks['sigma2_w'] = design_prior.sigma2_w
        if name == 'INA':
            blocks['p_a'] = design_prior.p_a
        return cls(preset=name, **blocks)

    def override(self, **blocks):
        '''
        Return a copy with some components replaced. Setting `cluster` clears
        `mu_c` and `sigma2_c` and vice versa.
        '''
        values = self._asdict()
        if 'cluster' in blocks:
            values['mu_c'] = values['sigma2_c'] = None
        if 'mu_c' in blocks or 'sigma2_c' in blocks:
            values['cluster'] = None
        values.update(blocks)
        return AnalysisPriorSpec(**values)

    @classmethod
    def from_config(cls, value, design_prior=None):
        '''
        Resolve an analysis-prior configuration value

        `value` may be a preset name, a mapping with a `preset` key plus
        per-parameter overrides, or a mapping giving every component.
        '''
        if isinstance(value, AnalysisPriorSpec):
            return value
        if isinstance(value, str):
            return cls.from_preset(value, design_prior)
        if not isinstance(value, dict):
            raise ParameterDomainError(f'Invalid analysis prior {value!r}')
        value = dict(value)
        preset = value.pop('preset', None)
        blocks = _blocks_from_dict(value, _ANALYSIS_KINDS)
        if preset is None:
            return cls(preset='custom', **blocks)
        spec = cls.from_preset(preset, design_prior)
        if blocks:
            spec = spec.override(preset=f'{preset}+custom', **blocks)
        return spec

    def as_dict(self):
        d = {'preset': self.preset}
        for name in _ANALYSIS_KINDS:
            dist = getattr(self, name)
            if dist is not None:
                d[name] = dist.as_dict()
        return d


def draw_design_prior(stream, design_prior=None, size=None):
    '''
    Draw parameters from the design prior

    Parameters
    ----------
    stream : RngStream
    design_prior : {None, DesignPrior}
        Defaults to `DEFAULT_DESIGN`.
    size : {None, int}
        If given, each field of the result is an array of `size` draws.

    Returns
    -------
    params : HierParams
    '''
    if design_prior is None:
        design_prior = DesignPrior()
    sigma2_c, mu_c = draw(design_prior.cluster, stream, size)
    p_f = draw(design_prior.p_f, stream, size)
    p_a = draw(design_prior.p_a, stream, size)
    mu = draw(design_prior.mu, stream, size)
    sigma2_w = draw(design_prior.sigma2_w, stream, size)
    rho = draw(design_prior.rho, stream, size)
    return HierParams(mu_c, p_f, p_a, mu, sigma2_c, rho, sigma2_w)


################################################################################
# Hypothesis partition
################################################################################
class HypothesisPartition(namedtuple('HypothesisPartition', (
        'info_floor', 'info_green_floor', 'info_slope', 'info_red_intercept',
        'info_green_intercept', 'eff_floor', 'eff_green_floor', 'eff_slope',
        'eff_red_intercept', 'eff_green_intercept'))):
    '''
    Boundaries of the information (p_f, mu_c) and efficacy (p_a, mu) regions

    Information is R if p_f < info_floor or mu_c falls below the red line
    `info_red_intercept - info_slope * p_f`, and G if p_f > info_green_floor
    and mu_c is above the green line `info_green_intercept - info_slope *
    p_f`. Efficacy is defined the same way with p_a in place of mu_c and mu in
    place of p_f. Everything else is A.
    '''

    def __new__(cls, info_floor=0.6, info_green_floor=0.66, info_slope=15,
                info_red_intercept=20, info_green_intercept=22, eff_floor=0.5,
                eff_green_floor=0.6, eff_slope=0.57, eff_red_intercept=0.96,
                eff_green_intercept=1.06):
        values = [float(v) for v in (
            info_floor, info_green_floor, info_slope, info_red_intercept,
            info_green_intercept, eff_floor, eff_green_floor, eff_slope,
            eff_red_intercept, eff_green_intercept)]
        self = super().__new__(cls, *values)
        for prefix in ('info', 'eff'):
            floor = getattr(self, f'{prefix}_floor')
            green_floor = getattr(self, f'{prefix}_green_floor')
            red = getattr(self, f'{prefix}_red_intercept')
            green = getattr(self, f'{prefix}_green_intercept')
            if not green_floor > floor:
                raise ParameterDomainError(f'{prefix}_green_floor must be above {prefix}_floor')
            if not green > red:
                raise ParameterDomainError(f'The {prefix} green line must lie above the red line')
        return self

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - set(cls._fields)
        if extra:
            raise ParameterDomainError(f'Unknown partition settings: {sorted(extra)}')
        return cls(**d)

    def as_dict(self):
        return self._asdict()

    def classify_marginals(self, samples):
        '''
        Information, efficacy and combined labels of each sample.
        '''
        h_info = classify_info(getfield(samples, 'p_f'),
                               getfield(samples, 'mu_c'), self)
        h_eff = classify_eff(getfield(samples, 'p_a'),
                             getfield(samples, 'mu'), self)
        return h_info, h_eff, combine_labels(h_info, h_eff)

    def classify(self, samples):
        return self.classify_marginals(samples)[-1]


def _label(codes):
    if np.ndim(codes) == 0:
        return HypothesisLabel(int(codes))
    return codes


def classify_info(p_f, mu_c, partition):
    '''
    Label the information parameters (follow-up rate and mean cluster size)

    >>> classify_info(0.9, 10, HypothesisPartition())
    <HypothesisLabel.G: 2>
    '''
    p = partition
    p_f = np.asarray(p_f, dtype=np.double)
    mu_c = np.asarray(mu_c, dtype=np.double)
    red = (p_f < p.info_floor) | (p.info_red_intercept - p.info_slope * p_f > mu_c)
    green = ~red & (p_f > p.info_green_floor) & \
        (p.info_green_intercept - p.info_slope * p_f < mu_c)
    return _label(np.where(red, HypothesisLabel.R,
                           np.where(green, HypothesisLabel.G, HypothesisLabel.A)))


def classify_eff(p_a, mu, partition):
    '''
    Label the efficacy parameters (adherence rate and potential efficacy).
    Here the floors apply to p_a and the trade-off lines are functions of mu.
    '''
    p = partition
    mu = np.asarray(mu, dtype=np.double)
    p_a = np.asarray(p_a, dtype=np.double)
    red = (p_a < p.eff_floor) | (p.eff_red_intercept - p.eff_slope * mu > p_a)
    green = ~red & (p_a > p.eff_green_floor) & \
        (p.eff_green_intercept - p.eff_slope * mu < p_a)
    return _label(np.where(red, HypothesisLabel.R,
                           np.where(green, HypothesisLabel.G, HypothesisLabel.A)))


def combine_labels(h_info, h_eff):
    '''
    R if either label is R, G if both are G and A otherwise. With the codes
    R < A < G this is the elementwise minimum.
    '''
    return _label(np.minimum(h_info, h_eff))


################################################################################
# Data
################################################################################
class HierDataset:
    '''
    One simulated (or observed) cluster-randomized pilot trial

    Parameters
    ----------
    k : int
        Clusters per arm. Clusters 0 to k-1 are control and k to 2k-1 are
        intervention.
    cluster_sizes : array of int, shape (2k,)
        Residents per cluster.
    adherence : array of int, shape (k,)
        Adherence indicators of the intervention clusters.
    followup : array of bool, shape (sum(cluster_sizes),)
        Follow-up flag of each resident, ordered by cluster.
    outcomes : array of float
        Outcomes of the followed-up residents, in resident order.
    '''

    def __init__(self, k, cluster_sizes, adherence, followup, outcomes):
        cluster_sizes = np.asarray(cluster_sizes, dtype=int)
        adherence = np.asarray(adherence, dtype=int)
        followup = np.asarray(followup, dtype=bool)
        outcomes = np.asarray(outcomes, dtype=np.double)
        if k < 1:
            raise ParameterDomainError(f'k must be at least 1, got {k}')
        if cluster_sizes.shape != (2 * k,) or np.any(cluster_sizes < 1):
            raise ParameterDomainError('Need 2k positive cluster sizes')
        if adherence.shape != (k,) or not np.all(np.isin(adherence, (0, 1))):
            raise ParameterDomainError('Need k adherence indicators (0 or 1)')
        if followup.shape != (cluster_sizes.sum(),):
            raise ParameterDomainError('Need one follow-up flag per resident')
        if outcomes.shape != (followup.sum(),):
            raise ParameterDomainError('Need one outcome per followed-up resident')
        self.k = int(k)
        self.cluster_sizes = cluster_sizes
        self.adherence = adherence
        self.followup = followup
        self.outcomes = outcomes

    @property
    def arm(self):
        return np.repeat([0, 1], self.k)

    @property
    def treated(self):
        '''
        X_j * Y_j for every cluster.
        '''
        return np.concatenate((np.zeros(self.k, dtype=int), self.adherence))

    @property
    def resident_cluster(self):
        return np.repeat(np.arange(2 * self.k), self.cluster_sizes)

    @property
    def outcome_cluster(self):
        return self.resident_cluster[self.followup]

    @property
    def n_residents(self):
        return int(self.cluster_sizes.sum())

    @property
    def n_followed(self):
        return int(self.followup.sum())

    @property
    def n_adherent(self):
        return int(self.adherence.sum())

    def outcome_summaries(self):
        '''
        Per-cluster outcome count, sum and sum of squares.
        '''
        J = 2 * self.k
        cluster = self.outcome_cluster
        n = np.bincount(cluster, minlength=J).astype(np.double)
        S = np.bincount(cluster, weights=self.outcomes, minlength=J)
        SS = np.bincount(cluster, weights=self.outcomes**2, minlength=J)
        return n, S, SS

    def __repr__(self):
        return (f'<HierDataset k={self.k} residents={self.n_residents} '
                f'followed={self.n_followed} adherent={self.n_adherent}>')


def simulate_trial(params, k, stream):
    '''
    Simulate a cluster-randomized pilot trial

    Parameters
    ----------
    params : HierParams
        True parameter values (scalars).
    k : int
        Clusters per arm.
    stream : RngStream

    Returns
    -------
    data : HierDataset
        Cluster sizes are normal draws rounded to the nearest integer with a
        floor of 1. Outcomes are generated for followed-up residents only.
    '''
    if k < 1:
        raise ParameterDomainError(f'k must be at least 1, got {k}')
    gen = stream.generator
    J = 2 * k
    m = gen.normal(params.mu_c, np.sqrt(params.sigma2_c), J)
    m = np.maximum(1, np.rint(m)).astype(int)
    adherence = gen.binomial(1, params.p_a, k)
    followup = gen.random(m.sum()) < params.p_f

    treated = np.concatenate((np.zeros(k, dtype=int), adherence))
    u = gen.normal(0, np.sqrt(params.sigma2_b), J)
    cluster = np.repeat(np.arange(J), m)[followup]
    e = gen.normal(0, np.sqrt(params.sigma2_w), cluster.size)
    y = treated[cluster] * params.mu + u[cluster] + e
    return HierDataset(k, m, adherence, followup, y)


################################################################################
# Posterior sampling
################################################################################
class PosteriorSample:
    '''
    Posterior draws with convergence diagnostics

    Attributes
    ----------
    draws : DataFrame
        One row per kept draw with columns `chain`, `iteration` and one per
        model parameter.
    rhat : dict
        Split R-hat of each parameter.
    acceptance : dict
        Post burn-in acceptance rate of each Metropolis update, per chain.
    converged : bool
        False if any R-hat exceeds the configured threshold.
    random_effects : {None, array}
        Cluster effect draws, shape (draws, 2k), if requested.
    '''

    def __init__(self, draws, rhat, acceptance, threshold, random_effects=None):
        self.draws = draws
        self.rhat = rhat
        self.acceptance = acceptance
        self.threshold = threshold
        self.random_effects = random_effects

    @property
    def max_rhat(self):
        return max(self.rhat.values())

    @property
    def converged(self):
        return bool(self.max_rhat <= self.threshold)

    def __getitem__(self, name):
        return self.draws[name].values

    def __len__(self):
        return len(self.draws)


def _outcome_loglik(mu, w, rho, n, S, SS, t):
    '''
    Log likelihood of the outcomes with the cluster effects integrated out

    Cluster j contributes a multivariate normal with covariance w*I + b*11'
    (b = rho/(1-rho)*w) whose determinant is w^(n-1)*(w + n*b). Arguments
    mu, w and rho have shape (chains,); n, S, SS and t have shape (clusters,).
    '''
    b = rho / (1 - rho) * w
    d = w[:, np.newaxis] + n * b[:, np.newaxis]
    mt = mu[:, np.newaxis] * t
    e1 = S - n * mt
    e2 = SS - 2 * mt * S + n * mt**2
    q = (e2 - b[:, np.newaxis] * e1**2 / d) / w[:, np.newaxis]
    return -0.5 * (np.sum((n - 1), axis=-1) * np.log(w)
                   + np.log(d).sum(axis=-1) + q.sum(axis=-1))


def _logit(p):
    return np.log(p) - np.log1p(-p)


def posterior_sample(data, prior, mcmc, stream):
    '''
    Draw from the posterior of the cluster-randomized pilot model

    Cluster-size, follow-up and adherence parameters have conjugate full
    conditionals that do not involve the outcome model and are drawn
    directly (or by two-block Gibbs when mu_c and sigma2_c have independent
    priors). The outcome model is sampled with the cluster effects integrated
    out: mu from its normal full conditional and log(sigma2_w) and logit(rho)
    by adaptive random-walk Metropolis.

    Parameters
    ----------
    data : HierDataset
    prior : AnalysisPriorSpec
    mcmc : McmcConfig
    stream : RngStream

    Returns
    -------
    sample : PosteriorSample
        `mcmc.chains * (mcmc.iterations - mcmc.burnin)` draws.
    '''
    gen = stream.generator
    C, T, B = mcmc.chains, mcmc.iterations, mcmc.burnin
    K = T - B
    J = 2 * data.k
    m = data.cluster_sizes.astype(np.double)

    draws = {}

    # Cluster size
    if prior.cluster is not None:
        mu0, nu0, alpha0, beta0 = prior.cluster.params
        m_bar = m.mean()
        nu_n = nu0 + J
        mu_n = (nu0 * mu0 + J * m_bar) / nu_n
        alpha_n = alpha0 + J / 2
        beta_n = beta0 + 0.5 * np.sum((m - m_bar)**2) + \
            nu0 * J * (m_bar - mu0)**2 / (2 * nu_n)
        draws['sigma2_c'] = beta_n / gen.gamma(alpha_n, 1.0, (C, K))
        draws['mu_c'] = gen.normal(mu_n, np.sqrt(draws['sigma2_c'] / nu_n))
        gibbs_cluster = False
    else:
        gibbs_cluster = True
        m0, s0 = prior.mu_c.params
        a0, b0 = prior.sigma2_c.params
        sigma2_c = np.full(C, max(m.var(ddof=1), 1.0))
        sigma2_c *= np.exp(gen.normal(0, 0.5, C))
        draws['mu_c'] = np.empty((C, K))
        draws['sigma2_c'] = np.empty((C, K))

    # Follow-up and adherence
    a_f, b_f = prior.p_f.params
    f, R = data.n_followed, data.n_residents
    draws['p_f'] = gen.beta(a_f + f, b_f + R - f, (C, K))
    a_a, b_a = prior.p_a.params
    a = data.n_adherent
    draws['p_a'] = gen.beta(a_a + a, b_a + data.k - a, (C, K))

    # Outcome model
    n, S, SS = data.outcome_summaries()
    t = data.treated.astype(np.double)
    m0_mu, s0_mu = prior.mu.params
    has_outcomes = n.sum() > 0
    u_draws = np.empty((C, K, J)) if mcmc.keep_random_effects else None

    if not has_outcomes:
        log.warning('No outcomes observed, outcome parameters are drawn from the prior')
        draws['mu'] = draw(prior.mu, stream, (C, K))
        draws['sigma2_w'] = draw(prior.sigma2_w, stream, (C, K))
        draws['rho'] = draw(prior.rho, stream, (C, K))
        if u_draws is not None:
            b = draws['rho'] / (1 - draws['rho']) * draws['sigma2_w']
            u_draws[:] = gen.normal(0, 1, (C, K, J)) * np.sqrt(b)[..., np.newaxis]
        adapters = []
    else:
        draws['mu'] = np.empty((C, K))
        draws['sigma2_w'] = np.empty((C, K))
        draws['rho'] = np.empty((C, K))

        y_var = max(data.outcomes.var(), 1e-3) if data.outcomes.size > 1 else 1.0
        log_w = np.log(y_var) + gen.normal(0, 0.5, C)
        logit_rho = _logit(0.05) + gen.normal(0, 1, C)
        mu = np.zeros(C)

        w_adapter = StepAdapter('log(sigma2_w)', mcmc.step_sigma2_w, C,
                                mcmc.adapt_interval)
        rho_adapter = StepAdapter('logit(rho)', mcmc.step_rho, C,
                                  mcmc.adapt_interval)
        adapters = [w_adapter, rho_adapter]

        def w_target(x):
            w = np.exp(x)
            rho = special.expit(logit_rho)
            return _outcome_loglik(mu, w, rho, n, S, SS, t) \
                + logpdf(prior.sigma2_w, w) + x

        def rho_target(x):
            w = np.exp(log_w)
            rho = special.expit(x)
            return _outcome_loglik(mu, w, rho, n, S, SS, t) \
                + logpdf(prior.rho, rho) + np.log(rho) + np.log1p(-rho)

    nt = n * t
    St = S * t
    for i in range(T):
        keep = i >= B
        j = i - B

        if gibbs_cluster:
            prec = 1 / s0**2 + J / sigma2_c
            mean = (m0 / s0**2 + m.sum() / sigma2_c) / prec
            mu_c = mean + gen.standard_normal(C) / np.sqrt(prec)
            rate = b0 + 0.5 * np.sum((m - mu_c[:, np.newaxis])**2, axis=-1)
            sigma2_c = rate / gen.gamma(a0 + J / 2, 1.0, C)
            if keep:
                draws['mu_c'][:, j] = mu_c
                draws['sigma2_c'][:, j] = sigma2_c

        if not has_outcomes:
            if not gibbs_cluster:
                break
            continue

        w = np.exp(log_w)
        rho = special.expit(logit_rho)
        b = rho / (1 - rho) * w
        d = w[:, np.newaxis] + n * b[:, np.newaxis]
        prec = 1 / s0_mu**2 + np.sum(nt / d, axis=-1)
        mean = (m0_mu / s0_mu**2 + np.sum(St / d, axis=-1)) / prec
        mu = mean + gen.standard_normal(C) / np.sqrt(prec)

        logp = w_target(log_w)
        log_w, logp, accept = rw_update(log_w, logp, w_target, w_adapter.step, gen)
        w_adapter.record(accept, not keep)

        logp = rho_target(logit_rho)
        logit_rho, logp, accept = rw_update(logit_rho, logp, rho_target,
                                            rho_adapter.step, gen)
        rho_adapter.record(accept, not keep)

        if keep:
            w = np.exp(log_w)
            rho = special.expit(logit_rho)
            draws['mu'][:, j] = mu
            draws['sigma2_w'][:, j] = w
            draws['rho'][:, j] = rho
            if u_draws is not None:
                b = rho / (1 - rho) * w
                u_prec = 1 / b[:, np.newaxis] + n / w[:, np.newaxis]
                u_mean = (S - n * mu[:, np.newaxis] * t) / w[:, np.newaxis] / u_prec
                u_draws[:, j] = u_mean + gen.standard_normal((C, J)) / np.sqrt(u_prec)

    names = SUBSTANTIVE + NUISANCE
    rhat = {name: split_rhat(draws[name]) for name in names}
    table = pd.DataFrame({
        'chain': np.repeat(np.arange(C), K),
        'iteration': np.tile(np.arange(B, T), C),
        **{name: draws[name].ravel() for name in names},
    })
    acceptance = {a.name: a.acceptance_rate for a in adapters}
    if u_draws is not None:
        u_draws = u_draws.reshape((C * K, J))
    sample = PosteriorSample(table, rhat, acceptance, mcmc.rhat_threshold,
                             u_draws)
    if not sample.converged:
        worst = max(rhat, key=rhat.get)
        log.warning('Sampler did not converge, R-hat of %s is %.3f', worst, rhat[worst])
    log.debug('R-hat: %s, acceptance: %s', rhat, acceptance)
    return sample


def posterior_hypothesis_probs(data, prior, partition, mcmc, stream):
    '''
    Posterior probabilities of the R, A and G hypotheses

    Returns
    -------
    probs : HypothesisProbs
        Fraction of posterior draws whose substantive parameters fall in each
        combined hypothesis region.
    '''
    sample = posterior_sample(data, prior, mcmc, stream)
    return posterior_probs_from_samples(sample.draws, partition)


################################################################################
# Scenario
################################################################################
class HierScenario(BaseScenario):
    '''
    Cluster-randomized pilot scenario

    Parameters
    ----------
    k : int
        Clusters per arm.
    design_prior : {None, DesignPrior}
    analysis_prior : {str, dict, AnalysisPriorSpec}
        Preset name or specification (see `AnalysisPriorSpec.from_config`).
    partition : {None, HypothesisPartition}
    mcmc : {None, McmcConfig}
    '''
    model = 'hierarchical'
    binary = False
    param_names = HierParams._fields

    def __init__(self, k=6, design_prior=None, analysis_prior='WI',
                 partition=None, mcmc=None):
        if int(k) != k or k < 1:
            raise ParameterDomainError(f'k must be a positive integer, got {k}')
        self.k = int(k)
        self.design_prior = DesignPrior() if design_prior is None else design_prior
        self.analysis_prior = AnalysisPriorSpec.from_config(analysis_prior,
                                                            self.design_prior)
        self.partition = HypothesisPartition() if partition is None else partition
        self.mcmc = McmcConfig() if mcmc is None else mcmc

    @property
    def size(self):
        return self.k

    @property
    def posterior_draws(self):
        return self.mcmc.n_draws

    def _copy(self, **kwargs):
        values = dict(k=self.k, design_prior=self.design_prior,
                      analysis_prior=self.analysis_prior,
                      partition=self.partition, mcmc=self.mcmc)
        values.update(kwargs)
        return HierScenario(**values)

    def with_size(self, size):
        return self._copy(k=size)

    def with_analysis_prior(self, analysis_prior):
        if isinstance(analysis_prior, str):
            analysis_prior = AnalysisPriorSpec.from_preset(analysis_prior,
                                                           self.design_prior)
        return self._copy(analysis_prior=analysis_prior)

    def as_dict(self):
        return {
            'model': self.model,
            'k': self.k,
            'design_prior': self.design_prior.as_dict(),
            'analysis_prior': self.analysis_prior.as_dict(),
            'partition': self.partition.as_dict(),
            'mcmc': self.mcmc.as_dict(),
        }

    def sample_params(self, stream):
        params = draw_design_prior(stream, self.design_prior)
        return {k: float(v) for k, v in params._asdict().items()}

    def simulate(self, params, stream):
        return simulate_trial(HierParams(**params), self.k, stream)

    def true_label(self, params):
        return self.partition.classify(params)

    def analyse(self, data, stream):
        sample = posterior_sample(data, self.analysis_prior, self.mcmc, stream)
        probs = posterior_probs_from_samples(sample.draws, self.partition)
        return AnalysisResult(probs, sample.converged, sample.max_rhat)

    def prior_draws(self, N, stream):
        params = draw_design_prior(stream, self.design_prior, N)
        return pd.DataFrame(params._asdict())

    def label_columns(self, draws):
        h_info, h_eff, h = self.partition.classify_marginals(draws)
        return {'info': h_info, 'efficacy': h_eff, 'combined': h}


################################################################################
# Validation
################################################################################
def sbc_ranks(k, n_replicates, stream, design_prior=None, mcmc=None, thin=10,
              parameters=SUBSTANTIVE, cb=None):
    '''
    Rank statistics for simulation-based calibration

    For each replicate, parameters are drawn from the design prior, a trial is
    simulated and the posterior is sampled using the design prior as the
    analysis prior. The rank of each true parameter among the thinned
    posterior draws is uniform on {0, ..., L} if the sampler is correct.

    Parameters
    ----------
    k : int
        Clusters per arm.
    n_replicates : int
        Number of simulated trials.
    stream : RngStream
        Replicate r uses `stream.substream(r)`.
    thin : int
        Keep every `thin`-th iteration of each chain.
    parameters : tuple of str
        Parameters to rank.

    Returns
    -------
    ranks : DataFrame
        One row per replicate and one column per parameter. The number of
        thinned draws L is stored in `ranks.attrs['n_draws']`.
    '''
    if design_prior is None:
        design_prior = DesignPrior()
    if mcmc is None:
        mcmc = McmcConfig.desk()
    prior = AnalysisPriorSpec.from_preset('design', design_prior)
    cb = get_cb(cb, 'SBC')
    rows = []
    n_draws = None
    for r in range(n_replicates):
        rep = stream.substream(r)
        truth = draw_design_prior(rep.child(0), design_prior)
        data = simulate_trial(truth, k, rep.child(1))
        sample = posterior_sample(data, prior, mcmc, rep.child(2))
        kept = sample.draws.loc[sample.draws['iteration'] % thin == 0]
        n_draws = len(kept)
        rows.append({p: int(np.sum(kept[p].values < getattr(truth, p)))
                     for p in parameters})
        cb((r + 1) / n_replicates)
    ranks = pd.DataFrame(rows, columns=list(parameters))
    ranks.attrs['n_draws'] = n_draws
    return ranks
