'''
Building blocks for the hierarchical-model sampler

All chains are advanced together: the sampler state is held in arrays with one
entry per chain and every update draws a vector of variates from a single
generator. A run is therefore fully determined by its stream regardless of how
many chains it has.
'''
import logging
log = logging.getLogger(__name__)

from collections import namedtuple

import numpy as np

from .stats import ParameterDomainError


class McmcConfig(namedtuple('McmcConfig', (
        'chains', 'iterations', 'burnin', 'step_sigma2_w', 'step_rho',
        'adapt_interval', 'rhat_threshold', 'keep_random_effects'))):
    '''
    Sampler settings

    Parameters
    ----------
    chains : int
        Number of chains.
    iterations : int
        Iterations per chain, including burn-in.
    burnin : int
        Iterations discarded from the start of each chain. Proposal step sizes
        are adapted only during burn-in.
    step_sigma2_w : float
        Initial random-walk step on log(sigma2_w).
    step_rho : float
        Initial random-walk step on logit(rho).
    adapt_interval : int
        Number of iterations between step-size updates during burn-in.
    rhat_threshold : float
        A run is flagged as not converged if the split R-hat of any parameter
        exceeds this value.
    keep_random_effects : bool
        If True, cluster random effects are drawn at every kept iteration.
    '''

    def __new__(cls, chains=4, iterations=5000, burnin=2500, step_sigma2_w=0.3,
                step_rho=0.5, adapt_interval=50, rhat_threshold=1.05,
                keep_random_effects=False):
        if int(chains) != chains or chains < 1:
            raise ParameterDomainError(f'chains must be a positive integer, got {chains}')
        if int(burnin) != burnin or burnin < 0:
            raise ParameterDomainError(f'burnin must be a non-negative integer, got {burnin}')
        if int(iterations) != iterations or iterations - burnin < 4:
            raise ParameterDomainError('At least four iterations must be kept after burn-in')
        if step_sigma2_w <= 0 or step_rho <= 0:
            raise ParameterDomainError('Step sizes must be positive')
        if int(adapt_interval) != adapt_interval or adapt_interval < 1:
            raise ParameterDomainError('adapt_interval must be a positive integer')
        if rhat_threshold <= 1:
            raise ParameterDomainError(f'rhat_threshold must be greater than 1, got {rhat_threshold}')
        return super().__new__(cls, int(chains), int(iterations), int(burnin),
                               float(step_sigma2_w), float(step_rho),
                               int(adapt_interval), float(rhat_threshold),
                               bool(keep_random_effects))

    @classmethod
    def desk(cls, **kwargs):
        '''
        Shorter runs (4 x 1000 iterations, 500 burn-in) for desk-scale
        simulation studies.
        '''
        kwargs.setdefault('iterations', 1000)
        kwargs.setdefault('burnin', 500)
        return cls(**kwargs)

    @property
    def n_kept(self):
        return self.iterations - self.burnin

    @property
    def n_draws(self):
        return self.chains * self.n_kept

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - set(cls._fields)
        if extra:
            raise ParameterDomainError(f'Unknown MCMC settings: {sorted(extra)}')
        return cls(**d)

    def as_dict(self):
        return self._asdict()


def split_rhat(draws):
    '''
    Split potential scale reduction factor

    Parameters
    ----------
    draws : array, shape (chains, n)
        Post burn-in draws of a scalar parameter. Each chain is split into two
        halves (dropping the middle draw if n is odd) and R-hat is computed
        over the 2 * chains half-chains.

    Returns
    -------
    rhat : float
        1 indicates agreement between chains. Infinite if the half-chains are
        individually constant but differ from each other.
    '''
    draws = np.asarray(draws, dtype=np.double)
    if draws.ndim == 1:
        draws = draws[np.newaxis]
    n = draws.shape[1] // 2
    if n < 2:
        raise ValueError('Need at least four draws per chain')
    halves = np.concatenate((draws[:, :n], draws[:, -n:]), axis=0)
    means = halves.mean(axis=1)
    B = n * means.var(ddof=1)
    W = halves.var(axis=1, ddof=1).mean()
    if W == 0:
        return 1.0 if B == 0 else np.inf
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


class StepAdapter:
    '''
    Per-chain random-walk step sizes tuned towards a target acceptance window

    Every `interval` iterations during burn-in, chains whose acceptance rate
    since the previous update is below `low` shrink their step and chains
    above `high` grow it. Acceptance is counted separately after burn-in.
    '''

    def __init__(self, name, step, chains, interval, low=0.2, high=0.5):
        self.name = name
        self.step = np.full(chains, step, dtype=np.double)
        self.interval = interval
        self.low = low
        self.high = high
        self._window = np.zeros(chains)
        self._n_window = 0
        self.accepted = np.zeros(chains)
        self.proposed = 0

    def record(self, accept, adapting):
        if adapting:
            self._window += accept
            self._n_window += 1
            if self._n_window == self.interval:
                self._adapt()
        else:
            self.accepted += accept
            self.proposed += 1

    def _adapt(self):
        rate = self._window / self._n_window
        self.step[rate < self.low] *= 0.7
        self.step[rate > self.high] *= 1.4
        log.trace('%s acceptance %s, steps now %s', self.name, rate, self.step)
        self._window[:] = 0
        self._n_window = 0

    @property
    def acceptance_rate(self):
        if self.proposed == 0:
            return np.full_like(self.accepted, np.nan)
        return self.accepted / self.proposed


def rw_update(x, logp, log_target, step, gen):
    '''
    One random-walk Metropolis update for every chain

    Parameters
    ----------
    x : array, shape (chains,)
        Current state on the unconstrained scale.
    logp : array, shape (chains,)
        Log target density at `x`.
    log_target : callable
        Returns the log target density (including any Jacobian) at an array of
        states.
    step : array, shape (chains,)
        Proposal standard deviations.
    gen : numpy.random.Generator

    Returns
    -------
    x, logp, accept : arrays
        Updated state, log target and boolean acceptance indicators.
    '''
    proposal = x + step * gen.standard_normal(x.shape)
    logp_proposal = log_target(proposal)
    with np.errstate(divide='ignore', invalid='ignore'):
        accept = np.log(gen.random(x.shape)) < (logp_proposal - logp)
    x = np.where(accept, proposal, x)
    logp = np.where(accept, logp_proposal, logp)
    return x, logp, accept
