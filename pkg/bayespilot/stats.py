'''
Random-variate generation and distribution functions shared by the pilot
models.

Every random draw in the package goes through an `RngStream`. A stream is
identified by a seed, a substream id (typically the replicate index) and an
optional path of child keys. The identity is fed to `numpy.random.SeedSequence`
as the spawn key, and the resulting entropy keys a counter-based `Philox`
generator, so the variates of replicate k never depend on the order in which
replicates are executed.
'''
import logging
log = logging.getLogger(__name__)

from collections import namedtuple

import numpy as np
from scipy import special, stats

from .util import PilotError


class ParameterDomainError(PilotError, ValueError):
    '''
    Raised when distribution parameters (or arguments) are outside of their
    domain.
    '''
    exit_code = 2


################################################################################
# Random number streams
################################################################################
MAX_UINT64 = 2**64 - 1


def _check_key(value, name):
    if isinstance(value, (bool, np.bool_)) or \
            not isinstance(value, (int, np.integer)):
        raise ParameterDomainError(f'{name} must be an integer, got {value!r}')
    value = int(value)
    if not (0 <= value <= MAX_UINT64):
        raise ParameterDomainError(f'{name} must be a 64-bit unsigned integer')
    return value


class RngStream:
    '''
    Reproducible, independent random number stream

    Parameters
    ----------
    seed : int
        Root seed for the run.
    substream_id : int
        Index of the substream (e.g., replicate index).
    path : tuple of int
        Child keys used to derive further independent streams from a
        substream (e.g., one child for the prior draw, one for data simulation
        and one for the analysis).

    Two streams with identical (seed, substream_id, path) produce identical
    sequences. The underlying generator is created on first use and then
    advances as variates are drawn.
    '''

    def __init__(self, seed, substream_id=0, path=()):
        self.seed = _check_key(seed, 'seed')
        self.substream_id = _check_key(substream_id, 'substream_id')
        self.path = tuple(_check_key(p, 'path key') for p in path)
        self._generator = None

    @property
    def key(self):
        return self.seed, self.substream_id, self.path

    @property
    def spawn_key(self):
        return self.path + (self.substream_id,)

    @property
    def generator(self):
        if self._generator is None:
            ss = np.random.SeedSequence(entropy=self.seed,
                                        spawn_key=self.spawn_key)
            self._generator = np.random.Generator(np.random.Philox(ss))
        return self._generator

    def substream(self, substream_id):
        '''
        Return a fresh stream sharing this stream's seed and path but with a
        different substream id.
        '''
        return RngStream(self.seed, substream_id, self.path)

    def child(self, *keys):
        '''
        Return a fresh stream whose path is extended by `keys`.
        '''
        return RngStream(self.seed, self.substream_id, self.path + keys)

    def __eq__(self, other):
        return isinstance(other, RngStream) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f'RngStream(seed={self.seed}, substream_id={self.substream_id}, path={self.path})'


################################################################################
# Distribution specifications
################################################################################
PARAM_NAMES = {
    'beta': ('alpha', 'beta'),
    'binomial': ('n', 'p'),
    'normal': ('mean', 'sd'),
    'inverse_gamma': ('shape', 'rate'),
    'normal_inverse_gamma': ('mu0', 'nu0', 'alpha0', 'beta0'),
}


def _check_positive(name, value):
    if not np.isfinite(value) or value <= 0:
        raise ParameterDomainError(f'{name} must be finite and positive, got {value}')


class DistSpec(namedtuple('DistSpec', ('kind', 'params'))):
    '''
    Specification of a univariate (or normal-inverse-gamma) distribution

    Use the class methods (e.g., `DistSpec.beta(40, 10)`) to create instances.
    Parameters are available by name through `get` (e.g., `spec.get("alpha")`).
    '''

    def __new__(cls, kind, params):
        if kind not in PARAM_NAMES:
            raise ParameterDomainError(f'Unknown distribution kind "{kind}"')
        names = PARAM_NAMES[kind]
        params = tuple(params)
        if len(params) != len(names):
            raise ParameterDomainError(f'{kind} requires parameters {names}')
        if kind == 'binomial':
            n, p = params
            if int(n) != n or n < 0:
                raise ParameterDomainError(f'n must be a non-negative integer, got {n}')
            if not (0 <= p <= 1):
                raise ParameterDomainError(f'p must be in [0, 1], got {p}')
            params = (int(n), float(p))
        else:
            params = tuple(float(p) for p in params)
            if kind == 'normal':
                if not np.isfinite(params[0]):
                    raise ParameterDomainError('mean must be finite')
                _check_positive('sd', params[1])
            elif kind == 'normal_inverse_gamma':
                if not np.isfinite(params[0]):
                    raise ParameterDomainError('mu0 must be finite')
                for name, value in zip(names[1:], params[1:]):
                    _check_positive(name, value)
            else:
                for name, value in zip(names, params):
                    _check_positive(name, value)
        return super().__new__(cls, kind, params)

    def get(self, name):
        try:
            i = PARAM_NAMES[self.kind].index(name)
        except ValueError:
            raise KeyError(f'{self.kind} has no parameter {name}') from None
        return self.params[i]

    @classmethod
    def beta(cls, alpha, beta):
        return cls('beta', (alpha, beta))

    @classmethod
    def binomial(cls, n, p):
        return cls('binomial', (n, p))

    @classmethod
    def normal(cls, mean, sd):
        return cls('normal', (mean, sd))

    @classmethod
    def inverse_gamma(cls, shape, rate):
        return cls('inverse_gamma', (shape, rate))

    @classmethod
    def normal_inverse_gamma(cls, mu0, nu0, alpha0, beta0):
        return cls('normal_inverse_gamma', (mu0, nu0, alpha0, beta0))

    @classmethod
    def from_dict(cls, d):
        '''
        Create from a configuration block such as
        `{"dist": "beta", "alpha": 40, "beta": 10}`.
        '''
        if not isinstance(d, dict) or 'dist' not in d:
            raise ParameterDomainError(f'Distribution block must be a mapping with a "dist" key, got {d!r}')
        kind = d['dist']
        if kind not in PARAM_NAMES:
            raise ParameterDomainError(f'Unknown distribution kind "{kind}"')
        names = PARAM_NAMES[kind]
        extra = set(d) - set(names) - {'dist'}
        if extra:
            raise ParameterDomainError(f'Unknown keys for {kind}: {sorted(extra)}')
        missing = set(names) - set(d)
        if missing:
            raise ParameterDomainError(f'Missing keys for {kind}: {sorted(missing)}')
        return cls(kind, [d[n] for n in names])

    def as_dict(self):
        d = {'dist': self.kind}
        d.update(zip(PARAM_NAMES[self.kind], self.params))
        return d

    def frozen(self):
        '''
        Equivalent frozen `scipy.stats` distribution (not available for the
        normal-inverse-gamma).
        '''
        p = self.params
        if self.kind == 'beta':
            return stats.beta(*p)
        if self.kind == 'binomial':
            return stats.binom(*p)
        if self.kind == 'normal':
            return stats.norm(*p)
        if self.kind == 'inverse_gamma':
            return stats.invgamma(p[0], scale=p[1])
        raise ValueError('No scipy equivalent for the normal-inverse-gamma')

    def __repr__(self):
        args = ', '.join(f'{n}={v:g}' for n, v in zip(PARAM_NAMES[self.kind], self.params))
        return f'{self.kind}({args})'


################################################################################
# Distribution functions
################################################################################
def _check_shapes(alpha, beta):
    alpha = np.asarray(alpha, dtype=np.double)
    beta = np.asarray(beta, dtype=np.double)
    if not (np.all(np.isfinite(alpha)) and np.all(alpha > 0)):
        raise ParameterDomainError(f'alpha must be finite and positive, got {alpha}')
    if not (np.all(np.isfinite(beta)) and np.all(beta > 0)):
        raise ParameterDomainError(f'beta must be finite and positive, got {beta}')
    return alpha, beta


def _check_probability(x):
    x = np.asarray(x, dtype=np.double)
    if not np.all((x >= 0) & (x <= 1)):
        raise ParameterDomainError(f'x must be in [0, 1], got {x}')
    return x


def _as_result(x):
    return float(x) if np.ndim(x) == 0 else x


def beta_cdf(x, alpha, beta):
    '''
    Cumulative distribution function of the beta distribution

    Evaluates the regularized incomplete beta function I_x(alpha, beta).
    Accepts scalars or broadcastable arrays.

    >>> beta_cdf(0.7, 1, 1)
    0.7
    >>> beta_cdf(0.5, 3, 3)
    0.5
    '''
    alpha, beta = _check_shapes(alpha, beta)
    x = _check_probability(x)
    return _as_result(special.betainc(alpha, beta, x))


def beta_sf(x, alpha, beta):
    '''
    Survival function of the beta distribution, 1 - I_x(alpha, beta)

    Evaluated through the reflection I_{1-x}(beta, alpha) to avoid
    cancellation when the CDF is close to 1.
    '''
    alpha, beta = _check_shapes(alpha, beta)
    x = _check_probability(x)
    return _as_result(special.betainc(beta, alpha, 1 - x))


def logpdf(dist, x):
    '''
    Log density of `dist` evaluated at `x` (beta, normal and inverse-gamma
    only).
    '''
    x = np.asarray(x, dtype=np.double)
    if dist.kind == 'beta':
        a, b = dist.params
        with np.errstate(divide='ignore'):
            return (a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - special.betaln(a, b)
    if dist.kind == 'normal':
        m, s = dist.params
        return -0.5 * ((x - m) / s)**2 - np.log(s) - 0.5 * np.log(2 * np.pi)
    if dist.kind == 'inverse_gamma':
        a, b = dist.params
        with np.errstate(divide='ignore'):
            return a * np.log(b) - special.gammaln(a) - (a + 1) * np.log(x) - b / x
    raise ValueError(f'logpdf not available for {dist.kind}')


def draw(dist, stream, size=None):
    '''
    Draw variates from `dist` using `stream`

    Parameters
    ----------
    dist : DistSpec
        Distribution to draw from.
    stream : RngStream
        Source of randomness. The stream advances with every call.
    size : {None, int, tuple}
        If None, a single variate is returned as a Python scalar.

    Returns
    -------
    variate : float, int, array or tuple
        For the normal-inverse-gamma, a tuple `(sigma2, mu)` where
        sigma2 ~ Inv-Gamma(alpha0, beta0) and mu ~ Normal(mu0, sigma2/nu0).
    '''
    if not isinstance(dist, DistSpec):
        raise ParameterDomainError(f'Expected a DistSpec, got {dist!r}')
    gen = stream.generator
    p = dist.params
    if dist.kind == 'beta':
        x = gen.beta(p[0], p[1], size)
    elif dist.kind == 'binomial':
        # numpy switches between inversion and BTPE depending on n*p
        x = gen.binomial(p[0], p[1], size)
        if size is None:
            return int(x)
        return x
    elif dist.kind == 'normal':
        x = gen.normal(p[0], p[1], size)
    elif dist.kind == 'inverse_gamma':
        x = p[1] / gen.gamma(p[0], 1.0, size)
    elif dist.kind == 'normal_inverse_gamma':
        mu0, nu0, alpha0, beta0 = p
        sigma2 = beta0 / gen.gamma(alpha0, 1.0, size)
        mu = gen.normal(mu0, np.sqrt(sigma2 / nu0))
        if size is None:
            return float(sigma2), float(mu)
        return sigma2, mu
    return _as_result(x)
