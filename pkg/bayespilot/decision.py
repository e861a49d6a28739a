'''
Loss table and expected-loss decision rule for the red/amber/green
progression decision.

Rows of the loss table are decisions (r, a, g) and columns are hypotheses
(R, A, G):

    ===  ========  =======  ====
         R         A        G
    ===  ========  =======  ====
    r    0         c2       c2
    a    c1 + c3   0        c3
    g    c1        c1 + c2  0
    ===  ========  =======  ====

Each cell is the dot product of the error indicators (E1, E2, E3) for that
decision/hypothesis pair with the loss weights (c1, c2, c3).
'''
import logging
log = logging.getLogger(__name__)

from collections import namedtuple
from enum import IntEnum

import numpy as np

from .util import PilotError


class EstimationError(PilotError, ValueError):
    exit_code = 2


class Decision(IntEnum):
    r = 0
    a = 1
    g = 2


class HypothesisLabel(IntEnum):
    R = 0
    A = 1
    G = 2


ErrorTriple = namedtuple('ErrorTriple', ('E1', 'E2', 'E3'))


# Indexed as ERROR_TABLE[decision, hypothesis, error]
ERROR_TABLE = np.zeros((3, 3, 3), dtype=bool)
ERROR_TABLE[Decision.a, HypothesisLabel.R] = (1, 0, 1)
ERROR_TABLE[Decision.g, HypothesisLabel.R] = (1, 0, 0)
ERROR_TABLE[Decision.r, HypothesisLabel.A] = (0, 1, 0)
ERROR_TABLE[Decision.g, HypothesisLabel.A] = (1, 1, 0)
ERROR_TABLE[Decision.r, HypothesisLabel.G] = (0, 1, 0)
ERROR_TABLE[Decision.a, HypothesisLabel.G] = (0, 0, 1)
ERROR_TABLE.setflags(write=False)


# Preference among decisions with equal expected loss, most preferred first.
# Amber goes last so that, without an amber hypothesis and without an
# adjustment cost, the rule reduces to "g iff pG > c1".
TIE_ORDER = (Decision.r, Decision.g, Decision.a)


PROB_TOLERANCE = 1e-6


class HypothesisProbs(namedtuple('HypothesisProbs', ('pR', 'pA', 'pG'))):
    '''
    Posterior probabilities of the three hypotheses

    Values are renormalized to sum to 1. Inputs must already sum to 1 within
    1e-6 and each must be in [0, 1].
    '''

    def __new__(cls, pR, pA, pG):
        p = np.array([pR, pA, pG], dtype=np.double)
        if not np.all(np.isfinite(p)) or np.any(p < -PROB_TOLERANCE) or \
                np.any(p > 1 + PROB_TOLERANCE):
            raise EstimationError(f'Hypothesis probabilities must be in [0, 1], got {p.tolist()}')
        total = p.sum()
        if abs(total - 1) > PROB_TOLERANCE:
            raise EstimationError(f'Hypothesis probabilities must sum to 1, got {total}')
        p = np.clip(p, 0, 1) / total
        return super().__new__(cls, *(float(x) for x in p))

    @classmethod
    def from_labels(cls, labels):
        '''
        Proportion of each hypothesis label in `labels`.
        '''
        labels = np.asarray(labels)
        if labels.size == 0:
            raise EstimationError('Cannot estimate hypothesis probabilities from an empty sample')
        counts = np.bincount(labels.ravel().astype(int), minlength=3)
        if len(counts) > 3:
            raise EstimationError('Hypothesis labels must be 0 (R), 1 (A) or 2 (G)')
        return cls(*(counts / labels.size))

    def as_array(self):
        return np.array(self, dtype=np.double)


def _as_loss_vector(c):
    c = np.asarray(c, dtype=np.double)
    if c.shape != (3,):
        raise ValueError(f'Loss vector must have three components, got {c.tolist()}')
    return c


def errors(d, h):
    '''
    Error indicators (E1, E2, E3) incurred by decision `d` when hypothesis `h`
    is true.

    >>> errors(Decision.g, HypothesisLabel.A)
    ErrorTriple(E1=True, E2=True, E3=False)
    '''
    return ErrorTriple(*(bool(e) for e in ERROR_TABLE[Decision(d), HypothesisLabel(h)]))


def loss_table(c):
    '''
    3 x 3 array of losses indexed as [decision, hypothesis].
    '''
    c = _as_loss_vector(c)
    return ERROR_TABLE.astype(np.double) @ c


def loss(d, h, c):
    '''
    Loss of decision `d` when hypothesis `h` is true, c1*E1 + c2*E2 + c3*E3.
    '''
    c = _as_loss_vector(c)
    e = ERROR_TABLE[Decision(d), HypothesisLabel(h)]
    return float(np.dot(e, c))


def expected_losses(probs, c):
    '''
    Expected loss of each decision for one or more posterior triples

    Parameters
    ----------
    probs : array_like, shape (..., 3)
        Posterior probabilities (pR, pA, pG).
    c : array_like, shape (3,)
        Loss weights.

    Returns
    -------
    losses : array, shape (..., 3)
        Expected losses of decisions (r, a, g).
    '''
    c1, c2, c3 = _as_loss_vector(c)
    probs = np.asarray(probs, dtype=np.double)
    pR, pA, pG = probs[..., 0], probs[..., 1], probs[..., 2]
    # Written term by term (rather than probs @ table.T) so that equal
    # expected losses compare exactly equal.
    e_r = c2 * (pA + pG)
    e_a = (c1 + c3) * pR + c3 * pG
    e_g = c1 * pR + (c1 + c2) * pA
    return np.stack((e_r, e_a, e_g), axis=-1)


def expected_loss(d, p, c):
    '''
    Expected loss of decision `d` given posterior probabilities `p`.

    >>> expected_loss(Decision.g, (1, 0, 0), (0.2, 0.6, 0.2))
    0.2
    '''
    return float(expected_losses(p, c)[Decision(d)])


def decide_many(probs, c):
    '''
    Vectorized `decide` returning an integer array of decision codes.
    '''
    e = expected_losses(probs, c)
    order = np.array(TIE_ORDER)
    # argmin returns the first minimum, so reordering columns implements the
    # tie-breaking preference.
    i = np.argmin(e[..., order], axis=-1)
    return order[i]


def decide(p, c):
    '''
    Decision with the smallest expected loss

    Ties are broken by preferring r, then g, then a.

    Parameters
    ----------
    p : HypothesisProbs or sequence of three floats
    c : LossParams or sequence of three floats
        Loss weights. These need not be normalized; the decision is invariant
        to positive rescaling.

    Returns
    -------
    decision : Decision
    '''
    return Decision(int(decide_many(np.asarray(p, dtype=np.double), c)))


def posterior_probs_from_samples(samples, partition):
    '''
    Estimate hypothesis probabilities from posterior draws

    Parameters
    ----------
    samples : mapping or DataFrame of arrays
        Draws of the substantive parameters, one entry per parameter.
    partition : object
        Must implement `classify(samples)` returning an array of hypothesis
        labels, one per draw.

    Returns
    -------
    probs : HypothesisProbs
        Fraction of draws falling in each hypothesis region.
    '''
    labels = partition.classify(samples)
    return HypothesisProbs.from_labels(labels)
