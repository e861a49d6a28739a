'''
Loss-function parameters and their elicitation from indifference judgements

The loss of a progression decision is c1*E1 + c2*E2 + c3*E3, where E1 flags an
infeasible main trial, E2 a discarded promising intervention and E3 an
unnecessary adjustment. The weights are normalized so that they sum to 1.

Two gambles are posed to the decision maker. In the first, they compare the
event (E1, E2, E3) = (1, 0, 0) for certain with a gamble giving (0, 0, 0) with
probability 1 - p1 and (1, 0, 1) with probability p1. In the second, the
gamble gives (1, 1, 0) with probability p2 instead. At indifference the
expected losses are equal:

    p1 * (c1 + c3) = c1
    p2 * (c1 + c2) = c1

which, together with c1 + c2 + c3 = 1, fix the weights.
'''
import logging
log = logging.getLogger(__name__)

from collections import namedtuple
import warnings

import numpy as np

from .util import PilotError


################################################################################
# Exceptions
################################################################################
class ElicitationError(PilotError, ValueError):
    exit_code = 2


class LossValidationError(PilotError, ValueError):
    exit_code = 2


class DegenerateLossWarning(UserWarning):
    pass


################################################################################
# Types
################################################################################
SUM_TOLERANCE = 1e-9
VALIDATION_TOLERANCE = 1e-6


class LossParams(namedtuple('LossParams', ('c1', 'c2', 'c3'))):
    '''
    Normalized loss weights (c1, c2, c3)

    c1 weights proceeding to an infeasible main trial, c2 discarding a
    promising intervention and c3 making an unnecessary adjustment. Each
    weight is in [0, 1] and the weights sum to 1 (within 1e-9). Use
    `validate_loss` to accept vectors with small numerical drift.
    '''

    def __new__(cls, c1, c2, c3):
        c = np.array([c1, c2, c3], dtype=np.double)
        if not np.all(np.isfinite(c)):
            raise LossValidationError(f'Loss weights must be finite, got {tuple(c)}')
        if np.any(c < 0) or np.any(c > 1):
            raise LossValidationError(f'Loss weights must be in [0, 1], got {tuple(c)}')
        if abs(c.sum() - 1) > SUM_TOLERANCE:
            raise LossValidationError(f'Loss weights must sum to 1, got {c.sum()}')
        return super().__new__(cls, *(float(x) for x in c))

    @classmethod
    def binary(cls, c1):
        '''
        Loss weights on the edge c3 = 0 used when there is no amber decision.
        '''
        return cls(c1, 1 - c1, 0)

    def as_array(self):
        return np.array(self, dtype=np.double)

    def __str__(self):
        return f'c = ({self.c1:.4f}, {self.c2:.4f}, {self.c3:.4f})'


class IndifferencePair(namedtuple('IndifferencePair', ('p1', 'p2'))):
    '''
    The two elicited indifference probabilities. Each must be in (0, 1].
    '''

    def __new__(cls, p1, p2):
        for name, p in (('p1', p1), ('p2', p2)):
            try:
                p = float(p)
            except (TypeError, ValueError):
                raise ElicitationError(f'{name} must be a number, got {p!r}') from None
            if not np.isfinite(p) or p <= 0 or p > 1:
                raise ElicitationError(f'{name} must be in (0, 1], got {p}')
        return super().__new__(cls, float(p1), float(p2))


################################################################################
# Operations
################################################################################
def loss_from_indifference(pair):
    '''
    Solve for the loss weights implied by two indifference probabilities

    Parameters
    ----------
    pair : IndifferencePair or tuple (p1, p2)
        Indifference probabilities, each in (0, 1].

    Returns
    -------
    c : LossParams
        Weights satisfying p1*(c1 + c3) = c1, p2*(c1 + c2) = c1 and
        c1 + c2 + c3 = 1.

    >>> loss_from_indifference((0.5, 0.25))
    LossParams(c1=0.2, c2=0.6, c3=0.2)
    '''
    if not isinstance(pair, IndifferencePair):
        pair = IndifferencePair(*pair)
    p1, p2 = pair
    if p1 == 1 and p2 == 1:
        m = 'p1 = p2 = 1 puts all of the weight on infeasible trials, c = (1, 0, 0)'
        log.warning(m)
        warnings.warn(m, DegenerateLossWarning)

    # Always negative on (0, 1]^2
    denom = p1 * p2 - p1 - p2
    c1 = -p1 * p2 / denom
    c2 = (p1 * p2 - p1) / denom
    c3 = (p1 * p2 - p2) / denom
    c = LossParams(c1, c2, c3)
    log.debug('Indifference (%f, %f) gives %s', p1, p2, c)
    return c


def indifference_from_loss(c):
    '''
    Recover the indifference probabilities implied by loss weights. Inverse of
    `loss_from_indifference` for weights with c1 > 0.
    '''
    c = validate_loss(c)
    if c.c1 == 0:
        raise ElicitationError('Indifference probabilities are undefined when c1 = 0')
    return IndifferencePair(c.c1 / (c.c1 + c.c3), c.c1 / (c.c1 + c.c2))


def validate_loss(c):
    '''
    Validate an arbitrary loss vector

    Each component must be in [0, 1] and the components must sum to 1 within
    1e-6. Residual drift in the sum is removed by renormalizing.

    Parameters
    ----------
    c : sequence of three floats

    Returns
    -------
    c : LossParams

    Raises
    ------
    LossValidationError
        If any component is outside of [0, 1] or the sum is too far from 1.
    '''
    if isinstance(c, LossParams):
        return c
    try:
        c = np.asarray(c, dtype=np.double)
    except (TypeError, ValueError):
        raise LossValidationError(f'Loss vector must be numeric, got {c!r}') from None
    if c.shape != (3,):
        raise LossValidationError(f'Loss vector must have three components, got {c.tolist()}')
    if not np.all(np.isfinite(c)):
        raise LossValidationError(f'Loss vector must be finite, got {c.tolist()}')
    if np.any(c < 0) or np.any(c > 1):
        raise LossValidationError(f'Loss weights must be in [0, 1], got {c.tolist()}')
    total = c.sum()
    if abs(total - 1) > VALIDATION_TOLERANCE:
        raise LossValidationError(f'Loss weights must sum to 1, got {total}')
    return LossParams(*(c / total))
