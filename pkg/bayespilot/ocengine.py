'''
Operating characteristics by nested Monte Carlo

The expensive step is building a `PosteriorProbMatrix`: for each replicate a
parameter vector is drawn from the design prior, a pilot trial is simulated
from it and then analysed to obtain the posterior hypothesis probabilities.
Once the matrix is available, the operating characteristics of any loss
vector cost a single vectorized pass over the rows. All of the loss-parameter
searches below reuse one matrix.
'''
import logging
log = logging.getLogger(__name__)

from collections import namedtuple
import io
import json
import math

from joblib import Parallel, delayed
import numpy as np
import pandas as pd

from .decision import (
    ERROR_TABLE, Decision, HypothesisLabel, HypothesisProbs, decide_many,
    loss_table
)
from .elicitation import LossParams, validate_loss
from . import util
from .util import CapacityError, PilotError, canonical_json, frame_to_csv, get_cb


################################################################################
# Exceptions
################################################################################
class DesignError(PilotError, ValueError):
    '''
    Raised when a simulation request is malformed (e.g., no replicates or an
    empty list of sample sizes).
    '''
    exit_code = 2


class ConvergenceError(PilotError):
    '''
    Raised when too many replicates of a matrix failed the MCMC convergence
    check.
    '''
    exit_code = 4


class MatrixMismatchError(PilotError, ValueError):
    exit_code = 2


################################################################################
# Types
################################################################################
AnalysisResult = namedtuple('AnalysisResult', ('probs', 'converged', 'max_rhat'))


OCReport = namedtuple('OCReport', (
    'oc1', 'oc2', 'oc3', 'expected_loss', 'se1', 'se2', 'se3', 'se_loss',
    'n_replicates', 'n_unconverged',
))


ParetoPoint = namedtuple('ParetoPoint', ('c', 'report'))


REPORT_COLUMNS = ['c1', 'c2', 'c3'] + list(OCReport._fields)
PROB_COLUMNS = ['p_R', 'p_A', 'p_G']


def report_frame(cs, reports, **extra):
    '''
    Tabulate loss vectors and their reports using the documented column order.
    Additional keyword arguments are prepended as constant columns.
    '''
    rows = [dict(zip(('c1', 'c2', 'c3'), c), **r._asdict()) for c, r in zip(cs, reports)]
    df = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    for i, (name, value) in enumerate(extra.items()):
        df.insert(i, name, value)
    return df


class BaseScenario:
    '''
    Interface shared by the pilot models

    A scenario knows how to draw parameters from its design prior, simulate a
    pilot trial, label the true parameters and analyse the simulated data.
    Subclasses must set `model`, `binary` and `param_names` and implement the
    methods below.
    '''
    model = None

    #: True if the hypothesis partition has no amber region
    binary = False

    #: Names of the parameters drawn by `sample_params`
    param_names = ()

    #: Number of posterior draws generated by each call to `analyse`
    posterior_draws = 0

    @property
    def size(self):
        raise NotImplementedError

    def with_size(self, size):
        raise NotImplementedError

    def as_dict(self):
        raise NotImplementedError

    def sample_params(self, stream):
        raise NotImplementedError

    def simulate(self, params, stream):
        raise NotImplementedError

    def true_label(self, params):
        raise NotImplementedError

    def analyse(self, data, stream):
        raise NotImplementedError

    def prior_draws(self, N, stream):
        raise NotImplementedError

    def label_columns(self, draws):
        raise NotImplementedError

    def run_replicate(self, stream):
        '''
        Run one replicate of the nested simulation

        The parameters, the data and the analysis each use their own child of
        `stream`. Analyses with different priors therefore see identical
        datasets.
        '''
        params = self.sample_params(stream.child(0))
        data = self.simulate(params, stream.child(1))
        label = self.true_label(params)
        result = self.analyse(data, stream.child(2))
        row = {
            'replicate': stream.substream_id,
            'label': int(label),
            'p_R': result.probs.pR,
            'p_A': result.probs.pA,
            'p_G': result.probs.pG,
            'converged': bool(result.converged),
            'max_rhat': float(result.max_rhat),
        }
        row.update(params)
        return row

    def fingerprint(self):
        return util.fingerprint(self.as_dict())


class PosteriorProbMatrix:
    '''
    Posterior hypothesis probabilities for N simulated pilot trials

    Parameters
    ----------
    table : DataFrame
        One row per replicate with columns `replicate`, `label`, `p_R`, `p_A`,
        `p_G`, `converged` and `max_rhat` followed by the true parameter
        values.
    fingerprint : str
        Hash of the configuration that generated the matrix.
    model : str
        Name of the generating model.
    binary : bool
        True if the hypothesis partition has no amber region.
    '''
    required_columns = ['replicate', 'label'] + PROB_COLUMNS + ['converged', 'max_rhat']

    def __init__(self, table, fingerprint, model, binary=False):
        missing = set(self.required_columns) - set(table.columns)
        if missing:
            raise DesignError(f'Matrix is missing columns {sorted(missing)}')
        if len(table) < 1:
            raise DesignError('Matrix must have at least one row')
        probs = table[PROB_COLUMNS].values
        if not np.allclose(probs.sum(axis=1), 1, rtol=0, atol=1e-6):
            raise DesignError('Posterior probabilities of every row must sum to 1')
        self.table = table.reset_index(drop=True)
        self.fingerprint = fingerprint
        self.model = model
        self.binary = bool(binary)

        # Cached for repeated evaluation of loss vectors
        self._probs = np.ascontiguousarray(probs, dtype=np.double)
        self._labels = table['label'].values.astype(int)
        self._probs.setflags(write=False)
        self._labels.setflags(write=False)

    @property
    def N(self):
        return len(self.table)

    @property
    def probs(self):
        return self._probs

    @property
    def labels(self):
        return self._labels

    @property
    def converged(self):
        return self.table['converged'].values.astype(bool)

    @property
    def n_unconverged(self):
        return int((~self.converged).sum())

    def row(self, i):
        '''
        Return replicate id, true label and posterior probabilities of row i.
        '''
        r = self.table.iloc[i]
        return (int(r['replicate']), HypothesisLabel(int(r['label'])),
                HypothesisProbs(r['p_R'], r['p_A'], r['p_G']))

    def header(self):
        return {
            'fingerprint': self.fingerprint,
            'model': self.model,
            'binary': self.binary,
            'n_replicates': self.N,
        }

    def to_text(self):
        return '# ' + canonical_json(self.header()) + '\n' + frame_to_csv(self.table)

    def to_csv(self, path):
        util.atomic_write_text(path, self.to_text())

    @classmethod
    def from_text(cls, text):
        first, _, body = text.partition('\n')
        if not first.startswith('# '):
            raise DesignError('Matrix file does not start with a JSON header line')
        try:
            header = json.loads(first[2:])
            # The round-trip parser reads the %.17g text back bit for bit
            table = pd.read_csv(io.StringIO(body), float_precision='round_trip')
            table['converged'] = table['converged'].astype(bool)
            matrix = cls(table, header['fingerprint'], header['model'],
                         header.get('binary', False))
        except (ValueError, KeyError, TypeError, pd.errors.ParserError) as e:
            raise DesignError(f'Matrix file is malformed: {e}') from e
        if matrix.N != header.get('n_replicates', matrix.N):
            raise DesignError('Matrix file is truncated')
        return matrix

    @classmethod
    def from_csv(cls, path):
        with open(path, newline='') as fh:
            return cls.from_text(fh.read())

    def check_fingerprint(self, expected):
        if expected != self.fingerprint:
            raise MatrixMismatchError('Matrix was generated by a different configuration '
                                      f'({self.fingerprint[:12]} vs {expected[:12]})')

    def __repr__(self):
        return f'<PosteriorProbMatrix {self.model} N={self.N} fingerprint={self.fingerprint[:12]}>'


################################################################################
# Matrix construction
################################################################################
def _run_block(scenario, stream, replicates):
    return [scenario.run_replicate(stream.substream(k)) for k in replicates]


def build_matrix(scenario, N, stream, threads=1, cb=None, fingerprint=None):
    '''
    Simulate N pilot trials and record their posterior hypothesis probabilities

    Parameters
    ----------
    scenario : BaseScenario
        Pilot model to simulate.
    N : int
        Number of replicates.
    stream : RngStream
        Replicate k uses `stream.substream(k)`, so the matrix does not depend
        on `threads`.
    threads : int
        Number of worker processes. If 1, replicates run in the calling
        process.
    cb : {None, 'tqdm', callable}
        Progress callback (see `util.get_cb`).
    fingerprint : {None, str}
        Hash recorded in the matrix header. Defaults to a hash of the scenario,
        N and the stream identity.

    Returns
    -------
    matrix : PosteriorProbMatrix
    '''
    if int(N) != N or N < 1:
        raise DesignError(f'N must be a positive integer, got {N}')
    N = int(N)
    if N < 100:
        log.warning('Building a matrix with only %d replicates', N)
    if fingerprint is None:
        fingerprint = util.fingerprint({
            'scenario': scenario.as_dict(),
            'N': N,
            'stream': stream.key,
        })

    cb = get_cb(cb, f'{N} replicates')
    threads = max(1, int(threads))
    n_blocks = min(N, threads * 8)
    blocks = np.array_split(np.arange(N), n_blocks)

    rows = []
    if threads == 1:
        for i, block in enumerate(blocks):
            rows.extend(_run_block(scenario, stream, block))
            cb((i + 1) / n_blocks)
    else:
        results = Parallel(n_jobs=threads, return_as='generator')(
            delayed(_run_block)(scenario, stream, block) for block in blocks
        )
        for i, block_rows in enumerate(results):
            rows.extend(block_rows)
            cb((i + 1) / n_blocks)

    columns = PosteriorProbMatrix.required_columns + list(scenario.param_names)
    table = pd.DataFrame(rows, columns=columns)
    matrix = PosteriorProbMatrix(table, fingerprint, scenario.model, scenario.binary)
    if matrix.n_unconverged:
        log.warning('%d of %d replicates did not converge', matrix.n_unconverged, N)
    log.info('Built %r', matrix)
    return matrix


def check_convergence(matrix, max_unconverged_fraction):
    '''
    Raise ConvergenceError if the fraction of non-converged rows is above the
    threshold.
    '''
    fraction = matrix.n_unconverged / matrix.N
    if fraction > max_unconverged_fraction:
        raise ConvergenceError(f'{matrix.n_unconverged} of {matrix.N} replicates '
                               f'({fraction:.1%}) did not converge; the limit is '
                               f'{max_unconverged_fraction:.1%}')


################################################################################
# Operating characteristics
################################################################################
def _decisions(matrix, c):
    return decide_many(matrix.probs, c)


def ocs_for_loss(matrix, c):
    '''
    Operating characteristics of the expected-loss rule for loss vector c

    Parameters
    ----------
    matrix : PosteriorProbMatrix
    c : LossParams or sequence of three floats

    Returns
    -------
    report : OCReport
        OC1, OC2 and OC3 are the fractions of replicates in which the decision
        led to an infeasible main trial, discarded a promising intervention
        and made an unnecessary adjustment. Standard errors are binomial,
        sqrt(p(1 - p)/N). Non-converged replicates are included and counted.
    '''
    c = validate_loss(c)
    d = _decisions(matrix, c)
    h = matrix.labels
    errors = ERROR_TABLE[d, h]
    N = matrix.N
    oc = errors.mean(axis=0)
    se = np.sqrt(oc * (1 - oc) / N)
    losses = loss_table(c)[d, h]
    se_loss = losses.std(ddof=1) / math.sqrt(N) if N > 1 else 0.0
    return OCReport(oc1=float(oc[0]), oc2=float(oc[1]), oc3=float(oc[2]),
                    se1=float(se[0]), se2=float(se[1]), se3=float(se[2]),
                    expected_loss=float(losses.mean()), se_loss=float(se_loss),
                    n_replicates=N, n_unconverged=matrix.n_unconverged)


def decision_counts(matrix, c):
    '''
    Cross-tabulation of decisions against true hypotheses for loss vector c.
    '''
    d = _decisions(matrix, validate_loss(c))
    table = np.zeros((3, 3), dtype=int)
    np.add.at(table, (d, matrix.labels), 1)
    return pd.DataFrame(table, index=[x.name for x in Decision],
                        columns=[x.name for x in HypothesisLabel])


def oc_curve(matrix, c1_grid):
    '''
    Operating characteristics along the edge c = (c1, 1 - c1, 0).
    '''
    cs = [LossParams.binary(c1) for c1 in c1_grid]
    return report_frame(cs, [ocs_for_loss(matrix, c) for c in cs])


################################################################################
# Loss-parameter search
################################################################################
def sample_simplex(n, stream):
    '''
    Draw n loss vectors uniformly from the 2-simplex.
    '''
    c = stream.generator.dirichlet(np.ones(3), size=n)
    return [validate_loss(x) for x in c]


def dominated_mask(ocs):
    '''
    Flag rows of `ocs` (shape (K, 3)) that are dominated by another row

    Row i dominates row j if it is no worse on every OC and strictly better on
    at least one. Comparisons are exact.
    '''
    ocs = np.asarray(ocs, dtype=np.double)
    le = np.all(ocs[:, np.newaxis] <= ocs[np.newaxis], axis=-1)
    lt = np.any(ocs[:, np.newaxis] < ocs[np.newaxis], axis=-1)
    dominates = le & lt
    return dominates.any(axis=0)


def _evaluate(matrix, num_candidates, stream):
    if num_candidates < 2:
        raise DesignError(f'At least two candidates are required, got {num_candidates}')
    cs = sample_simplex(num_candidates, stream)
    reports = [ocs_for_loss(matrix, c) for c in cs]
    mask = dominated_mask([r[:3] for r in reports])
    log.info('%d of %d candidate loss vectors are dominated', mask.sum(),
             num_candidates)
    return cs, reports, mask


def evaluate_candidates(matrix, num_candidates, stream):
    '''
    Evaluate randomly sampled loss vectors on one matrix

    Returns
    -------
    candidates : DataFrame
        One row per sampled loss vector (in sampling order) with the report
        columns and a boolean `dominated` column.
    '''
    cs, reports, mask = _evaluate(matrix, num_candidates, stream)
    df = report_frame(cs, reports)
    df['dominated'] = mask
    return df


def pareto_filter(points):
    '''
    Remove dominated points and sort the survivors by OC1 (ties broken by OC2,
    OC3, c1 then c2).
    '''
    points = list(points)
    if not points:
        return []
    mask = dominated_mask([p.report[:3] for p in points])
    front = [p for p, d in zip(points, mask) if not d]
    return sorted(front, key=lambda p: (p.report.oc1, p.report.oc2,
                                        p.report.oc3, p.c.c1, p.c.c2))


def pareto_front(matrix, num_candidates, stream):
    '''
    Non-dominated loss vectors among `num_candidates` uniform simplex samples

    Parameters
    ----------
    matrix : PosteriorProbMatrix
    num_candidates : int
        Number of loss vectors to sample (at least 2).
    stream : RngStream
        Source of the candidate vectors.

    Returns
    -------
    front : list of ParetoPoint
        Sorted by OC1 (ties broken by OC2, OC3, c1 then c2).
    '''
    cs, reports, _ = _evaluate(matrix, num_candidates, stream)
    return pareto_filter(ParetoPoint(c, r) for c, r in zip(cs, reports))


def front_frame(points):
    return report_frame([p.c for p in points], [p.report for p in points])


################################################################################
# Sample size and prior comparisons
################################################################################
def _as_loss_list(c):
    if isinstance(c, LossParams):
        return [c]
    c = list(c)
    if len(c) == 3 and all(np.isscalar(x) for x in c):
        return [validate_loss(c)]
    return [validate_loss(x) for x in c]


def sample_size_sweep(scenario, sizes, c, N, stream, threads=1,
                      max_posterior_draws=None, cb=None):
    '''
    Operating characteristics as a function of pilot size

    Parameters
    ----------
    scenario : BaseScenario
        Template scenario. `scenario.with_size(size)` is simulated for each
        size.
    sizes : list of int
        Pilot sizes (participants or clusters per arm).
    c : LossParams or list of LossParams
        Loss vector(s) to evaluate on each matrix.
    N : int
        Replicates per size.
    stream : RngStream
        The i-th size uses `stream.child(i)`.
    max_posterior_draws : {None, int}
        Upper bound on the total number of posterior draws over the sweep.

    Returns
    -------
    sweep : DataFrame
        One row per (size, loss vector) with a leading `size` column.
    matrices : list of PosteriorProbMatrix
    '''
    sizes = list(sizes)
    if not sizes:
        raise DesignError('At least one sample size is required')
    cs = _as_loss_list(c)
    scenarios = [scenario.with_size(s) for s in sizes]
    total = sum(s.posterior_draws for s in scenarios) * N
    if max_posterior_draws is not None and total > max_posterior_draws:
        raise CapacityError(f'The sweep requires {total:.3g} posterior draws, '
                            f'above the limit of {max_posterior_draws:.3g}. '
                            'Reduce N, the number of sizes or the MCMC length.')

    frames, matrices = [], []
    for i, (size, s) in enumerate(zip(sizes, scenarios)):
        log.info('Sweep size %d (%d of %d)', size, i + 1, len(sizes))
        matrix = build_matrix(s, N, stream.child(i), threads=threads, cb=cb)
        reports = [ocs_for_loss(matrix, ci) for ci in cs]
        frames.append(report_frame(cs, reports, size=size))
        matrices.append(matrix)
    return pd.concat(frames, ignore_index=True), matrices


def compare_analysis_priors(scenario, presets, cs, N, stream, threads=1,
                            cb=None):
    '''
    Re-analyse the same simulated pilots under several analysis priors

    Parameters
    ----------
    scenario : BaseScenario
        Must implement `with_analysis_prior(preset)`.
    presets : list of str
        Analysis-prior presets to compare.
    cs : list of LossParams
        Loss vectors evaluated on every matrix.

    Returns
    -------
    comparison : DataFrame
        One row per (prior, loss vector) with a leading `prior` column.
    matrices : dict
        Matrix built under each preset.
    '''
    if not hasattr(scenario, 'with_analysis_prior'):
        raise DesignError(f'The {scenario.model} model has no analysis-prior presets')
    presets = list(presets)
    if not presets:
        raise DesignError('At least one analysis prior is required')
    cs = _as_loss_list(cs)
    frames, matrices = [], {}
    for preset in presets:
        s = scenario.with_analysis_prior(preset)
        # Same stream for every preset, so parameters and data are shared
        matrix = build_matrix(s, N, stream, threads=threads, cb=cb)
        reports = [ocs_for_loss(matrix, c) for c in cs]
        frames.append(report_frame(cs, reports, prior=preset))
        matrices[preset] = matrix
    return pd.concat(frames, ignore_index=True), matrices


def prior_proportions(scenario, N, stream):
    '''
    Hypothesis proportions under the design prior

    Returns
    -------
    summary : DataFrame
        One row per partition component (e.g., info, efficacy and combined)
        with the proportion of draws labelled R, A and G and their binomial
        standard errors.
    draws : DataFrame
        The parameter draws with one label column per component.
    '''
    if int(N) != N or N < 1:
        raise DesignError(f'N must be a positive integer, got {N}')
    draws = scenario.prior_draws(int(N), stream)
    rows = []
    for name, labels in scenario.label_columns(draws).items():
        draws[f'label_{name}'] = labels
        row = {'component': name}
        counts = np.bincount(np.asarray(labels, dtype=int), minlength=3)
        for h in HypothesisLabel:
            p = counts[h] / N
            row[h.name] = p
            row[f'se_{h.name}'] = math.sqrt(p * (1 - p) / N)
        rows.append(row)
    summary = pd.DataFrame(rows)
    return summary, draws
