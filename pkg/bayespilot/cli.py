'''
Command-line front-end

Each subcommand writes one CSV table, either to stdout or (with `--out`) to a
file accompanied by a `.manifest.json` provenance record. Errors are reported
on stderr and mapped to the exit status:

    0  success
    1  unexpected error
    2  invalid input or configuration
    3  computation too large for the selected path
    4  too many replicates failed the convergence check (outputs are still
       written)
'''
import logging
log = logging.getLogger(__name__)

import argparse
import sys

import joblib
import pandas as pd

from . import __version__
from .config import ConfigError, RunManifest, ScenarioConfig
from .conjugate import ConjugateScenario, exact_ocs
from .elicitation import (
    IndifferencePair, LossParams, loss_from_indifference, validate_loss
)
from .ocengine import (
    DesignError, PosteriorProbMatrix, build_matrix, check_convergence,
    compare_analysis_priors, evaluate_candidates, front_frame, ocs_for_loss,
    pareto_front, prior_proportions, report_frame, sample_size_sweep
)
from .stats import RngStream
from .util import (
    PilotError, atomic_write_text, frame_to_csv, parse_float_grid,
    parse_float_list, parse_int_list
)


#: Stream paths reserved for draws that are not part of a replicate
CANDIDATE_STREAM = (1000,)
PRIOR_STREAM = (1001,)


################################################################################
# Helpers
################################################################################
def configure_logging(verbosity):
    level = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}.get(verbosity, logging.TRACE)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    logging.captureWarnings(True)


def load_config(args, required=True):
    if args.config is None:
        if required:
            raise ConfigError(f'The {args.command} command requires --config')
        return None
    config = ScenarioConfig.load(args.config)
    return config.replace(seed=args.seed, threads=args.threads)


def get_threads(args, config=None):
    if args.threads is not None:
        threads = args.threads
    elif config is not None and config.threads is not None:
        threads = config.threads
    else:
        threads = joblib.cpu_count()
    if threads < 1:
        raise ConfigError(f'--threads must be at least 1, got {threads}')
    return threads


def get_seed(args, config=None):
    if args.seed is not None:
        return args.seed
    if config is not None:
        return config.seed
    return 0


def get_cb(args):
    return 'tqdm' if args.progress else None


def parse_option(parse, value, option):
    try:
        return parse(value)
    except ValueError:
        raise ConfigError(f'Could not parse {option} {value!r}') from None


def loss_vectors(args):
    '''
    Collect the loss vectors given by --c, --c1 and --p1/--p2 (in that order).
    '''
    cs = [validate_loss(parse_option(parse_float_list, c, '--c')) for c in (args.c or [])]
    if args.c1 is not None:
        c1_grid = parse_option(parse_float_grid, args.c1, '--c1')
        cs.extend(LossParams.binary(c1) for c1 in c1_grid)
    if (args.p1 is None) != (args.p2 is None):
        raise ConfigError('--p1 and --p2 must be given together')
    if args.p1 is not None:
        cs.append(loss_from_indifference(IndifferencePair(args.p1, args.p2)))
    if not cs:
        raise ConfigError('No loss vector given. Use --c, --c1 or --p1 and --p2.')
    return cs


def load_matrix(args, config=None):
    try:
        matrix = PosteriorProbMatrix.from_csv(args.matrix)
    except OSError as e:
        raise ConfigError(f'Could not read matrix {args.matrix}: {e.strerror or e}') from e
    if config is not None:
        matrix.check_fingerprint(config.fingerprint)
    if matrix.n_unconverged:
        log.warning('%d of %d rows of %s did not converge', matrix.n_unconverged,
                    matrix.N, args.matrix)
    return matrix


def write_output(args, manifest, text, extra_outputs=()):
    if not isinstance(text, str):
        text = frame_to_csv(text)
    if args.out is None:
        sys.stdout.write(text)
        return
    atomic_write_text(args.out, text)
    manifest.finish(args.out, *extra_outputs)
    manifest.write(args.out)


def check_all_converged(matrices, config):
    '''
    Raise ConvergenceError for the first matrix with too many non-converged
    rows. Called after the outputs are written.
    '''
    for matrix in matrices:
        check_convergence(matrix, config.max_unconverged_fraction)


################################################################################
# Subcommands
################################################################################
def cmd_elicit(args):
    manifest = RunManifest.start('elicit')
    pair = IndifferencePair(args.p1, args.p2)
    c = loss_from_indifference(pair)
    log.info('Indifference probabilities %r give %s', pair, c)
    df = pd.DataFrame([{'p1': pair.p1, 'p2': pair.p2, **c._asdict()}])
    write_output(args, manifest, df)


def cmd_matrix(args):
    config = load_config(args)
    manifest = RunManifest.start('matrix', config)
    scenario = config.build_scenario()
    matrix = build_matrix(scenario, config.N, config.stream,
                          threads=get_threads(args, config), cb=get_cb(args),
                          fingerprint=config.fingerprint)
    write_output(args, manifest, matrix.to_text())
    check_all_converged([matrix], config)


def cmd_ocs(args):
    config = load_config(args, required=False)
    manifest = RunManifest.start('ocs', config, get_seed(args, config))
    matrix = load_matrix(args, config)
    cs = loss_vectors(args)
    reports = [ocs_for_loss(matrix, c) for c in cs]
    write_output(args, manifest, report_frame(cs, reports))


def cmd_pareto(args):
    config = load_config(args, required=False)
    seed = get_seed(args, config)
    manifest = RunManifest.start('pareto', config, seed)
    matrix = load_matrix(args, config)
    stream = RngStream(seed, 0, CANDIDATE_STREAM)
    if args.all:
        df = evaluate_candidates(matrix, args.candidates, stream)
    else:
        df = front_frame(pareto_front(matrix, args.candidates, stream))
    write_output(args, manifest, df)


def cmd_sweep(args):
    config = load_config(args)
    manifest = RunManifest.start('sweep', config)
    sizes = parse_option(parse_int_list, args.sizes, '--sizes')
    df, matrices = sample_size_sweep(
        config.build_scenario(), sizes, loss_vectors(args), config.N,
        config.stream, threads=get_threads(args, config),
        max_posterior_draws=config.max_posterior_draws, cb=get_cb(args))
    write_output(args, manifest, df)
    check_all_converged(matrices, config)


def cmd_prior(args):
    config = load_config(args)
    manifest = RunManifest.start('prior', config)
    N = config.N if args.n is None else args.n
    stream = RngStream(config.seed, 0, PRIOR_STREAM)
    summary, draws = prior_proportions(config.build_scenario(), N, stream)
    extra = []
    if args.draws is not None:
        atomic_write_text(args.draws, frame_to_csv(draws))
        extra.append(args.draws)
    write_output(args, manifest, summary, extra)


def cmd_compare(args):
    config = load_config(args)
    manifest = RunManifest.start('compare', config)
    presets = [p.strip() for p in args.presets.split(',') if p.strip()]
    df, matrices = compare_analysis_priors(
        config.build_scenario(), presets, loss_vectors(args), config.N,
        config.stream, threads=get_threads(args, config), cb=get_cb(args))
    write_output(args, manifest, df)
    check_all_converged(matrices.values(), config)


def cmd_exact(args):
    config = load_config(args)
    manifest = RunManifest.start('exact', config)
    scenario = config.build_scenario()
    if not isinstance(scenario, ConjugateScenario):
        raise DesignError('Exact operating characteristics are only available '
                          'for the conjugate model')
    c1_grid = parse_option(parse_float_grid, args.c1, '--c1')
    reports = [exact_ocs(scenario, c1, args.grid_resolution) for c1 in c1_grid]
    cs = [LossParams.binary(c1) for c1 in c1_grid]
    write_output(args, manifest, report_frame(cs, reports))


################################################################################
# Parser
################################################################################
def add_loss_arguments(parser):
    group = parser.add_argument_group('loss vectors')
    group.add_argument('--c', action='append', metavar='C1,C2,C3',
                       help='Loss vector (may be repeated)')
    group.add_argument('--c1', metavar='LIST',
                       help='Binary loss vectors (c1, 1 - c1, 0). Either a '
                       'comma-separated list or a grid start:stop:num.')
    group.add_argument('--p1', type=float,
                       help='Indifference probability between a and g')
    group.add_argument('--p2', type=float,
                       help='Indifference probability between r and a')


def make_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Scenario configuration (JSON)')
    common.add_argument('--seed', type=int, help='Override the configured seed')
    common.add_argument('--threads', type=int,
                        help='Worker processes (default: configured value or all cores)')
    common.add_argument('--out', help='Output file (default: stdout)')
    common.add_argument('--progress', action='store_true',
                        help='Show a progress bar (requires tqdm)')
    common.add_argument('-v', '--verbose', action='count', default=0,
                        help='Increase logging verbosity (repeatable)')

    parser = argparse.ArgumentParser(
        prog='bayespilot',
        description='Bayesian decision rules for pilot trials')
    parser.add_argument('--version', action='version', version=__version__)
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('elicit', parents=[common],
                       help='Loss vector from two indifference probabilities')
    p.add_argument('--p1', type=float, required=True,
                   help='Indifference probability between a and g')
    p.add_argument('--p2', type=float, required=True,
                   help='Indifference probability between r and a')
    p.set_defaults(func=cmd_elicit)

    p = sub.add_parser('matrix', parents=[common],
                       help='Simulate the posterior probability matrix')
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser('ocs', parents=[common],
                       help='Operating characteristics of loss vectors')
    p.add_argument('--matrix', required=True, help='Matrix file')
    add_loss_arguments(p)
    p.set_defaults(func=cmd_ocs)

    p = sub.add_parser('pareto', parents=[common],
                       help='Non-dominated loss vectors among random candidates')
    p.add_argument('--matrix', required=True, help='Matrix file')
    p.add_argument('--candidates', type=int, default=254,
                   help='Number of candidate loss vectors')
    p.add_argument('--all', action='store_true',
                   help='Write every candidate with a dominated flag')
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser('sweep', parents=[common],
                       help='Operating characteristics across pilot sizes')
    p.add_argument('--sizes', required=True,
                   help='Comma-separated sizes or ranges start:stop:step')
    add_loss_arguments(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('prior', parents=[common],
                       help='Hypothesis proportions under the design prior')
    p.add_argument('--n', type=int, help='Number of draws (default: N)')
    p.add_argument('--draws', help='Also write the labelled draws to this file')
    p.set_defaults(func=cmd_prior)

    p = sub.add_parser('compare', parents=[common],
                       help='Compare analysis priors on shared simulations')
    p.add_argument('--presets', default='WI,IN,INA',
                   help='Comma-separated analysis-prior presets')
    add_loss_arguments(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser('exact', parents=[common],
                       help='Exact operating characteristics (conjugate model)')
    p.add_argument('--c1', default='0:1:51',
                   help='Comma-separated list or grid start:stop:num')
    p.add_argument('--grid-resolution', type=int, default=200,
                   help='Quadrature nodes on each side of each threshold')
    p.set_defaults(func=cmd_exact)
    return parser


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    configure_logging(args.verbose)
    try:
        args.func(args)
    except PilotError as e:
        log.debug('Command failed', exc_info=True)
        print(f'bayespilot {args.command}: error: {e}', file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
