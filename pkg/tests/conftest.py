import json

import numpy as np
import pandas as pd
import pytest

from bayespilot.conjugate import ConjugateScenario
from bayespilot.hierarchical import HierScenario
from bayespilot.mcmc import McmcConfig
from bayespilot.ocengine import PosteriorProbMatrix
from bayespilot.stats import RngStream


def pytest_addoption(parser):
    parser.addoption('--slow', action='store_true', dest='slow', default=False,
                     help='Enable slow-running tests')


def pytest_collection_modifyitems(config, items):
    if not config.getoption('--slow'):
        skip_slow = pytest.mark.skip(reason='Test runs very slowly. Use --slow to run.')
        for item in items:
            if 'slow' in item.keywords:
                item.add_marker(skip_slow)


@pytest.fixture
def stream():
    return RngStream(20240101)


@pytest.fixture
def conjugate_scenario():
    return ConjugateScenario(n_per_arm=30)


@pytest.fixture
def quick_mcmc():
    return McmcConfig(chains=2, iterations=300, burnin=150)


@pytest.fixture
def hier_scenario(quick_mcmc):
    return HierScenario(k=4, mcmc=quick_mcmc)


@pytest.fixture
def hand_matrix():
    '''
    Four replicates whose decisions under c = (0.2, 0.6, 0.2) are g, r, a and
    g with true labels R, G, A and G.
    '''
    table = pd.DataFrame({
        'replicate': [0, 1, 2, 3],
        'label': [0, 2, 1, 2],
        'p_R': [0.05, 0.9, 0.3, 0.0],
        'p_A': [0.05, 0.05, 0.6, 0.1],
        'p_G': [0.9, 0.05, 0.1, 0.9],
        'converged': [True, True, False, True],
        'max_rhat': [1.0, 1.0, 1.2, 1.0],
    })
    return PosteriorProbMatrix(table, 'abc123', 'hand', binary=False)


@pytest.fixture
def conjugate_config(tmp_path):
    config = {
        'model': 'conjugate',
        'n_per_arm': 30,
        'N': 500,
        'seed': 7,
    }
    path = tmp_path / 'conjugate.json'
    path.write_text(json.dumps(config))
    return path


@pytest.fixture
def hier_config(tmp_path):
    config = {
        'model': 'hierarchical',
        'k': 3,
        'analysis_prior': 'IN',
        'mcmc': {'chains': 2, 'iterations': 200, 'burnin': 100},
        'N': 8,
        'seed': 3,
        'max_unconverged_fraction': 1.0,
    }
    path = tmp_path / 'hier.json'
    path.write_text(json.dumps(config))
    return path
