import io
import json

import pytest

import pandas as pd

from bayespilot import cli
from bayespilot.conjugate import ConjugateScenario
from bayespilot.config import RunManifest
from bayespilot.ocengine import AnalysisResult, PosteriorProbMatrix, REPORT_COLUMNS


def run(*args):
    return cli.main([str(a) for a in args])


def read_stdout(capsys):
    return pd.read_csv(io.StringIO(capsys.readouterr().out))


@pytest.fixture
def matrix_file(tmp_path, conjugate_config):
    path = tmp_path / 'matrix.csv'
    assert run('matrix', '--config', conjugate_config, '--out', path, '--threads', 1) == 0
    return path


def test_elicit(capsys):
    assert run('elicit', '--p1', 0.5, '--p2', 0.25) == 0
    df = read_stdout(capsys)
    assert list(df.columns) == ['p1', 'p2', 'c1', 'c2', 'c3']
    assert df.loc[0, 'c1'] == pytest.approx(0.2)
    assert df.loc[0, 'c2'] == pytest.approx(0.6)
    assert df.loc[0, 'c3'] == pytest.approx(0.2)


def test_elicit_invalid(capsys):
    assert run('elicit', '--p1', 0, '--p2', 0.5) == 2
    assert 'p1' in capsys.readouterr().err


def test_usage_error():
    assert run('elicit', '--p1', 0.5) == 2
    assert run('unknown') == 2


def test_matrix(matrix_file, conjugate_config):
    matrix = PosteriorProbMatrix.from_csv(matrix_file)
    assert matrix.N == 500
    assert matrix.model == 'conjugate'
    manifest = RunManifest.read(RunManifest.path_for(matrix_file))
    assert manifest.config_hash == matrix.fingerprint
    assert manifest.seed == 7
    assert manifest.outputs == [str(matrix_file)]


def test_matrix_reproducible(tmp_path, conjugate_config, matrix_file):
    other = tmp_path / 'matrix_4.csv'
    assert run('matrix', '--config', conjugate_config, '--out', other, '--threads', 4) == 0
    assert other.read_bytes() == matrix_file.read_bytes()

    reseeded = tmp_path / 'matrix_seed.csv'
    assert run('matrix', '--config', conjugate_config, '--out', reseeded,
               '--threads', 1, '--seed', 8) == 0
    assert reseeded.read_bytes() != matrix_file.read_bytes()


def test_matrix_requires_config(tmp_path):
    assert run('matrix', '--out', tmp_path / 'm.csv') == 2


def test_matrix_convergence_failure(tmp_path, conjugate_config, monkeypatch):
    def analyse(self, data, stream):
        result = original(self, data, stream)
        return AnalysisResult(result.probs, False, 1.5)

    original = ConjugateScenario.analyse
    monkeypatch.setattr(ConjugateScenario, 'analyse', analyse)
    path = tmp_path / 'matrix.csv'
    assert run('matrix', '--config', conjugate_config, '--out', path, '--threads', 1) == 4
    # Outputs are written before the check
    matrix = PosteriorProbMatrix.from_csv(path)
    assert matrix.n_unconverged == 500


def test_ocs(capsys, matrix_file, conjugate_config):
    assert run('ocs', '--matrix', matrix_file, '--c1', '0.2,0.5', '--c', '0.2,0.6,0.2') == 0
    df = read_stdout(capsys)
    assert list(df.columns) == REPORT_COLUMNS
    assert len(df) == 3
    assert list(df['c1']) == pytest.approx([0.2, 0.2, 0.5])
    assert (df['n_replicates'] == 500).all()

    assert run('ocs', '--matrix', matrix_file, '--config', conjugate_config,
               '--p1', 0.5, '--p2', 0.25) == 0
    df = read_stdout(capsys)
    assert df.loc[0, 'c2'] == pytest.approx(0.6)


def test_ocs_grid(tmp_path, matrix_file):
    out = tmp_path / 'curve.csv'
    assert run('ocs', '--matrix', matrix_file, '--c1', '0:1:11', '--out', out) == 0
    df = pd.read_csv(out)
    assert len(df) == 11
    assert RunManifest.path_for(out).exists()


def test_ocs_errors(matrix_file, conjugate_config):
    assert run('ocs', '--matrix', matrix_file) == 2
    assert run('ocs', '--matrix', matrix_file, '--c', '0.5,0.5,0.5') == 2
    assert run('ocs', '--matrix', matrix_file, '--p1', 0.5) == 2
    # Fingerprint mismatch
    assert run('ocs', '--matrix', matrix_file, '--config', conjugate_config,
               '--seed', 9, '--c1', 0.2) == 2


def test_pareto(capsys, matrix_file):
    assert run('pareto', '--matrix', matrix_file, '--candidates', 50) == 0
    front = read_stdout(capsys)
    assert list(front.columns) == REPORT_COLUMNS
    assert list(front['oc1']) == sorted(front['oc1'])

    assert run('pareto', '--matrix', matrix_file, '--candidates', 50, '--all') == 0
    candidates = read_stdout(capsys)
    assert len(candidates) == 50
    assert (~candidates['dominated']).sum() == len(front)

    assert run('pareto', '--matrix', matrix_file, '--candidates', 1) == 2


def test_sweep(capsys, conjugate_config):
    assert run('sweep', '--config', conjugate_config, '--sizes', '10,20',
               '--c1', 0.2, '--threads', 1) == 0
    df = read_stdout(capsys)
    assert list(df['size']) == [10, 20]
    assert list(df.columns) == ['size'] + REPORT_COLUMNS


def test_prior(tmp_path, conjugate_config):
    out = tmp_path / 'prior.csv'
    draws = tmp_path / 'draws.csv'
    assert run('prior', '--config', conjugate_config, '--n', 2000,
               '--out', out, '--draws', draws) == 0
    summary = pd.read_csv(out)
    assert list(summary['component']) == ['combined']
    assert len(pd.read_csv(draws)) == 2000
    manifest = json.loads(RunManifest.path_for(out).read_text())
    assert manifest['outputs'] == [str(out), str(draws)]


def test_exact(capsys, conjugate_config, hier_config):
    assert run('exact', '--config', conjugate_config, '--c1', 0.2) == 0
    df = read_stdout(capsys)
    assert abs(df.loc[0, 'oc1'] - 0.19) < 0.01
    assert abs(df.loc[0, 'oc2'] - 0.05) < 0.01
    assert run('exact', '--config', hier_config, '--c1', 0.2) == 2
    assert run('exact', '--config', conjugate_config, '--c1', 0.2,
               '--grid-resolution', 10) == 2


def test_compare(capsys, hier_config, conjugate_config):
    assert run('compare', '--config', hier_config, '--presets', 'WI,INA',
               '--c', '0.2,0.6,0.2', '--threads', 1) == 0
    df = read_stdout(capsys)
    assert list(df['prior']) == ['WI', 'INA']
    assert (df['n_replicates'] == 8).all()
    assert run('compare', '--config', conjugate_config, '--c1', 0.2) == 2


def test_bad_config(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text(json.dumps({'model': 'conjugate', 'typo': 1}))
    assert run('matrix', '--config', path, '--out', tmp_path / 'm.csv') == 2
    assert not (tmp_path / 'm.csv').exists()


def test_elicit_equal_indifference(capsys):
    assert run('elicit', '--p1', 0.5, '--p2', 0.5) == 0
    df = read_stdout(capsys)
    for name in ('c1', 'c2', 'c3'):
        assert df.loc[0, name] == pytest.approx(1 / 3)


def test_ocs_always_reject(capsys, matrix_file):
    assert run('ocs', '--matrix', matrix_file, '--c', '1,0,0') == 0
    df = read_stdout(capsys)
    assert df.loc[0, 'oc1'] == 0
    assert df.loc[0, 'oc3'] == 0


def test_sweep_errors(conjugate_config):
    assert run('sweep', '--config', conjugate_config, '--sizes', '', '--c1', 0.2) == 2
    assert run('sweep', '--config', conjugate_config, '--sizes', 'ten', '--c1', 0.2) == 2
    assert run('sweep', '--config', conjugate_config, '--sizes', '10', '--c1', 'low') == 2


def test_unreadable_matrix(tmp_path, capsys):
    assert run('ocs', '--matrix', tmp_path / 'missing.csv', '--c1', 0.2) == 2
    assert 'missing.csv' in capsys.readouterr().err
    corrupt = tmp_path / 'corrupt.csv'
    corrupt.write_text('# {not json\nreplicate,label\n')
    assert run('pareto', '--matrix', corrupt) == 2
    assert 'malformed' in capsys.readouterr().err
