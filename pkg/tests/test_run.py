import os

import pytest

from config import Config, write_config
from run import main
from utils.artifacts import csv_schema_version, read_csv, read_json


def flat_config(tmp_path, **overrides) -> str:
    config = Config()
    config.model.points_per_period = 128
    config.output.out = os.path.join(tmp_path, 'out')
    for key, value in overrides.items():
        section, name = key.split('__')
        setattr(getattr(config, section), name, value)
    path = os.path.join(tmp_path, 'run.cfg')
    write_config(config, path)
    return path


def read_bytes(path: str) -> bytes:
    with open(path, 'rb') as f:
        return f.read()


def test_pipeline(tmp_path, capsys):
    path = flat_config(tmp_path)
    out = os.path.join(tmp_path, 'out')
    assert main(['pipeline', '--config', path, '--deterministic']) == 0
    for name in ('report.json', 'coefficients.json', 'theta.csv', 'u0.csv', 'convergence.csv'):
        assert os.path.isfile(os.path.join(out, name))

    report = read_json(os.path.join(out, 'report.json'))
    assert report['schema_version'] == 1
    assert report['passed'] and report['error'] is None
    assert report['verdicts']['flat_cell'] and report['verdicts']['flat_exact']
    assert report['verdicts']['cell_energy_agreement'] and report['verdicts']['limit_oracle']
    assert 'cell_self_convergence' not in report['verdicts']
    assert report['config']['geometry']['alpha'] == 1.5
    assert report['converge']['exact']

    for name in ('theta.csv', 'u0.csv', 'convergence.csv'):
        assert csv_schema_version(os.path.join(out, name)) == 1
    rows = read_csv(os.path.join(out, 'convergence.csv'))
    assert [float(row['epsilon']) for row in rows] == [0.2, 0.1, 0.05]
    assert all(float(row['rel_err']) < 1e-3 for row in rows)

    capsys.readouterr()
    assert main(['report', '--config', path]) == 0
    text = capsys.readouterr().out
    assert '[coefficients]' in text and '[convergence]' in text


def test_cell(tmp_path):
    path = flat_config(tmp_path, geometry__g='constant(1.5)', geometry__h='constant(0.5)')
    out = os.path.join(tmp_path, 'out')
    assert main(['cell', '--config', path, '--out', out]) == 0
    coeffs = read_json(os.path.join(out, 'coefficients.json'))
    assert coeffs['q_hat'] == pytest.approx(2., abs=1e-8)
    assert coeffs['p'] == 0.
    assert not os.path.exists(os.path.join(out, 'convergence.csv'))
    report = read_json(os.path.join(out, 'report.json'))
    assert report['verdicts'] == {'flat_cell': True, 'cell_energy_agreement': True}


def test_cell_wavy(tmp_path):
    path = flat_config(tmp_path, geometry__g='sine(1.0, terms=[(0.5, 1)])')
    out = os.path.join(tmp_path, 'out')
    assert main(['cell', '--config', path]) == 0
    report = read_json(os.path.join(out, 'report.json'))
    # flux and energy forms, 16 against 32 nodes per period
    assert report['verdicts'] == {'cell_energy_agreement': True, 'cell_self_convergence': True}
    levels = read_json(os.path.join(out, 'coefficients.json'))['q_hat_levels']
    assert list(levels) == ['32', '16']


def test_tensorboard(tmp_path):
    pytest.importorskip('torch.utils.tensorboard')
    log = os.path.join(tmp_path, 'log')
    path = flat_config(tmp_path, output__log=log, output__name='flat')
    assert main(['limit', '--config', path]) == 0
    stage = os.path.join(log, 'flat', 'cell')
    assert any(name.startswith('events.out.tfevents') for name in os.listdir(stage))


def test_solve_eps(tmp_path):
    path = flat_config(tmp_path)
    out = os.path.join(tmp_path, 'single')
    assert main(['solve-eps', '--config', path, '--out', out,
                 '--epsilon', '0.1', '--export-mesh']) == 0
    run = read_json(os.path.join(out, 'eps_run.json'))
    assert run['epsilon'] == 0.1
    assert run['rel_err'] < 1e-3
    assert run['mesh']['triangles'] == 2 * run['nx'] * run['ny']
    for name in ('nodes.csv', 'triangles.csv', 'boundary.csv'):
        assert os.path.isfile(os.path.join(out, 'mesh', name))

    assert main(['solve-eps', '--config', path, '--epsilon', '1.5']) == 1


def test_lemma31_constant(tmp_path):
    path = flat_config(tmp_path, lemma31__datum='constant')
    out = os.path.join(tmp_path, 'out')
    assert main(['lemma31', '--config', path]) == 0
    rows = read_csv(os.path.join(out, 'lemma31.csv'))
    assert len(rows) == 3
    assert all(float(row['ratio38']) == 0. for row in rows)
    report = read_json(os.path.join(out, 'report.json'))
    assert report['verdicts'] == {'lemma31_constant_exact': True}


def test_report_empty(tmp_path, capsys):
    path = flat_config(tmp_path)
    assert main(['report', '--config', path, '--out', os.path.join(tmp_path, 'empty')]) == 1
    assert 'no artifacts found' in capsys.readouterr().out


def test_invalid_config(tmp_path, capsys):
    path = flat_config(tmp_path, geometry__alpha=0.5)
    assert main(['pipeline', '--config', path]) == 1
    assert 'geometry.alpha must be > 1' in capsys.readouterr().out


def test_unaffordable(tmp_path):
    path = flat_config(tmp_path, model__max_elements=100)
    out = os.path.join(tmp_path, 'out')
    assert main(['converge', '--config', path]) == 1
    report = read_json(os.path.join(out, 'report.json'))
    assert not report['passed']
    assert 'nx=128' in report['error']


def test_deterministic(tmp_path):
    path = flat_config(tmp_path, sweep__refinement_check=False)
    first, second = os.path.join(tmp_path, 'a'), os.path.join(tmp_path, 'b')
    for out in (first, second):
        assert main(['converge', '--config', path, '--out', out, '--deterministic']) == 0
    for name in ('convergence.csv', 'u0.csv', 'theta.csv'):
        assert read_bytes(os.path.join(first, name)) == read_bytes(os.path.join(second, name))


@pytest.mark.slow
def test_main_experiment_deterministic(tmp_path):
    path = flat_config(
        tmp_path,
        geometry__g='sine(1.0, terms=[(0.5, 1)])',
        geometry__h='cosine(1.0, terms=[(1.0, 1)])',
        model__points_per_period=16,
        sweep__refinement_check=False)
    first, second = os.path.join(tmp_path, 'a'), os.path.join(tmp_path, 'b')
    for out in (first, second):
        assert main(['pipeline', '--config', path, '--out', out, '--deterministic']) == 0
    for name in ('convergence.csv', 'coefficients.json', 'u0.csv'):
        assert read_bytes(os.path.join(first, name)) == read_bytes(os.path.join(second, name))
