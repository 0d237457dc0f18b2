import json
import os

import pytest

from config import Config, ConfigError, parse_config, resolved, workers_of, write_config


def write(tmp_path, text: str, name: str = 'run.cfg') -> str:
    path = os.path.join(tmp_path, name)
    with open(path, 'w') as f:
        f.write(text)
    return path


def test_defaults(tmp_path):
    path = write(tmp_path, '[geometry]\nalpha = 2.0\n')
    config = parse_config(path)
    assert config.geometry.alpha == 2.
    assert config.geometry.g == 'constant(1.0)'
    assert config.sweep.eps_list == [0.2, 0.1, 0.05]
    assert config.model.max_iter is None
    assert config.output.log is None


def test_descriptors(tmp_path):
    path = write(tmp_path, '\n'.join([
        '[geometry]',
        "g = sine(1.0, terms=[(0.5, 1)])",
        "h = cosine(1.0, terms=[(1.0, 1)])",
        'alpha = 1.5',
        '[model]',
        'max_iter = 5000',
        '[output]',
        'log = ./log',
        '']))
    config = parse_config(path)
    assert config.geometry.g == 'sine(1.0, terms=[(0.5, 1)])'
    assert config.model.max_iter == 5000
    assert config.output.log == './log'


@pytest.mark.parametrize('text, message', [
    ('[geometry]\nalpha = 1.0\n', 'geometry.alpha must be > 1'),
    ('[sweep]\neps_list = [0.1, 0.2, 0.3]\n', 'sweep.eps_list should be strictly decreasing'),
    ('[sweep]\neps_list = [0.2, 0.1]\n', 'sweep.eps_list requires at least 3 values'),
    ('[geometry]\ng = gauss(1)\n', 'geometry.g'),
    ('[model]\ntol = fast\n', 'model.tol'),
    ('[model]\nnodes_per_period = 4\n', 'model.nodes_per_period'),
    ('[lemma31]\ndatum = cubic\n', 'lemma31.datum'),
    ('[model]\nsweep_tol = 0\n', 'model.sweep_tol'),
    ('[mesh]\nnx = 4\n', 'unknown section [mesh]'),
    ('[geometry]\nbeta = 2\n', 'unknown key `beta` in [geometry]'),
])
def test_violations(tmp_path, text, message):
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, text))
    assert any(message in v for v in info.value.violations)


def test_forcing_table_columns(tmp_path):
    table = write(tmp_path, 'x1\n0\n1\n', 'f.csv')
    path = write(tmp_path, f'[forcing]\nforcing = table(path={table!r})\n')
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert any(v.startswith('forcing.forcing') for v in info.value.violations)


def test_all_violations(tmp_path):
    path = write(tmp_path, '[geometry]\nalpha = 0.5\n[sweep]\neps_list = [0.1, 0.2, 0.3]\n')
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert len(info.value.violations) == 2
    assert 'geometry.alpha must be > 1' in str(info.value)


def test_missing(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(os.path.join(tmp_path, 'missing.cfg'))
    assert 'no such file' in info.value.violations[0]


def test_write_parse(tmp_path):
    config = Config()
    config.geometry.g = 'sine(1.0, terms=[(0.5, 1)])'
    config.geometry.h = 'cosine(1.0, terms=[(1.0, 1)])'
    config.model.max_iter = 1000
    config.sweep.eps_list = [0.3, 0.2, 0.1]
    config.lemma31.enabled = True
    config.output.out = str(tmp_path)
    path = os.path.join(tmp_path, 'run.cfg')
    write_config(config, path)
    assert parse_config(path) == config


def test_json(tmp_path):
    config = Config()
    config.geometry.alpha = 3.
    path = write(tmp_path, json.dumps(resolved(config)), 'run.json')
    assert parse_config(path) == config

    path = write(tmp_path, json.dumps({'solver': {'tol': 1e-3}}), 'bad.json')
    with pytest.raises(ConfigError):
        parse_config(path)


def test_workers():
    config = Config()
    config.output.workers = 3
    assert workers_of(config) == 3
    assert workers_of(config, 2) == 2
    assert workers_of(config, 0) >= 1
    config.output.deterministic = True
    assert workers_of(config, 4) == 1
