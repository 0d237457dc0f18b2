import ast
import configparser
import json
import os
from typing import Any, Dict, List, Optional

from thinhomog.config import Config as ModelConfig
from thinhomog.geometry import GeometryError, Profile, check_roles
from thinhomog.limit1d import Forcing
from thinhomog.verify import BoundaryDatum


class ConfigError(ValueError):
    """Invalid run configuration, carrying every violation found.
    """
    def __init__(self, violations: List[str]):
        self.violations = violations
        super().__init__('invalid configuration:\n' + '\n'.join(
            f'  - {v}' for v in violations))


class GeometryConfig:
    """Configuration for the thin domain.
    """
    def __init__(self):
        # profile descriptors, see `Profile.parse`
        self.g = 'constant(1.0)'
        self.h = 'constant(0.0)'
        # bottom oscillation order
        self.alpha = 1.5


class ForcingConfig:
    """Configuration for the right-hand side.
    """
    def __init__(self):
        # `cosine(k=1)` or `table(path='f.csv')`
        self.forcing = 'cosine(k=1)'


class SweepConfig:
    """Configuration for the epsilon sweep.
    """
    def __init__(self):
        # strictly decreasing
        self.eps_list = [0.2, 0.1, 0.05]
        # re-solve the largest epsilon with doubled resolution
        self.refinement_check = True
        # required error ratio between the smallest and the largest epsilon
        self.reduction = 0.5


class Lemma31Config:
    """Configuration for the rectangle harness.
    """
    def __init__(self):
        # run within the pipeline
        self.enabled = False
        self.alpha = 2.0
        self.eps_list = [0.4, 0.3, 0.2]
        # `linear`, `constant` or coefficient list
        self.datum = 'linear'
        # horizontal cells across the rectangle
        self.nx = 32
        self.ny_min = 16


class OutputConfig:
    """Configuration for artifacts and logging.
    """
    def __init__(self):
        # artifact directory
        self.out = './out'
        # 0 for all available cores
        self.workers = 0
        self.deterministic = False

        # tensorboard summary, disabled if None
        self.log = None
        # run name
        self.name = 't1'

        # toolkit version
        self.version = 'unknown'


class Config:
    """Integrated configuration.
    """
    def __init__(self):
        self.geometry = GeometryConfig()
        self.forcing = ForcingConfig()
        self.model = ModelConfig()
        self.sweep = SweepConfig()
        self.lemma31 = Lemma31Config()
        self.output = OutputConfig()

    def dump(self):
        """Dump configurations into serializable dictionary.
        """
        return {k: dict(vars(v)) for k, v in vars(self).items()}

    @staticmethod
    def load(dump_):
        """Load dumped configurations into new configuration.
        """
        conf = Config()
        for k, v in dump_.items():
            if hasattr(conf, k):
                obj = getattr(conf, k)
                load_state(obj, v)
        return conf

    def __eq__(self, other) -> bool:
        return isinstance(other, Config) and self.dump() == other.dump()


def load_state(obj, dump_):
    """Load dictionary items to attributes.
    """
    for k, v in dump_.items():
        if hasattr(obj, k):
            setattr(obj, k, v)
    return obj


# keys holding call-grammar descriptors, kept verbatim
DESCRIPTORS = {('geometry', 'g'), ('geometry', 'h'), ('forcing', 'forcing'), ('lemma31', 'datum')}
# keys whose default is None
OPTIONALS = {('model', 'max_iter'): int, ('output', 'log'): str}


def _coerce(section: str, key: str, raw: str, default: Any) -> Any:
    """Convert the raw text into the type of the default value.
    """
    if (section, key) in DESCRIPTORS:
        return raw
    kind = OPTIONALS.get((section, key), type(default))
    if kind is str:
        try:
            value = ast.literal_eval(raw)
        except (ValueError, SyntaxError):
            return raw
        if value is None and (section, key) in OPTIONALS:
            return None
        return value if isinstance(value, str) else raw
    try:
        value = ast.literal_eval(raw)
    except (ValueError, SyntaxError) as err:
        raise ValueError(f'malformed literal `{raw}`') from err
    if value is None and (section, key) in OPTIONALS:
        return None
    if kind is bool:
        if not isinstance(value, bool):
            raise ValueError(f'expected a boolean, got `{raw}`')
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f'expected an integer, got `{raw}`')
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f'expected a number, got `{raw}`')
        return float(value)
    if kind is list:
        if not isinstance(value, (list, tuple)) or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            raise ValueError(f'expected a list of numbers, got `{raw}`')
        return [float(v) for v in value]
    return value


def _check_eps(name: str, eps_list: List[float], minimum: int) -> List[str]:
    out = []
    if len(eps_list) < minimum:
        out.append(f'{name} requires at least {minimum} values, got {len(eps_list)}')
    if any(not 0. < e < 1. for e in eps_list):
        out.append(f'{name} values should lie in (0, 1)')
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        out.append(f'{name} should be strictly decreasing')
    return out


def validate(config: Config) -> List[str]:
    """Range and grammar checks.
    Returns:
        every violation found, empty if valid.
    """
    out = []
    geo = config.geometry
    if not geo.alpha > 1:
        out.append('geometry.alpha must be > 1')
    profiles = {}
    for key in ('g', 'h'):
        try:
            profiles[key] = Profile.parse(getattr(geo, key))
        except (GeometryError, ValueError) as err:
            out.append(f'geometry.{key}: {err}')
    if len(profiles) == 2:
        try:
            check_roles(profiles['g'], profiles['h'])
        except GeometryError as err:
            out.append(f'geometry: {err}')
    try:
        Forcing.parse(config.forcing.forcing)
    except (GeometryError, ValueError, OSError) as err:
        out.append(f'forcing.forcing: {err}')

    model = config.model
    if not 0. < model.tol < 1.:
        out.append('model.tol should lie in (0, 1)')
    if not 0. < model.sweep_tol < 1.:
        out.append('model.sweep_tol should lie in (0, 1)')
    if model.max_iter is not None and model.max_iter < 1:
        out.append('model.max_iter should be positive')
    if model.nodes_per_period < 8:
        out.append('model.nodes_per_period should be >= 8')
    if model.theta_samples < 1:
        out.append('model.theta_samples should be positive')
    if model.m < 8:
        out.append('model.m should be >= 8')
    if model.points_per_period < 4:
        out.append('model.points_per_period should be >= 4')
    if model.ny_min < 1:
        out.append('model.ny_min should be positive')
    if model.max_elements < 1:
        out.append('model.max_elements should be positive')

    out.extend(_check_eps('sweep.eps_list', config.sweep.eps_list, 3))
    if not 0. < config.sweep.reduction <= 1.:
        out.append('sweep.reduction should lie in (0, 1]')

    lemma = config.lemma31
    if not lemma.alpha > 1:
        out.append('lemma31.alpha must be > 1')
    out.extend(_check_eps('lemma31.eps_list', lemma.eps_list, 2))
    try:
        BoundaryDatum.parse(lemma.datum)
    except ValueError as err:
        out.append(f'lemma31.datum: {err}')
    if lemma.nx < 2:
        out.append('lemma31.nx should be >= 2')
    if lemma.ny_min < 1:
        out.append('lemma31.ny_min should be positive')

    if config.output.workers < 0:
        out.append('output.workers should be non-negative')
    return out


def _parse_json(path: str) -> Config:
    with open(path) as f:
        try:
            dump_ = json.load(f)
        except json.JSONDecodeError as err:
            raise ConfigError([f'malformed json: {err}']) from err
    conf = Config()
    violations = []
    for section, values in dump_.items():
        if not hasattr(conf, section):
            violations.append(f'unknown section [{section}]')
            continue
        obj = getattr(conf, section)
        for key in values:
            if not hasattr(obj, key):
                violations.append(f'unknown key `{key}` in [{section}]')
    if violations:
        raise ConfigError(violations)
    return Config.load(dump_)


def parse_config(path: str) -> Config:
    """Read and validate a sectioned `key = value` file or a JSON dump.
    Args:
        path: `.json` for `Config.dump` outputs, sectioned text otherwise.
    Returns:
        validated configuration, defaults filled.
    Raises:
        ConfigError: with every violation found.
    """
    if not os.path.isfile(path):
        raise ConfigError([f'no such file: {path}'])
    if path.endswith('.json'):
        conf = _parse_json(path)
    else:
        parser = configparser.ConfigParser(interpolation=None, delimiters=('=',))
        parser.optionxform = str
        try:
            with open(path) as f:
                parser.read_file(f)
        except configparser.Error as err:
            raise ConfigError([f'malformed file: {err}']) from err

        conf, violations = Config(), []
        for section in parser.sections():
            if not hasattr(conf, section):
                violations.append(f'unknown section [{section}]')
                continue
            obj = getattr(conf, section)
            for key, raw in parser.items(section):
                if not hasattr(obj, key):
                    violations.append(f'unknown key `{key}` in [{section}]')
                    continue
                try:
                    setattr(obj, key, _coerce(section, key, raw.strip(), getattr(obj, key)))
                except ValueError as err:
                    violations.append(f'{section}.{key}: {err}')
        if violations:
            raise ConfigError(violations)
    violations = validate(conf)
    if violations:
        raise ConfigError(violations)
    return conf


def write_config(config: Config, path: str):
    """Write the sectioned text form, inverse of `parse_config`.
    """
    lines = []
    for section, values in config.dump().items():
        lines.append(f'[{section}]')
        for key, value in values.items():
            if (section, key) in DESCRIPTORS or isinstance(value, str):
                text = value
            else:
                text = repr(value)
            lines.append(f'{key} = {text}')
        lines.append('')
    with open(path, 'w', newline='\n') as f:
        f.write('\n'.join(lines))


def resolved(config: Config) -> Dict[str, Any]:
    """Serializable form echoed into the reports.
    """
    return json.loads(json.dumps(config.dump()))


def workers_of(config: Config, override: Optional[int] = None) -> int:
    """Concurrent solves, one if deterministic.
    """
    if config.output.deterministic:
        return 1
    workers = config.output.workers if override is None else override
    return workers or os.cpu_count() or 1
