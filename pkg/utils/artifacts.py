import csv
import json
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1
# leading comment line of the CSV tables
SCHEMA_PREFIX = '# schema_version='

# artifacts written by the stages
ARTIFACTS = [
    'report.json', 'coefficients.json', 'eps_run.json',
    'theta.csv', 'q_profile.csv', 'u0.csv', 'convergence.csv', 'lemma31.csv']


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays into json-serializable objects.
    """
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not np.isfinite(value):
        # json has no inf, nan
        return repr(value)
    return value


def write_json(path: str, payload: Dict[str, Any]):
    """Write the payload with its schema version, LF line endings.
    """
    payload = {'schema_version': SCHEMA_VERSION, **_plain(payload)}
    with open(path, 'w', newline='\n') as f:
        json.dump(payload, f, indent=2)
        f.write('\n')


def read_json(path: str) -> Dict[str, Any]:
    with open(path) as f:
        return json.load(f)


def format_value(value: Any) -> str:
    """Shortest round-tripping text of a cell, empty for None.
    """
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    """Write a CSV table with mandatory header, '.' decimals and LF line endings.
    The first line is the comment `# schema_version=<n>`, followed by the header.
    """
    with open(path, 'w', newline='') as f:
        f.write(f'{SCHEMA_PREFIX}{SCHEMA_VERSION}\n')
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            assert len(row) == len(header), 'row length should match the header'
            writer.writerow([format_value(v) for v in row])


def write_records(path: str, header: Sequence[str], records: List[Dict[str, Any]]):
    """Write dictionaries as rows, columns selected by the header.
    """
    write_csv(path, header, ([record.get(k) for k in header] for record in records))


def read_csv(path: str) -> List[Dict[str, str]]:
    """Rows of a CSV table, comment lines skipped.
    """
    with open(path, newline='') as f:
        return list(csv.DictReader(line for line in f if not line.startswith('#')))


def csv_schema_version(path: str) -> Optional[int]:
    """Schema version of a CSV table, None if the comment line is missing.
    """
    with open(path, newline='') as f:
        first = f.readline().strip()
    if not first.startswith(SCHEMA_PREFIX):
        return None
    return int(first[len(SCHEMA_PREFIX):])


def existing(directory: str) -> List[str]:
    """Known artifacts present in the directory.
    """
    if not os.path.isdir(directory):
        return []
    return [name for name in ARTIFACTS if os.path.isfile(os.path.join(directory, name))]


def _table(rows: List[Dict[str, str]], columns: Optional[Sequence[str]] = None) -> List[str]:
    if not rows:
        return ['  (empty)']
    columns = [c for c in (columns or rows[0].keys()) if c in rows[0]]
    width = {c: max(len(c), *(len(row[c]) for row in rows)) for c in columns}
    lines = ['  ' + '  '.join(c.rjust(width[c]) for c in columns)]
    for row in rows:
        lines.append('  ' + '  '.join(row[c].rjust(width[c]) for c in columns))
    return lines


def render_report(directory: str) -> str:
    """Human-readable summary of the artifacts, without recomputation.
    Raises:
        FileNotFoundError: if no artifact exists.
    """
    found = existing(directory)
    if not found:
        raise FileNotFoundError(f'no artifacts found in {directory}')
    lines = []
    if 'report.json' in found:
        report = read_json(os.path.join(directory, 'report.json'))
        lines.append(f'[report] version {report.get("version", "unknown")}, '
                     f'stage {report.get("stage", "-")}')
        for key, value in report.get('verdicts', {}).items():
            lines.append(f'  {key}: {"pass" if value else "FAIL"}')
    if 'coefficients.json' in found:
        coeffs = read_json(os.path.join(directory, 'coefficients.json'))
        lines.append('[coefficients]')
        for key in ('q_hat', 'q_hat_error_bar', 'q_hat_energy', 'p',
                    'area_ratio', 'mass_coeff', 'diffusivity', 'q0'):
            if key in coeffs:
                lines.append(f'  {key} = {coeffs[key]}')
    if 'eps_run.json' in found:
        run = read_json(os.path.join(directory, 'eps_run.json'))
        lines.append('[eps_run]')
        for key in ('epsilon', 'abs_err', 'rel_err', 'layer_err', 'iterations'):
            if key in run:
                lines.append(f'  {key} = {run[key]}')
    if 'convergence.csv' in found:
        lines.append('[convergence]')
        lines.extend(_table(
            read_csv(os.path.join(directory, 'convergence.csv')),
            ['epsilon', 'abs_err', 'rel_err', 'norm_u', 'norm_d1u',
             'norm_d2u_scaled', 'cells', 'iterations']))
    if 'lemma31.csv' in found:
        lines.append('[lemma31]')
        lines.extend(_table(read_csv(os.path.join(directory, 'lemma31.csv'))))
    return '\n'.join(lines)
