import argparse
import os
import sys
from typing import Any, Dict, List, Optional

from config import Config, ConfigError, parse_config, resolved, workers_of
from thinhomog import ThinDomainHomogenizer
from thinhomog.geometry import Profile
from thinhomog.limit1d import CosineForcing, Forcing, analytic_limit_cosine, l2_norm_1d
from thinhomog.mesh import CapacityError, export_csv
from thinhomog.verify import BoundaryDatum, SweepError, lemma31_verdicts
from utils.artifacts import render_report, write_csv, write_json, write_records

CONVERGENCE_COLUMNS = [
    'epsilon', 'abs_err', 'rel_err', 'layer_err',
    'norm_u', 'norm_d1u', 'norm_d2u_scaled',
    'nx', 'ny', 'cells', 'iterations', 'residual']

LEMMA31_COLUMNS = [
    'epsilon', 'lhs37', 'energy38', 'ratio37', 'ratio38',
    'mean', 'norm_u0_sq', 'norm_du0_sq', 'iterations']

# relative tolerances of the cell and limit verdicts
CELL_ENERGY_TOL = 1e-2
CELL_DRIFT_TOL = 2e-2
LIMIT_ORACLE_TOL = 1e-3


def toolkit_version() -> str:
    """`git describe` of the toolkit, 'unknown' outside a repository.
    """
    try:
        import git
        repo = git.Repo(
            os.path.dirname(os.path.abspath(__file__)), search_parent_directories=True)
        return repo.git.describe('--tags', '--always', '--dirty')
    except Exception:
        return 'unknown'


class Runner:
    """Stage runner of the thin-domain homogenization toolkit.
    """
    STAGES = ['pipeline', 'cell', 'limit', 'solve-eps', 'converge', 'lemma31', 'report']

    def __init__(self, config: Config, workers: int = 1, verbose: bool = False):
        """Initializer.
        Args:
            config: validated configurations.
            workers: the number of the concurrent epsilon solves.
            verbose: print the solver reports.
        """
        self.config = config
        self.out = config.output.out
        self.workers = workers
        self.verbose = verbose

        self.forcing = Forcing.parse(config.forcing.forcing)
        self.model = ThinDomainHomogenizer(
            config.model,
            Profile.parse(config.geometry.g),
            Profile.parse(config.geometry.h),
            config.geometry.alpha)

        self.verdicts: Dict[str, bool] = {}
        self.sections: Dict[str, Any] = {}
        self.writers = {}

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def summary(self, stage: str):
        """Tensorboard writer of the stage, None if logging is disabled.
        """
        if self.config.output.log is None:
            return None
        if stage not in self.writers:
            from torch.utils.tensorboard import SummaryWriter
            self.writers[stage] = SummaryWriter(
                os.path.join(self.config.output.log, self.config.output.name, stage))
        return self.writers[stage]

    def scalars(self, stage: str, values: Dict[str, float], step: int = 0):
        writer = self.summary(stage)
        if writer is None:
            return
        for key, val in values.items():
            if val is not None:
                writer.add_scalar(f'{stage}/{key}', val, step)

    def cell(self):
        """Cell analysis, writes `coefficients.json`, `theta.csv` and `q_profile.csv`.
        """
        if 'cell' in self.sections:
            return
        print('[*] cell: solving the cell problem')
        coeffs = self.model.coefficients(progress=True)
        record = coeffs.to_json()
        record['cell'] = {
            'g': self.model.cell.g.describe(),
            'h0': self.model.cell.h0,
            'h': self.model.base.h.describe()}
        write_json(self.path('coefficients.json'), record)
        write_csv(self.path('theta.csv'), ['x2', 'theta'], zip(*coeffs.theta))
        if coeffs.q_profile is not None:
            write_csv(self.path('q_profile.csv'), ['x2', 'q'], zip(*coeffs.q_profile))
        print(f'[*] cell: q_hat={coeffs.q_hat:.8g} (+/- {coeffs.q_hat_error_bar:.2g}), '
              f'p={coeffs.p:.8g}, |Y*|/L1={coeffs.area_ratio:.8g}')

        g, h = self.model.base.g, self.model.base.h
        if g.kind == 'constant' and h.kind == 'constant':
            self.verdicts['flat_cell'] = bool(
                abs(coeffs.q_hat - (g.min + h.min)) < 1e-8 and coeffs.p == 0.)
        # flux and energy forms on the same mesh
        flux = coeffs.q_hat_levels[self.config.model.nodes_per_period]
        self.verdicts['cell_energy_agreement'] = bool(
            abs(coeffs.q_hat_energy - flux) <= CELL_ENERGY_TOL * flux)
        drift = coeffs.self_convergence()
        if drift is not None:
            self.verdicts['cell_self_convergence'] = bool(drift <= CELL_DRIFT_TOL)
        self.scalars('cell', {
            'q_hat': coeffs.q_hat, 'q_hat_energy': coeffs.q_hat_energy,
            'p': coeffs.p, 'area_ratio': coeffs.area_ratio,
            'iterations': coeffs.iterations})
        self.sections['cell'] = record

    def limit(self):
        """Homogenized solution, writes `u0.csv` next to the coefficient record.
        """
        self.cell()
        print('[*] limit: solving the homogenized problem')
        x, u0 = self.model.limit(self.forcing)
        write_csv(self.path('u0.csv'), ['x', 'u0'], zip(x, u0))
        section = {'m': len(x) - 1}
        if isinstance(self.forcing, CosineForcing):
            coeffs = self.model.coefficients()
            exact = analytic_limit_cosine(coeffs.q_hat, coeffs.mass_coeff, self.forcing.k)
            section['amplitude'] = exact.amplitude
            section['discrepancy'] = l2_norm_1d(x, u0 - exact(x))
            self.verdicts['limit_oracle'] = bool(
                section['discrepancy'] <= LIMIT_ORACLE_TOL * l2_norm_1d(x, exact(x)))
            print(f'[*] limit: L2 distance to the closed form {section["discrepancy"]:.3g}')
        self.sections['limit'] = section

    def solve_eps(self, epsilon: Optional[float] = None, export_mesh: bool = False):
        """Single epsilon solve, writes `eps_run.json`.
        """
        epsilon = epsilon or self.config.sweep.eps_list[0]
        print(f'[*] solve-eps: epsilon={epsilon:.6g}')
        run = self.model.solve(self.forcing, epsilon)
        record = run.summary()
        record['solver'] = run.report.to_json()
        record['mesh'] = run.mesh_stats
        write_json(self.path('eps_run.json'), record)
        if export_mesh:
            export_csv(run.mesh, self.path('mesh'))
        if self.verbose:
            print(f'[*] solve-eps: {run.report.to_json()}')
        print(f'[*] solve-eps: rel_err={run.rel_error:.4g}, abs_err={run.abs_error:.4g}')
        self.scalars('solve-eps', {
            'rel_err': run.rel_error, 'abs_err': run.abs_error,
            'iterations': run.report.iterations})
        self.sections['solve-eps'] = record

    def converge(self):
        """Epsilon sweep, writes `convergence.csv`.
        """
        self.limit()
        eps_list = self.config.sweep.eps_list
        print(f'[*] converge: eps={eps_list}, workers={self.workers}')
        report = self.model.converge(
            self.forcing, eps_list,
            workers=self.workers,
            refinement_check=self.config.sweep.refinement_check,
            reduction=self.config.sweep.reduction)
        write_records(self.path('convergence.csv'), CONVERGENCE_COLUMNS, report.runs)
        for i, run in enumerate(report.runs):
            if self.verbose:
                print(f'[*] converge: eps={run["epsilon"]:.6g}, '
                      f'iterations={run["iterations"]}, residual={run["residual"]:.3g}')
            self.scalars('converge', {
                key: run[key] for key in CONVERGENCE_COLUMNS[1:]}, step=i)
        section = report.to_json()
        if not self.forcing.depends_on_x2:
            section['weak_gap'] = {
                repr(eps): self.model.weak_gap(self.forcing, eps) for eps in eps_list}
        self.verdicts.update(report.verdicts)
        self.sections['converge'] = section
        print(f'[*] converge: rel_err={[run["rel_err"] for run in report.runs]}, '
              f'slope={report.slope}')

    def lemma31(self):
        """Rectangle harness, writes `lemma31.csv`.
        """
        conf = self.config.lemma31
        datum = BoundaryDatum.parse(conf.datum)
        print(f'[*] lemma31: alpha={conf.alpha}, eps={conf.eps_list}, u0={datum.describe()}')
        runs = self.model.lemma31(
            conf.eps_list, datum, alpha=conf.alpha, nx=conf.nx, ny_min=conf.ny_min)
        records = [vars(run) for run in runs]
        write_records(self.path('lemma31.csv'), LEMMA31_COLUMNS, records)
        for i, run in enumerate(runs):
            self.scalars('lemma31', {
                'ratio37': run.ratio37, 'ratio38': run.ratio38,
                'iterations': run.iterations}, step=i)
        section = lemma31_verdicts(runs, datum)
        self.verdicts.update({f'lemma31_{k}': v for k, v in section['verdicts'].items()})
        self.sections['lemma31'] = section

    def pipeline(self):
        """cell, limit, epsilon sweep and the optional rectangle harness.
        """
        self.converge()
        if self.config.lemma31.enabled:
            self.lemma31()

    def write_report(self, stage: str, error: Optional[str] = None):
        write_json(self.path('report.json'), {
            'version': self.config.output.version,
            'stage': stage,
            'config': resolved(self.config),
            'verdicts': self.verdicts,
            'passed': error is None and all(self.verdicts.values()),
            'error': error,
            **self.sections})

    def close(self):
        for writer in self.writers.values():
            writer.close()

    def run(self, stage: str, epsilon: Optional[float] = None, export_mesh: bool = False) -> int:
        """Run the stage and write `report.json`.
        Returns:
            0 if every verdict passes, 2 otherwise.
        """
        os.makedirs(self.out, exist_ok=True)
        try:
            if stage == 'solve-eps':
                self.solve_eps(epsilon, export_mesh)
            else:
                getattr(self, stage)()
        except SweepError as err:
            self.sections['converge'] = err.partial.to_json()
            self.write_report(stage, f'{stage}: {err}')
            raise
        except Exception as err:
            self.write_report(stage, f'{stage}: {err}')
            raise
        finally:
            self.close()
        self.write_report(stage)
        for key, value in self.verdicts.items():
            print(f'[*] verdict {key}: {"pass" if value else "FAIL"}')
        return 0 if all(self.verdicts.values()) else 2


def main(argv: Optional[List[str]] = None) -> int:
    # argument parser
    parser = argparse.ArgumentParser(
        description='Homogenization of the Neumann problem on doubly oscillating thin domains')
    parser.add_argument('stage', nargs='?', default='pipeline', choices=Runner.STAGES)
    parser.add_argument('--config', required=True)
    parser.add_argument('--out', default=None)
    parser.add_argument('--workers', default=None, type=int)
    parser.add_argument('--deterministic', default=False, action='store_true')
    parser.add_argument('--verbose', default=False, action='store_true')
    parser.add_argument('--epsilon', default=None, type=float)
    parser.add_argument('--export-mesh', default=False, action='store_true')
    args = parser.parse_args(argv)

    # configurations
    print('[*] load config: ' + args.config)
    try:
        config = parse_config(args.config)
    except ConfigError as err:
        print(f'[!] config: {err}')
        return 1
    if args.out is not None:
        config.output.out = args.out
    if args.deterministic:
        config.output.deterministic = True
    if args.epsilon is not None and not 0. < args.epsilon < 1.:
        print(f'[!] solve-eps: epsilon should lie in (0, 1), got {args.epsilon}')
        return 1

    if args.stage == 'report':
        try:
            print(render_report(config.output.out))
        except FileNotFoundError as err:
            print(f'[!] report: {err}')
            return 1
        return 0

    # version stamp
    config.output.version = toolkit_version()
    try:
        runner = Runner(config, workers_of(config, args.workers), args.verbose)
        return runner.run(args.stage, args.epsilon, args.export_mesh)
    except SweepError as err:
        print(f'[!] {args.stage}: {err}')
        if isinstance(err.cause, CapacityError):
            print(f'[!] {args.stage}: {err.cause}')
        return 1
    except Exception as err:
        print(f'[!] {args.stage}: {type(err).__name__}: {err}')
        return 1


if __name__ == '__main__':
    sys.exit(main())
