import dataclasses
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .fem import (
    DiffusionTensor, Field, SolveReport,
    apply_dirichlet, assemble_mass, assemble_stiffness,
    gradient_norms, l2_norm, solve_cg)
from .geometry import RectangleSpec, ThinDomainSpec
from .limit1d import Forcing
from .mesh import (
    GAMMA, CapacityError, Mesh,
    mesh_domain, mesh_rectangle, rectangle_resolution, resolution_for,
    smallest_affordable_epsilon)

# recorded in every report
SUBSTITUTION_NOTE = (
    'errors are measured as ||u^eps - u0|| on the rescaled domain itself, '
    'no extension over the top oscillation is applied')


class SweepError(RuntimeError):
    """Member solve of an epsilon sweep failed.
    """
    def __init__(self, epsilon: float, partial: 'ConvergenceReport', cause: Exception):
        self.epsilon = epsilon
        self.partial = partial
        self.cause = cause
        super().__init__(f'solve failed at epsilon={epsilon:.6g}: {cause}')


@dataclass
class ResolutionPolicy:
    """Mesh and solver settings of the epsilon problems.
    """
    points_per_period: int = 8
    ny_min: int = 8
    max_elements: int = 2_000_000
    tol: float = 1e-10
    max_iter: Optional[int] = None

    def refined(self) -> 'ResolutionPolicy':
        return dataclasses.replace(self, points_per_period=2 * self.points_per_period)


@dataclass
class EpsilonRun:
    """Solution of the rescaled problem at a single epsilon.
    """
    spec: ThinDomainSpec
    resolution: Tuple[int, int]
    mesh_stats: Dict[str, object]
    norms: Dict[str, float]
    report: SolveReport
    mesh: Optional[Mesh] = field(default=None, repr=False)
    u: Optional[Field] = field(default=None, repr=False)
    abs_error: Optional[float] = None
    rel_error: Optional[float] = None
    layer_error: Optional[float] = None

    def strip(self) -> 'EpsilonRun':
        """Drop the mesh and the field, keeping the summary.
        """
        return dataclasses.replace(self, mesh=None, u=None)

    def summary(self) -> Dict[str, object]:
        return {
            'epsilon': self.spec.epsilon,
            'abs_err': self.abs_error,
            'rel_err': self.rel_error,
            'layer_err': self.layer_error,
            'norm_u': self.norms['u'],
            'norm_d1u': self.norms['d1u'],
            'norm_d2u_scaled': self.norms['d2u_scaled'],
            'nx': self.resolution[0],
            'ny': self.resolution[1],
            'cells': self.mesh_stats['triangles'],
            'iterations': self.report.iterations,
            'residual': self.report.residual}


@dataclass
class ConvergenceReport:
    """Epsilon sweep against a single homogenized limit.
    """
    runs: List[Dict[str, object]]
    slope: Optional[float] = None
    monotone: Optional[bool] = None
    exact: bool = False
    verdicts: Dict[str, bool] = field(default_factory=dict)
    refinement_delta: Optional[float] = None
    # reason the refinement check did not run
    refinement_skipped: Optional[str] = None
    smallest_affordable_epsilon: Optional[float] = None
    note: str = SUBSTITUTION_NOTE

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_json(self) -> Dict[str, object]:
        return dataclasses.asdict(self)


@dataclass
class Lemma31Run:
    """Rectangle problem with Dirichlet datum at the bottom edge.
    """
    alpha: float
    epsilon: float
    datum: str
    mean: float
    lhs37: float
    energy38: float
    norm_u0_sq: float
    norm_du0_sq: float
    ratio37: float
    ratio38: float
    iterations: int = 0


def solve_epsilon_problem(spec: ThinDomainSpec,
                          forcing: Forcing,
                          resolution: Tuple[int, int],
                          tol: float = 1e-10,
                          max_iter: Optional[int] = None,
                          guess: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> EpsilonRun:
    """P1 solution of int d1u d1phi + eps^-2 d2u d2phi + u phi = int f phi,
    natural boundary conditions everywhere.
    Args:
        spec: thin domain.
        forcing: f(x1, x2).
        resolution: (nx, ny), see `resolution_for`.
        tol, max_iter: CG settings.
        guess: (grid, u0), limit solution interpolated as the initial iterate.
    Returns:
        run with the a-priori quantities ||u||, ||d1u||, eps^-1 ||d2u||.
    """
    nx, ny = resolution
    mesh = mesh_domain(spec, nx, ny)
    mass = assemble_mass(mesh)
    matrix = assemble_stiffness(mesh, DiffusionTensor.thin(spec.epsilon)) + mass
    # interpolated load
    rhs = mass @ forcing(mesh.nodes[:, 0], mesh.nodes[:, 1])
    x0 = None if guess is None else np.interp(mesh.nodes[:, 0], *guess)
    u, report = solve_cg(matrix, rhs, tol, max_iter, x0=x0)
    d1, d2 = gradient_norms(mesh, u)
    return EpsilonRun(
        spec=spec,
        resolution=(nx, ny),
        mesh_stats=mesh.stats(),
        norms={'u': l2_norm(mesh, u), 'd1u': d1, 'd2u_scaled': d2 / spec.epsilon},
        report=report,
        mesh=mesh,
        u=Field(u, mesh.provenance))


def _l2_on(mesh: Mesh, values: np.ndarray, mask: np.ndarray) -> float:
    """L2 norm over the selected triangles.
    """
    local = values[mesh.triangles[mask]]
    sq = mesh.areas[mask] / 12. * (np.sum(local ** 2, axis=1) + np.sum(local, axis=1) ** 2)
    return float(np.sqrt(max(sq.sum(), 0.)))


def error_vs_limit(run: EpsilonRun,
                   x: np.ndarray,
                   u0: np.ndarray) -> Tuple[float, float]:
    """L2 distance between u^eps(x1, x2) and u0(x1) on the rescaled domain.
    Args:
        run: epsilon run with mesh and field.
        x: [np.float64; [S]], grid of the limit solution.
        u0: [np.float64; [S]], limit solution, linearly interpolated.
    Returns:
        absolute and relative (w.r.t. ||u^eps||) errors.
    """
    assert run.mesh is not None and run.u is not None, 'run should keep its field'
    mesh, u = run.mesh, run.u.values
    diff = u - np.interp(mesh.nodes[:, 0], x, u0)
    abs_error = l2_norm(mesh, diff)
    norm = run.norms['u']
    rel_error = abs_error / norm if norm > 0 else (0. if abs_error == 0 else np.inf)
    # oscillating layer below -h0
    layer = mesh.centroids[:, 1] < -run.spec.h.min
    run.abs_error, run.rel_error = abs_error, rel_error
    run.layer_error = _l2_on(mesh, diff, layer)
    return abs_error, rel_error


def _epsilon_task(args) -> EpsilonRun:
    """Solve and compare a single member of the sweep.
    """
    spec, forcing, resolution, policy, x, u0 = args
    run = solve_epsilon_problem(
        spec, forcing, resolution, policy.tol, policy.max_iter, guess=(x, u0))
    error_vs_limit(run, x, u0)
    return run.strip()


def fit_slope(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Least-squares slope of log(y) against log(x), None if degenerate.
    """
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        return None
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def non_monotone_pairs(values: Sequence[float]) -> int:
    """The number of adjacent pairs that fail to decrease.
    """
    values = np.asarray(values, dtype=np.float64)
    return int(np.sum(values[1:] >= values[:-1]))


def apriori_bounded(runs: List[Dict[str, object]], factor: float = 3.) -> bool:
    """Every a-priori quantity stays within `factor` times its value at the largest eps.
    """
    for key in ('norm_u', 'norm_d1u', 'norm_d2u_scaled'):
        values = np.array([run[key] for run in runs])
        if np.any(values > factor * values[0] + 1e-12):
            return False
    return True


def convergence_study(base: ThinDomainSpec,
                      forcing: Forcing,
                      eps_list: Sequence[float],
                      limit: Tuple[np.ndarray, np.ndarray],
                      policy: ResolutionPolicy,
                      workers: int = 1,
                      refinement_check: bool = True,
                      reduction: float = 0.5,
                      flat_tol: float = 1e-3,
                      progress: bool = True) -> ConvergenceReport:
    """Sweep epsilon and compare every solution to the same limit u0.
    Args:
        base: thin domain, its epsilon is replaced by the sweep values.
        forcing: f(x1, x2).
        eps_list: strictly decreasing epsilons, at least three.
        limit: (grid, u0) of the homogenized problem.
        policy: resolution policy.
        workers: the number of the concurrent solves.
        refinement_check: re-solve the largest eps with doubled resolution.
        reduction: required error ratio between the smallest and the largest eps.
        flat_tol: relative error bound of flat domains.
        progress: show a progress bar.
    Returns:
        convergence report.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ValueError(f'epsilon sweep requires at least three values, got {len(eps_list)}')
    if np.any(np.diff(eps_list) >= 0):
        raise ValueError('epsilon sweep should be strictly decreasing')
    x, u0 = limit
    specs = [dataclasses.replace(base, epsilon=eps) for eps in eps_list]
    # capacity check of the whole sweep before any solve
    resolutions = [
        resolution_for(spec, policy.points_per_period, policy.ny_min, policy.max_elements)
        for spec in specs]
    tasks = [
        (spec, forcing, res, policy, x, u0) for spec, res in zip(specs, resolutions)]

    runs: List[EpsilonRun] = []
    pool = Pool(workers) if workers > 1 else None
    try:
        results = pool.imap(_epsilon_task, tasks) if pool is not None \
            else map(_epsilon_task, tasks)
        with tqdm(total=len(tasks), disable=not progress, leave=False) as pbar:
            for spec in specs:
                try:
                    runs.append(next(results))
                except Exception as err:
                    raise SweepError(
                        spec.epsilon,
                        ConvergenceReport([run.summary() for run in runs]),
                        err) from err
                pbar.update()
                pbar.set_postfix({'eps': spec.epsilon, 'rel': runs[-1].rel_error})
    finally:
        if pool is not None:
            pool.terminate()
            pool.join()

    summaries = [run.summary() for run in runs]
    rel = [run.rel_error for run in runs]
    report = ConvergenceReport(summaries)
    report.smallest_affordable_epsilon = smallest_affordable_epsilon(
        base.g, base.h, base.alpha,
        policy.points_per_period, policy.ny_min, policy.max_elements)
    report.exact = base.g.kind == 'constant' and base.h.kind == 'constant' \
        and not forcing.depends_on_x2
    report.verdicts['apriori_bounds'] = apriori_bounded(summaries)
    if report.exact:
        report.verdicts['flat_exact'] = bool(max(rel) < flat_tol)
    else:
        report.slope = fit_slope(eps_list, rel)
        report.monotone = non_monotone_pairs(rel) <= 1
        report.verdicts['trend'] = bool(report.monotone and rel[-1] < rel[0])
        report.verdicts['reduction'] = bool(rel[-1] < reduction * rel[0])

    if refinement_check:
        spec = specs[0]
        fine = policy.refined()
        try:
            res = resolution_for(spec, fine.points_per_period, fine.ny_min, fine.max_elements)
        except CapacityError as err:
            report.refinement_skipped = str(err)
        else:
            refined = _epsilon_task((spec, forcing, res, fine, x, u0))
            report.refinement_delta = abs(refined.rel_error - rel[0])
    return report


class BoundaryDatum:
    """Polynomial Dirichlet datum u0 of the rectangle problem.
    """
    def __init__(self, coeffs: Sequence[float]):
        """Initializer.
        Args:
            coeffs: polynomial coefficients in increasing degree.
        """
        coeffs = [float(c) for c in coeffs]
        if not coeffs:
            raise ValueError('boundary datum requires at least one coefficient')
        self.poly = np.polynomial.Polynomial(coeffs)
        self.dpoly = self.poly.deriv()

    @classmethod
    def parse(cls, name: str) -> 'BoundaryDatum':
        """`linear` for u0(x) = x, `constant` for u0 = 1, or a coefficient list `[1, 0, 2]`.
        """
        name = name.strip()
        if name == 'linear':
            return cls([0., 1.])
        if name == 'constant':
            return cls([1.])
        try:
            return cls([float(c) for c in name.strip('[]() ').split(',') if c.strip()])
        except ValueError as err:
            raise ValueError(f'invalid boundary datum `{name}`: {err}') from err

    @property
    def constant(self) -> bool:
        return bool(np.allclose(self.poly.coef[1:], 0.))

    @property
    def monomial_degree(self) -> Optional[int]:
        """n if u0 = c x^n with c != 0, None otherwise.
        """
        nonzero = np.nonzero(self.poly.coef)[0]
        return int(nonzero[0]) if len(nonzero) == 1 else None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.poly(x)

    def describe(self) -> str:
        coef = list(map(float, self.poly.coef))
        if coef == [0., 1.]:
            return 'linear'
        if coef == [1.]:
            return 'constant'
        return str(coef)


def _gauss(func, a: float, b: float, points: int = 8) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(points)
    xs = 0.5 * (b + a) + 0.5 * (b - a) * nodes
    return float(0.5 * (b - a) * np.sum(weights * func(xs)))


def lemma31_harness(alpha: float,
                    eps_list: Sequence[float],
                    datum: BoundaryDatum,
                    nx: int = 32,
                    ny_min: int = 16,
                    max_elements: int = 2_000_000,
                    tol: float = 1e-10,
                    max_iter: Optional[int] = None,
                    progress: bool = True) -> List[Lemma31Run]:
    """Solve -d_xx u - eps^-2 d_yy u = 0 on Q_eps, u = u0 on Gamma_eps.
    Args:
        alpha: bottom oscillation order, > 1.
        eps_list: epsilons.
        datum: boundary datum u0.
        nx: horizontal cells across the rectangle.
        ny_min: lower bound of the vertical cells, see `rectangle_resolution`.
        max_elements: triangle budget.
        tol, max_iter: CG settings.
        progress: show a progress bar.
    Returns:
        runs with the left-hand sides of the two estimates and their ratios.
    """
    if not alpha > 1:
        raise ValueError(f'alpha must be > 1, got {alpha}')
    runs = []
    for eps in tqdm(eps_list, disable=not progress, leave=False):
        rect = RectangleSpec(float(eps), alpha)
        nx_, ny = rectangle_resolution(rect, nx, ny_min)
        if 2 * nx_ * ny > max_elements:
            raise CapacityError(nx_, ny, max_elements)
        mesh = mesh_rectangle(rect, nx_, ny)
        stiff = assemble_stiffness(mesh, DiffusionTensor.thin(rect.epsilon))
        a, b = -rect.half_width, rect.half_width
        mean = _gauss(datum, a, b) / rect.area
        norm_sq = _gauss(lambda s: datum(s) ** 2, a, b)
        dnorm_sq = _gauss(lambda s: datum.dpoly(s) ** 2, a, b)

        # constants lie in the kernel, solve for u - mean
        gamma = mesh.nodes_on(GAMMA)
        system = apply_dirichlet(
            (stiff, np.zeros(mesh.n_nodes)), gamma, datum(mesh.nodes[gamma, 0]) - mean)
        reduced, report = solve_cg(system.matrix, system.rhs, tol, max_iter)
        w = system.expand(reduced)

        lhs = l2_norm(mesh, w) ** 2
        d1, d2 = gradient_norms(mesh, w)
        work = d1 ** 2 + (d2 / rect.epsilon) ** 2
        scale = rect.epsilon ** (alpha - 1)

        def ratio(value, denom):
            return value / (scale * denom) if denom > 0 else 0.

        runs.append(Lemma31Run(
            alpha=alpha, epsilon=rect.epsilon, datum=datum.describe(), mean=mean,
            lhs37=lhs, energy38=work, norm_u0_sq=norm_sq, norm_du0_sq=dnorm_sq,
            ratio37=ratio(lhs, norm_sq), ratio38=ratio(work, dnorm_sq),
            iterations=report.iterations))
    return runs


def lemma31_verdicts(runs: List[Lemma31Run],
                     datum: BoundaryDatum,
                     spread: float = 3.,
                     slope_slack: float = 0.2) -> Dict[str, object]:
    """Bounded-constant checks of the two rectangle estimates.
    Ratios should stay within `spread` of each other across the sweep.
    For monomial data x^n the fitted slope of the left-hand side should reach
    (alpha - 1) + (2n + 1) alpha, the exponent of eps^(alpha - 1) ||u0||^2.
    Returns:
        verdicts, fitted log-log slopes and the ratio spreads.
    """
    eps = [run.epsilon for run in runs]
    out: Dict[str, object] = {}
    if datum.constant:
        out['constant_exact'] = bool(all(
            run.lhs37 < 1e-10 and run.energy38 < 1e-10 for run in runs))
        return {'verdicts': out}
    spreads = {}
    for key in ('ratio37', 'ratio38'):
        values = np.array([getattr(run, key) for run in runs])
        positive = bool(np.all(values > 0))
        spreads[key] = float(values.max() / values.min()) if positive else None
        out[f'{key}_bounded'] = positive and spreads[key] < spread
    slope37 = fit_slope(eps, [run.lhs37 for run in runs])
    expected = None
    degree = datum.monomial_degree
    if degree is not None and slope37 is not None:
        alpha = runs[0].alpha
        expected = (alpha - 1) + (2 * degree + 1) * alpha
        out['slope37'] = bool(slope37 >= expected - slope_slack)
    return {
        'verdicts': out,
        'slope37': slope37,
        'slope37_expected': expected,
        'slope38': fit_slope(eps, [run.energy38 for run in runs]),
        'spread': spreads}
