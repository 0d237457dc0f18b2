import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded

from .geometry import GeometryError, ThinDomainSpec, parse_call


class Forcing:
    """Right-hand side f(x1, x2) of the thin-domain problem.
    """
    depends_on_x2 = False

    def __call__(self, x1: np.ndarray, x2: Optional[np.ndarray] = None) -> np.ndarray:
        raise NotImplementedError('Forcing.__call__ is not implemented')

    def weak_limit(self, mass_coeff: float) -> Callable[[np.ndarray], np.ndarray]:
        """Weak limit of the fiber integrals.
        For x1-only forcings it is (|Y*| / L1 + p) f(x1).
        Args:
            mass_coeff: |Y*| / L1 + p.
        Returns:
            vectorized limit function of x1.
        """
        return lambda x1: mass_coeff * self(x1)

    def describe(self) -> str:
        raise NotImplementedError('Forcing.describe is not implemented')

    @staticmethod
    def parse(descriptor: str) -> 'Forcing':
        """Parse `cosine(k=1)` or `table(path='f.csv')`.
        """
        name, args, kwargs = parse_call(descriptor)
        try:
            if name == 'cosine':
                return CosineForcing(*args, **kwargs)
            if name == 'table':
                return TableForcing.load(*args, **kwargs)
        except TypeError as err:
            raise GeometryError(f'invalid arguments for `{name}`: {err}') from err
        raise GeometryError(f'unknown forcing `{name}`, expected cosine or table')


class CosineForcing(Forcing):
    """f(x1, x2) = cos(k pi x1).
    """
    def __init__(self, k: int = 1):
        if int(k) < 1:
            raise ValueError(f'mode k should be >= 1, got {k}')
        self.k = int(k)

    def __call__(self, x1, x2=None):
        return np.cos(self.k * np.pi * np.asarray(x1, dtype=np.float64))

    def describe(self) -> str:
        return f'cosine(k={self.k})'


class TableForcing(Forcing):
    """Tabulated f(x1), linearly interpolated.
    """
    def __init__(self, x: np.ndarray, values: np.ndarray, path: Optional[str] = None):
        """Initializer.
        Args:
            x: [np.float64; [S]], increasing abscissae covering [0, 1].
            values: [np.float64; [S]], forcing values.
            path: source file, kept for the descriptor.
        """
        self.x = np.asarray(x, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        self.path = path
        if self.x.shape != self.values.shape or len(self.x) < 2:
            raise ValueError('forcing table requires matching columns of length >= 2')
        if np.any(np.diff(self.x) <= 0):
            raise ValueError('forcing table abscissae should be increasing')

    @classmethod
    def load(cls, path: str) -> 'TableForcing':
        """Read a CSV table with header `x1,f`.
        """
        table = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
        if table.shape[1] < 2:
            raise ValueError(
                f'forcing table {path} should have columns `x1,f`, got {table.shape[1]} columns')
        return cls(table[:, 0], table[:, 1], path=path)

    def __call__(self, x1, x2=None):
        return np.interp(np.asarray(x1, dtype=np.float64), self.x, self.values)

    def describe(self) -> str:
        return f'table(path={self.path!r})'


class FiberForcing(Forcing):
    """x2-dependent forcing with a user-supplied weak limit of its fiber integrals.
    """
    depends_on_x2 = True

    def __init__(self,
                 func: Callable[[np.ndarray, np.ndarray], np.ndarray],
                 limit: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 name: str = 'fiber'):
        """Initializer.
        Args:
            func: vectorized f(x1, x2), picklable for concurrent sweeps.
            limit: weak limit of the fiber integrals, if known.
            name: label used in reports.
        """
        self.func = func
        self.limit = limit
        self.name = name

    def __call__(self, x1, x2=None):
        assert x2 is not None, 'x2-dependent forcing requires x2'
        return self.func(np.asarray(x1, dtype=np.float64), np.asarray(x2, dtype=np.float64))

    def weak_limit(self, mass_coeff: float):
        if self.limit is None:
            raise ValueError(
                'the weak limit of the fiber integrals should be supplied '
                'for x2-dependent forcings')
        return self.limit

    def describe(self) -> str:
        return self.name


def compute_fhat(spec: ThinDomainSpec,
                 forcing: Union[Forcing, Callable],
                 m: int,
                 points: int = 8) -> Tuple[np.ndarray, np.ndarray]:
    """Fiber integrals int_{-h(x1 / eps^alpha)}^{g(x1 / eps)} f(x1, x2) dx2.
    Args:
        spec: thin domain.
        forcing: f(x1, x2).
        m: the number of the grid cells on (0, 1).
        points: Gauss-Legendre points per fiber.
    Returns:
        [np.float64; [m + 1]], sample positions.
        [np.float64; [m + 1]], fiber integrals.
    """
    x = np.linspace(0., 1., m + 1)
    lo, up = spec.lower(x), spec.upper(x)
    # [Q]
    nodes, weights = np.polynomial.legendre.leggauss(points)
    # [m + 1, Q]
    x2 = 0.5 * (up + lo)[:, None] + 0.5 * (up - lo)[:, None] * nodes[None]
    x1 = np.broadcast_to(x[:, None], x2.shape)
    values = np.broadcast_to(np.asarray(forcing(x1, x2), dtype=np.float64), x2.shape)
    return x, 0.5 * (up - lo) * np.sum(values * weights[None], axis=-1)


def running_average_gap(spec: ThinDomainSpec,
                        forcing: Forcing,
                        limit: Callable[[np.ndarray], np.ndarray],
                        m: int,
                        points_per_period: int = 16) -> float:
    """sup_x |int_0^x (f_hat^eps - f_hat)|, vanishing under weak convergence.
    Args:
        spec: thin domain.
        forcing: f(x1, x2).
        limit: weak limit of the fiber integrals.
        m: the number of the grid cells on (0, 1), lower bound.
        points_per_period: samples per shortest boundary period.
    Returns:
        gap of the running averages.
    """
    periods = [
        period for period, profile in
        [(spec.top_period, spec.g), (spec.bottom_period, spec.h)]
        if profile.kind != 'constant']
    # rounding as in the mesh resolution
    cells = max(m, math.ceil(round(points_per_period / min(periods, default=1.), 9)))
    x, fhat = compute_fhat(spec, forcing, cells)
    running = cumulative_trapezoid(fhat - limit(x), x, initial=0.)
    return float(np.max(np.abs(running)))


@dataclass
class LimitProblem:
    """Homogenized Neumann problem int q u' phi' + c u phi = int f_hat phi.
    """
    q_hat: float
    mass_coeff: float
    f_hat: Union[Callable[[np.ndarray], np.ndarray], np.ndarray]
    m: int = 256

    def __post_init__(self):
        if not self.q_hat > 0:
            raise ValueError(f'q_hat should be positive, got {self.q_hat}')
        if not self.mass_coeff > 0:
            raise ValueError(f'mass coefficient should be positive, got {self.mass_coeff}')


def solve_limit(problem: LimitProblem) -> Tuple[np.ndarray, np.ndarray]:
    """P1 solution of the limit problem on a uniform grid, natural Neumann.
    Args:
        problem: limit problem, `f_hat` callable or sampled at the m + 1 nodes.
    Returns:
        [np.float64; [m + 1]], grid.
        [np.float64; [m + 1]], u0 at the grid.
    """
    m = problem.m
    if m < 8:
        raise ValueError(f'limit grid should have m >= 8 cells, got {m}')
    x = np.linspace(0., 1., m + 1)
    h = 1. / m
    fhat = problem.f_hat(x) if callable(problem.f_hat) else np.asarray(problem.f_hat)
    assert fhat.shape == x.shape, 'f_hat samples should match the grid'
    # mass pattern, (h / 6) tridiag(1, 4, 1), halved diagonal at the ends
    diag = np.full(m + 1, 4. * h / 6.)
    diag[[0, -1]] = 2. * h / 6.
    off = np.full(m, h / 6.)
    load = diag * fhat
    load[:-1] += off * fhat[1:]
    load[1:] += off * fhat[:-1]
    # stiffness (q / h) tridiag(-1, 2, -1), halved diagonal at the ends
    sdiag = np.full(m + 1, 2. / h)
    sdiag[[0, -1]] = 1. / h
    # [3, m + 1], banded storage
    banded = np.zeros((3, m + 1))
    banded[0, 1:] = -problem.q_hat / h + problem.mass_coeff * off
    banded[1] = problem.q_hat * sdiag + problem.mass_coeff * diag
    banded[2, :-1] = -problem.q_hat / h + problem.mass_coeff * off
    return x, solve_banded((1, 1), banded, load)


class CosineLimit:
    """Closed-form limit cos(k pi x) / (1 + A k^2 pi^2), A = q_hat / mass_coeff.
    """
    def __init__(self, q_hat: float, mass_coeff: float, k: int):
        if k < 1:
            raise ValueError(f'mode k should be >= 1, got {k}')
        self.k = k
        self.amplitude = 1. / (1. + q_hat / mass_coeff * (k * np.pi) ** 2)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.amplitude * np.cos(self.k * np.pi * np.asarray(x, dtype=np.float64))

    def deriv(self, x: np.ndarray) -> np.ndarray:
        return -self.amplitude * self.k * np.pi * np.sin(
            self.k * np.pi * np.asarray(x, dtype=np.float64))


def analytic_limit_cosine(q_hat: float, mass_coeff: float, k: int) -> CosineLimit:
    """Exact solution of the strong-form limit for f = cos(k pi x).
    """
    return CosineLimit(q_hat, mass_coeff, k)


def l2_norm_1d(x: np.ndarray, u: np.ndarray) -> float:
    """Exact L2 norm of the piecewise-linear interpolant.
    """
    h = np.diff(x)
    return float(np.sqrt(np.sum(h / 3. * (u[:-1] ** 2 + u[:-1] * u[1:] + u[1:] ** 2))))
