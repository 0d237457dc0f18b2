import ast
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

ArrayLike = Union[float, np.ndarray]


class GeometryError(ValueError):
    """Invalid profile or domain description.
    """


class Profile:
    """Periodic boundary profile, the functions g and h of the thin domain.
    """
    KINDS = ('constant', 'cosine', 'linear')

    def __init__(self,
                 kind: str,
                 period: float = 1.,
                 base: float = 0.,
                 terms: Sequence[Tuple[float, int, float]] = (),
                 knots: Sequence[Tuple[float, float]] = ()):
        """Initializer.
        Args:
            kind: profile family, one of `Profile.KINDS`.
            period: L, period of the profile.
            base: constant offset, value of constant profiles.
            terms: cosine terms, (amplitude, harmonic, phase),
                b + sum a cos(2pi k y / L + phase).
            knots: piecewise-linear knots (y, value) over one period.
        """
        if kind not in Profile.KINDS:
            raise GeometryError(f'unknown profile kind `{kind}`')
        if not period > 0:
            raise GeometryError(f'period should be positive, got {period}')
        self.kind = kind
        self.period = float(period)
        self.base = float(base)
        self.terms = tuple(
            (float(a), int(k), float(phase)) for a, k, phase in terms)
        for _, k, _ in self.terms:
            if k < 1:
                raise GeometryError(f'harmonic should be >= 1, got {k}')
        self.knots = tuple((float(y), float(v)) for y, v in knots)
        if kind == 'linear':
            self._prepare_knots()
        # cached statistics
        self.min, self.max = self._extrema()
        self.mean = self._mean()

    @classmethod
    def constant(cls, value: float, period: float = 1.) -> 'Profile':
        return cls('constant', period, base=value)

    @classmethod
    def cosine(cls,
               base: float,
               terms: Sequence[Tuple],
               period: float = 1.) -> 'Profile':
        """Cosine series, terms as (amplitude, harmonic[, phase]).
        """
        return cls('cosine', period, base=base, terms=[
            (t[0], t[1], t[2] if len(t) > 2 else 0.) for t in terms])

    @classmethod
    def sine(cls,
             base: float,
             terms: Sequence[Tuple],
             period: float = 1.) -> 'Profile':
        """Sine series, cos(x - pi/2) = sin(x).
        """
        return cls.cosine(
            base, [(t[0], t[1], -np.pi / 2) for t in terms], period)

    @classmethod
    def linear(cls,
               knots: Sequence[Tuple[float, float]],
               period: float = 1.) -> 'Profile':
        return cls('linear', period, knots=knots)

    @property
    def smooth(self) -> bool:
        """Whether the derivative is continuous.
        """
        return self.kind != 'linear'

    def _prepare_knots(self):
        """Sort the knots and build the closed periodic polyline.
        """
        if len(self.knots) < 2:
            raise GeometryError('linear profile requires at least two knots')
        # [K, 2]
        knots = np.array(sorted(self.knots))
        ys = knots[:, 0]
        if ys[0] < 0 or ys[-1] >= self.period:
            raise GeometryError('knots should lie in [0, period)')
        if np.any(np.diff(ys) <= 0):
            raise GeometryError('knots should have distinct abscissae')
        # [K + 1], closed by the first knot shifted by one period
        self._ys = np.append(ys, ys[0] + self.period)
        self._vs = np.append(knots[:, 1], knots[0, 1])

    def value(self, x: ArrayLike) -> ArrayLike:
        """Evaluate the profile.
        Args:
            x: [np.float64; [...]], positions.
        Returns:
            [np.float64; [...]], periodic values.
        """
        x = np.asarray(x, dtype=np.float64)
        if self.kind == 'constant':
            return np.full_like(x, self.base)[()]
        if self.kind == 'cosine':
            out = np.full_like(x, self.base)
            for a, k, phase in self.terms:
                out = out + a * np.cos(2 * np.pi * k * x / self.period + phase)
            return out[()]
        # linear, shift into [ys[0], ys[0] + L)
        local = np.mod(x - self._ys[0], self.period) + self._ys[0]
        return np.interp(local, self._ys, self._vs)[()]

    __call__ = value

    def deriv(self, x: ArrayLike) -> ArrayLike:
        """Evaluate the derivative, one-sided (right) at linear kinks.
        """
        x = np.asarray(x, dtype=np.float64)
        if self.kind == 'constant':
            return np.zeros_like(x)[()]
        if self.kind == 'cosine':
            out = np.zeros_like(x)
            for a, k, phase in self.terms:
                omega = 2 * np.pi * k / self.period
                out = out - a * omega * np.sin(omega * x + phase)
            return out[()]
        local = np.mod(x - self._ys[0], self.period) + self._ys[0]
        # [K]
        slopes = np.diff(self._vs) / np.diff(self._ys)
        idx = np.clip(
            np.searchsorted(self._ys, local, side='right') - 1, 0, len(slopes) - 1)
        return slopes[idx][()]

    def _extrema(self) -> Tuple[float, float]:
        """Exact minimum and maximum per family.
        """
        if self.kind == 'constant':
            return self.base, self.base
        if self.kind == 'linear':
            return float(self._vs.min()), float(self._vs.max())
        if len(self.terms) == 1:
            amp = abs(self.terms[0][0])
            return self.base - amp, self.base + amp
        # critical points of the series, bracketed on a fine grid
        grid = self.sample_grid()
        crit = list(grid[[0]])
        deriv = self.deriv(grid)
        for i in np.nonzero(deriv[:-1] * deriv[1:] <= 0)[0]:
            if deriv[i] == 0:
                crit.append(grid[i])
            elif deriv[i + 1] != 0:
                crit.append(brentq(self.deriv, grid[i], grid[i + 1], xtol=1e-14))
        values = self.value(np.array(crit))
        return float(values.min()), float(values.max())

    def _mean(self) -> float:
        """Exact period average.
        """
        if self.kind != 'linear':
            # every cosine term has zero mean
            return self.base
        widths = np.diff(self._ys)
        return float(
            np.sum(0.5 * (self._vs[1:] + self._vs[:-1]) * widths) / self.period)

    def sample_grid(self, per_harmonic: int = 64) -> np.ndarray:
        """Sampling grid over one period, fine w.r.t. the fastest variation.
        Args:
            per_harmonic: samples per period of the highest harmonic.
        Returns:
            [np.float64; [S]], sorted positions in [0, L], end points included.
        """
        if self.kind == 'linear':
            inner = np.mod(self._ys[:-1], self.period)
            return np.unique(np.concatenate([[0., self.period], inner]))
        kmax = max([k for _, k, _ in self.terms], default=1)
        return np.linspace(0., self.period, per_harmonic * kmax + 1)

    def level_roots(self, level: float) -> np.ndarray:
        """Sorted roots of profile(y) = level over one period.
        """
        grid = self.sample_grid()
        values = self.value(grid) - level
        roots = [grid[i] for i in np.nonzero(values == 0.)[0]]
        for i in np.nonzero(values[:-1] * values[1:] < 0.)[0]:
            roots.append(brentq(
                lambda y: self.value(y) - level, grid[i], grid[i + 1], xtol=1e-14))
        return np.unique(np.round(np.array(roots, dtype=np.float64), 13))

    def superlevel(self, level: float) -> np.ndarray:
        """Intervals of one period where the profile exceeds the level.
        Returns:
            [np.float64; [J, 2]], sorted disjoint intervals in [0, L].
        """
        cuts = np.unique(np.concatenate([[0., self.period], self.level_roots(level)]))
        cuts = cuts[(cuts >= 0.) & (cuts <= self.period)]
        # [J']
        inside = self.value(0.5 * (cuts[1:] + cuts[:-1])) > level
        starts = cuts[:-1][inside & ~np.r_[False, inside[:-1]]]
        ends = cuts[1:][inside & ~np.r_[inside[1:], False]]
        return np.stack([starts, ends], axis=-1)

    def describe(self) -> str:
        """Canonical descriptor, inverse of `Profile.parse`.
        """
        if self.kind == 'constant':
            return f'constant({self.base!r}, period={self.period!r})'
        if self.kind == 'cosine':
            terms = ', '.join(f'({a!r}, {k!r}, {p!r})' for a, k, p in self.terms)
            return f'cosine(base={self.base!r}, terms=[{terms}], ' \
                f'period={self.period!r})'
        knots = ', '.join(f'({y!r}, {v!r})' for y, v in self.knots)
        return f'linear(knots=[{knots}], period={self.period!r})'

    def __repr__(self) -> str:
        return f'Profile<{self.describe()}>'

    def __eq__(self, other) -> bool:
        return isinstance(other, Profile) and self.describe() == other.describe()

    def __hash__(self) -> int:
        return hash(self.describe())

    @staticmethod
    def parse(descriptor: str) -> 'Profile':
        """Parse a profile descriptor, e.g. `cosine(base=1.0, terms=[(0.5, 1)])`.
        Args:
            descriptor: call-like descriptor string.
        Returns:
            parsed profile.
        """
        name, args, kwargs = parse_call(descriptor)
        factories = {
            'constant': Profile.constant,
            'cosine': Profile.cosine,
            'sine': Profile.sine,
            'linear': Profile.linear}
        if name not in factories:
            raise GeometryError(
                f'unknown profile `{name}`, expected one of {sorted(factories)}')
        try:
            return factories[name](*args, **kwargs)
        except TypeError as err:
            raise GeometryError(f'invalid arguments for `{name}`: {err}') from err


def parse_call(descriptor: str) -> Tuple[str, list, dict]:
    """Parse `name(arg, key=value)` where every argument is a python literal.
    Args:
        descriptor: descriptor string.
    Returns:
        function name, positional and keyword arguments.
    """
    try:
        node = ast.parse(descriptor.strip(), mode='eval').body
    except SyntaxError as err:
        raise GeometryError(f'malformed descriptor `{descriptor}`') from err
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name):
        raise GeometryError(f'descriptor should be a call, got `{descriptor}`')
    try:
        args = [ast.literal_eval(arg) for arg in node.args]
        kwargs = {kw.arg: ast.literal_eval(kw.value) for kw in node.keywords}
    except ValueError as err:
        raise GeometryError(
            f'descriptor arguments should be literals: `{descriptor}`') from err
    return node.func.id, args, kwargs


def eval_profile(profile: Profile, x: ArrayLike) -> ArrayLike:
    """Evaluate the periodic profile.
    """
    return profile.value(x)


def eval_deriv(profile: Profile, x: ArrayLike) -> ArrayLike:
    """Evaluate the derivative of the profile.
    """
    return profile.deriv(x)


@dataclass(frozen=True)
class ThinDomainSpec:
    """Rescaled thin domain {0 < x1 < 1, -h(x1 / eps^alpha) < x2 < g(x1 / eps)}.
    """
    epsilon: float
    alpha: float
    g: Profile
    h: Profile

    def __post_init__(self):
        if not 0. < self.epsilon < 1.:
            raise GeometryError(f'epsilon should be in (0, 1), got {self.epsilon}')
        if not self.alpha > 1.:
            raise GeometryError(f'alpha must be > 1, got {self.alpha}')
        check_roles(self.g, self.h)

    @property
    def bottom_period(self) -> float:
        """Physical period of the bottom oscillation, eps^alpha L2.
        """
        return self.epsilon ** self.alpha * self.h.period

    @property
    def top_period(self) -> float:
        """Physical period of the top oscillation, eps L1.
        """
        return self.epsilon * self.g.period

    def lower(self, x1: ArrayLike) -> ArrayLike:
        return -self.h(np.asarray(x1) / self.epsilon ** self.alpha)

    def upper(self, x1: ArrayLike) -> ArrayLike:
        return self.g(np.asarray(x1) / self.epsilon)

    def fixed_bounds(self) -> Tuple[float, float]:
        """Vertical extent (-h0, g1) of the fixed part of the domain split.
        """
        return -self.h.min, self.g.max

    def layer_bounds(self, x1: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
        """Oscillating bottom layer (-h(x1 / eps^alpha), -h0).
        """
        lower = self.lower(x1)
        return lower, np.full_like(lower, -self.h.min)


def check_roles(g: Profile, h: Profile):
    """Validate the bounds of the top and bottom profiles.
    """
    if not g.min > 0:
        raise GeometryError(f'top profile should satisfy min g > 0, got {g.min}')
    if h.min < 0:
        raise GeometryError(f'bottom profile should satisfy min h >= 0, got {h.min}')


def _check_range(x1: ArrayLike):
    x1 = np.asarray(x1)
    if np.any(x1 < 0.) or np.any(x1 > 1.):
        raise GeometryError('x1 should lie in [0, 1]')


def lower_boundary(spec: ThinDomainSpec, x1: ArrayLike) -> ArrayLike:
    """Bottom boundary -h(x1 / eps^alpha).
    """
    _check_range(x1)
    return spec.lower(x1)


def upper_boundary(spec: ThinDomainSpec, x1: ArrayLike) -> ArrayLike:
    """Top boundary g(x1 / eps).
    """
    _check_range(x1)
    return spec.upper(x1)


def thickness(spec: ThinDomainSpec, x1: ArrayLike) -> ArrayLike:
    """Fiber length g(x1 / eps) + h(x1 / eps^alpha).
    """
    return upper_boundary(spec, x1) - lower_boundary(spec, x1)


@dataclass(frozen=True)
class CellSpec:
    """Basic cell Y* = {0 < y1 < L1, -h0 < y2 < g(y1)}.
    """
    g: Profile
    h0: float

    def __post_init__(self):
        if self.h0 < 0:
            raise GeometryError(f'h0 should be non-negative, got {self.h0}')
        if not self.g.min > 0:
            raise GeometryError('top profile should satisfy min g > 0')

    @classmethod
    def from_domain(cls, spec: ThinDomainSpec) -> 'CellSpec':
        return cls(spec.g, spec.h.min)

    @property
    def period(self) -> float:
        return self.g.period

    @property
    def height(self) -> float:
        """Maximal height g1 + h0.
        """
        return self.g.max + self.h0

    def bounds(self) -> Tuple[Callable, Callable]:
        """Lower and upper graph functions of the cell.
        """
        h0 = self.h0
        return lambda y1: np.full_like(np.asarray(y1, dtype=np.float64), -h0), self.g


@dataclass(frozen=True)
class RectangleSpec:
    """Thin rectangle Q_eps = (-eps^alpha, eps^alpha) x (0, 1), Gamma_eps at y = 0.
    """
    epsilon: float
    alpha: float

    def __post_init__(self):
        if not 0. < self.epsilon < 1.:
            raise GeometryError(f'epsilon should be in (0, 1), got {self.epsilon}')
        if not self.alpha > 1.:
            raise GeometryError(f'alpha must be > 1, got {self.alpha}')

    @property
    def half_width(self) -> float:
        return self.epsilon ** self.alpha

    @property
    def area(self) -> float:
        return 2 * self.half_width


def constant_graph(value: float) -> Callable[[ArrayLike], np.ndarray]:
    """Graph function of a horizontal line.
    """
    return lambda x: np.full_like(np.asarray(x, dtype=np.float64), value)


def profiles_flat(profiles: List[Optional[Profile]]) -> bool:
    """Whether every given profile is constant.
    """
    return all(p is None or p.kind == 'constant' for p in profiles)
