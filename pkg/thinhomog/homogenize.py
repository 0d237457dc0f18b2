import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .fem import (
    DiffusionTensor, Field, SolveReport,
    apply_periodic, assemble_boundary_load, assemble_stiffness,
    element_gradients, integrate, solve_cg)
from .geometry import CellSpec, GeometryError, Profile
from .mesh import B1, Mesh, mesh_cell


@dataclass
class CellSolution:
    """Zero-mean, L1-periodic solution X of the cell problem.
    """
    cell: CellSpec
    mesh: Mesh
    X: Field
    report: SolveReport


@dataclass
class HomogenizedCoefficients:
    """Effective coefficients of the limit problem.
    """
    q_hat: float
    p: float
    area_ratio: float
    # [S], [S], theta tabulated over (-h0, g1)
    theta: Tuple[np.ndarray, np.ndarray]
    q_hat_error_bar: float = 0.
    # [S], [S], optional per-height profile q(x2)
    q_profile: Optional[Tuple[np.ndarray, np.ndarray]] = None
    q_hat_energy: Optional[float] = None
    resolution: Optional[Tuple[int, int]] = None
    iterations: int = 0
    # flux q_hat per solved nodes_per_period, finest first
    q_hat_levels: Optional[Dict[int, float]] = None

    def self_convergence(self) -> Optional[float]:
        """Relative change of q_hat between the two finest levels, None if single level.
        """
        if not self.q_hat_levels or len(self.q_hat_levels) < 2:
            return None
        fine, coarse = list(self.q_hat_levels.values())[:2]
        return abs(fine - coarse) / abs(fine)

    @property
    def mass_coeff(self) -> float:
        """Zeroth-order coefficient |Y*| / L1 + p.
        """
        return self.area_ratio + self.p

    @property
    def diffusivity(self) -> float:
        """A = q_hat / (|Y*| / L1 + p), the strong-form diffusion.
        """
        return self.q_hat / self.mass_coeff

    @property
    def q0(self) -> float:
        """q_hat / (|Y*| / L1), coefficient of the problem without bottom oscillation.
        """
        return self.q_hat / self.area_ratio

    def to_json(self) -> Dict[str, object]:
        return {
            'q_hat': self.q_hat,
            'q_hat_error_bar': self.q_hat_error_bar,
            'q_hat_energy': self.q_hat_energy,
            'p': self.p,
            'area_ratio': self.area_ratio,
            'mass_coeff': self.mass_coeff,
            'diffusivity': self.diffusivity,
            'q0': self.q0,
            'resolution': list(self.resolution) if self.resolution else None,
            'iterations': self.iterations,
            'q_hat_levels': self.q_hat_levels}


def cell_ny(cell: CellSpec, nodes_per_period: int) -> int:
    """Vertical cells matching the horizontal spacing.
    """
    return max(4, math.ceil(nodes_per_period * cell.height / cell.period))


def solve_cell_problem(cell: CellSpec,
                       nodes_per_period: int,
                       ny: Optional[int] = None,
                       tol: float = 1e-10,
                       max_iter: Optional[int] = None) -> CellSolution:
    """Solve -Laplace X = 0 on Y*, dX/dN = -g' / sqrt(1 + g'^2) on B1,
    homogeneous Neumann on B2, L1-periodic on B0.
    Args:
        cell: basic cell.
        nodes_per_period: horizontal resolution.
        ny: vertical resolution, matched to the horizontal spacing if not provided.
        tol, max_iter: CG settings.
    Returns:
        zero-mean cell solution.
    """
    g = cell.g
    if not g.smooth:
        raise GeometryError('cell problem requires a profile with continuous derivative')
    mesh = mesh_cell(cell, nodes_per_period, ny or cell_ny(cell, nodes_per_period))
    stiff = assemble_stiffness(mesh, DiffusionTensor())
    # (-g' / sqrt(1 + g'^2)) ds = -g'(y1) dy1 on the graph of g
    load = assemble_boundary_load(
        mesh, B1, lambda pts: -g.deriv(pts[:, 0]), projected=True)
    system = apply_periodic((stiff, load), mesh.periodic_pairs)
    reduced, report = solve_cg(system.matrix, system.rhs, tol, max_iter, pin=0)
    X = system.expand(reduced)
    # canonical representative, zero mean over Y*
    X = X - integrate(mesh, X) / mesh.area
    return CellSolution(cell, mesh, Field(X, mesh.provenance), report)


def _corrector_gradients(sol: CellSolution) -> Tuple[np.ndarray, np.ndarray]:
    """Element-wise dX/dy1 and dX/dy2.
    """
    dx1, dx2 = element_gradients(sol.mesh)
    local = sol.X.values[sol.mesh.triangles]
    return np.sum(dx1 * local, axis=1), np.sum(dx2 * local, axis=1)


def compute_qhat(sol: CellSolution) -> float:
    """Flux form (1 / L1) int_{Y*} (1 - dX/dy1).
    """
    d1, _ = _corrector_gradients(sol)
    return float(np.sum(sol.mesh.areas * (1. - d1)) / sol.cell.period)


def compute_qhat_energy(sol: CellSolution) -> float:
    """Energy form (1 / L1) int_{Y*} |grad(y1 - X)|^2.
    """
    d1, d2 = _corrector_gradients(sol)
    return float(np.sum(sol.mesh.areas * ((1. - d1) ** 2 + d2 ** 2)) / sol.cell.period)


def boundary_work(sol: CellSolution) -> Tuple[float, float]:
    """Both sides of the weak-form identity tested with X itself.
    Returns:
        int |grad X|^2 and int_{B1} (-g' / sqrt(1 + g'^2)) X ds.
    """
    g = sol.cell.g
    d1, d2 = _corrector_gradients(sol)
    load = assemble_boundary_load(
        sol.mesh, B1, lambda pts: -g.deriv(pts[:, 0]), projected=True)
    return float(np.sum(sol.mesh.areas * (d1 ** 2 + d2 ** 2))), float(load @ sol.X.values)


def compute_p(h: Profile) -> float:
    """Mass correction of the bottom oscillation, mean(h) - min(h).
    """
    return h.mean - h.min


def compute_area_ratio(cell: CellSpec) -> float:
    """|Y*| / L1 = mean(g) + h0.
    """
    return cell.g.mean + cell.h0


def compute_theta(cell: CellSpec, x2: float) -> float:
    """Horizontal fraction of the cell occupied by Y* at height x2.
    Args:
        cell: basic cell.
        x2: height in (-h0, g1).
    Returns:
        measure{y1 in (0, L1) : g(y1) > x2} / L1.
    """
    g = cell.g
    if not -cell.h0 < x2 < g.max:
        raise ValueError(f'x2 should lie in ({-cell.h0}, {g.max}), got {x2}')
    if x2 <= g.min:
        return 1.
    # [J, 2]
    intervals = g.superlevel(x2)
    return float(np.sum(intervals[:, 1] - intervals[:, 0]) / cell.period)


def theta_table(cell: CellSpec, samples: int) -> Tuple[np.ndarray, np.ndarray]:
    """Tabulate theta at the midpoints of a uniform partition of (-h0, g1).
    """
    edges = np.linspace(-cell.h0, cell.g.max, samples + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    return mids, np.array([compute_theta(cell, z) for z in mids])


def q_profile(sol: CellSolution, samples: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-height coefficient q(x2) by horizontal strip quadrature.
    Elements are binned by centroid height, so the strip sum of q dx2
    reproduces the flux form of q_hat exactly.
    Args:
        sol: cell solution.
        samples: the number of the strips over (-h0, g1).
    Returns:
        [np.float64; [samples]], strip midpoints.
        [np.float64; [samples]], strip averages of q.
    """
    cell = sol.cell
    edges = np.linspace(-cell.h0, cell.g.max, samples + 1)
    width = edges[1] - edges[0]
    d1, _ = _corrector_gradients(sol)
    heights = sol.mesh.centroids[:, 1]
    bins = np.clip(np.searchsorted(edges, heights, side='right') - 1, 0, samples - 1)
    sums = np.bincount(bins, weights=sol.mesh.areas * (1. - d1), minlength=samples)
    return 0.5 * (edges[1:] + edges[:-1]), sums / (cell.period * width)


def richardson(coarse: float, fine: float, order: int = 2) -> Tuple[float, float]:
    """Richardson extrapolation under mesh halving.
    Returns:
        extrapolant and its error bar.
    """
    delta = (fine - coarse) / (2 ** order - 1)
    return fine + delta, abs(delta)


def homogenized_coefficients(cell: CellSpec,
                             h: Profile,
                             nodes_per_period: int,
                             theta_samples: int = 64,
                             extrapolate: bool = True,
                             tol: float = 1e-10,
                             max_iter: Optional[int] = None,
                             progress: bool = False) -> HomogenizedCoefficients:
    """Cell analysis, q_hat with Richardson error bar, p, |Y*| / L1 and theta.
    Args:
        cell: basic cell.
        h: bottom profile.
        nodes_per_period: finest cell resolution.
        theta_samples: tabulation size of theta and q(x2).
        extrapolate: solve also at half resolution and extrapolate.
        tol, max_iter: CG settings.
        progress: show a progress bar over the resolution levels.
    Returns:
        homogenized coefficients.
    """
    levels = [nodes_per_period]
    if extrapolate and cell.g.kind != 'constant' and nodes_per_period >= 16:
        levels.append(nodes_per_period // 2)
    solutions = []
    with tqdm(levels, disable=not progress, leave=False) as pbar:
        for level in pbar:
            pbar.set_postfix({'nodes_per_period': level})
            solutions.append(solve_cell_problem(cell, level, tol=tol, max_iter=max_iter))
    # [L], finest first
    q_levels = [compute_qhat(sol) for sol in solutions]
    q_hat, error_bar = q_levels[0], 0.
    if len(q_levels) > 1:
        q_hat, error_bar = richardson(q_levels[1], q_levels[0])
    fine = solutions[0]
    return HomogenizedCoefficients(
        q_hat=q_hat,
        p=compute_p(h),
        area_ratio=compute_area_ratio(cell),
        theta=theta_table(cell, theta_samples),
        q_hat_error_bar=error_bar,
        q_profile=q_profile(fine, theta_samples),
        q_hat_energy=compute_qhat_energy(fine),
        resolution=(nodes_per_period, cell_ny(cell, nodes_per_period)),
        iterations=sum(sol.report.iterations for sol in solutions),
        q_hat_levels=dict(zip(levels, q_levels)))
