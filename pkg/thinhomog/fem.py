from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh


class ConvergenceError(RuntimeError):
    """Conjugate gradient failed to reach the tolerance.
    """
    def __init__(self, iterations: int, history: List[float]):
        """Initializer.
        Args:
            iterations: performed iterations.
            history: relative residual history.
        """
        self.iterations = iterations
        self.history = history
        super().__init__(
            f'CG did not converge in {iterations} iterations, '
            f'relative residual {history[-1]:.3e}')


@dataclass(frozen=True)
class DiffusionTensor:
    """Diagonal anisotropic diffusion diag(a11, a22).
    """
    a11: float = 1.
    a22: float = 1.

    def __post_init__(self):
        if not (self.a11 > 0 and self.a22 > 0):
            raise ValueError(f'diffusion should be positive, got ({self.a11}, {self.a22})')

    @classmethod
    def thin(cls, epsilon: float) -> 'DiffusionTensor':
        """Tensor (1, 1 / eps^2) of the rescaled thin-domain operator.
        """
        return cls(1., 1. / epsilon ** 2)


@dataclass
class Field:
    """Nodal P1 field on a mesh.
    """
    values: np.ndarray
    provenance: str = ''

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        assert np.all(np.isfinite(self.values)), 'field should be finite'

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class SolveReport:
    """Outcome of an iterative solve.
    """
    iterations: int
    residual: float
    converged: bool
    history: List[float] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            'iterations': self.iterations,
            'residual': self.residual,
            'converged': self.converged}


def element_gradients(mesh: Mesh) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of the barycentric basis functions.
    Args:
        mesh: triangulation.
    Returns:
        [np.float64; [T, 3]], d/dx1 of each local basis function.
        [np.float64; [T, 3]], d/dx2 of each local basis function.
    """
    # [T, 3, 2]
    xy = mesh.nodes[mesh.triangles]
    x, y = xy[..., 0], xy[..., 1]
    # [T, 1]
    area2 = (2. * mesh.areas)[:, None]
    # cyclic differences y_{i+1} - y_{i+2}, x_{i+2} - x_{i+1}
    dx1 = (np.roll(y, -1, axis=1) - np.roll(y, -2, axis=1)) / area2
    dx2 = (np.roll(x, -2, axis=1) - np.roll(x, -1, axis=1)) / area2
    return dx1, dx2


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    """Assemble [T, 3, 3] element matrices into a global CSR matrix.
    """
    n = mesh.n_nodes
    # [T, 3, 3]
    rows = np.broadcast_to(mesh.triangles[:, :, None], local.shape)
    cols = np.broadcast_to(mesh.triangles[:, None, :], local.shape)
    return sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()


def assemble_stiffness(mesh: Mesh, tensor: DiffusionTensor) -> sp.csr_matrix:
    """Stiffness of int a11 du/dx1 dv/dx1 + a22 du/dx2 dv/dx2.
    """
    dx1, dx2 = element_gradients(mesh)
    # [T, 3, 3]
    local = mesh.areas[:, None, None] * (
        tensor.a11 * dx1[:, :, None] * dx1[:, None, :]
        + tensor.a22 * dx2[:, :, None] * dx2[:, None, :])
    return _scatter(mesh, local)


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Exact P1 mass matrix, area / 12 (1 + delta_ij).
    """
    # [3, 3]
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.
    return _scatter(mesh, mesh.areas[:, None, None] * ref[None])


def assemble_boundary_load(mesh: Mesh,
                           tag: str,
                           density: Callable[[np.ndarray], np.ndarray],
                           projected: bool = False) -> np.ndarray:
    """Line load int_{tag} density phi ds, two-point Gauss per edge.
    Args:
        mesh: triangulation.
        tag: boundary tag.
        density: vectorized function of [np.float64; [Q, 2]] points.
        projected: measure the edges by their horizontal projection dx1
            instead of the arclength.
    Returns:
        [np.float64; [N]], load vector.
    """
    # [E, 2]
    edges = mesh.edges_with(tag)
    a, b = mesh.nodes[edges[:, 0]], mesh.nodes[edges[:, 1]]
    # [E]
    measure = np.abs(b[:, 0] - a[:, 0]) if projected \
        else np.linalg.norm(b - a, axis=-1)
    load = np.zeros(mesh.n_nodes)
    for lam in (0.5 - 0.5 / np.sqrt(3.), 0.5 + 0.5 / np.sqrt(3.)):
        # [E, 2]
        points = (1. - lam) * a + lam * b
        # [E], unit weights summing to the edge measure
        value = 0.5 * measure * np.asarray(density(points), dtype=np.float64)
        np.add.at(load, edges[:, 0], (1. - lam) * value)
        np.add.at(load, edges[:, 1], lam * value)
    return load


class ReducedSystem:
    """Linear system on reduced unknowns, full = prolong @ reduced + offset.
    """
    def __init__(self,
                 matrix: sp.csr_matrix,
                 rhs: np.ndarray,
                 prolong: sp.csr_matrix,
                 offset: np.ndarray):
        """Initializer.
        Args:
            matrix: [R, R], reduced operator.
            rhs: [R], reduced right-hand side.
            prolong: [N, R], prolongation to the full unknowns.
            offset: [N], prescribed part of the full unknowns.
        """
        self.matrix = matrix.tocsr()
        self.rhs = rhs
        self.prolong = prolong.tocsr()
        self.offset = offset

    @classmethod
    def identity(cls, matrix: sp.spmatrix, rhs: np.ndarray) -> 'ReducedSystem':
        n = matrix.shape[0]
        return cls(matrix, np.asarray(rhs, dtype=np.float64),
                   sp.identity(n, format='csr'), np.zeros(n))

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        """[np.float64; [N]], re-expanded full solution.
        """
        return self.prolong @ reduced + self.offset

    def compose(self, inner: 'ReducedSystem') -> 'ReducedSystem':
        """Chain a further reduction of this system.
        """
        return ReducedSystem(
            inner.matrix, inner.rhs,
            self.prolong @ inner.prolong,
            self.prolong @ inner.offset + self.offset)


def _as_system(system) -> ReducedSystem:
    if isinstance(system, ReducedSystem):
        return system
    matrix, rhs = system
    return ReducedSystem.identity(matrix, rhs)


def apply_dirichlet(system,
                    nodes: Sequence[int],
                    values: np.ndarray) -> ReducedSystem:
    """Eliminate prescribed unknowns symmetrically.
    Args:
        system: (matrix, rhs) or reduced system.
        nodes: constrained unknowns of the system.
        values: [np.float64; [len(nodes)]], prescribed values.
    Returns:
        system on the free unknowns.
    """
    system = _as_system(system)
    n = system.matrix.shape[0]
    nodes = np.asarray(nodes, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=np.float64), nodes.shape)
    free = np.ones(n, dtype=bool)
    free[nodes] = False
    # [n]
    prescribed = np.zeros(n)
    prescribed[nodes] = values
    matrix = system.matrix
    rhs = system.rhs[free] - matrix[free] @ prescribed
    # [n, F], selection of the free unknowns
    index = np.nonzero(free)[0]
    prolong = sp.csr_matrix(
        (np.ones(len(index)), (index, np.arange(len(index)))), shape=(n, len(index)))
    return system.compose(
        ReducedSystem(matrix[free][:, free], rhs, prolong, prescribed))


def apply_periodic(system, pairs: np.ndarray) -> ReducedSystem:
    """Merge slave unknowns into their masters.
    Args:
        system: (matrix, rhs) or reduced system.
        pairs: [np.int64; [P, 2]], (master, slave) pairs.
    Returns:
        reduced system, value(master) = value(slave) after expansion.
    """
    system = _as_system(system)
    n = system.matrix.shape[0]
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    masters, slaves = pairs[:, 0], pairs[:, 1]
    if len(np.unique(slaves)) != len(slaves):
        raise ValueError('periodic pairs contain duplicated slaves')
    if np.any(np.isin(masters, slaves)):
        raise ValueError('periodic masters should not be slaves')
    # representative of each unknown
    rep = np.arange(n)
    rep[slaves] = masters
    keep = np.ones(n, dtype=bool)
    keep[slaves] = False
    # reduced numbering of the kept unknowns
    numbering = np.cumsum(keep) - 1
    prolong = sp.csr_matrix(
        (np.ones(n), (np.arange(n), numbering[rep])), shape=(n, int(keep.sum())))
    matrix = (prolong.T @ system.matrix @ prolong).tocsr()
    return system.compose(
        ReducedSystem(matrix, prolong.T @ system.rhs, prolong, np.zeros(n)))


def solve_cg(matrix: sp.spmatrix,
             rhs: np.ndarray,
             tol: float = 1e-10,
             max_iter: Optional[int] = None,
             pin: Optional[int] = None,
             x0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, SolveReport]:
    """Jacobi-preconditioned conjugate gradient.
    Args:
        matrix: [n, n], symmetric positive (semi-)definite operator.
        rhs: [n], right-hand side, orthogonal to constants if `pin` is given.
        tol: relative residual tolerance, w.r.t. the norm of `rhs`.
        max_iter: iteration budget, 20 n if not provided.
        pin: unknown fixed to zero, removes the constant kernel.
        x0: [n], initial guess, zero if not provided.
    Returns:
        [np.float64; [n]], solution.
        solve report.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    n = len(rhs)
    max_iter = max_iter or 20 * n
    if pin is not None:
        scale = max(np.abs(rhs).sum(), np.finfo(np.float64).tiny)
        assert abs(rhs.sum()) <= 1e-8 * scale, \
            f'incompatible load for a singular system, sum = {rhs.sum():.3e}'
        free = np.arange(n) != pin
        matrix = matrix.tocsr()[free][:, free]
        reduced, report = solve_cg(
            matrix, rhs[free], tol, max_iter, x0=None if x0 is None else x0[free])
        x = np.zeros(n)
        x[free] = reduced
        return x, report

    matrix = matrix.tocsr()
    normb = np.linalg.norm(rhs)
    if normb == 0.:
        return np.zeros(n), SolveReport(0, 0., True, [0.])
    # Jacobi
    inv_diag = 1. / matrix.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = rhs - matrix @ x
    history = [np.linalg.norm(r) / normb]
    if history[-1] <= tol:
        return x, SolveReport(0, history[-1], True, history)
    z = inv_diag * r
    p = z.copy()
    gamma = r @ z
    for it in range(1, max_iter + 1):
        ap = matrix @ p
        alpha = gamma / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        history.append(np.linalg.norm(r) / normb)
        if history[-1] <= tol:
            return x, SolveReport(it, history[-1], True, history)
        z = inv_diag * r
        gamma, gamma_old = r @ z, gamma
        p = z + (gamma / gamma_old) * p
    raise ConvergenceError(max_iter, history)


def integrate(mesh: Mesh, values: np.ndarray) -> float:
    """Exact integral of the P1 interpolant.
    """
    return float(np.sum(mesh.areas * values[mesh.triangles].mean(axis=1)))


def l2_norm(mesh: Mesh, values: np.ndarray) -> float:
    """Exact L2 norm sqrt(u^T M u) of the P1 interpolant.
    """
    # [T, 3]
    local = values[mesh.triangles]
    sq = mesh.areas / 12. * (np.sum(local ** 2, axis=1) + np.sum(local, axis=1) ** 2)
    return float(np.sqrt(max(sq.sum(), 0.)))


def l2_error(mesh: Mesh,
             values: np.ndarray,
             reference: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
    """L2 norm of the difference to a reference sampled at the nodes.
    """
    ref = reference(mesh.nodes[:, 0], mesh.nodes[:, 1])
    return l2_norm(mesh, values - ref)


def gradient_norms(mesh: Mesh, values: np.ndarray) -> Tuple[float, float]:
    """L2 norms of the partial derivatives of the P1 interpolant.
    """
    dx1, dx2 = element_gradients(mesh)
    local = values[mesh.triangles]
    # [T]
    d1, d2 = np.sum(dx1 * local, axis=1), np.sum(dx2 * local, axis=1)
    return float(np.sqrt(np.sum(mesh.areas * d1 ** 2))), \
        float(np.sqrt(np.sum(mesh.areas * d2 ** 2)))


def energy(mesh: Mesh, values: np.ndarray, tensor: DiffusionTensor) -> float:
    """Anisotropic energy int a11 |du/dx1|^2 + a22 |du/dx2|^2.
    """
    n1, n2 = gradient_norms(mesh, values)
    return tensor.a11 * n1 ** 2 + tensor.a22 * n2 ** 2
