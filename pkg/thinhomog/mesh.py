import math
import os
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .geometry import (
    CellSpec, GeometryError, Profile, RectangleSpec, ThinDomainSpec, constant_graph)

# default boundary tags of graph-bounded domains
BOTTOM, TOP, LEFT, RIGHT = 'bottom', 'top', 'left', 'right'
# basic cell, upper B1, lower B2, lateral B0
B0, B1, B2 = 'B0', 'B1', 'B2'
# Dirichlet edge of the lemma rectangles
GAMMA = 'gamma'


class CapacityError(RuntimeError):
    """Requested mesh exceeds the element budget.
    """
    def __init__(self, nx: int, ny: int, cap: int, smallest: Optional[float] = None):
        """Initializer.
        Args:
            nx, ny: required resolution.
            cap: configured element budget.
            smallest: smallest affordable epsilon, if known.
        """
        self.nx, self.ny, self.cap, self.smallest = nx, ny, cap, smallest
        msg = f'mesh requires nx={nx}, ny={ny} ({2 * nx * ny} triangles), ' \
            f'exceeding the cap of {cap} triangles'
        if smallest is not None:
            msg += f'; smallest affordable epsilon is {smallest:.6g}'
        super().__init__(msg)


class Mesh:
    """Conforming P1 triangulation with tagged boundary edges.
    """
    def __init__(self,
                 nodes: np.ndarray,
                 triangles: np.ndarray,
                 boundary_edges: np.ndarray,
                 boundary_tags: np.ndarray,
                 periodic_pairs: Optional[np.ndarray] = None,
                 provenance: str = ''):
        """Initializer.
        Args:
            nodes: [np.float64; [N, 2]], node coordinates.
            triangles: [np.int64; [T, 3]], counterclockwise node indices.
            boundary_edges: [np.int64; [E, 2]], boundary edge end points.
            boundary_tags: [str; [E]], tag of each boundary edge.
            periodic_pairs: [np.int64; [P, 2]], (master, slave) node pairs.
            provenance: description of the generating domain and resolution.
        """
        self.nodes = np.asarray(nodes, dtype=np.float64)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.boundary_edges = np.asarray(boundary_edges, dtype=np.int64)
        self.boundary_tags = np.asarray(boundary_tags, dtype=object)
        self.periodic_pairs = np.zeros((0, 2), dtype=np.int64) \
            if periodic_pairs is None \
            else np.asarray(periodic_pairs, dtype=np.int64)
        self.provenance = provenance
        # [T]
        self.areas = self._signed_areas()
        if np.any(self.areas <= 0.):
            raise GeometryError(
                f'{int(np.sum(self.areas <= 0.))} triangles with non-positive area')

    def _signed_areas(self) -> np.ndarray:
        """Signed triangle areas.
        """
        # [T, 3, 2]
        xy = self.nodes[self.triangles]
        # [T, 2]
        e1, e2 = xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @property
    def centroids(self) -> np.ndarray:
        """[np.float64; [T, 2]], triangle centroids.
        """
        return self.nodes[self.triangles].mean(axis=1)

    @property
    def tags(self) -> set:
        return set(self.boundary_tags.tolist())

    def edges_with(self, tag: str) -> np.ndarray:
        """[np.int64; [E', 2]], boundary edges with the given tag.
        """
        if tag not in self.tags:
            raise KeyError(f'unknown boundary tag `{tag}`, available {sorted(self.tags)}')
        return self.boundary_edges[self.boundary_tags == tag]

    def nodes_on(self, tag: str) -> np.ndarray:
        """[np.int64; [N']], sorted nodes of the edges with the given tag.
        """
        return np.unique(self.edges_with(tag))

    def stats(self) -> Dict[str, object]:
        return {
            'nodes': self.n_nodes,
            'triangles': self.n_triangles,
            'area': self.area,
            'provenance': self.provenance}


def mesh_graph_domain(lower: Callable,
                      upper: Callable,
                      x_range: Tuple[float, float],
                      nx: int,
                      ny: int,
                      tags: Optional[Dict[str, str]] = None,
                      periodic: bool = False,
                      provenance: str = '') -> Mesh:
    """Structured mesh of {a < x < b, lower(x) < y < upper(x)}.
    Maps (s, t) to (s, lower(s) + t (upper(s) - lower(s))), splitting each
    quad along the diagonal from (i, j) to (i + 1, j + 1).
    Args:
        lower, upper: vectorized graph functions.
        x_range: (a, b), horizontal extent.
        nx, ny: the number of the cells in each direction.
        tags: renaming of the default `bottom`, `top`, `left`, `right` tags.
        periodic: pair the left and right boundary nodes.
        provenance: description of the domain.
    Returns:
        generated mesh.
    """
    if nx < 2 or ny < 2:
        raise ValueError(f'nx and ny should be >= 2, got ({nx}, {ny})')
    tags = {BOTTOM: BOTTOM, TOP: TOP, LEFT: LEFT, RIGHT: RIGHT, **(tags or {})}
    a, b = x_range
    # [nx + 1]
    xs = np.linspace(a, b, nx + 1)
    lo, up = np.asarray(lower(xs), dtype=np.float64), np.asarray(upper(xs), dtype=np.float64)
    if np.any(up - lo <= 0.):
        raise GeometryError(
            f'degenerate fiber at x = {xs[np.argmin(up - lo)]:.6g}')
    # [ny + 1]
    ts = np.linspace(0., 1., ny + 1)
    # [ny + 1, nx + 1], row j, column i
    ys = lo[None] + ts[:, None] * (up - lo)[None]
    nodes = np.stack([np.broadcast_to(xs[None], ys.shape), ys], axis=-1).reshape(-1, 2)

    def index(i, j):
        return j * (nx + 1) + i
    # [ny, nx]
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n00, n10 = index(i, j), index(i + 1, j)
    n11, n01 = index(i + 1, j + 1), index(i, j + 1)
    # [2 x nx x ny, 3]
    triangles = np.concatenate([
        np.stack([n00, n10, n11], axis=-1).reshape(-1, 3),
        np.stack([n00, n11, n01], axis=-1).reshape(-1, 3)])

    cols, rows = np.arange(nx), np.arange(ny)
    edges = [
        (np.stack([index(cols, 0), index(cols + 1, 0)], axis=-1), tags[BOTTOM]),
        (np.stack([index(cols + 1, ny), index(cols, ny)], axis=-1), tags[TOP]),
        (np.stack([index(0, rows + 1), index(0, rows)], axis=-1), tags[LEFT]),
        (np.stack([index(nx, rows), index(nx, rows + 1)], axis=-1), tags[RIGHT])]
    boundary = np.concatenate([e for e, _ in edges])
    labels = np.concatenate([[tag] * len(e) for e, tag in edges]).astype(object)

    pairs = None
    if periodic:
        js = np.arange(ny + 1)
        pairs = np.stack([index(0, js), index(nx, js)], axis=-1)
        if np.any(np.abs(nodes[pairs[:, 0], 1] - nodes[pairs[:, 1], 1]) >= 1e-12):
            raise GeometryError('lateral ordinates differ, profile is not periodic')

    return Mesh(nodes, triangles, boundary, labels, pairs,
                provenance or f'graph domain on [{a:.6g}, {b:.6g}], nx={nx}, ny={ny}')


def mesh_cell(cell: CellSpec, nodes_per_period: int, ny: int) -> Mesh:
    """Periodic mesh of the basic cell Y*.
    Args:
        cell: basic cell.
        nodes_per_period: the number of the horizontal cells per period.
        ny: the number of the vertical cells.
    Returns:
        mesh with B1 top, B2 bottom, B0 lateral tags and periodic pairs.
    """
    if nodes_per_period < 8:
        raise ValueError(f'nodes_per_period should be >= 8, got {nodes_per_period}')
    lower, upper = cell.bounds()
    return mesh_graph_domain(
        lower, upper, (0., cell.period), nodes_per_period, ny,
        tags={BOTTOM: B2, TOP: B1, LEFT: B0, RIGHT: B0},
        periodic=True,
        provenance=f'cell g={cell.g.describe()}, h0={cell.h0!r}, '
                   f'nodes_per_period={nodes_per_period}, ny={ny}')


def mesh_rectangle(rect: RectangleSpec, nx: int, ny: int) -> Mesh:
    """Mesh of the thin rectangle with the Dirichlet edge tagged `gamma`.
    """
    width = rect.half_width
    return mesh_graph_domain(
        constant_graph(0.), constant_graph(1.), (-width, width), nx, ny,
        tags={BOTTOM: GAMMA},
        provenance=f'rectangle eps={rect.epsilon!r}, alpha={rect.alpha!r}, '
                   f'nx={nx}, ny={ny}')


def rectangle_resolution(rect: RectangleSpec, nx: int, ny_min: int = 16) -> Tuple[int, int]:
    """Vertical cells of the rectangle such that eps * dy <= dx.
    """
    if nx < 2:
        raise ValueError(f'nx should be >= 2, got {nx}')
    ny = math.ceil(round(rect.epsilon * nx / rect.area, 9))
    return nx, max(ny_min, ny)


def _merge(intervals: np.ndarray, min_width: float) -> np.ndarray:
    """Sort, merge close intervals and drop the narrow ones.
    """
    intervals = intervals[intervals[:, 1] > intervals[:, 0]]
    if len(intervals) == 0:
        return intervals.reshape(0, 2)
    intervals = intervals[np.argsort(intervals[:, 0], kind='stable')]
    # gaps narrower than min_width are closed
    fresh = np.r_[True, intervals[1:, 0] > intervals[:-1, 1] + min_width]
    starts = np.nonzero(fresh)[0]
    merged = np.stack([
        intervals[starts, 0], np.maximum.reduceat(intervals[:, 1], starts)], axis=-1)
    return merged[merged[:, 1] - merged[:, 0] > min_width]


def _level_intervals(spec: ThinDomainSpec, level: float, min_width: float) -> np.ndarray:
    """[np.float64; [K, 2]], intervals of {0 < x1 < 1 : h(x1 / eps^alpha) > level}.
    """
    h, scale = spec.h, spec.epsilon ** spec.alpha
    # [J, 2]
    base = h.superlevel(level)
    shifts = np.arange(-1, math.ceil(1. / (scale * h.period)) + 1) * h.period
    # [P x J, 2]
    tiled = ((base[None] + shifts[:, None, None]) * scale).reshape(-1, 2)
    return _merge(np.clip(tiled, 0., 1.), min_width)


def _row_nodes(intervals: np.ndarray, nx: int) -> Tuple[np.ndarray, np.ndarray]:
    """Interval end points and the grid abscissae strictly inside.
    Args:
        intervals: [np.float64; [K, 2]], sorted disjoint intervals.
        nx: the number of the horizontal cells of the grid.
    Returns:
        [np.float64; [R]], sorted abscissae.
        [np.int64; [R]], owning interval of each node.
    """
    a, b = intervals.T
    # quarter-cell margin keeps the grid nodes apart from the end points
    first = np.ceil(a * nx + 0.25).astype(np.int64)
    last = np.floor(b * nx - 0.25).astype(np.int64)
    counts = np.maximum(last - first + 1, 0) + 2
    owner = np.repeat(np.arange(len(a)), counts)
    # [R], rank within the owning interval
    rank = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    xs = (first[owner] + rank - 1) / nx
    xs = np.where(rank == 0, a[owner], xs)
    xs = np.where(rank == counts[owner] - 1, b[owner], xs)
    return xs, owner


def _zip_rows(upper: Tuple[np.ndarray, np.ndarray, np.ndarray],
              lower: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
              strips: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Triangulate the strips between two horizontal node rows.
    Args:
        upper: node ids, abscissae and strips of the upper row, sorted.
        lower: node ids, abscissae, strips and owning pieces of the lower row.
        strips: the number of the strips, intervals of the upper row.
    Returns:
        [np.int64; [T, 3]], counterclockwise triangles.
        [np.int64; [E, 2]], lateral and gap edges.
        [np.float64; [E, 2]], abscissae of the edge end points.
    """
    uid, ux, us = upper
    lid, lx, ls, lown = lower
    order = np.lexsort((lx, ls))
    lid, lx, ls, lown = lid[order], lx[order], ls[order], lown[order]
    ids = np.arange(strips)
    ufirst, lfirst = np.searchsorted(us, ids), np.searchsorted(ls, ids)
    ulast, llast = np.searchsorted(us, ids, 'right') - 1, np.searchsorted(ls, ids, 'right') - 1

    # advancing events, lower row first on ties
    upos = np.nonzero(np.r_[False, us[1:] == us[:-1]])[0]
    lpos = np.nonzero(np.r_[False, ls[1:] == ls[:-1]])[0]
    kind = np.r_[np.zeros(len(lpos), dtype=np.int64), np.ones(len(upos), dtype=np.int64)]
    strip = np.r_[ls[lpos], us[upos]]
    order = np.lexsort((kind, np.r_[lx[lpos], ux[upos]], strip))
    kind, strip = kind[order], strip[order]
    # pointers before each event, relative to the strip start
    start = np.searchsorted(strip, strip)
    ucount = np.cumsum(kind) - kind
    lcount = np.cumsum(1 - kind) - (1 - kind)
    i = ufirst[strip] + ucount - ucount[start]
    j = lfirst[strip] + lcount - lcount[start]
    up = kind == 1
    triangles = np.concatenate([
        np.stack([lid[j[up]], uid[i[up] + 1], uid[i[up]]], axis=-1),
        np.stack([lid[j[~up]], lid[j[~up] + 1], uid[i[~up]]], axis=-1)])

    gaps = np.nonzero((ls[1:] == ls[:-1]) & (lown[1:] != lown[:-1]))[0]
    edges = np.concatenate([
        np.stack([uid[ufirst], lid[lfirst]], axis=-1),
        np.stack([lid[llast], uid[ulast]], axis=-1),
        np.stack([lid[gaps], lid[gaps + 1]], axis=-1)])
    # abscissae of the edge end points
    xs = np.concatenate([
        np.stack([ux[ufirst], lx[lfirst]], axis=-1),
        np.stack([lx[llast], ux[ulast]], axis=-1),
        np.stack([lx[gaps], lx[gaps + 1]], axis=-1)])
    return triangles, edges, xs


def _extremum(spec: ThinDomainSpec, intervals: np.ndarray, largest: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Sampled extremum of h inside each interval.
    Returns:
        [np.float64; [K]], abscissae and values of h.
    """
    t = np.linspace(0., 1., 9)[1:-1]
    # [K, 7]
    xs = intervals[:, :1] + t[None] * (intervals[:, 1:] - intervals[:, :1])
    hs = spec.h(xs / spec.epsilon ** spec.alpha)
    best = np.argmax(hs, axis=1) if largest else np.argmin(hs, axis=1)
    rows = np.arange(len(intervals))
    return xs[rows, best], hs[rows, best]


def layer_rows(spec: ThinDomainSpec, ny: int) -> int:
    """The number of the horizontal rows resolving the bottom layer, zero if flat.
    """
    depth = spec.h.max - spec.h.min
    if depth <= 0.:
        return 0
    return max(2, math.ceil(round(ny * depth / (spec.g.max + spec.h.max), 9)))


def mesh_domain(spec: ThinDomainSpec, nx: int, ny: int) -> Mesh:
    """Mesh of the rescaled thin domain, split along x2 = -h0.
    The fixed part is a graph mesh between -h0 and g(x1 / eps). The bottom
    layer is cut by the horizontal lines x2 = -c_k at equidistant levels c_k,
    each line holding the superlevel intervals of h, and consecutive lines
    are zipped together, so the layer elements are not sheared by the fast
    bottom oscillation.
    Args:
        spec: thin domain.
        nx: the number of the horizontal cells.
        ny: the number of the vertical cells, shared by the fixed part and the layer.
    Returns:
        mesh tagged `bottom`, `top`, `left`, `right`.
    """
    h0, hmax = spec.h.min, spec.h.max
    n_layer = layer_rows(spec, ny)
    provenance = f'thin domain eps={spec.epsilon!r}, alpha={spec.alpha!r}, ' \
        f'nx={nx}, ny={ny}, layer={n_layer}'
    if n_layer == 0:
        return mesh_graph_domain(spec.lower, spec.upper, (0., 1.), nx, ny,
                                 provenance=provenance)
    bulk = mesh_graph_domain(
        constant_graph(-h0), spec.upper, (0., 1.), nx, max(2, ny - n_layer))
    keep = bulk.boundary_tags != BOTTOM
    nodes, triangles = [bulk.nodes], [bulk.triangles]
    edges, tags, ends = [bulk.boundary_edges[keep]], [bulk.boundary_tags[keep]], []

    dx, step = 1. / nx, (hmax - h0) / n_layer
    # line x2 = -h0, the bottom row of the fixed part
    uid = np.arange(nx + 1)
    ux, uown = bulk.nodes[uid, 0], np.zeros(nx + 1, dtype=np.int64)
    parents = np.array([[0., 1.]])
    offset = bulk.n_nodes
    for k in range(1, n_layer + 1):
        level, above = h0 + k * step, h0 + (k - 1) * step
        children = np.zeros((0, 2))
        strip = np.zeros(0, dtype=np.int64)
        if k < n_layer:
            children = _level_intervals(spec, level, 1e-3 * dx)
            # nest each child into the parent containing its midpoint
            strip = np.searchsorted(parents[:, 0], children.mean(axis=1), 'right') - 1
            children = np.clip(children, parents[strip, :1], parents[strip, 1:])
            wide = children[:, 1] - children[:, 0] > 1e-3 * dx
            children, strip = children[wide], strip[wide]
        lx, lown = _row_nodes(children, nx)
        lid = offset + np.arange(len(lx))
        ly = np.full(len(lx), -level)

        # apex under the parents without children, at the sampled maximum of h
        tips = np.setdiff1d(np.arange(len(parents)), strip)
        tx, th = _extremum(spec, parents[tips], largest=True)
        ty = -np.clip(th, above + 0.25 * step, hmax if k == n_layer else level)
        # valley between the children of a parent, at the sampled minimum of h,
        # low enough to keep the zipped triangles counterclockwise
        gap = np.nonzero(strip[1:] == strip[:-1])[0]
        vx, vh = _extremum(
            spec, np.stack([children[gap, 1], children[gap + 1, 0]], axis=-1), largest=False)
        width = children[gap + 1, 0] - vx
        rise = np.minimum(
            level - np.clip(vh, above + 0.25 * step, level),
            0.9 * step * width / (width + 1.5 * dx))
        vy = -(level - rise)

        # [R'], lower row with its apexes and valleys
        extra = np.r_[tx, vx]
        tri, edge, end = _zip_rows(
            (uid, ux, uown),
            (np.r_[lid, offset + len(lx) + np.arange(len(extra))],
             np.r_[lx, extra],
             np.r_[strip[lown], tips, strip[gap]],
             np.r_[lown, len(children) + np.arange(len(extra))]),
            len(parents))
        nodes.append(np.stack([np.r_[lx, extra], np.r_[ly, ty, vy]], axis=-1))
        triangles.append(tri)
        edges.append(edge)
        ends.append(end)
        offset += len(lx) + len(extra)
        uid, ux, uown, parents = lid, lx, lown, children

    # [E', 2], abscissae of the layer edges
    ends = np.concatenate(ends)
    labels = np.where(
        np.all(ends == 0., axis=1), LEFT,
        np.where(np.all(ends == 1., axis=1), RIGHT, BOTTOM)).astype(object)
    return Mesh(np.concatenate(nodes), np.concatenate(triangles),
                np.concatenate(edges), np.concatenate(tags + [labels]),
                provenance=provenance)


def _shortest_period(epsilon: float, alpha: float, g: Profile, h: Profile) -> float:
    """Shortest physical oscillation period, whole interval if flat.
    """
    periods = []
    if g.kind != 'constant':
        periods.append(epsilon * g.period)
    if h.kind != 'constant':
        periods.append(epsilon ** alpha * h.period)
    return min(periods, default=1.)


def _required(epsilon: float,
              alpha: float,
              g: Profile,
              h: Profile,
              points_per_period: int,
              ny_min: int) -> Tuple[int, int]:
    # rounding guards e.g. 8 / 0.1 ** 2 = 799.9999999999999
    nx = math.ceil(round(
        points_per_period / _shortest_period(epsilon, alpha, g, h), 9))
    # vertical spacing of the unscaled thin domain bounded by the horizontal one
    ny = max(ny_min, math.ceil(round(epsilon * (g.max + h.max) * nx, 9)))
    return nx, ny


def resolution_for(spec: ThinDomainSpec,
                   points_per_period: int,
                   ny_min: int = 8,
                   max_elements: int = 2_000_000) -> Tuple[int, int]:
    """Resolution resolving the fastest boundary oscillation.
    Args:
        spec: thin domain.
        points_per_period: cells per shortest period.
        ny_min: lower bound of the vertical cells.
        max_elements: triangle budget.
    Returns:
        nx, ny.
    """
    if points_per_period < 4:
        raise ValueError(f'points_per_period should be >= 4, got {points_per_period}')
    nx, ny = _required(
        spec.epsilon, spec.alpha, spec.g, spec.h, points_per_period, ny_min)
    if 2 * nx * ny > max_elements:
        raise CapacityError(nx, ny, max_elements, smallest_affordable_epsilon(
            spec.g, spec.h, spec.alpha, points_per_period, ny_min, max_elements))
    return nx, ny


def smallest_affordable_epsilon(g: Profile,
                                h: Profile,
                                alpha: float,
                                points_per_period: int,
                                ny_min: int = 8,
                                max_elements: int = 2_000_000,
                                iters: int = 60) -> Optional[float]:
    """Bisect the smallest epsilon whose mesh fits in the budget.
    Returns:
        smallest affordable epsilon, None if even eps -> 1 does not fit.
    """
    def fits(eps: float) -> bool:
        nx, ny = _required(eps, alpha, g, h, points_per_period, ny_min)
        return 2 * nx * ny <= max_elements

    lo, hi = 1e-12, 1. - 1e-12
    if not fits(hi):
        return None
    if fits(lo):
        return lo
    for _ in range(iters):
        mid = np.sqrt(lo * hi)
        if fits(mid):
            hi = mid
        else:
            lo = mid
    return float(hi)


def export_csv(mesh: Mesh, directory: str):
    """Write `nodes.csv`, `triangles.csv` and `boundary.csv`.
    """
    os.makedirs(directory, exist_ok=True)
    ids = np.arange(mesh.n_nodes)
    with open(os.path.join(directory, 'nodes.csv'), 'w', newline='\n') as f:
        f.write('node,x1,x2\n')
        for i, (x, y) in zip(ids, mesh.nodes):
            f.write(f'{i},{float(x)!r},{float(y)!r}\n')
    with open(os.path.join(directory, 'triangles.csv'), 'w', newline='\n') as f:
        f.write('n0,n1,n2\n')
        for a, b, c in mesh.triangles:
            f.write(f'{a},{b},{c}\n')
    with open(os.path.join(directory, 'boundary.csv'), 'w', newline='\n') as f:
        f.write('n0,n1,tag\n')
        for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            f.write(f'{a},{b},{tag}\n')
