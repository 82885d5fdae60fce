"""Distances for grid metrics: graph geodesics, tube-averaged line integrals along
axis lines, axis staircases with a jump budget, and the good-slice search."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from ._kernels import grid_dijkstra
from .errors import NoCurveFound, SearchFailed
from .field import GridSpec, MetricField, interpolate, sym_pairs

# systematic graph-vs-continuum tolerance of the k=2 stencil
GRAPH_TOLERANCE = 0.08


def stencil_offsets(dim: int, k: int = 2) -> np.ndarray:
    """Primitive integer offsets with |v|_inf <= k (non-primitive ones are redundant)."""
    out = []
    for v in itertools.product(range(-k, k + 1), repeat=dim):
        if any(v) and math.gcd(*[abs(x) for x in v]) == 1:
            out.append(v)
    return np.array(out, dtype=np.int64)


def node_index(grid: GridSpec, node) -> int:
    return int(np.ravel_multi_index(tuple(int(x) % grid.n for x in node), grid.shape))


@dataclass(frozen=True)
class GraphMetricQuery:
    g: MetricField
    source: tuple
    target: tuple
    k: int = 2


def _pairs(d):
    pairs = sym_pairs(d)
    return np.array([i for i, _ in pairs]), np.array([j for _, j in pairs])


def graph_distances(g: MetricField, source, k: int = 2, target=None) -> np.ndarray:
    """Distances from ``source`` to every node (or until ``target`` is settled)."""
    grid = g.grid
    pi, pj = _pairs(grid.dim)
    comps = np.ascontiguousarray(g.components.reshape(-1, g.components.shape[-1]))
    t = -1 if target is None else node_index(grid, target)
    dist = grid_dijkstra(comps, grid.n, grid.dim, stencil_offsets(grid.dim, k), pi, pj, grid.dx, node_index(grid, source), t)
    return dist.reshape(grid.shape)


def graph_distance(q: GraphMetricQuery) -> float:
    dist = graph_distances(q.g, q.source, q.k, q.target)
    return float(dist[tuple(int(x) % q.g.grid.n for x in q.target)])


def csr_shortest_path(n_nodes: int, edges, source: int, target: int) -> float:
    """Undirected shortest path on an explicit weighted edge list (u, v, w)."""
    u, v, w = (np.array(c) for c in zip(*edges))
    A = sp.csr_matrix((w.astype(float), (u.astype(int), v.astype(int))), shape=(n_nodes, n_nodes))
    return float(dijkstra(A, directed=False, indices=source)[target])


# ------------------------------------------------------------ Lebesgue lines


@dataclass(frozen=True)
class LebesgueLine:
    axis: int
    start: tuple  # chart point (may be off-grid across the line)
    length: int  # in nodes along the axis
    radii: tuple = (2.0, 3.0, 4.0)  # tube radii in units of dx, decreasing toward the limit

    def endpoints(self, grid: GridSpec):
        a = np.asarray(self.start, dtype=float)
        b = a.copy()
        b[self.axis] += self.length * grid.dx
        return a, b


def _trapezoid_weights(m: int) -> np.ndarray:
    w = np.ones(m + 1)
    w[0] = w[-1] = 0.5
    return w


def _axis_samples(grid: GridSpec, line: LebesgueLine) -> np.ndarray:
    """Axial node positions of the line (start rounded onto the grid along the axis)."""
    s0 = int(round(line.start[line.axis] / grid.dx))
    return np.arange(s0, s0 + line.length + 1)


def direct_line_integral(g: MetricField, line: LebesgueLine) -> float:
    """Trapezoid rule for the integral of sqrt(g_aa) along the line (interpolated across it)."""
    grid = g.grid
    a = line.axis
    pts = np.repeat(np.asarray(line.start, dtype=float)[None, :], line.length + 1, axis=0)
    pts[:, a] = _axis_samples(grid, line) * grid.dx
    c = sym_pairs(grid.dim).index((a, a))
    vals = np.sqrt(interpolate(g.components[..., c], pts, grid))
    return float(vals @ _trapezoid_weights(line.length) * grid.dx)


def tube_average_length(g: MetricField, line: LebesgueLine, alpha: float) -> float:
    """Average over the (n-1)-disc of radius alpha of the line integrals of sqrt(g_aa).

    The disc is the node set within alpha of the line in the transverse
    directions; normalising by its node count makes g = delta return the line
    length exactly.
    """
    grid = g.grid
    if alpha < grid.dx * (1 - 1e-12):
        raise ValueError("tube radius must be at least dx")
    a = line.axis
    d = grid.dim
    c = sym_pairs(d).index((a, a))
    root = np.sqrt(g.components[..., c])
    others = [b for b in range(d) if b != a]
    start = np.asarray(line.start, dtype=float)
    reach = int(math.ceil(alpha / grid.dx)) + 1
    base = [int(round(start[b] / grid.dx)) for b in others]
    offs = []
    for o in itertools.product(range(-reach, reach + 1), repeat=d - 1):
        node = [base[i] + o[i] for i in range(d - 1)]
        r2 = sum((node[i] * grid.dx - start[others[i]]) ** 2 for i in range(d - 1))
        if r2 <= alpha * alpha * (1 + 1e-12):
            offs.append(node)
    if not offs:
        raise NoCurveFound("empty tube")
    axial = _axis_samples(grid, line) % grid.n
    w = _trapezoid_weights(line.length)
    total = 0.0
    for node in offs:
        idx = [None] * d
        idx[a] = axial
        for i, b in enumerate(others):
            idx[b] = np.full(len(axial), node[i] % grid.n)
        total += root[tuple(idx)] @ w
    return float(total * grid.dx / len(offs))


@dataclass
class LebesgueLength:
    value: float
    extrapolants: list = field(default_factory=list)
    averages: list = field(default_factory=list)
    converged: bool = True


def lebesgue_length(g: MetricField, line: LebesgueLine, rel_tol: float = 0.10) -> LebesgueLength:
    """Richardson limit alpha -> 0 of tube averages, assuming an alpha^2 leading error."""
    dx = g.grid.dx
    alphas = [r * dx for r in line.radii]
    avgs = [tube_average_length(g, line, al) for al in alphas]
    if len(alphas) == 1:
        return LebesgueLength(avgs[0], [avgs[0]], avgs, True)
    ext = []
    for (a1, v1), (a2, v2) in zip(zip(alphas, avgs), zip(alphas[1:], avgs[1:])):
        ext.append((a1 * a1 * v2 - a2 * a2 * v1) / (a1 * a1 - a2 * a2))
    conv = all(abs(e2 - e1) <= rel_tol * abs(e1) for e1, e2 in zip(ext, ext[1:]))
    # least-squares fit of v = L0 + c alpha^2 over the whole list
    A = np.vstack([np.ones(len(alphas)), np.square(alphas)]).T
    L0 = float(np.linalg.lstsq(A, np.array(avgs), rcond=None)[0][0])
    return LebesgueLength(L0, ext, avgs, conv)


# ------------------------------------------------------------ staircases


@dataclass
class StaircaseResult:
    length: float
    budget_used: float
    jumps: int
    budget: float


def segment_costs(g: MetricField) -> np.ndarray:
    """Trapezoid line integral of sqrt(g_aa) over each unit grid segment, shape (d, *grid)."""
    grid = g.grid
    d = grid.dim
    out = np.empty((d,) + grid.shape)
    for a in range(d):
        c = sym_pairs(d).index((a, a))
        r = np.sqrt(g.components[..., c])
        out[a] = 0.5 * (r + np.roll(r, -1, axis=a)) * grid.dx
    return out


def d0_estimate(g0: MetricField, x, y, eps: float) -> StaircaseResult:
    """Shortest axis staircase from node x to node y with jumps charged to ``eps``.

    Each unit move along an axis either walks the segment (cost = its line
    integral) or jumps it (cost 0, budget dx). States are (node, jumps used), so
    the feasible set grows with eps and the result never increases.
    """
    grid = g0.grid
    if tuple(np.asarray(x) % grid.n) == tuple(np.asarray(y) % grid.n):
        raise ValueError("d0_estimate needs distinct points")
    if eps < 0:
        raise NoCurveFound("negative jump budget")
    J = int(math.floor(eps / grid.dx + 1e-12))
    P = int(np.prod(grid.shape))
    cost = segment_costs(g0)
    ids = np.arange(P).reshape(grid.shape)
    rows, cols, wts = [], [], []
    for a in range(grid.dim):
        nxt = np.roll(ids, -1, axis=a).reshape(-1)
        w = cost[a].reshape(-1)
        for j in range(J + 1):
            rows.append(ids.reshape(-1) + j * P)
            cols.append(nxt + j * P)
            wts.append(w)
            if j < J:
                # jump forward or backward across the segment
                rows += [ids.reshape(-1) + j * P, nxt + j * P]
                cols += [nxt + (j + 1) * P, ids.reshape(-1) + (j + 1) * P]
                wts += [np.zeros(P), np.zeros(P)]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    wts = np.concatenate(wts)
    n_states = P * (J + 1)
    # walks are undirected: add reversed edges; jumps stay directed (budget only grows)
    walk_mask = []
    for a in range(grid.dim):
        for j in range(J + 1):
            walk_mask.append(np.ones(P, dtype=bool))
            if j < J:
                walk_mask.append(np.zeros(2 * P, dtype=bool))
    walk = np.concatenate(walk_mask)
    R = np.concatenate([rows, cols[walk]])
    C = np.concatenate([cols, rows[walk]])
    W = np.concatenate([wts, wts[walk]])
    A = sp.csr_matrix((W, (R, C)), shape=(n_states, n_states))
    src = node_index(grid, x)
    dist = dijkstra(A, directed=True, indices=src)
    tgt = node_index(grid, y)
    layers = dist[tgt + P * np.arange(J + 1)]
    if not np.isfinite(layers).any():
        raise NoCurveFound(f"no staircase from {tuple(x)} to {tuple(y)}")
    best = float(layers.min())
    # smallest budget achieving the optimum
    used = int(np.flatnonzero(layers <= best * (1 + 1e-12))[0])
    return StaircaseResult(length=float(best), budget_used=used * grid.dx, jumps=used, budget=eps)


# ------------------------------------------------------------ good slices


@dataclass
class SliceResult:
    offset: np.ndarray
    integral: float
    alpha: float
    guaranteed: bool  # alpha <= eps^4, the lab regime where the bound is asserted
    bad_fraction: float  # measure share of offsets whose integral exceeds 1 + eps
    z_bound: float  # alpha^{1/8} shadow of the proof's measure estimate
    scanned: int


def block_l2_defect(g0: MetricField) -> float:
    """int |g0 - delta|^2 over the whole block (unit torus)."""
    d = g0.grid.dim
    w = np.array([1.0 if i == j else 2.0 for i, j in sym_pairs(d)])
    diff = g0.components - MetricField.identity(g0.grid).components
    return float(np.einsum("...c,c->...", diff * diff, w).sum() * g0.grid.cell_volume)


def good_slice_search(g0: MetricField, eps: float, axis: int = 0, base=None, per_axis: int = 9, alpha: float | None = None) -> SliceResult:
    """Scan transverse offsets in the (n-1)-disc of radius eps for the cheapest full axis line.

    Each candidate line is the closed loop of length L along ``axis``; its line
    integral of sqrt(g_aa) uses multilinear interpolation across the line.
    """
    grid = g0.grid
    d = grid.dim
    base = np.zeros(d) if base is None else np.asarray(base, dtype=float)
    if alpha is None:
        alpha = block_l2_defect(g0)
    others = [b for b in range(d) if b != axis]
    ticks = np.linspace(-eps, eps, per_axis)
    c = sym_pairs(d).index((axis, axis))
    root = np.sqrt(g0.components[..., c])
    s = np.arange(grid.n) * grid.dx
    best_val, best_off = np.inf, None
    values = []
    for o in itertools.product(ticks, repeat=d - 1):
        if sum(x * x for x in o) > eps * eps * (1 + 1e-12):
            continue
        pts = np.repeat(base[None, :], grid.n, axis=0)
        pts[:, axis] = s
        for i, b in enumerate(others):
            pts[:, b] += o[i]
        val = float(interpolate(root, pts, grid).sum() * grid.dx)
        values.append(val)
        if val < best_val:
            best_val, best_off = val, base.copy()
            for i, b in enumerate(others):
                best_off[b] += o[i]
    values = np.array(values)
    bound = grid.length * (1 + eps)
    res = SliceResult(
        offset=best_off,
        integral=best_val,
        alpha=alpha,
        guaranteed=alpha <= eps**4,
        bad_fraction=float(np.mean(values > bound)),
        z_bound=alpha ** (1 / 8),
        scanned=len(values),
    )
    if best_val > bound:
        raise SearchFailed(best_val, bound)
    return res


# ------------------------------------------------------------ comparisons


def lower_bound_check(g0: MetricField, times, metrics, line: LebesgueLine, tol: float = 0.05, k: int = 2) -> dict:
    """r(t) = L_{g0}(line) / d(g(t))(endpoints) along a time ladder."""
    grid = g0.grid
    L0 = lebesgue_length(g0, line).value
    a, b = line.endpoints(grid)
    src = tuple(int(round(v / grid.dx)) for v in a)
    dst = tuple(int(round(v / grid.dx)) for v in b)
    ratios = []
    for t, g in zip(times, metrics):
        dist = graph_distance(GraphMetricQuery(g, src, dst, k))
        ratios.append((float(t), L0 / dist))
    order = sorted(ratios)
    small = [r for _, r in order[: max(1, len(order) // 2)]]
    return {"length": L0, "ratios": ratios, "liminf": min(small), "passed": bool(min(small) >= 1 - tol)}


def distance_increments(times, metrics, x, y, k: int = 2) -> dict:
    """d(g(t))(x, y) along the ladder, the sqrt-time fit d_t = d_0 + C sqrt(t), and C."""
    d = [graph_distance(GraphMetricQuery(g, tuple(x), tuple(y), k)) for g in metrics]
    t = np.asarray(times, dtype=float)
    A = np.vstack([np.ones_like(t), np.sqrt(t)]).T
    coef = np.linalg.lstsq(A, np.array(d), rcond=None)[0]
    C_emp = 0.0
    for i, j in itertools.combinations(range(len(t)), 2):
        denom = np.sqrt(t[i]) + np.sqrt(t[j])
        if denom > 0:
            C_emp = max(C_emp, abs(d[i] - d[j]) / denom)
    return {"times": list(map(float, t)), "distances": d, "limit": float(coef[0]), "slope": float(coef[1]), "C": C_emp}
