"""DeTurck vector field, gauge diffeomorphisms and the pulled-back Ricci flow.

Particles start on a tracking grid (every ``factor``-th node of the flow grid) at
the anchor time and are advected by the DeTurck field in both time directions.
Positions are kept unwrapped; the periodic displacement ``u = Phi - x`` is what
gets differentiated.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .curvature import christoffel, ricci_tensor
from .errors import SingularJacobian
from .field import (
    BackgroundGeometry,
    GridSpec,
    MetricField,
    SplineSampler,
    _gamma_contractions,
    ball_mask,
    central_difference2,
    gradient,
    norm_sq,
    partial_derivative,
    unpack,
)

log = logging.getLogger(__name__)

# Leading sign of the vector field in the particle ODE. The residual sign test
# (ricci_flow_residual with sign=+1) shows the opposite choice fails at O(1).
ODE_SIGN = -1.0


def deturck_vector_field(g: MetricField, bg: BackgroundGeometry, sign: float = ODE_SIGN) -> np.ndarray:
    """V^a = sign * g^bc (Gamma(g)^a_bc - Gamma(h)^a_bc), shape (*grid, dim)."""
    ginv = g.inverse
    diff = christoffel(g, ginv)
    if not bg.flat:
        diff = diff - bg.christoffel
    return sign * np.einsum("...bc,...abc->...a", ginv, diff, optimize=True)


def lie_derivative(V: np.ndarray, g: MetricField, order: int = 2) -> np.ndarray:
    """(L_V g)_ij = V^k d_k g_ij + g_kj d_i V^k + g_ik d_j V^k.

    ``order=2`` uses centred second-order differences, ``order=4`` the default
    fourth-order stencil.
    """
    grid = g.grid
    d = grid.dim
    diff = central_difference2 if order == 2 else partial_derivative
    dV = np.stack([diff(V, a, grid.dx) for a in range(d)], axis=d)  # [..., i, k] = d_i V^k
    dg = np.stack([diff(g.components, a, grid.dx) for a in range(d)], axis=d)
    transport = unpack(np.einsum("...k,...kc->...c", V, dg), d)
    G = g.full
    A = np.einsum("...ik,...kj->...ij", dV, G)
    return transport + A + np.swapaxes(A, -1, -2)


# ------------------------------------------------------------ velocity sources


class VelocityHistory:
    """V on the flow grid at knot times; cubic in space, linear in time.

    Spline prefiltering is linear, so time interpolation is done on the
    prefiltered coefficients and each query costs one spline evaluation.
    """

    def __init__(self, times, fields, grid: GridSpec):
        order = np.argsort(times)
        self.times = np.asarray(times, dtype=float)[order]
        self.grid = grid
        self.samplers = [SplineSampler(fields[i], grid) for i in order]

    @classmethod
    def from_metrics(cls, times, metrics, bg: BackgroundGeometry, sign: float = ODE_SIGN):
        return cls(times, [deturck_vector_field(g, bg, sign) for g in metrics], bg.grid)

    def _blend(self, t: float) -> SplineSampler:
        k = int(np.clip(np.searchsorted(self.times, t) - 1, 0, len(self.times) - 2))
        t0, t1 = self.times[k], self.times[k + 1]
        theta = float(np.clip((t - t0) / (t1 - t0), 0.0, 1.0))
        a, b = self.samplers[k], self.samplers[k + 1]
        if theta == 0.0:
            return a
        if theta == 1.0:
            return b
        mixed = object.__new__(SplineSampler)
        mixed.grid, mixed.order, mixed.tshape = a.grid, a.order, a.tshape
        mixed.coeffs = [(1 - theta) * ca + theta * cb for ca, cb in zip(a.coeffs, b.coeffs)]
        return mixed

    def __call__(self, points: np.ndarray, t: float) -> np.ndarray:
        if len(self.times) == 1:
            return self.samplers[0](points)
        return self._blend(t)(points)

    def knots_between(self, a: float, b: float) -> list[float]:
        lo, hi = min(a, b), max(a, b)
        inner = [float(s) for s in self.times if lo < s < hi]
        return inner if a < b else inner[::-1]


@dataclass
class ConstantVelocity:
    """Uniform time-independent field; test hook for exact particle motion."""

    v: np.ndarray

    def __call__(self, points: np.ndarray, t: float) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.v, dtype=float), points.shape).copy()

    def knots_between(self, a: float, b: float) -> list[float]:
        return []


# ------------------------------------------------------------ particle ODE


def _rk4(points: np.ndarray, velocity, t0: float, t1: float, substeps: int) -> np.ndarray:
    h = (t1 - t0) / substeps
    x = points
    t = t0
    for _ in range(substeps):
        k1 = velocity(x, t)
        k2 = velocity(x + 0.5 * h * k1, t + 0.5 * h)
        k3 = velocity(x + 0.5 * h * k2, t + 0.5 * h)
        k4 = velocity(x + h * k3, t + h)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return x


def advect(points: np.ndarray, velocity, t0: float, t1: float, substeps: int = 2) -> np.ndarray:
    """Carry points from t0 to t1, restarting RK4 at every velocity knot in between."""
    marks = [t0] + velocity.knots_between(t0, t1) + [t1]
    x = points
    for a, b in zip(marks[:-1], marks[1:]):
        if b != a:
            x = _rk4(x, velocity, a, b, substeps)
    return x


def tracking_grid(grid: GridSpec, factor: int = 2) -> GridSpec:
    return grid.coarsen(factor) if factor > 1 else grid


def tracking_nodes(tgrid: GridSpec) -> np.ndarray:
    return np.stack([c.reshape(-1) for c in tgrid.coords()], axis=-1)


def map_jacobian(positions: np.ndarray, tgrid: GridSpec) -> np.ndarray:
    """D(map) = I + D(displacement) by centred second-order differences.

    ``positions`` has shape (*tgrid, dim); the result (*tgrid, dim, dim) holds
    [..., a, i] = d_i map^a.
    """
    d = tgrid.dim
    x = np.stack(tgrid.coords(), axis=-1)
    u = positions - x
    du = np.stack([central_difference2(u, i, tgrid.dx) for i in range(d)], axis=-1)
    return np.eye(d) + du


def _check_jacobian(J: np.ndarray, t: float) -> np.ndarray:
    det = np.linalg.det(J)
    if np.any(det <= 0):
        node = np.unravel_index(np.argmin(det), det.shape)
        raise SingularJacobian(node, t, det[node])
    return det


@dataclass
class DiffeoTrajectory:
    tracking: GridSpec
    anchor: float
    sample_times: list[float] = field(default_factory=list)
    positions: list[np.ndarray] = field(default_factory=list)
    jacobians: list[np.ndarray] = field(default_factory=list)
    inverse: dict = field(default_factory=dict)  # t -> W(t) positions
    inverse_jacobians: dict = field(default_factory=dict)
    composition_error: dict = field(default_factory=dict)
    jacobian_defect: dict = field(default_factory=dict)

    def index(self, t: float) -> int:
        return int(np.argmin(np.abs(np.asarray(self.sample_times) - t)))

    def at(self, t: float):
        k = self.index(t)
        return self.positions[k], self.jacobians[k]


def _minimal_image(v: np.ndarray, L: float) -> np.ndarray:
    return (v + L / 2) % L - L / 2


def integrate_diffeo(
    velocity,
    tgrid: GridSpec,
    sample_times,
    anchor: float,
    substeps: int = 2,
    inverse_times=None,
) -> DiffeoTrajectory:
    """Integrate dPhi/dt = V(Phi, t) from Phi(anchor) = id to every sample time.

    ``velocity`` is a VelocityHistory (or any object with the same call and
    ``knots_between`` methods). W(t) is obtained by carrying the tracking nodes
    from t back to the anchor, for t in ``inverse_times`` (all sample times by
    default).
    """
    d = tgrid.dim
    L = tgrid.length
    times = sorted({float(t) for t in sample_times} | {float(anchor)})
    nodes = tracking_nodes(tgrid)
    shape = tgrid.shape + (d,)
    out = DiffeoTrajectory(tracking=tgrid, anchor=float(anchor))
    pos = {float(anchor): nodes.copy()}
    later = [t for t in times if t > anchor]
    earlier = [t for t in times if t < anchor][::-1]
    for chain in (later, earlier):
        x, t_prev = nodes, float(anchor)
        for t in chain:
            x = advect(x, velocity, t_prev, t, substeps)
            pos[t] = x
            t_prev = t
    for t in times:
        P = pos[t].reshape(shape)
        J = map_jacobian(P, tgrid)
        _check_jacobian(J, t)
        out.sample_times.append(t)
        out.positions.append(P)
        out.jacobians.append(J)
    inv_times = times if inverse_times is None else [out.sample_times[out.index(t)] for t in inverse_times]
    for t in inv_times:
        if t == anchor:
            Wp = nodes.reshape(shape).copy()
        else:
            Wp = advect(nodes, velocity, t, anchor, substeps).reshape(shape)
        DW = map_jacobian(Wp, tgrid)
        _check_jacobian(DW, t)
        out.inverse[t] = Wp
        out.inverse_jacobians[t] = DW
        P, J = out.at(t)
        comp, jac = _composition_defects(P, J, Wp, DW, tgrid)
        out.composition_error[t] = comp
        out.jacobian_defect[t] = jac
    return out


def _composition_defects(P, J, Wp, DW, tgrid: GridSpec) -> tuple[float, float]:
    """max |W(Phi(x)) - x| and max |DW(Phi(x)) DPhi(x) - I|."""
    d = tgrid.dim
    x = np.stack(tgrid.coords(), axis=-1)
    w = SplineSampler(Wp - x, tgrid)
    pts = P.reshape(-1, d)
    back = pts + w(pts)
    err = _minimal_image(back - x.reshape(-1, d), tgrid.length)
    DWp = SplineSampler(DW, tgrid)(pts)
    prod = DWp @ J.reshape(-1, d, d)
    return float(np.abs(err).max()), float(np.abs(prod - np.eye(d)).max())


# ------------------------------------------------------------ pullback


def _on_nodes(points: np.ndarray, grid: GridSpec):
    s = points / grid.dx
    r = np.round(s)
    if np.all(r == s):
        return tuple((r.astype(np.int64) % grid.n).T)
    return None


def sample_metric(g: MetricField, points: np.ndarray) -> np.ndarray:
    """Full metric matrices of g at chart points (P, dim); exact on grid nodes."""
    idx = _on_nodes(points, g.grid)
    if idx is not None:
        comps = g.components[idx]
    else:
        comps = SplineSampler(g.components, g.grid)(points)
    return unpack(comps, g.grid.dim)


def pullback_metric(g: MetricField, positions: np.ndarray, jacobian: np.ndarray, tgrid: GridSpec, t: float = 0.0) -> MetricField:
    """l_ij = D_i Phi^a D_j Phi^b g_ab(Phi) on the tracking grid."""
    d = tgrid.dim
    _check_jacobian(jacobian, t)
    G = sample_metric(g, positions.reshape(-1, d)).reshape(tgrid.shape + (d, d))
    ell = np.einsum("...ai,...ab,...bj->...ij", jacobian, G, jacobian, optimize=True)
    return MetricField.from_full(tgrid, ell)


def pullback_series(traj_times, metrics, diffeo: DiffeoTrajectory, times=None) -> tuple[list[float], list[MetricField]]:
    """Pullbacks at the requested diffeo sample times (all by default)."""
    lookup = {float(t): g for t, g in zip(traj_times, metrics)}
    times = diffeo.sample_times if times is None else times
    out_t, out_l = [], []
    for t in times:
        P, J = diffeo.at(t)
        out_t.append(float(t))
        out_l.append(pullback_metric(lookup[float(t)], P, J, diffeo.tracking, t))
    return out_t, out_l


# ------------------------------------------------------------ residual and estimates


def _time_derivative(times, fields, k):
    t0, t1, t2 = times[k - 1], times[k], times[k + 1]
    h1, h2 = t1 - t0, t2 - t1
    return (
        -h2 / (h1 * (h1 + h2)) * fields[k - 1]
        + (h2 - h1) / (h1 * h2) * fields[k]
        + h1 / (h2 * (h1 + h2)) * fields[k + 1]
    )


def ricci_flow_residual(times, pullbacks) -> dict:
    """max |d_t l + 2 Rc(l)| at every interior time (three-point time difference)."""
    if len(times) < 3:
        raise ValueError("need at least three pullback snapshots")
    comps = [l.components for l in pullbacks]
    rows = []
    for k in range(1, len(times) - 1):
        dt_l = unpack(_time_derivative(times, comps, k), pullbacks[k].grid.dim)
        res = dt_l + 2.0 * ricci_tensor(pullbacks[k])
        rows.append((float(times[k]), float(np.abs(res).max()), float(np.abs(dt_l).max())))
    return {
        "times": [r[0] for r in rows],
        "residual": [r[1] for r in rows],
        "scale": [r[2] for r in rows],
        "max": max(r[1] for r in rows),
    }


def _region(tgrid: GridSpec, center, radius):
    return ball_mask(tgrid, center, radius)


def _lp_integral(diff: np.ndarray, ell: MetricField, p: float, mask, upper: bool = False) -> float:
    d = ell.grid.dim
    ginv = ell.inverse
    if upper:
        sq = norm_sq(diff, ginv, ell.full, d, upper=(0, 1))
    else:
        sq = norm_sq(diff, ell.full, ginv, d)
    vol = np.sqrt(np.linalg.det(ell.full))
    dens = np.maximum(sq, 0.0) ** (p / 2) * vol
    return float(dens[mask].sum() * ell.grid.cell_volume)


def lp_difference(ell_t: MetricField, ell_s: MetricField, ref: MetricField, p: float, mask) -> tuple[float, float]:
    """(int |l(t)-l(s)|^p_ref dref, int |l(t)^-1 - l(s)^-1|^p_ref dref) over ``mask``."""
    a = _lp_integral(ell_t.full - ell_s.full, ref, p, mask)
    b = _lp_integral(ell_t.inverse - ell_s.inverse, ref, p, mask, upper=True)
    return a, b


def ricci_lp_checks(times, pullbacks, center, radius: float, p: float = 2) -> dict:
    """Pairwise L^p differences of the pulled-back flow, their slopes and Cauchy increments."""
    tgrid = pullbacks[0].grid
    mask = _region(tgrid, center, radius)
    n = len(times)
    pairs = []
    for i, j in itertools.combinations(range(n), 2):
        # reference time is the later of the two
        a, b = lp_difference(pullbacks[j], pullbacks[i], pullbacks[j], p, mask)
        pairs.append((times[i], times[j], a, b))
    gaps = np.array([tj - ti for ti, tj, _, _ in pairs])
    fwd = np.array([a for *_, a, _ in pairs])
    inv = np.array([b for *_, b in pairs])
    norm = float(gaps @ gaps)
    slope = float(gaps @ fwd / norm) if norm > 0 else 0.0
    slope_inv = float(gaps @ inv / norm) if norm > 0 else 0.0
    # three-time variant: reference t = latest time, pairs (r, s) below it
    ref = pullbacks[-1]
    vol = float(np.sqrt(np.linalg.det(ref.full))[mask].sum() * tgrid.cell_volume)
    holder = []
    for i, j in itertools.combinations(range(n - 1), 2):
        a, _ = lp_difference(pullbacks[j], pullbacks[i], ref, p, mask)
        holder.append(a / ((vol + times[-1]) ** 0.75 * (times[j] - times[i]) ** 0.25))
    increments = []
    for k in range(n - 1):
        a, _ = lp_difference(pullbacks[k + 1], pullbacks[k], ref, p, mask)
        increments.append(a)
    return {
        "p": p,
        "pairs": pairs,
        "slope": slope,
        "slope_inverse": slope_inv,
        "three_time_ratio": max(holder) if holder else 0.0,
        "increments": increments,
    }


def w12_limit_check(times, pullbacks, center, radius: float) -> dict:
    """int |nabla^{l(t)} l0|^2_{l(t)} dl(t) with l0 = l(t_min), plus a power-law fit."""
    order = np.argsort(times)
    times = [float(times[i]) for i in order]
    pullbacks = [pullbacks[i] for i in order]
    l0 = pullbacks[0]
    tgrid = l0.grid
    d = tgrid.dim
    mask = _region(tgrid, center, radius)
    full0 = l0.full
    dl0 = gradient(full0, tgrid)
    values = []
    for t, ell in zip(times, pullbacks):
        chris = christoffel(ell)
        D = dl0 - _gamma_contractions(full0, chris, d)
        sq = norm_sq(D, ell.full, ell.inverse, d)
        vol = np.sqrt(np.linalg.det(ell.full))
        values.append(float((sq * vol)[mask].sum() * tgrid.cell_volume))
    ts = np.array(times[1:])
    vs = np.array(values[1:])
    sigma, r2 = float("nan"), float("nan")
    good = vs > 0
    if good.sum() >= 2:
        x, y = np.log(ts[good]), np.log(vs[good])
        A = np.vstack([x, np.ones_like(x)]).T
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        sigma = float(coef[0])
        fit = A @ coef
        ss = float(((y - y.mean()) ** 2).sum())
        r2 = float(1 - ((y - fit) ** 2).sum() / ss) if ss > 0 else 1.0
    return {"times": times, "values": values, "sigma": sigma, "r2": r2}


def isometry_identity_check(g0: MetricField, ell_proxy: MetricField, Wp: np.ndarray, DW: np.ndarray, bg: BackgroundGeometry, t: float = 0.0) -> float:
    """max over tracking nodes of |g0 - DW^T (l o W) DW|_h."""
    tgrid = ell_proxy.grid
    d = tgrid.dim
    _check_jacobian(DW, t)
    factor = g0.grid.n // tgrid.n
    sub = (slice(None, None, factor),) * d
    G0 = g0.full[sub]
    L = sample_metric(ell_proxy, Wp.reshape(-1, d)).reshape(tgrid.shape + (d, d))
    back = np.einsum("...ai,...ab,...bj->...ij", DW, L, DW, optimize=True)
    diff = G0 - back
    if bg.flat:
        return float(np.sqrt((diff**2).sum(axis=(-1, -2))).max())
    hinv = bg.h_inv[sub]
    sq = np.einsum("...ia,...jb,...ij,...ab->...", hinv, hinv, diff, diff, optimize=True)
    return float(np.sqrt(np.maximum(sq, 0)).max())


def holder_ratios(diffeo: DiffeoTrajectory, bg: BackgroundGeometry | None = None) -> dict:
    """max over nodes of d(Phi(t)x, Phi(s)x) / sqrt|t-s| for every sample pair."""
    tgrid = diffeo.tracking
    d = tgrid.dim
    h = None
    if bg is not None and not bg.flat:
        factor = bg.grid.n // tgrid.n
        h = bg.h.full[(slice(None, None, factor),) * d]
    rows = []
    for i, j in itertools.combinations(range(len(diffeo.sample_times)), 2):
        ti, tj = diffeo.sample_times[i], diffeo.sample_times[j]
        delta = _minimal_image(diffeo.positions[j] - diffeo.positions[i], tgrid.length)
        if h is None:
            dist = np.sqrt((delta**2).sum(axis=-1))
        else:
            dist = np.sqrt(np.einsum("...i,...ij,...j->...", delta, h, delta))
        rows.append((ti, tj, float(dist.max() / np.sqrt(abs(tj - ti)))))
    return {"pairs": rows, "max": max(r[2] for r in rows) if rows else 0.0}


def group_property_defect(velocity, tgrid: GridSpec, s: float, mid: float, t: float, substeps: int = 2) -> float:
    """|psi(s->t) - psi(mid->t) o psi(s->mid)| for particles starting on the tracking nodes."""
    nodes = tracking_nodes(tgrid)
    direct = advect(nodes, velocity, s, t, substeps)
    staged = advect(advect(nodes, velocity, s, mid, substeps), velocity, mid, t, substeps)
    return float(np.abs(direct - staged).max())


def diffeo_frames(diffeo: DiffeoTrajectory) -> list[tuple[float, dict]]:
    """Per-sample arrays for snapshot export: Phi components and, where computed, W components."""
    d = diffeo.tracking.dim
    out = []
    for t, P in zip(diffeo.sample_times, diffeo.positions):
        comps = {f"Phi{a}": P[..., a] for a in range(d)}
        if t in diffeo.inverse:
            W = diffeo.inverse[t]
            comps.update({f"W{a}": W[..., a] for a in range(d)})
        out.append((t, comps))
    return out
