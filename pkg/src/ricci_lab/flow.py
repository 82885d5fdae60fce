"""Ricci-DeTurck right-hand side, explicit time stepping and evolution driver."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import quadratic_packed
from .errors import BlowUpGuard, LabError, NonPositiveDefinite, StepFailure
from .field import (
    BackgroundGeometry,
    MetricField,
    covariant_derivative,
    covariant_hessian,
    eig_bounds_rel,
    pack,
    partial_derivative,
    second_partial,
    sym_pairs,
    unpack,
)

log = logging.getLogger(__name__)


def _laplacian_flat(g: MetricField, ginv: np.ndarray, first: list[np.ndarray]) -> np.ndarray:
    """g^ab d_a d_b g_ij on packed components, without materialising the Hessian."""
    grid = g.grid
    d, dx = grid.dim, grid.dx
    comps = g.components
    out = np.zeros_like(comps)
    for a in range(d):
        out += ginv[..., a, a, None] * second_partial(comps, a, dx)
        for b in range(a + 1, d):
            out += 2.0 * ginv[..., a, b, None] * partial_derivative(first[a], b, dx)
    return out


def _quadratic_flat(ginv: np.ndarray, first: list[np.ndarray]) -> np.ndarray:
    d = ginv.shape[-1]
    lead = ginv.shape[:-2]
    pairs = sym_pairs(d)
    pi = np.array([i for i, _ in pairs])
    pj = np.array([j for _, j in pairs])
    dpk = np.ascontiguousarray(np.stack(first, axis=-2).reshape(-1, d, len(pairs)))
    out = np.empty((dpk.shape[0], len(pairs)))
    quadratic_packed(np.ascontiguousarray(ginv.reshape(-1, d, d)), dpk, pi, pj, out)
    return out.reshape(lead + (len(pairs),))


def quadratic_terms(ginv: np.ndarray, D: np.ndarray) -> np.ndarray:
    """The five first-order products of the flow equation with weights 1/2 * (1, 2, -2, -2, -2).

    ``D[..., a, i, j]`` is nabla_a g_ij. Evaluated as batched matrix products over
    the flattened nodes.
    """
    d = D.shape[-1]
    lead = D.shape[:-3]
    G = ginv.reshape(-1, d, d)
    Dn = D.reshape(-1, d, d, d)
    P = G.shape[0]
    M = np.matmul(G[:, None], Dn)  # M[a] = g^-1 D_a
    t1 = np.matmul(M.reshape(P, d, d * d), np.swapaxes(M, -1, -2).reshape(P, d, d * d).transpose(0, 2, 1))
    # Q[b, j, q] = g^ab (D_a g^-1)[j, q]
    Q = np.matmul(G, np.matmul(Dn, G[:, None]).reshape(P, d, d * d)).reshape(P, d, d, d)
    Qj = Q.transpose(0, 2, 1, 3).reshape(P, d, d * d)  # [j, (b, q)]
    D_qib = Dn.transpose(0, 2, 3, 1).reshape(P, d, d * d)  # [i, (b, q)] = D[q, i, b]
    D_biq = Dn.transpose(0, 2, 1, 3).reshape(P, d, d * d)  # [i, (b, q)] = D[b, i, q]
    t2 = np.matmul(Qj, D_qib.transpose(0, 2, 1))
    t3 = np.matmul(Qj, D_biq.transpose(0, 2, 1))
    # t4_ij = (M_j g^-1)[q, b] D[b, i, q]
    MG = np.matmul(M, G[:, None]).reshape(P, d, d * d)  # [j, (q, b)]
    D_iqb = Dn.transpose(0, 2, 3, 1).reshape(P, d, d * d)  # [i, (q, b)] = D[b, i, q]
    t4 = np.matmul(MG, D_iqb.transpose(0, 2, 1))
    out = 0.5 * (t1 + 2.0 * t2 - 2.0 * t3 - 2.0 * (t4 + np.swapaxes(t4, -1, -2)))
    return out.reshape(lead + (d, d))


def curvature_terms(g: MetricField, ginv: np.ndarray, bg: BackgroundGeometry) -> np.ndarray:
    """-g^kl g_ip h^pq R_jkql(h) - (i <-> j)."""
    A = np.einsum("...kl,...jkql->...jq", ginv, bg.riemann, optimize=True)
    M = np.einsum("...ip,...pq,...jq->...ij", g.full, bg.h_inv, A, optimize=True)
    return -(M + np.swapaxes(M, -1, -2))


def deturck_rhs_packed(g: MetricField, bg: BackgroundGeometry, check: bool = True) -> np.ndarray:
    """Right-hand side of Ricci-DeTurck h-flow as packed i <= j components."""
    grid = g.grid
    d = grid.dim
    if check:
        eig_bounds_rel(g, bg)
    ginv = g.inverse
    if bg.flat:
        first = [partial_derivative(g.components, a, grid.dx) for a in range(d)]
        return _laplacian_flat(g, ginv, first) + _quadratic_flat(ginv, first)
    T = g.full
    D = covariant_derivative(T, bg)
    H = covariant_hessian(T, bg)
    rhs = np.einsum("...ab,...abij->...ij", ginv, H, optimize=True)
    rhs += quadratic_terms(ginv, D)
    rhs += curvature_terms(g, ginv, bg)
    return pack(0.5 * (rhs + np.swapaxes(rhs, -1, -2)), d)


def deturck_rhs(g: MetricField, bg: BackgroundGeometry, check: bool = True) -> np.ndarray:
    """Right-hand side of Ricci-DeTurck h-flow as a full symmetric (0,2) lattice."""
    return unpack(deturck_rhs_packed(g, bg, check), g.grid.dim)


def _rhs_packed(g: MetricField, bg: BackgroundGeometry) -> np.ndarray:
    return deturck_rhs_packed(g, bg, check=False)


# ---------------------------------------------------------------- stepping


@dataclass(frozen=True)
class StepperConfig:
    cfl: float = 0.2
    max_dt: float = 1.0
    integrator: str = "euler"
    abort_a: float = math.inf
    max_halvings: int = 8
    force_dt: float | None = None  # fault-injection hook: first attempt ignores the CFL bound

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


@dataclass
class FlowState:
    g: MetricField
    t: float = 0.0
    step_count: int = 0
    last_dt: float = 0.0
    a_seen: float = 1.0
    retries: int = 0


def cfl_dt(g: MetricField, cfg: StepperConfig) -> float:
    grid = g.grid
    lam = float(np.linalg.eigvalsh(g.inverse)[..., -1].max())
    return min(cfg.max_dt, cfg.cfl * grid.dx**2 / (2 * grid.dim * lam))


def _advance(g: MetricField, bg: BackgroundGeometry, dt: float, integrator: str) -> MetricField:
    c = g.components
    grid = g.grid
    if integrator == "euler":
        return MetricField(grid, c + dt * _rhs_packed(g, bg))
    k1 = _rhs_packed(g, bg)
    k2 = _rhs_packed(MetricField(grid, c + 0.5 * dt * k1), bg)
    k3 = _rhs_packed(MetricField(grid, c + 0.5 * dt * k2), bg)
    k4 = _rhs_packed(MetricField(grid, c + dt * k3), bg)
    return MetricField(grid, c + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def step(state: FlowState, cfg: StepperConfig, bg: BackgroundGeometry, dt_cap: float | None = None) -> FlowState:
    """One explicit step; halves dt and retries on loss of definiteness or a blow-up."""
    dt = cfg.force_dt if cfg.force_dt is not None else cfl_dt(state.g, cfg)
    if dt_cap is not None:
        dt = min(dt, dt_cap)
    reason = None
    for attempt in range(cfg.max_halvings + 1):
        try:
            with np.errstate(all="ignore"):
                new = _advance(state.g, bg, dt, cfg.integrator)
            if not np.all(np.isfinite(new.components)):
                raise NonPositiveDefinite((0,) * state.g.grid.dim, float("nan"))
            lo, hi = eig_bounds_rel(new, bg)
            a_now = float(max(hi.max(), 1.0 / lo.min()))
            if a_now > cfg.abort_a:
                reason = "blowup"
                raise BlowUpGuard(f"a={a_now:.3g} exceeds abort_a={cfg.abort_a:.3g} at t={state.t + dt:.4g}")
            return FlowState(
                g=new,
                t=state.t + dt,
                step_count=state.step_count + 1,
                last_dt=dt,
                a_seen=max(state.a_seen, a_now),
                retries=state.retries + attempt,
            )
        except (NonPositiveDefinite, BlowUpGuard, np.linalg.LinAlgError) as exc:
            reason = "blowup" if isinstance(exc, BlowUpGuard) else "definiteness"
            log.debug("step rejected at dt=%.3g (%s); halving", dt, reason)
            dt *= 0.5
    if reason == "blowup":
        raise BlowUpGuard(f"a exceeded abort_a={cfg.abort_a:.3g} after {cfg.max_halvings} halvings")
    raise StepFailure(f"step failed after {cfg.max_halvings} halvings at t={state.t:.4g}")


def geometric_schedule(T: float, count: int, t_min: float | None = None) -> list[float]:
    """``count`` sample times spaced geometrically in (0, T], always ending at T."""
    if T <= 0 or count <= 0:
        return []
    if count == 1:
        return [T]
    t_min = t_min if t_min is not None else T / 2 ** (count - 1)
    return list(np.geomspace(t_min, T, count))


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    metrics: list[MetricField] = field(default_factory=list)
    steps: int = 0
    aborted: str | None = None

    def append(self, t: float, g: MetricField):
        self.times.append(float(t))
        self.metrics.append(g)

    def __len__(self):
        return len(self.times)


def evolve(g0: MetricField, bg: BackgroundGeometry, T: float, cfg: StepperConfig, schedule=(), monitor=None):
    """Advance g0 to time T, landing exactly on every scheduled sample time.

    Returns ``(trajectory, records)``; the trajectory holds t=0 plus the sample
    times. ``monitor(t, g)`` is called at each retained time and its return value
    collected into ``records``. On a step error the partial result is returned
    with ``trajectory.aborted`` set.
    """
    times = sorted({float(s) for s in schedule if 0 < s <= T} | ({float(T)} if T > 0 else set()))
    traj = Trajectory()
    records = []
    state = FlowState(g=g0, a_seen=_a_value(g0, bg))
    traj.append(0.0, g0)
    if monitor is not None:
        records.append(monitor(0.0, g0))
    for target in times:
        while state.t < target * (1 - 1e-12):
            try:
                state = step(state, cfg, bg, dt_cap=target - state.t)
            except LabError as exc:
                traj.aborted = str(exc)
                traj.steps = state.step_count
                return traj, records
        state = replace(state, t=target)
        traj.append(target, state.g)
        if monitor is not None:
            records.append(monitor(target, state.g))
    traj.steps = state.step_count
    traj.a_seen = state.a_seen
    return traj, records


def _a_value(g: MetricField, bg: BackgroundGeometry) -> float:
    lo, hi = eig_bounds_rel(g, bg)
    return float(max(hi.max(), 1.0 / lo.min()))
