"""Run-time monitors for Ricci-DeTurck runs: two-sided bounds, local energies,
scaled derivative sup-norms, W^{2,2} distance to the initial data, energy growth,
L^2 time continuity and the two-flow uniqueness comparison."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .field import (
    BackgroundGeometry,
    MetricField,
    derivative_densities,
    eig_bounds_rel,
    partial_derivative,
    second_partial,
    ball_integral_field,
    sup_ball_integral,
    sym_pairs,
)
from .flow import FlowState, StepperConfig, cfl_dt, step
from .initial_data import CutoffSpec, mollify_blend

log = logging.getLogger(__name__)

COLUMNS = ("t", "lam_min", "lam_max", "a_t", "b_t", "c1", "c2", "c3", "d_t", "energy_r0", "slack")


@dataclass
class MonitorReport:
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)


def _sq_density(comps: np.ndarray, bg: BackgroundGeometry) -> np.ndarray:
    """|T|_h^2 for a packed symmetric tensor."""
    d = bg.grid.dim
    if bg.flat:
        w = np.array([1.0 if i == j else 2.0 for i, j in sym_pairs(d)])
        return np.einsum("...c,c->...", comps * comps, w)
    from .field import unpack

    T = unpack(comps, d)
    hinv = bg.h_inv
    return np.einsum("...ia,...jb,...ij,...ab->...", hinv, hinv, T, T, optimize=True)


def third_derivative_sup(g: MetricField) -> float:
    """sup |d^3 g|^2 from coordinate partials (covariant only for flat h)."""
    grid = g.grid
    d, dx = grid.dim, grid.dx
    w = np.array([1.0 if i == j else 2.0 for i, j in sym_pairs(d)])
    acc = np.zeros(grid.shape)
    for combo in itertools.combinations_with_replacement(range(d), 3):
        counts = np.bincount(combo, minlength=d)
        mult = math.factorial(3) / np.prod([math.factorial(c) for c in counts])
        f = g.components
        axes = list(combo)
        if axes[0] == axes[1]:
            f = second_partial(f, axes[0], dx)
            f = partial_derivative(f, axes[2], dx)
        elif axes[1] == axes[2]:
            f = second_partial(f, axes[1], dx)
            f = partial_derivative(f, axes[0], dx)
        else:
            for a in axes:
                f = partial_derivative(f, a, dx)
        acc += mult * np.einsum("...c,c->...", f * f, w)
    return float(acc.max())


class FlowMonitor:
    """Callable for ``evolve``: records the per-time quantities of the estimates.

    Radii are in chart units of the torus (the unit-ball radii of the theory are
    mapped to ``r0 < r1 < L/4``).
    """

    def __init__(self, g0: MetricField, bg: BackgroundGeometry, r0: float, r1: float, stride: int = 2, third: bool = True):
        self.g0 = g0
        self.bg = bg
        self.r0, self.r1 = r0, r1
        self.stride = stride
        self.third = third
        one, two = derivative_densities(g0, bg)
        # per-centre energies of g0 on the outer balls; the growth bound compares
        # each centre with itself
        self.e0_r1 = ball_integral_field(one + two, bg, r1, stride)
        self.e0_r0 = float(ball_integral_field(one + two, bg, r0, stride).max())

    def __call__(self, t: float, g: MetricField) -> dict:
        bg = self.bg
        lo, hi = eig_bounds_rel(g, bg)
        one, two = derivative_densities(g, bg)
        e_field = ball_integral_field(one + two, bg, self.r0, self.stride)
        e_r0 = float(e_field.max())
        d1, d2 = derivative_densities(g, bg, g_ref=self.g0)
        d0 = _sq_density(g.components - self.g0.components, bg)
        dist = sup_ball_integral(d0 + d1 + d2, bg, self.r0, self.stride)
        c3 = third_derivative_sup(g) * t**3 if self.third else float("nan")
        return {
            "t": float(t),
            "lam_min": float(lo.min()),
            "lam_max": float(hi.max()),
            "a_t": float(max(hi.max(), 1.0 / lo.min())),
            "b_t": e_r0,
            "c1": float(one.max()) * t,
            "c2": float(two.max()) * t**2,
            "c3": c3,
            "d_t": dist,
            "energy_r0": e_r0,
            "slack": float((e_field - self.e0_r1).max()),
        }


def fit_energy_growth(rows) -> float:
    """Smallest V with E_{r0}(x, t) <= E_{r1}(x, 0) + V t at every sampled t > 0 and centre x."""
    ratios = [r["slack"] / r["t"] for r in rows if r["t"] > 0]
    return float(max(ratios)) if ratios else 0.0


def decreasing_toward_zero(values, times, rtol: float = 1e-9) -> bool:
    """True when ``values`` shrink as the paired times decrease."""
    order = np.argsort(times)
    v = np.asarray(values, dtype=float)[order]
    return bool(np.all(np.diff(v) >= -rtol * np.abs(v[1:]).max(initial=0.0)))


def monitor_bcdef(traj, records, g0: MetricField, bg: BackgroundGeometry, a0: float, eps: float | None = None) -> MonitorReport:
    """Assemble the per-time records into a report with verdicts for (a)-(f)."""
    rep = MonitorReport(rows=list(records))
    ts = rep.column("t")
    a_t = rep.column("a_t")
    pos = ts > 0
    b0 = rep.rows[0]["b_t"]
    V = fit_energy_growth(rep.rows)
    noise = 1e-14 * (1.0 + b0)
    rep.summary = {
        "a0": a0,
        "a_bound": 400 * a0,
        "a_max": float(a_t.max()),
        "a_ok": bool(a_t.max() <= 400 * a0),
        "b0": b0,
        "b_max": float(rep.column("b_t").max()),
        "b_ok": bool(rep.column("b_t").max() <= 2 * b0 + noise),
        "V": V,
        "d_zero": rep.rows[0]["d_t"],
        "d_noise": noise,
        "d_ok": bool(rep.rows[0]["d_t"] <= 2 * noise and decreasing_toward_zero(rep.column("d_t")[pos], ts[pos])),
        "c1_trend": bool(decreasing_toward_zero(rep.column("c1")[pos], ts[pos])),
        "c2_trend": bool(decreasing_toward_zero(rep.column("c2")[pos], ts[pos])),
        "steps": getattr(traj, "steps", 0),
        "aborted": getattr(traj, "aborted", None),
    }
    if eps is not None:
        rep.summary["eps"] = eps
    return rep


# ------------------------------------------------------------ L^2 continuity


def l2_continuity_check(times, metrics, bg: BackgroundGeometry, radius: float, stride: int = 2) -> dict:
    """max over snapshot pairs and centres of int_B |g(t)-g(s)|^2 dh / |t-s| (and for g^-1)."""
    if len(times) < 3:
        raise ValueError("need at least three snapshots")
    d = bg.grid.dim
    best, best_inv = 0.0, 0.0
    rows = []
    for i, j in itertools.combinations(range(len(times)), 2):
        gap = abs(times[j] - times[i])
        if gap == 0:
            continue
        diff = metrics[j].components - metrics[i].components
        r = sup_ball_integral(_sq_density(diff, bg), bg, radius, stride) / gap
        dinv = metrics[j].inverse - metrics[i].inverse
        inv_comps = np.stack([dinv[..., a, b] for a, b in sym_pairs(d)], axis=-1)
        if bg.flat:
            r_inv = sup_ball_integral(_sq_density(inv_comps, bg), bg, radius, stride) / gap
        else:
            h = bg.h.full
            sq = np.einsum("...ia,...jb,...ij,...ab->...", h, h, dinv, dinv, optimize=True)
            r_inv = sup_ball_integral(sq, bg, radius, stride) / gap
        rows.append((times[i], times[j], r, r_inv))
        best, best_inv = max(best, r), max(best_inv, r_inv)
    return {"B": best, "B_inverse": best_inv, "pairs": rows}


# ------------------------------------------------------------ uniqueness


def gronwall_uniqueness_check(
    g0: MetricField,
    bg: BackgroundGeometry,
    scales: tuple[float, float],
    T: float,
    cfg: StepperConfig,
    radius: float,
    cutoff: CutoffSpec | None = None,
    samples: int = 8,
    stride: int = 2,
    factor: float = 4.0,
) -> dict:
    """Evolve two mollifications of g0 with a shared step size and track
    D(t) = sup over centres of int_B |g1 - g2|^2 dh."""
    s1, s2 = scales
    g1 = mollify_blend(g0, s1, cutoff, bg)
    g2 = mollify_blend(g0, s2, cutoff, bg)
    st1, st2 = FlowState(g1), FlowState(g2)

    def gap(a: MetricField, b: MetricField) -> float:
        return sup_ball_integral(_sq_density(a.components - b.components, bg), bg, radius, stride)

    marks = list(np.linspace(0, T, samples + 1)[1:]) if T > 0 else []
    times, D = [0.0], [gap(g1, g2)]
    floor = max(D[0], 1e-14)
    for target in marks:
        while st1.t < target * (1 - 1e-12):
            dt = min(cfl_dt(st1.g, cfg), cfl_dt(st2.g, cfg), target - st1.t)
            st1 = step(st1, cfg, bg, dt_cap=dt)
            st2 = step(st2, cfg, bg, dt_cap=st1.last_dt)
            if st2.last_dt != st1.last_dt:
                # a retry halved one of the two; redo the pair at the smaller step
                raise RuntimeError("uniqueness runs lost step synchrony")
        st1.t = st2.t = target
        times.append(float(target))
        D.append(gap(st1.g, st2.g))
    amp = [x / floor for x in D]
    return {
        "times": times,
        "D": D,
        "amplification": amp,
        "max_amplification": max(amp),
        "final_amplification": amp[-1],
        "factor": factor,
        "passed": bool(max(amp) <= factor),
    }
