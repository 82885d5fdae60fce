"""Executable forms of the auxiliary estimates: the singular linear ODE comparison,
pointwise and integrated tensor-norm comparisons between metrics, and the
scalar-curvature lower-bound monitor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .curvature import scalar_curvature


# ------------------------------------------------------------ ODE comparison


@dataclass
class OdeProblem:
    """f' <= (eps/t) f + Z(t), f(0) = 0 on (0, T].

    ``Z`` is either a callable or a table ``(times, values)`` interpolated
    linearly and held constant outside the table, which keeps the bound linear
    in Z.
    """

    eps: float
    Z: Callable | tuple
    T: float = 1.0

    def __post_init__(self):
        if not self.eps < 1:
            raise ValueError("eps must be < 1")

    def forcing(self, t):
        if callable(self.Z):
            return self.Z(t)
        ts, vs = (np.asarray(a, dtype=float) for a in self.Z)
        return np.interp(np.asarray(t, dtype=float), ts, vs)


def _weighted_linear(a: float, b: float, lo: float, hi: float, eps: float) -> float:
    """int_lo^hi (a + b s) s^-eps ds in closed form."""
    F = lambda s: a * s ** (1 - eps) / (1 - eps) + b * s ** (2 - eps) / (2 - eps)  # noqa: E731
    return F(hi) - F(lo)


def ode_bound(p: OdeProblem, t: float) -> float:
    """t^eps * int_0^t Z(s) s^-eps ds."""
    if t <= 0:
        return 0.0
    eps = p.eps
    if callable(p.Z):
        # algebraic weight s^-eps is integrated exactly by QUADPACK's QAWS rule
        val, _ = integrate.quad(p.Z, 0.0, t, weight="alg", wvar=(-eps, 0.0), limit=200)
        return float(t**eps * val)
    ts, vs = (np.asarray(a, dtype=float) for a in p.Z)
    knots = np.concatenate([[0.0], ts[ts < t], [t]])
    vals = p.forcing(knots)
    total = 0.0
    for lo, hi, zl, zh in zip(knots[:-1], knots[1:], vals[:-1], vals[1:]):
        if hi <= lo:
            continue
        b = (zh - zl) / (hi - lo)
        total += _weighted_linear(zl - b * lo, b, lo, hi, eps)
    return float(t**eps * total)


def ode_comparison_test(p: OdeProblem, t0: float = 1e-8, samples: int = 20, ratio: float = 1.01, rtol: float = 1e-6) -> dict:
    """RK4 for f' = (eps/t) f + Z from f(t0) = 0 on a geometric grid, checked against ode_bound."""
    eps = p.eps
    rhs = lambda t, f: eps / t * f + float(p.forcing(t))  # noqa: E731
    n_steps = int(np.ceil(np.log(p.T / t0) / np.log(ratio)))
    sample_t = np.geomspace(p.T / 2**19, p.T, samples)
    # forcing knots and sample times are grid points: no step straddles a kink
    # and samples need no interpolation
    knots = [] if callable(p.Z) else list(np.asarray(p.Z[0], dtype=float))
    grid = np.unique(np.concatenate([np.geomspace(t0, p.T, n_steps + 1), sample_t, [k for k in knots if t0 < k < p.T]]))
    f = 0.0
    fs = [0.0]
    for a, b in zip(grid[:-1], grid[1:]):
        h = b - a
        k1 = rhs(a, f)
        k2 = rhs(a + h / 2, f + h / 2 * k1)
        k3 = rhs(a + h / 2, f + h / 2 * k2)
        k4 = rhs(b, f + h * k3)
        f = f + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        fs.append(f)
    fs = np.array(fs)
    rows = []
    for t in sample_t:
        val = float(fs[np.searchsorted(grid, t)])
        rows.append((float(t), val, ode_bound(p, t)))
    ok = all(v <= b * (1 + rtol) + 1e-300 for _, v, b in rows)
    return {"rows": rows, "passed": bool(ok), "max_ratio": max((v / b if b > 0 else 0.0) for _, v, b in rows)}


def random_forcing(rng: np.random.Generator, T: float = 1.0, knots: int = 12) -> tuple:
    """Nonnegative piecewise-linear forcing on a geometric table."""
    ts = np.geomspace(T * 1e-6, T, knots)
    vs = rng.uniform(0.0, 3.0, size=knots) * (rng.uniform(size=knots) > 0.2)
    return ts, vs


# ------------------------------------------------------------ SPD ensembles


def random_spd(rng: np.random.Generator, n: int, count: int, cond_max: float = 1e3) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal(size=(count, n, n)))
    lam = np.exp(rng.uniform(0.0, np.log(cond_max), size=(count, n)))
    lam *= np.exp(rng.uniform(-2.0, 2.0, size=(count, 1)))
    return np.einsum("kij,kj,klj->kil", q, lam, q)


@dataclass
class SpdEnsemble:
    n: int
    count: int
    seed: int = 0
    cond_max: float = 1e3

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        n, c = self.n, self.count
        self.g = random_spd(rng, n, c, self.cond_max)
        self.ell = random_spd(rng, n, c, self.cond_max)
        self.h = random_spd(rng, n, c, self.cond_max)
        self.u = random_spd(rng, n, c, self.cond_max)
        self.S = rng.normal(size=(c, n, n))  # S[alpha, i]
        self.T = rng.normal(size=(c, n, n))
        self.N = rng.normal(size=(c, n, n))


def sq_lower(T, inv):
    """inv^ik inv^jl T_ij T_kl for covariant T."""
    return np.einsum("...ik,...jl,...ij,...kl->...", inv, inv, T, T)


def sq_upper(N, met):
    """met_ik met_jl N^ij N^kl for contravariant N."""
    return np.einsum("...ik,...jl,...ij,...kl->...", met, met, N, N)


def sq_mixed(S, yinv, vmet):
    """yinv^ab S_a^i S_b^j vmet_ij."""
    return np.einsum("...ab,...ai,...bj,...ij->...", yinv, S, S, vmet)


def comparison_ratios(g, ell, h, u, S, T, N) -> dict:
    """LHS / RHS of the five pointwise comparisons with constant 1, per member."""
    n = g.shape[-1]
    gi, li, hi, ui = (np.linalg.inv(m) for m in (g, ell, h, u))
    ell_g = sq_lower(ell, gi)
    g_ell = sq_lower(g, li)
    u_h = sq_lower(u, hi)
    s_hl = sq_mixed(S, hi, ell)
    return {
        "T": sq_lower(T, gi) / (sq_lower(T, li) * ell_g),
        "N": sq_upper(N, g) / (sq_upper(N, ell) * g_ell),
        "det": (np.linalg.det(g) / np.linalg.det(ell)) / g_ell ** (n / 2),
        "firstD": s_hl / (sq_mixed(S, hi, g) * (1 + ell_g)),
        "secondD": s_hl / (sq_mixed(S, ui, ell) * (1 + u_h)),
    }


def norm_comparison_suite(e: SpdEnsemble, tol: float = 1e-10) -> dict:
    r = comparison_ratios(e.g, e.ell, e.h, e.u, e.S, e.T, e.N)
    worst = {k: float(v.max()) for k, v in r.items()}
    return {"max_ratio": worst, "passed": bool(max(worst.values()) <= 1 + tol), "count": e.count}


def conjugate(e: SpdEnsemble, A: np.ndarray, B: np.ndarray) -> dict:
    """Express every member in new bases: A for the metric space, B for the other factor."""
    Ai = np.linalg.inv(A)
    cong = lambda m, X: np.einsum("ai,...ab,bj->...ij", X, m, X)  # noqa: E731
    return {
        "g": cong(e.g, A),
        "ell": cong(e.ell, A),
        "h": cong(e.h, B),
        "u": cong(e.u, B),
        "S": np.einsum("ba,...bj,ij->...ai", B, e.S, Ai),
        "T": cong(e.T, A),
        "N": np.einsum("ia,...ij,jb->...ab", Ai.T, e.N, Ai.T),
    }


def integral_holder_suite(rng: np.random.Generator, spaces: int = 1000, points: int = 16, p: float = 2, n: int = 4, tol: float = 1e-10) -> dict:
    """Both integrated comparison chains with constant 1 on random weighted point sets."""
    worst_T, worst_N = 0.0, 0.0
    for _ in range(spaces):
        g = random_spd(rng, n, points)
        ell = random_spd(rng, n, points)
        T = rng.normal(size=(points, n, n))
        N = rng.normal(size=(points, n, n))
        w = rng.uniform(0.1, 2.0, size=points)
        dg = np.sqrt(np.linalg.det(g)) * w
        dl = np.sqrt(np.linalg.det(ell)) * w
        gi, li = np.linalg.inv(g), np.linalg.inv(ell)
        ell_g = sq_lower(ell, gi)
        g_ell = sq_lower(g, li)
        vol_term = (np.sum(g_ell ** (n / 4) * dg)) ** 0.25
        lhs_T = np.sum(sq_lower(T, gi) ** (p / 2) * dg)
        rhs_T = np.sum(ell_g**p * dg) ** 0.5 * np.sum(sq_lower(T, li) ** (2 * p) * dl) ** 0.25 * vol_term
        lhs_N = np.sum(sq_upper(N, g) ** (p / 2) * dg)
        rhs_N = np.sum(g_ell**p * dg) ** 0.5 * np.sum(sq_upper(N, ell) ** (2 * p) * dl) ** 0.25 * vol_term
        worst_T = max(worst_T, lhs_T / rhs_T if rhs_T > 0 else 0.0)
        worst_N = max(worst_N, lhs_N / rhs_N if rhs_N > 0 else 0.0)
    return {"max_ratio_T": float(worst_T), "max_ratio_N": float(worst_N), "passed": bool(max(worst_T, worst_N) <= 1 + tol), "p": p}


# ------------------------------------------------------------ scalar floor


def scalar_floor_monitor(times, metrics, k: float, rel_slack: float = 1e-3) -> dict:
    """min R(g(t)) and psi(t) = e^{-kt} int (R + k)_-^2 dg along a trajectory."""
    rows = []
    for t, g in zip(times, metrics):
        R = scalar_curvature(g)
        neg = np.maximum(-(R + k), 0.0)
        vol = np.sqrt(np.linalg.det(g.full)) * g.grid.cell_volume
        phi = float(np.sum(neg * neg * vol))
        rows.append({"t": float(t), "min_R": float(R.min()), "phi": phi, "psi": float(np.exp(-k * t) * phi)})
    psi = np.array([r["psi"] for r in rows])
    scale = max(psi.max(), 1e-300)
    monotone = bool(np.all(np.diff(psi) <= rel_slack * scale)) if len(psi) > 1 else True
    return {
        "rows": rows,
        "k": k,
        "violated_at_start": bool(rows[0]["min_R"] < k),
        "min_R": min(r["min_R"] for r in rows),
        "psi_monotone": monotone,
    }
