"""Initial metrics: the oscillating log-log metric, a 2-D curvature bump, conformal
presets, cutoff functions and the mollify-and-blend construction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import BallTooLarge, DegenerateParameters
from .field import (
    BackgroundGeometry,
    GridSpec,
    MetricField,
    derivative_densities,
    equivalence_constant,
    mollify_metric,
    partial_derivative,
    second_partial,
    sup_ball_integral,
)

LOGLOG_CLAMP = np.e + 1e-6


def quintic_step(s: np.ndarray) -> np.ndarray:
    """C^2 ramp from 0 (s <= 0) to 1 (s >= 1)."""
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _radius(grid: GridSpec, center, bg: BackgroundGeometry | None = None) -> np.ndarray:
    disp = grid.displacement(center)
    if bg is None or bg.flat:
        return np.sqrt(sum(x * x for x in disp))
    node = tuple(int(round(c / grid.dx)) % grid.n for c in center)
    hc = bg.h.full[node]
    d = grid.dim
    return np.sqrt(sum(hc[i, j] * disp[i] * disp[j] for i in range(d) for j in range(d)))


def default_center(grid: GridSpec) -> np.ndarray:
    return np.full(grid.dim, grid.length / 2)


# ------------------------------------------------------------ cutoff


@dataclass(frozen=True)
class CutoffSpec:
    center: tuple
    radius: float
    outer: float = 2.0


@dataclass
class Cutoff:
    eta: np.ndarray
    constant: float  # measured sup(|hess eta| + |grad eta|^2 / eta) * R^2
    grad_sup: float


def cutoff_eta(cut: CutoffSpec, grid: GridSpec, bg: BackgroundGeometry | None = None) -> Cutoff:
    """eta = 1 on B_R, 0 outside B_{CR}, quintic in the distance in between."""
    R, C = cut.radius, cut.outer
    if C * R >= grid.length / 2:
        raise BallTooLarge(f"cutoff support C*R={C * R:g} must be below L/2={grid.length / 2:g}")
    if R <= 0 or C <= 1:
        raise DegenerateParameters("cutoff needs R > 0 and outer factor C > 1")
    rho = _radius(grid, cut.center, bg)
    w = (C - 1.0) * R
    u = np.clip((rho - R) / w, 0.0, 1.0)
    eta = 1.0 - quintic_step(u)
    # exact radial derivatives of the ramp; finite differences straddling the
    # support edge would divide stencil noise by a vanishing eta
    d1 = -30.0 * u * u * (1.0 - u) ** 2 / w
    d2 = -60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / (w * w)
    tangential = np.divide(d1, rho, out=np.zeros_like(rho), where=rho > 0)
    hess = np.sqrt(d2 * d2 + (grid.dim - 1) * tangential**2)
    ratio = np.where(eta > 0, hess + np.divide(d1 * d1, eta, out=np.zeros_like(eta), where=eta > 0), 0.0)
    return Cutoff(eta=eta, constant=float(ratio.max() * R * R), grad_sup=float(np.abs(d1).max()))


def blend(eta: np.ndarray, g: MetricField, h: MetricField) -> MetricField:
    e = eta[..., None]
    return MetricField(g.grid, e * g.components + (1.0 - e) * h.components)


# ------------------------------------------------------------ generators


def loglog_profile(x: np.ndarray, eps: float, r: float, c: float) -> np.ndarray:
    """r/eps * (1 + eps + sin(c + log log(2/|x|))), with the centre set to r."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, float(r))
    nz = x > 0
    arg = np.maximum(2.0 / x[nz], LOGLOG_CLAMP)
    out[nz] = r / eps * (1.0 + eps + np.sin(c + np.log(np.log(arg))))
    return out


def loglog_metric(
    grid: GridSpec,
    bg: BackgroundGeometry,
    params=(1.0, 1.0, 0.0),
    cutoff: CutoffSpec | None = None,
    center=None,
    eta: np.ndarray | None = None,
) -> MetricField:
    """Diagonal metric with entries f_{eps_i, r_i, c_i}(|x - center|), blended into h.

    ``params`` is one (eps, r, c) triple or one per axis. Without a cutoff the
    diagonal metric is returned as is; ``eta`` overrides the blend weight.
    """
    d = grid.dim
    triples = [tuple(params)] * d if np.ndim(params) == 1 else [tuple(p) for p in params]
    if len(triples) != d:
        raise DegenerateParameters(f"need {d} parameter triples, got {len(triples)}")
    for eps, r, _ in triples:
        if eps <= 0 or r <= 0:
            raise DegenerateParameters(f"loglog parameters need eps > 0 and r > 0 (got eps={eps}, r={r})")
    center = default_center(grid) if center is None else np.asarray(center, dtype=float)
    rho = _radius(grid, center)
    full = np.zeros(grid.shape + (d, d))
    for i, (eps, r, c) in enumerate(triples):
        full[..., i, i] = loglog_profile(rho, eps, r, c)
    ghat = MetricField.from_full(grid, full)
    if eta is None and cutoff is not None:
        eta = cutoff_eta(cutoff, grid, bg).eta
    if eta is None:
        return ghat
    return blend(np.asarray(eta, dtype=float), ghat, bg.h)


def conformal_profile(grid: GridSpec, amplitude: float = 0.05, modes=((0, 1), (1, 1))) -> np.ndarray:
    """u = amplitude * sum of sin(2 pi m x_a / L + a) over (axis, m) pairs."""
    x = grid.coords()
    k = 2 * np.pi / grid.length
    u = np.zeros(grid.shape)
    for axis, m in modes:
        u += np.sin(k * m * x[axis] + 0.3 * axis)
    return amplitude * u


def conformal_profile_derivatives(grid: GridSpec, amplitude: float = 0.05, modes=((0, 1), (1, 1))):
    """Exact partials and Laplacian of ``conformal_profile``."""
    x = grid.coords()
    k = 2 * np.pi / grid.length
    du = [np.zeros(grid.shape) for _ in range(grid.dim)]
    lap = np.zeros(grid.shape)
    for axis, m in modes:
        phase = k * m * x[axis] + 0.3 * axis
        du[axis] += amplitude * k * m * np.cos(phase)
        lap -= amplitude * (k * m) ** 2 * np.sin(phase)
    return du, lap


def floor_amplitude(target: float, dim: int = 4, length: float = 1.0) -> float:
    """Amplitude A of u = A sin(2 pi x0 / L) with min R(e^{2u} delta) = target < 0."""
    if not target < 0:
        raise DegenerateParameters("target floor must be negative")
    k = 2 * np.pi / length
    th = np.linspace(0, 2 * np.pi, 4097)

    def min_r(A):
        lap = -k * k * A * np.sin(th)
        grad2 = (k * A * np.cos(th)) ** 2
        R = -np.exp(-2 * A * np.sin(th)) * (2 * (dim - 1) * lap + (dim - 2) * (dim - 1) * grad2)
        return R.min() - target

    return float(optimize.brentq(min_r, 1e-12, 1.0))


def block_metric(grid: GridSpec, alpha: float, blocks: int = 4, size: int = 2, seed: int = 0) -> MetricField:
    """delta + A delta on ``blocks`` random cubes of ``size`` cells, A set so that
    the Riemann sum of |g0 - delta|^2 equals alpha."""
    rng = np.random.default_rng(seed)
    d = grid.dim
    mask = np.zeros(grid.shape, dtype=bool)
    for _ in range(blocks):
        start = rng.integers(0, grid.n, size=d)
        idx = np.ix_(*[(start[a] + np.arange(size)) % grid.n for a in range(d)])
        mask[idx] = True
    A = np.sqrt(alpha / (d * mask.sum() * grid.cell_volume))
    full = np.broadcast_to(np.eye(d), grid.shape + (d, d)).copy()
    full[mask] *= 1.0 + A
    return MetricField.from_full(grid, full)


def sheet_metric(grid: GridSpec, axis: int = 0, amplitude: float = 3.0, thickness: int = 2) -> MetricField:
    """g_aa = 1 + amplitude on a slab of ``thickness`` cells transverse to ``axis``:
    every closed line along ``axis`` crosses it."""
    d = grid.dim
    full = np.broadcast_to(np.eye(d), grid.shape + (d, d)).copy()
    sl = [slice(None)] * d
    sl[axis] = slice(grid.n // 2, grid.n // 2 + thickness)
    full[tuple(sl) + (axis, axis)] += amplitude
    return MetricField.from_full(grid, full)


def conformal_metric(grid: GridSpec, u: np.ndarray) -> MetricField:
    """e^{2u} delta."""
    d = grid.dim
    full = np.exp(2.0 * u)[..., None, None] * np.eye(d)
    return MetricField.from_full(grid, full)


def conformal_scalar_curvature(grid: GridSpec, u: np.ndarray, du=None, lap=None) -> np.ndarray:
    """R(e^{2u} delta) = -e^{-2u} (2(n-1) lap u + (n-2)(n-1) |du|^2).

    Pass exact ``du`` (list of partials) and ``lap`` to get the closed form
    instead of a finite-difference evaluation.
    """
    n = grid.dim
    if du is None:
        du = [partial_derivative(u, a, grid.dx) for a in range(n)]
    if lap is None:
        lap = sum(second_partial(u, a, grid.dx) for a in range(n))
    grad2 = sum(x * x for x in du)
    return -np.exp(-2.0 * u) * (2 * (n - 1) * lap + (n - 2) * (n - 1) * grad2)


def torus_bump_metric(grid: GridSpec, bg: BackgroundGeometry, sigma1: float = 1.0, sigma2: float = 0.15, outer: float = 2.0, center=None) -> MetricField:
    """e^{2w(x0, x1)} on the first two axes, delta on the rest.

    w = -(sigma1/4) rho^2 near the centre, giving Gauss curvature sigma1 there,
    and w = 0 beyond outer * sigma2.
    """
    if sigma2 >= grid.length / 4:
        raise DegenerateParameters(f"bump radius {sigma2} must be below L/4")
    d = grid.dim
    center = default_center(grid) if center is None else np.asarray(center, dtype=float)
    disp = grid.displacement(center)
    rho2 = disp[0] ** 2 + disp[1] ** 2
    ramp = 1.0 - quintic_step((np.sqrt(rho2) - sigma2) / ((outer - 1.0) * sigma2))
    w = -0.25 * sigma1 * rho2 * ramp
    full = np.broadcast_to(np.eye(d), grid.shape + (d, d)).copy()
    full[..., 0, 0] = np.exp(2 * w)
    full[..., 1, 1] = np.exp(2 * w)
    return MetricField.from_full(grid, full)


def mollify_blend(g0: MetricField, scale: float, cut: CutoffSpec | None, bg: BackgroundGeometry) -> MetricField:
    """eta * mollify(g0, scale) + (1 - eta) * h; no cutoff means eta = 1."""
    if scale < g0.grid.dx * (1 - 1e-12):
        raise ValueError(f"mollification scale {scale} below grid spacing {g0.grid.dx}")
    smooth = mollify_metric(g0, scale)
    if cut is None:
        return smooth
    return blend(cutoff_eta(cut, g0.grid, bg).eta, smooth, bg.h)


@dataclass
class RadiusResult:
    radius: float
    found: bool
    sweep: list


def smallness_radius(g0: MetricField, bg: BackgroundGeometry, eps: float, stride: int = 2, levels: int = 6) -> RadiusResult:
    """Largest dyadic r <= L/4 - dx with sup_x int_{B_r(x)} |grad g|^4 + |hess g|^2 < eps."""
    grid = g0.grid
    one, two = derivative_densities(g0, bg)
    density = one * one + two
    r = grid.length / 4 - grid.dx
    sweep = []
    for _ in range(levels):
        if r < grid.dx:
            break
        val = sup_ball_integral(density, bg, r, stride)
        sweep.append((r, val))
        if val < eps:
            return RadiusResult(r, True, sweep)
        r /= 2
    return RadiusResult(0.0, False, sweep)


def describe(g: MetricField, bg: BackgroundGeometry) -> dict:
    """Metadata every generator reports: the two-sided equivalence constant a."""
    return {"a": equivalence_constant(g, bg)}


GENERATORS = ("loglog", "torus_bump", "conformal", "floor", "blocks", "sheet", "constant")


def generate(kind: str, grid: GridSpec, bg: BackgroundGeometry, **params) -> MetricField:
    """Dispatch by generator name; parameters are plain numbers."""
    if kind == "loglog":
        eps = params.pop("eps", 1.0)
        r = params.pop("r", 1.0)
        c = params.pop("c", 0.0)
        radius = params.pop("cutoff_radius", None)
        outer = params.pop("cutoff_outer", 2.0)
        cut = CutoffSpec(tuple(default_center(grid)), radius, outer) if radius else None
        out = loglog_metric(grid, bg, (eps, r, c), cut)
    elif kind == "torus_bump":
        out = torus_bump_metric(grid, bg, params.pop("sigma1", 1.0), params.pop("sigma2", 0.15))
    elif kind == "conformal":
        amp = params.pop("amplitude", 0.05)
        out = conformal_metric(grid, conformal_profile(grid, amp))
    elif kind == "floor":
        A = floor_amplitude(params.pop("target", -0.9), grid.dim, grid.length)
        out = conformal_metric(grid, conformal_profile(grid, A, ((0, 1),)))
    elif kind == "blocks":
        out = block_metric(
            grid, params.pop("alpha", 1e-4), int(params.pop("blocks", 4)), int(params.pop("size", 2)), int(params.pop("seed", 0))
        )
    elif kind == "sheet":
        out = sheet_metric(grid, int(params.pop("axis", 0)), params.pop("amplitude", 3.0), int(params.pop("thickness", 2)))
    elif kind == "constant":
        out = MetricField.constant(grid, params.pop("scale", 1.0) * np.eye(grid.dim))
    else:
        raise DegenerateParameters(f"unknown generator {kind!r}; choose from {', '.join(GENERATORS)}")
    if params:
        raise DegenerateParameters(f"unused generator parameters: {sorted(params)}")
    return out
