"""Periodic torus grids, tensor lattices and finite-difference calculus.

Tensor lattices are plain numpy arrays whose leading ``dim`` axes index grid
nodes and whose trailing axes are tensor slots, e.g. a covariant 2-tensor on a
4-D grid of side N has shape ``(N, N, N, N, 4, 4)``. Derivative operators put
the new (covariant) slot first among the tensor slots.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import BallTooLarge, NonPositiveDefinite

LETTERS = "abcdefghijklmnopqrstuvw"


@dataclass(frozen=True)
class GridSpec:
    dim: int = 4
    n: int = 16
    length: float = 1.0

    def __post_init__(self):
        if not 2 <= self.dim <= 4:
            raise ValueError(f"dim must be in [2, 4], got {self.dim}")
        if self.n < 8:
            raise ValueError(f"points_per_axis must be >= 8, got {self.n}")
        if not self.length > 0:
            raise ValueError("side_length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    def coords(self) -> list[np.ndarray]:
        """Node coordinates, one broadcastable array per axis."""
        ax = self.axis()
        out = []
        for d in range(self.dim):
            shape = [1] * self.dim
            shape[d] = self.n
            out.append(np.broadcast_to(ax.reshape(shape), self.shape))
        return out

    def node_to_point(self, node) -> np.ndarray:
        return np.asarray(node, dtype=float) * self.dx

    def displacement(self, center) -> list[np.ndarray]:
        """Minimal-image displacement of every node from ``center`` (chart units)."""
        c = np.asarray(center, dtype=float)
        L = self.length
        return [((x - c[d] + L / 2) % L) - L / 2 for d, x in enumerate(self.coords())]

    def coarsen(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.dim, self.n // factor, self.length)


def sym_pairs(dim: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(dim) for j in range(i, dim)]


def pack(full: np.ndarray, dim: int) -> np.ndarray:
    return np.stack([full[..., i, j] for i, j in sym_pairs(dim)], axis=-1)


def unpack(packed: np.ndarray, dim: int) -> np.ndarray:
    out = np.empty(packed.shape[:-1] + (dim, dim), dtype=packed.dtype)
    for c, (i, j) in enumerate(sym_pairs(dim)):
        out[..., i, j] = packed[..., c]
        out[..., j, i] = packed[..., c]
    return out


@dataclass(frozen=True, eq=False)
class MetricField:
    """Symmetric covariant 2-tensor sampled on a grid, stored as its i <= j components."""

    grid: GridSpec
    components: np.ndarray

    def __post_init__(self):
        ncomp = self.grid.dim * (self.grid.dim + 1) // 2
        if self.components.shape != self.grid.shape + (ncomp,):
            raise ValueError(f"components shape {self.components.shape} does not match grid {self.grid}")

    @classmethod
    def from_full(cls, grid: GridSpec, full: np.ndarray) -> "MetricField":
        full = np.asarray(full, dtype=float)
        sym = 0.5 * (full + np.swapaxes(full, -1, -2))
        return cls(grid, pack(sym, grid.dim))

    @classmethod
    def constant(cls, grid: GridSpec, matrix) -> "MetricField":
        m = np.broadcast_to(np.asarray(matrix, dtype=float), grid.shape + (grid.dim, grid.dim))
        return cls.from_full(grid, m)

    @classmethod
    def identity(cls, grid: GridSpec) -> "MetricField":
        return cls.constant(grid, np.eye(grid.dim))

    @cached_property
    def full(self) -> np.ndarray:
        return unpack(self.components, self.grid.dim)

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.full)

    @property
    def component_names(self) -> list[str]:
        return [f"g{i}{j}" for i, j in sym_pairs(self.grid.dim)]

    def with_full(self, full: np.ndarray) -> "MetricField":
        return MetricField.from_full(self.grid, full)

    def __add__(self, other):
        return MetricField(self.grid, self.components + other.components)

    def __sub__(self, other):
        return MetricField(self.grid, self.components - other.components)

    def scaled(self, c: float) -> "MetricField":
        return MetricField(self.grid, c * self.components)


# ---------------------------------------------------------------- stencils


def partial_derivative(f: np.ndarray, axis: int, dx: float) -> np.ndarray:
    """Fourth-order central first difference along a grid axis, periodic wrap."""
    near = np.roll(f, -1, axis) - np.roll(f, 1, axis)
    far = np.roll(f, -2, axis) - np.roll(f, 2, axis)
    return (8.0 * near - far) / (12.0 * dx)


def second_partial(f: np.ndarray, axis: int, dx: float) -> np.ndarray:
    near = np.roll(f, -1, axis) + np.roll(f, 1, axis)
    far = np.roll(f, -2, axis) + np.roll(f, 2, axis)
    return (16.0 * near - far - 30.0 * f) / (12.0 * dx * dx)


def central_difference2(f: np.ndarray, axis: int, dx: float) -> np.ndarray:
    """Second-order central first difference (used where the O(dx^2) pipeline is intended)."""
    return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2.0 * dx)


def gradient(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.stack([partial_derivative(f, a, grid.dx) for a in range(grid.dim)], axis=grid.dim)


def hessian(f: np.ndarray, grid: GridSpec, first: np.ndarray | None = None) -> np.ndarray:
    """All second partials, shape ``(*grid, dim, dim, *tensor)``.

    Pure second derivatives use the direct five-point stencil; mixed ones are
    composed first derivatives.
    """
    d, dx = grid.dim, grid.dx
    if first is None:
        first = gradient(f, grid)
    out = np.empty(grid.shape + (d, d) + f.shape[d:], dtype=float)
    for a in range(d):
        out[_slot(d, a, a)] = second_partial(f, a, dx)
        for b in range(a + 1, d):
            m = partial_derivative(np.take(first, a, axis=d), b, dx)
            out[_slot(d, a, b)] = m
            out[_slot(d, b, a)] = m
    return out


def _slot(d: int, a: int, b: int):
    return (slice(None),) * d + (a, b)


# ------------------------------------------------------------ background


@dataclass(eq=False)
class BackgroundGeometry:
    """Fixed smooth reference metric h with precomputed connection data.

    ``christoffel[..., m, a, b]`` is Gamma(h)^m_ab, ``dchristoffel[..., c, m, a, b]`` its
    partial derivative along c, and ``riemann`` the covariant curvature R_ijkl(h)
    with Rc_ik = h^jl R_ijkl.
    """

    h: MetricField
    h_inv: np.ndarray
    christoffel: np.ndarray
    dchristoffel: np.ndarray
    riemann: np.ndarray
    nu: list[float]
    flat: bool
    name: str = "flat"

    @property
    def grid(self) -> GridSpec:
        return self.h.grid

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        if self.flat:
            return np.ones(self.grid.shape)
        return np.sqrt(np.linalg.det(self.h.full))


def flat_background(grid: GridSpec) -> BackgroundGeometry:
    d = grid.dim
    h = MetricField.identity(grid)
    zeros3 = np.zeros(grid.shape + (d,) * 3)
    return BackgroundGeometry(
        h=h,
        h_inv=np.broadcast_to(np.eye(d), grid.shape + (d, d)).copy(),
        christoffel=zeros3,
        dchristoffel=np.zeros(grid.shape + (d,) * 4),
        riemann=np.zeros(grid.shape + (d,) * 4),
        nu=[0.0] * 5,
        flat=True,
        name="flat",
    )


def bump_profile(grid: GridSpec) -> np.ndarray:
    """Smooth periodic symmetric perturbation s(x) used by the bump background."""
    d = grid.dim
    k = 2 * np.pi / grid.length
    x = grid.coords()
    s = np.zeros(grid.shape + (d, d))
    for i in range(d):
        s[..., i, i] = np.sin(k * x[i]) * np.cos(k * x[(i + 1) % d])
    off = 0.5 * np.cos(k * (x[0] + x[d - 1]))
    s[..., 0, 1] = off
    s[..., 1, 0] = off
    return s


def bump_background(grid: GridSpec, eta: float = 0.05) -> BackgroundGeometry:
    """h = delta + eta * s(x) with s a smooth periodic perturbation (SPD for eta < 0.4)."""
    from .curvature import christoffel, riemann_tensor

    d = grid.dim
    h = MetricField.from_full(grid, np.eye(d) + eta * bump_profile(grid))
    chris = christoffel(h)
    dchris = gradient(chris, grid)
    riem = riemann_tensor(h, chris)
    bg = BackgroundGeometry(
        h=h,
        h_inv=h.inverse,
        christoffel=chris,
        dchristoffel=dchris,
        riemann=riem,
        nu=[],
        flat=False,
        name=f"bump(eta={eta:g})",
    )
    bg.nu = curvature_derivative_bounds(bg)
    return bg


def curvature_derivative_bounds(bg: BackgroundGeometry, order: int = 4) -> list[float]:
    """nu_i = sup |grad^i Rm(h)| for i = 0..order.

    nu_0 is the exact h-norm. For i >= 1 the i-fold covariant derivative of a
    rank-4 tensor does not fit in memory on a 4-D grid, so the partial-derivative
    norm with respect to delta is used; it differs from the covariant one by
    O(eta) relative terms.
    """
    grid = bg.grid
    d = grid.dim
    nu = [float(np.max(norm_h(bg.riemann, bg)))]
    if order == 0:
        return nu
    # independent components i<j, k<l with multiplicity 4
    comps = [(i, j, k, l) for i, j in itertools.combinations(range(d), 2) for k, l in itertools.combinations(range(d), 2)]
    for level in range(1, order + 1):
        acc = np.zeros(grid.shape)
        for combo in itertools.combinations_with_replacement(range(d), level):
            counts = np.bincount(combo, minlength=d)
            mult = math.factorial(level) / np.prod([math.factorial(c) for c in counts])
            for idx in comps:
                f = bg.riemann[(Ellipsis,) + idx]
                for axis in combo:
                    f = partial_derivative(f, axis, grid.dx)
                acc += 4.0 * mult * f * f
        nu.append(float(np.sqrt(acc.max())))
    return nu


# ------------------------------------------------------- covariant calculus


def _gamma_contractions(T: np.ndarray, chris: np.ndarray, d: int) -> np.ndarray:
    """sum_s Gamma^z_{a i_s} T_{.. z ..}, returned with the derivative slot a first."""
    k = T.ndim - d
    idx = LETTERS[1 : 1 + k]
    total = 0.0
    for s in range(k):
        t_in = idx[:s] + "z" + idx[s + 1 :]
        expr = f"...za{idx[s]},...{t_in}->...a{idx}"
        total = total + np.einsum(expr, chris, T, optimize=True)
    return total


def covariant_derivative(T: np.ndarray, bg: BackgroundGeometry) -> np.ndarray:
    """nabla^h T for a covariant tensor lattice; new slot first among tensor slots."""
    grid = bg.grid
    dT = gradient(T, grid)
    if bg.flat or T.ndim == grid.dim:
        return dT
    return dT - _gamma_contractions(T, bg.christoffel, grid.dim)


def covariant_hessian(T: np.ndarray, bg: BackgroundGeometry, dT: np.ndarray | None = None) -> np.ndarray:
    """nabla^h nabla^h T with slots (a, b, *T): direct stencils for the partial part."""
    grid = bg.grid
    d = grid.dim
    if dT is None:
        dT = gradient(T, grid)
    H = hessian(T, grid, first=dT)
    if bg.flat:
        return H
    k = T.ndim - d
    idx = LETTERS[2 : 2 + k]
    G, dG = bg.christoffel, bg.dchristoffel
    # partial_a (nabla_b T) = H_ab - sum_s [ dG_a^m_{b i_s} T_m + G^m_{b i_s} dT_a..m.. ]
    nabla = dT - _gamma_contractions(T, G, d) if k else dT
    out = H.copy()
    for s in range(k):
        t_in = idx[:s] + "z" + idx[s + 1 :]
        out -= np.einsum(f"...azb{idx[s]},...{t_in}->...ab{idx}", dG, T, optimize=True)
        out -= np.einsum(f"...zb{idx[s]},...a{t_in}->...ab{idx}", G, dT, optimize=True)
    # remaining connection terms of the outer derivative acting on (b, *T)
    out -= np.einsum(f"...zab,...z{idx}->...ab{idx}", G, nabla, optimize=True)
    for s in range(k):
        t_in = idx[:s] + "z" + idx[s + 1 :]
        out -= np.einsum(f"...za{idx[s]},...b{t_in}->...ab{idx}", G, nabla, optimize=True)
    return out


def raise_all(T: np.ndarray, inv: np.ndarray, d: int, slots=None) -> np.ndarray:
    """Contract each listed slot of T with the inverse metric (all slots by default)."""
    k = T.ndim - d
    slots = range(k) if slots is None else slots
    idx = LETTERS[:k]
    U = T
    for s in slots:
        out_idx = idx[:s] + "z" + idx[s + 1 :]
        U = np.einsum(f"...z{idx[s]},...{idx}->...{out_idx}", inv, U, optimize=True)
    return U


def norm_sq(T: np.ndarray, metric: np.ndarray, inv: np.ndarray, d: int, upper=()) -> np.ndarray:
    """Pointwise |T|^2: lower slots contracted with ``inv``, slots in ``upper`` with ``metric``."""
    k = T.ndim - d
    lower = [s for s in range(k) if s not in upper]
    U = raise_all(T, inv, d, lower)
    if upper:
        U = raise_all(U, metric, d, list(upper))
    return np.sum((T * U).reshape(T.shape[:d] + (-1,)), axis=-1)


def norm_h(T: np.ndarray, bg: BackgroundGeometry, upper=()) -> np.ndarray:
    d = bg.grid.dim
    if bg.flat:
        return np.sqrt(np.sum((T * T).reshape(T.shape[:d] + (-1,)), axis=-1))
    return np.sqrt(np.maximum(norm_sq(T, bg.h.full, bg.h_inv, d, upper), 0.0))


def eig_bounds_rel(g: MetricField, bg: BackgroundGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Extreme generalized eigenvalues of g relative to h at each node."""
    if bg.flat:
        lam = np.linalg.eigvalsh(g.full)
    else:
        L = np.linalg.cholesky(bg.h.full)
        Linv = np.linalg.inv(L)
        lam = np.linalg.eigvalsh(Linv @ g.full @ np.swapaxes(Linv, -1, -2))
    lo, hi = lam[..., 0], lam[..., -1]
    if np.any(lo <= 0):
        node = np.unravel_index(np.argmin(lo), lo.shape)
        raise NonPositiveDefinite(node, lo[node])
    return lo, hi


def check_positive_definite(g: MetricField) -> np.ndarray:
    """Smallest chart eigenvalue at every node; raises NonPositiveDefinite if any is <= 0."""
    lo = np.linalg.eigvalsh(g.full)[..., 0]
    if not np.all(lo > 0):
        node = np.unravel_index(np.nanargmin(np.where(np.isnan(lo), -np.inf, lo)), lo.shape)
        raise NonPositiveDefinite(node, lo[node])
    return lo


def equivalence_constant(g: MetricField, bg: BackgroundGeometry) -> float:
    """Smallest a with (1/a) h <= g <= a h."""
    lo, hi = eig_bounds_rel(g, bg)
    return float(max(hi.max(), 1.0 / lo.min()))


# ------------------------------------------------------------ integration


def derivative_densities(g: MetricField, bg: BackgroundGeometry, g_ref: MetricField | None = None):
    """Pointwise (|nabla^h g|^2, |nabla^h nabla^h g|^2), of ``g - g_ref`` when given."""
    grid = bg.grid
    d, dx = grid.dim, grid.dx
    comps = g.components if g_ref is None else g.components - g_ref.components
    if bg.flat:
        weight = np.array([1.0 if i == j else 2.0 for i, j in sym_pairs(d)])
        first = [partial_derivative(comps, a, dx) for a in range(d)]
        one = sum(np.einsum("...c,c->...", f * f, weight) for f in first)
        two = np.zeros(grid.shape)
        for a in range(d):
            two += np.einsum("...c,c->...", second_partial(comps, a, dx) ** 2, weight)
            for b in range(a + 1, d):
                m = partial_derivative(first[a], b, dx)
                two += 2.0 * np.einsum("...c,c->...", m * m, weight)
        return one, two
    T = unpack(comps, d)
    dT = gradient(T, grid)
    nab = dT - _gamma_contractions(T, bg.christoffel, d)
    return norm_h(nab, bg) ** 2, norm_h(covariant_hessian(T, bg, dT), bg) ** 2


def energy_density(g: MetricField, bg: BackgroundGeometry, g_ref: MetricField | None = None) -> np.ndarray:
    """|nabla^h g|^2 + |nabla^h nabla^h g|^2 at every node (of ``g - g_ref`` when given)."""
    one, two = derivative_densities(g, bg, g_ref)
    return one + two


def ball_mask(grid: GridSpec, center, r: float | None, bg: BackgroundGeometry | None = None) -> np.ndarray:
    """Node-centre membership of the geodesic ball (frozen-coefficient h at the centre)."""
    if r is None:
        return np.ones(grid.shape, dtype=bool)
    center = np.asarray(center, dtype=float)
    disp = grid.displacement(center)
    if bg is None or bg.flat:
        dist2 = sum(x * x for x in disp)
    else:
        node = tuple(int(round(c / grid.dx)) % grid.n for c in center)
        hc = bg.h.full[node]
        dist2 = sum(hc[i, j] * disp[i] * disp[j] for i in range(grid.dim) for j in range(grid.dim))
    return dist2 <= r * r * (1 + 1e-12)


def ball_integral(density: np.ndarray, bg: BackgroundGeometry, center, r: float | None) -> float:
    grid = bg.grid
    if r is not None and 2 * r >= grid.length / 2:
        raise BallTooLarge(f"ball radius {r} too large for side length {grid.length}")
    mask = ball_mask(grid, center, r, bg)
    w = density * bg.sqrt_det
    return float(np.sum(w[mask]) * grid.cell_volume)


def ball_energy(g: MetricField, bg: BackgroundGeometry, center, r: float | None, density=None) -> float:
    """W^{2,2} energy of g over B_r(center); ``r=None`` integrates over the whole torus.

    ``center`` is a point in chart coordinates.
    """
    if density is None:
        density = energy_density(g, bg)
    return ball_integral(density, bg, center, r)


def center_net(grid: GridSpec, stride: int) -> list[np.ndarray]:
    """Coarse net of ball centres: every ``stride``-th node along each axis."""
    ticks = np.arange(0, grid.n, stride) * grid.dx
    return [np.array(p) for p in itertools.product(ticks, repeat=grid.dim)]


def ball_integral_field(density: np.ndarray, bg: BackgroundGeometry, r: float, stride: int) -> np.ndarray:
    """Ball integrals for every centre of the net, computed by a periodic FFT convolution."""
    grid = bg.grid
    if 2 * r >= grid.length / 2:
        raise BallTooLarge(f"ball radius {r} too large for side length {grid.length}")
    kernel = ball_mask(grid, np.zeros(grid.dim), r).astype(float)
    w = density * bg.sqrt_det
    conv = np.real(np.fft.ifftn(np.fft.fftn(w) * np.conj(np.fft.fftn(kernel))))
    return conv[(slice(None, None, stride),) * grid.dim] * grid.cell_volume


def sup_ball_integral(density: np.ndarray, bg: BackgroundGeometry, r: float, stride: int) -> float:
    """max over a centre net of ball integrals."""
    return float(ball_integral_field(density, bg, r, stride).max())


# ------------------------------------------------------------ mollification


def gaussian_transfer(grid: GridSpec, scale: float) -> np.ndarray:
    """Fourier multiplier of the periodic Gaussian kernel (truncated at 6*scale, unit mass)."""
    n, dx = grid.n, grid.dx
    reach = int(math.ceil(6.0 * scale / dx))
    offsets = np.arange(-reach, reach + 1)
    w = np.exp(-0.5 * (offsets * dx / scale) ** 2)
    w /= w.sum()
    kernel = np.zeros(n)
    np.add.at(kernel, offsets % n, w)
    return np.real(np.fft.fft(kernel))


def mollify(f: np.ndarray, scale: float, grid: GridSpec) -> np.ndarray:
    """Periodic Gaussian smoothing, one FFT pass per grid axis."""
    if scale <= 0:
        raise ValueError("mollification scale must be positive")
    mult = gaussian_transfer(grid, scale)
    out = np.asarray(f, dtype=float)
    for a in range(grid.dim):
        shape = [1] * out.ndim
        shape[a] = grid.n
        out = np.real(np.fft.ifft(np.fft.fft(out, axis=a) * mult.reshape(shape), axis=a))
    return out


def mollify_metric(g: MetricField, scale: float) -> MetricField:
    return MetricField(g.grid, mollify(g.components, scale, g.grid))


# ------------------------------------------------------------ interpolation


def interpolate(f: np.ndarray, points, grid: GridSpec) -> np.ndarray:
    """Multilinear periodic interpolation of a tensor lattice.

    ``points`` has shape ``(dim,)`` or ``(P, dim)`` in chart units; the result has
    shape ``(*tensor,)`` or ``(P, *tensor)``.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    d = grid.dim
    s = pts / grid.dx
    base = np.floor(s)
    frac = s - base
    base = base.astype(np.int64)
    out = 0.0
    for corner in itertools.product((0, 1), repeat=d):
        w = np.ones(len(pts))
        idx = []
        for a, c in enumerate(corner):
            w = w * (frac[:, a] if c else 1.0 - frac[:, a])
            idx.append((base[:, a] + c) % grid.n)
        vals = f[tuple(idx)]
        out = out + w.reshape((-1,) + (1,) * (vals.ndim - 1)) * vals
    return out[0] if single else out


class SplineSampler:
    """Periodic cubic B-spline sampler for a tensor lattice; prefilters once."""

    def __init__(self, f: np.ndarray, grid: GridSpec, order: int = 3):
        self.grid = grid
        self.order = order
        self.tshape = f.shape[grid.dim :]
        flat = f.reshape(grid.shape + (-1,))
        self.coeffs = [
            ndimage.spline_filter(flat[..., c], order=order, mode="grid-wrap") if order > 1 else flat[..., c]
            for c in range(flat.shape[-1])
        ]

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        coords = (pts / self.grid.dx).T
        vals = [
            ndimage.map_coordinates(c, coords, order=self.order, mode="grid-wrap", prefilter=False)
            for c in self.coeffs
        ]
        return np.stack(vals, axis=-1).reshape((len(pts),) + self.tshape)
