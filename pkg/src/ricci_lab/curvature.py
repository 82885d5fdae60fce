"""Christoffel symbols, Riemann/Ricci/scalar curvature and weak scalar-curvature floors.

Curvature is always obtained by differentiating the Christoffel symbols, never
from second derivatives of the metric directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import (
    MetricField,
    central_difference2,
    check_positive_definite,
    gradient,
    mollify_metric,
    partial_derivative,
    sym_pairs,
    unpack,
)


@dataclass(eq=False)
class CurvatureBundle:
    christoffel: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    riemann: np.ndarray | None = None


def lowered_christoffel(g: MetricField, dg: np.ndarray | None = None) -> np.ndarray:
    """Gamma_{k,ij} = (d_i g_jk + d_j g_ik - d_k g_ij) / 2, slots (..., k, i, j)."""
    d = g.grid.dim
    if dg is None:
        dg = unpack(gradient(g.components, g.grid), d)  # (..., c, i, j)
    term1 = np.einsum("...ijk->...kij", dg)  # d_i g_jk
    term2 = np.einsum("...jik->...kij", dg)  # d_j g_ik
    return 0.5 * (term1 + term2 - dg)


def christoffel(g: MetricField, ginv: np.ndarray | None = None) -> np.ndarray:
    """Gamma(g)^m_ij with slots (..., m, i, j); symmetric in i, j."""
    if ginv is None:
        ginv = g.inverse
    return np.einsum("...mk,...kij->...mij", ginv, lowered_christoffel(g), optimize=True)


def riemann_tensor(g: MetricField, chris: np.ndarray | None = None) -> np.ndarray:
    """Covariant R_ijkl with R_ijkl = -R_jikl = -R_ijlk and Rc_ik = g^jl R_ijkl."""
    if chris is None:
        chris = christoffel(g)
    dG = gradient(chris, g.grid)  # dG[..., i, l, j, k] = d_i Gamma^l_jk
    # R^l_ijk = d_i G^l_jk - d_j G^l_ik + G^l_ip G^p_jk - G^l_jp G^p_ik
    up = np.einsum("...iljk->...ijkl", dG)
    up = up - np.swapaxes(up, -4, -3)
    quad = np.einsum("...lip,...pjk->...ijkl", chris, chris, optimize=True)
    up = up + quad - np.swapaxes(quad, -4, -3)
    lowered = np.einsum("...ijkm,...ml->...ijkl", up, g.full, optimize=True)
    return -lowered


def ricci_tensor(g: MetricField, chris: np.ndarray | None = None) -> np.ndarray:
    """Rc_jk = d_i G^i_jk - d_j G^i_ik + G^i_ip G^p_jk - G^i_jp G^p_ik.

    Evaluated without forming the full Riemann tensor.
    """
    grid = g.grid
    d = grid.dim
    if chris is None:
        chris = christoffel(g)
    pairs = sym_pairs(d)
    packed = np.stack([chris[..., :, j, k] for j, k in pairs], axis=-1)  # (..., i, c)
    div = sum(partial_derivative(packed[..., i, :], i, grid.dx) for i in range(d))
    trace = np.einsum("...iik->...k", chris)
    dtrace = np.stack([partial_derivative(trace, j, grid.dx) for j in range(d)], axis=-2)  # [.., j, k]
    ric = unpack(div, d) - 0.5 * (dtrace + np.swapaxes(dtrace, -1, -2))
    ric += np.einsum("...p,...pjk->...jk", trace, chris, optimize=True)
    ric -= np.einsum("...ijp,...pik->...jk", chris, chris, optimize=True)
    return 0.5 * (ric + np.swapaxes(ric, -1, -2))


def riemann_ricci_scalar(g: MetricField, with_riemann: bool = True) -> CurvatureBundle:
    check_positive_definite(g)
    ginv = g.inverse
    chris = christoffel(g, ginv)
    ric = ricci_tensor(g, chris)
    scal = np.einsum("...jk,...jk->...", ginv, ric)
    riem = riemann_tensor(g, chris) if with_riemann else None
    return CurvatureBundle(christoffel=chris, ricci=ric, scalar=scal, riemann=riem)


def scalar_curvature(g: MetricField) -> np.ndarray:
    return riemann_ricci_scalar(g, with_riemann=False).scalar


def bianchi_defect(g: MetricField) -> float:
    """max |g^ij nabla_i Rc_jk - d_k R / 2| with the outer derivatives taken by
    centred second-order differences, so the defect is O(dx^2)."""
    grid = g.grid
    d = grid.dim
    ginv = g.inverse
    chris = christoffel(g, ginv)
    ric = ricci_tensor(g, chris)
    scal = np.einsum("...jk,...jk->...", ginv, ric)
    dric = np.stack([central_difference2(ric, i, grid.dx) for i in range(d)], axis=-3)  # [..., i, j, k]
    div = np.einsum("...ij,...ijk->...k", ginv, dric)
    trace_g = np.einsum("...ij,...pij->...p", ginv, chris)
    div -= np.einsum("...p,...pk->...k", trace_g, ric)
    div -= np.einsum("...ij,...pik,...jp->...k", ginv, chris, ric, optimize=True)
    dR = np.stack([central_difference2(scal, k, grid.dx) for k in range(d)], axis=-1)
    return float(np.abs(div - 0.5 * dR).max())


def weak_scalar_floor(g0: MetricField, scales) -> list[float]:
    """min over the grid of R(mollify(g0, s)) for each scale s."""
    return [float(scalar_curvature(mollify_metric(g0, s)).min()) for s in scales]


def weak_bound_accepted(floors, scales, k: float, c_tol: float = 1.0) -> bool:
    """Accept R(g0) >= k when every floor lies above k - c_tol * sqrt(scale)."""
    return all(f >= k - c_tol * np.sqrt(s) for f, s in zip(floors, scales))
