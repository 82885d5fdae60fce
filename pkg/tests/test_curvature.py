import numpy as np
import pytest
import sympy as sp

from ricci_lab.curvature import (
    bianchi_defect,
    christoffel,
    riemann_ricci_scalar,
    scalar_curvature,
    weak_bound_accepted,
    weak_scalar_floor,
)
from ricci_lab.errors import NonPositiveDefinite
from ricci_lab.field import GridSpec, MetricField, flat_background
from ricci_lab.initial_data import (
    CutoffSpec,
    conformal_metric,
    conformal_profile,
    conformal_profile_derivatives,
    conformal_scalar_curvature,
    default_center,
    floor_amplitude,
    loglog_metric,
    torus_bump_metric,
)

PHASE = 0.3


@pytest.fixture(scope="module")
def symbolic_conformal_R():
    """R of exp(2u) delta in dim 4 from the coordinate formula, done symbolically."""
    n = 4
    x = sp.symbols("x0:4", real=True)
    A = sp.Symbol("A", positive=True)
    k = 2 * sp.pi
    u = A * (sp.sin(k * x[0]) + sp.sin(k * x[1] + PHASE))
    g = sp.exp(2 * u) * sp.eye(n)
    gi = sp.exp(-2 * u) * sp.eye(n)
    G = [[[sum(gi[m, q] * (sp.diff(g[j, q], x[i]) + sp.diff(g[i, q], x[j]) - sp.diff(g[i, j], x[q])) for q in range(n)) / 2
           for j in range(n)] for i in range(n)] for m in range(n)]
    R = 0
    for j in range(n):
        for kk in range(n):
            if gi[j, kk] == 0:
                continue
            term = 0
            for i in range(n):
                term += sp.diff(G[i][j][kk], x[i]) - sp.diff(G[i][i][kk], x[j])
                for p in range(n):
                    term += G[i][i][p] * G[p][j][kk] - G[i][j][p] * G[p][i][kk]
            R += gi[j, kk] * term
    return sp.lambdify((A, *x), R, "numpy")


def conformal_error(n, amp=0.05):
    grid = GridSpec(4, n)
    u = conformal_profile(grid, amp)
    du, lap = conformal_profile_derivatives(grid, amp)
    exact = conformal_scalar_curvature(grid, u, du, lap)
    return np.abs(scalar_curvature(conformal_metric(grid, u)) - exact).max()


class TestOracle:
    def test_closed_form_matches_symbolic(self, symbolic_conformal_R):
        grid = GridSpec(4, 8)
        u = conformal_profile(grid, 0.05)
        du, lap = conformal_profile_derivatives(grid, 0.05)
        closed = conformal_scalar_curvature(grid, u, du, lap)
        x = grid.coords()
        sym = symbolic_conformal_R(0.05, *x)
        assert np.abs(closed - sym).max() <= 1e-10 * np.abs(sym).max()

    def test_floor_amplitude_attains_target(self):
        A = floor_amplitude(-0.9)
        grid = GridSpec(4, 8)
        th = np.linspace(0, 1, 20001)
        k = 2 * np.pi
        lap = -k * k * A * np.sin(k * th)
        grad2 = (k * A * np.cos(k * th)) ** 2
        R = -np.exp(-2 * A * np.sin(k * th)) * (6 * lap + 6 * grad2)
        assert abs(R.min() + 0.9) <= 1e-6
        assert grid.dim == 4


class TestBasics:
    def test_flat_all_zero(self):
        grid = GridSpec(4, 8)
        b = riemann_ricci_scalar(flat_background(grid).h)
        for arr in (b.christoffel, b.riemann, b.ricci, b.scalar):
            assert np.abs(arr).max() <= 1e-12

    def test_constant_christoffel_zero(self):
        grid = GridSpec(3, 8)
        m = np.array([[2.0, 0.3, 0], [0.3, 1.0, 0.1], [0, 0.1, 1.5]])
        assert np.all(christoffel(MetricField.constant(grid, m)) == 0)

    def test_christoffel_symmetric_exact(self, rng):
        grid = GridSpec(3, 8)
        g = conformal_metric(grid, conformal_profile(grid, 0.1))
        G = christoffel(g)
        assert np.array_equal(G, np.swapaxes(G, -1, -2))

    def test_conformal_christoffel_closed_form(self):
        errs = []
        for n in (16, 32):
            grid = GridSpec(3, n)
            u = conformal_profile(grid, 0.05)
            du, _ = conformal_profile_derivatives(grid, 0.05)
            du = np.stack(du, axis=-1)
            eye = np.eye(3)
            exact = (np.einsum("mi,...j->...mij", eye, du) + np.einsum("mj,...i->...mij", eye, du)
                     - np.einsum("ij,...m->...mij", eye, du))
            errs.append(np.abs(christoffel(conformal_metric(grid, u)) - exact).max())
        assert errs[0] / errs[1] >= 12

    def test_indefinite_propagates(self):
        grid = GridSpec(2, 8)
        full = np.broadcast_to(np.eye(2), grid.shape + (2, 2)).copy()
        full[0, 0] = -np.eye(2)
        with pytest.raises(NonPositiveDefinite):
            scalar_curvature(MetricField.from_full(grid, full))


def generic_metric(n):
    grid = GridSpec(3, n)
    x = grid.coords()
    full = np.broadcast_to(np.eye(3), grid.shape + (3, 3)).copy()
    full[..., 0, 0] += 0.1 * np.sin(2 * np.pi * x[1])
    full[..., 0, 1] = full[..., 1, 0] = 0.05 * np.cos(2 * np.pi * x[2])
    full[..., 2, 2] += 0.1 * np.cos(2 * np.pi * (x[0] + x[1]))
    return MetricField.from_full(grid, full)


@pytest.fixture(scope="module")
def bundle():
    g = generic_metric(16)
    return g, riemann_ricci_scalar(g)


class TestStructure:

    def test_trace_identity(self, bundle):
        g, b = bundle
        assert np.abs(b.scalar - np.einsum("...ij,...ij->...", g.inverse, b.ricci)).max() <= 1e-12

    def test_ricci_from_riemann(self, bundle):
        # the stored Ricci tensor is the symmetric part of the Riemann contraction
        g, b = bundle
        rc = np.einsum("...jl,...ijkl->...ik", g.inverse, b.riemann)
        assert np.abs(0.5 * (rc + np.swapaxes(rc, -1, -2)) - b.ricci).max() <= 1e-9
        assert np.abs(np.einsum("...ik,...ik->...", g.inverse, rc) - b.scalar).max() <= 1e-9

    def test_riemann_antisymmetry_first_pair(self, bundle):
        _, b = bundle
        Rm = b.riemann
        assert np.abs(Rm + np.swapaxes(Rm, -4, -3)).max() <= 1e-9

    def test_ricci_symmetric(self, bundle):
        _, b = bundle
        assert np.array_equal(b.ricci, np.swapaxes(b.ricci, -1, -2))

    def test_second_pair_and_pair_symmetry_converge(self):
        # these need metric compatibility, which holds only up to truncation error
        anti, pair = [], []
        for n in (16, 32):
            Rm = riemann_ricci_scalar(generic_metric(n)).riemann
            anti.append(np.abs(Rm + np.swapaxes(Rm, -2, -1)).max())
            pair.append(np.abs(Rm - np.einsum("...ijkl->...klij", Rm)).max())
        assert anti[0] / anti[1] >= 12
        assert pair[0] / pair[1] >= 12

    def test_scaling_law(self, bundle):
        g, b = bundle
        c = 3.0
        gc = MetricField(g.grid, c * g.components)
        assert np.abs(christoffel(gc) - b.christoffel).max() <= 1e-12
        assert np.abs(scalar_curvature(gc) - b.scalar / c).max() <= 1e-12 * max(1.0, np.abs(b.scalar).max())

    def test_axis_permutation(self, bundle):
        g, b = bundle
        perm = (2, 0, 1)
        full = np.transpose(g.full, perm + (3, 4))[..., perm, :][..., :, perm]
        gp = MetricField.from_full(g.grid, full)
        bp = riemann_ricci_scalar(gp)
        # equal up to the reordering of floating-point sums
        assert np.abs(bp.scalar - np.transpose(b.scalar, perm)).max() <= 1e-12 * np.abs(b.scalar).max()
        expect = np.transpose(b.ricci, perm + (3, 4))[..., perm, :][..., :, perm]
        assert np.abs(bp.ricci - expect).max() <= 1e-12 * np.abs(b.ricci).max()


class TestConvergence:
    @pytest.mark.slow
    def test_fourth_order_scalar(self):
        ratio = conformal_error(16) / conformal_error(32)
        assert ratio >= 10

    def test_fourth_order_scalar_coarse(self):
        assert conformal_error(8) / conformal_error(16) >= 10

    @pytest.mark.slow
    def test_bianchi_second_order(self):
        def defect(n):
            grid = GridSpec(4, n)
            u = conformal_profile(grid, 0.05)
            g = conformal_metric(grid, u)
            x = grid.coords()
            full = g.full.copy()
            full[..., 0, 1] = full[..., 1, 0] = 0.05 * np.cos(2 * np.pi * x[2])
            return bianchi_defect(MetricField.from_full(grid, full))

        assert 3 <= defect(16) / defect(32) <= 6


class TestTorusBump:
    def test_center_curvature(self):
        grid = GridSpec(2, 64)
        bg = flat_background(grid)
        g = torus_bump_metric(grid, bg, sigma1=1.0, sigma2=0.15)
        R = scalar_curvature(g)
        c = tuple(int(round(v / grid.dx)) % grid.n for v in default_center(grid))
        assert abs(R[c] - 2.0) <= 0.2

    def test_gauss_bonnet(self):
        grid = GridSpec(2, 64)
        bg = flat_background(grid)
        g = torus_bump_metric(grid, bg, sigma1=1.0, sigma2=0.15)
        R = scalar_curvature(g)
        vol = np.sqrt(np.linalg.det(g.full))
        total = np.sum(R * vol) * grid.cell_volume
        assert abs(total) <= 0.03 * np.sum(np.abs(R) * vol) * grid.cell_volume

    def test_lift_matches_surface(self):
        g2 = torus_bump_metric(GridSpec(2, 16), flat_background(GridSpec(2, 16)))
        g3 = torus_bump_metric(GridSpec(3, 16), flat_background(GridSpec(3, 16)))
        R2, R3 = scalar_curvature(g2), scalar_curvature(g3)
        assert np.abs(R3 - R2[..., None]).max() <= 1e-12

    def test_zero_amplitude_is_flat(self):
        grid = GridSpec(2, 16)
        g = torus_bump_metric(grid, flat_background(grid), sigma1=0.0)
        assert np.array_equal(g.full, np.broadcast_to(np.eye(2), g.full.shape))


class TestWeakFloor:
    def test_flat(self):
        grid = GridSpec(4, 8)
        floors = weak_scalar_floor(flat_background(grid).h, [4 * grid.dx, 2 * grid.dx, grid.dx])
        assert np.allclose(floors, 0, atol=1e-10)

    def test_conformal_floor_respected(self):
        grid = GridSpec(4, 16)
        A = floor_amplitude(-0.9)
        x = grid.coords()
        g = conformal_metric(grid, A * np.sin(2 * np.pi * x[0]))
        scales = [4 * grid.dx, 2 * grid.dx, grid.dx]
        floors = weak_scalar_floor(g, scales)
        assert min(floors) >= -1 - 0.05
        assert weak_bound_accepted(floors, scales, -1.0)

    def test_loglog_floors_bounded(self):
        grid = GridSpec(4, 16)
        bg = flat_background(grid)
        g = loglog_metric(grid, bg, (1, 1, 0), CutoffSpec(tuple(default_center(grid)), 0.15, 1.5))
        floors = weak_scalar_floor(g, [4 * grid.dx, 2 * grid.dx])
        assert all(np.isfinite(floors))

    def test_rejects_violation(self):
        assert not weak_bound_accepted([-2.0, -2.0], [0.1, 0.05], -1.0)
