import numpy as np
import pytest

from ricci_lab.errors import SingularJacobian
from ricci_lab.field import GridSpec, MetricField, flat_background, mollify_metric
from ricci_lab.flow import StepperConfig, evolve
from ricci_lab.initial_data import (
    conformal_metric,
    conformal_profile,
    conformal_profile_derivatives,
)
from ricci_lab.diffeo import (
    ODE_SIGN,
    ConstantVelocity,
    VelocityHistory,
    deturck_vector_field,
    diffeo_frames,
    group_property_defect,
    holder_ratios,
    integrate_diffeo,
    isometry_identity_check,
    lie_derivative,
    map_jacobian,
    pullback_metric,
    pullback_series,
    ricci_flow_residual,
    ricci_lp_checks,
    tracking_grid,
    w12_limit_check,
)


def conformal_run(n, dim=3, T=0.002, knots=11, sign=ODE_SIGN):
    grid = GridSpec(dim, n)
    bg = flat_background(grid)
    g0 = conformal_metric(grid, conformal_profile(grid, 0.05))
    traj, _ = evolve(g0, bg, T, StepperConfig(cfl=0.2), schedule=list(np.linspace(0, T, knots)[1:]))
    vel = VelocityHistory.from_metrics(traj.times, traj.metrics, bg, sign)
    S = traj.times[len(traj.times) // 2]
    diffeo = integrate_diffeo(vel, tracking_grid(grid, 1), traj.times[1:], S, substeps=4)
    return grid, bg, traj, vel, diffeo


def residual(n, sign=ODE_SIGN):
    *_, traj, _, diffeo = conformal_run(n, sign=sign)
    return ricci_flow_residual(*pullback_series(traj.times, traj.metrics, diffeo))["max"]


@pytest.fixture(scope="module")
def run8():
    return conformal_run(8)


class TestVectorField:
    def test_constant_metric(self):
        grid = GridSpec(3, 8)
        g = MetricField.constant(grid, np.diag([1.0, 2.0, 3.0]))
        assert np.all(deturck_vector_field(g, flat_background(grid)) == 0)

    def test_conformal_closed_form(self):
        # g^bc Gamma^a_bc = (2 - n) e^{-2u} d_a u for g = e^{2u} delta
        errs = []
        for n in (16, 32):
            grid = GridSpec(3, n)
            u = conformal_profile(grid, 0.05)
            du, _ = conformal_profile_derivatives(grid, 0.05)
            exact = ODE_SIGN * (2 - 3) * np.exp(-2 * u)[..., None] * np.stack(du, axis=-1)
            V = deturck_vector_field(conformal_metric(grid, u), flat_background(grid))
            errs.append(np.abs(V - exact).max())
        assert errs[0] / errs[1] >= 12

    def test_axis_permutation(self):
        grid = GridSpec(3, 16)
        u = conformal_profile(grid, 0.05)
        bg = flat_background(grid)
        perm = (1, 2, 0)
        V = deturck_vector_field(conformal_metric(grid, u), bg)
        Vp = deturck_vector_field(conformal_metric(grid, np.transpose(u, perm)), bg)
        expect = np.transpose(V, perm + (3,))[..., perm]
        assert np.abs(Vp - expect).max() <= 1e-14

    def test_lie_derivative_of_translation(self):
        # a constant field generates translations: L_V g = V . dg
        grid = GridSpec(2, 16)
        g = conformal_metric(grid, conformal_profile(grid, 0.05))
        V = np.broadcast_to(np.array([0.3, -0.2]), grid.shape + (2,))
        from ricci_lab.field import central_difference2, unpack

        expect = unpack(0.3 * central_difference2(g.components, 0, grid.dx) - 0.2 * central_difference2(g.components, 1, grid.dx), 2)
        assert np.abs(lie_derivative(V, g) - expect).max() <= 1e-12


class TestParticles:
    def test_constant_velocity_exact(self):
        tg = GridSpec(2, 8)
        v = np.array([0.3, -0.7])
        d = integrate_diffeo(ConstantVelocity(v), tg, [0.0, 0.25, 1.0], 0.5)
        x = np.stack(tg.coords(), axis=-1)
        for t, P, J in zip(d.sample_times, d.positions, d.jacobians):
            assert np.abs(P - (x + (t - 0.5) * v)).max() <= 1e-14
            assert np.abs(J - np.eye(2)).max() <= 1e-12

    def test_anchor_identity_exact(self, run8):
        grid, _, _, _, d = run8
        P = d.positions[d.index(d.anchor)]
        assert np.array_equal(P, np.stack(d.tracking.coords(), axis=-1))

    def test_stationary_flat(self):
        grid = GridSpec(2, 8)
        bg = flat_background(grid)
        vel = VelocityHistory.from_metrics([0.0, 1.0], [bg.h, bg.h], bg)
        d = integrate_diffeo(vel, grid, [0.0, 1.0], 0.5)
        x = np.stack(grid.coords(), axis=-1)
        for P, J in zip(d.positions, d.jacobians):
            assert np.array_equal(P, x) and np.array_equal(J, np.broadcast_to(np.eye(2), J.shape))
        assert all(v == 0 for v in d.composition_error.values())

    def test_inverse_consistency(self, run8):
        *_, d = run8
        for t in d.inverse:
            assert d.composition_error[t] <= 1e-6
            assert d.jacobian_defect[t] <= 1e-3

    def test_group_property(self, run8):
        _, _, traj, vel, d = run8
        defect = group_property_defect(vel, d.tracking, traj.times[5], traj.times[8], traj.times[-1])
        assert defect <= 1e-8

    def test_holder_ratio_constant_velocity(self):
        tg = GridSpec(2, 8)
        v = np.array([0.3, 0.4])
        d = integrate_diffeo(ConstantVelocity(v), tg, [0.0, 0.01, 0.04], 0.02)
        assert holder_ratios(d)["max"] == pytest.approx(0.5 * np.sqrt(0.04), rel=1e-10)

    def test_singular_jacobian(self):
        tg = GridSpec(2, 8)
        x = np.stack(tg.coords(), axis=-1)
        folded = x.copy()
        folded[..., 0] = -x[..., 0]
        with pytest.raises(SingularJacobian):
            pullback_metric(MetricField.constant(tg, np.eye(2)), folded, map_jacobian(folded, tg), tg)

    def test_frames(self, run8):
        *_, d = run8
        frames = diffeo_frames(d)
        assert len(frames) == len(d.sample_times)
        assert {"Phi0", "Phi1", "Phi2", "W0"} <= set(frames[0][1])


class TestPullback:
    def test_identity(self):
        grid = GridSpec(2, 8)
        g = conformal_metric(grid, conformal_profile(grid, 0.1))
        x = np.stack(grid.coords(), axis=-1)
        J = np.broadcast_to(np.eye(2), grid.shape + (2, 2))
        assert np.array_equal(pullback_metric(g, x, J, grid).full, g.full)

    def test_linear_map(self, rng):
        grid = GridSpec(3, 8)
        A = np.eye(3) + 0.2 * rng.normal(size=(3, 3))
        if np.linalg.det(A) < 0:
            A[:, 0] *= -1
        m = np.array([[2.0, 0.1, 0], [0.1, 1.0, 0.2], [0, 0.2, 1.5]])
        g = MetricField.constant(grid, m)
        x = np.stack(grid.coords(), axis=-1)
        P = x @ A.T
        ell = pullback_metric(g, P, np.broadcast_to(A, grid.shape + (3, 3)), grid)
        assert np.abs(ell.full - A.T @ m @ A).max() <= 1e-13

    def test_volume_element(self, run8):
        _, _, traj, _, d = run8
        t = d.sample_times[0]
        P, J = d.at(t)
        ell = pullback_metric(traj.metrics[traj.times.index(t)], P, J, d.tracking)
        from ricci_lab.diffeo import sample_metric

        G = sample_metric(traj.metrics[traj.times.index(t)], P.reshape(-1, 3)).reshape(J.shape)
        lhs = np.linalg.det(ell.full)
        rhs = np.linalg.det(J) ** 2 * np.linalg.det(G)
        assert np.abs(lhs - rhs).max() <= 1e-10 * np.abs(rhs).max()

    def test_anchor_pullback_equals_metric(self, run8):
        _, _, traj, _, d = run8
        tt, ls = pullback_series(traj.times, traj.metrics, d, [d.anchor])
        g = traj.metrics[traj.times.index(d.anchor)]
        # DPhi = I exactly at the anchor and samples sit on nodes
        assert np.array_equal(ls[0].full, g.full)


class TestResidual:
    def test_flat_stationary(self):
        grid = GridSpec(2, 8)
        bg = flat_background(grid)
        out = ricci_flow_residual([0.0, 0.1, 0.3], [bg.h] * 3)
        assert out["max"] == 0

    def test_needs_three(self):
        grid = GridSpec(2, 8)
        with pytest.raises(ValueError):
            ricci_flow_residual([0.0, 0.1], [flat_background(grid).h] * 2)

    def test_second_order(self):
        ratio = residual(8) / residual(16)
        assert 3 <= ratio <= 6

    def test_sign_discrimination(self):
        good, bad = residual(16), residual(16, sign=-ODE_SIGN)
        assert bad >= 20 * good
        assert bad >= 1.0


class TestEstimates:
    def test_lp_zero_for_equal_times(self, run8):
        _, _, traj, _, d = run8
        tt, ls = pullback_series(traj.times, traj.metrics, d)
        out = ricci_lp_checks([tt[0], tt[0]], [ls[0], ls[0]], np.full(3, 0.5), 0.25)
        assert out["pairs"][0][2] == 0 and out["pairs"][0][3] == 0

    def test_lp_stationary(self):
        grid = GridSpec(2, 8)
        bg = flat_background(grid)
        out = ricci_lp_checks([0.1, 0.2, 0.3], [bg.h] * 3, np.full(2, 0.5), 0.25, p=4)
        assert out["slope"] == 0 and all(v == 0 for v in out["increments"])

    def test_w12_stationary(self):
        grid = GridSpec(2, 8)
        bg = flat_background(grid)
        out = w12_limit_check([0.1, 0.2, 0.3], [bg.h] * 3, np.full(2, 0.5), 0.25)
        assert all(v == 0 for v in out["values"])

    def test_w12_volume_additivity(self):
        grid = GridSpec(2, 64)
        x = grid.coords()
        full = np.broadcast_to(np.eye(2), grid.shape + (2, 2)).copy()
        full[..., 0, 0] += 0.1 * np.sin(2 * np.pi * 8 * x[0])
        l0 = MetricField.from_full(grid, full)
        flat = flat_background(grid).h
        c = np.full(2, 0.5)
        small = w12_limit_check([0.0, 1.0], [l0, flat], c, 0.15)["values"][1]
        big = w12_limit_check([0.0, 1.0], [l0, flat], c, 0.15 * np.sqrt(2))["values"][1]
        assert abs(big / small - 2) <= 0.05 * 2

    def test_isometry_at_anchor(self, run8):
        grid, bg, traj, _, d = run8
        S = d.anchor
        g = traj.metrics[traj.times.index(S)]
        _, ls = pullback_series(traj.times, traj.metrics, d, [S])
        defect = isometry_identity_check(g, ls[0], d.inverse[S], d.inverse_jacobians[S], bg)
        assert defect == 0

    def test_isometry_stationary(self):
        grid = GridSpec(2, 8)
        bg = flat_background(grid)
        x = np.stack(grid.coords(), axis=-1)
        J = np.broadcast_to(np.eye(2), grid.shape + (2, 2))
        assert isometry_identity_check(bg.h, bg.h, x, J, bg) == 0
