import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ricci_lab.analysis import (
    OdeProblem,
    SpdEnsemble,
    comparison_ratios,
    conjugate,
    integral_holder_suite,
    norm_comparison_suite,
    ode_bound,
    ode_comparison_test,
    random_forcing,
    random_spd,
    scalar_floor_monitor,
)
from ricci_lab.field import GridSpec, MetricField, flat_background
from ricci_lab.flow import StepperConfig, evolve
from ricci_lab.initial_data import conformal_metric, floor_amplitude


class TestOdeBound:
    @pytest.mark.parametrize("c", [1.0, 2.5])
    @pytest.mark.parametrize("eps", [0.25, 0.5, 0.75])
    def test_constant_forcing_closed_form(self, c, eps):
        for t in (1e-3, 0.3, 1.0):
            for Z in (lambda s, c=c: c + 0 * s, (np.array([0.1, 1.0]), np.array([c, c]))):
                assert ode_bound(OdeProblem(eps, Z), t) == pytest.approx(c * t / (1 - eps), rel=1e-10)

    def test_zero_forcing(self):
        assert ode_bound(OdeProblem(0.5, lambda s: 0.0), 0.7) == 0.0

    @pytest.mark.parametrize("eps", [0.1, 0.5, 0.9])
    def test_linear_forcing(self, eps):
        t = 0.8
        assert ode_bound(OdeProblem(eps, lambda s: s), t) == pytest.approx(t * t / (2 - eps), rel=1e-10)
        table = (np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        assert ode_bound(OdeProblem(eps, table), t) == pytest.approx(t * t / (2 - eps), rel=1e-10)

    def test_eps_must_be_below_one(self):
        with pytest.raises(ValueError):
            OdeProblem(1.0, lambda s: 1.0)

    @given(st.integers(0, 2**32 - 1))
    def test_monotone_and_additive(self, seed):
        rng = np.random.default_rng(seed)
        ts, v1 = random_forcing(rng)
        _, v2 = random_forcing(rng)
        eps = float(rng.uniform(0.05, 0.9))
        p1, p2, p12 = OdeProblem(eps, (ts, v1)), OdeProblem(eps, (ts, v2)), OdeProblem(eps, (ts, v1 + v2))
        t = np.sort(rng.uniform(1e-4, 1.0, 2))
        b = [ode_bound(p1, x) for x in t]
        assert b[0] <= b[1] + 1e-15
        assert ode_bound(p12, t[1]) == pytest.approx(ode_bound(p1, t[1]) + ode_bound(p2, t[1]), rel=1e-10, abs=1e-300)
        assert ode_bound(OdeProblem(min(eps + 0.05, 0.95), (ts, v1)), t[1]) >= b[1] - 1e-15
        assert ode_bound(OdeProblem(eps, (ts, 2 * v1)), t[1]) >= b[1]


class TestOdeComparison:
    def test_unit_forcing_half(self):
        out = ode_comparison_test(OdeProblem(0.5, lambda s: 1.0))
        t, f, bound = out["rows"][-1]
        assert t == 1.0 and bound == pytest.approx(2.0, rel=1e-12)
        assert f <= 2.0 * (1 + 1e-6)
        assert out["passed"]

    def test_zero_forcing(self):
        out = ode_comparison_test(OdeProblem(0.5, lambda s: 0.0))
        assert all(f == 0 for _, f, _ in out["rows"])

    def test_random_forcings(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            out = ode_comparison_test(OdeProblem(float(rng.uniform(0.1, 0.9)), random_forcing(rng)))
            assert out["passed"], out["max_ratio"]


class TestNormSuites:
    def test_random_spd_condition(self, rng):
        m = random_spd(rng, 4, 200, cond_max=1e3)
        w = np.linalg.eigvalsh(m)
        assert w.min() > 0 and (w[:, -1] / w[:, 0]).max() <= 1e3 * (1 + 1e-9)

    def test_identity_members(self):
        n = 4
        I = np.eye(n)[None]
        r = comparison_ratios(I, I, I, I, I, I, I)
        assert all(v.max() < 1 for v in r.values())
        assert r["det"][0] == pytest.approx(n ** (-n / 2))

    def test_ell_equals_g(self):
        e = SpdEnsemble(4, 200, seed=3)
        r = comparison_ratios(e.g, e.g, e.h, e.u, e.S, e.T, e.N)
        assert r["T"].max() <= 1 / 4 + 1e-12

    def test_ensemble_passes(self):
        out = norm_comparison_suite(SpdEnsemble(4, 2000, seed=1))
        assert out["passed"] and out["count"] == 2000

    def test_basis_independence(self, rng):
        e = SpdEnsemble(4, 100, seed=5)
        A = np.eye(4) + 0.3 * rng.normal(size=(4, 4))
        B = np.eye(4) + 0.3 * rng.normal(size=(4, 4))
        before = comparison_ratios(e.g, e.ell, e.h, e.u, e.S, e.T, e.N)
        after = comparison_ratios(**conjugate(e, A, B))
        for k in before:
            assert np.abs(after[k] / before[k] - 1).max() <= 1e-9

    @pytest.mark.parametrize("p", [1, 2, 4])
    def test_holder_suite(self, p):
        out = integral_holder_suite(np.random.default_rng(p), spaces=100, p=p)
        assert out["passed"]

    def test_single_point_space_is_pointwise(self):
        out = integral_holder_suite(np.random.default_rng(0), spaces=200, points=1)
        assert out["passed"]


class TestFloorMonitor:
    def test_flat(self):
        grid = GridSpec(4, 8)
        bg = flat_background(grid)
        out = scalar_floor_monitor([0.0, 0.1], [bg.h, bg.h], 0.0)
        assert abs(out["min_R"]) <= 1e-10
        assert all(r["phi"] == 0 for r in out["rows"])
        assert out["psi_monotone"] and not out["violated_at_start"]

    def floor_metric(self, target, n=16):
        grid = GridSpec(4, n)
        x = grid.coords()
        return conformal_metric(grid, floor_amplitude(target) * np.sin(2 * np.pi * x[0]))

    def test_negative_control(self):
        g = self.floor_metric(-2.0)
        out = scalar_floor_monitor([0.0], [g], -1.0)
        assert out["violated_at_start"]
        assert out["rows"][0]["phi"] > 0

    def test_compliant_run(self):
        g = self.floor_metric(-0.9)
        bg = flat_background(g.grid)
        traj, _ = evolve(g, bg, 2e-4, StepperConfig(), schedule=[5e-5, 1e-4, 2e-4])
        out = scalar_floor_monitor(traj.times, traj.metrics, -1.0)
        assert not out["violated_at_start"]
        assert out["min_R"] >= -1.0 - 10 * g.grid.dx**2
        assert out["psi_monotone"]
