import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from math import factorial

from semibdb.equilibrium import ModelParams, band_structure
from semibdb.errors import ProfileInvalid
from semibdb.grid import build_grid
from semibdb.norms import (
    Leaves,
    NormProfile,
    derivative_seminorm,
    envelope_check,
    evaluate_polynomial,
    lebesgue_l1,
    lift_p,
    lift_x,
    local_comparison_constant,
    local_seminorm,
    lorentzian_derivatives,
    multi_indices,
    norm_coefficients,
    phase_norm,
    radius_derivative,
    sobolev_w_inf,
    velocity_norm,
    weighted_tracker,
)
from semibdb.solver import SolverConfig, simulate, time_derivative

from conftest import random_trig

# 0.3 cos(2 pi x) cos(2 pi p) on 16 x 64 nodes, nu = 1/5, K = 6: exact rational-trig sums (sympy, 20 digits)
COSCOS_DOUBLE = 31.939649889595200494
COSCOS_SINGLE = 2.3543253238112952612


@pytest.fixture(scope="module")
def grid():
    return build_grid(1, 16, 16)


def _pairs(n=50, seed=7):
    rng = np.random.default_rng(seed)
    g = build_grid(1, 16, 16)
    return [(random_trig(rng, g), random_trig(rng, g)) for _ in range(n)]


class TestIndices:
    """Multi-index enumeration and polynomial helpers."""

    def test_order(self):
        assert multi_indices(2, 2) == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]

    def test_polynomial(self):
        c = np.array([1.0, 2.0, 3.0])
        assert evaluate_polynomial(c, 2.0) == 17.0
        assert np.array_equal(radius_derivative(c), [2.0, 6.0])

    def test_leaves_shape_checked(self, grid):
        with pytest.raises(ValueError):
            Leaves(np.zeros(16), grid)


class TestPhaseNorm:
    """Truncated analytic norm values."""

    def test_constant(self, grid):
        f = np.full(grid.phase_shape, 2.5)
        assert phase_norm(f, grid, 0.7) == pytest.approx(2.5, abs=1e-13)
        assert phase_norm(f, grid, 0.7, variant="single_bar") == pytest.approx(2.5, abs=1e-13)

    def test_cos_cos_closed_form(self):
        g = build_grid(1, 16, 64)
        f = 0.3 * np.cos(2 * np.pi * g.x_mesh(0)) * np.cos(2 * np.pi * g.p_mesh(0))
        assert phase_norm(f, g, 0.2, K=6) == pytest.approx(COSCOS_DOUBLE, rel=1e-12)
        assert phase_norm(f, g, 0.2, K=6, variant="single_bar") == pytest.approx(COSCOS_SINGLE, rel=1e-12)

    def test_double_dominates_single(self, grid):
        for f, _ in _pairs(20):
            assert phase_norm(f, grid, 0.3) >= phase_norm(f, grid, 0.3, variant="single_bar")

    def test_monotone_in_truncation(self, grid):
        f, _ = _pairs(1)[0]
        vals = [phase_norm(f, grid, 0.25, K=K) for K in range(1, 8)]
        assert np.all(np.diff(vals) >= 0)

    def test_coefficients_reproduce_norm(self, grid):
        f, _ = _pairs(1)[0]
        c = norm_coefficients(f, grid, 5)
        assert len(c) == 11
        assert evaluate_polynomial(c, 0.4) == phase_norm(f, grid, 0.4, K=5)

    def test_sup_over_x(self, grid):
        f, _ = _pairs(1)[0]
        c = norm_coefficients(f, grid, 4)
        per_x = [evaluate_polynomial(norm_coefficients(f, grid, 4, x_index=(i,)), 0.0) for i in range(16)]
        # each leaf takes its own sup, so the sum of sups dominates the per-node sums
        assert c[0] >= max(per_x)
        single = norm_coefficients(f, grid, 4, "single_bar")
        per_x1 = [norm_coefficients(f, grid, 4, "single_bar", x_index=(i,))[0] for i in range(16)]
        assert single[0] == max(per_x1)


class TestLemmaInequalities:
    """Algebra, transport and force bounds at matched truncation."""

    K = 6
    nu = 0.2

    def test_submultiplicative(self, grid):
        for f, g in _pairs():
            lhs = phase_norm(f * g, grid, self.nu, self.K)
            assert phase_norm(f, grid, self.nu, self.K) * phase_norm(g, grid, self.nu, self.K) - lhs >= -1e-9

    def test_transport(self, grid):
        rng = np.random.default_rng(11)
        for f, _ in _pairs():
            v = random_trig(rng, grid)[0][None, :]
            lhs = phase_norm(lift_p(v[0], grid) * grid.ddx(f), grid, self.nu, self.K)
            rhs = velocity_norm(v, grid, self.nu, self.K) * derivative_seminorm(f, grid, self.nu, self.K)
            assert rhs - lhs >= -1e-9

    def test_force(self, grid):
        for f, g in _pairs():
            n = g[:, 0]
            nn = lift_x(n, grid)
            lhs = phase_norm(lift_x(grid.ddx(n), grid) * grid.ddp(f), grid, self.nu, self.K)
            rhs = (phase_norm(nn, grid, self.nu, self.K) * derivative_seminorm(f, grid, self.nu, self.K)
                   + derivative_seminorm(nn, grid, self.nu, self.K) * phase_norm(f, grid, self.nu, self.K))
            assert rhs - lhs >= -1e-9

    @given(st.integers(0, 2**31), st.integers(1, 4))
    def test_composition(self, seed, degree):
        rng = np.random.default_rng(seed)
        g = build_grid(1, 32, 8)
        x = g.x
        v = rng.normal()
        y = v + 0.3 * rng.normal() * np.cos(2 * np.pi * x) + 0.3 * rng.normal() * np.sin(4 * np.pi * x)
        coef = rng.normal(size=degree + 1)  # phi(y) = sum c_k (y - v)^k
        phi_y = sum(c * (y - v) ** k for k, c in enumerate(coef))
        K, nu = 5, 0.15
        lhs = phase_norm(lift_x(phi_y, g), g, nu, K, variant="single_bar")
        mu = phase_norm(lift_x(y - v, g), g, nu, K, variant="single_bar")
        # |phi|_{C^mu} at v: sum |phi^(k)(v)|/k! mu^k = sum |c_k| mu^k
        rhs = sum(abs(c) * mu**k for k, c in enumerate(coef))
        assert rhs - lhs >= -1e-9 * max(1.0, rhs)


class TestLocalSeminorm:
    """Space-local norms and the comparison constant."""

    def test_translation_invariant(self, grid):
        p = grid.p_mesh(0)
        f = np.broadcast_to(0.4 + 0.1 * np.cos(2 * np.pi * p), grid.phase_shape)
        vals = [local_seminorm(f, grid, 0.3, 4, (i,)) for i in range(grid.Nx)]
        assert np.ptp(vals) < 1e-14

    def test_dotted_constant(self, grid):
        f = np.full(grid.phase_shape, 0.7)
        assert local_seminorm(f, grid, 0.3, 4, (3,), dotted=True, variant="single_bar") == pytest.approx(0, abs=1e-14)

    def test_comparison(self, grid):
        mu1, mu2, K = 0.2, 0.4, 4
        C = local_comparison_constant(1, K, mu1, mu2, samples=41)
        assert C > 0
        for f, _ in _pairs(10):
            for nu in (0.05, 0.1, mu1):
                for i in (0, 5):
                    lhs = local_seminorm(f, grid, nu, K, (i,), dotted=True)
                    rhs = nu * C * local_seminorm(f, grid, mu2, K + 1, (i,), dotted=True, variant="single_bar")
                    assert lhs <= rhs * (1 + 1e-12)

    def test_comparison_rejects(self):
        with pytest.raises(ValueError):
            local_comparison_constant(1, 3, 0.5, 0.4)


class TestVelocityNorm:
    """Norm of the band velocity."""

    def test_band_velocity(self):
        g = build_grid(1, 8, 64)
        _, u = band_structure(ModelParams(eps0=1.0), g)
        base = 4 * np.pi * (1 + 2 * np.pi)
        assert velocity_norm(u, g, 0.0) == pytest.approx(base, rel=1e-12)
        for nu in (0.1, 0.3):
            val = velocity_norm(u, g, nu, K=6)
            series = base * sum((2 * np.pi * nu) ** k / factorial(k) for k in range(7))
            assert val == pytest.approx(series, rel=1e-12)
            assert val <= base * np.exp(2 * np.pi * nu)

    def test_constant_field(self):
        g = build_grid(2, 8, 8)
        u = np.stack([np.full((8, 8), -3.0), np.full((8, 8), 2.0)])
        assert velocity_norm(u, g, 0.5) == pytest.approx(3.0, abs=1e-13)


class TestClassicalNorms:
    """L1 and W^{k,inf} used by the growth ratio."""

    def test_l1(self):
        g = build_grid(1, 8, 8, 2.0)
        assert lebesgue_l1(-np.ones(g.phase_shape), g) == pytest.approx(2.0)

    def test_w1inf(self):
        g = build_grid(1, 16, 16)
        f = np.sin(2 * np.pi * g.x_mesh(0)) * np.ones(g.phase_shape)
        assert sobolev_w_inf(f, g, 1) == pytest.approx(1 + 2 * np.pi, rel=1e-12)


class TestTracker:
    """Time-shifted weighted norm inequality."""

    def test_static_identity(self, grid):
        f, _ = _pairs(1)[0]
        times = np.linspace(0, 0.5, 6)
        prof = NormProfile(nu=0.3, mu=0.4, K=5, T=0.5)
        s = weighted_tracker(times, [f] * 6, [np.zeros_like(f)] * 6, grid, prof)
        ref = phase_norm(f, grid, 0.3, 5)
        assert s.lhs == pytest.approx(ref, rel=1e-13)
        assert s.rhs == ref
        assert s.verdict == "satisfied"

    def test_no_decay_reduces_to_sup(self, grid):
        pairs = _pairs(4)
        fields = [a for a, _ in pairs]
        prof = NormProfile(nu=0.3, mu=0.0, K=4, T=3.0)
        s = weighted_tracker([0, 1, 2, 3], fields, [np.zeros_like(f) for f in fields], grid, prof)
        assert s.lhs == pytest.approx(max(phase_norm(f, grid, 0.3, 4) for f in fields), rel=1e-14)

    def test_solver_run(self):
        g = build_grid(1, 16, 32)
        params = ModelParams(eta=1.0, eps0=0.25, U=1.0, gamma=1.0)
        x, p = g.x_mesh(0), g.p_mesh(0)
        f0 = 0.4 + 0.05 * np.cos(2 * np.pi * x) * (1 + 0.5 * np.sin(2 * np.pi * p))
        cfg = SolverConfig(dt=0.01, t_end=0.2, snapshot_every=2)
        snaps = simulate(f0, params, g, cfg)
        prof = NormProfile(nu=0.1, mu=0.2, K=4, T=0.2)
        s = weighted_tracker([q.t for q in snaps], [q.f for q in snaps],
                             [time_derivative(q.f, params, g) for q in snaps], g, prof)
        assert s.verdict == "satisfied" and s.slack >= -1e-6

    @pytest.mark.parametrize("kw", [
        {"nu": 0.0, "mu": 0.0, "K": 3, "T": 1.0}, {"nu": 0.2, "mu": -1.0, "K": 3, "T": 1.0},
        {"nu": 0.2, "mu": 0.0, "K": 0, "T": 1.0}, {"nu": 0.2, "mu": 0.0, "K": 3, "T": -1.0},
        {"nu": 0.2, "mu": 0.2, "K": 3, "T": 1.0},
    ])
    def test_invalid_profile(self, kw):
        with pytest.raises(ProfileInvalid):
            NormProfile(**kw)

    def test_rejects_bad_sampling(self, grid):
        f = np.zeros(grid.phase_shape)
        prof = NormProfile(nu=0.2, mu=0.0, K=2, T=1.0)
        with pytest.raises(ProfileInvalid):
            weighted_tracker([0, 0.1, 0.5], [f] * 3, [f] * 3, grid, prof)
        with pytest.raises(ProfileInvalid):
            weighted_tracker([0, 2.0], [f] * 2, [f] * 2, grid, prof)
        with pytest.raises(ValueError):
            weighted_tracker([0, 0.5], [f] * 2, [f], grid, prof)


class TestEnvelope:
    """Derivative envelope of the density profile."""

    def test_lorentzian_derivatives(self):
        x = np.linspace(-3, 3, 7)
        d = lorentzian_derivatives(x, 2.0, 2)
        assert np.allclose(d[0], 1 / (2 + x**2))
        assert np.allclose(d[1], -2 * x / (2 + x**2) ** 2)
        assert np.allclose(d[2], (6 * x**2 - 4) / (2 + x**2) ** 3)

    def test_example_profile(self):
        x = np.linspace(-10, 10, 64)
        eta = 1.0
        nd = lorentzian_derivatives(x, eta + 1, 6)
        rep = envelope_check(nd, np.zeros_like(nd), C0=(eta + 1) / eta, nu=0.5, eta=eta, K=6)
        assert rep.passed
        assert set(rep.orders) == set(range(1, 7))

    def test_second_derivative_at_origin(self):
        nd = lorentzian_derivatives(np.array([0.0]), 2.0, 2)
        assert nd[2, 0] == pytest.approx(-0.5, abs=1e-15)
        F0 = nd[0, 0]
        bound = 2.0 * factorial(2) * 0.5**-2 * F0 * (1 - F0)
        assert bound == pytest.approx(4.0)
        rep = envelope_check(nd, np.zeros_like(nd), C0=2.0, nu=0.5, eta=1.0, K=2)
        assert rep.worst_ratio[2] == pytest.approx(0.5 / 4.0)

    def test_constant_profile(self):
        nd = np.zeros((4, 10))
        nd[0] = 0.3
        rep = envelope_check(nd, np.zeros((4, 10)), C0=1.0, nu=0.5, eta=1.0, K=3)
        assert rep.passed and all(v == 0 for v in rep.worst_ratio.values())

    def test_too_few_orders(self):
        with pytest.raises(ValueError):
            envelope_check(np.zeros((2, 3)), np.zeros((2, 3)), 1.0, 0.5, 1.0, 3)
