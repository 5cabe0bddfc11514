import numpy as np
import pytest

from semibdb.equilibrium import ModelParams, band_structure, kappa, occupation, sensitivity_kernel
from semibdb.errors import DegenerateEigenvector, IncommensurableWavenumber, NoRoot, Unphysical
from semibdb.grid import build_grid
from semibdb.stability import (
    branch_alpha,
    branch_function,
    branch_slope_at_critical,
    check_commensurable,
    critical_alpha,
    critical_rhs,
    dispersion_matrix,
    instability_margin,
    linear_residual,
    margin_sweep,
    mode_field,
    perturbation_amplitude,
    perturbed_initial,
    snap_beta,
    unstable_mode,
)
from semibdb.solver import stationary_equilibrium

from conftest import UNSTABLE_LAM

# sweep maximiser and margin at U = 40, from an independent 4096-point quadrature
MARGIN = 7.335073600064433
# root of the critical condition for that background, brentq at xtol 1e-14 on 4096 points
ALPHA0 = 24.08882112146897


@pytest.fixture(scope="module")
def modes(critical, unstable_params, unstable_grid):
    out = {}
    for m in range(1, 12):
        alpha, beta = snap_beta(critical, m, unstable_params, unstable_grid)
        out[m] = unstable_mode(alpha, beta, UNSTABLE_LAM, unstable_params, unstable_grid)
    return out


class TestMargin:
    """Instability certificate ``U kappa - 1``."""

    def test_zero_lam1(self, unstable_params, unstable_grid):
        assert instability_margin((0.7, 0.0), unstable_params, unstable_grid) == -1.0

    def test_negative_coupling(self, unstable_grid):
        assert instability_margin((0.0, 1.0), ModelParams(U=-5.0), unstable_grid) < 0

    def test_pinned(self, unstable_params, unstable_grid):
        assert instability_margin(UNSTABLE_LAM, unstable_params, unstable_grid) == pytest.approx(MARGIN, abs=1e-12)

    def test_sweep(self, unstable_params, unstable_grid):
        lam, margin = margin_sweep(unstable_params, unstable_grid)
        assert lam == UNSTABLE_LAM
        assert margin == pytest.approx(MARGIN, abs=1e-12)

    def test_sweep_tie_break_is_resolution_independent(self, unstable_params):
        # +-lam0 mirror points tie; the choice must not depend on the grid
        for Np in (64, 128, 512):
            lam, _ = margin_sweep(unstable_params, build_grid(1, 8, Np), num=13)
            assert lam == UNSTABLE_LAM


class TestCriticalAlpha:
    """Unique root of the critical condition."""

    def test_pinned(self, critical):
        assert critical.alpha0 == pytest.approx(ALPHA0, rel=1e-13)
        assert critical.residual < 1e-12

    def test_no_root_for_stable_background(self, unstable_grid):
        with pytest.raises(NoRoot):
            critical_alpha((0.0, 1.0), ModelParams(U=1.0), unstable_grid)

    def test_rhs_decreasing(self, unstable_params, unstable_grid):
        alphas = np.geomspace(1e-3, 1e3, 200)
        rhs = critical_rhs(alphas, UNSTABLE_LAM, unstable_params, unstable_grid)
        assert np.all(np.diff(rhs) < 0)

    def test_small_alpha_limit(self, unstable_params):
        # on the grid the two nodes with u_1 = 0 drop out of the limit
        for Np in (256, 4096):
            g = build_grid(1, 8, Np)
            eps, _ = band_structure(unstable_params, g)
            _, w = occupation(UNSTABLE_LAM, eps, 1.0)
            node = unstable_params.U * UNSTABLE_LAM[1] * (w[0] + w[Np // 2]) / Np
            limit = unstable_params.U * kappa(UNSTABLE_LAM, unstable_params, g)
            assert critical_rhs(1e-9, UNSTABLE_LAM, unstable_params, g) == pytest.approx(limit - node, rel=1e-12)
        assert node / limit < 5e-4


class TestDispersionMatrix:
    """The 2x2 branch matrix and its structure."""

    def test_b11_at_critical(self, critical, unstable_params, unstable_grid):
        B = dispersion_matrix(critical.alpha0, 0.0, UNSTABLE_LAM, unstable_params, unstable_grid)
        assert abs(B[0, 0] - 1) < 1e-9

    def test_zero_beta_second_column(self, unstable_params, unstable_grid):
        B = dispersion_matrix(3.0, 0.0, UNSTABLE_LAM, unstable_params, unstable_grid)
        assert np.all(B[:, 1] == 0)
        assert np.linalg.det(B) == 0

    def test_alpha_zero_rejected(self, unstable_params, unstable_grid):
        with pytest.raises(ValueError):
            dispersion_matrix(0.0, 0.1, UNSTABLE_LAM, unstable_params, unstable_grid)

    def test_slope_closed_form(self, critical, unstable_params, unstable_grid):
        h = 1e-4
        a0 = critical.alpha0
        fd = (branch_function(a0 + h, 0.0, UNSTABLE_LAM, unstable_params, unstable_grid)
              - branch_function(a0 - h, 0.0, UNSTABLE_LAM, unstable_params, unstable_grid)) / (2 * h)
        assert abs(fd - branch_slope_at_critical(critical, unstable_params, unstable_grid)) < 1e-8

    def test_integrand_parity(self, unstable_params, unstable_grid):
        eps, u = band_structure(unstable_params, unstable_grid)
        _, w = occupation(UNSTABLE_LAM, eps, 1.0)
        dF1 = UNSTABLE_LAM[1] * u[0] * w
        mirror = lambda a: np.roll(a[::-1], 1)
        assert np.array_equal(dF1, -mirror(dF1))
        for G in sensitivity_kernel(UNSTABLE_LAM, unstable_params, unstable_grid):
            assert np.allclose(G, mirror(G), rtol=0, atol=1e-15 * np.max(np.abs(G)))


class TestBranch:
    """Continuation of ``alpha(beta)`` from the critical point."""

    def test_on_branch(self, critical, unstable_params, unstable_grid):
        betas = np.array([-0.3, -0.05, 0.0, 0.02, 0.1, 0.4])
        alphas = branch_alpha(critical, betas, unstable_params, unstable_grid, max_dbeta=0.05)
        assert alphas[2] == critical.alpha0
        for a, b in zip(alphas, betas):
            assert abs(branch_function(a, b, UNSTABLE_LAM, unstable_params, unstable_grid)) < 1e-11

    def test_continuous_at_seed(self, critical, unstable_params, unstable_grid):
        a = branch_alpha(critical, [1e-8, -1e-8], unstable_params, unstable_grid)
        assert np.all(np.abs(a - critical.alpha0) < 1e-6)

    def test_snap_commensurable(self, modes, unstable_grid):
        for m, mode in modes.items():
            assert check_commensurable(mode.wavenumber, unstable_grid) == m

    def test_snap_negative_index(self, critical, unstable_params, unstable_grid):
        alpha, beta = snap_beta(critical, -4, unstable_params, unstable_grid)
        assert beta < 0
        mode = unstable_mode(alpha, beta, UNSTABLE_LAM, unstable_params, unstable_grid)
        assert mode.wavenumber == pytest.approx(-8 * np.pi, rel=1e-12)
        assert mode.omega * beta > 0

    def test_snap_zero_index(self, critical, unstable_params, unstable_grid):
        with pytest.raises(IncommensurableWavenumber):
            snap_beta(critical, 0, unstable_params, unstable_grid)

    def test_trace_determinant_relation(self, modes):
        # eigenvalue 1 forces det B = tr B - 1; the second eigenvalue is O(beta), not 0
        for mode in modes.values():
            detB, trB = np.linalg.det(mode.B), np.trace(mode.B)
            assert abs(detB - (trB - 1)) < 1e-10
        ratios = [np.linalg.det(m.B) / m.beta for m in modes.values()]
        assert np.ptp(ratios) < 0.01 * abs(np.mean(ratios))


class TestMode:
    """Mode profile, growth rate and linear residual."""

    def test_closure(self, modes, unstable_params, unstable_grid):
        eps, _ = band_structure(unstable_params, unstable_grid)
        for mode in modes.values():
            assert abs(unstable_grid.integrate_p(mode.A) - mode.n_hat) < 1e-9
            assert abs(unstable_grid.integrate_p(eps * mode.A) - mode.E_hat) < 1e-9
            assert mode.n_hat >= 0 and np.hypot(mode.n_hat, mode.E_hat) == pytest.approx(1.0)

    def test_residual(self, modes, unstable_params, unstable_grid):
        for mode in modes.values():
            res, g = linear_residual(mode, UNSTABLE_LAM, unstable_params, unstable_grid)
            assert res < 1e-8 * g

    def test_perturbed_eigenvector(self, modes, unstable_params, unstable_grid):
        mode = modes[4]
        bad = unstable_mode(mode.alpha, mode.beta, UNSTABLE_LAM, unstable_params, unstable_grid,
                            eigenvector=(mode.n_hat + 0.1, mode.E_hat))
        res, g = linear_residual(bad, UNSTABLE_LAM, unstable_params, unstable_grid)
        assert res > 1e-3 * g

    def test_residual_grows_off_branch(self, modes, unstable_params, unstable_grid):
        mode = modes[4]
        vals = []
        for s in (1, 2, 4, 8):
            off = unstable_mode(mode.alpha, s * mode.beta, UNSTABLE_LAM, unstable_params, unstable_grid,
                                eigenvector=(mode.n_hat, mode.E_hat))
            res, g = linear_residual(off, UNSTABLE_LAM, unstable_params, unstable_grid)
            vals.append(res / g)
        assert np.all(np.diff(vals) > 0)

    def test_degenerate_off_branch(self, modes, unstable_params, unstable_grid):
        mode = modes[4]
        with pytest.raises(DegenerateEigenvector):
            unstable_mode(mode.alpha, 2 * mode.beta, UNSTABLE_LAM, unstable_params, unstable_grid)

    def test_profile_parity(self, modes):
        for mode in modes.values():
            A = mode.A
            assert np.allclose(np.roll(A[::-1], 1), np.conj(A), rtol=0, atol=1e-14 * np.max(np.abs(A)))

    def test_growth_sign(self, modes):
        assert all(m.omega * m.beta > 0 for m in modes.values())

    def test_small_beta_asymptote(self, critical, unstable_params, unstable_grid):
        for beta in (1e-2, 1e-3, 1e-4):
            alpha = branch_alpha(critical, [beta], unstable_params, unstable_grid)[0]
            mode = unstable_mode(alpha, beta, UNSTABLE_LAM, unstable_params, unstable_grid)
            rate_alpha = mode.wavenumber * beta / alpha
            ratio = mode.omega * beta / (rate_alpha * critical.alpha0**2)
            assert mode.omega > 0 and abs(ratio - 1) < 2 * beta

    def test_zero_growth_when_alpha_squared_equals_beta(self, unstable_params, unstable_grid):
        mode = unstable_mode(0.5, 0.25, UNSTABLE_LAM, unstable_params, unstable_grid, eigenvector=(1.0, 0.0))
        assert mode.omega == 0.0

    def test_mode_field_growth(self, modes, unstable_grid):
        mode = modes[5]
        f0, f1 = mode_field(mode, unstable_grid), mode_field(mode, unstable_grid, t=1e-3)
        assert np.allclose(f1, f0 * np.exp(mode.omega * 1e-3))


class TestPerturbedInitial:
    """Initial data ``F + amp Re(A e^{i phi x})``."""

    def test_amplitude_rule(self):
        assert perturbation_amplitude(0.0) == 0.0
        assert perturbation_amplitude(0.2, c=1, nu=0.1) == pytest.approx(0.2 * np.exp(-0.5))
        assert perturbation_amplitude(-0.2, scale=1e-3) == pytest.approx(-2e-4 * np.exp(-0.5))
        assert perturbation_amplitude(1e-4, floor=1e-9) == 1e-9

    def test_vanishing_beta_gives_equilibrium(self, modes, unstable_params, unstable_grid):
        from dataclasses import replace

        mode = replace(modes[4], beta=1e-5)
        f0 = perturbed_initial(mode, UNSTABLE_LAM, unstable_params, unstable_grid)
        assert np.array_equal(f0, stationary_equilibrium(UNSTABLE_LAM, unstable_params, unstable_grid))

    def test_moments(self, modes, unstable_params, unstable_grid):
        mode = modes[4]
        F = stationary_equilibrium(UNSTABLE_LAM, unstable_params, unstable_grid)
        f0 = perturbed_initial(mode, UNSTABLE_LAM, unstable_params, unstable_grid, scale=1e-3)
        amp = perturbation_amplitude(mode.beta, scale=1e-3)
        dn = unstable_grid.integrate_p(f0 - F)
        pred = amp * np.real(mode.n_hat * np.exp(1j * mode.wavenumber * unstable_grid.x))
        assert np.max(np.abs(dn - pred)) < 1e-9 * abs(amp)
        assert abs(unstable_grid.integrate(f0 - F)) < 1e-15

    def test_unit_scale_is_unphysical(self, modes, unstable_params, unstable_grid):
        with pytest.raises(Unphysical):
            perturbed_initial(modes[4], UNSTABLE_LAM, unstable_params, unstable_grid)

    def test_incommensurable(self, modes, unstable_params, unstable_grid):
        from dataclasses import replace

        with pytest.raises(IncommensurableWavenumber):
            perturbed_initial(replace(modes[4], wavenumber=modes[4].wavenumber * 1.01),
                              UNSTABLE_LAM, unstable_params, unstable_grid)
