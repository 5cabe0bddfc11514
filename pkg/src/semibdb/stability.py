"""Unstable Fermi-Dirac equilibria: critical parameters, eigenvalue branch, growing modes.

For a homogeneous equilibrium ``F = F_lam`` the linearised equation admits plane
waves ``A(p) exp(i phi x_1)`` whenever the 2x2 matrix

    B(alpha, beta) = int [U u_1 d_{p_1}F + beta G_1, beta G_2] / (u_1^2 + alpha^2) (1, eps)^T dp

has eigenvalue 1. Along the branch ``alpha(beta)`` through ``(alpha0, 0)`` the
mode grows at ``omega = rate (alpha^2 - beta)/beta`` with wavenumber
``phi = rate alpha/beta``, where ``rate = gamma n_F (1 - eta n_F)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from semibdb.equilibrium import (
    ModelParams,
    SensitivityKernel,
    band_structure,
    kappa,
    moments_forward,
    occupation,
    sensitivity_kernel,
)
from semibdb.errors import (
    BranchLost,
    DegenerateEigenvector,
    IncommensurableWavenumber,
    NoRoot,
    Unphysical,
)
from semibdb.grid import PhaseGrid


def instability_margin(lam, params: ModelParams, grid: PhaseGrid):
    """``U kappa(lam) - 1``; positive values certify an unstable equilibrium."""
    return params.U * kappa(lam, params, grid) - 1.0


def margin_sweep(
    params: ModelParams,
    grid: PhaseGrid,
    lam0_range=(-3.0, 3.0),
    lam1_range=(0.0, 6.0),
    num: int = 61,
):
    """Grid search for the multipliers maximising the instability margin.

    Returns ``((lam0, lam1), margin)``. Margins within a relative ``1e-12`` of
    the maximum count as ties (the band is particle-hole symmetric, so mirror
    points tie up to round-off); ties resolve to the first in row-major order.
    """
    l0 = np.linspace(*lam0_range, num)
    l1 = np.linspace(*lam1_range, num)
    L0, L1 = np.meshgrid(l0, l1, indexing="ij")
    margins = instability_margin((L0, L1), params, grid)
    best = np.max(margins)
    first = int(np.argmax(margins >= best - 1e-12 * abs(best)))
    i, j = np.unravel_index(first, margins.shape)
    return (float(l0[i]), float(l1[j])), float(margins[i, j])


@dataclass(frozen=True)
class _Background:
    eps: np.ndarray
    u1: np.ndarray
    weight: np.ndarray  # F (1 - eta F)
    F: np.ndarray
    dF1: np.ndarray  # d_{p_1} F, analytic
    kernel: SensitivityKernel
    n: float
    rate: float


def _background(lam, params: ModelParams, grid: PhaseGrid) -> _Background:
    eps, u = band_structure(params, grid)
    F, w = occupation(lam, eps, params.eta)
    n = float(moments_forward(lam, params, grid).n)
    return _Background(
        eps=eps,
        u1=u[0],
        weight=w,
        F=F,
        dF1=float(lam[1]) * u[0] * w,
        kernel=sensitivity_kernel(lam, params, grid),
        n=n,
        rate=params.gamma * n * (1.0 - params.eta * n),
    )


@dataclass(frozen=True)
class CriticalPoint:
    lam: tuple[float, float]
    alpha0: float
    residual: float


def critical_rhs(alpha, lam, params: ModelParams, grid: PhaseGrid):
    """``U lam1 int u_1^2/(u_1^2 + alpha^2) F(1 - eta F) dp``; strictly decreasing in ``alpha > 0``."""
    bg = _background(lam, params, grid)
    alpha = np.asarray(alpha, dtype=float)
    pad = (Ellipsis,) + (None,) * grid.d
    u2 = bg.u1 * bg.u1
    integrand = u2 / (u2 + alpha[pad] ** 2) * bg.weight
    return params.U * float(lam[1]) * grid.integrate_p(integrand)


def critical_alpha(lam, params: ModelParams, grid: PhaseGrid, tol: float = 1e-15, max_iter: int = 400) -> CriticalPoint:
    """Unique ``alpha0 > 0`` with ``critical_rhs(alpha0) = 1``, by bisection."""
    lam = (float(lam[0]), float(lam[1]))
    if instability_margin(lam, params, grid) <= 0:
        raise NoRoot(f"instability margin is not positive at lam={lam}; the critical condition has no root")

    def h(a):
        return float(critical_rhs(a, lam, params, grid)) - 1.0

    lo, hi = 1e-3, 1.0
    while h(lo) <= 0:
        lo *= 1e-3
        if lo < 1e-300:
            raise NoRoot("could not bracket alpha0 from below")
    while h(hi) > 0:
        lo, hi = hi, hi * 4.0
        if hi > 1e300:
            raise NoRoot("could not bracket alpha0 from above")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    a0 = lo if abs(h(lo)) <= abs(h(hi)) else hi
    return CriticalPoint(lam=lam, alpha0=a0, residual=abs(h(a0)))


def _matrix(alpha: float, beta: float, bg: _Background, params: ModelParams, grid: PhaseGrid, derivative=False):
    u2 = bg.u1 * bg.u1
    denom = u2 + alpha * alpha
    col1 = params.U * bg.u1 * bg.dF1 + beta * bg.kernel.G1
    col2 = beta * bg.kernel.G2
    moments = (1.0, bg.eps)

    def assemble(kern):
        return np.array([[grid.integrate_p(m * col1 * kern), grid.integrate_p(m * col2 * kern)] for m in moments])

    B = assemble(1.0 / denom)
    if not derivative:
        return B
    return B, assemble(-2.0 * alpha / (denom * denom))


def dispersion_matrix(alpha: float, beta: float, lam, params: ModelParams, grid: PhaseGrid) -> np.ndarray:
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    return _matrix(float(alpha), float(beta), _background(lam, params, grid), params, grid)


def branch_function(alpha: float, beta: float, lam, params: ModelParams, grid: PhaseGrid) -> float:
    """``det(B(alpha, beta) - Id)``, whose zero set is the branch."""
    B = dispersion_matrix(alpha, beta, lam, params, grid)
    return float(np.linalg.det(B - np.eye(2)))


def branch_slope_at_critical(critical: CriticalPoint, params: ModelParams, grid: PhaseGrid) -> float:
    """Closed form ``d_alpha det(B - Id) = 2 alpha0 U lam1 int u_1^2 F(1 - eta F)/(u_1^2 + alpha0^2)^2`` at ``(alpha0, 0)``."""
    bg = _background(critical.lam, params, grid)
    a0 = critical.alpha0
    u2 = bg.u1 * bg.u1
    lam1 = critical.lam[1]
    return 2.0 * a0 * params.U * lam1 * float(grid.integrate_p(u2 * bg.weight / (u2 + a0 * a0) ** 2))


def _newton_alpha(alpha, beta, bg, params, grid, tol, max_iter):
    eye = np.eye(2)
    for _ in range(max_iter):
        B, dB = _matrix(alpha, beta, bg, params, grid, derivative=True)
        M = B - eye
        phi = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        if abs(phi) < tol:
            return alpha, phi
        dphi = dB[0, 0] * M[1, 1] + M[0, 0] * dB[1, 1] - dB[0, 1] * M[1, 0] - M[0, 1] * dB[1, 0]
        if dphi == 0 or not np.isfinite(dphi):
            break
        step = phi / dphi
        alpha = alpha - step
        if not np.isfinite(alpha) or alpha <= 0:
            break
    raise BranchLost(f"Newton for alpha failed at beta={beta:.6g}")


def branch_alpha(
    critical: CriticalPoint,
    betas: Sequence[float],
    params: ModelParams,
    grid: PhaseGrid,
    tol: float = 1e-11,
    max_iter: int = 50,
    max_dbeta: float | None = None,
) -> np.ndarray:
    """Continue ``alpha(beta)`` from ``(alpha0, 0)`` to every requested ``beta``.

    Each side of zero is traversed in order of increasing ``|beta|``, seeding
    Newton with the previous branch point; gaps wider than ``max_dbeta`` are
    bridged with intermediate points.
    """
    bg = _background(critical.lam, params, grid)
    betas = np.asarray(betas, dtype=float)
    out = np.empty_like(betas)
    for sign in (1.0, -1.0):
        idx = np.where(np.sign(betas) == sign)[0]
        if idx.size == 0:
            continue
        order = idx[np.argsort(np.abs(betas[idx]))]
        alpha, beta_prev = critical.alpha0, 0.0
        for k in order:
            b = betas[k]
            if max_dbeta is not None and abs(b - beta_prev) > max_dbeta:
                for bb in np.linspace(beta_prev, b, int(np.ceil(abs(b - beta_prev) / max_dbeta)) + 1)[1:-1]:
                    alpha, _ = _newton_alpha(alpha, bb, bg, params, grid, tol, max_iter)
            alpha, _ = _newton_alpha(alpha, b, bg, params, grid, tol, max_iter)
            out[k] = alpha
            beta_prev = b
    if np.any(betas == 0):
        out[betas == 0] = critical.alpha0
    return out


def snap_beta(
    critical: CriticalPoint,
    m: int,
    params: ModelParams,
    grid: PhaseGrid,
    tol: float = 1e-13,
    max_iter: int = 100,
) -> tuple[float, float]:
    """Branch point whose wavenumber ``rate alpha/beta`` equals ``2 pi m / Lx``.

    Solves ``rate alpha(beta) - k beta = 0`` by secant iteration along the branch.
    Returns ``(alpha, beta)``.
    """
    bg = _background(critical.lam, params, grid)
    if bg.rate == 0:
        raise IncommensurableWavenumber("gamma n(1 - eta n) = 0 gives zero wavenumber")
    if m == 0:
        raise IncommensurableWavenumber("m must be nonzero")
    k = 2.0 * np.pi * m / grid.Lx

    def h(beta, alpha_seed):
        a, _ = _newton_alpha(alpha_seed, beta, bg, params, grid, 1e-11, 50)
        return bg.rate * a - k * beta, a

    b0 = bg.rate * critical.alpha0 / k
    h0, a0 = h(b0, critical.alpha0)
    b1 = b0 * (1.0 + 1e-3)
    h1, a1 = h(b1, a0)
    for _ in range(max_iter):
        if abs(h1) <= tol * max(1.0, abs(k * b1)):
            return a1, b1
        if h1 == h0:
            break
        b0, b1 = b1, b1 - h1 * (b1 - b0) / (h1 - h0)
        h0 = h1
        h1, a1 = h(b1, a1)
    raise BranchLost(f"could not snap beta to wavenumber index m={m}")


@dataclass(frozen=True)
class UnstableMode:
    alpha: float
    beta: float
    n_hat: float
    E_hat: float
    A: np.ndarray
    omega: float
    wavenumber: float
    B: np.ndarray


def unstable_mode(
    alpha: float,
    beta: float,
    lam,
    params: ModelParams,
    grid: PhaseGrid,
    rank_tol: float = 1e-6,
    eigenvector: tuple[float, float] | None = None,
) -> UnstableMode:
    """Profile ``A(p)``, growth rate and wavenumber of the mode at ``(alpha, beta)``.

    ``eigenvector`` overrides the computed null vector of ``B - Id`` (used to
    probe off-eigenvector sensitivity).
    """
    bg = _background(lam, params, grid)
    B = _matrix(float(alpha), float(beta), bg, params, grid)
    if eigenvector is None:
        _, s, vt = np.linalg.svd(B - np.eye(2))
        if s[-1] > rank_tol * max(1.0, s[0]):
            raise DegenerateEigenvector(
                f"B - Id has full numerical rank (singular values {s[0]:.3e}, {s[-1]:.3e}); not on the branch"
            )
        v = vt[-1]
        v = v / np.hypot(v[0], v[1])
        if v[0] < 0 or (v[0] == 0 and v[1] < 0):
            v = -v
        n_hat, E_hat = float(v[0]), float(v[1])
    else:
        n_hat, E_hat = map(float, eigenvector)
    G = bg.kernel
    A = (params.U * bg.dF1 * n_hat - 1j * (beta / alpha) * (G.G1 * n_hat + G.G2 * E_hat)) / (bg.u1 - 1j * alpha)
    omega = bg.rate * (alpha * alpha - beta) / beta
    wavenumber = bg.rate * alpha / beta
    return UnstableMode(float(alpha), float(beta), n_hat, E_hat, A, float(omega), float(wavenumber), B)


def linear_residual(mode: UnstableMode, lam, params: ModelParams, grid: PhaseGrid) -> tuple[float, float]:
    """L2 norm over the box of the stationary linearised-equation residual for ``g = A e^{i phi x_1}``.

    The residual of ``u.grad_x g - U grad_x n_g . grad_p F - rate (G.(n_g, E_g) - alpha^2/beta g)``
    factors as ``e^{i phi x_1} R(p)``, with ``grad_x`` acting as ``i phi`` on the
    plane wave, so its norm is ``|box|^{1/2} ||R||_{L^2_p}``. Returns
    ``(residual_norm, norm_of_g)``.
    """
    bg = _background(lam, params, grid)
    A = mode.A
    phi = mode.wavenumber
    nA = grid.integrate_p(A)
    EA = grid.integrate_p(bg.eps * A)
    R = (
        1j * phi * bg.u1 * A
        - params.U * 1j * phi * nA * bg.dF1
        - bg.rate * (bg.kernel.G1 * nA + bg.kernel.G2 * EA - (mode.alpha ** 2 / mode.beta) * A)
    )
    box = grid.Lx ** grid.d
    res = float(np.sqrt(box * grid.integrate_p(np.abs(R) ** 2)))
    gnorm = float(np.sqrt(box * grid.integrate_p(np.abs(A) ** 2)))
    return res, gnorm


def mode_field(mode: UnstableMode, grid: PhaseGrid, t: float = 0.0) -> np.ndarray:
    """Real phase-space field ``Re(A(p) e^{i phi x_1}) e^{omega t}``."""
    phase = np.exp(1j * mode.wavenumber * grid.x_mesh(0))
    A = mode.A.reshape((1,) * grid.d + grid.momentum_shape)
    return np.real(A * phase) * np.exp(mode.omega * t)


def check_commensurable(wavenumber: float, grid: PhaseGrid, tol: float = 1e-8) -> int:
    m = wavenumber * grid.Lx / (2.0 * np.pi)
    if abs(m - round(m)) > tol:
        raise IncommensurableWavenumber(
            f"wavenumber {wavenumber:.12g} gives {m:.12g} periods per box; needs an integer"
        )
    return int(round(m))


def perturbation_amplitude(beta: float, c: float = 1.0, nu: float = 0.1, scale: float = 1.0,
                           floor: float = 0.0) -> float:
    """``scale * beta * exp(-c nu/|beta|)``, with magnitude raised to at least ``floor``."""
    if beta == 0:
        return 0.0
    amp = scale * abs(beta) * np.exp(-c * nu / abs(beta))
    return float(np.sign(beta) * max(amp, floor))


def perturbed_initial(
    mode: UnstableMode,
    lam,
    params: ModelParams,
    grid: PhaseGrid,
    c: float = 1.0,
    nu: float = 0.1,
    scale: float = 1.0,
    floor: float = 0.0,
) -> np.ndarray:
    """``F_lam(p) + amp Re(A(p) e^{i phi x_1})`` with ``amp`` from :func:`perturbation_amplitude`."""
    check_commensurable(mode.wavenumber, grid)
    eps, _ = band_structure(params, grid)
    F, _ = occupation(lam, eps, params.eta)
    amp = perturbation_amplitude(mode.beta, c, nu, scale, floor)
    f0 = F.reshape((1,) * grid.d + grid.momentum_shape) + amp * mode_field(mode, grid)
    if np.min(f0) < 0 or np.max(f0) > params.f_max:
        raise Unphysical(f"perturbed data leave [0, 1/eta] (min {np.min(f0):.3g}, max {np.max(f0):.3g})")
    return f0
