"""Fermi-Dirac equilibria of the tight-binding band and their moment maps.

The equilibrium attached to multipliers ``lam = (lam0, lam1)`` is

    F(p) = 1 / (eta + exp(-lam0 - lam1 * eps(p))),   eps(p) = -2 eps0 sum_i cos(2 pi p_i),

and its moments are ``n = int F dp`` and ``E = int eps F dp`` over the unit torus.
Multipliers may be scalars or arrays over spatial points; results then carry the
spatial shape in front of the momentum shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from semibdb.errors import Infeasible, NearSingular, NoConvergence
from semibdb.grid import PhaseGrid

FEASIBILITY_FLOOR = 1e-10
DET_FLOOR = 1e-24


@dataclass(frozen=True)
class ModelParams:
    eta: float = 1.0
    eps0: float = 1.0
    U: float = 0.0
    gamma: float = 0.0
    d: int = 1

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError(f"eta={self.eta} must be >= 0")
        if not self.eps0 > 0:
            raise ValueError(f"eps0={self.eps0} must be > 0")
        if not self.gamma >= 0:
            raise ValueError(f"gamma={self.gamma} must be >= 0")
        if self.d not in (1, 2):
            raise ValueError(f"d={self.d} must be 1 or 2")

    @property
    def f_max(self) -> float:
        """Upper physical bound ``1/eta`` (infinite in the Maxwell-Boltzmann limit)."""
        return np.inf if self.eta == 0 else 1.0 / self.eta


class Multipliers(NamedTuple):
    lam0: np.ndarray | float
    lam1: np.ndarray | float


class MomentPair(NamedTuple):
    n: np.ndarray | float
    E: np.ndarray | float


class SensitivityKernel(NamedTuple):
    """``G1 = dF/dn`` and ``G2 = dF/dE`` sampled on the momentum grid."""

    G1: np.ndarray
    G2: np.ndarray


def _symmetric_trig(grid: PhaseGrid):
    # cos/sin evaluated on min(k, N-k) so that parity holds bit-for-bit on the grid
    k = np.arange(grid.Np)
    m = np.minimum(k, grid.Np - k)
    c = np.cos(2.0 * np.pi * m / grid.Np)
    s = np.sin(2.0 * np.pi * m / grid.Np) * np.where(k <= grid.Np // 2, 1.0, -1.0)
    s[grid.Np // 2] = 0.0
    return c, s


def band_structure(params: ModelParams, grid: PhaseGrid):
    """Dispersion ``eps(p)`` and group velocity ``u(p) = grad eps`` on the momentum grid.

    Returns ``eps`` with the momentum shape and ``u`` with shape ``(d,) + momentum_shape``.
    """
    c, s = _symmetric_trig(grid)
    d = grid.d
    eps = np.zeros(grid.momentum_shape)
    u = np.zeros((d,) + grid.momentum_shape)
    for i in range(d):
        shape = [1] * d
        shape[i] = grid.Np
        eps = eps - 2.0 * params.eps0 * c.reshape(shape)
        u[i] = np.broadcast_to(4.0 * np.pi * params.eps0 * s.reshape(shape), grid.momentum_shape)
    return eps, u


def _exponent(lam, eps: np.ndarray) -> np.ndarray:
    lam0 = np.asarray(lam[0], dtype=float)
    lam1 = np.asarray(lam[1], dtype=float)
    pad = (Ellipsis,) + (None,) * eps.ndim
    return lam0[pad] + lam1[pad] * eps


def occupation(lam, eps: np.ndarray, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(F, F(1 - eta F))`` for multipliers broadcast over ``eps``."""
    z = _exponent(lam, eps)
    if eta == 0:
        F = np.exp(z)
        return F, F
    s = expit(z + np.log(eta))
    # F(1-eta F) = s(1-s)/eta; expit(-x) is 1-s without cancellation
    return s / eta, s * expit(-(z + np.log(eta))) / eta


def equilibrium_profile(lam, params: ModelParams, grid: PhaseGrid) -> np.ndarray:
    """Fermi-Dirac profile ``F_lam`` on the momentum grid."""
    eps, _ = band_structure(params, grid)
    return occupation(lam, eps, params.eta)[0]


def _pint(values: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    return grid.integrate_p(values)


def moments_forward(lam, params: ModelParams, grid: PhaseGrid) -> MomentPair:
    eps, _ = band_structure(params, grid)
    F, _ = occupation(lam, eps, params.eta)
    return MomentPair(_pint(F, grid), _pint(eps * F, grid))


def _jacobian_entries(lam, params, grid):
    eps, _ = band_structure(params, grid)
    F, w = occupation(lam, eps, params.eta)
    m0 = _pint(w, grid)
    m1 = _pint(eps * w, grid)
    m2 = _pint(eps * eps * w, grid)
    return eps, F, w, m0, m1, m2


def moment_jacobian(lam, params: ModelParams, grid: PhaseGrid, det_floor: float = DET_FLOOR) -> np.ndarray:
    """``d(n, E)/d(lam0, lam1)`` as a symmetric 2x2 matrix (trailing axes)."""
    _, _, _, m0, m1, m2 = _jacobian_entries(lam, params, grid)
    det = m0 * m2 - m1 * m1
    if np.any(det < det_floor):
        raise NearSingular(f"moment Jacobian determinant {np.min(det):.3e} below floor {det_floor:.1e}")
    return np.stack([np.stack([m0, m1], -1), np.stack([m1, m2], -1)], -2)


def check_feasible(target: MomentPair, params: ModelParams, floor: float = FEASIBILITY_FLOOR) -> None:
    n = np.asarray(target.n, dtype=float)
    E = np.asarray(target.E, dtype=float)
    bad = ~(np.isfinite(n) & np.isfinite(E)) | (n <= floor)
    if params.eta > 0:
        bad |= n >= params.f_max - floor
    bad |= np.abs(E) >= 2.0 * params.eps0 * params.d * n
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        nn, ee = np.atleast_1d(n)[tuple(idx)], np.atleast_1d(E)[tuple(idx)]
        raise Infeasible(f"moments (n={nn:.6g}, E={ee:.6g}) outside the feasibility cone")


def initial_guess(target: MomentPair, params: ModelParams) -> Multipliers:
    """Exact multipliers on the ``E = 0`` slice: ``(log(n/(1 - eta n)), 0)``."""
    n = np.asarray(target.n, dtype=float)
    lam0 = np.log(n / (1.0 - params.eta * n))
    return Multipliers(lam0, np.zeros_like(lam0))


def moments_invert(
    target: MomentPair,
    params: ModelParams,
    grid: PhaseGrid,
    init: Multipliers | None = None,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> Multipliers:
    """Solve ``moments_forward(lam) = target`` by damped Newton with the analytic Jacobian.

    Vectorised over spatial points; each point halves its own step until its
    residual decreases.
    """
    check_feasible(target, params)
    shape = np.broadcast_shapes(np.shape(target.n), np.shape(target.E))
    # iterate on flat arrays; 0-d inputs would otherwise decay to numpy scalars
    n_t = np.broadcast_to(np.asarray(target.n, dtype=float), shape).reshape(-1)
    E_t = np.broadcast_to(np.asarray(target.E, dtype=float), shape).reshape(-1)
    if init is None:
        init = initial_guess(target, params)
    lam0 = np.array(np.broadcast_to(init.lam0, shape), dtype=float).reshape(-1)
    lam1 = np.array(np.broadcast_to(init.lam1, shape), dtype=float).reshape(-1)

    def done(l0, l1):
        return Multipliers(l0.reshape(shape)[()], l1.reshape(shape)[()])

    def residual(l0, l1):
        eps, F, w, m0, m1, m2 = _jacobian_entries((l0, l1), params, grid)
        return _pint(F, grid) - n_t, _pint(eps * F, grid) - E_t, m0, m1, m2

    rn, rE, m0, m1, m2 = residual(lam0, lam1)
    for _ in range(max_iter):
        size = np.maximum(np.abs(rn), np.abs(rE))
        if np.all(size <= tol):
            return done(lam0, lam1)
        det = m0 * m2 - m1 * m1
        det = np.where(det > 0, det, np.nan)
        d0 = -(m2 * rn - m1 * rE) / det
        d1 = -(-m1 * rn + m0 * rE) / det
        active = (size > tol) & np.isfinite(d0) & np.isfinite(d1)
        d0 = np.where(active, d0, 0.0)
        d1 = np.where(active, d1, 0.0)
        t = np.ones_like(lam0)
        accepted = ~active
        new0, new1 = lam0.copy(), lam1.copy()
        nrn, nrE, nm0, nm1, nm2 = rn.copy(), rE.copy(), m0.copy(), m1.copy(), m2.copy()
        for _halving in range(60):
            c0 = np.where(accepted, new0, lam0 + t * d0)
            c1 = np.where(accepted, new1, lam1 + t * d1)
            crn, crE, cm0, cm1, cm2 = residual(c0, c1)
            csize = np.maximum(np.abs(crn), np.abs(crE))
            ok = ~accepted & np.isfinite(csize) & ((csize < size) | (csize <= tol))
            for dst, src in ((new0, c0), (new1, c1), (nrn, crn), (nrE, crE), (nm0, cm0), (nm1, cm1), (nm2, cm2)):
                np.copyto(dst, src, where=ok)
            accepted |= ok
            if np.all(accepted):
                break
            t = np.where(accepted, t, 0.5 * t)
        if not np.all(accepted):
            break
        lam0, lam1 = new0, new1
        rn, rE, m0, m1, m2 = nrn, nrE, nm0, nm1, nm2
    size = np.maximum(np.abs(rn), np.abs(rE))
    if np.all(size <= tol):
        return done(lam0, lam1)
    raise NoConvergence(
        f"moment inversion stalled at residual {np.max(size):.3e} (target near the feasibility boundary?)"
    )


def sensitivity_kernel(lam, params: ModelParams, grid: PhaseGrid, det_floor: float = DET_FLOOR) -> SensitivityKernel:
    """Derivatives of the equilibrium with respect to its own moments ``(n, E)``."""
    eps, _, w, m0, m1, m2 = _jacobian_entries(lam, params, grid)
    det = m0 * m2 - m1 * m1
    if np.any(det < det_floor):
        raise NearSingular(f"moment Jacobian determinant {np.min(det):.3e} below floor {det_floor:.1e}")
    pad = (Ellipsis,) + (None,) * eps.ndim
    # int (-eps', 1)(eps - eps') dmu' = (-(eps m1 - m2), eps m0 - m1)
    G1 = w * (m2[pad] - eps * m1[pad]) / det[pad]
    G2 = w * (eps * m0[pad] - m1[pad]) / det[pad]
    return SensitivityKernel(G1, G2)


def kappa(lam, params: ModelParams, grid: PhaseGrid):
    """``lam1 * int F (1 - eta F) dp``, the instability functional."""
    eps, _ = band_structure(params, grid)
    _, w = occupation(lam, eps, params.eta)
    return np.asarray(lam[1], dtype=float) * _pint(w, grid)
