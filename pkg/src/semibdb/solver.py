"""Operator-splitting integrator for the Boltzmann-Dirac-Benney system.

    d_t f + u(p).grad_x f - U grad_x n_f . grad_p f = gamma n_f (1 - eta n_f)(F - f)

Every substep is solved exactly: free streaming is a per-momentum Fourier phase
shift in ``x``; the force step is a per-position phase shift in ``p`` with the
acceleration frozen (it cannot change ``n_f``); the collision step is the
exponential relaxation of :mod:`semibdb.collision`. The only time-discretisation
error is therefore the splitting error.

Three right-hand sides are supported: the self-consistent BGK model
(``nonlinear``), relaxation toward a prescribed equilibrium (``fixed_F``), and
the equation linearised around a homogeneous Fermi-Dirac state (``linearized``),
in which case the state holds the perturbation ``g``.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Literal

import numpy as np

from semibdb.collision import CollisionContext, bgk_rhs, bgk_step, relax_toward
from semibdb.equilibrium import (
    ModelParams,
    SensitivityKernel,
    band_structure,
    equilibrium_profile,
    moments_forward,
    occupation,
    sensitivity_kernel,
)
from semibdb.errors import BDBError, BlowUp
from semibdb.grid import PhaseGrid, dealias, fourier_phase_shift

log = logging.getLogger(__name__)

Mode = Literal["nonlinear", "fixed_F", "linearized"]
Scheme = Literal["strang", "lie"]


@dataclass(frozen=True)
class LinearBackground:
    """Homogeneous equilibrium data entering the linearised equation."""

    lam: tuple[float, float]
    F: np.ndarray
    grad_F: np.ndarray  # (d,) + momentum shape, analytic
    kernel: SensitivityKernel
    rate: float  # gamma n_F (1 - eta n_F)


def linear_background(lam, params: ModelParams, grid: PhaseGrid) -> LinearBackground:
    eps, u = band_structure(params, grid)
    F, w = occupation(lam, eps, params.eta)
    n = float(moments_forward(lam, params, grid).n)
    return LinearBackground(
        lam=(float(lam[0]), float(lam[1])),
        F=F,
        grad_F=float(lam[1]) * u * w,
        kernel=sensitivity_kernel(lam, params, grid),
        rate=params.gamma * n * (1.0 - params.eta * n),
    )


@dataclass
class SolverConfig:
    dt: float
    t_end: float
    scheme: Scheme = "strang"
    dealias: bool = False
    mode: Mode = "nonlinear"
    snapshot_every: int = 1
    ceiling: float = 1e6
    fixed_equilibrium: np.ndarray | None = None
    background: LinearBackground | None = None
    reference: np.ndarray | None = None  # subtracted for the perturbation diagnostic

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt={self.dt} must be > 0")
        if not self.t_end >= 0:
            raise ValueError(f"t_end={self.t_end} must be >= 0")
        if self.scheme not in ("strang", "lie"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.mode not in ("nonlinear", "fixed_F", "linearized"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "fixed_F" and self.fixed_equilibrium is None:
            raise ValueError("fixed_F mode needs fixed_equilibrium")
        if self.mode == "linearized" and self.background is None:
            raise ValueError("linearized mode needs a LinearBackground")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")


@dataclass
class SimState:
    f: np.ndarray
    t: float
    params: ModelParams
    grid: PhaseGrid
    diagnostics: deque = field(default_factory=lambda: deque(maxlen=100_000))
    context: CollisionContext = field(default_factory=CollisionContext, repr=False)

    def snapshot(self, full_history: bool = True) -> "SimState":
        """Read-only copy; without ``full_history`` only the latest diagnostics row is kept."""
        f = self.f.copy()
        f.setflags(write=False)
        if full_history or not self.diagnostics:
            rows = self.diagnostics
        else:
            rows = [self.diagnostics[-1]]
        return replace(self, f=f, diagnostics=deque(rows, maxlen=self.diagnostics.maxlen),
                       context=CollisionContext())


def density(f: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    return grid.integrate_p(f)


def interaction_field(f: np.ndarray, params: ModelParams, grid: PhaseGrid, dealiased: bool = False) -> np.ndarray:
    """Acceleration ``a_i(x) = U d_{x_i} n_f``; shape ``(d,) + space_shape``."""
    n = density(f, grid)
    if dealiased:
        n = dealias(n, tuple(range(grid.d)))
    return np.stack([params.U * grid.ddx(n, i) for i in range(grid.d)])


def _x_transport(f: np.ndarray, u: np.ndarray, grid: PhaseGrid, tau: float) -> np.ndarray:
    for i in range(grid.d):
        shift = (u[i] * tau).reshape((1,) * grid.d + grid.momentum_shape)
        f = fourier_phase_shift(f, i, shift, grid.Lx)
    return f


def _p_accelerate(f: np.ndarray, a: np.ndarray, grid: PhaseGrid, tau: float) -> np.ndarray:
    # dp/dt = -a  =>  f(x, p, t + tau) = f(x, p + a tau, t)
    for i in range(grid.d):
        shift = (-a[i] * tau).reshape(grid.space_shape + (1,) * grid.d)
        f = fourier_phase_shift(f, grid.d + i, shift, grid.Lp)
    return f


class Integrator:
    """Holds the static operator data for one run and advances states in place."""

    def __init__(self, params: ModelParams, grid: PhaseGrid, config: SolverConfig):
        self.params = params
        self.grid = grid
        self.config = config
        self.eps, self.u = band_structure(params, grid)

    # substeps -----------------------------------------------------------------
    def transport(self, f: np.ndarray, tau: float) -> np.ndarray:
        return _x_transport(f, self.u, self.grid, tau)

    def accelerate(self, f: np.ndarray, tau: float) -> np.ndarray:
        if self.params.U == 0:
            return f
        grid = self.grid
        if self.config.mode == "linearized":
            bg = self.config.background
            a = interaction_field(f, self.params, grid, self.config.dealias)
            out = f.copy()
            for i in range(grid.d):
                out += tau * a[i][(Ellipsis,) + (None,) * grid.d] * bg.grad_F[i]
            return out
        a = interaction_field(f, self.params, grid, self.config.dealias)
        return _p_accelerate(f, a, grid, tau)

    def collide(self, f: np.ndarray, tau: float, context: CollisionContext) -> np.ndarray:
        if self.params.gamma == 0 or tau == 0:
            return f
        mode = self.config.mode
        grid = self.grid
        if mode == "linearized":
            bg = self.config.background
            pad = (Ellipsis,) + (None,) * grid.d
            n = grid.integrate_p(f)[pad]
            E = grid.integrate_p(self.eps * f)[pad]
            target = bg.kernel.G1 * n + bg.kernel.G2 * E
            return target + (f - target) * np.exp(-bg.rate * tau)
        if mode == "fixed_F":
            out = relax_toward(f, self.config.fixed_equilibrium, self.params, grid, tau)
        else:
            out = bgk_step(f, self.params, grid, tau, context)
        if self.config.dealias:
            # x-filtering the increment keeps its zero p-moments at every x
            out = f + dealias(out - f, tuple(range(grid.d)))
        return out

    def step(self, f: np.ndarray, dt: float, context: CollisionContext) -> np.ndarray:
        if self.config.scheme == "strang":
            h = 0.5 * dt
            f = self.transport(f, h)
            f = self.collide(f, h, context)
            f = self.accelerate(f, dt)
            f = self.collide(f, h, context)
            return self.transport(f, h)
        f = self.transport(f, dt)
        f = self.collide(f, dt, context)
        return self.accelerate(f, dt)

    # diagnostics --------------------------------------------------------------
    def record(self, state: SimState) -> dict:
        grid = self.grid
        f = state.f
        row = {
            "t": state.t,
            "mass": grid.integrate(f),
            "energy": grid.integrate(self.eps * f),
            "l2": float(np.sqrt(grid.integrate(f * f))),
        }
        ref = self.config.reference
        if ref is not None:
            dev = f - ref
            row["perturbation_l2"] = float(np.sqrt(grid.integrate(dev * dev)))
        else:
            row["perturbation_l2"] = float("nan")
        state.diagnostics.append(row)
        return row

    def check(self, state: SimState) -> None:
        f = state.f
        if not np.all(np.isfinite(f)):
            raise BlowUp(f"non-finite values at t={state.t:.6g}")
        if np.max(np.abs(f)) > self.config.ceiling:
            raise BlowUp(f"|f| exceeded ceiling {self.config.ceiling:g} at t={state.t:.6g}")


def split_step(state: SimState, config: SolverConfig, dt: float | None = None) -> SimState:
    """Advance ``state`` by one splitting step (``config.dt`` unless given)."""
    integ = Integrator(state.params, state.grid, config)
    dt = config.dt if dt is None else dt
    f = integ.step(state.f, dt, state.context)
    return replace(state, f=f, t=state.t + dt)


def time_derivative(f: np.ndarray, params: ModelParams, grid: PhaseGrid, config: SolverConfig | None = None) -> np.ndarray:
    """Right-hand side ``d_t f`` of the selected model, evaluated spectrally."""
    mode = config.mode if config is not None else "nonlinear"
    eps, u = band_structure(params, grid)
    dfdt = np.zeros_like(f)
    for i in range(grid.d):
        dfdt -= u[i] * grid.ddx(f, i)
    n = density(f, grid)
    if mode == "linearized":
        bg = config.background
        for i in range(grid.d):
            dfdt += params.U * grid.ddx(n, i)[(Ellipsis,) + (None,) * grid.d] * bg.grad_F[i]
        pad = (Ellipsis,) + (None,) * grid.d
        nE = (grid.integrate_p(f)[pad], grid.integrate_p(eps * f)[pad])
        dfdt += bg.rate * (bg.kernel.G1 * nE[0] + bg.kernel.G2 * nE[1] - f)
        return dfdt
    for i in range(grid.d):
        dfdt += params.U * grid.ddx(n, i)[(Ellipsis,) + (None,) * grid.d] * grid.ddp(f, i)
    if params.gamma:
        if mode == "fixed_F":
            rate = params.gamma * n * (1.0 - params.eta * n)
            dfdt += rate[(Ellipsis,) + (None,) * grid.d] * (config.fixed_equilibrium - f)
        else:
            dfdt += bgk_rhs(f, params, grid)
    return dfdt


Observer = Callable[[SimState], None]


def simulate(
    f0: np.ndarray,
    params: ModelParams,
    grid: PhaseGrid,
    config: SolverConfig,
    observers: Iterable[Observer] = (),
    keep_snapshots: bool = True,
) -> list[SimState]:
    """Integrate to ``config.t_end`` and return snapshots every ``snapshot_every`` steps.

    The initial and final states are always included; with ``keep_snapshots``
    false only those two are retained (observers still see every snapshot). Leaving the physical or
    feasible regime raises :class:`BlowUp` carrying the snapshots taken so far.
    """
    observers = list(observers)
    integ = Integrator(params, grid, config)
    state = SimState(f=np.array(f0, dtype=float, copy=True), t=0.0, params=params, grid=grid)
    integ.check(state)
    integ.record(state)
    snaps = [state.snapshot()]
    for obs in observers:
        obs(snaps[-1])
    nsteps = int(np.ceil(config.t_end / config.dt - 1e-9))
    for k in range(1, nsteps + 1):
        dt = min(config.dt, config.t_end - state.t) if k == nsteps else config.dt
        try:
            state.f = integ.step(state.f, dt, state.context)
        except BDBError as exc:
            err = BlowUp(f"left the feasible regime at t={state.t + dt:.6g}: {exc}")
            err.snapshots = snaps
            raise err from exc
        state.t = k * config.dt if k < nsteps else config.t_end
        try:
            integ.check(state)
        except BlowUp as err:
            err.snapshots = snaps
            raise
        if k % config.snapshot_every == 0 or k == nsteps:
            integ.record(state)
            snap = state.snapshot(full_history=k == nsteps)
            if keep_snapshots or k == nsteps:
                snaps.append(snap)
            for obs in observers:
                obs(snap)
    log.debug("simulate: %d steps to t=%.6g", nsteps, state.t)
    return snaps


def stationary_equilibrium(lam, params: ModelParams, grid: PhaseGrid) -> np.ndarray:
    """Homogeneous phase-space field ``F_lam(p)`` broadcast over ``x``."""
    F = equilibrium_profile(lam, params, grid)
    return np.broadcast_to(F, grid.phase_shape).copy()
