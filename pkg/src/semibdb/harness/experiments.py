"""Headline experiments: growth-rate reproduction and splitting convergence."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from semibdb.equilibrium import ModelParams, band_structure, occupation
from semibdb.errors import SaturatedTooFast, Unphysical
from semibdb.grid import PhaseGrid
from semibdb.norms import sobolev_w_inf
from semibdb.solver import SolverConfig, linear_background, simulate, stationary_equilibrium
from semibdb.stability import (
    CriticalPoint,
    UnstableMode,
    mode_field,
    perturbation_amplitude,
    perturbed_initial,
    snap_beta,
    unstable_mode,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GrowthExperiment:
    """Amplitude rule ``amplitude * beta e^{-c nu/|beta|}`` (raised to ``amplitude_floor``) and analysis knobs."""

    c: float = 1.0
    nu: float = 0.1
    amplitude: float = 1.0
    amplitude_floor: float = 0.0
    k: int = 1
    theta: float = 1.0
    ball_radius: float | None = None  # None: the whole box
    max_efolds: float = 25.0
    window_factor: float = 10.0
    min_samples: int = 10
    min_r2: float = 0.99


@dataclass(frozen=True)
class RateFit:
    rate: float
    r2: float
    t0: float
    t1: float
    samples: int


def fit_growth(times: np.ndarray, amps: np.ndarray, window_factor: float = 10.0, min_samples: int = 10) -> RateFit:
    """Least-squares slope of ``log a(t)`` over the leading window where ``a <= window_factor * a(0)``."""
    times = np.asarray(times, dtype=float)
    amps = np.asarray(amps, dtype=float)
    if amps.size == 0 or not amps[0] > 0:
        raise SaturatedTooFast("initial amplitude must be positive")
    inside = amps <= window_factor * amps[0]
    n = int(np.argmin(inside)) if not inside.all() else inside.size
    if n < min_samples:
        raise SaturatedTooFast(
            f"only {n} samples before the amplitude exceeded {window_factor:g}x its initial value; "
            "reduce the amplitude or the time step"
        )
    t, y = times[:n], np.log(amps[:n])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(rate=float(slope), r2=r2, t0=float(t[0]), t1=float(t[-1]), samples=n)


def saturation_amplitude(mode: UnstableMode, lam, params: ModelParams, grid: PhaseGrid) -> float:
    """Largest perturbation amplitude keeping ``F + amp Re(A e^{i phi x})`` inside ``[0, 1/eta]``."""
    eps, _ = band_structure(params, grid)
    F, _ = occupation(lam, eps, params.eta)
    room = np.minimum(F, params.f_max - F)
    absA = np.abs(mode.A)
    with np.errstate(divide="ignore"):
        ratio = np.where(absA > 0, room / absA, np.inf)
    return float(np.min(ratio))


def ball_mask(grid: PhaseGrid, radius: float | None) -> np.ndarray:
    """Indicator of ``|x_i - Lx/2| <= radius`` for all i (whole box if ``radius`` is None)."""
    if radius is None:
        return np.ones(grid.space_shape, dtype=bool)
    mask = np.ones(grid.space_shape, dtype=bool)
    for i in range(grid.d):
        mask &= np.abs(grid.x_mesh(i, phase=False) - 0.5 * grid.Lx) <= radius
    return mask


def ball_l1(f: np.ndarray, grid: PhaseGrid, radius: float | None) -> float:
    local = grid.integrate_p(np.abs(f))
    return float(np.sum(local * ball_mask(grid, radius)) * grid.dx**grid.d)


@dataclass
class BetaRecord:
    m: int
    beta: float
    alpha: float
    wavenumber: float
    omega: float
    control: bool
    amplitude: float
    saturation_amplitude: float
    linear_check_error: float | None
    measured_rate: float | None
    r2: float | None
    window: tuple[float, float, int] | None
    rel_error: float | None
    ratio: float | None
    literal_status: str
    literal_amplitude: float
    notes: list[str] = field(default_factory=list)


@dataclass
class GrowthReport:
    lam: tuple[float, float]
    alpha0: float
    t_star: float
    dt: float
    records: list[BetaRecord]
    k: int
    theta: float

    @property
    def betas(self) -> list[float]:
        return [r.beta for r in self.records]

    def mid(self) -> BetaRecord:
        growing = sorted((r for r in self.records if not r.control), key=lambda r: r.beta)
        return growing[len(growing) // 2]

    def ratio_trend_increasing(self) -> bool:
        """Ratio strictly increasing as beta decreases, over the growing records."""
        growing = sorted((r for r in self.records if not r.control), key=lambda r: -r.beta)
        vals = [r.ratio for r in growing]
        if any(v is None for v in vals) or len(vals) < 2:
            return False
        return all(b > a for a, b in zip(vals, vals[1:]))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mid_beta"] = self.mid().beta if any(not r.control for r in self.records) else None
        out["ratio_trend_increasing"] = self.ratio_trend_increasing()
        return out


def linearized_check(mode: UnstableMode, lam, params: ModelParams, grid: PhaseGrid, dt: float) -> float:
    """Relative deviation of the linearised-solver amplitude from ``e^{omega t}`` after one e-folding."""
    g0 = mode_field(mode, grid)
    t1 = 1.0 / abs(mode.omega)
    cfg = SolverConfig(
        dt=min(dt, t1 / 10),
        t_end=t1,
        mode="linearized",
        background=linear_background(lam, params, grid),
        reference=np.zeros_like(g0),
        snapshot_every=10**9,
        ceiling=1e300,
    )
    snaps = simulate(g0, params, grid, cfg)
    a0 = snaps[0].diagnostics[0]["perturbation_l2"]
    a1 = snaps[-1].diagnostics[-1]["perturbation_l2"]
    return float(a1 / a0 / math.exp(mode.omega * t1) - 1.0)


def _amplitude_run(f0, F, params, grid, dt, t_end, t_star, scheme="strang", dealias=True):
    times, amps = [], []
    captured = {}

    def observer(state):
        row = state.diagnostics[-1]
        times.append(row["t"])
        amps.append(row["perturbation_l2"])
        if t_star is not None and "f" not in captured and state.t >= t_star - 0.5 * dt:
            captured["f"] = np.array(state.f)
            captured["t"] = state.t

    cfg = SolverConfig(dt=dt, t_end=t_end, scheme=scheme, dealias=dealias, reference=F, snapshot_every=1)
    simulate(f0, params, grid, cfg, observers=[observer], keep_snapshots=False)
    return np.array(times), np.array(amps), captured


def _measure_one(m, critical, params, grid, exp, dt, t_star, scheme, dealias):
    lam = critical.lam
    alpha, beta = snap_beta(critical, m, params, grid)
    mode = unstable_mode(alpha, beta, lam, params, grid)
    F = stationary_equilibrium(lam, params, grid)
    control = not mode.omega > 0
    a_sat = saturation_amplitude(mode, lam, params, grid)
    floor = max(exp.amplitude_floor, a_sat * math.exp(-exp.max_efolds))
    amp = perturbation_amplitude(beta, exp.c, exp.nu, exp.amplitude, floor)
    notes = []
    if abs(amp) >= a_sat:
        raise Unphysical(f"m={m}: amplitude {abs(amp):.3g} exceeds the saturation amplitude {a_sat:.3g}")
    f0 = F + amp * mode_field(mode, grid)
    lin_err = linearized_check(mode, lam, params, grid, dt)
    if control:
        notes.append("non-growing control case (omega <= 0)")
        t_end = t_star if t_star > 0 else exp.min_samples * dt
    else:
        t_end = max(1.25 * math.log(exp.window_factor) / mode.omega, t_star)
    t_end = dt * math.ceil(t_end / dt - 1e-9)
    times, amps, cap = _amplitude_run(f0, F, params, grid, dt, t_end, t_star, scheme, dealias)
    fit = fit_growth(times, amps, exp.window_factor if not control else np.inf, exp.min_samples)
    if fit.r2 < exp.min_r2:
        notes.append(f"fit R^2 {fit.r2:.4f} below {exp.min_r2}")
    rel = (fit.rate - mode.omega) / abs(mode.omega) if mode.omega != 0 else None
    ratio = None
    if "f" in cap:
        den = sobolev_w_inf(f0 - F, grid, exp.k) ** exp.theta
        ratio = ball_l1(cap["f"] - F, grid, exp.ball_radius) / den
    # the literal amplitude rule, without scaling or floor
    literal_amp = perturbation_amplitude(beta, exp.c, exp.nu, 1.0, 0.0)
    try:
        f_exact = perturbed_initial(mode, lam, params, grid, exp.c, exp.nu, 1.0, 0.0)
    except Unphysical:
        status = f"unphysical: amplitude {abs(literal_amp):.3g} exceeds saturation amplitude {a_sat:.3g}"
    else:
        try:
            t_ex, a_ex, _ = _amplitude_run(f_exact, F, params, grid, dt, t_end, None, scheme, dealias)
            fx = fit_growth(t_ex, a_ex, exp.window_factor, exp.min_samples)
            status = f"measured rate {fx.rate:.6g} (R^2 {fx.r2:.4f})"
        except SaturatedTooFast as exc:
            status = f"saturated: {exc}"
        except Exception as exc:  # left the physical regime
            status = f"failed: {exc}"
    return BetaRecord(
        m=m, beta=beta, alpha=alpha, wavenumber=mode.wavenumber, omega=mode.omega, control=control,
        amplitude=amp, saturation_amplitude=a_sat, linear_check_error=lin_err,
        measured_rate=fit.rate, r2=fit.r2, window=(fit.t0, fit.t1, fit.samples), rel_error=rel,
        ratio=ratio, literal_status=status, literal_amplitude=literal_amp, notes=notes,
    )


def common_time(critical: CriticalPoint, ms: Sequence[int], params, grid, exp: GrowthExperiment, dt: float) -> float:
    """Common evaluation time: when the fastest growing mode reaches the fit-window ceiling."""
    rates = []
    for m in ms:
        alpha, beta = snap_beta(critical, m, params, grid)
        omega = unstable_mode(alpha, beta, critical.lam, params, grid).omega
        if omega > 0:
            rates.append(omega)
    if not rates:
        return 0.0
    t = math.log(exp.window_factor) / max(rates)
    return dt * max(1, round(t / dt))


def growth_measurement(
    critical: CriticalPoint,
    ms: Sequence[int],
    params: ModelParams,
    grid: PhaseGrid,
    experiment: GrowthExperiment = GrowthExperiment(),
    dt: float = 1e-5,
    scheme: str = "strang",
    dealias: bool = True,
    threads: int = 1,
) -> GrowthReport:
    """Measure nonlinear growth rates on the branch points with wavenumber index ``m`` in ``ms``.

    Each run starts from ``F + amp Re(A e^{i phi x})``, records the L2 distance
    to ``F`` every step and fits its logarithm on the pre-saturation window.
    Every mode is also checked against ``e^{omega t}`` with the linearised solver,
    and the ratio ``||f(t*) - F||_{L1(ball)} / ||f(0) - F||_{W^{k,inf}}^theta``
    is recorded at a common time ``t*``.
    """
    t_star = common_time(critical, ms, params, grid, experiment, dt)

    def job(m):
        return _measure_one(m, critical, params, grid, experiment, dt, t_star, scheme, dealias)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(job, ms))
    else:
        records = [job(m) for m in ms]
    records.sort(key=lambda r: r.beta)
    return GrowthReport(
        lam=critical.lam, alpha0=critical.alpha0, t_star=t_star, dt=dt, records=records,
        k=experiment.k, theta=experiment.theta,
    )


@dataclass(frozen=True)
class ConvergenceStudy:
    dts: tuple[float, ...]
    differences: tuple[float, ...]  # ||f_dt - f_{dt/2}||, ||f_{dt/2} - f_{dt/4}||, ...
    ratios: tuple[float, ...]

    @property
    def orders(self) -> tuple[float, ...]:
        return tuple(math.log2(r) for r in self.ratios)


def self_convergence(
    f0: np.ndarray,
    params: ModelParams,
    grid: PhaseGrid,
    dt: float,
    t_end: float,
    levels: int = 3,
    scheme: str = "strang",
    dealias: bool = False,
) -> ConvergenceStudy:
    """Self-convergence ratios of successive halvings of ``dt`` (L2 differences at ``t_end``)."""
    finals, dts = [], []
    for k in range(levels):
        h = dt / 2**k
        cfg = SolverConfig(dt=h, t_end=t_end, scheme=scheme, dealias=dealias, snapshot_every=10**9)
        finals.append(simulate(f0, params, grid, cfg)[-1].f)
        dts.append(h)
    diffs = [float(np.sqrt(grid.integrate((a - b) ** 2))) for a, b in zip(finals, finals[1:])]
    ratios = [a / b for a, b in zip(diffs, diffs[1:])]
    return ConvergenceStudy(tuple(dts), tuple(diffs), tuple(ratios))
