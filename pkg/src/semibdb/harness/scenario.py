"""Config-driven pipelines writing outputs plus a checksummed manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from semibdb.equilibrium import ModelParams, moment_jacobian, moments_forward
from semibdb.errors import BDBError, ConfigError
from semibdb.grid import build_grid
from semibdb.harness.config import RunConfig, load_config, parse_int_list
from semibdb.harness.experiments import GrowthExperiment, growth_measurement
from semibdb.harness.snapshot_io import atomic_write_bytes, encode_snapshot, read_snapshot
from semibdb.norms import NormProfile, phase_norm, weighted_tracker
from semibdb.solver import SolverConfig, simulate, stationary_equilibrium, time_derivative
from semibdb.stability import (
    branch_alpha,
    critical_alpha,
    instability_margin,
    linear_residual,
    margin_sweep,
    perturbed_initial,
    snap_beta,
    unstable_mode,
)

log = logging.getLogger(__name__)

SERIES_COLUMNS = ("t", "mass", "energy", "l2", "perturbation_l2")


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class RunManifest:
    mode: str
    config: dict
    version: str
    grid: dict
    params: dict
    wall_time: float = 0.0
    files: list[dict] = field(default_factory=list)


class OutputDir:
    """Single-writer output directory recording every file for the manifest."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[dict] = []

    def write(self, name: str, data: bytes) -> Path:
        path = self.root / name
        atomic_write_bytes(path, data)
        self.files.append({"name": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write(name, (json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n").encode())

    def write_series(self, name: str, rows) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for row in rows:
            w.writerow([repr(float(row[c])) for c in SERIES_COLUMNS])
        return self.write(name, buf.getvalue().encode())


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _model(cfg: RunConfig):
    m = cfg.section("model")
    g = cfg.section("grid")
    try:
        params = ModelParams(eta=m["eta"], eps0=m["eps0"], U=m["U"], gamma=m["gamma"], d=m["d"])
        grid = build_grid(m["d"], g["Nx"], g["Np"], g["Lx"])
    except ValueError as exc:
        raise ConfigError(f"invalid model/grid settings: {exc}") from exc
    return params, grid


def _solver_config(cfg: RunConfig, reference=None) -> SolverConfig:
    t = cfg.section("time")
    try:
        return SolverConfig(
            dt=t["dt"], t_end=t["t_end"], scheme=t["scheme"], dealias=t["dealias"],
            snapshot_every=t["snapshot_every"], reference=reference,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [time] settings: {exc}") from exc


def _critical(cfg: RunConfig, params, grid):
    s = cfg.section("stability")
    if s["lambda0"] is not None and s["lambda1"] is not None:
        lam = (s["lambda0"], s["lambda1"])
        margin = float(instability_margin(lam, params, grid))
    else:
        lam, margin = margin_sweep(params, grid, num=s["sweep_num"])
    return critical_alpha(lam, params, grid), margin


def _wavenumbers(cfg: RunConfig, critical, params, grid) -> list[int]:
    s = cfg.section("stability")
    try:
        ms = parse_int_list(s["wavenumber_m"])
    except ValueError as exc:
        raise ConfigError(f"stability.wavenumber_m: {exc}") from exc
    if ms:
        return ms
    if s["beta_min"] is None or s["beta_max"] is None:
        raise ConfigError("missing required key stability.wavenumber_m (or stability.beta_min/beta_max)")
    # snap each requested beta to the nearest commensurable wavenumber index
    rate_alpha = critical.alpha0 * _rate(critical.lam, params, grid)
    out = []
    for beta in np.linspace(s["beta_min"], s["beta_max"], s["beta_count"]):
        if beta == 0:
            continue
        m = int(round(rate_alpha / beta * grid.Lx / (2 * np.pi)))
        if m != 0 and m not in out:
            out.append(m)
    return out


def _rate(lam, params, grid):
    n = float(moments_forward(lam, params, grid).n)
    return params.gamma * n * (1.0 - params.eta * n)


def _initial(cfg: RunConfig, params, grid):
    init = cfg.section("init")
    lam = (init["lambda0"], init["lambda1"])
    F = stationary_equilibrium(lam, params, grid)
    kind = init["kind"]
    if kind == "equilibrium":
        return F, F
    if kind == "file":
        if init["path"] is None:
            raise ConfigError("missing required key init.path for init.kind = file")
        state = read_snapshot(init["path"])
        if state.f.shape != grid.phase_shape:
            raise ConfigError(f"snapshot grid {state.f.shape} does not match the configured grid {grid.phase_shape}")
        return np.array(state.f), None
    crit = critical_alpha(lam, params, grid)
    if init["wavenumber_m"] is not None:
        alpha, beta = snap_beta(crit, init["wavenumber_m"], params, grid)
    elif init["beta"] is not None:
        alpha = float(branch_alpha(crit, [init["beta"]], params, grid, max_dbeta=0.05)[0])
        beta = init["beta"]
    else:
        raise ConfigError("missing required key init.beta (or init.wavenumber_m) for init.kind = perturbed")
    mode = unstable_mode(alpha, beta, lam, params, grid)
    f0 = perturbed_initial(mode, lam, params, grid, init["c"], init["nu"], init["amplitude"], init["amplitude_floor"])
    return f0, F


def _run_simulation(cfg, params, grid, out: OutputDir):
    f0, F = _initial(cfg, params, grid)
    scfg = _solver_config(cfg, reference=F)
    snaps = simulate(f0, params, grid, scfg)
    for k, s in enumerate(snaps):
        out.write(f"snap_{k:05d}.bdbk", encode_snapshot(s))
    out.write_series("series.csv", snaps[-1].diagnostics)
    return snaps, scfg


def run_equilibrium(cfg, params, grid, out):
    init = cfg.section("init")
    lam = (init["lambda0"], init["lambda1"])
    mom = moments_forward(lam, params, grid)
    J = moment_jacobian(lam, params, grid)
    out.write_json("moments.json", {
        "lambda": lam, "n": float(mom.n), "E": float(mom.E), "jacobian": J,
        "instability_margin": float(instability_margin(lam, params, grid)),
    })


def run_simulate(cfg, params, grid, out):
    _run_simulation(cfg, params, grid, out)


def run_stability(cfg, params, grid, out):
    crit, margin = _critical(cfg, params, grid)
    table = []
    for m in _wavenumbers(cfg, crit, params, grid):
        alpha, beta = snap_beta(crit, m, params, grid)
        mode = unstable_mode(alpha, beta, crit.lam, params, grid)
        res, gnorm = linear_residual(mode, crit.lam, params, grid)
        B = mode.B
        table.append({
            "m": m, "beta": beta, "alpha": alpha, "omega": mode.omega, "wavenumber": mode.wavenumber,
            "n_hat": mode.n_hat, "E_hat": mode.E_hat, "det_B_minus_I": float(np.linalg.det(B - np.eye(2))),
            "trace_B": float(np.trace(B)), "det_B": float(np.linalg.det(B)), "relative_residual": res / gnorm,
        })
    out.write_json("stability.json", {
        "lambda": crit.lam, "margin": margin, "alpha0": crit.alpha0, "critical_residual": crit.residual,
        "branch": sorted(table, key=lambda r: r["beta"]),
    })


def run_illposed(cfg, params, grid, out, threads=1):
    crit, margin = _critical(cfg, params, grid)
    s, init, t = cfg.section("stability"), cfg.section("init"), cfg.section("time")
    exp = GrowthExperiment(
        c=init["c"], nu=init["nu"], amplitude=init["amplitude"], amplitude_floor=init["amplitude_floor"],
        k=s["k"], theta=s["theta"], ball_radius=s["ball_radius"], max_efolds=s["max_efolds"],
    )
    ms = _wavenumbers(cfg, crit, params, grid)
    report = growth_measurement(crit, ms, params, grid, exp, dt=t["dt"], scheme=t["scheme"],
                                dealias=t["dealias"], threads=threads)
    payload = report.to_dict()
    payload["margin"] = margin
    out.write_json("growth.json", payload)


def run_norms(cfg, params, grid, out):
    snaps, scfg = _run_simulation(cfg, params, grid, out)
    n = cfg.section("norms")
    horizon = snaps[-1].t - snaps[0].t
    try:
        profile = NormProfile(nu=n["nu"], mu=n["mu"], K=n["K"], T=horizon)
    except ValueError as exc:
        raise ConfigError(f"invalid [norms] settings: {exc}") from exc
    fields = [s.f for s in snaps]
    derivs = [time_derivative(f, params, grid, scfg) for f in fields]
    series = weighted_tracker([s.t for s in snaps], fields, derivs, grid, profile)
    out.write_json("norms.json", {
        "profile": asdict(profile), "initial_norm": phase_norm(fields[0], grid, n["nu"], n["K"]),
        "times": series.times, "norm": series.norm, "dnorm": series.dnorm, "dt_norm": series.dt_norm,
        "lhs": series.lhs, "rhs": series.rhs, "slack": series.slack, "verdict": series.verdict,
    })


PIPELINES = {
    "equilibrium": run_equilibrium,
    "simulate": run_simulate,
    "stability": run_stability,
    "illposed": run_illposed,
    "norms": run_norms,
}


def scenario_run(config_path, mode: str | None = None, out_dir=None, threads: int = 1) -> RunManifest:
    """Parse ``config_path``, run the selected pipeline and write ``manifest.json`` last."""
    cfg = load_config(config_path)
    mode = mode or cfg.get("run", "mode")
    if mode is None:
        raise ConfigError("missing required key run.mode (or pass the mode on the command line)")
    if mode not in PIPELINES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {sorted(PIPELINES)}")
    params, grid = _model(cfg)
    if out_dir is None:
        out_dir = Path.cwd() / f"{Path(config_path).stem}_{mode}"
    out = OutputDir(Path(out_dir))
    start = time.perf_counter()
    try:
        if mode == "illposed":
            run_illposed(cfg, params, grid, out, threads=threads)
        else:
            PIPELINES[mode](cfg, params, grid, out)
    except ConfigError:
        raise
    except BDBError as exc:
        exc.args = (f"{mode} pipeline failed: {exc}",) + exc.args[1:]
        raise
    manifest = RunManifest(
        mode=mode, config=cfg.echo(), version=code_version(),
        grid={"d": grid.d, "Nx": grid.Nx, "Np": grid.Np, "Lx": grid.Lx},
        params=asdict(params), wall_time=time.perf_counter() - start, files=list(out.files),
    )
    # the manifest itself is not listed; it is written last
    atomic_write_bytes(out.root / "manifest.json",
                       (json.dumps(asdict(manifest), indent=2, sort_keys=True, default=_jsonable) + "\n").encode())
    return manifest
