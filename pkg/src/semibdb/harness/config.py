"""INI-style run configuration with per-key diagnostics."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from semibdb.errors import ConfigError

MODES = ("equilibrium", "simulate", "stability", "illposed", "norms")
INIT_KINDS = ("equilibrium", "perturbed", "file")

# section -> key -> (type, default); a default of ... marks a required key
SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "run": {"mode": (str, None)},
    "model": {"eta": (float, ...), "eps0": (float, ...), "U": (float, ...), "gamma": (float, ...), "d": (int, ...)},
    "grid": {"Nx": (int, ...), "Np": (int, ...), "Lx": (float, 1.0)},
    "time": {
        "dt": (float, 1e-3),
        "t_end": (float, 0.0),
        "snapshot_every": (int, 1),
        "scheme": (str, "strang"),
        "dealias": (bool, False),
    },
    "init": {
        "kind": (str, "equilibrium"),
        "lambda0": (float, 0.0),
        "lambda1": (float, 0.0),
        "beta": (float, None),
        "wavenumber_m": (int, None),
        "c": (float, 1.0),
        "nu": (float, 0.1),
        "amplitude": (float, 1.0),
        "amplitude_floor": (float, 0.0),
        "path": (str, None),
    },
    "stability": {
        "lambda0": (float, None),
        "lambda1": (float, None),
        "beta_min": (float, None),
        "beta_max": (float, None),
        "beta_count": (int, 8),
        "wavenumber_m": (str, None),
        "sweep_num": (int, 61),
        "k": (int, 1),
        "theta": (float, 1.0),
        "ball_radius": (float, None),
        "max_efolds": (float, 25.0),
    },
    "norms": {"nu": (float, 0.2), "mu": (float, 0.0), "K": (int, 4)},
}


@dataclass
class RunConfig:
    path: Path | None
    values: dict[str, dict[str, object]] = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def section(self, name: str) -> dict[str, object]:
        return dict(self.values[name])

    def echo(self) -> dict[str, dict[str, object]]:
        return {s: {k: v for k, v in kv.items()} for s, kv in self.values.items()}


def _convert(raw: str, typ: type, where: str):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config(text: str, path: Path | None = None) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (U vs u)
    label = str(path) if path is not None else "<config>"
    try:
        cp.read_string(text, source=label)
    except configparser.Error as exc:
        raise ConfigError(f"{label}: {exc}") from exc
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{label}: unknown section [{section}]")
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{label}: unknown key {section}.{key}")
    values: dict[str, dict[str, object]] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (typ, default) in keys.items():
            where = f"{label}: {section}.{key}"
            if cp.has_option(section, key):
                values[section][key] = _convert(cp.get(section, key), typ, where)
            elif default is ...:
                raise ConfigError(f"{label}: missing required key {section}.{key}")
            else:
                values[section][key] = default
    mode = values["run"]["mode"]
    if mode is not None and mode not in MODES:
        raise ConfigError(f"{label}: run.mode must be one of {MODES}, got {mode!r}")
    if values["init"]["kind"] not in INIT_KINDS:
        raise ConfigError(f"{label}: init.kind must be one of {INIT_KINDS}")
    if values["time"]["scheme"] not in ("strang", "lie"):
        raise ConfigError(f"{label}: time.scheme must be strang or lie")
    return RunConfig(path=path, values=values)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path)


def parse_int_list(spec: str | None) -> list[int] | None:
    """``"4,5,6"`` or the inclusive range ``"4:7"`` to a list of ints."""
    if spec is None:
        return None
    out: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if ":" in part:
            lo, hi = part.split(":", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out
