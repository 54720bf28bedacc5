"""INI run configuration with mandatory unit suffixes.

Physical keys carry their unit in the name (``omega_ghz``, ``pulse_ns``).
Parsing converts every value to canonical units (Hz, s, kG, W, K, fraction)
and stores it under the canonical suffix, so a parsed config serializes
back to text that parses to the same ``RunConfig``.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional

from ..device import InfeasibleDutyError, ThermalTable, duty_cycle_plan


class ConfigError(ValueError):
    def __init__(self, message, line=None, column=None, section=None, key=None):
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)
        self.message = message
        self.line = line
        self.column = column
        self.section = section
        self.key = key

    def record(self):
        return {"error": "config", "message": self.message, "line": self.line,
                "column": self.column, "section": self.section, "key": self.key}


class ConfigWarning(UserWarning):
    pass


# dimension -> {suffix: factor to canonical}; the first entry is canonical.
UNITS = {
    "frequency": {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9},
    "field": {"kg": 1.0, "g": 1e-3, "t": 10.0, "mt": 1e-2},
    "power": {"w": 1.0, "mw": 1e-3, "uw": 1e-6},
    "temperature": {"k": 1.0, "mk": 1e-3},
    "fraction": {"fraction": 1.0, "percent": 1e-2},
    "susceptibility": {"hz_per_kg": 1.0, "mhz_per_kg": 1e6, "ghz_per_kg": 1e9},
}

# Non-physical value kinds.
INT, FLOAT, BOOL, TEXT, FREQ_LIST = "int", "float", "bool", "text", "frequency-list"


def _spec(kind, default=None, choices=None):
    return {"kind": kind, "default": default, "choices": choices}


SCHEMA = {
    "run": {
        "seed": _spec(INT),
        "threads": _spec(INT, 1),
    },
    "spin": {
        "omega": _spec("frequency"),
        "dressing_rabi": _spec("frequency", 0.0),
        "orbital_splitting": _spec("frequency", 50e9),
        "orbital_rabi": _spec("frequency", 3e9),
        "orbital_gamma": _spec("frequency", 30e6),
        "orbital_dephasing": _spec(BOOL, False),
    },
    "noise": {
        "kind": _spec(TEXT, "none", ("none", "quasi-static", "ornstein-uhlenbeck", "white")),
        "sigma": _spec("frequency", 0.0),
        "correlation_time": _spec("time"),
        "dephasing_rate": _spec("frequency", 0.0),
        "grid_step": _spec("time"),
    },
    "experiment": {
        "type": _spec(TEXT, None, ("odar", "rabi", "ramsey", "echo")),
        "sweep_start": _spec("sweep"),
        "sweep_stop": _spec("sweep"),
        "sweep_points": _spec(INT),
        "rabi": _spec("frequency", 9.2e6),
        "detuning": _spec("frequency", 0.0),
        "probe_frequency": _spec("frequency"),
        "probe_transverse": _spec("frequency", 18.4e6),
        "probe_longitudinal": _spec("frequency", 9.2e6),
        "pulse": _spec("time", 67e-9),
        "laser": _spec("time", 300e-9),
        "shots": _spec(INT, 1),
        "frame": _spec(TEXT, "rotating", ("rotating", "lab")),
        "synchronous": _spec(BOOL, False),
    },
    "reference": {
        "rabi": _spec("frequency", 50e6),
        "detuning": _spec("frequency", 3e6),
        "sweep_stop": _spec("time", 2e-6),
        "sweep_points": _spec(INT, 81),
    },
    "sweep": {
        "dressing_rabi": _spec(FREQ_LIST),
        "window_factor": _spec(FLOAT, 3.0),
        "fringes": _spec(FLOAT, 8.0),
        "sweep_points": _spec(INT, 65),
    },
    "readout": {
        "init_fidelity": _spec(FLOAT, 0.9),
        "poisson": _spec(BOOL, False),
        "repetitions": _spec(INT, 100000),
    },
    "device": {
        "rf_power": _spec("power"),
        "duty": _spec("fraction"),
        "max_temperature": _spec("temperature"),
        # Rabi frequency per sqrt(mW) at the SiV, e.g. rabi_slope_mhz = 250.
        "rabi_slope": _spec("frequency"),
    },
    "analysis": {
        "model": _spec(TEXT, "auto", ("auto", "none", "damped-sine", "multi-sine", "peak", "decay", "linear")),
        "n_tones": _spec(INT, 1),
        "shape": _spec(TEXT, "gaussian", ("gaussian", "lorentzian")),
    },
    "output": {
        "prefix": _spec(TEXT, "result"),
    },
    "tuning": {
        "omega_a": _spec("frequency"),
        "omega_c": _spec("frequency"),
        "epsilon_1": _spec("susceptibility"),
        "epsilon_2": _spec("susceptibility"),
        "eta_1": _spec("frequency"),
        "eta_2": _spec("frequency"),
        "tolerance": _spec("frequency", 1e3),
    },
}

SECTION_ORDER = tuple(SCHEMA)


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; every block maps canonical keys to values."""

    blocks: Dict[str, Dict[str, object]] = field(default_factory=dict)

    def block(self, name):
        return self.blocks.get(name, {})

    def get(self, section, key, default=None):
        value = self.block(section).get(key)
        if value is None:
            spec = SCHEMA[section][key]
            return spec["default"] if spec["default"] is not None else default
        return value

    def has(self, section, key=None):
        if key is None:
            return section in self.blocks
        return self.block(section).get(key) is not None

    @property
    def seed(self) -> Optional[int]:
        return self.block("run").get("seed")

    def with_seed(self, seed):
        blocks = {k: dict(v) for k, v in self.blocks.items()}
        blocks.setdefault("run", {})["seed"] = int(seed)
        return RunConfig(blocks)

    def to_text(self):
        return serialize_config(self)

    def sha256(self):
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _locate(lines, section, key=None):
    """1-based (line, column) of a section header or a key inside it."""
    current = None
    for i, raw in enumerate(lines, 1):
        s = raw.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i, raw.index("[") + 1
            continue
        if key is not None and current == section:
            m = re.match(r"\s*([^=:\s]+)\s*[=:]", raw)
            if m and m.group(1).lower() == key:
                return i, m.start(1) + 1
    return None, None


def _split_key(section, raw_key):
    """Match ``raw_key`` against the schema; return (base, kind, unit factor, unit)."""
    schema = SCHEMA[section]
    if raw_key in schema and schema[raw_key]["kind"] in (INT, FLOAT, BOOL, TEXT):
        return raw_key, schema[raw_key]["kind"], None, None
    for base, spec in schema.items():
        kind = spec["kind"]
        if not raw_key.startswith(base + "_"):
            continue
        suffix = raw_key[len(base) + 1:]
        dims = ("frequency", "time") if kind == "sweep" else (
            ("frequency",) if kind == FREQ_LIST else (kind,))
        for dim in dims:
            if dim in UNITS and suffix in UNITS[dim]:
                return base, kind, UNITS[dim][suffix], (dim, suffix)
    return None


def _convert(kind, text, factor):
    text = text.strip()
    if kind == INT:
        return int(text, 0)
    if kind == FLOAT:
        return float(text)
    if kind == BOOL:
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind == TEXT:
        return text
    if kind == FREQ_LIST:
        items = [t for t in re.split(r"[,\s]+", text) if t]
        if not items:
            raise ValueError("empty list")
        return tuple(float(t) * factor for t in items)
    value = float(text) * factor
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    return value


def parse_config(text, *, seed=None) -> RunConfig:
    """Parse INI text into a validated ``RunConfig``.

    ``seed`` (from the command line) overrides ``[run] seed``.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       strict=True, empty_lines_in_values=False)
    parser.optionxform = str.lower
    lines = text.splitlines()
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any section", exc.lineno, 1) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.lineno, 1) from None
    except configparser.ParsingError as exc:
        lineno, raw = exc.errors[0]
        raise ConfigError(f"cannot parse {raw.strip()!r}", lineno, 1) from None

    blocks: Dict[str, Dict[str, object]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            line, col = _locate(lines, section)
            raise ConfigError(f"unknown section [{section}]", line, col, section)
        block = {}
        for raw_key, raw_value in parser.items(section):
            line, col = _locate(lines, section, raw_key)
            hit = _split_key(section, raw_key)
            if hit is None:
                if raw_key in SCHEMA[section]:
                    msg = f"key {raw_key!r} in [{section}] needs a unit suffix"
                else:
                    msg = f"unknown key {raw_key!r} in [{section}]"
                raise ConfigError(msg, line, col, section, raw_key)
            if "\n" in raw_value:
                raise ConfigError(f"value of {raw_key!r} continues on an indented line; "
                                  "continuation lines are not supported", line, col, section, raw_key)
            base, kind, factor, unit = hit
            if kind == "sweep":
                kind = unit[0]
            try:
                value = _convert(kind, raw_value, factor)
            except ValueError as exc:
                raise ConfigError(f"bad value for {raw_key!r}: {exc}", line, col, section, raw_key) from None
            choices = SCHEMA[section][base]["choices"]
            if choices and value not in choices:
                raise ConfigError(f"{raw_key!r} must be one of {list(choices)}, got {value!r}",
                                  line, col, section, raw_key)
            if base in block:
                raise ConfigError(f"{base!r} given twice with different units", line, col, section, raw_key)
            block[base] = value
            if SCHEMA[section][base]["kind"] == "sweep":
                block["_sweep_dimension"] = unit[0]
        blocks[section] = block

    if seed is not None:
        blocks.setdefault("run", {})["seed"] = int(seed)
    cfg = RunConfig(blocks)
    _validate(cfg, lines)
    return cfg


def _require(cfg, lines, section, key):
    if not cfg.has(section, key):
        line, col = _locate(lines, section)
        raise ConfigError(f"missing required key {key!r} in [{section}]", line, col, section, key)


def _validate(cfg: RunConfig, lines):
    if cfg.has("spin"):
        _require(cfg, lines, "spin", "omega")
        if cfg.get("spin", "omega") <= 0:
            raise ConfigError("omega must be positive", *_locate(lines, "spin", "omega"), "spin", "omega")
        if cfg.get("spin", "dressing_rabi") < 0:
            raise ConfigError("dressing_rabi must be >= 0", None, None, "spin", "dressing_rabi")
    sweep_keys = ("sweep_start", "sweep_stop", "sweep_points")
    if cfg.has("experiment", "type") or any(cfg.has("experiment", k) for k in sweep_keys):
        for key in sweep_keys:
            _require(cfg, lines, "experiment", key)
        if cfg.get("experiment", "sweep_points") < 2:
            raise ConfigError("sweep_points must be >= 2", None, None, "experiment", "sweep_points")
        if cfg.get("experiment", "sweep_stop") <= cfg.get("experiment", "sweep_start"):
            raise ConfigError("sweep_stop must exceed sweep_start", None, None, "experiment", "sweep_stop")
    if cfg.has("tuning"):
        for key in ("omega_a", "omega_c", "epsilon_1", "epsilon_2", "eta_1", "eta_2"):
            _require(cfg, lines, "tuning", key)
    kind = cfg.get("noise", "kind")
    if kind == "ornstein-uhlenbeck" and not cfg.has("noise", "correlation_time"):
        _require(cfg, lines, "noise", "correlation_time")
    needs_seed = (kind in ("quasi-static", "ornstein-uhlenbeck") and cfg.get("noise", "sigma") > 0) \
        or cfg.get("readout", "poisson")
    if needs_seed and cfg.seed is None:
        raise ConfigError("a seed is required when noise sigma > 0 or Poisson readout is enabled",
                          *_locate(lines, "run"), "run", "seed")
    _check_duty(cfg)


def _check_duty(cfg: RunConfig, table: ThermalTable = ThermalTable()):
    if not (cfg.has("device", "rf_power") and cfg.has("device", "duty")):
        return
    p_mw = cfg.get("device", "rf_power") * 1e3
    duty = cfg.get("device", "duty")
    if cfg.has("device", "max_temperature"):
        t_mk = cfg.get("device", "max_temperature") * 1e3
    else:
        t_mk = table.node_temperature(p_mw)
    try:
        plan = duty_cycle_plan(p_mw, t_mk, table)
    except InfeasibleDutyError as exc:
        warnings.warn(f"thermal plan infeasible: {exc}", ConfigWarning, stacklevel=3)
        return
    if duty > plan.duty + 1e-9:
        warnings.warn(
            f"duty {duty:.1%} at {p_mw:g} mW exceeds the thermal plan of {plan.duty:.1%} "
            f"for a {t_mk:g} mK stage limit",
            ConfigWarning, stacklevel=3,
        )
    if plan.extrapolated:
        warnings.warn(f"{p_mw:g} mW lies outside the tabulated power range; duty plan extrapolated",
                      ConfigWarning, stacklevel=3)


def _format(kind, value):
    if kind == BOOL:
        return "true" if value else "false"
    if kind == FREQ_LIST:
        return ", ".join(repr(float(v)) for v in value)
    if kind in (INT, TEXT):
        return str(value)
    return repr(float(value))


def serialize_config(cfg: RunConfig) -> str:
    """Canonical INI text: fixed section and key order, canonical units."""
    out = []
    for section in SECTION_ORDER:
        if section not in cfg.blocks:
            continue
        block = cfg.blocks[section]
        out.append(f"[{section}]")
        for base, spec in SCHEMA[section].items():
            if base not in block:
                continue
            kind = spec["kind"]
            if kind == "sweep":
                dim = block["_sweep_dimension"]
                key = f"{base}_{next(iter(UNITS[dim]))}"
                kind = dim
            elif kind == FREQ_LIST:
                key = f"{base}_hz"
            elif kind in UNITS:
                key = f"{base}_{next(iter(UNITS[kind]))}"
            else:
                key = base
            out.append(f"{key} = {_format(kind, block[base])}")
        out.append("")
    return "\n".join(out)
