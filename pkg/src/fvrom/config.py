"""Flat key = value configuration with one section level.

Parsed with configparser (ini syntax, '#'/';' comments). Unknown sections or
keys are rejected so typos fail loudly, with the offending key named.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # mesh
    mesh_source: str = "generate"        # generate | file
    mesh_path: str = "mesh.txt"
    length: float = 2.2
    height: float = 0.41
    depth: float | None = None
    cylinder: bool = True
    cylinder_x: float = 0.2
    cylinder_y: float = 0.2
    cylinder_radius: float = 0.05
    target_h: float = 0.02
    # physics
    rho: float = 1.0
    mu: float = 1e-3
    alpha: float = 0.0032
    # time
    t0: float = 0.0
    t_end: float = 8.0
    dt: float = 2e-3
    snapshot_dt: float = 0.1
    # model
    model: str = "ef"                    # ef | leray | nse
    inflow: str = "parabolic"            # parabolic | plug | none
    amplitude: str = "ramp"              # ramp | constant
    amplitude_period: float = 8.0
    amplitude_value: float = 1.0
    # rom
    rank_velocity: int = 2
    rank_filtered_velocity: int = 2
    rank_pressure: int = 2
    rank_filter_pressure: int = 1
    energy_threshold: float | None = None
    ppe_boundary_form: str = "consistent"  # consistent | literal
    # solver
    momentum_rtol: float = 1e-7
    pressure_rtol: float = 1e-8
    piso_correctors: int = 2
    nonorth_correctors: int = 1
    simplec_rtol: float = 1e-7
    simplec_maxiter: int = 50
    divergence_tol: float = 1e-7
    # metrics
    coefficient_convention: str = "force-component"
    u_ref: float = 1.0
    l_ref: float = 0.1
    drag_patch: str = "cylinder"
    # output
    fields_output: str = "none"          # none | sampled
    operators_csv: bool = False
    # sweep
    alpha_values: tuple = ()
    alpha_test: float | None = None
    jobs: int = 1

    def validate(self):
        if self.mesh_source not in ("generate", "file"):
            raise ConfigError(f"mesh.source must be generate|file, "
                              f"got '{self.mesh_source}'")
        if self.model not in ("ef", "leray", "nse"):
            raise ConfigError(f"model.kind must be ef|leray|nse, "
                              f"got '{self.model}'")
        if self.inflow not in ("parabolic", "plug", "none"):
            raise ConfigError(f"model.inflow must be parabolic|plug|none")
        if self.amplitude not in ("ramp", "constant"):
            raise ConfigError("model.amplitude must be ramp|constant")
        if self.ppe_boundary_form not in ("consistent", "literal"):
            raise ConfigError("rom.ppe_boundary_form must be "
                              "consistent|literal")
        if self.coefficient_convention not in ("force-component", "printed"):
            raise ConfigError("metrics.coefficient_convention must be "
                              "force-component|printed")
        if self.fields_output not in ("none", "sampled"):
            raise ConfigError("output.fields must be none|sampled")
        for name in ("rank_velocity", "rank_filtered_velocity",
                     "rank_pressure", "rank_filter_pressure"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"rom.{name} must be positive")
        if self.energy_threshold is not None and not (
                0.0 < self.energy_threshold <= 1.0):
            raise ConfigError("rom.energy_threshold must lie in (0, 1]")
        if self.alpha < 0:
            raise ConfigError("physics.alpha must be non-negative")
        return self


# (section, option) -> (attribute, type tag)
_KEYMAP = {
    ("mesh", "source"): ("mesh_source", str),
    ("mesh", "path"): ("mesh_path", str),
    ("mesh", "length"): ("length", float),
    ("mesh", "height"): ("height", float),
    ("mesh", "depth"): ("depth", "optfloat"),
    ("mesh", "cylinder"): ("cylinder", bool),
    ("mesh", "cylinder_x"): ("cylinder_x", float),
    ("mesh", "cylinder_y"): ("cylinder_y", float),
    ("mesh", "cylinder_radius"): ("cylinder_radius", float),
    ("mesh", "target_h"): ("target_h", float),
    ("physics", "rho"): ("rho", float),
    ("physics", "mu"): ("mu", float),
    ("physics", "alpha"): ("alpha", float),
    ("time", "t0"): ("t0", float),
    ("time", "t_end"): ("t_end", float),
    ("time", "dt"): ("dt", float),
    ("time", "snapshot_dt"): ("snapshot_dt", float),
    ("model", "kind"): ("model", str),
    ("model", "inflow"): ("inflow", str),
    ("model", "amplitude"): ("amplitude", str),
    ("model", "amplitude_period"): ("amplitude_period", float),
    ("model", "amplitude_value"): ("amplitude_value", float),
    ("rom", "rank_velocity"): ("rank_velocity", int),
    ("rom", "rank_filtered_velocity"): ("rank_filtered_velocity", int),
    ("rom", "rank_pressure"): ("rank_pressure", int),
    ("rom", "rank_filter_pressure"): ("rank_filter_pressure", int),
    ("rom", "energy_threshold"): ("energy_threshold", "optfloat"),
    ("rom", "ppe_boundary_form"): ("ppe_boundary_form", str),
    ("solver", "momentum_rtol"): ("momentum_rtol", float),
    ("solver", "pressure_rtol"): ("pressure_rtol", float),
    ("solver", "piso_correctors"): ("piso_correctors", int),
    ("solver", "nonorth_correctors"): ("nonorth_correctors", int),
    ("solver", "simplec_rtol"): ("simplec_rtol", float),
    ("solver", "simplec_maxiter"): ("simplec_maxiter", int),
    ("solver", "divergence_tol"): ("divergence_tol", float),
    ("metrics", "coefficient_convention"): ("coefficient_convention", str),
    ("metrics", "u_ref"): ("u_ref", float),
    ("metrics", "l_ref"): ("l_ref", float),
    ("metrics", "drag_patch"): ("drag_patch", str),
    ("output", "fields"): ("fields_output", str),
    ("output", "operators_csv"): ("operators_csv", bool),
    ("sweep", "alpha_values"): ("alpha_values", "floats"),
    ("sweep", "alpha_test"): ("alpha_test", "optfloat"),
    ("sweep", "jobs"): ("jobs", int),
}


def _convert(raw, kind, where):
    raw = raw.strip()
    try:
        if kind is str:
            return raw
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if kind == "optfloat":
            return None if raw == "" or raw.lower() == "none" else float(raw)
        if kind == "floats":
            return tuple(float(tok) for tok in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"invalid value '{raw}' for {where}") from None
    raise ConfigError(f"unhandled option type for {where}")


def load_config(path=None, overrides=()) -> PipelineConfig:
    """Read an ini file (optional) and apply section.key=value overrides."""
    cfg = PipelineConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None,
                                           inline_comment_prefixes=("#", ";"))
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh, source=str(path))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except configparser.Error as err:
            raise ConfigError(f"config parse error: {err}") from None
        for section in parser.sections():
            for option, raw in parser.items(section):
                key = (section, option)
                if key not in _KEYMAP:
                    raise ConfigError(
                        f"unknown config key [{section}] {option}")
                attr, kind = _KEYMAP[key]
                setattr(cfg, attr, _convert(raw, kind, f"[{section}] {option}"))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not key=value")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override key '{dotted}' must be section.key")
        section, option = dotted.split(".", 1)
        key = (section.strip(), option.strip())
        if key not in _KEYMAP:
            raise ConfigError(f"unknown config key [{key[0]}] {key[1]}")
        attr, kind = _KEYMAP[key]
        setattr(cfg, attr, _convert(raw, kind, f"[{key[0]}] {key[1]}"))
    return cfg.validate()


def config_from_snapshot(snapshot: dict) -> PipelineConfig:
    """Rebuild a config from config_snapshot output (sweep workers)."""
    kwargs = {}
    for k, v in snapshot.items():
        kwargs[k] = tuple(v) if isinstance(v, list) else v
    return PipelineConfig(**kwargs).validate()


def config_snapshot(cfg: PipelineConfig) -> dict:
    """Flat, JSON-ready view of every config value (manifest embedding)."""
    out = {}
    for f in dc_fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out
