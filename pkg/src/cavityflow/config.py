"""Case configuration: dataclass, INI parsing, validation."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, fields

import numpy as np

from .geometry import DensityField, Domain
from .operators import monomial_count
from .nodes import default_wall_tags, parse_face


class ConfigError(ValueError):
    """Invalid configuration; carries a line number when parsed from file."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass
class CaseConfig:
    """Everything needed to set up and run one simulation case."""

    ra: float = 1e4
    pr: float = 100.0
    n: float = 1.0
    dim: int = 2
    obstructions: list = field(default_factory=list)
    cold_wall: str = ""
    hot_wall: str = ""
    gravity: str = ""
    viscosity_convention: str = "printed"
    shear_floor: float = 1e-10
    init_temperature: str = "zero"  # or "linear" (conduction profile)

    density: str = "constant"
    h: float = 0.02
    h2: float = None
    w: float = 0.0
    channel_min_nodes: int = 2
    k: int = 3
    m: int = 2
    c: int = 2
    seed: int = 0
    max_nodes: int = 2_000_000

    dt: float = None  # None selects the automatic step policy
    safety: float = 0.5
    t_end: float = 0.1
    steady_tol: float = 1e-4
    steady_window: float = 0.005

    out_dir: str = "runs/case"
    cadence: int = 20

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (self.ra > 0):
            raise ConfigError("Ra must be positive")
        if not (self.pr > 0):
            raise ConfigError("Pr must be positive")
        if not (0 < self.n <= 2):
            raise ConfigError("power-law exponent n must lie in (0, 2]")
        if self.dim not in (2, 3):
            raise ConfigError("dim must be 2 or 3")
        if not (self.t_end > 0):
            raise ConfigError("t_end must be positive")
        if self.dt is not None and not (self.dt > 0):
            raise ConfigError("dt must be positive or auto")
        if self.density not in ("constant", "boundary_refined", "channel_refined"):
            raise ConfigError(f"unknown density kind {self.density!r}")
        if self.viscosity_convention not in ("printed", "invariant"):
            raise ConfigError(
                f"unknown viscosity convention {self.viscosity_convention!r}"
            )
        if self.init_temperature not in ("zero", "linear"):
            raise ConfigError(f"unknown init_temperature {self.init_temperature!r}")
        if self.c < 1:
            raise ConfigError("stencil multiplier c must be at least 1")
        if self.cadence < 1:
            raise ConfigError("cadence must be at least 1")
        if not (self.h > 0):
            raise ConfigError("spacing h must be positive")

    @property
    def stencil_size(self) -> int:
        return self.c * monomial_count(self.m, self.dim)

    def domain(self) -> Domain:
        return Domain(dim=self.dim, obstructions=list(self.obstructions))

    def density_field(self) -> DensityField:
        return DensityField(
            kind=self.density,
            h1=self.h,
            h2=self.h2,
            w=self.w,
            channel_min_nodes=self.channel_min_nodes,
        )

    def wall_faces(self) -> tuple[str, str]:
        d_cold, d_hot = default_wall_tags(self.dim)
        cold = self.cold_wall or d_cold
        hot = self.hot_wall or d_hot
        if parse_face(cold, self.dim) == parse_face(hot, self.dim):
            raise ConfigError("cold and hot walls must differ")
        return cold, hot

    def gravity_direction(self) -> np.ndarray:
        if not self.gravity:
            down = np.zeros(self.dim)
            down[-1] = -1.0
            return down
        spec = self.gravity.strip().lower()
        if spec in ("none", "off", "0"):
            return np.zeros(self.dim)
        if "," in spec:
            vec = np.array([float(tok) for tok in spec.split(",")])
            if len(vec) != self.dim:
                raise ConfigError("gravity vector has wrong dimension")
            norm = np.linalg.norm(vec)
            return vec / norm if norm > 0 else vec
        sign = -1.0 if spec[0] == "-" else 1.0
        axis = {"x": 0, "y": 1, "z": 2}.get(spec.lstrip("+-"))
        if axis is None or axis >= self.dim:
            raise ConfigError(f"bad gravity spec {self.gravity!r}")
        vec = np.zeros(self.dim)
        vec[axis] = sign
        return vec

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, np.ndarray):
                val = val.tolist()
            out[f.name] = val
        return out

    def content_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


_SCHEMA = {
    "case": {
        "ra": float,
        "pr": float,
        "n": float,
        "dim": int,
        "cold_wall": str,
        "hot_wall": str,
        "gravity": str,
        "obstructions": "obstructions",
        "viscosity_convention": str,
        "shear_floor": float,
        "init_temperature": str,
    },
    "discretisation": {
        "density": str,
        "h": float,
        "h1": float,
        "h2": float,
        "w": float,
        "channel_min_nodes": int,
        "k": int,
        "m": int,
        "c": int,
        "seed": int,
        "max_nodes": int,
    },
    "time": {
        "dt": "dt",
        "t_end": float,
        "steady_tol": float,
        "steady_window": float,
        "safety": float,
    },
    "output": {
        "dir": str,
        "cadence": int,
    },
}

_RENAME = {("discretisation", "h1"): "h", ("output", "dir"): "out_dir"}

_RANGES = {
    ("case", "ra"): (lambda v: v > 0, "Ra must be positive"),
    ("case", "pr"): (lambda v: v > 0, "Pr must be positive"),
    ("case", "n"): (lambda v: 0 < v <= 2, "exponent n must lie in (0, 2]"),
    ("case", "dim"): (lambda v: v in (2, 3), "dim must be 2 or 3"),
    ("discretisation", "h"): (lambda v: v > 0, "h must be positive"),
    ("discretisation", "h1"): (lambda v: v > 0, "h1 must be positive"),
    ("discretisation", "h2"): (lambda v: v > 0, "h2 must be positive"),
    ("discretisation", "w"): (lambda v: v > 0, "w must be positive"),
    ("discretisation", "k"): (lambda v: v >= 3 and v % 2 == 1, "k must be odd >= 3"),
    ("discretisation", "m"): (lambda v: v >= 1, "m must be at least 1"),
    ("discretisation", "c"): (lambda v: v >= 1, "c must be at least 1"),
    ("time", "dt"): (lambda v: v is None or v > 0, "dt must be positive or auto"),
    ("time", "t_end"): (lambda v: v > 0, "t_end must be positive"),
    ("output", "cadence"): (lambda v: v >= 1, "cadence must be at least 1"),
}


def _key_lines(path) -> dict:
    lines = {}
    section = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            text = raw.strip()
            if not text or text.startswith(("#", ";")):
                continue
            if text.startswith("[") and text.endswith("]"):
                section = text[1:-1].strip().lower()
                lines[(section, None)] = lineno
                continue
            if "=" in text:
                key = text.split("=", 1)[0].strip().lower()
                lines[(section, key)] = lineno
    return lines


def _parse_obstructions(text, line):
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        vals = [float(tok) for tok in chunk.split(",")]
        if len(vals) < 3:
            raise ConfigError("obstruction needs center coordinates and radius", line)
        out.append((tuple(vals[:-1]), vals[-1]))
    return out


def parse_config(path) -> CaseConfig:
    """Read a key = value config with [case], [discretisation], [time],
    [output] sections; unknown keys and out-of-range values are rejected
    with the offending line number."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc), line)

    lines = _key_lines(path)
    values = {}
    for section in parser.sections():
        sec = section.lower()
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((sec, None)))
        for key, raw in parser.items(section):
            key = key.lower()
            line = lines.get((sec, key))
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line)
            kind = _SCHEMA[sec][key]
            name = _RENAME.get((sec, key), key)
            try:
                if kind == "obstructions":
                    values[name] = _parse_obstructions(raw, line)
                elif kind == "dt":
                    values[name] = None if raw.strip().lower() == "auto" else float(raw)
                elif kind is int:
                    values[name] = int(raw)
                elif kind is float:
                    values[name] = float(raw)
                else:
                    values[name] = raw.strip()
            except ConfigError:
                raise
            except ValueError:
                raise ConfigError(f"cannot parse value for {key!r}: {raw!r}", line)
            check = _RANGES.get((sec, key))
            if check and not check[0](values[name]):
                raise ConfigError(check[1], line)

    try:
        cfg = CaseConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))
    # Re-raise range violations with a line number when we can locate one.
    try:
        cfg.validate()
        cfg.density_field()
    except (ConfigError, ValueError) as exc:
        raise ConfigError(str(exc))
    return cfg
