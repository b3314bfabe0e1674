"""Scenario files: a small ``key = value`` format with sections and a fixed schema.

Example::

    [scenario]
    name = scan_ipc
    type = wall_scan

    [formulation]
    kind = IPC
    d_hat = 0.5

    [scan]
    height = 0.25
    samples = 2001

Comments start with ``#`` or ``;``. Unknown sections or keys are rejected
with the offending line number. ``body.<name>`` and ``obstacle.<name>``
sections may repeat with different names. Overrides use dotted paths,
``section.key=value``, and the last assignment wins.

The schema itself is :data:`SCHEMA`; :func:`describe_schema` renders it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .contact.barrier import BarrierParams
from .contact.formulation import ContactFormulation, Kind
from .contact.imls import ImlsParams
from .elasticity import DeformableBody, Material, Obstacle, Scene
from .errors import ConfigError
from .geometry import arc_polyline, box_mesh, line_polyline, read_obj, read_polyline
from .solver import SolverConfig

REQUIRED = object()
TYPES = ("wall_scan", "sliding_block", "annulus_forward", "annulus_inverse", "simulate")


def _floats(text):
    parts = text.replace(",", " ").split()
    if not parts:
        raise ValueError("expected numbers")
    return [float(p) for p in parts]


def _ints(text):
    return [int(p) for p in text.replace(",", " ").split()]


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _positive(text):
    v = float(text)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _count(text):
    v = int(text)
    if v < 0:
        raise ValueError("must be non-negative")
    return v


def _kind(text):
    return Kind.parse(text).value


def _kappa(text):
    return "auto" if text.strip().lower() == "auto" else _positive(text)


def _scenario_type(text):
    t = text.strip()
    if t not in TYPES:
        raise ValueError(f"unknown scenario type {t!r}; expected one of {', '.join(TYPES)}")
    return t


# section -> key -> (parser, default, description)
SCHEMA = {
    "scenario": {
        "name": (str.strip, REQUIRED, "run name; output files are named after it"),
        "type": (_scenario_type, REQUIRED, "one of " + ", ".join(TYPES)),
        "description": (str.strip, "", "free text"),
    },
    "formulation": {
        "kind": (_kind, "IMLS", "NTS, IPC or IMLS"),
        "d_hat": (_positive, None, "activation distance [m]; scenario default if omitted"),
        "kappa": (_kappa, "auto", "barrier stiffness [J] or 'auto'"),
        "R": (_positive, None, "IMLS kernel support radius [m]"),
        "sigma_r": (_positive, 0.5, "IRLS residual scale"),
        "sigma_n": (_positive, 1.0, "IRLS normal scale"),
        "irls_iters": (_count, 1, "IRLS rounds (0: plain IMLS)"),
    },
    "solver": {
        "grad_tol": (_positive, None, "gradient infinity-norm tolerance"),
        "max_iters": (_count, 200, "Newton iteration cap"),
        "ls_shrink": (float, 0.5, "backtracking factor"),
        "ls_armijo": (float, 1e-4, "Armijo constant"),
        "reg_init": (_positive, None, "initial regularization (default 1e-8 ||H||_inf)"),
        "reg_growth": (float, 10.0, "regularization growth factor"),
    },
    "scan": {
        "length": (_positive, 10.0, "flat line length [m]"),
        "segments": (_count, 10, "segment count"),
        "height": (_positive, None, "probe height [m] (default d_hat / 2)"),
        "samples": (_count, 2001, "scan samples"),
        "x_min": (float, None, "scan start [m] (default: middle half)"),
        "x_max": (float, None, "scan end [m]"),
    },
    "block": {
        "size": (_positive, 0.2, "square side [m]"),
        "cells": (_count, 2, "cells per side"),
        "start_x": (float, 0.75, "left edge [m]"),
        "youngs_modulus": (_positive, 1e6, "[Pa]"),
        "poisson_ratio": (float, 0.3, "[-]"),
        "density": (_positive, 1000.0, "[kg/m^3]"),
    },
    "floor": {
        "length": (_positive, 10.0, "[m]"),
        "segments": (_count, 10, "segment count"),
    },
    "load": {
        "lateral_force": (float, 6.0, "total horizontal force [N]"),
        "gravity": (float, 9.81, "[m/s^2]"),
    },
    "schedule": {
        "steps": (_count, 80, "time steps"),
        "h": (_positive, None, "time step [s]"),
    },
    "annulus": {
        "r1": (_positive, 1.0, "inner track radius [m]"),
        "r2": (_positive, 1.5, "outer track radius [m]"),
        "spring_stiffness": (_positive, 100.0, "[N/m]"),
        "segments_per_quarter": (_count, 16, "track resolution"),
        "guard_segments": (_count, 4, "extra segments past each end of the quarter"),
    },
    "sweep": {
        "theta_start": (float, 0.0, "[rad]"),
        "theta_end": (float, math.pi / 2, "[rad]"),
        "samples": (_count, 50, "sweep samples"),
    },
    "design": {
        "theta_B": (float, REQUIRED, "initial design angle [rad]"),
        "target_theta_A": (float, REQUIRED, "target angle of A [rad]"),
        "lr": (_positive, None, "learning rate (default 0.5 / r1^2)"),
        "max_steps": (_count, 30, "descent steps"),
        "obj_tol": (_positive, 1e-6, "objective tolerance [m^2]"),
    },
    "body.*": {
        "mesh": (str.strip, REQUIRED, "'box W H NX NY [X0 Y0]' or a .obj path"),
        "fixed": (_ints, [], "pinned vertex indices"),
        "velocity": (_floats, [0.0, 0.0], "initial velocity [m/s]"),
        "youngs_modulus": (_positive, 1e6, "[Pa]"),
        "poisson_ratio": (float, 0.3, "[-]"),
        "density": (_positive, 1000.0, "[kg/m^3]"),
    },
    "obstacle.*": {
        "polyline": (str.strip, REQUIRED,
                     "'line X0 X1 N [Y]', 'arc R T0 T1 N [CX CY]' or a polyline file"),
    },
    "forces": {
        "gravity": (_floats, [0.0, -9.81], "[m/s^2]"),
    },
    "contact": {
        "pairs": (str.strip, "", "'probe:obstacle, ...' (default: bodies probe everything)"),
    },
    "outputs": {
        "probes": (str.strip, "",
                   "'centroid:NAME', 'vertex:NAME:INDEX' or 'energy', comma separated"),
    },
}

TYPE_SECTIONS = {
    "wall_scan": {"scan"},
    "sliding_block": {"block", "floor", "load", "schedule", "solver"},
    "annulus_forward": {"annulus", "sweep", "solver"},
    "annulus_inverse": {"annulus", "design"},
    "simulate": {"body.*", "obstacle.*", "forces", "contact", "schedule", "outputs", "solver"},
}
COMMON_SECTIONS = {"scenario", "formulation"}

# formulation and schedule defaults that depend on the scenario type
TYPE_DEFAULTS = {
    "wall_scan": {"d_hat": 0.5, "R": 1.5},
    "sliding_block": {"d_hat": 0.02, "R": 1.5, "h": 0.05},
    "annulus_forward": {"d_hat": 0.05, "R": 0.2},
    "annulus_inverse": {"d_hat": 0.05, "R": 0.2},
    "simulate": {"d_hat": 0.01, "R": 0.05, "h": 0.005},
}


def _schema_key(section):
    if section in SCHEMA:
        return section
    head, _, tail = section.partition(".")
    if tail and f"{head}.*" in SCHEMA:
        return f"{head}.*"
    return None


@dataclass
class ScenarioConfig:
    """Parsed scenario: ``values[section][key]`` plus source line numbers."""

    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)
    source: str = "<string>"

    @property
    def name(self):
        return self.values["scenario"]["name"]

    @property
    def type(self):
        return self.values["scenario"]["type"]

    def sections(self, pattern):
        """Section names matching a schema key such as ``body.*``."""
        return [s for s in self.values if _schema_key(s) == pattern]

    def get(self, section, key):
        """Value with schema and type defaults applied."""
        if key in self.values.get(section, {}):
            return self.values[section][key]
        default = SCHEMA[_schema_key(section)][key][1]
        if default is REQUIRED:
            raise ConfigError(f"missing required key '{section}.{key}'",
                              self.lines.get((section, None)))
        if default is None:
            return TYPE_DEFAULTS.get(self.type, {}).get(key)
        return default

    def set(self, section, key, text, line=None):
        skey = _schema_key(section)
        if skey is None:
            raise ConfigError(f"unknown section [{section}]", line)
        if key not in SCHEMA[skey]:
            raise ConfigError(f"unknown key '{section}.{key}'", line)
        parser = SCHEMA[skey][key][0]
        try:
            value = parser(text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid value for '{section}.{key}': {exc}", line) from None
        self.values.setdefault(section, {})[key] = value
        self.lines[(section, key)] = line

    def validate(self):
        if "scenario" not in self.values:
            raise ConfigError("missing [scenario] section")
        for key in ("name", "type"):
            if key not in self.values["scenario"]:
                raise ConfigError(f"missing required key 'scenario.{key}'",
                                  self.lines.get(("scenario", None)))
        allowed = COMMON_SECTIONS | TYPE_SECTIONS[self.type]
        for section in self.values:
            if _schema_key(section) not in allowed:
                raise ConfigError(f"section [{section}] does not apply to type '{self.type}'",
                                  self.lines.get((section, None)))
            for key, spec in SCHEMA[_schema_key(section)].items():
                if spec[1] is REQUIRED and key not in self.values[section]:
                    raise ConfigError(f"missing required key '{section}.{key}'",
                                      self.lines.get((section, None)))
        if self.type == "annulus_inverse" and "design" not in self.values:
            raise ConfigError("annulus_inverse needs a [design] section")
        if self.type == "simulate" and not self.sections("body.*"):
            raise ConfigError("simulate needs at least one [body.<name>] section")
        return self


def parse_scenario(text, source="<string>"):
    """Parse scenario text; raises :class:`ConfigError` with a line number."""
    cfg = ScenarioConfig(source=source)
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw
        for mark in ("#", ";"):
            line = line.split(mark, 1)[0]
        line = line.strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip()
            if _schema_key(section) is None:
                raise ConfigError(f"unknown section [{section}]", lineno)
            if (section, None) in cfg.lines:
                raise ConfigError(f"duplicate section [{section}]", lineno)
            cfg.values.setdefault(section, {})
            cfg.lines[(section, None)] = lineno
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if section is None:
            raise ConfigError("key outside of any section", lineno)
        key, _, value = line.partition("=")
        cfg.set(section, key.strip(), value.strip(), lineno)
    return cfg.validate()


def load_scenario(path, overrides=()):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    cfg = parse_scenario(text, str(path))
    apply_overrides(cfg, overrides)
    return cfg


def apply_overrides(cfg, overrides):
    """Apply ``section.key=value`` assignments in order (last wins)."""
    for item in overrides:
        path, sep, value = item.partition("=")
        section, dot, key = path.strip().rpartition(".")
        if not sep or not dot or not section:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        try:
            cfg.set(section, key, value.strip())
        except ConfigError as exc:
            raise ConfigError(f"override {item!r}: {exc}") from None
        cfg.lines[(section, key)] = None
        cfg.lines.setdefault((section, None), None)
    return cfg.validate()


def describe_schema():
    """Human-readable listing of every section and key."""
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key, (_, default, doc) in keys.items():
            d = "required" if default is REQUIRED else f"default {default!r}"
            out.append(f"  {key}: {doc} ({d})")
    return "\n".join(out)


# -- builders ------------------------------------------------------------------

def build_formulation(cfg, kind=None, kappa=None):
    """Formulation from the [formulation] section; ``kappa`` fills in 'auto'."""
    k = Kind.parse(kind or cfg.get("formulation", "kind"))
    d_hat = cfg.get("formulation", "d_hat")
    kap = cfg.get("formulation", "kappa")
    if kap == "auto":
        kap = 1.0 if kappa is None else kappa
    R = cfg.get("formulation", "R") or 2.0 * d_hat
    try:
        imls = ImlsParams(R, cfg.get("formulation", "sigma_r"), cfg.get("formulation", "sigma_n"),
                          cfg.get("formulation", "irls_iters"))
        return ContactFormulation(k, BarrierParams(d_hat, kap), imls)
    except ValueError as exc:
        raise ConfigError(str(exc), cfg.lines.get(("formulation", None))) from None


def build_solver_config(cfg, force_scale=None):
    if "solver" not in cfg.values and force_scale is None:
        return None
    kw = {k: cfg.get("solver", k) for k in SCHEMA["solver"] if cfg.get("solver", k) is not None}
    try:
        if "grad_tol" in kw:
            return SolverConfig(**kw)
        return SolverConfig.for_force_scale(force_scale, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc), cfg.lines.get(("solver", None))) from None


def _generator_error(section, key, cfg, msg):
    return ConfigError(f"'{section}.{key}': {msg}", cfg.lines.get((section, key)))


def build_mesh(cfg, section):
    spec = cfg.get(section, "mesh")
    parts = spec.split()
    if parts and parts[0] == "box":
        try:
            nums = [float(p) for p in parts[1:]]
            if len(nums) not in (4, 6):
                raise ValueError
        except ValueError:
            raise _generator_error(section, "mesh", cfg, "expected 'box W H NX NY [X0 Y0]'") from None
        origin = tuple(nums[4:6]) if len(nums) == 6 else (0.0, 0.0)
        return box_mesh(nums[0], nums[1], int(nums[2]), int(nums[3]), origin)
    path = Path(spec)
    if not path.is_absolute():
        path = Path(cfg.source).parent / path
    if not path.exists():
        raise _generator_error(section, "mesh", cfg, f"file {spec!r} does not exist")
    return read_obj(path)


def build_polyline(cfg, section):
    spec = cfg.get(section, "polyline")
    parts = spec.split()
    try:
        if parts and parts[0] == "line":
            nums = [float(p) for p in parts[1:]]
            if len(nums) not in (3, 4):
                raise ValueError
            return line_polyline(nums[0], nums[1], int(nums[2]), nums[3] if len(nums) == 4 else 0.0)
        if parts and parts[0] == "arc":
            nums = [float(p) for p in parts[1:]]
            if len(nums) not in (4, 6):
                raise ValueError
            center = tuple(nums[4:6]) if len(nums) == 6 else (0.0, 0.0)
            return arc_polyline(nums[0], nums[1], nums[2], int(nums[3]), center)
    except ValueError:
        raise _generator_error(section, "polyline", cfg,
                               "expected 'line X0 X1 N [Y]' or 'arc R T0 T1 N [CX CY]'") from None
    path = Path(spec)
    if not path.is_absolute():
        path = Path(cfg.source).parent / path
    if not path.exists():
        raise _generator_error(section, "polyline", cfg, f"file {spec!r} does not exist")
    return read_polyline(path)


@dataclass
class SimulationSetup:
    scene: Scene
    velocities: np.ndarray
    gravity: np.ndarray
    probes: list


def build_simulation(cfg):
    bodies = []
    velocities = []
    for section in cfg.sections("body.*"):
        name = section.partition(".")[2]
        mesh = build_mesh(cfg, section)
        fixed = cfg.get(section, "fixed")
        if any(i < 0 or i >= len(mesh.vertices) for i in fixed):
            raise _generator_error(section, "fixed", cfg, "vertex index out of range")
        try:
            mat = Material(cfg.get(section, "youngs_modulus"), cfg.get(section, "poisson_ratio"),
                           cfg.get(section, "density"))
        except ValueError as exc:
            raise ConfigError(f"[{section}]: {exc}", cfg.lines.get((section, None))) from None
        vel = cfg.get(section, "velocity")
        if len(vel) != 2:
            raise _generator_error(section, "velocity", cfg, "expected two components")
        bodies.append(DeformableBody(mesh, mat, fixed, name=name))
        velocities.append(np.tile(vel, len(mesh.vertices)))
    obstacles = []
    for section in cfg.sections("obstacle.*"):
        obstacles.append(Obstacle(build_polyline(cfg, section), name=section.partition(".")[2]))
    names = [b.name for b in bodies] + [o.name for o in obstacles]
    pairs = None
    spec = cfg.get("contact", "pairs")
    if spec:
        pairs = []
        for item in spec.split(","):
            a, sep, b = item.strip().partition(":")
            if not sep or a not in names or b not in names or a == b:
                raise _generator_error("contact", "pairs", cfg, f"bad pair {item.strip()!r}")
            pairs.append((a, b))
    scene = Scene(bodies, obstacles, pairs)
    obstacle_dofs = sum(2 * o.n_vertices for o in obstacles)
    v = np.concatenate(velocities + [np.zeros(obstacle_dofs)])
    gravity = cfg.get("forces", "gravity")
    if len(gravity) != 2:
        raise _generator_error("forces", "gravity", cfg, "expected two components")
    probes = []
    spec = cfg.get("outputs", "probes")
    for item in filter(None, (s.strip() for s in spec.split(","))):
        parts = item.split(":")
        body_names = [b.name for b in bodies]
        if parts == ["energy"]:
            probes.append(("energy", None, None))
        elif parts[0] == "centroid" and len(parts) == 2 and parts[1] in body_names:
            probes.append(("centroid", parts[1], None))
        elif parts[0] == "vertex" and len(parts) == 3 and parts[1] in body_names:
            body = bodies[body_names.index(parts[1])]
            try:
                idx = int(parts[2])
            except ValueError:
                idx = -1
            if not 0 <= idx < body.n_vertices:
                raise _generator_error("outputs", "probes", cfg, f"bad vertex index in {item!r}")
            probes.append(("vertex", parts[1], idx))
        else:
            raise _generator_error("outputs", "probes", cfg, f"bad probe {item!r}")
    if not probes:
        probes = [("centroid", b.name, None) for b in bodies]
    return SimulationSetup(scene, v, np.asarray(gravity), probes)
