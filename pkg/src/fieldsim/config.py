"""Declarative simulation files.

A simulation file is TOML.  Every physical value is a string holding the
number(s) followed by a unit expression, e.g. ``Ms = "8e5 A/m"`` or
``H = "0 0 1e5 A/m"``; the unit is checked against the dimension each key
expects.  ``schema = 1`` is mandatory and unknown keys are rejected.
"""

from __future__ import annotations

import ast
import math
import re
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .errors import ParseError, UnitMismatch, UnknownKey, UnknownUnit
from .integrate import IntegratorConfig
from .llg import MaterialParams
from .mesh import Mesh
from .quantities import Quantity, format_unit, parse_quantity, parse_unit

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1

# section -> key -> expected unit ("" for dimensionless, None for non-quantities)
SCHEMA: Dict[str, Dict[str, Optional[str]]] = {
    "": {"schema": None},
    "mesh": {"nx": None, "ny": None, "nz": None, "dx": "m", "dy": "m", "dz": "m"},
    "material": {
        "Ms": "A/m",
        "A": "J/m",
        "K": "J/m^3",
        "easy_axis": None,
        "alpha": "",
        "gamma": "m/(A*s)",
        "c1": "m/(A*s)",
        "c2": "m/(A*s)",
    },
    "initial": {
        "preset": None,
        "direction": None,
        "axis": None,
        "position": "m",
        "left": None,
        "right": None,
        "mx": None,
        "my": None,
        "mz": None,
    },
    "applied": {"H": "A/m"},
    "run": {
        "mode": None,
        "t_end": "s",
        "torque_threshold": "s^-1",
        "rtol": "",
        "atol": "",
        "dt_initial": "s",
        "dt_max": "s",
        "renormalize_every": None,
        "observe_every_steps": None,
        "max_steps": None,
    },
    "equations": {"sources": None, "constants": None},
    "output": {
        "dir": None,
        "observables": None,
        "snapshot_every_steps": None,
        "snapshot_fields": None,
    },
}

REQUIRED_SECTIONS = ("mesh", "material", "run")

DEFAULTS = {
    "material.gamma": "2.211e5 m A^-1 s^-1",
    "material.K": "0 J/m^3",
    "material.A": "0 J/m",
    "material.easy_axis": [0.0, 0.0, 1.0],
    "run.rtol": 1e-8,
    "run.atol": 1e-10,
    "run.dt_initial": "1e-14 s",
    "run.dt_max": "1e-12 s",
    "run.renormalize_every": 0,
    "run.observe_every_steps": 1,
    "run.torque_threshold": "1e6 s^-1",
    "output.dir": "output",
    "output.observables": "observables.csv",
    "output.snapshot_every_steps": 0,
    "output.snapshot_fields": ["m"],
}


@dataclass
class InitialCondition:
    preset: str = "uniform"
    direction: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    axis: int = 0
    position: Optional[float] = None
    left: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    right: Tuple[float, float, float] = (0.0, 0.0, -1.0)
    expressions: Tuple[str, str, str] = ("0", "0", "1")

    def function(self, mesh: Mesh):
        """f(x, y, z) -> (mx, my, mz), unnormalized."""
        if self.preset == "uniform":
            d = self.direction
            return lambda x, y, z: d
        if self.preset == "step":
            length = (mesh.nx * mesh.dx, mesh.ny * mesh.dy, mesh.nz * mesh.dz)[self.axis]
            x0 = length / 2 if self.position is None else self.position
            return lambda *r: self.left if r[self.axis] < x0 else self.right
        compiled = [_compile_expression(e) for e in self.expressions]
        return lambda x, y, z: tuple(f(x, y, z) for f in compiled)


@dataclass
class OutputConfig:
    dir: str = "output"
    observables: str = "observables.csv"
    snapshot_every_steps: int = 0
    snapshot_fields: Tuple[str, ...] = ("m",)


@dataclass
class SimConfig:
    mesh: Mesh
    material: MaterialParams
    initial: InitialCondition
    H_applied: Tuple[float, float, float]
    mode: str
    integrator: IntegratorConfig
    equations: List[str] = field(default_factory=list)
    constants: Dict[str, Quantity] = field(default_factory=dict)
    output: OutputConfig = field(default_factory=OutputConfig)
    # every resolved setting, for the provenance header of output files
    settings: Dict[str, Any] = field(default_factory=dict)


_FUNCS = {
    name: getattr(math, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "sinh", "cosh", "atan", "atan2", "asin", "acos", "hypot")
}
_FUNCS["abs"] = abs
_NAMES = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a ** b,
}


def _compile_expression(text: str):
    """Arithmetic in x, y, z (metres) with math functions; no other names."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"bad expression {text!r}: {exc.msg}", 1, exc.offset) from None

    def check(node):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        elif isinstance(node, ast.Name) and (node.id in ("x", "y", "z") or node.id in _NAMES):
            pass
        elif (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS
            and not node.keywords
        ):
            for a in node.args:
                check(a)
        else:
            raise ParseError(f"unsupported construct {ast.dump(node)[:40]!r} in expression {text!r}")

    check(tree)

    def evaluate(node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](evaluate(node.left, env), evaluate(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = evaluate(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _NAMES[node.id]
        return _FUNCS[node.func.id](*(evaluate(a, env) for a in node.args))

    body = tree.body
    return lambda x, y, z: float(evaluate(body, {"x": x, "y": y, "z": z}))


class _Reader:
    def __init__(self, raw: dict, path: str):
        self.raw = raw
        self.path = path
        self.settings: Dict[str, Any] = {}

    def section(self, name):
        return self.raw.get(name, {})

    def has(self, section, key):
        return key in self.section(section)

    def value(self, section, key, default=None):
        sec = self.section(section)
        full = f"{section}.{key}"
        if key in sec:
            v = sec[key]
        elif full in DEFAULTS:
            v = DEFAULTS[full]
        else:
            v = default
        if v is not None:
            self.settings[full] = v
        return v

    def quantity(self, section, key, components=1, default=None):
        """Parse a unit-annotated value and check its dimension."""
        expected_text = SCHEMA[section][key]
        raw = self.value(section, key, default)
        if raw is None:
            return None
        full = f"{section}.{key}"
        expected = parse_unit(expected_text)
        if isinstance(raw, (int, float)) and not isinstance(raw, bool) and components == 1:
            raw = repr(float(raw))
        if not isinstance(raw, str):
            raise ParseError(f"{self.path}: {full} must be a string like \"<value> {expected_text}\"")
        try:
            parsed = parse_quantity(raw, components)
        except (ParseError, UnknownUnit) as exc:
            raise ParseError(f"{self.path}: {full}: {exc}") from None
        dim = parsed.dim if components == 1 else parsed[1]
        if dim != expected:
            raise UnitMismatch(
                f"{self.path}: {full} = {raw!r} has unit '{format_unit(dim) or '1'}', "
                f"expected {expected_text or 'dimensionless'} ({format_unit(expected) or '1'})"
            )
        return parsed

    def real(self, section, key, default=None):
        q = self.quantity(section, key, default=default)
        return None if q is None else q.value

    def integer(self, section, key, default=None):
        v = self.value(section, key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            raise ParseError(f"{self.path}: {section}.{key} must be an integer, got {v!r}")
        return v

    def vector(self, section, key, default=None):
        v = self.value(section, key, default)
        if v is None:
            return None
        if not (isinstance(v, list) and len(v) == 3 and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)):
            raise ParseError(f"{self.path}: {section}.{key} must be a list of 3 numbers, got {v!r}")
        return tuple(float(c) for c in v)

    def string(self, section, key, choices=None, default=None):
        v = self.value(section, key, default)
        if v is None:
            return None
        if not isinstance(v, str) or (choices and v not in choices):
            allowed = f" (one of {', '.join(choices)})" if choices else ""
            raise ParseError(f"{self.path}: {section}.{key} must be a string{allowed}, got {v!r}")
        return v


def _check_keys(raw: dict, path: str):
    for key, val in raw.items():
        if isinstance(val, dict):
            if key not in SCHEMA or key == "":
                raise UnknownKey(f"{path}: unknown section [{key}]")
            for sub in val:
                if sub not in SCHEMA[key]:
                    raise UnknownKey(f"{path}: unknown key {key}.{sub}")
        elif key not in SCHEMA[""]:
            raise UnknownKey(f"{path}: unknown top-level key {key!r}")


_LOC = re.compile(r"line (\d+), column (\d+)")


def parse_config(text: str, path: str = "<config>") -> SimConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _LOC.search(str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ParseError(f"{path}: {str(exc).split(' (at')[0]}", line, col) from None

    _check_keys(raw, path)
    if raw.get("schema") != SCHEMA_VERSION:
        raise ParseError(f"{path}: missing or unsupported 'schema' (expected schema = {SCHEMA_VERSION})")
    for sec in REQUIRED_SECTIONS:
        if sec not in raw:
            raise ParseError(f"{path}: missing [{sec}] section")
    r = _Reader(raw, path)

    if not r.has("mesh", "dx"):
        raise ParseError(f"{path}: [mesh] needs at least dx")
    dx = r.section("mesh")["dx"]
    # dy and dz default to dx
    mesh = Mesh(
        r.integer("mesh", "nx", 1), r.integer("mesh", "ny", 1), r.integer("mesh", "nz", 1),
        r.real("mesh", "dx"), r.real("mesh", "dy", dx), r.real("mesh", "dz", dx),
    )

    if not r.has("material", "Ms"):
        raise ParseError(f"{path}: [material] needs Ms")
    alpha = r.value("material", "alpha")
    if alpha is None:
        raise ParseError(f"{path}: [material] needs alpha")
    material = MaterialParams(
        Ms=r.quantity("material", "Ms"),
        A_ex=r.quantity("material", "A"),
        K_u=r.quantity("material", "K"),
        easy_axis=r.vector("material", "easy_axis"),
        alpha=r.real("material", "alpha"),
        gamma=r.quantity("material", "gamma"),
        c1=r.quantity("material", "c1"),
        c2=r.quantity("material", "c2"),
    )

    preset = r.string("initial", "preset", ("uniform", "step", "expression"), "uniform")
    initial = InitialCondition(preset=preset)
    if preset == "uniform":
        initial.direction = r.vector("initial", "direction", [1.0, 0.0, 0.0])
    elif preset == "step":
        axis = r.string("initial", "axis", ("x", "y", "z"), "x")
        initial.axis = "xyz".index(axis)
        initial.position = r.real("initial", "position")
        initial.left = r.vector("initial", "left", [0.0, 0.0, 1.0])
        initial.right = r.vector("initial", "right", [0.0, 0.0, -1.0])
    else:
        exprs = tuple(r.string("initial", k) for k in ("mx", "my", "mz"))
        if None in exprs:
            raise ParseError(f"{path}: preset 'expression' needs mx, my and mz")
        for e in exprs:
            _compile_expression(e)
        initial.expressions = exprs
    used = {
        "uniform": {"preset", "direction"},
        "step": {"preset", "axis", "position", "left", "right"},
        "expression": {"preset", "mx", "my", "mz"},
    }[preset]
    for key in r.section("initial"):
        if key not in used:
            raise UnknownKey(f"{path}: initial.{key} does not apply to preset {preset!r}")

    H = (0.0, 0.0, 0.0)
    if r.has("applied", "H"):
        H, _ = r.quantity("applied", "H", components=3)

    mode = r.string("run", "mode", ("dynamics", "relax"))
    if mode is None:
        raise ParseError(f"{path}: [run] needs mode")
    t_end = r.real("run", "t_end")
    if mode == "dynamics" and t_end is None:
        raise ParseError(f"{path}: dynamics mode needs run.t_end")
    if mode == "dynamics" and r.has("run", "torque_threshold"):
        raise UnknownKey(f"{path}: run.torque_threshold only applies to relax mode")
    integrator = IntegratorConfig(
        rtol=r.real("run", "rtol"),
        atol=r.real("run", "atol"),
        dt_initial=r.real("run", "dt_initial"),
        dt_max=r.real("run", "dt_max"),
        renormalize_every=r.integer("run", "renormalize_every"),
        t_end=t_end,
        torque_threshold=r.real("run", "torque_threshold") if mode == "relax" else None,
        observe_every_steps=r.integer("run", "observe_every_steps"),
        max_steps=r.integer("run", "max_steps", 10_000_000),
    )

    sources = r.value("equations", "sources", [])
    if not (isinstance(sources, list) and all(isinstance(s, str) for s in sources)):
        raise ParseError(f"{path}: equations.sources must be a list of strings")
    constants = {}
    for name, text in r.section("equations").get("constants", {}).items():
        if not isinstance(text, str):
            raise ParseError(f"{path}: equations.constants.{name} must be a string like \"<value> <unit>\"")
        try:
            constants[name] = parse_quantity(text)
        except (ParseError, UnknownUnit) as exc:
            raise ParseError(f"{path}: equations.constants.{name}: {exc}") from None
        r.settings[f"equations.constants.{name}"] = text

    fields_out = r.value("output", "snapshot_fields")
    if not (isinstance(fields_out, list) and all(isinstance(s, str) for s in fields_out)):
        raise ParseError(f"{path}: output.snapshot_fields must be a list of field names")
    output = OutputConfig(
        dir=r.string("output", "dir"),
        observables=r.string("output", "observables"),
        snapshot_every_steps=r.integer("output", "snapshot_every_steps"),
        snapshot_fields=tuple(fields_out),
    )
    if output.snapshot_every_steps < 0:
        raise ParseError(f"{path}: output.snapshot_every_steps must be >= 0")

    for sec, body in raw.items():
        if not isinstance(body, dict):
            continue
        for key in body:
            if key == "constants" and sec == "equations":
                continue
            if f"{sec}.{key}" not in r.settings:
                raise UnknownKey(f"{path}: {sec}.{key} is not used by this configuration")

    return SimConfig(
        mesh=mesh,
        material=material,
        initial=initial,
        H_applied=tuple(H),
        mode=mode,
        integrator=integrator,
        equations=list(sources),
        constants=constants,
        output=output,
        settings=dict(sorted(r.settings.items())),
    )


def load_config(path) -> SimConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config(text, str(path))
