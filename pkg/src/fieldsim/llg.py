"""Micromagnetics on top of the generic field engine.

The effective field is assembled from three dependency rules (exchange via
the Laplacian stencil, uniaxial anisotropy and the sum with the applied
field, both as DSL kernels) and the Landau-Lifshitz-Gilbert right-hand side
is the expanded ``dmdt`` kernel below.  Default LLG coefficients follow the
Landau-Lifshitz form ``c1 = -gamma/(1+alpha^2)``, ``c2 = alpha * c1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .deps import DepGraph, Rule, kernel_rule
from .errors import MeshMismatch, UnitMismatch
from .kernels import bind, expand
from .mesh import Field, FieldSet, Mesh, field_max_norm
from .quantities import SI, Quantity, parse_unit
from .stencil import LaplacianOp

MU0 = SI(4e-7 * math.pi, "kg m A^-2 s^-2")
GAMMA_DEFAULT = SI(2.211e5, "m/(A*s)")

DMDT_SOURCE = """
  dmdt(i) <-   c1 * eps(i, j, k) * m(j) * H(k)
             + c2 * eps(i, j, k) * m(j)
             * eps(k, p, q) * m(p) * H(q)"""

ANISOTROPY_SOURCE = "Hani(i) <- ka * e(i) * e(j) * m(j)"
EFFECTIVE_FIELD_SOURCE = "H(i) <- Happ(i) + Hexch(i) + Hani(i)"

_UNITS = {
    "Ms": "A/m",
    "A_ex": "J/m",
    "K_u": "J/m^3",
    "gamma": "m/(A*s)",
    "c1": "m/(A*s)",
    "c2": "m/(A*s)",
}


def _check_unit(name, q):
    expected = parse_unit(_UNITS[name])
    if not isinstance(q, Quantity) or q.dim != expected:
        got = q.unit if isinstance(q, Quantity) else type(q).__name__
        raise UnitMismatch(f"{name} must be in {_UNITS[name]}, got '{got}'")


@dataclass(frozen=True)
class LlgCoefficients:
    c1: Quantity
    c2: Quantity


@dataclass(frozen=True)
class MaterialParams:
    Ms: Quantity
    A_ex: Quantity = SI(0.0, "J/m")
    K_u: Quantity = SI(0.0, "J/m^3")
    easy_axis: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    alpha: float = 0.5
    gamma: Quantity = GAMMA_DEFAULT
    c1: Optional[Quantity] = None
    c2: Optional[Quantity] = None

    def __post_init__(self):
        for name in ("Ms", "A_ex", "K_u", "gamma"):
            _check_unit(name, getattr(self, name))
        for name in ("c1", "c2"):
            if getattr(self, name) is not None:
                _check_unit(name, getattr(self, name))
        if not self.Ms.value > 0:
            raise ValueError(f"Ms must be positive, got {self.Ms}")
        if self.A_ex.value < 0:
            raise ValueError(f"A_ex must be non-negative, got {self.A_ex}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        e = tuple(float(v) for v in self.easy_axis)
        if len(e) != 3:
            raise ValueError("easy_axis needs 3 components")
        if self.K_u.value != 0 and abs(math.sqrt(sum(v * v for v in e)) - 1.0) > 1e-12:
            raise ValueError(f"easy_axis must be a unit vector, got {e}")
        object.__setattr__(self, "easy_axis", e)

    def coefficients(self) -> LlgCoefficients:
        gamma_p = self.gamma / (1.0 + self.alpha ** 2)
        c1 = self.c1 if self.c1 is not None else -gamma_p
        c2 = self.c2 if self.c2 is not None else -self.alpha * gamma_p
        return LlgCoefficients(c1, c2)

    @property
    def exchange_prefactor(self) -> Quantity:
        """2 A / (mu0 Ms), multiplies the Laplacian of m."""
        return 2.0 * self.A_ex / (MU0 * self.Ms)

    @property
    def anisotropy_prefactor(self) -> Quantity:
        """2 K / (mu0 Ms), in A/m."""
        return 2.0 * self.K_u / (MU0 * self.Ms)


def _normalized(data):
    norms = np.sqrt((data * data).sum(axis=1))
    if np.any(norms == 0):
        raise ValueError("magnetization has zero-length sites")
    return data / norms[:, None]


class Micromagnet:
    """Fields, rules and LLG right-hand side for one magnet.

    ``H_applied`` is a uniform vector in A/m (plain floats or a
    ``(values, Dimension)`` pair) or a rank-1 Field on the same mesh.
    """

    def __init__(self, mesh: Mesh, params: MaterialParams, H_applied=(0.0, 0.0, 0.0), trace: Optional[TextIO] = None):
        self.mesh = mesh
        self.params = params
        fs = self.fields = FieldSet(mesh)
        a_per_m = parse_unit("A/m")
        self.m = fs.new("m", 1)
        self.e = fs.new("e", 1)
        self.e.data[...] = params.easy_axis
        fs.new("Happ", 1, a_per_m)
        fs.new("Hexch", 1, a_per_m)
        fs.new("Hani", 1, a_per_m)
        fs.new("H", 1, a_per_m)
        fs.new("dmdt", 1, "s^-1")
        self.set_applied_field(H_applied)

        coeffs = params.coefficients()
        self.constants = {
            "c1": coeffs.c1,
            "c2": coeffs.c2,
            "ka": params.anisotropy_prefactor,
            "kex": params.exchange_prefactor,
        }
        self.graph = DepGraph(fs, trace)
        self.kernels = {}

        laplacian = LaplacianOp(mesh)
        kex = params.exchange_prefactor
        lap_unit = self.m.unit / parse_unit("m^2")
        if kex.dim * lap_unit != a_per_m:
            raise UnitMismatch(f"exchange prefactor has unit '{kex.unit}'")
        kex_value = kex.value
        hexch = fs["Hexch"]

        def exchange(fields):
            hexch.grid()[...] = kex_value * laplacian(fields["m"].grid())

        self.graph.add_rule(Rule("exchange", ("m",), "Hexch", exchange))
        self.add_equation(ANISOTROPY_SOURCE, rule_id="anisotropy")
        self.add_equation(EFFECTIVE_FIELD_SOURCE, rule_id="effective-field")
        self.add_equation(DMDT_SOURCE, rule_id="llg")

    def add_equation(self, source: str, constants: Optional[Mapping[str, Quantity]] = None, rule_id: Optional[str] = None):
        """Register a DSL equation as a lazily evaluated rule.

        The target field is created if needed, with the unit the equation
        yields.  Returns the bound kernel.
        """
        consts = dict(self.constants)
        consts.update(constants or {})
        ir = expand(source)
        bk = bind(ir, consts, self.fields)
        if ir.output not in self.fields:
            self.fields.new(ir.output, ir.rank, bk.unit)
        rule_id = rule_id or ir.output
        self.graph.add_rule(kernel_rule(rule_id, bk))
        self.kernels[rule_id] = bk
        return bk

    def set_applied_field(self, H) -> None:
        happ = self.fields["Happ"]
        if isinstance(H, Field):
            if H.mesh != self.mesh:
                raise MeshMismatch("applied field is on a different mesh")
            if H.unit != happ.unit:
                raise UnitMismatch(f"applied field must be in A/m, got '{H.unit}'")
            happ.data[...] = H.data
        else:
            if isinstance(H, tuple) and len(H) == 2 and not np.isscalar(H[1]):
                values, dim = H
                if dim != happ.unit:
                    raise UnitMismatch(f"applied field must be in A/m, got '{dim}'")
                H = values
            happ.data[...] = np.asarray(H, dtype=float)
        if hasattr(self, "graph"):
            self.graph.write("Happ")

    def set_m(self, values: Union[Sequence[float], np.ndarray, Callable]) -> None:
        """Set the magnetization (normalized per site) from a vector, array or f(x, y, z)."""
        if callable(values):
            self.m.set_from_function(values)
            data = self.m.data
        else:
            data = np.broadcast_to(np.asarray(values, dtype=float), self.m.data.shape)
        self.m.data[...] = _normalized(data)
        self.graph.write("m")

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        """dm/dt for the flat state ``y``; routes through the dependency engine."""
        self.m.data.reshape(-1)[...] = y
        self.graph.write("m")
        return self.graph.get("dmdt").reshape(-1).copy()

    def effective_field(self) -> np.ndarray:
        return self.graph.get("H")

    def dmdt(self) -> np.ndarray:
        return self.graph.get("dmdt")

    def energy(self) -> float:
        """Zeeman + anisotropy + exchange energy in J (anisotropy up to a constant)."""
        self.graph.request("H")
        m = self.m.data
        f = self.fields
        mu0_ms = (MU0 * self.params.Ms).value
        internal = f["Hexch"].data + f["Hani"].data
        density = -mu0_ms * ((m * f["Happ"].data).sum(axis=1) + 0.5 * (m * internal).sum(axis=1))
        return float(density.sum() * self.mesh.dx * self.mesh.dy * self.mesh.dz)


def build_effective_field(params: MaterialParams, m: Field, H_applied) -> Field:
    if m.rank != 1 or not m.unit.dimensionless:
        raise UnitMismatch("m must be a dimensionless rank-1 field")
    mag = Micromagnet(m.mesh, params, H_applied)
    mag.m.data[...] = m.data
    mag.graph.write("m")
    mag.graph.request("H")
    return mag.fields["H"].copy("H_eff")


def llg_rhs(params: MaterialParams, m: Field, H_applied) -> Field:
    if m.rank != 1 or not m.unit.dimensionless:
        raise UnitMismatch("m must be a dimensionless rank-1 field")
    mag = Micromagnet(m.mesh, params, H_applied)
    mag.m.data[...] = m.data
    mag.graph.write("m")
    mag.graph.request("dmdt")
    return mag.fields["dmdt"].copy()


def max_torque(dmdt: Field) -> float:
    return field_max_norm(dmdt)
