"""Regular cell-centred 3-D mesh and named per-site fields.

Layout contract: site ``(ix, iy, iz)`` lives at linear index
``ix + nx * (iy + ny * iz)``; field data is an ``(N, components)`` C-ordered
array, so components are fastest.  Site centres sit at
``((ix + 0.5) dx, (iy + 0.5) dy, (iz + 0.5) dz)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, Union

import numpy as np

from .errors import DuplicateName, MeshMismatch, ParseError, ShapeMismatch, UnknownField
from .quantities import DIMENSIONLESS, Dimension, format_unit, parse_unit


@dataclass(frozen=True)
class Mesh:
    nx: int
    ny: int = 1
    nz: int = 1
    dx: float = 1.0
    dy: float = 1.0
    dz: float = 1.0

    def __post_init__(self):
        for n in (self.nx, self.ny, self.nz):
            if int(n) != n or n < 1:
                raise ValueError(f"mesh sizes must be positive integers, got {n!r}")
        for h in (self.dx, self.dy, self.dz):
            if not (h > 0 and math.isfinite(h)):
                raise ValueError(f"mesh spacings must be positive and finite, got {h!r}")

    @property
    def shape(self):
        return (self.nx, self.ny, self.nz)

    @property
    def spacing(self):
        return (self.dx, self.dy, self.dz)

    @property
    def n_sites(self) -> int:
        return self.nx * self.ny * self.nz

    def flatten(self, ix: int, iy: int, iz: int) -> int:
        return ix + self.nx * (iy + self.ny * iz)

    def unflatten(self, index: int):
        ix = index % self.nx
        iy = (index // self.nx) % self.ny
        iz = index // (self.nx * self.ny)
        return ix, iy, iz

    def centers(self) -> np.ndarray:
        """(N, 3) array of site-centre coordinates in layout order."""
        idx = np.arange(self.n_sites)
        ix = idx % self.nx
        iy = (idx // self.nx) % self.ny
        iz = idx // (self.nx * self.ny)
        return np.stack(
            [(ix + 0.5) * self.dx, (iy + 0.5) * self.dy, (iz + 0.5) * self.dz], axis=1
        )


def _as_dimension(unit) -> Dimension:
    if isinstance(unit, Dimension):
        return unit
    return parse_unit(unit or "")


@dataclass(eq=False)
class Field:
    name: str
    rank: int
    mesh: Mesh
    unit: Dimension = DIMENSIONLESS
    data: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.rank not in (0, 1):
            raise ValueError(f"field rank must be 0 or 1, got {self.rank!r}")
        self.unit = _as_dimension(self.unit)
        shape = (self.mesh.n_sites, self.components)
        if self.data is None:
            self.data = np.zeros(shape)
        else:
            data = np.ascontiguousarray(self.data, dtype=float)
            if data.size != shape[0] * shape[1]:
                raise ShapeMismatch(f"field {self.name!r} needs {shape[0] * shape[1]} values, got {data.size}")
            self.data = data.reshape(shape)

    @property
    def components(self) -> int:
        return 1 if self.rank == 0 else 3

    def grid(self) -> np.ndarray:
        """View of the data as (nz, ny, nx, components)."""
        m = self.mesh
        return self.data.reshape(m.nz, m.ny, m.nx, self.components)

    def set_from_function(self, f: Callable) -> None:
        set_from_function(self, f)

    def average(self) -> np.ndarray:
        return field_average(self)

    def max_norm(self) -> float:
        return field_max_norm(self)

    def copy(self, name=None) -> Field:
        return Field(name or self.name, self.rank, self.mesh, self.unit, self.data.copy())


class FieldSet:
    """All fields of one simulation; every member shares ``mesh``."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.fields: Dict[str, Field] = {}

    def new(self, name: str, rank: int = 0, unit: Union[str, Dimension] = DIMENSIONLESS) -> Field:
        if name in self.fields:
            raise DuplicateName(f"field {name!r} already exists")
        f = Field(name, rank, self.mesh, unit)
        self.fields[name] = f
        return f

    def add(self, f: Field) -> Field:
        if f.name in self.fields:
            raise DuplicateName(f"field {f.name!r} already exists")
        if f.mesh != self.mesh:
            raise MeshMismatch(f"field {f.name!r} lives on a different mesh")
        self.fields[f.name] = f
        return f

    def __getitem__(self, name: str) -> Field:
        try:
            return self.fields[name]
        except KeyError:
            raise UnknownField(f"no field named {name!r}") from None

    def __contains__(self, name) -> bool:
        return name in self.fields

    def __iter__(self) -> Iterator[str]:
        return iter(self.fields)

    def __len__(self):
        return len(self.fields)


def field_new(fields: FieldSet, name: str, rank: int, unit=DIMENSIONLESS) -> Field:
    return fields.new(name, rank, unit)


def set_from_function(f: Field, func: Callable) -> None:
    """Fill ``f`` with ``func(x, y, z)`` evaluated at every site centre."""
    out = np.empty_like(f.data)
    for i, (x, y, z) in enumerate(f.mesh.centers().tolist()):
        val = func(x, y, z)
        vals = np.atleast_1d(np.asarray(val, dtype=float))
        if vals.ndim != 1 or vals.shape[0] != f.components:
            raise ShapeMismatch(
                f"function for field {f.name!r} returned {vals.size} values, expected {f.components}"
            )
        out[i] = vals
    f.data[...] = out


def field_average(f: Field) -> np.ndarray:
    return f.data.mean(axis=0)


def field_max_norm(f: Field) -> float:
    return float(np.sqrt((f.data * f.data).sum(axis=1)).max())


def write_snapshot(f: Field, path) -> None:
    m = f.mesh
    unit = format_unit(f.unit) or "1"
    header = (
        f"# field={f.name} rank={f.rank} nx={m.nx} ny={m.ny} nz={m.nz} "
        f"dx={m.dx!r} dy={m.dy!r} dz={m.dz!r} unit={unit}\n"
    )
    with open(path, "w") as fh:
        fh.write(header)
        for row in f.data:
            fh.write(" ".join("%.17g" % v for v in row) + "\n")


def read_snapshot(path) -> Field:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("# field="):
            raise ParseError(f"{path}: missing snapshot header", 1, 1)
        head, _, unit = header[2:].rstrip("\n").partition(" unit=")
        meta = dict(item.split("=", 1) for item in head.split())
        mesh = Mesh(
            int(meta["nx"]), int(meta["ny"]), int(meta["nz"]),
            float(meta["dx"]), float(meta["dy"]), float(meta["dz"]),
        )
        data = np.loadtxt(fh, ndmin=2)
    return Field(meta["field"], int(meta["rank"]), mesh, parse_unit(unit), data)
