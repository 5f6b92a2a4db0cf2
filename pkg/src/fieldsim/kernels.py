"""Symbolic expansion of index-notation equations into site-local kernels.

``expand`` enumerates every index assignment over {0, 1, 2}, folds the
Levi-Civita symbols and numeric literals into an exact coefficient, drops
zero terms and merges like terms.  The result (:class:`KernelIR`) is a flat
sum of monomials per output component.  ``bind`` resolves constants and
checks units, and ``run_compiled`` executes the monomial list over all sites.

``run_interpreted`` is the reference backend: it walks the AST with nested
loops over the bound indices and does none of the above simplification.
"""

from __future__ import annotations

import itertools
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .dsl import Const, Eps, Equation, FieldRef, Num, classify_indices, parse
from .errors import (
    AliasedOutput,
    ComponentOutOfRange,
    MeshMismatch,
    UnitMismatch,
    UnknownConstant,
    UnknownField,
)
from .mesh import Field, FieldSet
from .quantities import DIMENSIONLESS, Dimension, Quantity, format_unit


def eps_value(i: int, j: int, k: int) -> int:
    """Levi-Civita symbol on indices 0..2."""
    for n in (i, j, k):
        if n not in (0, 1, 2):
            raise ValueError(f"Levi-Civita indices must be 0, 1 or 2, got {(i, j, k)}")
    return (i - j) * (j - k) * (k - i) // 2


@dataclass(frozen=True)
class Monomial:
    coefficient: float
    const_names: Tuple[str, ...]
    operands: Tuple[Tuple[str, int], ...]

    def sort_key(self):
        return (self.operands, self.const_names)


@dataclass(frozen=True)
class KernelIR:
    output: str
    rank: int
    components: Tuple[Tuple[Monomial, ...], ...]

    def dump(self) -> str:
        return dump_kernel(self)

    @property
    def n_monomials(self) -> int:
        return sum(len(c) for c in self.components)


def _format_coef(c: float) -> str:
    s = repr(float(c))
    return s[:-2] if s.endswith(".0") else s


def dump_kernel(ir: KernelIR) -> str:
    """One line per monomial: ``out[c] += <coef> * <const>... * <field>[<comp>]...``."""
    lines = []
    for c, monos in enumerate(ir.components):
        for mono in monos:
            parts = [_format_coef(mono.coefficient)]
            parts += list(mono.const_names)
            parts += [f"{name}[{comp}]" for name, comp in mono.operands]
            lines.append(f"out[{c}] += " + " * ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def expand(eq: Union[Equation, str]) -> KernelIR:
    if isinstance(eq, str):
        eq = parse(eq)
    classes = classify_indices(eq)
    free = eq.target.indices
    rank = len(free)
    assignments = [(c,) for c in range(3)] if rank else [()]
    components = []
    for free_values in assignments:
        acc: Dict[tuple, Fraction] = {}
        for term, cls in zip(eq.terms, classes):
            for bound_values in itertools.product(range(3), repeat=len(cls.bound)):
                env = dict(zip(free, free_values))
                env.update(zip(cls.bound, bound_values))
                coef = Fraction(term.sign)
                consts, ops = [], []
                for f in term.factors:
                    if isinstance(f, Eps):
                        coef *= eps_value(*(env[i] for i in f.indices))
                    elif isinstance(f, Num):
                        coef *= Fraction(f.value)
                    elif isinstance(f, Const):
                        consts.append(f.name)
                    else:
                        ops.append((f.name, env[f.indices[0]]))
                    if coef == 0:
                        break
                if coef == 0:
                    continue
                key = (tuple(sorted(ops)), tuple(sorted(consts)))
                acc[key] = acc.get(key, Fraction(0)) + coef
        monos = [
            Monomial(float(v), consts, ops)
            for (ops, consts), v in acc.items()
            if v != 0
        ]
        monos.sort(key=Monomial.sort_key)
        components.append(tuple(monos))
    return KernelIR(eq.target.name, rank, tuple(components))


def _as_quantity(value) -> Quantity:
    return value if isinstance(value, Quantity) else Quantity(value)


@dataclass(frozen=True)
class BoundKernel:
    ir: KernelIR
    unit: Dimension
    # per component: ((coefficient, ((field, column), ...)), ...)
    program: Tuple[Tuple[Tuple[float, Tuple[Tuple[str, int], ...]], ...], ...]

    @property
    def output(self) -> str:
        return self.ir.output

    @property
    def inputs(self) -> Tuple[str, ...]:
        names = {name for comp in self.program for _, ops in comp for name, _ in ops}
        return tuple(sorted(names))


def _resolve_symbol(name, constants, fields):
    """A bare name is a constant, or failing that a scalar field."""
    if name in constants:
        q = _as_quantity(constants[name])
        return q.value, q.dim, None
    if name in fields:
        if fields[name].rank == 0:
            return 1.0, fields[name].unit, (name, 0)
        raise ComponentOutOfRange(f"vector field {name!r} used without an index")
    raise UnknownConstant(f"constant {name!r} is not defined")


def _field_operand(name, comp, fields):
    if name not in fields:
        raise UnknownField(f"kernel reads unknown field {name!r}")
    f = fields[name]
    if comp is not None and f.rank == 0:
        raise ComponentOutOfRange(f"scalar field {name!r} indexed with component {comp}")
    return f.unit


def _check_output(name, rank, unit, fields, operand_names):
    if name in operand_names:
        raise AliasedOutput(f"field {name!r} is both kernel input and output")
    if name in fields:
        out = fields[name]
        if out.rank != rank:
            raise ComponentOutOfRange(
                f"output {name!r} has rank {out.rank}, equation assigns rank {rank}"
            )
        if unit is not None and out.unit != unit:
            raise UnitMismatch(
                f"output {name!r} has unit '{format_unit(out.unit)}', "
                f"equation yields '{format_unit(unit)}'"
            )


def bind(ir: KernelIR, constants: Mapping[str, Quantity], fields: FieldSet) -> BoundKernel:
    unit: Optional[Dimension] = None
    program = []
    operand_names = set()
    for c, monos in enumerate(ir.components):
        comp_prog = []
        for mono in monos:
            coef = mono.coefficient
            dim = DIMENSIONLESS
            ops = []
            for name in mono.const_names:
                value, d, operand = _resolve_symbol(name, constants, fields)
                coef *= value
                dim = dim * d
                if operand:
                    ops.append(operand)
            for name, comp in mono.operands:
                dim = dim * _field_operand(name, comp, fields)
                ops.append((name, comp))
            if unit is None:
                unit = dim
            elif dim != unit:
                raise UnitMismatch(
                    f"monomial {mono} of {ir.output}[{c}] has unit '{format_unit(dim)}', "
                    f"expected '{format_unit(unit)}'"
                )
            operand_names.update(n for n, _ in ops)
            comp_prog.append((coef, tuple(ops)))
        program.append(tuple(comp_prog))
    _check_output(ir.output, ir.rank, unit, fields, operand_names)
    if unit is None:
        unit = fields[ir.output].unit if ir.output in fields else DIMENSIONLESS
    return BoundKernel(ir, unit, tuple(program))


def _output_field(name, fields, output) -> Field:
    if output is None:
        return fields[name]
    if isinstance(output, str):
        return fields[output]
    return output


def _eval_component(comp_prog, columns, lo, hi, out):
    """Sum the monomials of one component over sites [lo, hi) into ``out``."""
    n = hi - lo
    out[...] = 0.0
    tmp = np.empty(n)
    for coef, ops in comp_prog:
        if not ops:
            out += coef
            continue
        np.multiply(columns[ops[0]][lo:hi], coef, out=tmp)
        for op in ops[1:]:
            np.multiply(tmp, columns[op][lo:hi], out=tmp)
        out += tmp


def run_compiled(bk: BoundKernel, fields: FieldSet, output=None, workers: int = 1) -> None:
    """Execute a bound kernel; sites may be split across ``workers`` threads."""
    out = _output_field(bk.output, fields, output)
    if out.mesh != fields.mesh:
        raise MeshMismatch(f"output {out.name!r} is on a different mesh")
    columns = {}
    for comp_prog in bk.program:
        for _, ops in comp_prog:
            for name, comp in ops:
                if (name, comp) not in columns:
                    columns[(name, comp)] = fields[name].data[:, comp]
    n = fields.mesh.n_sites
    # accumulate into a scratch buffer so a failure never leaves partial output
    result = np.empty((n, len(bk.program)))

    def work(lo, hi):
        for c, comp_prog in enumerate(bk.program):
            col = np.empty(hi - lo)
            _eval_component(comp_prog, columns, lo, hi, col)
            result[lo:hi, c] = col

    if workers <= 1 or n < 2 * workers:
        work(0, n)
    else:
        bounds = np.linspace(0, n, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, bounds[:-1], bounds[1:]))
    out.data[...] = result


def run_interpreted(eq: Union[Equation, str], constants: Mapping[str, Quantity], fields: FieldSet, output=None) -> None:
    """Evaluate ``eq`` straight from the AST, summing over bound indices."""
    if isinstance(eq, str):
        eq = parse(eq)
    classes = classify_indices(eq)
    n = fields.mesh.n_sites
    rank = len(eq.target.indices)

    unit = None
    names = set()
    for term in eq.terms:
        dim = DIMENSIONLESS
        for f in term.factors:
            if isinstance(f, Const):
                _, d, operand = _resolve_symbol(f.name, constants, fields)
                dim = dim * d
                if operand:
                    names.add(f.name)
            elif isinstance(f, FieldRef):
                dim = dim * _field_operand(f.name, f.indices[0], fields)
                names.add(f.name)
        if unit is None:
            unit = dim
        elif dim != unit:
            raise UnitMismatch(f"terms of {eq.target.name!r} have units '{format_unit(unit)}' and '{format_unit(dim)}'")
    _check_output(eq.target.name, rank, unit, fields, names)
    out = _output_field(eq.target.name, fields, output)

    def symbol(name):
        if name in constants:
            return _as_quantity(constants[name]).value
        return fields[name].data[:, 0]

    result = np.zeros((n, 3 if rank else 1))
    for c in range(3 if rank else 1):
        total = np.zeros(n)
        for term, cls in zip(eq.terms, classes):
            for bound_values in itertools.product(range(3), repeat=len(cls.bound)):
                env = dict(zip(cls.free, (c,)))
                env.update(zip(cls.bound, bound_values))
                prod = np.full(n, float(term.sign))
                for f in term.factors:
                    if isinstance(f, Num):
                        prod *= f.value
                    elif isinstance(f, Const):
                        prod *= symbol(f.name)
                    elif isinstance(f, Eps):
                        prod *= eps_value(*(env[i] for i in f.indices))
                    else:
                        prod *= fields[f.name].data[:, env[f.indices[0]]]
                total += prod
        result[:, c] = total
    out.data[...] = result


@dataclass(frozen=True)
class BenchmarkResult:
    interpreted_ns_per_site: float
    compiled_ns_per_site: float

    @property
    def speedup(self) -> float:
        return self.interpreted_ns_per_site / self.compiled_ns_per_site


def benchmark_backends(eq, constants, fields: FieldSet, repetitions: int = 5, min_sites: int = 10_000) -> BenchmarkResult:
    """Median wall time per site of both backends on the same workload.

    Field contents are whatever the caller put there; use
    :func:`fill_random` with a fixed seed for a reproducible workload.
    """
    if isinstance(eq, str):
        eq = parse(eq)
    n = fields.mesh.n_sites
    if n < min_sites:
        raise ValueError(f"benchmark needs at least {min_sites} sites for stable timing, got {n}")
    bk = bind(expand(eq), constants, fields)
    out = fields[eq.target.name]

    def timed(fn):
        samples = []
        for _ in range(repetitions):
            t0 = time.perf_counter_ns()
            fn()
            samples.append(time.perf_counter_ns() - t0)
        return statistics.median(samples) / n

    # warm-up so neither side pays first-call costs
    run_interpreted(eq, constants, fields, out)
    run_compiled(bk, fields, out)
    t_interp = timed(lambda: run_interpreted(eq, constants, fields, out))
    t_comp = timed(lambda: run_compiled(bk, fields, out))
    return BenchmarkResult(t_interp, t_comp)


def fill_random(fields: FieldSet, names, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    for name in names:
        f = fields[name]
        f.data[...] = rng.uniform(-1.0, 1.0, size=f.data.shape)
