"""Lazy field dependency engine.

Fields are nodes, rules are edges.  Every field carries a version counter;
every rule remembers the input versions it last ran with.  ``request(f)``
walks the ancestors of ``f`` in topological order and re-runs exactly the
rules whose inputs have moved on since their last execution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, TextIO

from .errors import CycleDetected, DuplicateOutputRule, UnknownField, WriteToDerivedField
from .kernels import BoundKernel, run_compiled
from .mesh import FieldSet
from .stencil import LaplacianOp, laplacian_apply

log = logging.getLogger(__name__)


@dataclass
class Rule:
    id: str
    inputs: Sequence[str]
    output: str
    action: Callable[[FieldSet], None]
    last_input_versions: Optional[tuple] = field(default=None, repr=False)
    compute_count: int = 0

    def __post_init__(self):
        self.inputs = tuple(self.inputs)
        if self.output in self.inputs:
            raise CycleDetected([self.output, self.output])


def kernel_rule(rule_id: str, bk: BoundKernel) -> Rule:
    return Rule(rule_id, bk.inputs, bk.output, lambda fs: run_compiled(bk, fs))


def laplacian_rule(rule_id: str, src: str, dst: str, op: LaplacianOp) -> Rule:
    return Rule(rule_id, (src,), dst, lambda fs: laplacian_apply(op, fs[src], fs[dst]))


class DepGraph:
    def __init__(self, fields: FieldSet, trace: Optional[TextIO] = None):
        self.fields = fields
        self.rules: Dict[str, Rule] = {}  # keyed by output field
        self.versions: Dict[str, int] = {}
        self.trace = trace

    def version(self, name: str) -> int:
        self._check_field(name)
        return self.versions.get(name, 0)

    def _check_field(self, name):
        if name not in self.fields:
            raise UnknownField(f"no field named {name!r}")

    def add_rule(self, rule: Rule) -> None:
        self._check_field(rule.output)
        for name in rule.inputs:
            self._check_field(name)
        if rule.output in self.rules:
            raise DuplicateOutputRule(
                f"field {rule.output!r} already produced by rule {self.rules[rule.output].id!r}"
            )
        path = self._path(rule.output, set(rule.inputs))
        if path is not None:
            # path runs output -> ... -> one of the inputs; the new rule closes it
            raise CycleDetected(path + [rule.output])
        self.rules[rule.output] = rule

    def _path(self, start, targets):
        """A dependency path start -> ... -> t for some t in targets, if any."""
        # walk downstream: consumers of each field
        consumers: Dict[str, List[str]] = {}
        for r in self.rules.values():
            for name in r.inputs:
                consumers.setdefault(name, []).append(r.output)
        stack = [(start, [start])]
        seen = set()
        while stack:
            node, path = stack.pop()
            if node in targets:
                return path
            if node in seen:
                continue
            seen.add(node)
            for nxt in sorted(consumers.get(node, ()), reverse=True):
                stack.append((nxt, path + [nxt]))
        return None

    def write(self, name: str) -> None:
        """Notify the engine that source field ``name`` was modified."""
        self._check_field(name)
        if name in self.rules:
            raise WriteToDerivedField(f"field {name!r} is produced by rule {self.rules[name].id!r}")
        self._bump(name)

    def _bump(self, name):
        old = self.versions.get(name, 0)
        self.versions[name] = old + 1
        return old

    def ancestors(self, name: str) -> List[Rule]:
        """Rules needed to produce ``name``, in topological order."""
        order, seen = [], set()

        def visit(n):
            if n in seen:
                return
            seen.add(n)
            rule = self.rules.get(n)
            if rule is None:
                return
            for inp in rule.inputs:
                visit(inp)
            order.append(rule)

        visit(name)
        return order

    def request(self, name: str) -> int:
        """Bring ``name`` up to date; returns the number of rules executed."""
        self._check_field(name)
        executed = 0
        for rule in self.ancestors(name):
            current = tuple(self.versions.get(i, 0) for i in rule.inputs)
            if current == rule.last_input_versions:
                continue
            rule.action(self.fields)
            rule.last_input_versions = current
            rule.compute_count += 1
            old = self._bump(rule.output)
            executed += 1
            if self.trace is not None:
                print(f"exec {rule.id} out={rule.output} v{old}→{old + 1}", file=self.trace)
            log.debug("exec %s out=%s v%d", rule.id, rule.output, old + 1)
        return executed

    def get(self, name: str):
        """Up-to-date data array of ``name``."""
        self.request(name)
        return self.fields[name].data

    def compute_counts(self) -> Dict[str, int]:
        return {r.id: r.compute_count for r in self.rules.values()}
