"""Spatiotemporal trigger formulas.

An atom compares one coordinate of the attacker unit ``e`` against the same
coordinate of the backdoored agent ``b`` at a given lag inside the window::

    (e.feat  <op>  b.feat)  <relation>  C

Lag 0 is the newest position in the window. Formulas combine atoms with
``And``, ``Or`` and ``Ite`` (if-then-else). A :class:`TriggerSpec` pairs a
formula with the attacker's action sequence, oldest first, where ``None``
matches any action.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

from blastlab.errors import ContractError

FEATURES = {"x": 0, "y": 1}
OPERATORS = ("+", "-", "*", "/")
RELATIONS = (">", ">=", "<", "<=", "==", "!=")
EQ_TOL = 1e-9

_ARITH = {"+": operator.add, "-": operator.sub, "*": operator.mul}
_ALIASES = {"×": "*", "÷": "/", "≥": ">=", "≤": "<=", "≡": "==", "≠": "!=", "−": "-"}


@dataclass(frozen=True)
class SpatialConstraint:
    offset: int
    feature: str
    op: str
    relation: str
    constant: float

    def __post_init__(self):
        object.__setattr__(self, "op", _ALIASES.get(self.op, self.op))
        object.__setattr__(self, "relation", _ALIASES.get(self.relation, self.relation))
        object.__setattr__(self, "constant", float(self.constant))
        if self.feature not in FEATURES:
            raise ContractError(f"feature must be x or y, got {self.feature!r}")
        if self.op not in OPERATORS:
            raise ContractError(f"unknown operator {self.op!r}")
        if self.relation not in RELATIONS:
            raise ContractError(f"unknown relation {self.relation!r}")
        if int(self.offset) != self.offset or self.offset < 0:
            raise ContractError(f"offset must be a non-negative integer, got {self.offset}")


def eval_atom(c: SpatialConstraint, pos_b, pos_e) -> bool:
    k = FEATURES[c.feature]
    e, b = float(pos_e[k]), float(pos_b[k])
    if c.op == "/":
        if b == 0.0:
            return False
        v = e / b
    else:
        v = _ARITH[c.op](e, b)
    rel = c.relation
    if rel == ">":
        return v > c.constant
    if rel == ">=":
        return v >= c.constant
    if rel == "<":
        return v < c.constant
    if rel == "<=":
        return v <= c.constant
    if rel == "==":
        return abs(v - c.constant) <= EQ_TOL
    return abs(v - c.constant) > EQ_TOL


@dataclass(frozen=True)
class Atom:
    constraint: SpatialConstraint


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Ite:
    cond: "Formula"
    then: "Formula"
    other: "Formula"


Formula = Union[Atom, And, Or, Ite]


def atom(offset: int, feature: str, op: str, relation: str, constant: float) -> Atom:
    return Atom(SpatialConstraint(offset, feature, op, relation, constant))


def conj(*parts: Formula) -> Formula:
    if not parts:
        raise ContractError("conjunction of nothing")
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


def disj(*parts: Formula) -> Formula:
    if not parts:
        raise ContractError("disjunction of nothing")
    out = parts[0]
    for p in parts[1:]:
        out = Or(out, p)
    return out


def interval(offset: int, feature: str, lo: float, hi: float, op: str = "-") -> Formula:
    """``lo < e.feat op b.feat < hi`` as a conjunction of two atoms."""
    return And(atom(offset, feature, op, ">", lo), atom(offset, feature, op, "<", hi))


def iter_atoms(f: Formula) -> Iterator[SpatialConstraint]:
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, Atom):
            yield node.constraint
        elif isinstance(node, (And, Or)):
            stack.extend((node.right, node.left))
        elif isinstance(node, Ite):
            stack.extend((node.other, node.then, node.cond))
        else:
            raise ContractError(f"not a formula node: {node!r}")


def evaluate(f: Formula, truth) -> bool:
    """Evaluate ``f`` given a callable mapping each constraint to its truth value."""
    if isinstance(f, Atom):
        return truth(f.constraint)
    if isinstance(f, And):
        return evaluate(f.left, truth) and evaluate(f.right, truth)
    if isinstance(f, Or):
        return evaluate(f.left, truth) or evaluate(f.right, truth)
    if isinstance(f, Ite):
        return evaluate(f.then, truth) if evaluate(f.cond, truth) else evaluate(f.other, truth)
    raise ContractError(f"not a formula node: {f!r}")


def eval_formula(f: Formula, window: Sequence) -> bool:
    """``window`` holds ``(pos_b, pos_e)`` pairs, oldest first, newest last."""
    n = len(window)
    for c in iter_atoms(f):
        if c.offset >= n:
            raise ContractError(f"atom offset {c.offset} outside a window of {n}")
    return evaluate(f, lambda c: eval_atom(c, *window[n - 1 - c.offset]))


@dataclass(frozen=True)
class TriggerSpec:
    formula: Formula
    actions: tuple
    window: int
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(None if a is None else int(a) for a in self.actions))
        if self.window < 1:
            raise ContractError("trigger window must be at least 1")
        if len(self.actions) != self.window:
            raise ContractError(f"action sequence has {len(self.actions)} entries, window is {self.window}")
        for c in iter_atoms(self.formula):
            if c.offset >= self.window:
                raise ContractError(f"atom offset {c.offset} does not fit a window of {self.window}")

    def first_constraints(self) -> list[SpatialConstraint]:
        """Atoms on the oldest lag present in the formula (used to pick an attacker unit)."""
        atoms = list(iter_atoms(self.formula))
        oldest = max(c.offset for c in atoms)
        return [c for c in atoms if c.offset == oldest]

    @property
    def control_length(self) -> int:
        """Number of leading action entries the attacker must drive (trailing Nones dropped)."""
        n = len(self.actions)
        while n and self.actions[n - 1] is None:
            n -= 1
        return n
