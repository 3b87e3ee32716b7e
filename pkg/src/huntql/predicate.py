"""Attribute predicates and scan specifications served by the event store.

A scan predicate combines event-level constraints (time range, agent set,
operation set, object kind, id sets) with attribute predicate trees over the
subject and object entities.  Trees are And/Or nodes over comparison atoms;
``like`` uses ``%`` as the only wildcard.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Optional, Union

from .model import Entity, EntityKind, Operation

COMPARATORS = ("=", "!=", "<", "<=", ">", ">=", "like")


@dataclass(frozen=True, slots=True)
class Atom:
    attr: str
    cmp: str
    value: Any

    def matches(self, entity: Entity) -> bool:
        actual = entity.attr(self.attr)
        return compare(actual, self.cmp, self.value)


@dataclass(frozen=True)
class And:
    children: tuple["PredExpr", ...]

    def matches(self, entity: Entity) -> bool:
        return all(c.matches(entity) for c in self.children)


@dataclass(frozen=True)
class Or:
    children: tuple["PredExpr", ...]

    def matches(self, entity: Entity) -> bool:
        return any(c.matches(entity) for c in self.children)


PredExpr = Union[Atom, And, Or]


@lru_cache(maxsize=1024)
def _like_regex(pattern: str) -> re.Pattern:
    parts = pattern.split("%")
    return re.compile("^" + ".*".join(re.escape(p) for p in parts) + "$", re.DOTALL)


def like_match(text: str, pattern: str) -> bool:
    """Case-sensitive match with ``%`` as a multi-character wildcard."""
    return _like_regex(pattern).match(text) is not None


def compare(actual: Any, cmp: str, literal: Any) -> bool:
    if cmp == "like":
        if actual is None:
            return False
        return like_match(str(actual), str(literal))
    if actual is None:
        # Absent attribute only satisfies explicit inequality.
        return cmp == "!="
    a, b = actual, literal
    if isinstance(a, bool) or isinstance(b, bool):
        a, b = str(a), str(b)
    elif isinstance(a, (int, float)) != isinstance(b, (int, float)):
        a, b = str(a), str(b)
    if cmp == "=":
        return a == b
    if cmp == "!=":
        return a != b
    if cmp == "<":
        return a < b
    if cmp == "<=":
        return a <= b
    if cmp == ">":
        return a > b
    if cmp == ">=":
        return a >= b
    raise ValueError(f"unknown comparator {cmp!r}")


def and_all(exprs: list[PredExpr]) -> Optional[PredExpr]:
    exprs = [e for e in exprs if e is not None]
    if not exprs:
        return None
    if len(exprs) == 1:
        return exprs[0]
    return And(tuple(exprs))


def atoms_of(expr: Optional[PredExpr]) -> list[Atom]:
    if expr is None:
        return []
    if isinstance(expr, Atom):
        return [expr]
    out: list[Atom] = []
    for c in expr.children:
        out.extend(atoms_of(c))
    return out


def conjunctive_atoms(expr: Optional[PredExpr]) -> Optional[list[Atom]]:
    """Atoms of a pure conjunction, or None if the tree contains any Or."""
    if expr is None:
        return []
    if isinstance(expr, Atom):
        return [expr]
    if isinstance(expr, Or):
        return None
    out: list[Atom] = []
    for c in expr.children:
        sub = conjunctive_atoms(c)
        if sub is None:
            return None
        out.extend(sub)
    return out


@dataclass(frozen=True)
class ScanPredicate:
    """Full specification of one store scan.

    ``time_lo``/``time_hi`` bound ``start_ts`` as a half-open interval.
    ``agents=None`` means all agents; an empty set matches nothing.
    """

    time_lo: Optional[int] = None
    time_hi: Optional[int] = None
    agents: Optional[frozenset[int]] = None
    ops: Optional[frozenset[Operation]] = None
    object_kind: Optional[EntityKind] = None
    subject: Optional[PredExpr] = None
    object: Optional[PredExpr] = None
    subject_ids: Optional[frozenset[int]] = None
    object_ids: Optional[frozenset[int]] = None

    def narrowed(self, **changes) -> "ScanPredicate":
        return replace(self, **changes)

    def matches(self, event, subject: Entity, object_: Entity) -> bool:
        if self.time_lo is not None and event.start_ts < self.time_lo:
            return False
        if self.time_hi is not None and event.start_ts >= self.time_hi:
            return False
        if self.agents is not None and event.agent_id not in self.agents:
            return False
        if self.ops is not None and event.op not in self.ops:
            return False
        if self.object_kind is not None and object_.kind is not self.object_kind:
            return False
        if self.subject_ids is not None and event.subject_id not in self.subject_ids:
            return False
        if self.object_ids is not None and event.object_id not in self.object_ids:
            return False
        if self.subject is not None and not self.subject.matches(subject):
            return False
        if self.object is not None and not self.object.matches(object_):
            return False
        return True


def expr_to_json(expr: Optional[PredExpr]) -> Any:
    if expr is None:
        return None
    if isinstance(expr, Atom):
        return {"attr": expr.attr, "cmp": expr.cmp, "value": expr.value}
    tag = "and" if isinstance(expr, And) else "or"
    return {tag: [expr_to_json(c) for c in expr.children]}
