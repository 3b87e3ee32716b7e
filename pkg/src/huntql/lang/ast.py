"""Query syntax trees.

All nodes are frozen, position-free dataclasses so that two structurally
identical queries compare equal regardless of the text they came from.
Source positions live only in diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, is_dataclass
from enum import Enum
from typing import Optional, Union

from huntql.model import EntityKind, Operation
from huntql.predicate import PredExpr


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" or "warning"
    message: str
    line: int  # 1-based
    col: int  # 1-based
    length: int = 1

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.severity}: {self.message}"

    def to_json(self) -> dict:
        return {
            "severity": self.severity,
            "message": self.message,
            "line": self.line,
            "col": self.col,
            "len": self.length,
        }


@dataclass(frozen=True)
class GlobalClause:
    """Query-wide time window (ms, half-open) and agent restriction."""

    time_lo: Optional[int] = None
    time_hi: Optional[int] = None
    agents: Optional[tuple[int, ...]] = None


@dataclass(frozen=True)
class EntityRef:
    var: str
    kind: EntityKind
    predicate: Optional[PredExpr] = None


@dataclass(frozen=True)
class EventPattern:
    subject: EntityRef
    ops: tuple[Operation, ...]
    object: EntityRef
    alias: Optional[str] = None


@dataclass(frozen=True)
class TemporalConstraint:
    """Event alias `left` strictly precedes alias `right` by start time."""

    left: str
    right: str


@dataclass(frozen=True)
class ReturnItem:
    var: str
    attr: Optional[str] = None  # None: the kind's default attribute


@dataclass(frozen=True)
class AggregateItem:
    func: str  # avg | sum | count | min | max
    event: str  # event alias the aggregate ranges over
    attr: Optional[str]  # None only for count
    name: str  # alias introduced with `as`


@dataclass(frozen=True)
class ReturnClause:
    items: tuple[Union[ReturnItem, AggregateItem], ...]
    distinct: bool = False


@dataclass(frozen=True)
class AggRef:
    """An aggregate alias inside `having`; index k reads k windows back."""

    name: str
    index: int = 0


@dataclass(frozen=True)
class Number:
    value: Union[int, float]


@dataclass(frozen=True)
class BinOp:
    op: str  # || && = != < <= > >= + - * /
    left: "HavingExpr"
    right: "HavingExpr"


HavingExpr = Union[AggRef, Number, BinOp]


@dataclass(frozen=True)
class MultieventQuery:
    globals: GlobalClause
    patterns: tuple[EventPattern, ...]
    temporal: tuple[TemporalConstraint, ...]
    returns: ReturnClause


@dataclass(frozen=True)
class PathEdge:
    arrow: str  # "->" or "<-", pointing from subject to object
    ops: tuple[Operation, ...]

    def __iter__(self):
        yield self.arrow
        yield self.ops


@dataclass(frozen=True)
class DependencyPath:
    direction: str  # forward | backward
    nodes: tuple[EntityRef, ...]
    edges: tuple[PathEdge, ...]  # edge i connects nodes[i] and nodes[i + 1]


@dataclass(frozen=True)
class DependencyQuery:
    globals: GlobalClause
    path: DependencyPath
    returns: ReturnClause


@dataclass(frozen=True)
class AnomalyQuery:
    globals: GlobalClause
    window_ms: int
    step_ms: int
    pattern: EventPattern
    returns: ReturnClause
    group_by: tuple[str, ...]
    having: Optional[HavingExpr]


QueryAst = Union[MultieventQuery, DependencyQuery, AnomalyQuery]

FAMILY_NAMES = {
    MultieventQuery: "multievent",
    DependencyQuery: "dependency",
    AnomalyQuery: "anomaly",
}


def family(query: QueryAst) -> str:
    return FAMILY_NAMES[type(query)]


def ast_to_json(node):
    """Lossless JSON projection of an AST node, types tagged by class name."""
    if is_dataclass(node) and not isinstance(node, type):
        out = {"node": type(node).__name__}
        for f in fields(node):
            out[f.name] = ast_to_json(getattr(node, f.name))
        return out
    if isinstance(node, Enum):
        return node.value
    if isinstance(node, tuple):
        return [ast_to_json(x) for x in node]
    return node
