"""Canonical query text for an AST.

`format_ast` is the inverse of `parse` up to normalization: parsing its
output yields a structurally equal tree. Durations print in the largest unit
that divides them evenly and exact UTC days print as `(at "...")`.
"""

from __future__ import annotations

from datetime import datetime, timezone

from huntql.predicate import And, Atom, Or, PredExpr

from .ast import (
    AggRef,
    AggregateItem,
    AnomalyQuery,
    BinOp,
    DependencyQuery,
    EntityRef,
    EventPattern,
    GlobalClause,
    MultieventQuery,
    Number,
    QueryAst,
    ReturnClause,
    ReturnItem,
)
from .parser import DAY_MS, KIND_LABEL

_UNITS = (("day", 86_400_000), ("hour", 3_600_000), ("min", 60_000),
          ("sec", 1000), ("ms", 1))

_PREC = {"||": 1, "&&": 2, "=": 3, "!=": 3, "<": 3, "<=": 3, ">": 3, ">=": 3,
         "+": 4, "-": 4, "*": 5, "/": 5}


def format_ast(query: QueryAst) -> str:
    lines = _global_lines(query.globals)
    if isinstance(query, MultieventQuery):
        lines += [_pattern(p) for p in query.patterns]
        lines += _tail_lines(query.temporal, query.returns)
    elif isinstance(query, DependencyQuery):
        path = query.path
        parts = [f"{path.direction}: {_entity(path.nodes[0])}"]
        for edge, node in zip(path.edges, path.nodes[1:]):
            ops = " || ".join(op.value for op in edge.ops)
            parts.append(f"{edge.arrow}[{ops}] {_entity(node)}")
        lines.append(" ".join(parts))
        lines += _tail_lines((), query.returns)
    elif isinstance(query, AnomalyQuery):
        lines.append(f"window = {_duration(query.window_ms)}, "
                     f"step = {_duration(query.step_ms)}")
        lines.append(_pattern(query.pattern))
        lines += _tail_lines((), query.returns)
        if query.group_by:
            lines.append("group by " + ", ".join(query.group_by))
        if query.having is not None:
            lines.append("having " + _having(query.having))
    else:
        raise TypeError(f"not a query AST: {type(query).__name__}")
    return "\n".join(lines)


def _global_lines(g: GlobalClause) -> list[str]:
    lines = []
    if g.time_lo is not None or g.time_hi is not None:
        lines.append(_time_clause(g))
    if g.agents is not None:
        if len(g.agents) == 1:
            lines.append(f"agentid = {g.agents[0]}")
        else:
            lines.append("agentid = {" + ", ".join(str(a) for a in g.agents) + "}")
    return lines


def _time_clause(g: GlobalClause) -> str:
    lo, hi = g.time_lo, g.time_hi
    if lo is not None and hi == lo + DAY_MS and lo % DAY_MS == 0:
        return f'(at "{_date(lo)}")'
    if lo is not None and hi is not None:
        return f'(from "{_timestamp(lo)}" to "{_timestamp(hi)}")'
    if lo is not None:
        return f'(from "{_timestamp(lo)}")'
    return f'(to "{_timestamp(hi)}")'


def _date(ms: int) -> str:
    return datetime.fromtimestamp(ms / 1000, tz=timezone.utc).strftime("%m/%d/%Y")


def _timestamp(ms: int) -> str:
    dt = datetime.fromtimestamp(ms // 1000, tz=timezone.utc)
    out = dt.strftime("%m/%d/%Y %H:%M:%S")
    if ms % 1000:
        out += f".{ms % 1000:03d}"
    return out


def _duration(ms: int) -> str:
    for unit, size in _UNITS:
        if ms % size == 0:
            return f"{ms // size} {unit}"
    return f"{ms} ms"


def _pattern(p: EventPattern) -> str:
    ops = " || ".join(op.value for op in p.ops)
    out = f"{_entity(p.subject)} {ops} {_entity(p.object)}"
    if p.alias is not None:
        out += f" as {p.alias}"
    return out


def _entity(ref: EntityRef) -> str:
    out = f"{KIND_LABEL[ref.kind]} {ref.var}"
    if ref.predicate is not None:
        out += f"[{_pred(ref.predicate)}]"
    return out


def _pred(expr: PredExpr, parent: int = 0) -> str:
    if isinstance(expr, Atom):
        return f"{expr.attr} {expr.cmp} {_value(expr.value)}"
    if isinstance(expr, And):
        text = " && ".join(_pred(c, 2) for c in expr.children)
        return f"({text})" if parent > 2 else text
    text = " || ".join(_pred(c, 1) for c in expr.children)
    return f"({text})" if parent > 1 else text


def _value(v) -> str:
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    return repr(v)


def _tail_lines(temporal, returns: ReturnClause) -> list[str]:
    lines = []
    if temporal:
        lines.append("with " + ", ".join(f"{t.left} before {t.right}"
                                         for t in temporal))
    items = ", ".join(_return_item(i) for i in returns.items)
    prefix = "return distinct " if returns.distinct else "return "
    lines.append(prefix + items)
    return lines


def _return_item(item) -> str:
    if isinstance(item, AggregateItem):
        arg = item.event if item.attr is None else f"{item.event}.{item.attr}"
        return f"{item.func}({arg}) as {item.name}"
    if item.attr is None:
        return item.var
    return f"{item.var}.{item.attr}"


def _having(expr, parent: int = 0, right: bool = False) -> str:
    if isinstance(expr, AggRef):
        return expr.name if expr.index == 0 else f"{expr.name}[{expr.index}]"
    if isinstance(expr, Number):
        return repr(expr.value)
    if isinstance(expr, BinOp):
        prec = _PREC[expr.op]
        text = (f"{_having(expr.left, prec, False)} {expr.op} "
                f"{_having(expr.right, prec, True)}")
        # Comparisons are non-associative, so equal precedence always nests.
        if prec < parent or (prec == parent and (right or prec == 3)):
            return f"({text})"
        return text
    raise TypeError(f"not a having expression: {type(expr).__name__}")
