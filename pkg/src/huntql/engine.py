"""Query execution.

Multievent plans run as a chain of scans joined on shared variables, with
binding propagation narrowing each later scan (id sets, temporal bounds).
Anomaly queries run as one scan followed by sliding-window aggregation.
"""

from __future__ import annotations

import heapq
import os
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Union

from .lang.ast import (
    AggRef,
    AggregateItem,
    AnomalyQuery,
    BinOp,
    DependencyQuery,
    Diagnostic,
    Number,
    QueryAst,
    ReturnClause,
    ast_to_json,
    family,
)
from .lang.parser import parse_with_diagnostics
from .model import EntityKind, Event, default_attribute
from .plan import (
    DataQuery,
    ExecutionPlan,
    compile_dependency,
    partition_subqueries,
    pattern_predicate,
    plan_multievent,
    schedule,
)
from .predicate import ScanPredicate
from .store import EventStore

# Shared-variable id sets larger than this are not pushed into later scans;
# the scan stays predicate-only and the join filters instead.
MAX_BINDING_IDS = 10_000

# Cross-host channel equivalence: same 4-tuple + protocol seen from two
# different hosts within this many ms counts as the same channel.
CHANNEL_WINDOW_MS = 30_000
_CHANNEL_ATTRS = ("src_ip", "src_port", "dst_ip", "dst_port", "protocol")


@dataclass
class PatternStat:
    alias: str
    estimated: float
    scanned: int = 0
    matched: int = 0

    def to_json(self) -> dict:
        return {
            "alias": self.alias,
            "estimated": round(self.estimated, 3),
            "scanned": self.scanned,
            "matched": self.matched,
        }


@dataclass
class ExecStats:
    planning_ms: float = 0.0
    execution_ms: float = 0.0
    per_pattern: list[PatternStat] = field(default_factory=list)

    @property
    def scanned(self) -> int:
        return sum(p.scanned for p in self.per_pattern)

    @property
    def matched(self) -> int:
        return sum(p.matched for p in self.per_pattern)

    def to_json(self) -> dict:
        return {
            "planning_ms": round(self.planning_ms, 3),
            "execution_ms": round(self.execution_ms, 3),
            "per_pattern": [p.to_json() for p in self.per_pattern],
        }


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[tuple]
    stats: ExecStats
    truncated: bool = False

    def to_json(self) -> dict:
        return {
            "columns": list(self.columns),
            "rows": [list(r) for r in self.rows],
            "truncated": self.truncated,
        }

    def to_text(self) -> str:
        cells = [[_cell(v) for v in row] for row in self.rows]
        widths = [
            max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
            for i, h in enumerate(self.columns)
        ]
        lines = [
            " | ".join(h.ljust(w) for h, w in zip(self.columns, widths)).rstrip(),
            "-+-".join("-" * w for w in widths),
        ]
        for r in cells:
            lines.append(" | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        tail = f"({len(self.rows)} row{'s' if len(self.rows) != 1 else ''}"
        tail += ", truncated)" if self.truncated else ")"
        lines.append(tail)
        return "\n".join(lines)


def _cell(value) -> str:
    # str(float) keeps every digit; %g would clip byte counts to 6 figures
    if isinstance(value, float) and value.is_integer():
        return f"{value:.1f}"
    return str(value)


def channel_equivalent(store: EventStore, id_a: int, id_b: int,
                       ev_a: Event, ev_b: Event) -> bool:
    """Same channel entity, or the same 5-field channel identity seen from
    two different hosts within CHANNEL_WINDOW_MS."""
    if id_a == id_b:
        return True
    a = store.entity(id_a)
    b = store.entity(id_b)
    if a.agent_id == b.agent_id:
        return False
    if any(a.attrs.get(k) != b.attrs.get(k) for k in _CHANNEL_ATTRS):
        return False
    return abs(ev_a.start_ts - ev_b.start_ts) <= CHANNEL_WINDOW_MS


class _Binding:
    __slots__ = ("events", "vars", "chans")

    def __init__(self, events: dict, vars_: dict, chans: dict):
        self.events = events
        self.vars = vars_
        self.chans = chans


def _scan(store: EventStore, pred: ScanPredicate, partitioned: bool,
          pool: Optional[ThreadPoolExecutor]) -> tuple[list[Event], int]:
    if not partitioned:
        res = store.scan_stats(pred)
        return res.events, res.examined
    keys = store.candidate_partitions(pred)
    if pool is not None and len(keys) > 1:
        results = list(pool.map(lambda k: store.scan_partition(k, pred), keys))
    else:
        results = [store.scan_partition(k, pred) for k in keys]
    examined = sum(r.examined for r in results)
    streams = [r.events for r in results if r.events]
    if not streams:
        return [], examined
    if len(streams) == 1:
        return streams[0], examined
    return list(heapq.merge(*streams, key=Event.order_key)), examined


def _run_joins(sub: ExecutionPlan, store: EventStore, partitioned: bool,
               pool: Optional[ThreadPoolExecutor],
               stats: dict[str, PatternStat]) -> list[_Binding]:
    rows: list[_Binding] = [_Binding({}, {}, {})]
    bound: set[str] = set()
    for sq in sub.queries:
        if not rows:
            break
        dq = sq.query
        pred = dq.pred
        svar, ovar = dq.subject_var, dq.object_var
        o_chan = ovar in sub.channel_vars
        sample = rows[0]

        if bound:
            if svar in sample.vars:
                ids = {r.vars[svar] for r in rows}
                if len(ids) <= MAX_BINDING_IDS:
                    pred = pred.narrowed(subject_ids=frozenset(ids))
            if not o_chan and ovar in sample.vars:
                ids = {r.vars[ovar] for r in rows}
                if len(ids) <= MAX_BINDING_IDS:
                    pred = pred.narrowed(object_ids=frozenset(ids))
            lo, hi = pred.time_lo, pred.time_hi
            for tc in sub.temporal:
                if tc.left == dq.alias and tc.right in bound:
                    cap = max(r.events[tc.right].start_ts for r in rows)
                    hi = cap if hi is None else min(hi, cap)
                elif tc.right == dq.alias and tc.left in bound:
                    floor_ = min(r.events[tc.left].start_ts for r in rows) + 1
                    lo = floor_ if lo is None else max(lo, floor_)
            if (lo, hi) != (pred.time_lo, pred.time_hi):
                pred = pred.narrowed(time_lo=lo, time_hi=hi)

        matches, examined = _scan(store, pred, partitioned, pool)
        if svar == ovar:
            matches = [ev for ev in matches if ev.subject_id == ev.object_id]
        st = stats[dq.alias]
        st.scanned += examined
        st.matched += len(matches)

        applicable = [
            tc for tc in sub.temporal
            if (tc.left == dq.alias and tc.right in bound)
            or (tc.right == dq.alias and tc.left in bound)
        ]
        shared_plain = [
            v for v in dict.fromkeys((svar, ovar))
            if v not in sub.channel_vars and v in sample.vars
        ]

        new_rows: list[_Binding] = []

        def extend(row: _Binding, ev: Event) -> None:
            if o_chan and ovar in row.chans:
                fid, fev = row.chans[ovar]
                if not channel_equivalent(store, fid, ev.object_id, fev, ev):
                    return
            for tc in applicable:
                lev = ev if tc.left == dq.alias else row.events[tc.left]
                rev = ev if tc.right == dq.alias else row.events[tc.right]
                if not lev.start_ts < rev.start_ts:
                    return
            events = dict(row.events)
            events[dq.alias] = ev
            vars_ = row.vars
            chans = row.chans
            if svar not in vars_:
                vars_ = dict(vars_)
                vars_[svar] = ev.subject_id
            if o_chan:
                if ovar not in chans:
                    chans = dict(chans)
                    chans[ovar] = (ev.object_id, ev)
            elif ovar not in vars_:
                vars_ = dict(vars_)
                vars_[ovar] = ev.object_id
            new_rows.append(_Binding(events, vars_, chans))

        if shared_plain:
            buckets: dict[tuple, list[Event]] = defaultdict(list)
            for ev in matches:
                key = tuple(
                    ev.subject_id if v == svar else ev.object_id
                    for v in shared_plain
                )
                buckets[key].append(ev)
            for row in rows:
                key = tuple(row.vars[v] for v in shared_plain)
                for ev in buckets.get(key, ()):
                    extend(row, ev)
        else:
            for row in rows:
                for ev in matches:
                    extend(row, ev)
        rows = new_rows
        bound.add(dq.alias)
    return rows


def _columns(returns: ReturnClause, kinds: dict[str, EntityKind]) -> list[str]:
    cols = []
    for item in returns.items:
        if isinstance(item, AggregateItem):
            cols.append(item.name)
        else:
            attr = item.attr or default_attribute(kinds[item.var])
            cols.append(f"{item.var}.{attr}")
    return cols


def _project(store: EventStore, returns: ReturnClause,
             textual: list[tuple[int, str, str, str]],
             events: dict[str, Event]) -> tuple:
    # Each variable projects from its first textual occurrence, subject side
    # first, matching how repeated channel variables resolve.
    var_entity: dict[str, int] = {}
    for _, alias, svar, ovar in textual:
        ev = events[alias]
        if svar not in var_entity:
            var_entity[svar] = ev.subject_id
        if ovar not in var_entity:
            var_entity[ovar] = ev.object_id
    row = []
    for item in returns.items:
        ent = store.entity(var_entity[item.var])
        attr = item.attr or default_attribute(ent.kind)
        val = ent.agent_id if attr in ("agent_id", "agentid") else ent.attrs.get(attr)
        row.append("" if val is None else val)
    return tuple(row)


def _dedupe(rows: list[tuple]) -> list[tuple]:
    seen = set()
    out = []
    for r in rows:
        if r not in seen:
            seen.add(r)
            out.append(r)
    return out


def execute_multievent(plan: ExecutionPlan, store: EventStore, *,
                       partitioned: bool = True,
                       max_rows: Optional[int] = None,
                       workers: Optional[int] = None) -> ResultTable:
    t0 = time.perf_counter()
    stats = {
        sq.query.alias: PatternStat(sq.query.alias, sq.estimate)
        for sq in plan.queries
    }
    subplans = partition_subqueries(plan) if partitioned else [plan]

    n_workers = workers if workers is not None else (os.cpu_count() or 1)
    pool: Optional[ThreadPoolExecutor] = None
    try:
        if partitioned and n_workers > 1:
            pool = ThreadPoolExecutor(max_workers=n_workers)
        binding_sets = [
            _run_joins(sub, store, partitioned, pool, stats) for sub in subplans
        ]
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    if len(binding_sets) == 1:
        bindings = binding_sets[0]
    else:
        bindings = []
        for combo in product(*binding_sets):
            events: dict[str, Event] = {}
            for b in combo:
                events.update(b.events)
            bindings.append(_Binding(events, {}, {}))

    textual = sorted(
        (sq.query.index, sq.query.alias, sq.query.subject_var, sq.query.object_var)
        for sq in plan.queries
    )
    # Ascending by the first pattern's (start_ts, seq); remaining patterns
    # break ties so output is deterministic across plan orders.
    order_aliases = [t[1] for t in textual]
    bindings.sort(
        key=lambda b: tuple(b.events[a].order_key() for a in order_aliases)
    )
    rows = [_project(store, plan.returns, textual, b.events) for b in bindings]
    if plan.returns.distinct:
        rows = _dedupe(rows)
    truncated = False
    if max_rows is not None and len(rows) > max_rows:
        rows = rows[:max_rows]
        truncated = True

    exec_ms = (time.perf_counter() - t0) * 1000
    return ResultTable(
        columns=_columns(plan.returns, plan.var_kinds()),
        rows=rows,
        stats=ExecStats(
            execution_ms=exec_ms,
            per_pattern=[stats[a] for a in plan.aliases],
        ),
        truncated=truncated,
    )


def _aggregate(item: AggregateItem, events: list[Event]) -> Union[int, float]:
    if item.func == "count":
        return len(events)
    vals = [ev.amount if ev.amount is not None else 0 for ev in events]
    if item.func == "sum":
        return sum(vals)
    if item.func == "avg":
        return sum(vals) / len(vals)
    if item.func == "min":
        return min(vals)
    if item.func == "max":
        return max(vals)
    raise ValueError(f"unknown aggregate {item.func!r}")


def _eval_having(expr, frames_by_start: dict[int, dict[str, float]],
                 start: int, step_ms: int) -> tuple[Union[float, bool], bool]:
    """Evaluate a having expression for the frame at ``start``.

    Returns (value, missing): ``missing`` is True when any history index
    referenced a frame that does not exist, which suppresses flagging.
    Missing frames contribute 0 to arithmetic; division by zero yields 0.
    """
    missing = False

    def go(e):
        nonlocal missing
        if isinstance(e, Number):
            return e.value
        if isinstance(e, AggRef):
            frame = frames_by_start.get(start - e.index * step_ms)
            if frame is None:
                missing = True
                return 0.0
            return frame[e.name]
        assert isinstance(e, BinOp)
        l = go(e.left)
        r = go(e.right)
        op = e.op
        if op == "+":
            return l + r
        if op == "-":
            return l - r
        if op == "*":
            return l * r
        if op == "/":
            return l / r if r else 0.0
        if op == "<":
            return l < r
        if op == "<=":
            return l <= r
        if op == ">":
            return l > r
        if op == ">=":
            return l >= r
        if op == "=":
            return l == r
        if op == "!=":
            return l != r
        if op == "&&":
            return bool(l) and bool(r)
        if op == "||":
            return bool(l) or bool(r)
        raise ValueError(f"unknown operator {op!r}")

    return go(expr), missing


def execute_anomaly(ast: AnomalyQuery, store: EventStore, *,
                    partitioned: bool = True,
                    max_rows: Optional[int] = None,
                    workers: Optional[int] = None) -> ResultTable:
    t0 = time.perf_counter()
    pattern = ast.pattern
    pred = pattern_predicate(pattern, ast.globals)
    estimate = store.estimate_count(pred)
    planning_ms = (time.perf_counter() - t0) * 1000

    t1 = time.perf_counter()
    n_workers = workers if workers is not None else (os.cpu_count() or 1)
    pool: Optional[ThreadPoolExecutor] = None
    try:
        if partitioned and n_workers > 1:
            pool = ThreadPoolExecutor(max_workers=n_workers)
        matches, examined = _scan(store, pred, partitioned, pool)
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
    stat = PatternStat(pattern.alias, estimate, examined, len(matches))

    svar, ovar = pattern.subject.var, pattern.object.var
    window, step = ast.window_ms, ast.step_ms
    depth = window // step
    anchor = ast.globals.time_lo if ast.globals.time_lo is not None else 0

    frames: dict[tuple, dict[int, list[Event]]] = defaultdict(dict)
    for ev in matches:
        gkey = tuple(
            ev.subject_id if v == svar else ev.object_id for v in ast.group_by
        )
        k_hi = (ev.start_ts - anchor) // step
        for j in range(depth):
            s = anchor + (k_hi - j) * step
            frames[gkey].setdefault(s, []).append(ev)

    aggs = [it for it in ast.returns.items if isinstance(it, AggregateItem)]
    values: dict[tuple, dict[int, dict[str, Union[int, float]]]] = {}
    for gkey, by_start in frames.items():
        values[gkey] = {
            s: {a.name: _aggregate(a, evs) for a in aggs}
            for s, evs in by_start.items()
        }

    flagged: list[tuple[int, tuple]] = []
    for gkey, by_start in values.items():
        for s in by_start:
            if ast.having is not None:
                val, miss = _eval_having(ast.having, by_start, s, step)
                if miss or not val:
                    continue
            flagged.append((s, gkey))
    flagged.sort()

    kinds = {svar: EntityKind.PROCESS, ovar: pattern.object.kind}
    group_index = {v: i for i, v in enumerate(ast.group_by)}
    rows = []
    for s, gkey in flagged:
        row = []
        for item in ast.returns.items:
            if isinstance(item, AggregateItem):
                row.append(values[gkey][s][item.name])
            else:
                ent = store.entity(gkey[group_index[item.var]])
                attr = item.attr or default_attribute(ent.kind)
                val = (
                    ent.agent_id if attr in ("agent_id", "agentid")
                    else ent.attrs.get(attr)
                )
                row.append("" if val is None else val)
        row.append(s)
        rows.append(tuple(row))

    if ast.returns.distinct:
        rows = _dedupe(rows)
    truncated = False
    if max_rows is not None and len(rows) > max_rows:
        rows = rows[:max_rows]
        truncated = True

    exec_ms = (time.perf_counter() - t1) * 1000
    return ResultTable(
        columns=_columns(ast.returns, kinds) + ["window_start"],
        rows=rows,
        stats=ExecStats(
            planning_ms=planning_ms,
            execution_ms=exec_ms,
            per_pattern=[stat],
        ),
        truncated=truncated,
    )


def execute_ast(ast: QueryAst, store: EventStore, *,
                strategy: str = "optimized",
                partitioned: bool = True,
                max_rows: Optional[int] = None,
                workers: Optional[int] = None) -> ResultTable:
    if isinstance(ast, AnomalyQuery):
        return execute_anomaly(
            ast, store,
            partitioned=partitioned, max_rows=max_rows, workers=workers,
        )
    t0 = time.perf_counter()
    if isinstance(ast, DependencyQuery):
        ast = compile_dependency(ast)
    plan = plan_multievent(ast, store, strategy)
    planning_ms = (time.perf_counter() - t0) * 1000
    table = execute_multievent(
        plan, store,
        partitioned=partitioned, max_rows=max_rows, workers=workers,
    )
    table.stats.planning_ms = planning_ms
    return table


def execute(text: str, store: EventStore, *,
            strategy: str = "optimized",
            partitioned: bool = True,
            max_rows: Optional[int] = None,
            workers: Optional[int] = None) -> Union[ResultTable, list[Diagnostic]]:
    """Full pipeline: parse, plan, execute.  Parse failures come back as the
    diagnostic list instead of a table."""
    ast, diags = parse_with_diagnostics(text)
    if ast is None:
        return list(diags)
    return execute_ast(
        ast, store,
        strategy=strategy, partitioned=partitioned,
        max_rows=max_rows, workers=workers,
    )


def explain(text: str, store: EventStore,
            strategy: str = "optimized") -> dict:
    """Plan a query without executing it; returns plan JSON or diagnostics."""
    ast, diags = parse_with_diagnostics(text)
    if ast is None:
        return {"ok": False, "diagnostics": [d.to_json() for d in diags]}
    fam = family(ast)
    if isinstance(ast, AnomalyQuery):
        dq = DataQuery(
            alias=ast.pattern.alias,
            index=0,
            subject_var=ast.pattern.subject.var,
            object_var=ast.pattern.object.var,
            object_kind=ast.pattern.object.kind,
            pred=pattern_predicate(ast.pattern, ast.globals),
        )
        plan = schedule([dq], store, returns=ast.returns, strategy=strategy)
        body = plan.to_json()
        body["window_ms"] = ast.window_ms
        body["step_ms"] = ast.step_ms
        body["group_by"] = list(ast.group_by)
        body["having"] = ast_to_json(ast.having) if ast.having is not None else None
    else:
        mev = compile_dependency(ast) if isinstance(ast, DependencyQuery) else ast
        body = plan_multievent(mev, store, strategy).to_json()
    return {"ok": True, "family": fam, "plan": body}
