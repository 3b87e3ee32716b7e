"""Independent reference implementations used to check the real engine.

Everything here is deliberately naive: full scans, tuple enumeration, and
per-window recomputation with no indexes, no planning, and no shared code
paths with the store or executor beyond the domain types.
"""

from __future__ import annotations

from itertools import product

from huntql.model import Entity, Event, default_attribute
from huntql.predicate import ScanPredicate
from huntql.store import EventStore


def naive_scan(store: EventStore, pred: ScanPredicate) -> list[Event]:
    """Filter every event in the store with the predicate, no indexes."""
    out = []
    for ev in store.all_events():
        subj = store.entity(ev.subject_id)
        obj = store.entity(ev.object_id)
        if pred.matches(ev, subj, obj):
            out.append(ev)
    out.sort(key=Event.order_key)
    return out


class MapDedup:
    """Reference for entity dedup: a plain dict keyed by identity tuple."""

    def __init__(self):
        self.by_key: dict[tuple, dict] = {}
        self.order: list[tuple] = []

    def upsert(self, agent_id, kind, attrs, identity_attrs) -> tuple:
        key = (agent_id, kind) + tuple(attrs[a] for a in identity_attrs)
        if key in self.by_key:
            self.by_key[key].update(attrs)
        else:
            self.by_key[key] = dict(attrs)
            self.order.append(key)
        return key


def _entity_value(entity: Entity, attr: str):
    if attr in ("agentid", "agent_id"):
        return entity.agent_id
    return entity.attrs.get(attr)


def _pattern_matches(store, ev, pattern, globals_) -> bool:
    """Evaluate one event pattern against one event, constraints checked
    directly off the AST (no DataQuery synthesis)."""
    from huntql.lang.ast import GlobalClause  # local import: lang built later

    g: GlobalClause = globals_
    if g.time_lo is not None and ev.start_ts < g.time_lo:
        return False
    if g.time_hi is not None and ev.start_ts >= g.time_hi:
        return False
    if g.agents is not None and ev.agent_id not in g.agents:
        return False
    if ev.op not in pattern.ops:
        return False
    subj = store.entity(ev.subject_id)
    obj = store.entity(ev.object_id)
    if subj.kind != pattern.subject.kind or obj.kind != pattern.object.kind:
        return False
    if pattern.subject.predicate is not None and not pattern.subject.predicate.matches(subj):
        return False
    if pattern.object.predicate is not None and not pattern.object.predicate.matches(obj):
        return False
    return True


def _channel_equivalent(store, ea, eb, ev_a, ev_b) -> bool:
    """Shared ip-variable consistency: same entity, or same 4-tuple channel
    seen from two different hosts within 30 s."""
    if ea == eb:
        return True
    a = store.entity(ea)
    b = store.entity(eb)
    if a.agent_id == b.agent_id:
        return False
    four = ("src_ip", "src_port", "dst_ip", "dst_port", "protocol")
    if any(a.attrs.get(k) != b.attrs.get(k) for k in four):
        return False
    return abs(ev_a.start_ts - ev_b.start_ts) <= 30_000


def brute_force_multievent(store: EventStore, ast) -> set[tuple]:
    """Enumerate the cross product of per-pattern match lists and check every
    variable-consistency and temporal constraint post hoc; returns the set of
    projected rows."""
    from huntql.model import EntityKind

    patterns = ast.patterns
    per_pattern = []
    for pat in patterns:
        matches = [ev for ev in store.all_events()
                   if _pattern_matches(store, ev, pat, ast.globals)]
        per_pattern.append(matches)

    rows = set()
    for combo in product(*per_pattern):
        ok = True
        var_binds: dict[str, list[tuple[int, Event]]] = {}
        for pat, ev in zip(patterns, combo):
            for var_pat, eid in ((pat.subject, ev.subject_id), (pat.object, ev.object_id)):
                var_binds.setdefault(var_pat.var, []).append((eid, ev))
        for var, binds in var_binds.items():
            kind = next(p.kind for pat in patterns
                        for p in (pat.subject, pat.object) if p.var == var)
            first_id, first_ev = binds[0]
            for eid, ev in binds[1:]:
                if kind is EntityKind.NET_CHANNEL:
                    if not _channel_equivalent(store, first_id, eid, first_ev, ev):
                        ok = False
                        break
                elif eid != first_id:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        by_alias = {pat.alias: ev for pat, ev in zip(patterns, combo)}
        for tc in ast.temporal:
            if not by_alias[tc.left].start_ts < by_alias[tc.right].start_ts:
                ok = False
                break
        if not ok:
            continue
        var_entity = {}
        for pat, ev in zip(patterns, combo):
            var_entity.setdefault(pat.subject.var, ev.subject_id)
            var_entity.setdefault(pat.object.var, ev.object_id)
        rows.add(project_row(store, ast.returns, var_entity))
    return rows


def project_row(store: EventStore, returns, var_entity: dict[str, int]) -> tuple:
    row = []
    for item in returns.items:
        entity = store.entity(var_entity[item.var])
        attr = item.attr or default_attribute(entity.kind)
        val = entity.agent_id if attr in ("agentid", "agent_id") else entity.attrs.get(attr)
        row.append("" if val is None else val)
    return tuple(row)


def path_walk(store: EventStore, dep_ast) -> set[tuple]:
    """Naive dependency-path oracle: depth-first walk over edge matches with
    node-entity chaining and direction-implied temporal order."""
    from huntql.lang.ast import QueryAst
    from huntql.model import EntityKind

    nodes = dep_ast.path.nodes
    edges = dep_ast.path.edges
    # Edge i connects nodes[i] and nodes[i+1]; orientation decided per arrow.
    edge_matches = []
    for i, (arrow, ops) in enumerate(edges):
        left, right = nodes[i], nodes[i + 1]
        if arrow == "<-":
            subj_pat, obj_pat = right, left
        else:
            subj_pat, obj_pat = left, right
        if subj_pat.kind is not EntityKind.PROCESS:
            subj_pat, obj_pat = obj_pat, subj_pat
        matches = []
        for ev in store.all_events():
            g = dep_ast.globals
            if g.time_lo is not None and ev.start_ts < g.time_lo:
                continue
            if g.time_hi is not None and ev.start_ts >= g.time_hi:
                continue
            if g.agents is not None and ev.agent_id not in g.agents:
                continue
            if ev.op not in ops:
                continue
            subj = store.entity(ev.subject_id)
            obj = store.entity(ev.object_id)
            if subj.kind != subj_pat.kind or obj.kind != obj_pat.kind:
                continue
            if subj_pat.predicate is not None and not subj_pat.predicate.matches(subj):
                continue
            if obj_pat.predicate is not None and not obj_pat.predicate.matches(obj):
                continue
            matches.append((ev, {subj_pat.var: ev.subject_id, obj_pat.var: ev.object_id}))
        edge_matches.append(matches)

    rows = set()

    def walk(i: int, chosen: list, var_first: dict):
        if i == len(edge_matches):
            var_entity = {v: eid for v, (eid, _) in var_first.items()}
            rows.add(project_row(store, dep_ast.returns, var_entity))
            return
        for ev, binds in edge_matches[i]:
            if i > 0:
                prev = chosen[-1]
                if dep_ast.path.direction == "forward" and not prev.start_ts < ev.start_ts:
                    continue
                if dep_ast.path.direction == "backward" and not ev.start_ts < prev.start_ts:
                    continue
            merged = dict(var_first)
            consistent = True
            for var, eid in binds.items():
                if var in merged:
                    first_id, first_ev = merged[var]
                    kind = next(n.kind for n in nodes if n.var == var)
                    if kind is EntityKind.NET_CHANNEL:
                        if not _channel_equivalent(store, first_id, eid, first_ev, ev):
                            consistent = False
                            break
                    elif first_id != eid:
                        consistent = False
                        break
                else:
                    merged[var] = (eid, ev)
            if not consistent:
                continue
            walk(i + 1, chosen + [ev], merged)

    walk(0, [], {})
    return rows


def recompute_windows(store: EventStore, ast) -> set[tuple]:
    """Anomaly oracle: rebuild every window frame from scratch and evaluate
    the having clause per frame, returning the set of flagged result rows
    (return items in order, window_start appended)."""
    from huntql.lang.ast import AggRef, AggregateItem, BinOp, Number

    matched = [ev for ev in store.all_events()
               if _pattern_matches(store, ev, ast.pattern, ast.globals)]
    window, step = ast.window_ms, ast.step_ms
    anchor = ast.globals.time_lo if ast.globals.time_lo is not None else 0
    svar, ovar = ast.pattern.subject.var, ast.pattern.object.var

    # Walk the step grid downward from the last window containing the event.
    frames: dict[tuple, dict[int, list]] = {}
    for ev in matched:
        gkey = tuple(ev.subject_id if v == svar else ev.object_id
                     for v in ast.group_by)
        s = anchor + ((ev.start_ts - anchor) // step) * step
        while s > ev.start_ts - window:
            frames.setdefault(gkey, {}).setdefault(s, []).append(ev)
            s -= step

    aggs = [it for it in ast.returns.items if isinstance(it, AggregateItem)]

    def agg_value(item, events):
        if item.func == "count":
            return len(events)
        vals = [ev.amount if ev.amount is not None else 0 for ev in events]
        return {"sum": sum(vals), "avg": sum(vals) / len(vals),
                "min": min(vals), "max": max(vals)}[item.func]

    values = {gkey: {s: {a.name: agg_value(a, evs) for a in aggs}
                     for s, evs in by_start.items()}
              for gkey, by_start in frames.items()}

    def having(expr, by_start, s):
        missing = [False]

        def go(e):
            if isinstance(e, Number):
                return e.value
            if isinstance(e, AggRef):
                frame = by_start.get(s - e.index * step)
                if frame is None:
                    missing[0] = True
                    return 0.0
                return frame[e.name]
            assert isinstance(e, BinOp)
            l, r = go(e.left), go(e.right)
            return {
                "+": lambda: l + r, "-": lambda: l - r, "*": lambda: l * r,
                "/": lambda: l / r if r else 0.0,
                "<": lambda: l < r, "<=": lambda: l <= r,
                ">": lambda: l > r, ">=": lambda: l >= r,
                "=": lambda: l == r, "!=": lambda: l != r,
                "&&": lambda: bool(l) and bool(r),
                "||": lambda: bool(l) or bool(r),
            }[e.op]()

        result = go(expr)
        return bool(result) and not missing[0]

    group_index = {v: i for i, v in enumerate(ast.group_by)}
    rows = set()
    for gkey, by_start in values.items():
        for s in by_start:
            if ast.having is not None and not having(ast.having, by_start, s):
                continue
            row = []
            for item in ast.returns.items:
                if isinstance(item, AggregateItem):
                    row.append(by_start[s][item.name])
                else:
                    ent = store.entity(gkey[group_index[item.var]])
                    attr = item.attr or default_attribute(ent.kind)
                    val = (ent.agent_id if attr in ("agentid", "agent_id")
                           else ent.attrs.get(attr))
                    row.append("" if val is None else val)
            row.append(s)
            rows.add(tuple(row))
    return rows
