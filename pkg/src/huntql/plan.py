"""Query planning.

Splits a multievent query into one DataQuery per pattern with every
syntactically-attached constraint pushed down, orders them by estimated match
count (pruning power), and records the join structure the executor needs for
binding propagation.  Dependency queries compile to multievent form first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .lang.ast import (
    DependencyQuery,
    EventPattern,
    GlobalClause,
    MultieventQuery,
    ReturnClause,
    TemporalConstraint,
    ast_to_json,
)
from .model import CROSS_HOST_OPS, EntityKind
from .predicate import PredExpr, ScanPredicate, conjunctive_atoms
from .store import EventStore, PartitionKey

STRATEGIES = ("optimized", "textual", "reversed")


class UncompilablePath(Exception):
    """A dependency edge has no process endpoint to act as the subject."""


@dataclass(frozen=True)
class DataQuery:
    """One pattern's scan: who binds where, plus the pushed-down predicate."""

    alias: str
    index: int
    subject_var: str
    object_var: str
    object_kind: EntityKind
    pred: ScanPredicate

    @property
    def binding_slots(self) -> tuple[tuple[str, str], ...]:
        return ((self.subject_var, "subject"), (self.object_var, "object"))


@dataclass(frozen=True)
class JoinEdge:
    """Two scheduled patterns share ``var``; ``left`` runs before ``right``."""

    var: str
    left: str
    right: str
    channel: bool


@dataclass(frozen=True)
class ScheduledQuery:
    query: DataQuery
    estimate: float
    partitions: tuple[PartitionKey, ...]


@dataclass(frozen=True)
class ExecutionPlan:
    queries: tuple[ScheduledQuery, ...]
    joins: tuple[JoinEdge, ...]
    temporal: tuple[TemporalConstraint, ...]
    returns: ReturnClause
    channel_vars: frozenset[str]
    strategy: str
    first_alias: str

    @property
    def aliases(self) -> tuple[str, ...]:
        return tuple(sq.query.alias for sq in self.queries)

    def var_kinds(self) -> dict[str, EntityKind]:
        kinds: dict[str, EntityKind] = {}
        for sq in self.queries:
            kinds.setdefault(sq.query.subject_var, EntityKind.PROCESS)
            kinds.setdefault(sq.query.object_var, sq.query.object_kind)
        return kinds

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "first_alias": self.first_alias,
            "queries": [_scheduled_json(sq) for sq in self.queries],
            "joins": [
                {"var": j.var, "left": j.left, "right": j.right, "channel": j.channel}
                for j in self.joins
            ],
            "temporal": [[tc.left, tc.right] for tc in self.temporal],
            "returns": ast_to_json(self.returns),
        }


def _scheduled_json(sq: ScheduledQuery) -> dict:
    dq, pred = sq.query, sq.query.pred
    return {
        "alias": dq.alias,
        "estimate": round(sq.estimate, 3),
        "subject_var": dq.subject_var,
        "object_var": dq.object_var,
        "object_kind": dq.object_kind.value,
        "ops": sorted(op.value for op in pred.ops) if pred.ops is not None else None,
        "agents": sorted(pred.agents) if pred.agents is not None else None,
        "time": [pred.time_lo, pred.time_hi],
        "partitions": [
            {"agent_id": k.agent_id, "day": k.day} for k in sq.partitions
        ],
    }


def _agent_equalities(expr: Optional[PredExpr]) -> Optional[frozenset[int]]:
    """Agent ids a pure conjunction pins with agent_id equality, else None."""
    atoms = conjunctive_atoms(expr)
    if atoms is None:
        return None
    pinned: Optional[frozenset[int]] = None
    for atom in atoms:
        if atom.attr in ("agent_id", "agentid") and atom.cmp == "=":
            ids = frozenset({atom.value})
            pinned = ids if pinned is None else pinned & ids
    return pinned


def pattern_predicate(pattern: EventPattern, globals_: GlobalClause) -> ScanPredicate:
    """Push the pattern's own constraints and the global clause into one
    ScanPredicate.  Subject agent equalities narrow the event agent set
    (events live on the subject's agent); object-side ones only when no op
    in the pattern can cross hosts."""
    agents = frozenset(globals_.agents) if globals_.agents is not None else None
    object_local = frozenset(pattern.ops).isdisjoint(CROSS_HOST_OPS)
    for expr, usable in (
        (pattern.subject.predicate, True),
        (pattern.object.predicate, object_local),
    ):
        if not usable:
            continue
        pinned = _agent_equalities(expr)
        if pinned is not None:
            agents = pinned if agents is None else agents & pinned
    return ScanPredicate(
        time_lo=globals_.time_lo,
        time_hi=globals_.time_hi,
        agents=agents,
        ops=frozenset(pattern.ops),
        object_kind=pattern.object.kind,
        subject=pattern.subject.predicate,
        object=pattern.object.predicate,
    )


def synthesize_data_queries(ast: MultieventQuery) -> list[DataQuery]:
    out = []
    for i, pat in enumerate(ast.patterns):
        out.append(
            DataQuery(
                alias=pat.alias,
                index=i,
                subject_var=pat.subject.var,
                object_var=pat.object.var,
                object_kind=pat.object.kind,
                pred=pattern_predicate(pat, ast.globals),
            )
        )
    return out


def compile_dependency(ast: DependencyQuery) -> MultieventQuery:
    """Rewrite a path query as a multievent query: one pattern per edge, with
    the direction encoded as a chain of before constraints."""
    nodes, edges = ast.path.nodes, ast.path.edges
    taken = {n.var for n in nodes}
    base = "edge"
    while any(f"{base}{i}" in taken for i in range(len(edges))):
        base = "_" + base

    patterns = []
    for i, (arrow, ops) in enumerate(edges):
        left, right = nodes[i], nodes[i + 1]
        subj, obj = (right, left) if arrow == "<-" else (left, right)
        if subj.kind is not EntityKind.PROCESS:
            subj, obj = obj, subj
        if subj.kind is not EntityKind.PROCESS:
            raise UncompilablePath(
                f"edge {i + 1} has no process endpoint to act as the subject"
            )
        patterns.append(
            EventPattern(
                subject=subj,
                ops=tuple(sorted(set(ops), key=lambda op: op.value)),
                object=obj,
                alias=f"{base}{i}",
            )
        )

    aliases = [p.alias for p in patterns]
    if ast.path.direction == "forward":
        temporal = [TemporalConstraint(a, b) for a, b in zip(aliases, aliases[1:])]
    else:
        temporal = [TemporalConstraint(b, a) for a, b in zip(aliases, aliases[1:])]

    return MultieventQuery(
        globals=ast.globals,
        patterns=tuple(patterns),
        temporal=tuple(temporal),
        returns=ast.returns,
    )


def schedule(
    data_queries: list[DataQuery],
    store: EventStore,
    *,
    temporal: tuple[TemporalConstraint, ...] = (),
    returns: Optional[ReturnClause] = None,
    strategy: str = "optimized",
) -> ExecutionPlan:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if not data_queries:
        raise ValueError("cannot schedule an empty query list")

    estimates = {dq.alias: store.estimate_count(dq.pred) for dq in data_queries}
    ordered = sorted(data_queries, key=lambda dq: dq.index)
    first_alias = ordered[0].alias
    if strategy == "optimized":
        ordered.sort(key=lambda dq: estimates[dq.alias])
    elif strategy == "reversed":
        ordered.reverse()

    kinds: dict[str, EntityKind] = {}
    for dq in data_queries:
        kinds.setdefault(dq.subject_var, EntityKind.PROCESS)
        kinds.setdefault(dq.object_var, dq.object_kind)
    channel_vars = frozenset(
        v for v, k in kinds.items() if k is EntityKind.NET_CHANNEL
    )

    joins = []
    for i, earlier in enumerate(ordered):
        left_vars = {earlier.subject_var, earlier.object_var}
        for later in ordered[i + 1:]:
            for var in (later.subject_var, later.object_var):
                if var in left_vars:
                    joins.append(
                        JoinEdge(
                            var=var,
                            left=earlier.alias,
                            right=later.alias,
                            channel=var in channel_vars,
                        )
                    )

    scheduled = tuple(
        ScheduledQuery(
            query=dq,
            estimate=estimates[dq.alias],
            partitions=tuple(store.candidate_partitions(dq.pred)),
        )
        for dq in ordered
    )
    return ExecutionPlan(
        queries=scheduled,
        joins=tuple(joins),
        temporal=tuple(temporal),
        returns=returns if returns is not None else ReturnClause(items=()),
        channel_vars=channel_vars,
        strategy=strategy,
        first_alias=first_alias,
    )


def plan_multievent(
    ast: MultieventQuery, store: EventStore, strategy: str = "optimized"
) -> ExecutionPlan:
    return schedule(
        synthesize_data_queries(ast),
        store,
        temporal=ast.temporal,
        returns=ast.returns,
        strategy=strategy,
    )


def partition_subqueries(plan: ExecutionPlan) -> list[ExecutionPlan]:
    """Split a plan into fully independent per-agent sub-plans.

    Possible only when every pattern pins exactly one agent and no join or
    temporal constraint crosses agents; anything else returns the plan whole.
    """
    if len(plan.queries) <= 1:
        return [plan]
    agent_of: dict[str, int] = {}
    for sq in plan.queries:
        agents = sq.query.pred.agents
        if agents is None or len(agents) != 1:
            return [plan]
        agent_of[sq.query.alias] = next(iter(agents))
    if len(set(agent_of.values())) <= 1:
        return [plan]
    for j in plan.joins:
        if agent_of[j.left] != agent_of[j.right]:
            return [plan]
    for tc in plan.temporal:
        if agent_of[tc.left] != agent_of[tc.right]:
            return [plan]

    subplans = []
    for agent in sorted(set(agent_of.values())):
        queries = tuple(
            sq for sq in plan.queries if agent_of[sq.query.alias] == agent
        )
        aliases = {sq.query.alias for sq in queries}
        local_vars = {
            v for sq in queries
            for v in (sq.query.subject_var, sq.query.object_var)
        }
        first = min(queries, key=lambda sq: sq.query.index).query.alias
        subplans.append(
            ExecutionPlan(
                queries=queries,
                joins=tuple(j for j in plan.joins if j.left in aliases),
                temporal=tuple(
                    tc for tc in plan.temporal if tc.left in aliases
                ),
                returns=ReturnClause(
                    items=tuple(
                        it for it in plan.returns.items
                        if getattr(it, "var", None) in local_vars
                    ),
                    distinct=plan.returns.distinct,
                ),
                channel_vars=plan.channel_vars & frozenset(local_vars),
                strategy=plan.strategy,
                first_alias=first,
            )
        )
    return subplans
