"""Domain vocabulary: system entities, events, operations, and their typing rules.

Everything here is an immutable value; the rest of the package shares these
types freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional

MS_PER_DAY = 86_400_000


class EntityKind(str, Enum):
    FILE = "file"
    PROCESS = "process"
    NET_CHANNEL = "ip"


class Operation(str, Enum):
    READ = "read"
    WRITE = "write"
    EXECUTE = "execute"
    START = "start"
    END = "end"
    RENAME = "rename"
    DELETE = "delete"
    CONNECT = "connect"
    ACCEPT = "accept"


class EventType(str, Enum):
    FILE_EVENT = "file_event"
    PROCESS_EVENT = "process_event"
    NETWORK_EVENT = "network_event"


# Operations admitted per *object* kind.  Network read/write is legal
# (data transfer over a channel); process objects cover start/end/connect.
COMPATIBLE_OPS: dict[EntityKind, frozenset[Operation]] = {
    EntityKind.FILE: frozenset(
        {Operation.READ, Operation.WRITE, Operation.EXECUTE, Operation.RENAME, Operation.DELETE}
    ),
    EntityKind.PROCESS: frozenset({Operation.START, Operation.END, Operation.CONNECT}),
    EntityKind.NET_CHANNEL: frozenset(
        {Operation.READ, Operation.WRITE, Operation.CONNECT, Operation.ACCEPT}
    ),
}

# Ops whose object may legitimately live on a different host than the event.
CROSS_HOST_OPS: frozenset[Operation] = frozenset({Operation.CONNECT, Operation.ACCEPT})

# Ops that carry a byte amount (data-transfer semantics).
AMOUNT_OPS: frozenset[Operation] = frozenset({Operation.READ, Operation.WRITE})

# Attribute a bare variable expands to in queries and projections.
DEFAULT_ATTRIBUTE: dict[EntityKind, str] = {
    EntityKind.PROCESS: "exe_name",
    EntityKind.FILE: "name",
    EntityKind.NET_CHANNEL: "dst_ip",
}

# Attributes that identify an entity for deduplication, beyond agent_id.
IDENTITY_ATTRS: dict[EntityKind, tuple[str, ...]] = {
    EntityKind.FILE: ("name",),
    EntityKind.PROCESS: ("pid", "exe_name"),
    EntityKind.NET_CHANNEL: ("src_ip", "src_port", "dst_ip", "dst_port", "protocol"),
}

# All attributes a query predicate may reference, per kind (plus agentid).
KNOWN_ATTRS: dict[EntityKind, frozenset[str]] = {
    EntityKind.FILE: frozenset({"name"}),
    EntityKind.PROCESS: frozenset({"pid", "exe_name", "user", "cmd"}),
    EntityKind.NET_CHANNEL: frozenset({"src_ip", "src_port", "dst_ip", "dst_port", "protocol"}),
}


@dataclass(frozen=True, slots=True)
class Entity:
    """A deduplicated system entity (one file, process, or network channel)."""

    id: int
    agent_id: int
    kind: EntityKind
    attrs: Mapping[str, Any] = field(default_factory=dict)

    def attr(self, name: str) -> Any:
        if name == "agentid" or name == "agent_id":
            return self.agent_id
        return self.attrs.get(name)

    def identity_key(self) -> tuple:
        return identity_key(self.agent_id, self.kind, self.attrs)


@dataclass(frozen=True, slots=True)
class Event:
    """One SVO interaction record: subject process acts on an object entity."""

    id: int
    agent_id: int
    subject_id: int
    op: Operation
    object_id: int
    start_ts: int
    end_ts: int
    seq: int
    amount: Optional[int] = None

    def order_key(self) -> tuple[int, int, int, int]:
        return (self.start_ts, self.seq, self.agent_id, self.id)


def identity_key(agent_id: int, kind: EntityKind, attrs: Mapping[str, Any]) -> tuple:
    """Deduplication key for an entity; raises KeyError if an identity attr is absent."""
    parts = tuple(attrs[a] for a in IDENTITY_ATTRS[kind])
    return (agent_id, kind, *parts)


def missing_identity_attrs(kind: EntityKind, attrs: Mapping[str, Any]) -> list[str]:
    return [a for a in IDENTITY_ATTRS[kind] if attrs.get(a) in (None, "")]


def event_type(object_kind: EntityKind) -> EventType:
    """Classify an event by its object's kind."""
    if object_kind is EntityKind.FILE:
        return EventType.FILE_EVENT
    if object_kind is EntityKind.PROCESS:
        return EventType.PROCESS_EVENT
    return EventType.NETWORK_EVENT


def default_attribute(kind: EntityKind) -> str:
    return DEFAULT_ATTRIBUTE[kind]


def day_bucket(ts: int) -> int:
    return ts // MS_PER_DAY


def validate_event(event: Event, subject: Entity, object_: Entity) -> list[str]:
    """Return every violated invariant; an empty list means the event is valid.

    Violations are data, not failures: callers decide whether to reject.
    """
    violations: list[str] = []
    if subject.kind is not EntityKind.PROCESS:
        violations.append("subject must be Process")
    if event.op not in COMPATIBLE_OPS[object_.kind]:
        violations.append(
            f"op {event.op.value!r} incompatible with object kind {object_.kind.value!r}"
        )
    if event.start_ts > event.end_ts:
        violations.append("start_ts must be <= end_ts")
    if event.amount is not None and event.op not in AMOUNT_OPS:
        violations.append("amount present only for read/write")
    if event.amount is not None and event.amount < 0:
        violations.append("amount must be unsigned")
    if event.agent_id != subject.agent_id:
        violations.append("event agent must match subject agent")
    if event.agent_id != object_.agent_id and event.op not in CROSS_HOST_OPS:
        violations.append("object on another agent only for connect/accept")
    return violations
