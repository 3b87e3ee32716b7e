"""Line-delimited JSON ingestion into an event store.

Each line is one raw record:

    {"agent_id": 5, "ts_start": 1522800000000, "ts_end": 1522800000100,
     "seq": 1, "op": "write",
     "subject": {"pid": 4211, "exe_name": "osql.exe"},
     "object": {"kind": "file", "name": "backup1.dmp"},
     "amount": 50000000}

Entities are deduplicated through the store's catalog; events are appended
as-is in batches. A malformed line is rejected with a line-precise reason
and never aborts the lines around it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

from .model import (
    AMOUNT_OPS,
    COMPATIBLE_OPS,
    IDENTITY_ATTRS,
    EntityKind,
    Operation,
)
from .store import EventDraft, EventStore

DEFAULT_BATCH_SIZE = 1000

_INT_FIELDS = ("agent_id", "ts_start", "ts_end", "seq")


@dataclass
class IngestReport:
    """Outcome of one ingest run; rejects are data, not failures."""

    committed: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "committed": self.committed,
            "rejected": [[line, reason] for line, reason in self.rejected],
        }


class _Reject(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _int_field(record: dict, name: str) -> int:
    # ts_start/ts_end also accepted under the partition-file spelling
    value = record.get(name)
    if value is None and name.startswith("ts_"):
        value = record.get(name[3:] + "_ts")
    if value is None:
        raise _Reject(f"missing field {name!r}")
    if isinstance(value, bool) or not isinstance(value, int):
        raise _Reject(f"field {name!r} must be an integer")
    return value


def _parse_record(line: str) -> dict[str, Any]:
    """Validate one line; returns the fields needed to upsert and draft.

    Raises _Reject with a human-readable reason on the first violation.
    """
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise _Reject(f"invalid JSON: {exc.msg}") from None
    if not isinstance(record, dict):
        raise _Reject("record must be a JSON object")

    fields = {name: _int_field(record, name) for name in _INT_FIELDS}
    if fields["ts_start"] > fields["ts_end"]:
        raise _Reject("ts_start must be <= ts_end")

    op_name = record.get("op")
    if op_name is None:
        raise _Reject("missing field 'op'")
    if not isinstance(op_name, str):
        raise _Reject("field 'op' must be a string")
    try:
        op = Operation(op_name)
    except ValueError:
        raise _Reject(f"unknown operation {op_name!r}") from None

    subject = record.get("subject")
    if subject is None:
        raise _Reject("missing field 'subject'")
    if not isinstance(subject, dict):
        raise _Reject("'subject' must be an object")
    obj = record.get("object")
    if obj is None:
        raise _Reject("missing field 'object'")
    if not isinstance(obj, dict):
        raise _Reject("'object' must be an object")

    kind_name = obj.get("kind")
    if kind_name is None:
        raise _Reject("object missing 'kind'")
    try:
        kind = EntityKind(kind_name)
    except ValueError:
        raise _Reject(f"unknown object kind {kind_name!r}") from None
    if op not in COMPATIBLE_OPS[kind]:
        raise _Reject(f"op {op.value!r} incompatible with object kind {kind.value!r}")

    for attr in IDENTITY_ATTRS[EntityKind.PROCESS]:
        if subject.get(attr) in (None, ""):
            raise _Reject(f"subject missing identity attribute {attr!r}")
    for attr in IDENTITY_ATTRS[kind]:
        if obj.get(attr) in (None, ""):
            raise _Reject(f"object missing identity attribute {attr!r}")

    amount = record.get("amount")
    if amount is not None:
        if isinstance(amount, bool) or not isinstance(amount, int) or amount < 0:
            raise _Reject("'amount' must be a non-negative integer")
        if op not in AMOUNT_OPS:
            raise _Reject("amount present only for read/write")

    fields.update(op=op, subject=subject, kind=kind, obj=obj, amount=amount)
    return fields


def ingest_file(
    path: str, store: EventStore, batch_size: int = DEFAULT_BATCH_SIZE
) -> IngestReport:
    """Ingest a JSONL file; commits every `batch_size` valid records.

    Returns the count of committed events plus (line number, reason) pairs
    for rejected lines. Already-committed batches survive a crash; at most
    the trailing partial batch is lost.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    report = IngestReport()
    # raw seq orders records per agent within this file; the store assigns
    # its own continuation seq, so a file can be ingested more than once
    raw_cursors: dict[int, int] = {}
    store_cursors: dict[int, int] = {}
    pending: list[EventDraft] = []

    def flush() -> None:
        if pending:
            report.committed += store.append_batch(pending)
            pending.clear()

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = _parse_record(line)
            except _Reject as exc:
                report.rejected.append((line_no, exc.reason))
                continue
            agent = rec["agent_id"]
            raw_cursor = raw_cursors.get(agent)
            if raw_cursor is not None and rec["seq"] <= raw_cursor:
                report.rejected.append(
                    (line_no, f"seq {rec['seq']} not greater than seq {raw_cursor} for agent {agent}")
                )
                continue
            raw_cursors[agent] = rec["seq"]
            store_seq = store_cursors.get(agent, store.last_seq(agent)) + 1
            store_cursors[agent] = store_seq
            subject_id = store.upsert_entity(agent, EntityKind.PROCESS, rec["subject"])
            obj_attrs = {k: v for k, v in rec["obj"].items() if k != "kind"}
            object_id = store.upsert_entity(agent, rec["kind"], obj_attrs)
            pending.append(
                EventDraft(
                    agent_id=agent,
                    subject_id=subject_id,
                    op=rec["op"],
                    object_id=object_id,
                    start_ts=rec["ts_start"],
                    end_ts=rec["ts_end"],
                    seq=store_seq,
                    amount=rec["amount"],
                )
            )
            if len(pending) >= batch_size:
                flush()
    flush()
    return report
