"""Embedded append-oriented event store.

Events are deduplicated against an entity catalog and routed into
per-(agent, day) partitions, each kept ordered by (start_ts, seq) with
inverted indexes over operation, entity ids, object kind, and the identity
attributes (exe_name / name / dst_ip).  Batches commit atomically; scans see
a committed-batch-consistent snapshot.

On-disk layout (one directory per store): ``catalog.jsonl`` with one entity
per line, ``part-<agent>-<day>.jsonl`` with one event per line, and a
``MANIFEST`` naming the partitions and their committed line counts.  The
manifest is written last, so it only ever references fully-written data;
lines beyond the manifest counts are discarded on load.
"""

from __future__ import annotations

import heapq
import json
import os
import threading
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from .model import (
    MS_PER_DAY,
    Entity,
    EntityKind,
    Event,
    Operation,
    day_bucket,
    identity_key,
    missing_identity_attrs,
    validate_event,
)
from .predicate import Atom, ScanPredicate, conjunctive_atoms

DEFAULT_SELECTIVITY = 0.1

INDEXED_SUBJECT_ATTRS = frozenset({"exe_name"})
INDEXED_OBJECT_ATTRS = frozenset({"exe_name", "name", "dst_ip"})


class StoreError(Exception):
    pass


class MissingIdentityAttribute(StoreError):
    pass


class UnknownEntityId(StoreError):
    pass


class InvalidEvent(StoreError):
    pass


class OutOfOrderSeq(StoreError):
    pass


class StoreReadOnly(StoreError):
    pass


@dataclass(frozen=True, slots=True)
class PartitionKey:
    agent_id: int
    day: int

    def file_name(self) -> str:
        return f"part-{self.agent_id}-{self.day}.jsonl"


@dataclass(frozen=True, slots=True)
class EventDraft:
    """Event precursor referencing already-upserted entity ids; the store
    assigns the event id at commit."""

    agent_id: int
    subject_id: int
    op: Operation
    object_id: int
    start_ts: int
    end_ts: int
    seq: int
    amount: Optional[int] = None


@dataclass(frozen=True, slots=True)
class StoreStats:
    event_count: int
    entity_count: int
    partition_count: int
    entities_by_kind: dict[str, int]
    agents: list[int]

    def to_json(self) -> dict[str, Any]:
        return {
            "event_count": self.event_count,
            "entity_count": self.entity_count,
            "partition_count": self.partition_count,
            "entities_by_kind": self.entities_by_kind,
            "agents": self.agents,
        }


@dataclass(slots=True)
class ScanResult:
    events: list[Event]
    examined: int


class _Partition:
    """One (agent, day) bucket.  Readers grab ``snap`` once and work against
    that triple; writers only ever extend in place (positions beyond the
    snapshot count are invisible) or swap in fully rebuilt structures."""

    __slots__ = ("key", "snap")

    def __init__(self, key: PartitionKey):
        self.key = key
        # (events list ordered by (start_ts, seq), postings, committed count)
        self.snap: tuple[list[Event], dict, int] = ([], {}, 0)

    @staticmethod
    def _posting_keys(ev: Event, subject: Entity, obj: Entity) -> list[tuple]:
        keys = [
            ("op", ev.op),
            ("kind", obj.kind),
            ("sid", ev.subject_id),
            ("oid", ev.object_id),
        ]
        exe = subject.attrs.get("exe_name")
        if exe is not None:
            keys.append(("sattr", "exe_name", exe))
        for attr in INDEXED_OBJECT_ATTRS:
            val = obj.attrs.get(attr)
            if val is not None:
                keys.append(("oattr", attr, val))
        return keys

    def commit(self, batch: list[Event], resolve) -> None:
        """Append a (start_ts, seq)-sorted batch; writer lock held by caller."""
        events, postings, n = self.snap
        if n and batch and batch[0].order_key() < events[n - 1].order_key():
            merged = sorted(events[:n] + batch, key=Event.order_key)
            new_postings: dict = {}
            for pos, ev in enumerate(merged):
                subj, obj = resolve(ev.subject_id), resolve(ev.object_id)
                for key in self._posting_keys(ev, subj, obj):
                    new_postings.setdefault(key, []).append(pos)
            self.snap = (merged, new_postings, len(merged))
            return
        for ev in batch:
            subj, obj = resolve(ev.subject_id), resolve(ev.object_id)
            pos = len(events)
            events.append(ev)
            for key in self._posting_keys(ev, subj, obj):
                postings.setdefault(key, []).append(pos)
        self.snap = (events, postings, n + len(batch))


def _merge_posting_union(postings: dict, keys: Iterable[tuple]) -> list[int]:
    lists = [postings[k] for k in keys if k in postings]
    if not lists:
        return []
    if len(lists) == 1:
        return lists[0]
    return list(heapq.merge(*lists))


def _sorted_contains(lst: list[int], x: int) -> bool:
    i = bisect_left(lst, x)
    return i < len(lst) and lst[i] == x


class EventStore:
    """Deduplicating, partitioned store with optional file backing.

    Thread-safe for one writer plus concurrent readers; scans never observe
    a partially-committed batch.
    """

    def __init__(self, path: Optional[str | os.PathLike] = None, read_only: bool = False):
        self._lock = threading.RLock()
        self._by_key: dict[tuple, int] = {}
        self._by_id: dict[int, Entity] = {}
        self._partitions: dict[PartitionKey, _Partition] = {}
        self._last_seq: dict[int, int] = {}
        self._next_entity_id = 1
        self._next_event_id = 1
        self._event_count = 0
        self._read_only = read_only
        self._dir: Optional[Path] = Path(path) if path is not None else None
        self._pending_catalog: list[Entity] = []
        self._catalog_lines = 0
        if self._dir is not None:
            manifest = self._dir / "MANIFEST"
            if manifest.exists():
                self._load()
            elif read_only:
                raise StoreError(f"no store at {self._dir}")
            else:
                self._dir.mkdir(parents=True, exist_ok=True)

    # -- entities ----------------------------------------------------------

    def upsert_entity(self, agent_id: int, kind: EntityKind, attrs: Mapping[str, Any]) -> int:
        """Insert or merge an entity; returns its stable id.

        Identity tuples dedup: a second upsert with the same identity returns
        the existing id, merging non-identity attrs last-writer-wins.
        """
        self._check_writable()
        missing = missing_identity_attrs(kind, attrs)
        if missing:
            raise MissingIdentityAttribute(f"{kind.value} entity missing {', '.join(missing)}")
        key = identity_key(agent_id, kind, attrs)
        with self._lock:
            existing_id = self._by_key.get(key)
            if existing_id is not None:
                current = self._by_id[existing_id]
                merged = dict(current.attrs)
                changed = False
                for k, v in attrs.items():
                    if merged.get(k) != v:
                        merged[k] = v
                        changed = True
                if changed:
                    updated = Entity(existing_id, agent_id, kind, merged)
                    self._by_id[existing_id] = updated
                    self._pending_catalog.append(updated)
                return existing_id
            eid = self._next_entity_id
            self._next_entity_id += 1
            entity = Entity(eid, agent_id, kind, dict(attrs))
            self._by_key[key] = eid
            self._by_id[eid] = entity
            self._pending_catalog.append(entity)
            return eid

    def entity(self, entity_id: int) -> Entity:
        try:
            return self._by_id[entity_id]
        except KeyError:
            raise UnknownEntityId(f"entity {entity_id} not in store") from None

    def find_entities(self, kind: Optional[EntityKind] = None) -> list[Entity]:
        return [e for e in self._by_id.values() if kind is None or e.kind is kind]

    # -- events ------------------------------------------------------------

    def last_seq(self, agent_id: int) -> int:
        """Highest committed sequence number for an agent, 0 if none."""
        return self._last_seq.get(agent_id, 0)

    def append_batch(self, drafts: Iterable[EventDraft]) -> int:
        """Validate and commit a batch atomically; on any error nothing is
        visible to subsequent scans."""
        self._check_writable()
        drafts = list(drafts)
        with self._lock:
            seq_cursor = dict(self._last_seq)
            for i, d in enumerate(drafts):
                subj = self._by_id.get(d.subject_id)
                obj = self._by_id.get(d.object_id)
                if subj is None:
                    raise UnknownEntityId(f"batch[{i}]: unknown subject id {d.subject_id}")
                if obj is None:
                    raise UnknownEntityId(f"batch[{i}]: unknown object id {d.object_id}")
                probe = Event(0, d.agent_id, d.subject_id, d.op, d.object_id,
                              d.start_ts, d.end_ts, d.seq, d.amount)
                violations = validate_event(probe, subj, obj)
                if violations:
                    raise InvalidEvent(f"batch[{i}]: " + "; ".join(violations))
                last = seq_cursor.get(d.agent_id)
                if last is not None and d.seq <= last:
                    raise OutOfOrderSeq(
                        f"batch[{i}]: seq {d.seq} not after {last} for agent {d.agent_id}"
                    )
                seq_cursor[d.agent_id] = d.seq

            by_part: dict[PartitionKey, list[Event]] = {}
            new_events: list[Event] = []
            for d in drafts:
                ev = Event(self._next_event_id, d.agent_id, d.subject_id, d.op,
                           d.object_id, d.start_ts, d.end_ts, d.seq, d.amount)
                self._next_event_id += 1
                key = PartitionKey(d.agent_id, day_bucket(d.start_ts))
                by_part.setdefault(key, []).append(ev)
                new_events.append(ev)
            for key, evs in by_part.items():
                evs.sort(key=Event.order_key)
                part = self._partitions.get(key)
                if part is None:
                    part = self._partitions[key] = _Partition(key)
                part.commit(evs, self._by_id.__getitem__)
            self._last_seq = seq_cursor
            self._event_count += len(new_events)
            if self._dir is not None:
                self._persist_batch(by_part)
            return len(new_events)

    # -- scans -------------------------------------------------------------

    def candidate_partitions(self, pred: ScanPredicate) -> list[PartitionKey]:
        day_lo = pred.time_lo // MS_PER_DAY if pred.time_lo is not None else None
        day_hi = (pred.time_hi - 1) // MS_PER_DAY if pred.time_hi is not None else None
        if pred.time_hi is not None and pred.time_lo is not None and pred.time_hi <= pred.time_lo:
            return []
        keys = []
        for key in self._partitions:
            if pred.agents is not None and key.agent_id not in pred.agents:
                continue
            if day_lo is not None and key.day < day_lo:
                continue
            if day_hi is not None and key.day > day_hi:
                continue
            keys.append(key)
        keys.sort(key=lambda k: (k.agent_id, k.day))
        return keys

    def scan_partition(self, key: PartitionKey, pred: ScanPredicate) -> ScanResult:
        part = self._partitions.get(key)
        if part is None:
            return ScanResult([], 0)
        events, postings, n = part.snap
        view = events[:n] if len(events) != n else events

        lo_pos, hi_pos = 0, n
        if pred.time_lo is not None:
            lo_pos = bisect_left(view, pred.time_lo, key=lambda e: e.start_ts)
        if pred.time_hi is not None:
            hi_pos = bisect_left(view, pred.time_hi, key=lambda e: e.start_ts)
        if lo_pos >= hi_pos:
            return ScanResult([], 0)

        sources: list[list[int]] = []
        if pred.ops is not None:
            sources.append(_merge_posting_union(postings, (("op", op) for op in pred.ops)))
        if pred.object_kind is not None:
            sources.append(postings.get(("kind", pred.object_kind), []))
        if pred.subject_ids is not None:
            sources.append(_merge_posting_union(postings, (("sid", i) for i in pred.subject_ids)))
        if pred.object_ids is not None:
            sources.append(_merge_posting_union(postings, (("oid", i) for i in pred.object_ids)))
        for role, expr, indexed in (
            ("sattr", pred.subject, INDEXED_SUBJECT_ATTRS),
            ("oattr", pred.object, INDEXED_OBJECT_ATTRS),
        ):
            atoms = conjunctive_atoms(expr)
            if atoms is None:
                continue
            for atom in atoms:
                if atom.cmp == "=" and atom.attr in indexed:
                    sources.append(postings.get((role, atom.attr, atom.value), []))

        if sources:
            sources.sort(key=len)
            base = sources[0]
            rest = sources[1:]
            start = bisect_left(base, lo_pos)
            stop = bisect_left(base, hi_pos)
            candidates = [
                pos for pos in base[start:stop]
                if all(_sorted_contains(s, pos) for s in rest)
            ]
        else:
            candidates = range(lo_pos, hi_pos)

        resolve = self._by_id.__getitem__
        matched = []
        for pos in candidates:
            if pos >= n:
                continue
            ev = events[pos]
            if pred.matches(ev, resolve(ev.subject_id), resolve(ev.object_id)):
                matched.append(ev)
        return ScanResult(matched, len(candidates))

    def scan_stats(self, pred: ScanPredicate) -> ScanResult:
        """Scan the whole store; events come back ordered by (start_ts, seq)."""
        if pred.agents is not None and not pred.agents:
            return ScanResult([], 0)
        results = [self.scan_partition(k, pred) for k in self.candidate_partitions(pred)]
        examined = sum(r.examined for r in results)
        streams = [r.events for r in results if r.events]
        if len(streams) == 1:
            return ScanResult(streams[0], examined)
        return ScanResult(list(heapq.merge(*streams, key=Event.order_key)), examined)

    def scan(self, pred: ScanPredicate) -> list[Event]:
        return self.scan_stats(pred).events

    # -- estimates ----------------------------------------------------------

    def estimate_count(self, pred: ScanPredicate) -> float:
        """Selectivity-product estimate, exact when every constraint is an
        indexed equality over whole partitions.  Never scans events."""
        if pred.agents is not None and not pred.agents:
            return 0.0
        total = 0.0
        for key in self.candidate_partitions(pred):
            part = self._partitions[key]
            _, postings, n = part.snap
            if n == 0:
                continue
            day_start = key.day * MS_PER_DAY
            lo = max(pred.time_lo, day_start) if pred.time_lo is not None else day_start
            hi = min(pred.time_hi, day_start + MS_PER_DAY) if pred.time_hi is not None \
                else day_start + MS_PER_DAY
            if hi <= lo:
                continue
            frac = (hi - lo) / MS_PER_DAY
            groups, exact = self._index_groups(pred, postings)
            if exact and frac >= 1.0:
                total += self._exact_intersection(groups, n)
                continue
            sel = 1.0
            for source in groups:
                if source is None:
                    sel *= DEFAULT_SELECTIVITY
                else:
                    sel *= min(1.0, sum(len(p) for p in source) / n)
            total += min(float(n), n * frac * sel)
        return total

    def _index_groups(self, pred: ScanPredicate, postings: dict):
        """Constraint groups as posting-list unions; None marks an unindexed
        group.  Second value: True when everything resolved through indexes."""
        groups: list[Optional[list[list[int]]]] = []
        exact = True

        def add_union(keys):
            groups.append([postings[k] for k in keys if k in postings])

        if pred.ops is not None:
            add_union(("op", op) for op in pred.ops)
        if pred.object_kind is not None:
            add_union([("kind", pred.object_kind)])
        if pred.subject_ids is not None:
            add_union(("sid", i) for i in pred.subject_ids)
        if pred.object_ids is not None:
            add_union(("oid", i) for i in pred.object_ids)
        for role, expr, indexed in (
            ("sattr", pred.subject, INDEXED_SUBJECT_ATTRS),
            ("oattr", pred.object, INDEXED_OBJECT_ATTRS),
        ):
            if expr is None:
                continue
            atoms = conjunctive_atoms(expr)
            if atoms is None:
                groups.append(None)
                exact = False
                continue
            for atom in atoms:
                if atom.cmp == "=" and atom.attr in indexed:
                    add_union([(role, atom.attr, atom.value)])
                elif atom.cmp == "=" and atom.attr in ("agentid", "agent_id"):
                    # Agent equality is partition-level; nothing to estimate here.
                    continue
                else:
                    groups.append(None)
                    exact = False
        return groups, exact

    @staticmethod
    def _exact_intersection(groups: list[list[list[int]]], n: int) -> int:
        flats = []
        for source in groups:
            flat = source[0] if len(source) == 1 else list(heapq.merge(*source))
            if not flat:
                return 0
            flats.append(flat)
        if not flats:
            return n
        flats.sort(key=len)
        base, rest = flats[0], flats[1:]
        return sum(1 for pos in base if all(_sorted_contains(s, pos) for s in rest))

    # -- stats & lifecycle ---------------------------------------------------

    def stats_snapshot(self) -> StoreStats:
        with self._lock:
            by_kind: dict[str, int] = {k.value: 0 for k in EntityKind}
            for e in self._by_id.values():
                by_kind[e.kind.value] += 1
            agents = sorted({k.agent_id for k in self._partitions})
            return StoreStats(
                event_count=self._event_count,
                entity_count=len(self._by_id),
                partition_count=len(self._partitions),
                entities_by_kind=by_kind,
                agents=agents,
            )

    def partition_keys(self) -> list[PartitionKey]:
        return sorted(self._partitions, key=lambda k: (k.agent_id, k.day))

    def all_events(self) -> list[Event]:
        return self.scan(ScanPredicate())

    def _check_writable(self) -> None:
        if self._read_only:
            raise StoreReadOnly("store opened read-only")

    # -- persistence ---------------------------------------------------------

    @staticmethod
    def _entity_line(e: Entity) -> str:
        return json.dumps(
            {"id": e.id, "agent_id": e.agent_id, "kind": e.kind.value, "attrs": dict(e.attrs)},
            separators=(",", ":"), sort_keys=False,
        )

    @staticmethod
    def _event_line(ev: Event) -> str:
        rec: dict[str, Any] = {
            "id": ev.id, "agent_id": ev.agent_id, "subject_id": ev.subject_id,
            "op": ev.op.value, "object_id": ev.object_id,
            "start_ts": ev.start_ts, "end_ts": ev.end_ts, "seq": ev.seq,
        }
        if ev.amount is not None:
            rec["amount"] = ev.amount
        return json.dumps(rec, separators=(",", ":"))

    def _persist_batch(self, by_part: dict[PartitionKey, list[Event]]) -> None:
        assert self._dir is not None
        if self._pending_catalog:
            with open(self._dir / "catalog.jsonl", "a", encoding="utf-8") as f:
                for e in self._pending_catalog:
                    f.write(self._entity_line(e) + "\n")
            self._catalog_lines += len(self._pending_catalog)
            self._pending_catalog.clear()
        for key, evs in by_part.items():
            with open(self._dir / key.file_name(), "a", encoding="utf-8") as f:
                for ev in evs:
                    f.write(self._event_line(ev) + "\n")
        self._write_manifest()

    def flush(self) -> None:
        """Persist pending entity upserts (batches already persist themselves)."""
        if self._dir is None:
            return
        with self._lock:
            if self._pending_catalog:
                self._persist_batch({})

    def _write_manifest(self) -> None:
        assert self._dir is not None
        manifest = {
            "version": 1,
            "catalog_lines": self._catalog_lines,
            "next_entity_id": self._next_entity_id,
            "next_event_id": self._next_event_id,
            "last_seq": {str(a): s for a, s in sorted(self._last_seq.items())},
            "partitions": [
                {
                    "file": key.file_name(),
                    "agent_id": key.agent_id,
                    "day_bucket": key.day,
                    "events": part.snap[2],
                }
                for key, part in sorted(self._partitions.items(),
                                        key=lambda kv: (kv[0].agent_id, kv[0].day))
            ],
        }
        tmp = self._dir / "MANIFEST.tmp"
        tmp.write_text(json.dumps(manifest, indent=1), encoding="utf-8")
        os.replace(tmp, self._dir / "MANIFEST")

    def _load(self) -> None:
        assert self._dir is not None
        manifest = json.loads((self._dir / "MANIFEST").read_text(encoding="utf-8"))
        self._catalog_lines = manifest["catalog_lines"]
        self._next_entity_id = manifest["next_entity_id"]
        self._next_event_id = manifest["next_event_id"]
        self._last_seq = {int(a): s for a, s in manifest["last_seq"].items()}
        with open(self._dir / "catalog.jsonl", encoding="utf-8") as f:
            for i, line in enumerate(f):
                if i >= self._catalog_lines:
                    break
                rec = json.loads(line)
                entity = Entity(rec["id"], rec["agent_id"], EntityKind(rec["kind"]), rec["attrs"])
                self._by_id[entity.id] = entity
                self._by_key[entity.identity_key()] = entity.id
        for pinfo in manifest["partitions"]:
            key = PartitionKey(pinfo["agent_id"], pinfo["day_bucket"])
            events: list[Event] = []
            with open(self._dir / pinfo["file"], encoding="utf-8") as f:
                for i, line in enumerate(f):
                    if i >= pinfo["events"]:
                        break
                    rec = json.loads(line)
                    events.append(Event(
                        rec["id"], rec["agent_id"], rec["subject_id"], Operation(rec["op"]),
                        rec["object_id"], rec["start_ts"], rec["end_ts"], rec["seq"],
                        rec.get("amount"),
                    ))
            events.sort(key=Event.order_key)
            part = _Partition(key)
            part.commit(events, self._by_id.__getitem__)
            self._partitions[key] = part
            self._event_count += len(events)
