"""JSONL ingestion: per-line validation, batching, and dedup semantics."""

from __future__ import annotations

import json

import pytest

from huntql.ingest import DEFAULT_BATCH_SIZE, IngestReport, ingest_file
from huntql.model import EntityKind, Operation
from huntql.predicate import ScanPredicate
from huntql.store import EventStore


def valid_record(**overrides) -> dict:
    record = {
        "agent_id": 1,
        "ts_start": 1_000_000,
        "ts_end": 1_000_100,
        "seq": 1,
        "op": "write",
        "subject": {"pid": 4211, "exe_name": "osql.exe"},
        "object": {"kind": "file", "name": "backup1.dmp"},
        "amount": 512,
    }
    record.update(overrides)
    return record


def write_jsonl(path, records) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            if isinstance(record, str):
                fh.write(record + "\n")
            else:
                fh.write(json.dumps(record) + "\n")
    return str(path)


def seq_records(n, start=1, **overrides):
    return [
        valid_record(seq=start + i, ts_start=1_000_000 + i * 10, ts_end=1_000_005 + i * 10, **overrides)
        for i in range(n)
    ]


class TestValidLines:
    def test_five_valid_lines_commit(self, tmp_path):
        path = write_jsonl(tmp_path / "raw.jsonl", seq_records(5))
        report = ingest_file(path, EventStore())
        assert report.committed == 5
        assert report.rejected == []

    def test_committed_events_are_scannable(self, tmp_path):
        store = EventStore()
        path = write_jsonl(tmp_path / "raw.jsonl", seq_records(5))
        ingest_file(path, store)
        events = list(store.scan(ScanPredicate(ops=frozenset({Operation.WRITE}))))
        assert len(events) == 5
        subject = store.entity(events[0].subject_id)
        assert subject.kind is EntityKind.PROCESS
        assert subject.attr("exe_name") == "osql.exe"
        assert events[0].amount == 512

    def test_blank_lines_are_skipped(self, tmp_path):
        path = tmp_path / "raw.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(valid_record()) + "\n\n  \n")
            fh.write(json.dumps(valid_record(seq=2)) + "\n")
        report = ingest_file(str(path), EventStore())
        assert report.committed == 2
        assert report.rejected == []

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(OSError):
            ingest_file(str(tmp_path / "absent.jsonl"), EventStore())

    def test_report_json_shape(self, tmp_path):
        path = write_jsonl(tmp_path / "raw.jsonl", [valid_record(), "garbage"])
        report = ingest_file(path, EventStore())
        assert report.to_json() == {
            "committed": 1,
            "rejected": [[2, "invalid JSON: Expecting value"]],
        }


class TestRejects:
    def reject(self, tmp_path, record) -> tuple[int, str]:
        path = write_jsonl(tmp_path / "raw.jsonl", [record])
        report = ingest_file(path, EventStore())
        assert report.committed == 0
        assert len(report.rejected) == 1
        return report.rejected[0]

    def test_unknown_operation(self, tmp_path):
        line, reason = self.reject(tmp_path, valid_record(op="frobnicate", amount=None))
        assert line == 1
        assert "unknown operation" in reason
        assert "frobnicate" in reason

    def test_invalid_json(self, tmp_path):
        _, reason = self.reject(tmp_path, "{not json")
        assert reason.startswith("invalid JSON")

    def test_non_object_line(self, tmp_path):
        _, reason = self.reject(tmp_path, "[1, 2, 3]")
        assert reason == "record must be a JSON object"

    def test_missing_field(self, tmp_path):
        record = valid_record()
        del record["agent_id"]
        _, reason = self.reject(tmp_path, record)
        assert reason == "missing field 'agent_id'"

    def test_non_integer_field(self, tmp_path):
        _, reason = self.reject(tmp_path, valid_record(ts_start="soon"))
        assert reason == "field 'ts_start' must be an integer"

    def test_boolean_is_not_an_integer(self, tmp_path):
        _, reason = self.reject(tmp_path, valid_record(seq=True))
        assert reason == "field 'seq' must be an integer"

    def test_ts_order(self, tmp_path):
        _, reason = self.reject(tmp_path, valid_record(ts_start=2_000, ts_end=1_000))
        assert reason == "ts_start must be <= ts_end"

    def test_unknown_object_kind(self, tmp_path):
        record = valid_record(object={"kind": "socket", "name": "x"}, amount=None, op="read")
        _, reason = self.reject(tmp_path, record)
        assert reason == "unknown object kind 'socket'"

    def test_op_incompatible_with_kind(self, tmp_path):
        record = valid_record(op="start", object={"kind": "file", "name": "x"}, amount=None)
        _, reason = self.reject(tmp_path, record)
        assert reason == "op 'start' incompatible with object kind 'file'"

    def test_amount_on_non_transfer_op(self, tmp_path):
        record = valid_record(
            op="rename", object={"kind": "file", "name": "x"}, amount=12
        )
        _, reason = self.reject(tmp_path, record)
        assert reason == "amount present only for read/write"

    def test_negative_amount(self, tmp_path):
        _, reason = self.reject(tmp_path, valid_record(amount=-5))
        assert reason == "'amount' must be a non-negative integer"

    def test_subject_identity_attrs_required(self, tmp_path):
        _, reason = self.reject(tmp_path, valid_record(subject={"exe_name": "a.exe"}))
        assert reason == "subject missing identity attribute 'pid'"

    def test_object_identity_attrs_required(self, tmp_path):
        record = valid_record(
            op="connect",
            amount=None,
            object={"kind": "ip", "src_ip": "10.0.0.1", "src_port": 1, "dst_ip": "10.0.0.2", "dst_port": 80},
        )
        _, reason = self.reject(tmp_path, record)
        assert reason == "object missing identity attribute 'protocol'"

    def test_seq_must_increase_within_file(self, tmp_path):
        records = [valid_record(seq=5), valid_record(seq=5, ts_start=1_000_200, ts_end=1_000_300)]
        path = write_jsonl(tmp_path / "raw.jsonl", records)
        report = ingest_file(path, EventStore())
        assert report.committed == 1
        assert report.rejected == [(2, "seq 5 not greater than seq 5 for agent 1")]

    def test_rejects_do_not_abort_neighbours(self, tmp_path):
        records = seq_records(5)
        records[2] = valid_record(op="frobnicate", seq=99, amount=None)
        path = write_jsonl(tmp_path / "raw.jsonl", records)
        report = ingest_file(path, EventStore())
        assert report.committed == 4
        assert [line for line, _ in report.rejected] == [3]


class TestDedupAndBatching:
    def test_reingest_doubles_events_not_entities(self, tmp_path):
        store = EventStore()
        path = write_jsonl(tmp_path / "raw.jsonl", seq_records(7))
        ingest_file(path, store)
        before = store.stats_snapshot()
        report = ingest_file(path, store)
        after = store.stats_snapshot()
        assert report.committed == 7
        assert after.entity_count == before.entity_count
        assert after.event_count == before.event_count * 2

    def test_store_seq_continues_across_ingests(self, tmp_path):
        store = EventStore()
        path = write_jsonl(tmp_path / "raw.jsonl", seq_records(3, start=100))
        ingest_file(path, store)
        ingest_file(path, store)
        assert sorted(e.seq for e in store.all_events()) == [1, 2, 3, 4, 5, 6]

    def test_entities_deduped_within_one_file(self, tmp_path):
        store = EventStore()
        path = write_jsonl(tmp_path / "raw.jsonl", seq_records(20))
        ingest_file(path, store)
        # one process, one file
        assert store.stats_snapshot().entity_count == 2

    def test_custom_batch_size_commits_everything(self, tmp_path):
        store = EventStore()
        path = write_jsonl(tmp_path / "raw.jsonl", seq_records(25))
        report = ingest_file(path, store, batch_size=4)
        assert report.committed == 25
        assert store.stats_snapshot().event_count == 25

    def test_batches_persist_incrementally(self, tmp_path):
        """Each full batch is durable on its own: a second ingest run after a
        simulated crash sees the earlier batches."""
        store_dir = tmp_path / "store"
        path = write_jsonl(tmp_path / "raw.jsonl", seq_records(10))
        store = EventStore(store_dir)

        flushed = []
        original = store.append_batch

        def exploding(drafts):
            drafts = list(drafts)
            if flushed:
                raise RuntimeError("simulated crash")
            flushed.append(len(drafts))
            return original(drafts)

        store.append_batch = exploding
        with pytest.raises(RuntimeError):
            ingest_file(path, store, batch_size=6)

        recovered = EventStore(store_dir)
        assert recovered.stats_snapshot().event_count == 6
        report = ingest_file(path, recovered, batch_size=6)
        assert report.committed == 10
        assert recovered.stats_snapshot().event_count == 16

    def test_default_batch_size(self):
        assert DEFAULT_BATCH_SIZE == 1000

    def test_bad_batch_size(self, tmp_path):
        path = write_jsonl(tmp_path / "raw.jsonl", seq_records(1))
        with pytest.raises(ValueError):
            ingest_file(path, EventStore(), batch_size=0)

    def test_partition_spelling_accepted(self, tmp_path):
        """ts_start/ts_end may also arrive under the partition-file names."""
        record = valid_record()
        record["start_ts"] = record.pop("ts_start")
        record["end_ts"] = record.pop("ts_end")
        path = write_jsonl(tmp_path / "raw.jsonl", [record])
        report = ingest_file(path, EventStore())
        assert report.committed == 1
        assert report.rejected == []

    def test_report_dataclass_defaults(self):
        report = IngestReport()
        assert report.committed == 0 and report.rejected == []
