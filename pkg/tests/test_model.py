"""Domain type rules: event typing, default attributes, event validation."""

import pytest

from huntql.model import (
    COMPATIBLE_OPS,
    DEFAULT_ATTRIBUTE,
    Entity,
    EntityKind,
    Event,
    EventType,
    Operation,
    default_attribute,
    event_type,
    validate_event,
)


def test_event_type_mapping():
    assert event_type(EntityKind.FILE) is EventType.FILE_EVENT
    assert event_type(EntityKind.PROCESS) is EventType.PROCESS_EVENT
    assert event_type(EntityKind.NET_CHANNEL) is EventType.NETWORK_EVENT


def test_default_attribute_table():
    assert default_attribute(EntityKind.PROCESS) == "exe_name"
    assert default_attribute(EntityKind.FILE) == "name"
    assert default_attribute(EntityKind.NET_CHANNEL) == "dst_ip"


def test_default_attribute_is_bijective_over_kinds():
    values = {default_attribute(k) for k in EntityKind}
    assert len(values) == len(list(EntityKind))
    assert set(DEFAULT_ATTRIBUTE) == set(EntityKind)


def _proc(eid=1, agent=1, **attrs):
    attrs.setdefault("pid", 42)
    attrs.setdefault("exe_name", "osql.exe")
    return Entity(eid, agent, EntityKind.PROCESS, attrs)


def _file(eid=2, agent=1, name="backup1.dmp"):
    return Entity(eid, agent, EntityKind.FILE, {"name": name})


def _chan(eid=3, agent=1, **attrs):
    base = {"src_ip": "10.0.0.5", "src_port": 50001, "dst_ip": "203.0.113.129",
            "dst_port": 443, "protocol": "tcp"}
    base.update(attrs)
    return Entity(eid, agent, EntityKind.NET_CHANNEL, base)


def _event(subject, obj, op, start=1000, end=2000, amount=None, agent=None):
    return Event(
        id=1,
        agent_id=agent if agent is not None else subject.agent_id,
        subject_id=subject.id,
        op=op,
        object_id=obj.id,
        start_ts=start,
        end_ts=end,
        seq=1,
        amount=amount,
    )


def test_valid_process_read_file():
    subj, obj = _proc(), _file()
    assert validate_event(_event(subj, obj, Operation.READ), subj, obj) == []


def test_subject_must_be_process():
    subj, obj = _file(eid=9), _file()
    violations = validate_event(_event(subj, obj, Operation.READ), subj, obj)
    assert any("subject must be Process" in v for v in violations)


def test_op_incompatible_with_object_kind():
    subj, obj = _proc(), _chan()
    violations = validate_event(_event(subj, obj, Operation.EXECUTE), subj, obj)
    assert any("incompatible" in v for v in violations)


def test_timestamps_must_be_ordered():
    subj, obj = _proc(), _file()
    violations = validate_event(_event(subj, obj, Operation.WRITE, start=5, end=4), subj, obj)
    assert violations == ["start_ts must be <= end_ts"]


def test_amount_only_on_read_write():
    subj, obj = _proc(), _file()
    assert validate_event(_event(subj, obj, Operation.WRITE, amount=10), subj, obj) == []
    violations = validate_event(_event(subj, obj, Operation.DELETE, amount=10), subj, obj)
    assert violations == ["amount present only for read/write"]


def test_cross_agent_object_requires_connect_or_accept():
    subj = _proc(agent=1)
    remote = Entity(7, 2, EntityKind.PROCESS, {"pid": 9, "exe_name": "smbd"})
    bad = validate_event(_event(subj, remote, Operation.START), subj, remote)
    assert any("another agent" in v for v in bad)
    ok = validate_event(_event(subj, remote, Operation.CONNECT), subj, remote)
    assert ok == []


@pytest.mark.parametrize("kind,allowed", [
    (EntityKind.FILE, {Operation.READ, Operation.WRITE, Operation.EXECUTE,
                       Operation.RENAME, Operation.DELETE}),
    (EntityKind.PROCESS, {Operation.START, Operation.END, Operation.CONNECT}),
    (EntityKind.NET_CHANNEL, {Operation.READ, Operation.WRITE, Operation.CONNECT,
                              Operation.ACCEPT}),
])
def test_compatibility_table(kind, allowed):
    assert COMPATIBLE_OPS[kind] == allowed


def test_network_read_write_is_legal():
    subj, chan = _proc(), _chan()
    assert validate_event(_event(subj, chan, Operation.WRITE, amount=4096), subj, chan) == []
    assert validate_event(_event(subj, chan, Operation.READ, amount=64), subj, chan) == []
