"""Deterministic scenario generators with ground-truth manifests.

Three generators, all pure functions of their configuration:

- `synthesize_apt` plants a five-step intrusion (a1..a5) across agents with
  role assignments, plus benign background noise, and returns a manifest of
  every planted event id keyed by step.
- `synthesize_anomaly_stream` plants channel-write series on the database
  server: one process whose per-window average transfer amount spikes above
  twice its 3-window moving average in exactly one window, amid flat-rate
  benign series.
- `synthesize_bench` builds a large haystack with a handful of
  high-selectivity needle processes and emits a matching query suite.

Manifests record every name and constant the generators invent, so tests
assert against the manifest rather than re-deriving the scenario by hand.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Optional

from .model import EntityKind, Operation
from .store import EventDraft, EventStore

MS_PER_DAY = 86_400_000
DEFAULT_BASE_TS = 1_522_800_000_000  # 2018-04-04T00:00:00Z
ATTACKER_IP = "203.0.113.129"
NOISE_DST_NET = "198.51.100."

# Window geometry of the large-transfer detection query.
WINDOW_MS = 60_000
STEP_MS = 10_000

APPEND_CHUNK = 100_000


class Role(str, Enum):
    IRC_SERVER = "irc_server"
    INTRANET_HOST = "intranet_host"
    DOMAIN_CONTROLLER = "domain_controller"
    DB_SERVER = "db_server"
    ATTACKER = "attacker"


class InvalidConfig(Exception):
    """Scenario configuration violates a role or range constraint."""


DEFAULT_AGENTS: tuple[tuple[int, Role], ...] = (
    (1, Role.IRC_SERVER),
    (2, Role.INTRANET_HOST),
    (3, Role.DOMAIN_CONTROLLER),
    (4, Role.ATTACKER),
    (5, Role.DB_SERVER),
)

NOISE_PROCS = ("explorer.exe", "svchost.exe", "chrome.exe", "backupd", "syncd", "sshd")
NOISE_FILES_PER_PROC = 4
NOISE_CHANNELS = 8
NOISE_SPAN_MS = 6 * 3_600_000


@dataclass(frozen=True)
class ScenarioConfig:
    """Shared knobs for the scenario generators; rng_seed fixes all output."""

    base_ts: int = DEFAULT_BASE_TS
    agents: tuple[tuple[int, Role], ...] = DEFAULT_AGENTS
    noise_events_per_agent: int = 1_000
    rng_seed: int = 20_180_404

    def role_map(self) -> dict[int, Role]:
        """Validate and return agent -> role; raises InvalidConfig."""
        if not self.agents:
            raise InvalidConfig("at least one agent required")
        if self.noise_events_per_agent < 0:
            raise InvalidConfig("noise_events_per_agent must be unsigned")
        if self.base_ts < 0 or self.base_ts % 1000:
            raise InvalidConfig("base_ts must be a non-negative, second-aligned epoch ms")
        roles: dict[int, Role] = {}
        for agent_id, role in self.agents:
            if agent_id in roles:
                raise InvalidConfig(f"duplicate agent id {agent_id}")
            try:
                roles[agent_id] = Role(role)
            except ValueError:
                raise InvalidConfig(f"unknown role {role!r}") from None
        for required in (Role.DB_SERVER, Role.ATTACKER):
            count = sum(1 for r in roles.values() if r is required)
            if count != 1:
                raise InvalidConfig(f"exactly one {required.value} role required, got {count}")
        return roles


def _fmt_ts(ms: int) -> str:
    dt = datetime.fromtimestamp(ms / 1000, tz=timezone.utc)
    return dt.strftime("%m/%d/%Y %H:%M:%S")


def _agent_ip(agent_id: int) -> str:
    return f"10.0.{(agent_id >> 8) & 0xFF}.{agent_id & 0xFF}"


def flagged_window_starts(
    events: list[tuple[int, int]],
    anchor: int,
    window_ms: int = WINDOW_MS,
    step_ms: int = STEP_MS,
) -> list[int]:
    """Window starts where one group's (start_ts, amount) series satisfies
    `avg > 2 * (avg + avg[1] + avg[2]) / 3` on the step grid anchored at
    `anchor`. A window with no events has no frame; a missing history frame
    suppresses flagging for the window that references it.
    """
    depth = window_ms // step_ms
    frames: dict[int, list[int]] = {}
    for ts, amount in events:
        hi = (ts - anchor) // step_ms
        for back in range(depth):
            start = anchor + (hi - back) * step_ms
            frames.setdefault(start, []).append(amount)
    flagged = []
    for start in sorted(frames):
        h1 = frames.get(start - step_ms)
        h2 = frames.get(start - 2 * step_ms)
        if h1 is None or h2 is None:
            continue
        avg0 = sum(frames[start]) / len(frames[start])
        avg1 = sum(h1) / len(h1)
        avg2 = sum(h2) / len(h2)
        if avg0 > 2 * (avg0 + avg1 + avg2) / 3:
            flagged.append(start)
    return flagged


class _Tape:
    """Buffers tagged events, assigns per-agent seqs in timestamp order,
    appends in chunks, then resolves planted ids through the store."""

    def __init__(self, store: EventStore):
        self.store = store
        self.rows: list[tuple] = []

    def add(
        self,
        agent_id: int,
        subject_id: int,
        op: Operation,
        object_id: int,
        start_ts: int,
        *,
        duration_ms: int = 100,
        amount: Optional[int] = None,
        tag: Optional[str] = None,
    ) -> None:
        rank = len(self.rows)
        self.rows.append((agent_id, start_ts, rank, subject_id, op, object_id, duration_ms, amount, tag))

    def commit(self) -> dict[str, list[int]]:
        """Append everything; returns tag -> committed event ids."""
        by_agent: dict[int, list[tuple]] = {}
        for row in self.rows:
            by_agent.setdefault(row[0], []).append(row)
        drafts: list[EventDraft] = []
        wanted: dict[tuple[int, int], str] = {}
        for agent_id in sorted(by_agent):
            rows = sorted(by_agent[agent_id], key=lambda r: (r[1], r[2]))
            base_seq = self.store.last_seq(agent_id)
            for offset, row in enumerate(rows):
                _, start_ts, _, subject_id, op, object_id, duration, amount, tag = row
                seq = base_seq + offset + 1
                drafts.append(
                    EventDraft(agent_id, subject_id, op, object_id, start_ts, start_ts + duration, seq, amount)
                )
                if tag is not None:
                    wanted[(agent_id, seq)] = tag
        for lo in range(0, len(drafts), APPEND_CHUNK):
            self.store.append_batch(drafts[lo : lo + APPEND_CHUNK])
        ids: dict[str, list[int]] = {}
        if wanted:
            for event in self.store.all_events():
                tag = wanted.get((event.agent_id, event.seq))
                if tag is not None:
                    ids.setdefault(tag, []).append(event.id)
            for members in ids.values():
                members.sort()
        return ids


def _plant_noise(
    rng: random.Random,
    tape: _Tape,
    store: EventStore,
    agent_id: int,
    base_ts: int,
    count: int,
) -> None:
    """Benign background: processes read/write their own files plus
    low-amount channel writes to non-attacker destinations."""
    if count == 0:
        return
    procs = []
    files = []
    for i, exe in enumerate(NOISE_PROCS):
        pid = 1000 + i
        proc_id = store.upsert_entity(agent_id, EntityKind.PROCESS, {"pid": pid, "exe_name": exe})
        stem = exe.split(".")[0]
        own = [
            store.upsert_entity(agent_id, EntityKind.FILE, {"name": f"{stem}_{j}.dat"})
            for j in range(NOISE_FILES_PER_PROC)
        ]
        procs.append(proc_id)
        files.append(own)
    channels = [
        store.upsert_entity(
            agent_id,
            EntityKind.NET_CHANNEL,
            {
                "src_ip": _agent_ip(agent_id),
                "src_port": 40_000 + k,
                "dst_ip": f"{NOISE_DST_NET}{10 + k}",
                "dst_port": 443,
                "protocol": "tcp",
            },
        )
        for k in range(NOISE_CHANNELS)
    ]
    for _ in range(count):
        pick = rng.randrange(len(procs))
        ts = base_ts + rng.randrange(NOISE_SPAN_MS)
        roll = rng.random()
        if roll < 0.9:
            op = Operation.READ if roll < 0.45 else Operation.WRITE
            target = files[pick][rng.randrange(NOISE_FILES_PER_PROC)]
            amount = rng.randrange(100, 10_000)
        else:
            op = Operation.WRITE
            target = channels[rng.randrange(NOISE_CHANNELS)]
            amount = rng.randrange(100, 2_000)
        tape.add(agent_id, procs[pick], op, target, ts, amount=amount)


def _mirrored_channel(
    store: EventStore, agent_a: int, agent_b: int, src_port: int, dst_ip: str, dst_port: int
) -> tuple[int, int]:
    """Upsert identical channel five-tuples on both agents; queries join the
    two copies through channel equivalence."""
    attrs = {
        "src_ip": ATTACKER_IP,
        "src_port": src_port,
        "dst_ip": dst_ip,
        "dst_port": dst_port,
        "protocol": "tcp",
    }
    return (
        store.upsert_entity(agent_a, EntityKind.NET_CHANNEL, attrs),
        store.upsert_entity(agent_b, EntityKind.NET_CHANNEL, attrs),
    )


def synthesize_apt(config: ScenarioConfig, store: EventStore) -> dict[str, Any]:
    """Plant the five-step intrusion plus noise; returns the manifest."""
    roles = config.role_map()
    by_role: dict[Role, list[int]] = {}
    for agent_id in sorted(roles):
        by_role.setdefault(roles[agent_id], []).append(agent_id)
    for required in (Role.IRC_SERVER, Role.INTRANET_HOST, Role.DOMAIN_CONTROLLER):
        if required not in by_role:
            raise InvalidConfig(f"apt scenario requires an agent with role {required.value}")
    irc = by_role[Role.IRC_SERVER][0]
    intranet = by_role[Role.INTRANET_HOST][0]
    dc = by_role[Role.DOMAIN_CONTROLLER][0]
    attacker = by_role[Role.ATTACKER][0]
    db = by_role[Role.DB_SERVER][0]

    rng = random.Random(config.rng_seed)
    base = config.base_ts
    tape = _Tape(store)

    def sec(offset: int) -> int:
        return base + offset * 1000

    def proc(agent_id: int, pid: int, exe: str) -> int:
        return store.upsert_entity(agent_id, EntityKind.PROCESS, {"pid": pid, "exe_name": exe})

    def file_(agent_id: int, name: str) -> int:
        return store.upsert_entity(agent_id, EntityKind.FILE, {"name": name})

    nc = proc(attacker, 9001, "nc")

    # a1: remote code execution against the IRC daemon spawns a shell
    ircd = proc(irc, 801, "unrealircd")
    shell = proc(irc, 802, "sh")
    ch_a1_att, ch_a1_irc = _mirrored_channel(store, attacker, irc, 44_321, _agent_ip(irc), 6667)
    tape.add(attacker, nc, Operation.CONNECT, ch_a1_att, sec(3600), tag="a1")
    tape.add(irc, ircd, Operation.ACCEPT, ch_a1_irc, sec(3601), tag="a1")
    tape.add(irc, ircd, Operation.START, shell, sec(3605), tag="a1")

    # a2: malware uploaded over the live connection
    dropper = file_(irc, "mal_dropper.bin")
    tape.add(irc, shell, Operation.READ, ch_a1_irc, sec(3700), amount=48_000, tag="a2")
    tape.add(irc, shell, Operation.WRITE, dropper, sec(3702), amount=48_000, tag="a2")

    # a3: pivot to the intranet host, run memory dumping tools
    svc_intra = proc(intranet, 803, "services.exe")
    mimikatz = proc(intranet, 804, "mimikatz.exe")
    kiwi = proc(intranet, 805, "kiwi.exe")
    mem_dump = file_(intranet, "lsass_mem.dmp")
    ch_a3_att, ch_a3_in = _mirrored_channel(store, attacker, intranet, 44_322, _agent_ip(intranet), 445)
    tape.add(attacker, nc, Operation.CONNECT, ch_a3_att, sec(7200), tag="a3")
    tape.add(intranet, svc_intra, Operation.ACCEPT, ch_a3_in, sec(7201), tag="a3")
    tape.add(intranet, svc_intra, Operation.START, mimikatz, sec(7205), tag="a3")
    tape.add(intranet, mimikatz, Operation.WRITE, mem_dump, sec(7210), amount=2_000_000, tag="a3")
    tape.add(intranet, svc_intra, Operation.START, kiwi, sec(7215), tag="a3")
    tape.add(intranet, kiwi, Operation.READ, mem_dump, sec(7220), amount=2_000_000, tag="a3")

    # a4: pivot to the domain controller, run password dumping tools
    svc_dc = proc(dc, 806, "services.exe")
    pwdump = proc(dc, 807, "PwDump7.exe")
    wce = proc(dc, 808, "WCE.exe")
    pw_out = file_(dc, "pwdump_out.txt")
    ch_a4_att, ch_a4_dc = _mirrored_channel(store, attacker, dc, 44_323, _agent_ip(dc), 389)
    tape.add(attacker, nc, Operation.CONNECT, ch_a4_att, sec(10_800), tag="a4")
    tape.add(dc, svc_dc, Operation.ACCEPT, ch_a4_dc, sec(10_801), tag="a4")
    tape.add(dc, svc_dc, Operation.START, pwdump, sec(10_805), tag="a4")
    tape.add(dc, pwdump, Operation.WRITE, pw_out, sec(10_810), amount=12_000, tag="a4")
    tape.add(dc, svc_dc, Operation.START, wce, sec(10_815), tag="a4")
    tape.add(dc, wce, Operation.READ, pw_out, sec(10_820), amount=12_000, tag="a4")

    # a5: dump the database and ship it out (the exfil chain)
    sqlservr = proc(db, 499, "sqlservr.exe")
    cmd = proc(db, 500, "cmd.exe")
    osql = proc(db, 501, "osql.exe")
    sbblv = proc(db, 502, "sbblv.exe")
    backup = file_(db, "backup1.dmp")
    ch_a5_att, ch_a5_db = _mirrored_channel(store, attacker, db, 44_324, _agent_ip(db), 1433)
    exfil_chan = store.upsert_entity(
        db,
        EntityKind.NET_CHANNEL,
        {
            "src_ip": _agent_ip(db),
            "src_port": 49_876,
            "dst_ip": ATTACKER_IP,
            "dst_port": 443,
            "protocol": "tcp",
        },
    )
    tape.add(attacker, nc, Operation.CONNECT, ch_a5_att, sec(14_390), tag="a5")
    tape.add(db, sqlservr, Operation.ACCEPT, ch_a5_db, sec(14_391), tag="a5")
    tape.add(db, cmd, Operation.START, osql, sec(14_400), tag="a5")
    tape.add(db, osql, Operation.WRITE, backup, sec(14_410), amount=50_000_000, tag="a5")
    tape.add(db, cmd, Operation.START, sbblv, sec(14_420), tag="a5")
    tape.add(db, sbblv, Operation.READ, backup, sec(14_430), amount=50_000_000, tag="a5")
    # The outbound connection precedes the transfer, so an investigator can
    # confirm connect-before-write on the same channel variable.
    tape.add(db, sbblv, Operation.CONNECT, exfil_chan, sec(14_435), tag="a5")
    exfil_series: list[tuple[int, int]] = []
    for k in range(18):
        amount = 2_000 if k < 12 else 50_000_000
        ts = sec(14_440) + k * STEP_MS
        exfil_series.append((ts, amount))
        tape.add(db, sbblv, Operation.WRITE, exfil_chan, ts, amount=amount, tag="a5")

    for agent_id in sorted(roles):
        _plant_noise(rng, tape, store, agent_id, base, config.noise_events_per_agent)

    steps = tape.commit()
    return {
        "scenario": "apt",
        "seed": config.rng_seed,
        "base_ts": base,
        "attacker_ip": ATTACKER_IP,
        "agents": {str(agent_id): roles[agent_id].value for agent_id in sorted(roles)},
        "steps": {name: steps.get(name, []) for name in ("a1", "a2", "a3", "a4", "a5")},
        "artifacts": {
            "a1_service": "unrealircd",
            "a1_shell": "sh",
            "a2_malware_file": "mal_dropper.bin",
            "a3_tools": ["mimikatz.exe", "kiwi.exe"],
            "a3_dump_file": "lsass_mem.dmp",
            "a4_tools": ["PwDump7.exe", "WCE.exe"],
            "a4_dump_file": "pwdump_out.txt",
            "a5_client": "osql.exe",
            "a5_exfil_tool": "sbblv.exe",
            "a5_backup_file": "backup1.dmp",
        },
        "a5_flagged_window_starts": flagged_window_starts(exfil_series, anchor=base),
        "noise_events": config.noise_events_per_agent * len(roles),
    }


def synthesize_anomaly_stream(
    config: ScenarioConfig,
    store: EventStore,
    *,
    flat_amount: int = 10,
    burst_amount: int = 1_000,
    series_len: int = 180,
    burst_start: int = 90,
    burst_len: int = 6,
    cadence_ms: int = STEP_MS,
) -> dict[str, Any]:
    """Plant channel-write series on the db server; returns the manifest.

    The spike process transfers `flat_amount` per event, then `burst_amount`
    for `burst_len` consecutive events; benign processes stay flat. Flagged
    windows are recomputed here directly from the planted series.
    """
    roles = config.role_map()
    if series_len < 1 or burst_len < 0 or cadence_ms < 1:
        raise InvalidConfig("series_len, burst_len, cadence_ms must be positive")
    if flat_amount < 0 or burst_amount < 0:
        raise InvalidConfig("amounts must be unsigned")
    if not 0 <= burst_start <= series_len - burst_len:
        raise InvalidConfig("burst must lie within the series")
    db = next(agent_id for agent_id, role in sorted(roles.items()) if role is Role.DB_SERVER)

    rng = random.Random(config.rng_seed)
    base = config.base_ts
    tape = _Tape(store)
    spike_proc = "powershell.exe"
    benign_procs = ("backupd", "replicator")
    series: dict[str, list[tuple[int, int]]] = {}
    for slot, exe in enumerate((spike_proc, *benign_procs)):
        proc_id = store.upsert_entity(db, EntityKind.PROCESS, {"pid": 7001 + slot, "exe_name": exe})
        chan_id = store.upsert_entity(
            db,
            EntityKind.NET_CHANNEL,
            {
                "src_ip": _agent_ip(db),
                "src_port": 52_001 + slot,
                "dst_ip": ATTACKER_IP,
                "dst_port": 443,
                "protocol": "tcp",
            },
        )
        points = []
        for k in range(series_len):
            amount = flat_amount
            if exe == spike_proc and burst_start <= k < burst_start + burst_len:
                amount = burst_amount
            ts = base + k * cadence_ms
            points.append((ts, amount))
            tape.add(db, proc_id, Operation.WRITE, chan_id, ts, amount=amount, tag=exe)
        series[exe] = points

    for agent_id in sorted(roles):
        _plant_noise(rng, tape, store, agent_id, base, config.noise_events_per_agent)

    ids = tape.commit()
    flagged = [
        [exe, start]
        for exe in (spike_proc, *benign_procs)
        for start in flagged_window_starts(series[exe], anchor=base)
    ]
    query = (
        f'(from "{_fmt_ts(base)}" to "{_fmt_ts(base + MS_PER_DAY)}")\n'
        f"agentid = {db}\n"
        "window = 1 min, step = 10 sec\n"
        f'proc p write ip i[dstip="{ATTACKER_IP}"] as evt\n'
        "return p, avg(evt.amount) as amt\n"
        "group by p\n"
        "having (amt > 2 * (amt + amt[1] + amt[2]) / 3)\n"
    )
    return {
        "scenario": "anomaly",
        "seed": config.rng_seed,
        "base_ts": base,
        "agent_id": db,
        "dst_ip": ATTACKER_IP,
        "window_ms": WINDOW_MS,
        "step_ms": STEP_MS,
        "cadence_ms": cadence_ms,
        "flat_amount": flat_amount,
        "burst_amount": burst_amount,
        "process": spike_proc,
        "benign_processes": list(benign_procs),
        "series": {exe: ids.get(exe, []) for exe in (spike_proc, *benign_procs)},
        "window_starts": [start for exe, start in flagged if exe == spike_proc],
        "flagged": flagged,
        "query": query,
        "noise_events": config.noise_events_per_agent * len(roles),
    }


def synthesize_bench(
    store: EventStore,
    *,
    n_events: int = 1_000_000,
    n_queries: int = 20,
    seed: int = 20_180_404,
    base_ts: int = DEFAULT_BASE_TS,
    agent_id: int = 1,
) -> dict[str, Any]:
    """Build a haystack store plus a query suite where each query contains
    one needle pattern of selectivity <= 1e-4, written broad-pattern-first
    so textual scheduling scans the haystack."""
    if n_queries < 1 or n_events < 100 * n_queries:
        raise ValueError("need n_events >= 100 * n_queries")
    rng = random.Random(seed)
    tape = _Tape(store)

    workers = [
        store.upsert_entity(agent_id, EntityKind.PROCESS, {"pid": 2000 + i, "exe_name": f"worker{i:02d}.exe"})
        for i in range(40)
    ]
    needles = [
        store.upsert_entity(agent_id, EntityKind.PROCESS, {"pid": 3000 + i, "exe_name": f"needle{i:02d}.exe"})
        for i in range(n_queries)
    ]
    hay_files = [
        store.upsert_entity(agent_id, EntityKind.FILE, {"name": f"hay{j:04d}.bin"}) for j in range(4000)
    ]
    troves = [
        store.upsert_entity(agent_id, EntityKind.FILE, {"name": f"trove{i:02d}.bin"}) for i in range(n_queries)
    ]
    channels = [
        store.upsert_entity(
            agent_id,
            EntityKind.NET_CHANNEL,
            {
                "src_ip": _agent_ip(agent_id),
                "src_port": 41_000 + k,
                "dst_ip": f"{NOISE_DST_NET}{k % 200}",
                "dst_port": 443,
                "protocol": "tcp",
            },
        )
        for k in range(50)
    ]

    def stamp() -> int:
        return base_ts + rng.randrange(MS_PER_DAY - 1000)

    planted = 0
    for i in range(n_queries):
        for _ in range(50):
            tape.add(agent_id, needles[i], Operation.READ, troves[i], stamp(), amount=rng.randrange(100, 10_000))
        for _ in range(30):
            worker = workers[rng.randrange(len(workers))]
            tape.add(agent_id, worker, Operation.READ, troves[i], stamp(), amount=rng.randrange(100, 10_000))
        planted += 80
    for _ in range(n_events - planted):
        worker = workers[rng.randrange(len(workers))]
        roll = rng.random()
        if roll < 0.20:
            tape.add(agent_id, worker, Operation.READ, hay_files[rng.randrange(len(hay_files))], stamp(), amount=rng.randrange(100, 10_000))
        elif roll < 0.65:
            tape.add(agent_id, worker, Operation.WRITE, hay_files[rng.randrange(len(hay_files))], stamp(), amount=rng.randrange(100, 10_000))
        elif roll < 0.90:
            tape.add(agent_id, worker, Operation.CONNECT, channels[rng.randrange(len(channels))], stamp())
        else:
            tape.add(agent_id, worker, Operation.RENAME, hay_files[rng.randrange(len(hay_files))], stamp())
    tape.commit()

    header = f'(from "{_fmt_ts(base_ts)}" to "{_fmt_ts(base_ts + MS_PER_DAY)}")\nagentid = {agent_id}\n'
    queries = [
        {
            "id": f"q{i:02d}",
            "text": header
            + "proc w read file f as evt1\n"
            + f'proc n[exe_name = "needle{i:02d}.exe"] read file f as evt2\n'
            + "return distinct n, f\n",
        }
        for i in range(n_queries)
    ]
    return {
        "scenario": "bench",
        "seed": seed,
        "base_ts": base_ts,
        "agent_id": agent_id,
        "n_events": n_events,
        "needles": [f"needle{i:02d}.exe" for i in range(n_queries)],
        "queries": queries,
    }
