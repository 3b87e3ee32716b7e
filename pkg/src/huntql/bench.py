"""Scheduler comparison benchmark.

Runs a query suite under the three scheduling strategies, asserting result
equality before any timing is taken (correctness before speed), then reports
per-query median wall time, scanned-candidate counts, and speedup ratios.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

from .engine import execute_ast
from .lang.parser import parse_with_diagnostics
from .plan import STRATEGIES
from .store import EventStore

# test instrumentation: receives (query_id, scheduler, rows), returns the rows
# the equality gate should see
ResultHook = Callable[[str, str, list[tuple]], list[tuple]]


class ResultMismatch(Exception):
    """Two schedulers disagreed on a result set; the benchmark is void."""


@dataclass(frozen=True)
class BenchQuery:
    id: str
    text: str


@dataclass(frozen=True)
class QueryTiming:
    query_id: str
    scheduler: str
    median_ms: float
    scanned: int
    matched: int


@dataclass
class BenchReport:
    repetitions: int
    schedulers: tuple[str, ...]
    rows: list[QueryTiming] = field(default_factory=list)

    def timing(self, query_id: str, scheduler: str) -> QueryTiming:
        for row in self.rows:
            if row.query_id == query_id and row.scheduler == scheduler:
                return row
        raise KeyError((query_id, scheduler))

    def query_ids(self) -> list[str]:
        seen: list[str] = []
        for row in self.rows:
            if row.query_id not in seen:
                seen.append(row.query_id)
        return seen

    def speedups(self, baseline: str = "textual", subject: str = "optimized") -> dict[str, float]:
        """Per-query wall-time ratio baseline/subject (>1 means subject wins)."""
        out = {}
        for query_id in self.query_ids():
            base = self.timing(query_id, baseline).median_ms
            subj = self.timing(query_id, subject).median_ms
            out[query_id] = base / subj if subj > 0 else float("inf")
        return out

    def scan_ratios(self, baseline: str = "textual", subject: str = "optimized") -> dict[str, float]:
        """Per-query scanned-candidate ratio baseline/subject."""
        out = {}
        for query_id in self.query_ids():
            base = self.timing(query_id, baseline).scanned
            subj = self.timing(query_id, subject).scanned
            out[query_id] = base / subj if subj > 0 else float("inf")
        return out

    def median_speedup(self, baseline: str = "textual", subject: str = "optimized") -> float:
        ratios = list(self.speedups(baseline, subject).values())
        return statistics.median(ratios) if ratios else 0.0

    def to_csv(self) -> str:
        lines = ["query_id,scheduler,median_ms,scanned,matched"]
        for row in self.rows:
            lines.append(
                f"{row.query_id},{row.scheduler},{row.median_ms:.3f},{row.scanned},{row.matched}"
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = ("query_id", "scheduler", "median_ms", "scanned", "matched")
        table = [header] + [
            (r.query_id, r.scheduler, f"{r.median_ms:.3f}", str(r.scanned), str(r.matched))
            for r in self.rows
        ]
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]
        out = []
        for n, row in enumerate(table):
            out.append(" | ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
            if n == 0:
                out.append("-+-".join("-" * w for w in widths))
        if "textual" in self.schedulers and "optimized" in self.schedulers:
            speedups = sorted(self.speedups().values())
            out.append(
                f"speedup optimized vs textual: median {self.median_speedup():.2f}x"
                f" (min {speedups[0]:.2f}x, max {speedups[-1]:.2f}x)"
            )
        return "\n".join(out) + "\n"


def queries_from_manifest(manifest: dict[str, Any]) -> list[BenchQuery]:
    return [BenchQuery(item["id"], item["text"]) for item in manifest["queries"]]


def run_bench(
    store: EventStore,
    queries: Sequence[BenchQuery],
    *,
    repetitions: int = 5,
    schedulers: Sequence[str] = STRATEGIES,
    workers: Optional[int] = None,
    result_hook: Optional[ResultHook] = None,
) -> BenchReport:
    """Benchmark the suite; the first repetition per (query, scheduler) is
    warm-up and discarded, the median of the rest is reported.

    Raises ResultMismatch if any two schedulers return different result sets
    for the same query; no timings are produced in that case.
    """
    if repetitions < 2:
        raise ValueError("repetitions must be >= 2 (first run is warm-up)")
    unknown = [s for s in schedulers if s not in STRATEGIES]
    if unknown:
        raise ValueError(f"unknown schedulers: {unknown}")
    if not queries:
        raise ValueError("query suite is empty")

    asts = []
    for query in queries:
        ast, diagnostics = parse_with_diagnostics(query.text)
        if diagnostics:
            first = diagnostics[0]
            raise ValueError(f"query {query.id} does not parse: {first}")
        asts.append(ast)

    # correctness gate before any timing
    for query, ast in zip(queries, asts):
        reference: Optional[tuple[str, list[tuple]]] = None
        for scheduler in schedulers:
            table = execute_ast(ast, store, strategy=scheduler, workers=workers)
            rows = table.rows
            if result_hook is not None:
                rows = result_hook(query.id, scheduler, rows)
            if reference is None:
                reference = (scheduler, rows)
            elif rows != reference[1]:
                raise ResultMismatch(
                    f"query {query.id}: {scheduler} returned {len(rows)} rows,"
                    f" {reference[0]} returned {len(reference[1])}"
                    " or rows differ in content/order"
                )

    report = BenchReport(repetitions=repetitions, schedulers=tuple(schedulers))
    for query, ast in zip(queries, asts):
        for scheduler in schedulers:
            walls = []
            stats = None
            for _ in range(repetitions):
                t0 = time.perf_counter()
                table = execute_ast(ast, store, strategy=scheduler, workers=workers)
                walls.append((time.perf_counter() - t0) * 1000)
                stats = table.stats
            median_ms = statistics.median(walls[1:])
            report.rows.append(
                QueryTiming(query.id, scheduler, median_ms, stats.scanned, stats.matched)
            )
    return report
