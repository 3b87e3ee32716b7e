"""Command-line interface over the query stack.

Verbs: ingest, synth apt|anomaly, query, repl, explain, bench, serve.
Every verb takes --store <dir>. Exit codes: 0 success, 1 query diagnostics,
2 I/O or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path
from typing import Optional

from .bench import BenchQuery, ResultMismatch, queries_from_manifest, run_bench
from .engine import execute, explain
from .ingest import DEFAULT_BATCH_SIZE, ingest_file
from .plan import STRATEGIES
from .store import EventStore, StoreError
from .synth import (
    InvalidConfig,
    ScenarioConfig,
    synthesize_anomaly_stream,
    synthesize_apt,
)

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="huntql", description="Investigate system event traces with HuntQL queries."
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def with_store(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--store", required=True, metavar="DIR", help="event store directory")
        return p

    p = with_store(sub.add_parser("ingest", help="ingest a JSONL event file"))
    p.add_argument("file", help="line-delimited JSON input")
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE)

    p = sub.add_parser("synth", help="generate a scenario into the store")
    synth_sub = p.add_subparsers(dest="scenario", required=True)
    for scenario in ("apt", "anomaly"):
        sp = with_store(synth_sub.add_parser(scenario))
        sp.add_argument("--seed", type=int, default=ScenarioConfig.rng_seed)
        sp.add_argument("--noise", type=int, default=ScenarioConfig.noise_events_per_agent,
                        help="background events per agent")
        sp.add_argument("--manifest", metavar="FILE", help="write ground-truth manifest JSON here")

    p = with_store(sub.add_parser("query", help="run a query and print the result table"))
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("-e", "--expr", metavar="TEXT", help="query text")
    source.add_argument("-f", "--file", metavar="FILE", help="file containing the query")
    p.add_argument("--strategy", choices=STRATEGIES, default="optimized")
    p.add_argument("--max-rows", type=int, default=None)
    p.add_argument("--json", action="store_true", help="print the table as JSON")

    with_store(sub.add_parser("repl", help="interactive query loop"))

    p = with_store(sub.add_parser("explain", help="print the execution plan"))
    p.add_argument("-e", "--expr", metavar="TEXT", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, default="optimized")

    p = with_store(sub.add_parser("bench", help="compare schedulers over a query suite"))
    p.add_argument("--queries", required=True, metavar="FILE",
                   help="JSON file with a {queries: [{id, text}]} suite")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--csv", metavar="FILE", help="also write the CSV report here")

    p = with_store(sub.add_parser("serve", help="serve the HTTP API and web console"))
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", metavar="DIR", help="directory with built console assets")
    p.add_argument("--timeout", type=float, default=120.0, help="per-query seconds")

    return parser


def _print_diagnostics(diagnostics) -> int:
    for diagnostic in diagnostics:
        print(diagnostic, file=sys.stderr)
    return EXIT_DIAGNOSTICS


def _cmd_ingest(args) -> int:
    store = EventStore(args.store)
    report = ingest_file(args.file, store, batch_size=args.batch_size)
    print(json.dumps(report.to_json(), indent=2))
    return EXIT_OK


def _cmd_synth(args) -> int:
    store = EventStore(args.store)
    config = ScenarioConfig(noise_events_per_agent=args.noise, rng_seed=args.seed)
    if args.scenario == "apt":
        manifest = synthesize_apt(config, store)
    else:
        manifest = synthesize_anomaly_stream(config, store)
    payload = json.dumps(manifest, indent=2)
    if args.manifest:
        Path(args.manifest).write_text(payload + "\n", encoding="utf-8")
        print(f"wrote manifest to {args.manifest}")
    else:
        print(payload)
    return EXIT_OK


def _cmd_query(args) -> int:
    store = EventStore(args.store, read_only=True)
    text = args.expr if args.expr is not None else Path(args.file).read_text(encoding="utf-8")
    result = execute(text, store, strategy=args.strategy, max_rows=args.max_rows)
    if isinstance(result, list):
        return _print_diagnostics(result)
    if args.json:
        print(json.dumps(result.to_json(), indent=2))
    else:
        print(result.to_text())
    return EXIT_OK


def _cmd_explain(args) -> int:
    store = EventStore(args.store, read_only=True)
    outcome = explain(args.expr, store, strategy=args.strategy)
    if not outcome["ok"]:
        return _print_diagnostics(outcome["diagnostics"])
    print(json.dumps(outcome, indent=2))
    return EXIT_OK


def _history_line(text: str) -> str:
    # one query per line: comments stripped, newlines collapsed
    flat = re.sub(r"//[^\n]*", "", text)
    return " ".join(flat.split())


def _cmd_repl(args) -> int:
    store = EventStore(args.store, read_only=True)
    history_path = Path(args.store) / ".history"
    try:
        import readline

        if history_path.exists():
            for line in history_path.read_text(encoding="utf-8").splitlines():
                if line:
                    readline.add_history(line)
    except ImportError:
        readline = None
    print("HuntQL. Submit a query with a blank line; :q or EOF quits.")
    while True:
        lines: list[str] = []
        while True:
            prompt = "huntql> " if not lines else "   ...> "
            try:
                line = input(prompt)
            except EOFError:
                print()
                return EXIT_OK
            except KeyboardInterrupt:
                print()
                lines = []
                continue
            if line.strip() == ":q":
                return EXIT_OK
            if not line.strip():
                break
            lines.append(line)
        text = "\n".join(lines)
        if not text.strip():
            continue
        entry = _history_line(text)
        with open(history_path, "a", encoding="utf-8") as fh:
            fh.write(entry + "\n")
        if readline is not None:
            readline.add_history(entry)
        result = execute(text, store)
        if isinstance(result, list):
            for diagnostic in result:
                print(diagnostic, file=sys.stderr)
        else:
            print(result.to_text())


def _cmd_bench(args) -> int:
    store = EventStore(args.store, read_only=True)
    suite = json.loads(Path(args.queries).read_text(encoding="utf-8"))
    if isinstance(suite, dict) and "queries" in suite:
        queries = queries_from_manifest(suite)
    elif isinstance(suite, list):
        queries = [BenchQuery(item["id"], item["text"]) for item in suite]
    else:
        raise ValueError("queries file must hold {queries: [...]} or a list")
    report = run_bench(store, queries, repetitions=args.reps)
    print(report.to_text())
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
        print(f"wrote CSV to {args.csv}")
    return EXIT_OK


def _default_ui_dir() -> Optional[str]:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return str(candidate) if (candidate / "index.html").exists() else None


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    store = EventStore(args.store, read_only=True)
    app = create_app(store, timeout_s=args.timeout, ui_dir=args.ui or _default_ui_dir())
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


_HANDLERS = {
    "ingest": _cmd_ingest,
    "synth": _cmd_synth,
    "query": _cmd_query,
    "repl": _cmd_repl,
    "explain": _cmd_explain,
    "bench": _cmd_bench,
    "serve": _cmd_serve,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.verb](args)
    except (StoreError, InvalidConfig, ResultMismatch, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
