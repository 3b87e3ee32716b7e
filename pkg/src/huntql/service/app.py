"""HTTP surface over a read-only event store.

Endpoints:
    POST /api/query   run (or explain) a query, returning table or diagnostics
    POST /api/check   parse-check only, returning diagnostics
    GET  /api/stats   store contents summary
    GET  /            the built web console, when its assets are available

Responses depend only on (request, store contents); requests are independent
and may run concurrently. Query execution is bounded by a per-request
timeout that produces a structured response, never a dropped connection.
"""

from __future__ import annotations

import asyncio
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict, Field

from huntql.engine import execute, explain
from huntql.store import EventStore

MAX_BODY_BYTES = 1_048_576
DEFAULT_TIMEOUT_S = 120.0
DEFAULT_MAX_ROWS = 10_000


class QueryOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    explain_only: bool = False
    max_rows: int = Field(default=DEFAULT_MAX_ROWS, ge=0)


class QueryRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    query: str = Field(min_length=1)
    options: QueryOptions = Field(default_factory=QueryOptions)


class CheckRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    query: str


class PatternStats(BaseModel):
    alias: str
    estimated: float
    scanned: int
    matched: int


class QueryStats(BaseModel):
    planning_ms: float
    execution_ms: float
    per_pattern: list[PatternStats]


class QueryResponse(BaseModel):
    """Exactly one of table/diagnostics is set; plan replaces table when the
    request asked for explain_only."""

    ok: bool
    table: Optional[dict[str, Any]] = None
    diagnostics: Optional[list[dict[str, Any]]] = None
    stats: Optional[QueryStats] = None
    plan: Optional[dict[str, Any]] = None


def _timeout_response(seconds: float) -> QueryResponse:
    message = f"query timed out after {seconds:g} s"
    return QueryResponse(
        ok=False,
        diagnostics=[
            {"severity": "error", "message": message, "line": 1, "col": 1, "len": 1}
        ],
    )


def create_app(
    store: EventStore,
    *,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    ui_dir: Optional[str] = None,
) -> FastAPI:
    app = FastAPI(title="HuntQL", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.timeout_s = timeout_s
    # test seam: swapped out to exercise the timeout path
    app.state.run_query = _run_query

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        errors = exc.errors()
        detail = errors[0].get("msg", "invalid request") if errors else "invalid request"
        return JSONResponse(status_code=400, content={"error": f"malformed request: {detail}"})

    @app.middleware("http")
    async def reject_oversize(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and length.isdigit() and int(length) > MAX_BODY_BYTES:
            return JSONResponse(status_code=413, content={"error": "request body exceeds 1 MB"})
        return await call_next(request)

    @app.post("/api/query")
    async def api_query(request: QueryRequest) -> JSONResponse:
        loop = asyncio.get_running_loop()
        work = loop.run_in_executor(None, app.state.run_query, app.state.store, request)
        try:
            response: QueryResponse = await asyncio.wait_for(
                asyncio.shield(work), timeout=app.state.timeout_s
            )
        except asyncio.TimeoutError:
            response = _timeout_response(app.state.timeout_s)
        return JSONResponse(response.model_dump(exclude_none=True))

    @app.post("/api/check")
    async def api_check(request: CheckRequest) -> dict[str, Any]:
        from huntql.lang.parser import check

        return {"diagnostics": [d.to_json() for d in check(request.query)]}

    @app.get("/api/stats")
    async def api_stats() -> dict[str, Any]:
        snapshot = app.state.store.stats_snapshot()
        return {
            "event_count": snapshot.event_count,
            "entity_count": snapshot.entity_count,
            "partition_count": snapshot.partition_count,
            "entities_by_kind": snapshot.entities_by_kind,
            "agents": snapshot.agents,
        }

    index = Path(ui_dir) / "index.html" if ui_dir else None
    if index is not None and index.exists():
        app.mount("/assets", StaticFiles(directory=str(index.parent)), name="assets")

        @app.get("/")
        async def ui_root() -> FileResponse:
            return FileResponse(str(index))

    else:

        @app.get("/")
        async def ui_placeholder() -> PlainTextResponse:
            return PlainTextResponse(
                "HuntQL service is running. The web console assets are not built;"
                " POST /api/query to run queries.\n"
            )

    return app


def _run_query(store: EventStore, request: QueryRequest) -> QueryResponse:
    if request.options.explain_only:
        outcome = explain(request.query, store)
        if not outcome["ok"]:
            return QueryResponse(
                ok=False, diagnostics=[d.to_json() for d in outcome["diagnostics"]]
            )
        return QueryResponse(ok=True, plan=dict(outcome["plan"], family=outcome["family"]))
    result = execute(request.query, store, max_rows=request.options.max_rows)
    if isinstance(result, list):
        return QueryResponse(ok=False, diagnostics=[d.to_json() for d in result])
    stats = QueryStats(
        planning_ms=round(result.stats.planning_ms, 3),
        execution_ms=round(result.stats.execution_ms, 3),
        per_pattern=[
            PatternStats(
                alias=p.alias, estimated=p.estimated, scanned=p.scanned, matched=p.matched
            )
            for p in result.stats.per_pattern
        ],
    )
    return QueryResponse(ok=True, table=result.to_json(), stats=stats)
