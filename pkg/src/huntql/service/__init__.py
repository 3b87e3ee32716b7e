"""HTTP service wrapping the query engine for the web console."""

from .app import (
    DEFAULT_MAX_ROWS,
    DEFAULT_TIMEOUT_S,
    MAX_BODY_BYTES,
    QueryOptions,
    QueryRequest,
    QueryResponse,
    create_app,
)

__all__ = [
    "DEFAULT_MAX_ROWS",
    "DEFAULT_TIMEOUT_S",
    "MAX_BODY_BYTES",
    "QueryOptions",
    "QueryRequest",
    "QueryResponse",
    "create_app",
]
