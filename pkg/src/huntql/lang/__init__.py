"""Query language: tokens, syntax trees, parser, canonical printer."""

from .ast import (
    AggRef,
    AggregateItem,
    AnomalyQuery,
    BinOp,
    DependencyPath,
    DependencyQuery,
    Diagnostic,
    EntityRef,
    EventPattern,
    GlobalClause,
    MultieventQuery,
    Number,
    PathEdge,
    QueryAst,
    ReturnClause,
    ReturnItem,
    TemporalConstraint,
    ast_to_json,
    family,
)
from .parser import ParseError, check, parse, parse_with_diagnostics
from .printer import format_ast
from .tokens import Token, TokenKind, tokenize

__all__ = [
    "AggRef",
    "AggregateItem",
    "AnomalyQuery",
    "BinOp",
    "DependencyPath",
    "DependencyQuery",
    "Diagnostic",
    "EntityRef",
    "EventPattern",
    "GlobalClause",
    "MultieventQuery",
    "Number",
    "ParseError",
    "PathEdge",
    "QueryAst",
    "ReturnClause",
    "ReturnItem",
    "TemporalConstraint",
    "Token",
    "TokenKind",
    "ast_to_json",
    "check",
    "family",
    "format_ast",
    "parse",
    "parse_with_diagnostics",
    "tokenize",
]
