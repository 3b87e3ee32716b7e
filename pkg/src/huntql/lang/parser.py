"""Recursive-descent parser with multi-error recovery.

`parse` raises on the first batch of errors, `check` never raises and is what
powers editor diagnostics. Recovery skips to the next line or to a clause
keyword so one typo does not shadow every later mistake.
"""

from __future__ import annotations

from datetime import datetime, timezone
from typing import Optional, Union

from huntql.model import COMPATIBLE_OPS, KNOWN_ATTRS, EntityKind, Operation
from huntql.predicate import And, Atom, Or, PredExpr

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
)
from .tokens import Token, TokenKind, tokenize

DAY_MS = 86_400_000

KIND_WORDS = {
    "proc": EntityKind.PROCESS,
    "process": EntityKind.PROCESS,
    "file": EntityKind.FILE,
    "ip": EntityKind.NET_CHANNEL,
}
KIND_LABEL = {
    EntityKind.PROCESS: "proc",
    EntityKind.FILE: "file",
    EntityKind.NET_CHANNEL: "ip",
}
OP_WORDS = {op.value: op for op in Operation}
AGG_WORDS = ("avg", "sum", "count", "min", "max")
UNIT_MS = {"ms": 1, "sec": 1000, "min": 60_000, "hour": 3_600_000, "day": DAY_MS}
ATTR_ALIASES = {
    "dstip": "dst_ip",
    "srcip": "src_ip",
    "dstport": "dst_port",
    "srcport": "src_port",
    "exe": "exe_name",
    "agentid": "agent_id",
}
CLAUSE_WORDS = (
    "with", "return", "distinct", "as", "before", "after", "group", "by",
    "having", "window", "step", "forward", "backward", "at", "from", "to",
    "agentid", "like", "and", "or", "not",
)
RESERVED = (frozenset(KIND_WORDS) | frozenset(OP_WORDS) | frozenset(AGG_WORDS)
            | frozenset(UNIT_MS) | frozenset(CLAUSE_WORDS))
SYNC_WORDS = frozenset({"with", "return", "group", "having", "window",
                        "forward", "backward"})
CMP_PUNCT = ("=", "!=", "<", "<=", ">", ">=")
MAX_DIAGNOSTICS = 40


class ParseError(Exception):
    """Raised by `parse` when diagnostics contain at least one error."""

    def __init__(self, diagnostics):
        self.diagnostics: tuple[Diagnostic, ...] = tuple(diagnostics)
        errors = [d for d in self.diagnostics if d.severity == "error"]
        head = "; ".join(str(d) for d in errors[:3])
        if len(errors) > 3:
            head += f" (+{len(errors) - 3} more)"
        super().__init__(head)


class _Resync(Exception):
    """Internal: unwind to the nearest recovery point."""


class _Parser:
    def __init__(self, text: str):
        self.tokens, lex_diags = tokenize(text)
        self.diags: list[Diagnostic] = list(lex_diags)
        self.pos = 0
        self.var_kinds: dict[str, EntityKind] = {}
        self.aliases: list[str] = []
        self.agg_names: list[str] = []

    # -- token plumbing ------------------------------------------------------

    def peek(self, off: int = 0) -> Token:
        i = min(self.pos + off, len(self.tokens) - 1)
        return self.tokens[i]

    def at_eof(self) -> bool:
        return self.peek().kind is TokenKind.EOF

    def at_punct(self, *values: str) -> bool:
        t = self.peek()
        return t.kind is TokenKind.PUNCT and t.value in values

    def at_word(self, *words: str) -> bool:
        t = self.peek()
        return t.kind is TokenKind.IDENT and t.value in words

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind is not TokenKind.EOF:
            self.pos += 1
        return t

    def error(self, tok: Token, message: str) -> None:
        if len(self.diags) < MAX_DIAGNOSTICS:
            self.diags.append(Diagnostic("error", message, tok.line, tok.col,
                                         max(tok.length, 1)))

    def fail(self, tok: Token, message: str):
        self.error(tok, message)
        raise _Resync()

    def expect_punct(self, value: str, what: str = "") -> Token:
        if self.at_punct(value):
            return self.advance()
        label = what or f"'{value}'"
        self.fail(self.peek(), f"expected {label}, found {self._describe(self.peek())}")

    def expect_word(self, *words: str) -> Token:
        if self.at_word(*words):
            return self.advance()
        want = " or ".join(f"'{w}'" for w in words)
        self.fail(self.peek(), f"expected {want}, found {self._describe(self.peek())}")

    def expect_name(self, what: str) -> Token:
        t = self.peek()
        if t.kind is not TokenKind.IDENT:
            self.fail(t, f"expected {what}, found {self._describe(t)}")
        if t.value in RESERVED:
            self.fail(t, f"'{t.value}' is a reserved word and cannot name {what}")
        return self.advance()

    @staticmethod
    def _describe(tok: Token) -> str:
        if tok.kind is TokenKind.EOF:
            return "end of query"
        if tok.kind is TokenKind.STRING:
            return f'"{tok.value}"'
        return f"'{tok.value}'"

    def recover(self, from_pos: int) -> None:
        err_line = self.peek().line
        while not self.at_eof():
            t = self.peek()
            if t.line > err_line:
                break
            if t.kind is TokenKind.IDENT and t.value in SYNC_WORDS and self.pos > from_pos:
                break
            self.advance()
        if self.pos == from_pos and not self.at_eof():
            self.advance()

    # -- entry point -----------------------------------------------------------

    def parse_query(self) -> Optional[QueryAst]:
        globals_ = self.parse_globals()
        try:
            if self.at_word("forward", "backward") and self.peek(1).value == ":":
                return self.parse_dependency(globals_)
            if self.at_word("window") and self.peek(1).value == "=":
                return self.parse_anomaly(globals_)
            return self.parse_multievent(globals_)
        except _Resync:
            return None

    # -- global clauses ----------------------------------------------------------

    def parse_globals(self) -> GlobalClause:
        time_lo = time_hi = None
        agents = None
        time_tok = agent_tok = None
        while True:
            if self.at_punct("(") and self.peek(1).value in ("at", "from", "to"):
                tok = self.peek()
                try:
                    lo, hi = self.parse_time_clause()
                except _Resync:
                    self.recover(self.pos)
                    continue
                if time_tok is not None:
                    self.error(tok, "duplicate time clause")
                else:
                    time_tok, time_lo, time_hi = tok, lo, hi
            elif self.at_word("agentid", "agent_id") and self.peek(1).value == "=":
                tok = self.advance()
                self.advance()
                try:
                    got = self.parse_agent_set()
                except _Resync:
                    self.recover(self.pos)
                    continue
                if agent_tok is not None:
                    self.error(tok, "duplicate agentid clause")
                else:
                    agent_tok, agents = tok, got
            else:
                break
        return GlobalClause(time_lo, time_hi, agents)

    def parse_time_clause(self) -> tuple[Optional[int], Optional[int]]:
        self.expect_punct("(")
        word = self.expect_word("at", "from", "to")
        if word.value == "at":
            tok = self.expect_string("a date like \"04/04/2016\"")
            lo = self.parse_timestamp(tok, date_only=True)
            self.expect_punct(")")
            if lo is None:
                return None, None
            return lo, lo + DAY_MS
        if word.value == "from":
            lo_tok = self.expect_string("a timestamp")
            lo = self.parse_timestamp(lo_tok)
            hi = None
            if self.at_word("to"):
                self.advance()
                hi_tok = self.expect_string("a timestamp")
                hi = self.parse_timestamp(hi_tok)
                if lo is not None and hi is not None and hi <= lo:
                    self.error(hi_tok, "time window is empty: 'to' is not after 'from'")
            self.expect_punct(")")
            return lo, hi
        tok = self.expect_string("a timestamp")
        hi = self.parse_timestamp(tok)
        self.expect_punct(")")
        return None, hi

    def expect_string(self, what: str) -> Token:
        t = self.peek()
        if t.kind is not TokenKind.STRING:
            self.fail(t, f"expected {what}, found {self._describe(t)}")
        return self.advance()

    def parse_timestamp(self, tok: Token, date_only: bool = False) -> Optional[int]:
        raw = str(tok.value).strip()
        millis = 0
        if "." in raw:
            raw, frac = raw.rsplit(".", 1)
            if frac.isdigit() and 1 <= len(frac) <= 3:
                millis = int(frac.ljust(3, "0"))
            else:
                self.error(tok, f"bad fractional seconds in {raw!r}")
                return None
        for fmt in ("%m/%d/%Y",) if date_only else ("%m/%d/%Y %H:%M:%S", "%m/%d/%Y"):
            try:
                dt = datetime.strptime(raw, fmt).replace(tzinfo=timezone.utc)
                return int(dt.timestamp() * 1000) + millis
            except ValueError:
                continue
        want = "MM/DD/YYYY" if date_only else "MM/DD/YYYY or MM/DD/YYYY HH:MM:SS"
        self.error(tok, f"cannot parse {str(tok.value)!r} as a timestamp ({want})")
        return None

    def parse_agent_set(self) -> tuple[int, ...]:
        if self.at_punct("{"):
            self.advance()
            ids = [self.expect_int("an agent id")]
            while self.at_punct(","):
                self.advance()
                ids.append(self.expect_int("an agent id"))
            self.expect_punct("}")
            return tuple(sorted(set(ids)))
        return (self.expect_int("an agent id"),)

    def expect_int(self, what: str) -> int:
        t = self.peek()
        if t.kind is not TokenKind.INT:
            self.fail(t, f"expected {what}, found {self._describe(t)}")
        return self.advance().value

    # -- entity references and predicates ---------------------------------------

    def parse_entity_ref(self) -> EntityRef:
        t = self.peek()
        if (t.kind is TokenKind.IDENT and t.value in KIND_WORDS
                and self.peek(1).kind is TokenKind.IDENT):
            kind = KIND_WORDS[self.advance().value]
            name_tok = self.expect_name("a variable")
            var = name_tok.value
            known = self.var_kinds.get(var)
            if known is not None and known is not kind:
                self.error(name_tok,
                           f"variable '{var}' was already declared as "
                           f"{KIND_LABEL[known]}")
            self.var_kinds.setdefault(var, kind)
        elif t.kind is TokenKind.IDENT and t.value not in RESERVED:
            name_tok = self.advance()
            var = name_tok.value
            kind = self.var_kinds.get(var)
            if kind is None:
                self.error(name_tok,
                           f"unknown variable '{var}': declare it with a kind "
                           f"first, e.g. proc {var}")
                kind = EntityKind.PROCESS
        else:
            self.fail(t, "expected an entity like 'proc p', 'file f' or 'ip i', "
                         f"found {self._describe(t)}")
        predicate = None
        if self.at_punct("["):
            predicate = self.parse_entity_predicate(kind)
        return EntityRef(var, kind, predicate)

    def parse_entity_predicate(self, kind: EntityKind) -> Optional[PredExpr]:
        self.expect_punct("[")
        expr = self.parse_pred_or(kind)
        self.expect_punct("]")
        return expr

    def parse_pred_or(self, kind: EntityKind) -> PredExpr:
        parts = [self.parse_pred_and(kind)]
        while self.at_punct("||"):
            self.advance()
            parts.append(self.parse_pred_and(kind))
        if len(parts) == 1:
            return parts[0]
        # Flatten so associativity never changes structural equality.
        flat = []
        for p in parts:
            flat.extend(p.children if isinstance(p, Or) else (p,))
        return Or(tuple(flat))

    def parse_pred_and(self, kind: EntityKind) -> PredExpr:
        parts = [self.parse_pred_atom(kind)]
        while self.at_punct("&&"):
            self.advance()
            parts.append(self.parse_pred_atom(kind))
        if len(parts) == 1:
            return parts[0]
        flat = []
        for p in parts:
            flat.extend(p.children if isinstance(p, And) else (p,))
        return And(tuple(flat))

    def parse_pred_atom(self, kind: EntityKind) -> PredExpr:
        t = self.peek()
        if t.kind is TokenKind.PUNCT and t.value == "(":
            self.advance()
            inner = self.parse_pred_or(kind)
            self.expect_punct(")")
            return inner
        if t.kind is TokenKind.STRING:
            self.advance()
            from huntql.model import default_attribute
            return Atom(default_attribute(kind), "like", t.value)
        if t.kind is not TokenKind.IDENT:
            self.fail(t, f"expected an attribute or a quoted pattern, "
                         f"found {self._describe(t)}")
        attr_tok = self.advance()
        attr = ATTR_ALIASES.get(attr_tok.value, attr_tok.value)
        if attr != "agent_id" and attr not in KNOWN_ATTRS[kind]:
            legal = ", ".join(sorted(KNOWN_ATTRS[kind]))
            self.error(attr_tok, f"'{attr_tok.value}' is not an attribute of "
                                 f"{KIND_LABEL[kind]} (one of: {legal}, agent_id)")
        cmp_tok = self.peek()
        if self.at_punct(*CMP_PUNCT):
            cmp = self.advance().value
        elif self.at_word("like"):
            self.advance()
            cmp = "like"
        else:
            self.fail(cmp_tok, f"expected a comparison after '{attr_tok.value}', "
                               f"found {self._describe(cmp_tok)}")
        value = self.parse_value()
        if cmp == "like" and not isinstance(value, str):
            self.error(cmp_tok, "like requires a quoted string pattern")
        if attr == "agent_id" and not isinstance(value, int):
            self.error(attr_tok, "agent_id must be compared with an integer")
        return Atom(attr, cmp, value)

    def parse_value(self) -> Union[str, int, float]:
        t = self.peek()
        if t.kind is TokenKind.STRING:
            return self.advance().value
        neg = False
        if self.at_punct("-"):
            self.advance()
            neg = True
            t = self.peek()
        if t.kind in (TokenKind.INT, TokenKind.FLOAT):
            v = self.advance().value
            return -v if neg else v
        self.fail(t, f"expected a value, found {self._describe(t)}")

    # -- event patterns -----------------------------------------------------------

    def parse_ops(self) -> tuple[Operation, ...]:
        t = self.peek()
        if not (t.kind is TokenKind.IDENT and t.value in OP_WORDS):
            ops = ", ".join(sorted(OP_WORDS))
            self.fail(t, f"expected an operation ({ops}), found {self._describe(t)}")
        ops_found = [OP_WORDS[self.advance().value]]
        while (self.at_punct("||")
               and self.peek(1).kind is TokenKind.IDENT
               and self.peek(1).value in OP_WORDS):
            self.advance()
            op = OP_WORDS[self.advance().value]
            if op not in ops_found:
                ops_found.append(op)
        return tuple(sorted(ops_found, key=lambda o: o.value))

    def parse_pattern(self) -> EventPattern:
        subject = self.parse_entity_ref()
        op_tok = self.peek()
        ops = self.parse_ops()
        object_ = self.parse_entity_ref()
        if subject.kind is not EntityKind.PROCESS:
            self.error(op_tok, f"the subject of an event pattern must be a proc, "
                               f"'{subject.var}' is a {KIND_LABEL[subject.kind]}")
        self.check_op_compat(ops, object_.kind, op_tok)
        alias = None
        if self.at_word("as"):
            self.advance()
            alias_tok = self.expect_name("an event alias")
            alias = alias_tok.value
            if alias in self.aliases:
                self.error(alias_tok, f"duplicate event alias '{alias}'")
            elif alias in self.var_kinds:
                self.error(alias_tok, f"'{alias}' already names an entity variable")
            else:
                self.aliases.append(alias)
        else:
            self.error(self.peek(), "event pattern needs a name: add 'as evt1'")
        return EventPattern(subject, ops, object_, alias)

    def check_op_compat(self, ops, object_kind: EntityKind, tok: Token) -> None:
        for op in ops:
            if op not in COMPATIBLE_OPS[object_kind]:
                legal = ", ".join(sorted(o.value for o in COMPATIBLE_OPS[object_kind]))
                self.error(tok, f"operation '{op.value}' does not apply to "
                                f"{KIND_LABEL[object_kind]} objects (one of: {legal})")

    def at_pattern_start(self) -> bool:
        t = self.peek()
        if t.kind is not TokenKind.IDENT:
            return False
        if t.value in KIND_WORDS:
            return True
        return t.value not in RESERVED

    def parse_pattern_list(self) -> tuple[EventPattern, ...]:
        patterns = []
        while self.at_pattern_start():
            start = self.pos
            try:
                patterns.append(self.parse_pattern())
            except _Resync:
                self.recover(start)
        return tuple(patterns)

    # -- with / return clauses -------------------------------------------------------

    def parse_with_clause(self) -> tuple[TemporalConstraint, ...]:
        self.expect_word("with")
        out = []
        while True:
            start = self.pos
            try:
                left_tok = self.expect_alias()
                order = self.expect_word("before", "after")
                right_tok = self.expect_alias()
                left, right = left_tok.value, right_tok.value
                if order.value == "after":
                    left, right = right, left
                if left == right:
                    self.error(right_tok, "an event cannot precede itself")
                else:
                    out.append(TemporalConstraint(left, right))
            except _Resync:
                self.recover(start)
            if self.at_punct(","):
                self.advance()
                continue
            break
        return tuple(out)

    def expect_alias(self) -> Token:
        t = self.peek()
        if t.kind is not TokenKind.IDENT or t.value in RESERVED:
            self.fail(t, f"expected an event alias, found {self._describe(t)}")
        if t.value not in self.aliases:
            self.error(t, f"unknown event alias '{t.value}': name a pattern with "
                          f"'as {t.value}' first")
        return self.advance()

    def parse_return_clause(self, allow_aggregates: bool) -> ReturnClause:
        if not self.at_word("return"):
            self.fail(self.peek(), "expected a return clause")
        self.advance()
        distinct = False
        if self.at_word("distinct"):
            self.advance()
            distinct = True
        items = []
        while True:
            start = self.pos
            try:
                items.append(self.parse_return_item(allow_aggregates))
            except _Resync:
                self.recover(start)
            if self.at_punct(","):
                self.advance()
                continue
            break
        return ReturnClause(tuple(items), distinct)

    def parse_return_item(self, allow_aggregates: bool):
        t = self.peek()
        if (t.kind is TokenKind.IDENT and t.value in AGG_WORDS
                and self.peek(1).value == "("):
            if not allow_aggregates:
                self.error(t, f"aggregate '{t.value}' is only valid in a "
                              f"windowed query (add 'window = ..., step = ...')")
            func = self.advance().value
            self.expect_punct("(")
            ev_tok = self.expect_alias()
            attr = None
            if self.at_punct("."):
                self.advance()
                attr_tok = self.advance()
                attr = ATTR_ALIASES.get(str(attr_tok.value), str(attr_tok.value))
                if attr != "amount":
                    self.error(attr_tok, "aggregates range over event amounts: "
                                         f"use {func}({ev_tok.value}.amount)")
                    attr = "amount"
            if attr is None and func != "count":
                self.fail(self.peek(), f"'{func}' needs an attribute, e.g. "
                                       f"{func}({ev_tok.value}.amount)")
            self.expect_punct(")")
            self.expect_word("as")
            name_tok = self.expect_name("an aggregate alias")
            name = name_tok.value
            if name in self.agg_names:
                self.error(name_tok, f"duplicate aggregate alias '{name}'")
            elif name in self.var_kinds or name in self.aliases:
                self.error(name_tok, f"'{name}' already names a variable or event")
            else:
                self.agg_names.append(name)
            return AggregateItem(func, ev_tok.value, attr, name)
        var_tok = self.expect_name("a variable")
        var = var_tok.value
        if var not in self.var_kinds:
            self.error(var_tok, f"unknown variable '{var}'")
        attr = None
        if self.at_punct("."):
            self.advance()
            attr_tok = self.advance()
            attr = ATTR_ALIASES.get(str(attr_tok.value), str(attr_tok.value))
            kind = self.var_kinds.get(var)
            if kind is not None and attr != "agent_id" and attr not in KNOWN_ATTRS[kind]:
                legal = ", ".join(sorted(KNOWN_ATTRS[kind]))
                self.error(attr_tok, f"'{attr_tok.value}' is not an attribute of "
                                     f"{KIND_LABEL[kind]} (one of: {legal}, agent_id)")
        if self.at_punct("["):
            self.fail(self.peek(), "history indexes like name[1] are only valid "
                                   "in the having clause")
        return ReturnItem(var, attr)

    # -- family bodies -------------------------------------------------------------------

    def parse_multievent(self, globals_: GlobalClause) -> MultieventQuery:
        patterns = self.parse_pattern_list()
        if not patterns and not self.diags:
            self.error(self.peek(), "query needs at least one event pattern")
        temporal = ()
        if self.at_word("with"):
            temporal = self.parse_with_clause()
        returns = self.parse_return_clause(allow_aggregates=False)
        if self.at_word("group"):
            self.error(self.peek(), "group by is only valid in a windowed query")
            raise _Resync()
        if self.at_word("having"):
            self.error(self.peek(), "having is only valid in a windowed query")
            raise _Resync()
        self.expect_end()
        return MultieventQuery(globals_, patterns, temporal, returns)

    def parse_dependency(self, globals_: GlobalClause) -> DependencyQuery:
        direction = self.advance().value
        self.expect_punct(":")
        root = self.parse_entity_ref()
        nodes = [root]
        edges = []
        while self.at_punct("->", "<-"):
            arrow_tok = self.advance()
            self.expect_punct("[")
            op_tok = self.peek()
            ops = self.parse_ops()
            self.expect_punct("]")
            node = self.parse_entity_ref()
            left, right = nodes[-1], node
            subj, obj = (left, right) if arrow_tok.value == "->" else (right, left)
            if subj.kind is not EntityKind.PROCESS and obj.kind is EntityKind.PROCESS:
                subj, obj = obj, subj
            if subj.kind is not EntityKind.PROCESS:
                self.error(arrow_tok, "one side of each edge must be a proc")
            else:
                self.check_op_compat(ops, obj.kind, op_tok)
            edges.append(PathEdge(arrow_tok.value, ops))
            nodes.append(node)
        if not edges:
            self.error(self.peek(), "dependency query needs at least one edge "
                                    "like ->[read] proc p")
        returns = self.parse_return_clause(allow_aggregates=False)
        self.expect_end()
        return DependencyQuery(globals_, DependencyPath(direction, tuple(nodes),
                                                        tuple(edges)), returns)

    def parse_anomaly(self, globals_: GlobalClause) -> AnomalyQuery:
        self.expect_word("window")
        self.expect_punct("=")
        win_tok = self.peek()
        window_ms = self.parse_duration()
        self.expect_punct(",")
        self.expect_word("step")
        self.expect_punct("=")
        step_tok = self.peek()
        step_ms = self.parse_duration()
        if step_ms > window_ms:
            self.error(step_tok, "step cannot be larger than the window")
        elif window_ms % step_ms != 0:
            self.error(win_tok, "window must be a whole multiple of step")
        patterns = self.parse_pattern_list()
        if not patterns:
            if not self.diags:
                self.error(self.peek(), "query needs exactly one event pattern")
            raise _Resync()
        if len(patterns) > 1:
            self.error(self.peek(), "a windowed query has exactly one event pattern")
        if self.at_word("with"):
            self.error(self.peek(), "temporal constraints are not valid in a "
                                    "windowed query")
            self.parse_with_clause()
        returns = self.parse_return_clause(allow_aggregates=True)
        group_by = ()
        if self.at_word("group"):
            self.advance()
            self.expect_word("by")
            names = []
            while True:
                tok = self.expect_name("a variable")
                if tok.value not in self.var_kinds:
                    self.error(tok, f"unknown variable '{tok.value}'")
                names.append(tok.value)
                if self.at_punct(","):
                    self.advance()
                    continue
                break
            group_by = tuple(names)
        having = None
        if self.at_word("having"):
            self.advance()
            having = self.parse_having_or()
        self.expect_end()
        self.validate_anomaly(returns, group_by)
        return AnomalyQuery(globals_, window_ms, step_ms, patterns[0],
                            returns, group_by, having)

    def parse_duration(self) -> int:
        value = self.expect_int("a duration like 1 min")
        unit_tok = self.peek()
        if not self.at_word(*UNIT_MS):
            units = ", ".join(UNIT_MS)
            self.fail(unit_tok, f"expected a time unit ({units}), "
                                f"found {self._describe(unit_tok)}")
        unit = self.advance().value
        ms = value * UNIT_MS[unit]
        if ms <= 0:
            self.error(unit_tok, "duration must be positive")
            return 1
        return ms

    def validate_anomaly(self, returns: ReturnClause, group_by) -> None:
        plain = [i for i in returns.items if isinstance(i, ReturnItem)]
        aggs = [i for i in returns.items if isinstance(i, AggregateItem)]
        tail = self.tokens[-1]
        if not aggs:
            self.error(tail, "a windowed query must return at least one "
                             "aggregate like avg(evt.amount) as a")
        grouped = set(group_by)
        for item in plain:
            if item.var not in grouped:
                self.error(tail, f"plain return item '{item.var}' must appear "
                                 f"in group by")
        returned = {i.var for i in plain}
        for var in group_by:
            if var not in returned:
                self.error(tail, f"group by variable '{var}' must also be returned")

    def parse_having_or(self):
        left = self.parse_having_and()
        while self.at_punct("||"):
            self.advance()
            left = BinOp("||", left, self.parse_having_and())
        return left

    def parse_having_and(self):
        left = self.parse_having_cmp()
        while self.at_punct("&&"):
            self.advance()
            left = BinOp("&&", left, self.parse_having_cmp())
        return left

    def parse_having_cmp(self):
        left = self.parse_having_sum()
        if self.at_punct(*CMP_PUNCT):
            op = self.advance().value
            return BinOp(op, left, self.parse_having_sum())
        return left

    def parse_having_sum(self):
        left = self.parse_having_term()
        while self.at_punct("+", "-"):
            op = self.advance().value
            left = BinOp(op, left, self.parse_having_term())
        return left

    def parse_having_term(self):
        left = self.parse_having_factor()
        while self.at_punct("*", "/"):
            op = self.advance().value
            left = BinOp(op, left, self.parse_having_factor())
        return left

    def parse_having_factor(self):
        t = self.peek()
        if self.at_punct("("):
            self.advance()
            inner = self.parse_having_or()
            self.expect_punct(")")
            return inner
        if self.at_punct("-"):
            self.advance()
            num = self.peek()
            if num.kind not in (TokenKind.INT, TokenKind.FLOAT):
                self.fail(num, f"expected a number after '-', "
                               f"found {self._describe(num)}")
            return Number(-self.advance().value)
        if t.kind in (TokenKind.INT, TokenKind.FLOAT):
            return Number(self.advance().value)
        if t.kind is TokenKind.IDENT:
            name_tok = self.advance()
            name = name_tok.value
            if name not in self.agg_names:
                self.error(name_tok, f"unknown aggregate alias '{name}' in having")
            index = 0
            if self.at_punct("["):
                self.advance()
                idx_tok = self.peek()
                index = self.expect_int("a history index like amt[1]")
                self.expect_punct("]")
                if index < 0:
                    self.error(idx_tok, "history index cannot be negative")
                    index = 0
            return AggRef(name, index)
        self.fail(t, f"expected a number or aggregate alias, "
                     f"found {self._describe(t)}")

    def expect_end(self) -> None:
        if not self.at_eof():
            t = self.peek()
            self.error(t, f"unexpected input after the query: {self._describe(t)}")


def parse_with_diagnostics(text: str) -> tuple[Optional[QueryAst], list[Diagnostic]]:
    p = _Parser(text)
    ast = p.parse_query()
    diags = sorted(p.diags, key=lambda d: (d.line, d.col))
    if any(d.severity == "error" for d in diags):
        return None, diags
    return ast, diags


def parse(text: str) -> QueryAst:
    ast, diags = parse_with_diagnostics(text)
    if ast is None:
        raise ParseError(diags)
    return ast


def check(text: str) -> list[Diagnostic]:
    return parse_with_diagnostics(text)[1]
