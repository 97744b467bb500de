"""Trigger-condition DSL: grammar, parser, typechecker, formatter, classifier.

Two syntactic categories, enforced by the grammar and re-checked by the
typechecker:

* a *level* is a boolean condition sampled once per tick (sensor tests,
  activity membership, time-of-day windows, boolean combinations);
* an *event* is true on at most one tick (edges, clock instants, timer
  expiries, sequence completions). Only events fire reminders.

The normative grammar ships as ``docs/dsl.ebnf``. Canonical form uses
lowercase keywords, single spaces, seconds for every duration, zero-padded
HH:MM times, and parentheses only where precedence requires them.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import time
from enum import Enum
from typing import Iterator, Union

from .home import HomeConfig, fmt_hhmm

KEYWORDS = frozenset([
    "at", "rising", "falling", "started", "ended", "held", "after", "seq",
    "when", "hold", "sensor", "active", "between", "not", "and", "or",
    "cancel", "within",
])

CMP_OPS = (">", ">=", "<", "<=")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

class LevelExpr:
    """Marker base for level-valued nodes."""


class EventExpr:
    """Marker base for event-valued nodes."""


class SeqStepNode:
    """Marker base for sequence steps."""


@dataclass(frozen=True)
class SensorBool(LevelExpr):
    sensor_id: str


@dataclass(frozen=True)
class SensorCmp(LevelExpr):
    sensor_id: str
    op: str
    threshold: float


@dataclass(frozen=True)
class Active(LevelExpr):
    activity: str


@dataclass(frozen=True)
class Between(LevelExpr):
    start: time
    end: time


@dataclass(frozen=True)
class Not(LevelExpr):
    child: LevelExpr


@dataclass(frozen=True)
class And(LevelExpr):
    left: LevelExpr
    right: LevelExpr


@dataclass(frozen=True)
class Or(LevelExpr):
    left: LevelExpr
    right: LevelExpr


@dataclass(frozen=True)
class At(EventExpr):
    at: time


@dataclass(frozen=True)
class Rising(EventExpr):
    level: LevelExpr


@dataclass(frozen=True)
class Falling(EventExpr):
    level: LevelExpr


@dataclass(frozen=True)
class Started(EventExpr):
    activity: str


@dataclass(frozen=True)
class Ended(EventExpr):
    activity: str


@dataclass(frozen=True)
class Held(EventExpr):
    level: LevelExpr
    seconds: int


@dataclass(frozen=True)
class After(EventExpr):
    event: EventExpr
    seconds: int
    cancel: LevelExpr | None = None


@dataclass(frozen=True)
class EventStep(SeqStepNode):
    event: EventExpr


@dataclass(frozen=True)
class HoldStep(SeqStepNode):
    level: LevelExpr
    seconds: int


@dataclass(frozen=True)
class Seq(EventExpr):
    steps: tuple[SeqStepNode, ...]
    within: int | None = None


@dataclass(frozen=True)
class When(EventExpr):
    event: EventExpr
    gate: LevelExpr


Node = Union[LevelExpr, EventExpr, SeqStepNode]


def children(node: Node) -> tuple[Node, ...]:
    if isinstance(node, (Rising, Falling)):
        return (node.level,)
    if isinstance(node, Not):
        return (node.child,)
    if isinstance(node, (And, Or)):
        return (node.left, node.right)
    if isinstance(node, Held):
        return (node.level,)
    if isinstance(node, After):
        return (node.event,) if node.cancel is None else (node.event, node.cancel)
    if isinstance(node, Seq):
        return node.steps
    if isinstance(node, When):
        return (node.event, node.gate)
    if isinstance(node, EventStep):
        return (node.event,)
    if isinstance(node, HoldStep):
        return (node.level,)
    return ()


def iter_nodes(root: Node, path: str = "0") -> Iterator[tuple[str, Node]]:
    """Depth-first walk yielding (path, node). The root is "0" and the
    i-th child of a node at P is "P.i" with i starting at 1; these paths
    key all per-node blackboard state."""
    yield path, root
    for i, child in enumerate(children(root), start=1):
        yield from iter_nodes(child, f"{path}.{i}")


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, KEYWORD, TIME, DUR, NUMBER, CMP, LPAREN, RPAREN, COMMA, COLON, EOF
    value: object
    line: int
    col: int
    text: str = ""


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int, expected: set[str] | None = None):
        self.line = line
        self.col = col
        self.expected = frozenset(expected or ())
        detail = f"{line}:{col}: {message}"
        if expected:
            detail += f" (expected one of: {', '.join(sorted(expected))})"
        super().__init__(detail)


_DUR_MULT = {"s": 1, "m": 60, "h": 3600}

_TOKEN_RE = re.compile(
    r"""
    (?P<WS>\s+)
  | (?P<TIME>\d{1,2}:\d{2})
  | (?P<DUR>\d+[smh](?![a-z0-9_]))
  | (?P<NUMBER>\d+(?:\.\d+)?)
  | (?P<IDENT>[a-z_][a-z0-9_]*)
  | (?P<CMP>>=|<=|>|<)
  | (?P<LPAREN>\()
  | (?P<RPAREN>\))
  | (?P<COMMA>,)
  | (?P<COLON>:)
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup or ""
        raw = m.group()
        if kind != "WS":
            value: object = raw
            if kind == "TIME":
                hh, mm = raw.split(":")
                if int(hh) > 23 or int(mm) > 59:
                    raise ParseError(f"invalid time of day {raw!r}", line, col)
                value = time(int(hh), int(mm))
            elif kind == "DUR":
                value = int(raw[:-1]) * _DUR_MULT[raw[-1]]
            elif kind == "NUMBER":
                value = float(raw)
            elif kind == "IDENT" and raw in KEYWORDS:
                kind = "KEYWORD"
            tokens.append(Token(kind, value, line, col, raw))
        newlines = raw.count("\n")
        if newlines:
            line += newlines
            col = len(raw) - raw.rfind("\n")
        else:
            col += len(raw)
        pos = m.end()
    tokens.append(Token("EOF", None, line, col, ""))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent over the normative grammar)
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def error(self, message: str, expected: set[str] | None = None) -> ParseError:
        tok = self.peek()
        got = tok.text or "end of input"
        return ParseError(f"{message}, got {got!r}", tok.line, tok.col, expected)

    _SURFACE = {"LPAREN": "(", "RPAREN": ")", "COMMA": ",", "COLON": ":",
                "TIME": "<hh:mm>", "DUR": "<duration>", "NUMBER": "<number>",
                "IDENT": "<identifier>"}

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            raise self.error("unexpected token",
                             {text or self._SURFACE.get(kind, kind)})
        return self.advance()

    def at_keyword(self, *names: str) -> bool:
        tok = self.peek()
        return tok.kind == "KEYWORD" and tok.text in names

    # events ----------------------------------------------------------------

    def parse_event(self) -> EventExpr:
        event = self.parse_event_atom()
        while self.at_keyword("when"):
            self.advance()
            gate = self.parse_level()
            event = When(event, gate)
        return event

    def parse_event_atom(self) -> EventExpr:
        tok = self.peek()
        if tok.kind == "LPAREN":
            self.advance()
            inner = self.parse_event()
            self.expect("RPAREN")
            return inner
        if tok.kind != "KEYWORD":
            raise self.error("expected an event expression",
                            {"at", "rising", "falling", "started", "ended",
                             "held", "after", "seq", "("})
        name = tok.text
        if name == "at":
            self.advance()
            self.expect("LPAREN")
            t = self.expect("TIME")
            self.expect("RPAREN")
            return At(t.value)  # type: ignore[arg-type]
        if name in ("rising", "falling"):
            self.advance()
            self.expect("LPAREN")
            level = self.parse_level()
            self.expect("RPAREN")
            return Rising(level) if name == "rising" else Falling(level)
        if name in ("started", "ended"):
            self.advance()
            self.expect("LPAREN")
            ident = self.expect("IDENT")
            self.expect("RPAREN")
            return Started(ident.text) if name == "started" else Ended(ident.text)
        if name == "held":
            self.advance()
            self.expect("LPAREN")
            level = self.parse_level()
            self.expect("COMMA")
            dur = self.parse_duration()
            self.expect("RPAREN")
            return Held(level, dur)
        if name == "after":
            self.advance()
            self.expect("LPAREN")
            event = self.parse_event()
            self.expect("COMMA")
            dur = self.parse_duration()
            cancel = None
            if self.peek().kind == "COMMA":
                self.advance()
                self.expect("KEYWORD", "cancel")
                self.expect("COLON")
                cancel = self.parse_level()
            self.expect("RPAREN")
            return After(event, dur, cancel)
        if name == "seq":
            return self.parse_seq()
        raise self.error("expected an event expression",
                        {"at", "rising", "falling", "started", "ended",
                         "held", "after", "seq", "("})

    def parse_seq(self) -> Seq:
        opener = self.peek()
        self.expect("KEYWORD", "seq")
        self.expect("LPAREN")
        steps: list[SeqStepNode] = [self.parse_step()]
        within: int | None = None
        while self.peek().kind == "COMMA":
            self.advance()
            if self.at_keyword("within"):
                self.advance()
                self.expect("COLON")
                within = self.parse_duration()
                break
            steps.append(self.parse_step())
        self.expect("RPAREN")
        if len(steps) < 2:
            raise ParseError("seq needs at least 2 steps", opener.line, opener.col)
        return Seq(tuple(steps), within)

    def parse_step(self) -> SeqStepNode:
        if self.at_keyword("hold"):
            self.advance()
            self.expect("LPAREN")
            level = self.parse_level()
            self.expect("COMMA")
            dur = self.parse_duration()
            self.expect("RPAREN")
            return HoldStep(level, dur)
        return EventStep(self.parse_event())

    def parse_duration(self) -> int:
        tok = self.peek()
        if tok.kind != "DUR":
            raise self.error("expected a duration", {"<int>s", "<int>m", "<int>h"})
        self.advance()
        seconds = int(tok.value)  # type: ignore[arg-type]
        if seconds <= 0:
            raise ParseError("duration must be positive", tok.line, tok.col)
        return seconds

    # levels ------------------------------------------------------------------

    def parse_level(self) -> LevelExpr:
        left = self.parse_and()
        while self.at_keyword("or"):
            self.advance()
            left = Or(left, self.parse_and())
        return left

    def parse_and(self) -> LevelExpr:
        left = self.parse_not()
        while self.at_keyword("and"):
            self.advance()
            left = And(left, self.parse_not())
        return left

    def parse_not(self) -> LevelExpr:
        if self.at_keyword("not"):
            self.advance()
            return Not(self.parse_not())
        return self.parse_level_atom()

    def parse_level_atom(self) -> LevelExpr:
        tok = self.peek()
        if tok.kind == "LPAREN":
            self.advance()
            inner = self.parse_level()
            self.expect("RPAREN")
            return inner
        if tok.kind != "KEYWORD":
            raise self.error("expected a level expression",
                            {"sensor", "active", "between", "not", "("})
        if tok.text == "sensor":
            self.advance()
            self.expect("LPAREN")
            ident = self.expect("IDENT")
            self.expect("RPAREN")
            if self.peek().kind == "CMP":
                op = self.advance().text
                num = self.peek()
                if num.kind != "NUMBER":
                    raise self.error("expected a number after comparison", {"<number>"})
                self.advance()
                return SensorCmp(ident.text, op, float(num.value))  # type: ignore[arg-type]
            return SensorBool(ident.text)
        if tok.text == "active":
            self.advance()
            self.expect("LPAREN")
            ident = self.expect("IDENT")
            self.expect("RPAREN")
            return Active(ident.text)
        if tok.text == "between":
            self.advance()
            self.expect("LPAREN")
            t1 = self.expect("TIME")
            self.expect("COMMA")
            t2 = self.expect("TIME")
            self.expect("RPAREN")
            return Between(t1.value, t2.value)  # type: ignore[arg-type]
        raise self.error("expected a level expression",
                        {"sensor", "active", "between", "not", "("})


@dataclass(frozen=True)
class TriggerProgram:
    root: EventExpr
    source_text: str
    canonical_text: str


def parse(text: str) -> TriggerProgram:
    parser = _Parser(text)
    root = parser.parse_event()
    trailing = parser.peek()
    if trailing.kind != "EOF":
        raise parser.error("trailing input after program")
    return TriggerProgram(root, text, format_expr(root))


# ---------------------------------------------------------------------------
# Canonical formatting
# ---------------------------------------------------------------------------

def _fmt_number(value: float) -> str:
    return repr(float(value))


def _fmt_dur(seconds: int) -> str:
    return f"{seconds}s"


_LEVEL_PREC = {Or: 1, And: 2, Not: 3}


def _level_prec(node: LevelExpr) -> int:
    return _LEVEL_PREC.get(type(node), 4)


def _fmt_level(node: LevelExpr, min_prec: int = 1) -> str:
    if isinstance(node, SensorBool):
        s = f"sensor({node.sensor_id})"
    elif isinstance(node, SensorCmp):
        s = f"sensor({node.sensor_id}) {node.op} {_fmt_number(node.threshold)}"
    elif isinstance(node, Active):
        s = f"active({node.activity})"
    elif isinstance(node, Between):
        s = f"between({fmt_hhmm(node.start)}, {fmt_hhmm(node.end)})"
    elif isinstance(node, Not):
        s = f"not {_fmt_level(node.child, 3)}"
    elif isinstance(node, And):
        s = f"{_fmt_level(node.left, 2)} and {_fmt_level(node.right, 3)}"
    elif isinstance(node, Or):
        s = f"{_fmt_level(node.left, 1)} or {_fmt_level(node.right, 2)}"
    else:
        raise TypeError(f"not a level node: {node!r}")
    return f"({s})" if _level_prec(node) < min_prec else s


def _fmt_step(step: SeqStepNode) -> str:
    if isinstance(step, HoldStep):
        return f"hold({_fmt_level(step.level)}, {_fmt_dur(step.seconds)})"
    return format_expr(step.event)  # type: ignore[union-attr]


def format_expr(node: EventExpr) -> str:
    if isinstance(node, At):
        return f"at({fmt_hhmm(node.at)})"
    if isinstance(node, Rising):
        return f"rising({_fmt_level(node.level)})"
    if isinstance(node, Falling):
        return f"falling({_fmt_level(node.level)})"
    if isinstance(node, Started):
        return f"started({node.activity})"
    if isinstance(node, Ended):
        return f"ended({node.activity})"
    if isinstance(node, Held):
        return f"held({_fmt_level(node.level)}, {_fmt_dur(node.seconds)})"
    if isinstance(node, After):
        if node.cancel is None:
            return f"after({format_expr(node.event)}, {_fmt_dur(node.seconds)})"
        return (f"after({format_expr(node.event)}, {_fmt_dur(node.seconds)}, "
                f"cancel: {_fmt_level(node.cancel)})")
    if isinstance(node, Seq):
        parts = [_fmt_step(s) for s in node.steps]
        if node.within is not None:
            parts.append(f"within: {_fmt_dur(node.within)}")
        return f"seq({', '.join(parts)})"
    if isinstance(node, When):
        return f"{format_expr(node.event)} when {_fmt_level(node.gate)}"
    raise TypeError(f"not an event node: {node!r}")


def format_program(program: TriggerProgram) -> str:
    return format_expr(program.root)


# ---------------------------------------------------------------------------
# Typechecking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TypeIssue:
    code: str  # unknown_sensor | unknown_activity | kind_mismatch | invalid_value
    path: str
    message: str


class TypecheckError(ValueError):
    def __init__(self, issues: list[TypeIssue]):
        self.issues = issues
        super().__init__("; ".join(f"{i.path}: {i.message}" for i in issues))


@dataclass(frozen=True)
class ValidatedProgram:
    program: TriggerProgram
    home: HomeConfig

    @property
    def root(self) -> EventExpr:
        return self.program.root

    @property
    def canonical_text(self) -> str:
        return self.program.canonical_text


def check_program(program: TriggerProgram, home: HomeConfig) -> list[TypeIssue]:
    """Collect every type issue instead of stopping at the first."""
    issues: list[TypeIssue] = []
    for path, node in iter_nodes(program.root):
        if isinstance(node, (SensorBool, SensorCmp)):
            descriptor = home.sensor(node.sensor_id)
            if descriptor is None:
                issues.append(TypeIssue("unknown_sensor", path,
                                        f"sensor {node.sensor_id!r} is not configured"))
                continue
            if isinstance(node, SensorCmp) and descriptor.kind != "power":
                issues.append(TypeIssue("kind_mismatch", path,
                                        f"comparison needs a power sensor, {node.sensor_id!r} is {descriptor.kind}"))
            if isinstance(node, SensorBool) and descriptor.kind == "power":
                issues.append(TypeIssue("kind_mismatch", path,
                                        f"power sensor {node.sensor_id!r} needs a comparison"))
            if isinstance(node, SensorCmp):
                threshold = node.threshold
                if threshold != threshold or threshold in (float("inf"), float("-inf")):
                    issues.append(TypeIssue("invalid_value", path, "threshold must be finite"))
        elif isinstance(node, (Active, Started, Ended)):
            label = node.activity
            if home.activity(label) is None:
                issues.append(TypeIssue("unknown_activity", path,
                                        f"activity {label!r} is not configured"))
        elif isinstance(node, (Held, HoldStep, After)):
            if node.seconds <= 0:
                issues.append(TypeIssue("invalid_value", path, "duration must be positive"))
        elif isinstance(node, Seq):
            if len(node.steps) < 2:
                issues.append(TypeIssue("invalid_value", path, "seq needs at least 2 steps"))
            if node.within is not None and node.within <= 0:
                issues.append(TypeIssue("invalid_value", path, "within must be positive"))
    return issues


def typecheck(program: TriggerProgram, home: HomeConfig) -> ValidatedProgram:
    issues = check_program(program, home)
    if issues:
        raise TypecheckError(issues)
    return ValidatedProgram(program, home)


def parse_validated(text: str, home: HomeConfig) -> ValidatedProgram:
    return typecheck(parse(text), home)


# ---------------------------------------------------------------------------
# Trigger classification
# ---------------------------------------------------------------------------

class TriggerKind(str, Enum):
    TIME_BASED = "time_based"
    ACTIVITY_BASED = "activity_based"
    SENSOR_BASED = "sensor_based"
    STATE_MACHINE = "state_machine"


def _level_mentions(level: LevelExpr, types: tuple[type, ...]) -> bool:
    return any(isinstance(n, types) for _, n in iter_nodes(level))


def classify(validated: ValidatedProgram) -> TriggerKind:
    """Primary-trigger classification. Rules apply in order; `when` gates
    and Between are secondary conditions and never change the class."""
    root = validated.root
    if any(isinstance(n, (Seq, Held, After)) for _, n in iter_nodes(root)):
        return TriggerKind.STATE_MACHINE
    primary = root
    while isinstance(primary, When):
        primary = primary.event
    if isinstance(primary, (Started, Ended)):
        return TriggerKind.ACTIVITY_BASED
    if isinstance(primary, (Rising, Falling)):
        if _level_mentions(primary.level, (Active,)):
            return TriggerKind.ACTIVITY_BASED
        if _level_mentions(primary.level, (SensorBool, SensorCmp)):
            return TriggerKind.SENSOR_BASED
    return TriggerKind.TIME_BASED
