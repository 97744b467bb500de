"""Deterministic scenario replay and the brute-force reference evaluator.

The oracle here recomputes every node's full tick-by-tick history from
materialized value tables instead of carrying blackboard state, so it is
structurally independent of the incremental runtime while implementing the
same normative semantics. It anchors every expected firing used in tests
and is deliberately the slow, obviously-correct path.

The scoring harness mirrors the three-way correctness labeling used to
grade generated reminders: fully matching fire times are correct, partial
overlap is partially correct, and disjoint sets are incorrect.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from . import dsl
from .home import HomeConfig, default_value, validate_sensor_value
from .runtime import Engine, Notification, RuntimeReminder


@dataclass(frozen=True)
class TraceEvent:
    t: float  # offset seconds from trace start
    kind: str  # "sensor" | "activity"
    target: str  # sensor id, or activity label ("none" clears)
    value: bool | float | None = None


@dataclass(frozen=True)
class Trace:
    home_ref: str
    start: datetime
    duration: float
    events: tuple[TraceEvent, ...]

    def sorted_events(self) -> list[TraceEvent]:
        return sorted(self.events, key=lambda e: e.t)


class UnknownSensorInTrace(KeyError):
    pass


def load_trace(text: str) -> Trace:
    """Trace files are JSONL: a header line {home_ref, start, duration}
    followed by one event object {t, kind, target, value?} per line."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty trace document")
    header = json.loads(lines[0])
    events = []
    for line in lines[1:]:
        doc = json.loads(line)
        events.append(TraceEvent(float(doc["t"]), doc["kind"], doc["target"],
                                 doc.get("value")))
    events.sort(key=lambda e: e.t)
    duration = float(header.get("duration", events[-1].t if events else 0.0))
    return Trace(header.get("home_ref", ""), datetime.fromisoformat(header["start"]),
                 duration, tuple(events))


def dump_trace(trace: Trace) -> str:
    lines = [json.dumps({"home_ref": trace.home_ref,
                         "start": trace.start.isoformat(sep=" "),
                         "duration": trace.duration})]
    for event in trace.sorted_events():
        doc: dict = {"t": event.t, "kind": event.kind, "target": event.target}
        if event.value is not None:
            doc["value"] = event.value
        lines.append(json.dumps(doc))
    return "\n".join(lines) + "\n"


def _validate_trace(home: HomeConfig, trace: Trace) -> None:
    for event in trace.events:
        if event.kind == "sensor":
            descriptor = home.sensor(event.target)
            if descriptor is None:
                raise UnknownSensorInTrace(event.target)
            validate_sensor_value(descriptor.kind, event.value)
        elif event.kind == "activity":
            if event.target != "none" and home.activity(event.target) is None:
                raise UnknownSensorInTrace(event.target)
        else:
            raise ValueError(f"unknown trace event kind {event.kind!r}")


def tick_times(trace: Trace, tick_interval: float) -> list[datetime]:
    steps = int(trace.duration // tick_interval)
    return [trace.start + timedelta(seconds=k * tick_interval)
            for k in range(steps + 1)]


def run_simulation(home: HomeConfig, reminders: list[RuntimeReminder],
                   trace: Trace, tick_interval: float = 1.0) -> list[Notification]:
    """Replay a trace against an engine: the virtual clock steps from the
    trace start through its duration, ingesting every event at or before
    each tick time before evaluating that tick."""
    _validate_trace(home, trace)
    engine = Engine(home, tick_interval)
    for reminder in reminders:
        engine.add(reminder)
    events = trace.sorted_events()
    pointer = 0
    notifications: list[Notification] = []
    for now in tick_times(trace, tick_interval):
        offset = (now - trace.start).total_seconds()
        while pointer < len(events) and events[pointer].t <= offset:
            event = events[pointer]
            if event.kind == "sensor":
                engine.ingest_partial_snapshot({event.target: event.value})
            else:
                engine.set_activity(None if event.target == "none" else event.target)
            pointer += 1
        notifications.extend(engine.advance(now))
    return notifications


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

class _Tables:
    """Materialized per-tick values for one (trace, interval) pair."""

    def __init__(self, home: HomeConfig, trace: Trace, tick_interval: float):
        self.times = tick_times(trace, tick_interval)
        self.epochs = [(t - datetime(1970, 1, 1)).total_seconds() for t in self.times]
        self.n = len(self.times)
        self.sensor_values: dict[str, list] = {}
        self.activity: list[str | None] = []
        current: dict[str, bool | float] = {s.id: default_value(s.kind)
                                            for s in home.sensors}
        activity: str | None = None
        events = trace.sorted_events()
        pointer = 0
        for k, now in enumerate(self.times):
            offset = (now - trace.start).total_seconds()
            while pointer < len(events) and events[pointer].t <= offset:
                event = events[pointer]
                if event.kind == "sensor":
                    current[event.target] = event.value  # validated by caller
                else:
                    activity = None if event.target == "none" else event.target
                pointer += 1
            for sensor_id, value in current.items():
                self.sensor_values.setdefault(sensor_id, []).append(value)
            self.activity.append(activity)

    def level(self, node: dsl.LevelExpr, k: int) -> bool:
        if isinstance(node, dsl.SensorBool):
            return bool(self.sensor_values[node.sensor_id][k])
        if isinstance(node, dsl.SensorCmp):
            value = float(self.sensor_values[node.sensor_id][k])
            return {">": value > node.threshold, ">=": value >= node.threshold,
                    "<": value < node.threshold, "<=": value <= node.threshold}[node.op]
        if isinstance(node, dsl.Active):
            return self.activity[k] == node.activity
        if isinstance(node, dsl.Between):
            t = self.times[k].time()
            if node.start == node.end:
                return False
            if node.start < node.end:
                return node.start <= t < node.end
            return t >= node.start or t < node.end
        if isinstance(node, dsl.Not):
            return not self.level(node.child, k)
        if isinstance(node, dsl.And):
            return self.level(node.left, k) and self.level(node.right, k)
        if isinstance(node, dsl.Or):
            return self.level(node.left, k) or self.level(node.right, k)
        raise TypeError(f"not a level node: {node!r}")


class _Oracle:
    """Computes, for every event node and activation tick a, the full fire
    table over ticks k > a with node state fresh after a. The whole history
    is derived from the value tables by forward scans; nothing is shared
    with the incremental evaluator but the normative rules."""

    def __init__(self, tables: _Tables):
        self.tb = tables
        self.cache: dict[tuple[int, int], list[bool]] = {}

    def fires(self, node: dsl.EventExpr, activation: int) -> list[bool]:
        key = (id(node), activation)
        table = self.cache.get(key)
        if table is None:
            table = self._compute(node, activation)
            self.cache[key] = table
        return table

    def _compute(self, node: dsl.EventExpr, a: int) -> list[bool]:
        tb = self.tb
        n = tb.n
        out = [False] * n

        if isinstance(node, dsl.At):
            last_fired_day = None
            for k in range(a + 1, n):
                day = tb.times[k].date()
                if day != last_fired_day and tb.times[k].time() >= node.at:
                    out[k] = True
                    last_fired_day = day
            return out

        if isinstance(node, (dsl.Rising, dsl.Falling)):
            for k in range(a + 1, n):
                cur = tb.level(node.level, k)
                prev = tb.level(node.level, k - 1) if k - 1 > a else False
                out[k] = (cur and not prev) if isinstance(node, dsl.Rising) \
                    else (prev and not cur)
            return out

        if isinstance(node, (dsl.Started, dsl.Ended)):
            for k in range(a + 1, n):
                cur = tb.activity[k]
                prev = tb.activity[k - 1] if k - 1 > a else None
                if isinstance(node, dsl.Started):
                    out[k] = cur == node.activity and prev != node.activity
                else:
                    out[k] = prev == node.activity and cur != node.activity
            return out

        if isinstance(node, dsl.Held):
            since: float | None = None
            fired_run = False
            for k in range(a + 1, n):
                if tb.level(node.level, k):
                    if since is None:
                        since = tb.epochs[k]
                    if not fired_run and tb.epochs[k] - since >= node.seconds:
                        out[k] = True
                        fired_run = True
                else:
                    since = None
                    fired_run = False
            return out

        if isinstance(node, dsl.After):
            sub = self.fires(node.event, a)
            deadline: float | None = None
            for k in range(a + 1, n):
                if sub[k]:
                    deadline = tb.epochs[k] + node.seconds
                if node.cancel is not None and tb.level(node.cancel, k):
                    deadline = None
                if deadline is not None and tb.epochs[k] >= deadline:
                    out[k] = True
                    deadline = None
            return out

        if isinstance(node, dsl.When):
            sub = self.fires(node.event, a)
            for k in range(a + 1, n):
                out[k] = sub[k] and tb.level(node.gate, k)
            return out

        if isinstance(node, dsl.Seq):
            return self._compute_seq(node, a)

        raise TypeError(f"not an event node: {node!r}")

    def _compute_seq(self, node: dsl.Seq, a: int) -> list[bool]:
        tb = self.tb
        n = tb.n
        out = [False] * n
        steps = node.steps
        idx = 0
        step_act = a
        hold_entry: float | None = None
        t_first: float | None = None

        def reset(k: int) -> None:
            nonlocal idx, step_act, hold_entry, t_first
            idx = 0
            step_act = k
            hold_entry = None
            t_first = None

        def advance(k: int) -> bool:
            """Move past the step completed at tick k; True = sequence fired."""
            nonlocal idx, step_act, hold_entry, t_first
            if idx == 0:
                t_first = tb.epochs[k]
            idx += 1
            if idx >= len(steps):
                reset(k)
                return True
            step_act = k
            hold_entry = None
            step = steps[idx]
            if isinstance(step, dsl.HoldStep):
                if not tb.level(step.level, k):
                    reset(k)
                else:
                    hold_entry = tb.epochs[k]
            return False

        for k in range(a + 1, n):
            if (node.within is not None and idx > 0 and t_first is not None
                    and tb.epochs[k] - t_first > node.within):
                reset(k)
                continue
            step = steps[idx]
            if isinstance(step, dsl.EventStep):
                if k > step_act and self.fires(step.event, step_act)[k]:
                    out[k] = advance(k)
            else:
                if k <= step_act:
                    continue
                if not tb.level(step.level, k):
                    reset(k)
                    continue
                if hold_entry is None:
                    hold_entry = tb.epochs[k]
                if tb.epochs[k] - hold_entry >= step.seconds:
                    out[k] = advance(k)
        return out


def brute_force_oracle(program: dsl.ValidatedProgram, trace: Trace,
                       tick_interval: float = 1.0) -> list[float]:
    """Fire offsets (seconds from trace start) computed from scratch."""
    _validate_trace(program.home, trace)
    tables = _Tables(program.home, trace, tick_interval)
    oracle = _Oracle(tables)
    table = oracle.fires(program.root, -1)
    return [(tables.times[k] - trace.start).total_seconds()
            for k in range(tables.n) if table[k]]


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpectedFiring:
    reminder_id: str
    offsets: tuple[float, ...]


class ScoreLabel(str):
    pass


CORRECT = ScoreLabel("correct")
PARTIALLY_CORRECT = ScoreLabel("partially_correct")
INCORRECT = ScoreLabel("incorrect")


def score_run(expected: ExpectedFiring, actual_offsets: list[float],
              tolerance: float = 0.0) -> ScoreLabel:
    """Greedy multiset matching of fire times within tolerance. Full match
    both ways = correct; at least one match but any miss or extra =
    partially correct; no overlap = incorrect."""
    remaining = sorted(actual_offsets)
    matched = 0
    for want in sorted(expected.offsets):
        best = None
        for i, got in enumerate(remaining):
            if abs(got - want) <= tolerance:
                best = i
                break
            if got > want + tolerance:
                break
        if best is not None:
            remaining.pop(best)
            matched += 1
    if matched == len(expected.offsets) and not remaining and expected.offsets:
        return CORRECT
    if not expected.offsets and not actual_offsets:
        return CORRECT
    if matched >= 1:
        return PARTIALLY_CORRECT
    return INCORRECT


# ---------------------------------------------------------------------------
# Corpus evaluation
# ---------------------------------------------------------------------------

@dataclass
class CorpusEntry:
    id: str
    script: list[dict]
    trace: Trace
    expected_offsets: tuple[float, ...]
    tick_interval: float = 1.0
    expect_dsl: str | None = None
    expect_kind: str | None = None
    diagnosis_hint: str | None = None


@dataclass
class CorpusRow:
    id: str
    score: str
    kind: str | None = None
    turns: int | None = None
    dsl: str | None = None
    error: str | None = None
    note: str | None = None


@dataclass
class CorpusReport:
    rows: list[CorpusRow] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.rows)

    def label_counts(self) -> dict[str, int]:
        counts = {CORRECT: 0, PARTIALLY_CORRECT: 0, INCORRECT: 0}
        for row in self.rows:
            counts[row.score] = counts.get(row.score, 0) + 1
        return counts

    def label_proportions(self) -> dict[str, float]:
        if not self.rows:
            return {CORRECT: 0.0, PARTIALLY_CORRECT: 0.0, INCORRECT: 0.0}
        counts = self.label_counts()
        return {label: count / self.size for label, count in counts.items()}

    def kind_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for row in self.rows:
            if row.kind:
                counts[row.kind] = counts.get(row.kind, 0) + 1
        return counts

    def turn_distribution(self) -> dict[int, int]:
        dist: dict[int, int] = {}
        for row in self.rows:
            if row.turns is not None:
                dist[row.turns] = dist.get(row.turns, 0) + 1
        return dist

    def mean_turns(self) -> float:
        turns = [row.turns for row in self.rows if row.turns is not None]
        return sum(turns) / len(turns) if turns else 0.0

    def to_json(self) -> dict:
        return {
            "rows": [vars(row) for row in self.rows],
            "size": self.size,
            "label_counts": self.label_counts(),
            "label_proportions": self.label_proportions(),
            "kind_counts": self.kind_counts(),
            "turn_distribution": {str(k): v for k, v in sorted(self.turn_distribution().items())},
            "mean_turns": self.mean_turns(),
        }

    def to_table(self) -> str:
        lines = [f"{'id':<24} {'score':<18} {'kind':<16} {'turns':>5}  note"]
        for row in self.rows:
            note = row.error or row.note or ""
            lines.append(f"{row.id:<24} {row.score:<18} {row.kind or '-':<16} "
                         f"{row.turns if row.turns is not None else '-':>5}  {note}")
        counts = self.label_counts()
        lines.append(f"total {self.size}: {counts[CORRECT]} correct, "
                     f"{counts[PARTIALLY_CORRECT]} partially correct, "
                     f"{counts[INCORRECT]} incorrect; mean turns "
                     f"{self.mean_turns():.2f}")
        return "\n".join(lines)


def evaluate_corpus(entries: list[CorpusEntry], home: HomeConfig,
                    make_ctx) -> CorpusReport:
    """Author each scripted session, compile it, replay its trace, and
    score the firings; fixture-level failures are recorded per row and
    never abort the batch. ``make_ctx(entry)`` builds the authoring context
    (the trace start date must drive "today"/"tomorrow" resolution)."""
    from .authoring import run_scripted_session

    report = CorpusReport()
    for entry in entries:
        row = CorpusRow(id=entry.id, score=INCORRECT)
        try:
            ctx = make_ctx(entry)
            compiled, turns = run_scripted_session(entry.script, home, ctx)
            row.turns = turns
            row.kind = compiled.kind.value
            row.dsl = compiled.program.canonical_text
            if entry.expect_dsl is not None and row.dsl != entry.expect_dsl:
                row.note = f"dsl mismatch: {row.dsl!r} != {entry.expect_dsl!r}"
            if entry.expect_kind is not None and row.kind != entry.expect_kind:
                row.note = f"kind mismatch: {row.kind} != {entry.expect_kind}"
            reminder = RuntimeReminder(id=entry.id, intent=compiled.intent,
                                       program=compiled.program)
            notifications = run_simulation(home, [reminder], entry.trace,
                                           entry.tick_interval)
            offsets = [(n.fired_at - entry.trace.start).total_seconds()
                       for n in notifications]
            row.score = score_run(ExpectedFiring(entry.id, entry.expected_offsets),
                                  offsets, tolerance=entry.tick_interval)
            if row.note:
                row.score = INCORRECT
        except Exception as exc:  # noqa: BLE001 - isolation per fixture
            row.error = f"{type(exc).__name__}: {exc}"
            if entry.diagnosis_hint:
                row.note = entry.diagnosis_hint
            row.score = INCORRECT
        report.rows.append(row)
    return report
