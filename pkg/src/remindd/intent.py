"""Structured reminder intents: slots, normalization, and rendering.

A raw slot map (WHAT/WHEN/DATE/RECURRENCE/PRIORITY strings, as collected
by the conversation) normalizes into a :class:`ReminderIntent` with
defaults applied: date "today" for one-time reminders, recurrence "once",
priority "medium", times in 24-hour form.

The phrase recognizers here are the deterministic floor under any smarter
assistant backend: lowercase, strip punctuation, longest match against the
home's event phrases, then activity phrases, then the vague-time table,
then clock-time patterns. Same input, same output, every time.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta

from .home import HomeConfig, TimeWindow, fmt_hhmm, lookup_window

WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday",
            "saturday", "sunday")

PRIORITIES = ("high", "medium", "low")


class MissingSlot(ValueError):
    def __init__(self, slot: str):
        self.slot = slot
        super().__init__(f"required slot {slot} is missing")


class UnparseableWhen(ValueError):
    def __init__(self, text: str):
        self.text = text
        super().__init__(f"cannot interpret when-expression: {text!r}")


# ---------------------------------------------------------------------------
# When-specifications
# ---------------------------------------------------------------------------

class WhenSpec:
    """Marker base for the tagged union of trigger specifications."""


@dataclass(frozen=True)
class ClockTime(WhenSpec):
    at: time


@dataclass(frozen=True)
class InferredTime(WhenSpec):
    phrase: str
    window: TimeWindow


@dataclass(frozen=True)
class ActivityEvent(WhenSpec):
    label: str
    phase: str  # "start" | "end"


@dataclass(frozen=True)
class SensorEvent(WhenSpec):
    snippet: str  # DSL event expression, verbatim
    phrase: str | None = None


@dataclass(frozen=True)
class HoldStepSpec:
    level_snippet: str
    seconds: int


@dataclass(frozen=True)
class EventStepSpec:
    event_snippet: str


@dataclass(frozen=True)
class SequenceSpec(WhenSpec):
    steps: tuple[EventStepSpec | HoldStepSpec, ...]
    within: int | None = None
    phrase: str | None = None


@dataclass(frozen=True)
class Delay(WhenSpec):
    base: WhenSpec
    seconds: int


@dataclass(frozen=True)
class BeforeActivity(WhenSpec):
    """Representable but never detectable: firing would require predicting
    the activity's start."""
    label: str


@dataclass(frozen=True)
class DateSpec:
    kind: str  # unrestricted | today | tomorrow | specific
    on: date | None = None

    @staticmethod
    def unrestricted() -> "DateSpec":
        return DateSpec("unrestricted", None)


@dataclass(frozen=True)
class Recurrence:
    kind: str  # once | daily | weekly
    weekday: int | None = None  # 0 = Monday, for weekly

    @staticmethod
    def once() -> "Recurrence":
        return Recurrence("once")


@dataclass(frozen=True)
class ReminderIntent:
    what: str
    when_spec: WhenSpec
    date: DateSpec
    recurrence: Recurrence
    priority: str = "medium"


@dataclass(frozen=True)
class AuthoringContext:
    """Context embedded into slot interpretation: the current date/time and
    the home-derived phrase tables. Built via :meth:`for_home` for a full
    home; a bare context (time mappings only) resolves vague phrases to
    inferred time windows instead of activities."""
    current_date: date
    now: datetime
    time_mappings: dict[str, TimeWindow] = field(default_factory=dict)
    event_phrases: dict[str, str] = field(default_factory=dict)
    activity_phrases: dict[str, str] = field(default_factory=dict)

    @staticmethod
    def for_home(home: HomeConfig, now: datetime) -> "AuthoringContext":
        return AuthoringContext(now.date(), now, dict(home.time_mappings),
                                dict(home.event_phrases), dict(home.activity_phrases))

    def _lookup_window(self, phrase: str) -> TimeWindow | None:
        return lookup_window(self.time_mappings, phrase)


# ---------------------------------------------------------------------------
# Phrase normalization helpers
# ---------------------------------------------------------------------------

_PRONOUNS = {"i": "you", "me": "you", "my": "your", "mine": "yours",
             "im": "you are", "we": "you", "our": "your"}

_PUNCT_RE = re.compile(r"[.!?;]+$")


def normalize_phrase(text: str) -> str:
    """Lowercase, strip closing punctuation, collapse spaces, and flip
    first-person pronouns to the second-person form the phrase tables use."""
    words = _PUNCT_RE.sub("", text.strip().lower()).split()
    out = [_PRONOUNS.get(w, w) for w in words]
    return " ".join(out)


_CLOCK_AMPM_RE = re.compile(r"^(\d{1,2})(?::(\d{2}))?\s*(am|pm)$")
_CLOCK_24_RE = re.compile(r"^(\d{1,2}):(\d{2})$")


def parse_clock(text: str) -> time | None:
    """Strict clock-time parser. Accepts "7pm", "8:15 am", "19:00"."""
    text = text.strip().lower()
    if text.startswith("at "):
        text = text[3:]
    m = _CLOCK_AMPM_RE.match(text)
    if m:
        hour = int(m.group(1))
        minute = int(m.group(2) or 0)
        if not (1 <= hour <= 12) or minute > 59:
            return None
        if m.group(3) == "am":
            hour = 0 if hour == 12 else hour
        else:
            hour = 12 if hour == 12 else hour + 12
        return time(hour, minute)
    m = _CLOCK_24_RE.match(text)
    if m:
        hour, minute = int(m.group(1)), int(m.group(2))
        if hour > 23 or minute > 59:
            return None
        return time(hour, minute)
    return None


_UNIT_SECONDS = {"second": 1, "seconds": 1, "sec": 1, "s": 1,
                 "minute": 60, "minutes": 60, "min": 60, "m": 60,
                 "hour": 3600, "hours": 3600, "h": 3600}

_IN_RE = re.compile(r"^in (\d+) ?([a-z]+)$")
_DELAY_AFTER_RE = re.compile(r"^(\d+) ?([a-z]+) after (.+)$")
_WHEN_PREFIX_RE = re.compile(r"^(?:when|whenever|every time|each time|if) (.+)$")
_PHASE_RE = re.compile(r"^(.*?) (starts|begins|ends|finishes|is over|stops)$")


def _resolve_event_phrase(phrase: str, ctx: AuthoringContext) -> WhenSpec | None:
    """Map a normalized event phrase ("you arrive home", "the front door
    opens") to a WhenSpec via the home's phrase table, unwrapping
    started()/ended() snippets into activity events and seq() snippets
    into sequence specs."""
    snippet = ctx.event_phrases.get(phrase)
    if snippet is None:
        m = _PHASE_RE.match(phrase)
        if m:
            label = ctx.activity_phrases.get(m.group(1).strip())
            if label is not None:
                phase = "start" if m.group(2) in ("starts", "begins") else "end"
                return ActivityEvent(label, phase)
        return None
    return _spec_from_snippet(snippet, phrase)


def _spec_from_snippet(snippet: str, phrase: str | None) -> WhenSpec:
    from . import dsl

    try:
        root = dsl.parse(snippet).root
    except dsl.ParseError:
        return SensorEvent(snippet, phrase)
    if isinstance(root, dsl.Started):
        return ActivityEvent(root.activity, "start")
    if isinstance(root, dsl.Ended):
        return ActivityEvent(root.activity, "end")
    if isinstance(root, dsl.Seq):
        steps: list[EventStepSpec | HoldStepSpec] = []
        for step in root.steps:
            if isinstance(step, dsl.HoldStep):
                steps.append(HoldStepSpec(dsl._fmt_level(step.level), step.seconds))
            else:
                steps.append(EventStepSpec(dsl.format_expr(step.event)))
        return SequenceSpec(tuple(steps), root.within, phrase)
    return SensorEvent(dsl.format_expr(root), phrase)


def parse_time_expression(text: str, ctx: AuthoringContext) -> WhenSpec:
    """Interpret a WHEN phrase. Recognizers apply in priority order:
    explicit clock times, relative offsets, "after <activity>",
    "before <activity>", event phrases, vague time mappings, and finally a
    raw DSL event expression."""
    if not text or not text.strip():
        raise UnparseableWhen(text)
    clock = parse_clock(text)
    if clock is not None:
        return ClockTime(clock)

    phrase = normalize_phrase(text)
    clock = parse_clock(phrase)
    if clock is not None:
        return ClockTime(clock)

    m = _IN_RE.match(phrase)
    if m and m.group(2) in _UNIT_SECONDS:
        seconds = int(m.group(1)) * _UNIT_SECONDS[m.group(2)]
        if seconds > 0:
            return Delay(ClockTime(ctx.now.time().replace(second=0, microsecond=0)),
                         seconds)

    m = _DELAY_AFTER_RE.match(phrase)
    if m and m.group(2) in _UNIT_SECONDS:
        seconds = int(m.group(1)) * _UNIT_SECONDS[m.group(2)]
        base_text = m.group(3).strip()
        base = None
        for attempt in (base_text, f"after {base_text}"):
            try:
                base = parse_time_expression(attempt, ctx)
                break
            except UnparseableWhen:
                continue
        if base is not None and seconds > 0 and not isinstance(base, Delay):
            return Delay(base, seconds)

    if phrase.startswith("after "):
        rest = phrase[len("after "):].strip()
        label = ctx.activity_phrases.get(rest)
        if label is not None:
            return ActivityEvent(label, "end")
        window = ctx._lookup_window(phrase)
        if window is not None:
            return InferredTime(phrase, window)
        if re.fullmatch(r"[a-z ]+", rest):
            # an activity name the home may or may not recognize; the
            # feasibility check owns that judgment
            return ActivityEvent(rest.replace(" ", "_"), "end")

    if phrase.startswith("before "):
        rest = phrase[len("before "):].strip()
        label = ctx.activity_phrases.get(rest)
        if label is not None:
            return BeforeActivity(label)
        window = ctx._lookup_window(phrase)
        if window is not None:
            return InferredTime(phrase, window)
        if re.fullmatch(r"[a-z ]+", rest):
            return BeforeActivity(rest.replace(" ", "_"))

    m = _WHEN_PREFIX_RE.match(phrase)
    if m:
        spec = _resolve_event_phrase(m.group(1).strip(), ctx)
        if spec is not None:
            return spec
    spec = _resolve_event_phrase(phrase, ctx)
    if spec is not None:
        return spec

    window = ctx._lookup_window(phrase)
    if window is not None:
        return InferredTime(phrase, window)

    from . import dsl

    try:
        dsl.parse(phrase)
        return _spec_from_snippet(phrase, None)
    except dsl.ParseError:
        pass

    raise UnparseableWhen(text)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def _parse_date_slot(raw: str, ctx: AuthoringContext) -> DateSpec:
    value = raw.strip().lower()
    if value in ("", "unrestricted"):
        return DateSpec.unrestricted()
    if value == "today":
        return DateSpec("today", ctx.current_date)
    if value == "tomorrow":
        return DateSpec("tomorrow", ctx.current_date + timedelta(days=1))
    m = re.search(r"(\d{4})-(\d{2})-(\d{2})", value)
    if m:
        return DateSpec("specific", date(int(m.group(1)), int(m.group(2)), int(m.group(3))))
    raise UnparseableWhen(raw)


def _parse_recurrence_slot(raw: str) -> Recurrence:
    value = raw.strip().lower()
    if value in ("", "once", "one-time", "one time"):
        return Recurrence.once()
    if value in ("daily", "every day", "every night", "every morning",
                 "every evening", "every afternoon", "everyday"):
        return Recurrence("daily")
    m = re.match(r"^(?:weekly|every) ?\(?([a-z]+)\)?$", value)
    if m and m.group(1) in WEEKDAYS:
        return Recurrence("weekly", WEEKDAYS.index(m.group(1)))
    if value == "weekly":
        return Recurrence("weekly", 0)
    return Recurrence.once()


def normalize_intent(raw: dict[str, str], ctx: AuthoringContext) -> ReminderIntent:
    """Apply defaults and parse raw slots into a ReminderIntent. Raises
    MissingSlot for an absent WHAT or WHEN and UnparseableWhen when the
    WHEN text resists every recognizer."""
    what = (raw.get("WHAT") or "").strip()
    if not what:
        raise MissingSlot("WHAT")
    when_text = (raw.get("WHEN") or "").strip()
    if not when_text:
        raise MissingSlot("WHEN")
    when_spec = parse_time_expression(when_text, ctx)
    recurrence = _parse_recurrence_slot(raw.get("RECURRENCE") or "")
    if recurrence.kind != "once":
        date_spec = DateSpec.unrestricted()
    elif raw.get("DATE"):
        date_spec = _parse_date_slot(raw["DATE"], ctx)
    else:
        date_spec = DateSpec("today", ctx.current_date)
    priority = (raw.get("PRIORITY") or "medium").strip().lower()
    if priority not in PRIORITIES:
        priority = "medium"
    return ReminderIntent(what, when_spec, date_spec, recurrence, priority)


def raw_projection(intent: ReminderIntent) -> dict[str, str]:
    """Project an intent back onto raw slot strings; normalize_intent of
    this projection reproduces the intent."""
    raw = {"WHAT": intent.what, "WHEN": when_phrase_text(intent.when_spec)}
    if intent.recurrence.kind == "daily":
        raw["RECURRENCE"] = "daily"
    elif intent.recurrence.kind == "weekly":
        raw["RECURRENCE"] = f"weekly({WEEKDAYS[intent.recurrence.weekday or 0]})"
    if intent.date.kind == "specific" and intent.date.on is not None:
        raw["DATE"] = intent.date.on.isoformat()
    elif intent.date.kind in ("today", "tomorrow"):
        raw["DATE"] = intent.date.kind
    if intent.priority != "medium":
        raw["PRIORITY"] = intent.priority
    return raw


def when_phrase_text(spec: WhenSpec) -> str:
    """A raw WHEN string that round-trips through parse_time_expression."""
    if isinstance(spec, ClockTime):
        return fmt_hhmm(spec.at)
    if isinstance(spec, InferredTime):
        return spec.phrase
    if isinstance(spec, ActivityEvent):
        verb = "starts" if spec.phase == "start" else "ends"
        return f"when {spec.label.replace('_', ' ')} {verb}"
    if isinstance(spec, SensorEvent):
        return f"when {spec.phrase}" if spec.phrase else spec.snippet
    if isinstance(spec, SequenceSpec):
        if spec.phrase:
            return f"when {spec.phrase}"
        return _sequence_snippet(spec)
    if isinstance(spec, Delay):
        return f"{spec.seconds} seconds after {when_phrase_text(spec.base)}"
    if isinstance(spec, BeforeActivity):
        return f"before {spec.label.replace('_', ' ')}"
    raise TypeError(f"unknown when-spec: {spec!r}")


def _sequence_snippet(spec: SequenceSpec) -> str:
    parts = []
    for step in spec.steps:
        if isinstance(step, HoldStepSpec):
            parts.append(f"hold({step.level_snippet}, {step.seconds}s)")
        else:
            parts.append(step.event_snippet)
    if spec.within is not None:
        parts.append(f"within: {spec.within}s")
    return f"seq({', '.join(parts)})"


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _when_phrase(spec: WhenSpec) -> str:
    if isinstance(spec, ClockTime):
        return f"at {fmt_hhmm(spec.at)}"
    if isinstance(spec, InferredTime):
        return spec.phrase
    if isinstance(spec, ActivityEvent):
        verb = "starts" if spec.phase == "start" else "ends"
        return f"when {spec.label.replace('_', ' ')} {verb}"
    if isinstance(spec, SensorEvent):
        return f"when {spec.phrase}" if spec.phrase else f"on `{spec.snippet}`"
    if isinstance(spec, SequenceSpec):
        return f"when {spec.phrase}" if spec.phrase else f"on `{_sequence_snippet(spec)}`"
    if isinstance(spec, Delay):
        return f"{spec.seconds}s after {_when_core(spec.base)}"
    if isinstance(spec, BeforeActivity):
        return f"before {spec.label.replace('_', ' ')}"
    raise TypeError(f"unknown when-spec: {spec!r}")


def _when_core(spec: WhenSpec) -> str:
    """The when-phrase stripped of its leading connective, for use after
    "after" in delay renderings."""
    phrase = _when_phrase(spec)
    for prefix in ("at ", "when "):
        if phrase.startswith(prefix):
            return phrase[len(prefix):]
    return phrase


def render_intent_sentence(intent: ReminderIntent) -> str:
    """Deterministic confirmation sentence:
    ``Remind me to <what> <when>[, <recurrence>][ <date>].``"""
    parts = [f"Remind me to {intent.what} {_when_phrase(intent.when_spec)}"]
    if intent.recurrence.kind == "daily":
        parts.append(", every day")
    elif intent.recurrence.kind == "weekly":
        parts.append(f", every {WEEKDAYS[intent.recurrence.weekday or 0]}")
    if intent.date.kind in ("today", "tomorrow"):
        parts.append(f" {intent.date.kind}")
    elif intent.date.kind == "specific" and intent.date.on is not None:
        parts.append(f" on {intent.date.on.isoformat()}")
    return "".join(parts) + "."


# ---------------------------------------------------------------------------
# Serialization (docs/intent.schema.json)
# ---------------------------------------------------------------------------

def when_to_json(spec: WhenSpec) -> dict:
    if isinstance(spec, ClockTime):
        return {"type": "clock_time", "at": fmt_hhmm(spec.at)}
    if isinstance(spec, InferredTime):
        return {"type": "inferred_time", "phrase": spec.phrase,
                "start": fmt_hhmm(spec.window.start), "end": fmt_hhmm(spec.window.end),
                "anchor": spec.window.anchor}
    if isinstance(spec, ActivityEvent):
        return {"type": "activity_event", "label": spec.label, "phase": spec.phase}
    if isinstance(spec, SensorEvent):
        return {"type": "sensor_event", "snippet": spec.snippet, "phrase": spec.phrase}
    if isinstance(spec, SequenceSpec):
        steps = []
        for step in spec.steps:
            if isinstance(step, HoldStepSpec):
                steps.append({"hold": step.level_snippet, "seconds": step.seconds})
            else:
                steps.append({"event": step.event_snippet})
        return {"type": "sequence", "steps": steps, "within": spec.within,
                "phrase": spec.phrase}
    if isinstance(spec, Delay):
        return {"type": "delay", "base": when_to_json(spec.base), "seconds": spec.seconds}
    if isinstance(spec, BeforeActivity):
        return {"type": "before_activity", "label": spec.label}
    raise TypeError(f"unknown when-spec: {spec!r}")


def when_from_json(doc: dict) -> WhenSpec:
    kind = doc.get("type")
    if kind == "clock_time":
        hh, mm = doc["at"].split(":")
        return ClockTime(time(int(hh), int(mm)))
    if kind == "inferred_time":
        s, e = doc["start"].split(":"), doc["end"].split(":")
        return InferredTime(doc["phrase"],
                            TimeWindow(time(int(s[0]), int(s[1])),
                                       time(int(e[0]), int(e[1])), doc.get("anchor", "start")))
    if kind == "activity_event":
        return ActivityEvent(doc["label"], doc["phase"])
    if kind == "sensor_event":
        return SensorEvent(doc["snippet"], doc.get("phrase"))
    if kind == "sequence":
        steps: list[EventStepSpec | HoldStepSpec] = []
        for raw in doc["steps"]:
            if "hold" in raw:
                steps.append(HoldStepSpec(raw["hold"], int(raw["seconds"])))
            else:
                steps.append(EventStepSpec(raw["event"]))
        return SequenceSpec(tuple(steps), doc.get("within"), doc.get("phrase"))
    if kind == "delay":
        return Delay(when_from_json(doc["base"]), int(doc["seconds"]))
    if kind == "before_activity":
        return BeforeActivity(doc["label"])
    raise ValueError(f"unknown when-spec type: {kind!r}")


def intent_to_json(intent: ReminderIntent) -> dict:
    return {
        "what": intent.what,
        "when": when_to_json(intent.when_spec),
        "date": {"kind": intent.date.kind,
                 "on": intent.date.on.isoformat() if intent.date.on else None},
        "recurrence": {"kind": intent.recurrence.kind,
                       "weekday": intent.recurrence.weekday},
        "priority": intent.priority,
    }


def intent_from_json(doc: dict) -> ReminderIntent:
    date_doc = doc.get("date") or {}
    on = date.fromisoformat(date_doc["on"]) if date_doc.get("on") else None
    rec_doc = doc.get("recurrence") or {}
    return ReminderIntent(
        what=doc["what"],
        when_spec=when_from_json(doc["when"]),
        date=DateSpec(date_doc.get("kind", "unrestricted"), on),
        recurrence=Recurrence(rec_doc.get("kind", "once"), rec_doc.get("weekday")),
        priority=doc.get("priority", "medium"),
    )


def dumps_intent(intent: ReminderIntent) -> str:
    return json.dumps(intent_to_json(intent), indent=2, sort_keys=True)
