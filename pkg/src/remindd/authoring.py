"""Conversational reminder authoring.

The session state machine owns slot validation and feasibility; assistant
backends only extract slot values and (optionally) phrase questions, so a
misbehaving backend can never produce an unvalidated reminder. Three
backends honor the same contract: a remote OpenAI-compatible chat client,
a scripted test double, and a deterministic no-network fallback built on
the phrase recognizers in :mod:`remindd.intent`.

Stages move ask -> confirm -> finalize (reported as stage "done"); a
rejected restatement drops back from confirm to ask with the contested
WHEN cleared. Each ask-stage reply asks exactly one question. Sessions
abandon after ``max_attempts`` infeasible triggers.
"""
from __future__ import annotations

import json
import os
import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from typing import Protocol

from . import dsl
from .feasibility import FeasibilityVerdict, check_feasibility
from .home import HomeConfig, fmt_hhmm
from .intent import (ActivityEvent, AuthoringContext, BeforeActivity, ClockTime,
                     Delay, InferredTime, ReminderIntent, SensorEvent,
                     SequenceSpec, UnparseableWhen, WhenSpec, _sequence_snippet,
                     normalize_intent, parse_time_expression,
                     render_intent_sentence)


class SessionClosed(RuntimeError):
    pass


class InfeasibleIntent(ValueError):
    pass


class CompileError(ValueError):
    pass


class ScriptDivergence(AssertionError):
    def __init__(self, turn_index: int, detail: str):
        self.turn_index = turn_index
        super().__init__(f"turn {turn_index}: {detail}")


@dataclass(frozen=True)
class CompiledReminder:
    intent: ReminderIntent
    program: dsl.ValidatedProgram
    kind: dsl.TriggerKind


@dataclass
class AuthoringFailure:
    stage: str
    detail: str = ""


@dataclass
class Session:
    id: str
    stage: str = "ask"  # ask | confirm | done | abandoned
    slots: dict[str, str] = field(default_factory=dict)
    pending_spec: WhenSpec | None = None
    pending_intent: ReminderIntent | None = None
    transcript: list[tuple[str, str, datetime]] = field(default_factory=list)
    attempt_count: int = 0
    max_attempts: int = 2
    last_asked: str | None = None
    alternate_whens: list[str] = field(default_factory=list)
    result: CompiledReminder | None = None


def new_session(session_id: str | None = None) -> Session:
    return Session(session_id or uuid.uuid4().hex[:12])


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

@dataclass
class BackendReply:
    slots: dict[str, str] = field(default_factory=dict)
    text: str | None = None


class AssistantBackend(Protocol):
    def reply(self, session: Session, user_text: str, home: HomeConfig,
              ctx: AuthoringContext, guide: dict) -> BackendReply: ...

    def summarize(self, session: Session, ctx: AuthoringContext) -> dict[str, str]: ...


class FallbackBackend:
    """No-network floor: deterministic regex slot extraction."""

    def reply(self, session, user_text, home, ctx, guide) -> BackendReply:
        return BackendReply(slots=extract_slots_fallback(user_text, home, ctx))

    def summarize(self, session, ctx) -> dict[str, str]:
        return dict(session.slots)


class ScriptedBackend:
    """Replays canned slot extractions / reply texts, for FSM tests."""

    def __init__(self, replies: list[BackendReply]):
        self._replies = list(replies)
        self._cursor = 0

    def reply(self, session, user_text, home, ctx, guide) -> BackendReply:
        if self._cursor < len(self._replies):
            reply = self._replies[self._cursor]
            self._cursor += 1
            return reply
        return BackendReply()

    def summarize(self, session, ctx) -> dict[str, str]:
        return dict(session.slots)


class RemoteBackend:
    """OpenAI-compatible chat-completions client. Configuration comes from
    REMIND_LLM_BASE_URL / REMIND_LLM_MODEL / REMIND_LLM_API_KEY; any
    transport or parsing failure degrades to the fallback extractor."""

    def __init__(self, base_url: str, model: str, api_key: str = "",
                 timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self._fallback = FallbackBackend()

    @staticmethod
    def from_env() -> "RemoteBackend | None":
        base = os.environ.get("REMIND_LLM_BASE_URL")
        model = os.environ.get("REMIND_LLM_MODEL")
        if not base or not model:
            return None
        return RemoteBackend(base, model, os.environ.get("REMIND_LLM_API_KEY", ""))

    def _chat(self, messages: list[dict]) -> str | None:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = httpx.post(
                f"{self.base_url}/chat/completions",
                json={"model": self.model, "messages": messages, "temperature": 0},
                headers=headers, timeout=self.timeout)
            response.raise_for_status()
            return response.json()["choices"][0]["message"]["content"]
        except Exception:  # noqa: BLE001 - degrade, never crash the session
            return None

    def reply(self, session, user_text, home, ctx, guide) -> BackendReply:
        system = (
            "You help set up smart-home reminders. Extract slot values from the "
            "user's message. Respond with JSON only: {\"slots\": {\"WHAT\": ..., "
            "\"WHEN\": ..., \"DATE\": ..., \"RECURRENCE\": ...}, \"reply\": ...}. "
            "Omit slots the message does not state. Ask at most one question. "
            f"CURRENT_DATE: {ctx.current_date.isoformat()}. "
            f"GUIDE: {json.dumps(guide, sort_keys=True)}")
        transcript = [{"role": role, "content": text}
                      for role, text, _ in session.transcript[-8:]]
        content = self._chat([{"role": "system", "content": system},
                              *transcript, {"role": "user", "content": user_text}])
        if content is not None:
            try:
                doc = json.loads(_strip_fences(content))
                slots = {str(k).upper(): str(v) for k, v in (doc.get("slots") or {}).items()
                         if v}
                return BackendReply(slots=slots, text=doc.get("reply"))
            except (json.JSONDecodeError, AttributeError):
                pass
        return self._fallback.reply(session, user_text, home, ctx, guide)

    def summarize(self, session, ctx) -> dict[str, str]:
        return dict(session.slots)


def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-z]*\n?", "", text)
        text = re.sub(r"\n?```$", "", text)
    return text


def select_backend() -> AssistantBackend:
    return RemoteBackend.from_env() or FallbackBackend()


def build_guide(home: HomeConfig) -> dict:
    """The in-conversation feasibility guide handed to backends: what the
    home can detect, phrased the way users talk about it."""
    return {
        "detectable_events": sorted(home.event_phrases),
        "activities": {a.label: list(a.locations) for a in home.activities},
        "activity_phrases": dict(sorted(home.activity_phrases.items())),
        "time_mappings": {phrase: f"{fmt_hhmm(w.start)}-{fmt_hhmm(w.end)}"
                          for phrase, w in sorted(home.time_mappings.items())},
        "not_detectable": ["anything phrased as 'before <activity>'"],
    }


# ---------------------------------------------------------------------------
# Fallback slot extraction
# ---------------------------------------------------------------------------

_RECUR_PATTERNS = [
    (re.compile(r"\bevery (?:day|night|morning|evening|afternoon)\b", re.I), "daily"),
    (re.compile(r"\b(?:daily|each day|everyday)\b", re.I), "daily"),
    (re.compile(r"\bevery (monday|tuesday|wednesday|thursday|friday|saturday|sunday)s?\b", re.I),
     "weekly"),
]

_DATE_PATTERNS = [
    re.compile(r"\btoday\b", re.I),
    re.compile(r"\btomorrow\b", re.I),
    re.compile(r"\b(?:on )?\d{4}-\d{2}-\d{2}\b", re.I),
]

_EVERY_TIME_RE = re.compile(r"^(?:every time|whenever|each time)\b", re.I)

# (pattern, group holding the WHEN text; the full match is the removed span)
_WHEN_PATTERNS = [
    (re.compile(r"\b(?:at )?(\d{1,2}:\d{2} ?(?:am|pm))\b", re.I), 1),
    (re.compile(r"\b(?:at )?(\d{1,2} ?(?:am|pm))\b", re.I), 1),
    (re.compile(r"\b(?:at )?(\d{1,2}:\d{2})\b", re.I), 1),
    (re.compile(r"\b(in \d+ ?(?:seconds|minutes|hours|second|minute|hour))\b", re.I), 1),
    (re.compile(r"\b(\d+ ?(?:seconds|minutes|hours|second|minute|hour) after [^,.?!]+)", re.I), 1),
    (re.compile(r"\b((?:when|whenever|every time|each time|if) [^,.?!]+)", re.I), 1),
    (re.compile(r"\b((?:after|before) [^,.?!]+)", re.I), 1),
    (re.compile(r"\b((?:in the|around|this) (?:morning|afternoon|evening|night|bedtime))\b", re.I), 1),
    (re.compile(r"\b(at (?:night|bedtime|noon))\b", re.I), 1),
]

_POLITENESS_RE = re.compile(
    r"^(?:please|hey|hi|hello|ok|okay|so|well|yes|also)[,!. ]+|"
    r"^(?:can|could|would|will) you[,! ]+", re.I)

_FRAME_PATTERNS = [
    re.compile(r"^remind (?:me|us) (?:to|about|that) (?P<what>.+)$", re.I),
    re.compile(r"^remind (?:me|us) (?P<what>.+)$", re.I),
    re.compile(r"^remind (?P<what>.+)$", re.I),
    re.compile(r"^(?:set|create|make|add) (?:up )?(?:a |an )?reminder"
               r"(?: for me)?(?: to| about| that)? (?P<what>.+)$", re.I),
    re.compile(r"^(?:i need|i would like|i'd like|i want) (?:a |an )?reminder"
               r"(?: to| about| that)? (?P<what>.+)$", re.I),
    re.compile(r"^(?:a |an )?reminder (?:to|about|that) (?P<what>.+)$", re.I),
    re.compile(r"^remember (?:to )?(?P<what>.+)$", re.I),
]

_DANGLING_RE = re.compile(r"\b(?:at|on|in|when|by|to|for|the)\s*$", re.I)


def _strip_politeness(text: str) -> str:
    while True:
        stripped = _POLITENESS_RE.sub("", text).strip()
        if stripped == text:
            return stripped
        text = stripped


def _clean_what(text: str) -> str:
    text = re.sub(r"\s+", " ", text).strip(" ,.;:!?")
    while True:
        shorter = _DANGLING_RE.sub("", text).strip(" ,.;:!?")
        if shorter == text:
            return text
        text = shorter


def _remove_span(text: str, span: tuple[int, int]) -> str:
    return (text[:span[0]] + " " + text[span[1]:]).strip()


def extract_slots_fallback(text: str, home: HomeConfig,
                           ctx: AuthoringContext) -> dict[str, str]:
    """Deterministic slot extraction: claim RECURRENCE and DATE spans, then
    the leftmost-longest WHEN span whose text survives parse_time_expression,
    and read WHAT from a reminder frame over what remains. Returns an empty
    map when nothing matches."""
    slots: dict[str, str] = {}
    working = text.strip()

    for pattern, kind in _RECUR_PATTERNS:
        m = pattern.search(working)
        if m:
            slots["RECURRENCE"] = m.group(0).lower() if kind == "weekly" else "daily"
            working = _remove_span(working, m.span())
            break

    for pattern in _DATE_PATTERNS:
        m = pattern.search(working)
        if m:
            slots["DATE"] = m.group(0).lower().removeprefix("on ").strip()
            working = _remove_span(working, m.span())
            break

    candidates: list[tuple[int, int, str]] = []  # (start, -length, when_text)
    spans: dict[str, tuple[int, int]] = {}
    for pattern, group in _WHEN_PATTERNS:
        for m in pattern.finditer(working):
            when_text = m.group(group).strip()
            try:
                parse_time_expression(when_text, ctx)
            except UnparseableWhen:
                continue
            candidates.append((m.start(), -len(m.group(0)), when_text))
            spans[when_text] = m.span()
    if candidates:
        candidates.sort()
        chosen = candidates[0]
        slots["WHEN"] = chosen[2]
        working = _remove_span(working, spans[chosen[2]])
        alternates = []
        chosen_span = spans[chosen[2]]
        for start, neg_len, when_text in candidates[1:]:
            other = spans[when_text]
            if other[0] >= chosen_span[1] or other[1] <= chosen_span[0]:
                if when_text not in alternates:
                    alternates.append(when_text)
        if alternates:
            slots["_ALTERNATE_WHENS"] = "; ".join(alternates)
        if _EVERY_TIME_RE.match(chosen[2]):
            slots.setdefault("RECURRENCE", "daily")

    working = _strip_politeness(working)
    for frame in _FRAME_PATTERNS:
        m = frame.match(working)
        if m:
            what = _clean_what(m.group("what"))
            if what:
                slots["WHAT"] = what
            break
    return slots


# ---------------------------------------------------------------------------
# Session state machine
# ---------------------------------------------------------------------------

_AFFIRM_RE = re.compile(
    r"^(?:yes|yeah|yep|yup|sure|correct|confirm|confirmed|ok|okay|right|"
    r"sounds good|that works|that's right|thats right|perfect|please do)\b", re.I)
_NEGATE_RE = re.compile(
    r"^(?:no|nope|nah|wrong|incorrect|not quite|that's wrong|thats wrong|"
    r"don't|do not|cancel)\b", re.I)


def handle_user_message(session: Session, text: str, home: HomeConfig,
                        ctx: AuthoringContext,
                        backend: AssistantBackend | None = None
                        ) -> tuple[str, Session]:
    if session.stage in ("done", "abandoned"):
        raise SessionClosed(f"session {session.id} is {session.stage}")
    backend = backend or FallbackBackend()
    session.transcript.append(("user", text, ctx.now))
    if session.stage == "ask":
        reply = _handle_ask(session, text, home, ctx, backend)
    else:
        reply = _handle_confirm(session, text, home, ctx, backend)
    session.transcript.append(("assistant", reply, ctx.now))
    return reply, session


def _handle_ask(session: Session, text: str, home: HomeConfig,
                ctx: AuthoringContext, backend: AssistantBackend) -> str:
    breply = backend.reply(session, text, home, ctx, build_guide(home))
    updates = dict(breply.slots)
    alternates = updates.pop("_ALTERNATE_WHENS", None)
    if alternates:
        session.alternate_whens = alternates.split("; ")

    if (session.last_asked == "WHAT" and "WHAT" not in updates
            and "WHAT" not in session.slots):
        cleaned = _clean_what(_strip_politeness(text))
        if cleaned:
            updates["WHAT"] = cleaned
    if (session.last_asked == "WHEN" and "WHEN" not in updates
            and "WHEN" not in session.slots):
        candidate = text.strip(" .!?")
        try:
            parse_time_expression(candidate, ctx)
            updates["WHEN"] = candidate
        except UnparseableWhen:
            pass
    session.slots.update(updates)
    session.last_asked = None

    spec: WhenSpec | None = None
    if session.slots.get("WHEN"):
        try:
            spec = parse_time_expression(session.slots["WHEN"], ctx)
        except UnparseableWhen:
            del session.slots["WHEN"]

    if spec is not None:
        verdict = check_feasibility(spec, home)
        if not verdict.feasible:
            session.attempt_count += 1
            del session.slots["WHEN"]
            if session.attempt_count >= session.max_attempts:
                session.stage = "abandoned"
                return (f"{verdict.reason} I'm not able to set up this reminder "
                        f"with the current home sensors. Please start a new "
                        f"conversation to try a different trigger.")
            session.last_asked = "WHEN"
            return _infeasible_reply(verdict)
        if session.slots.get("WHAT"):
            session.pending_spec = spec
            session.pending_intent = normalize_intent(session.slots, ctx)
            session.stage = "confirm"
            return _confirm_reply(session)

    if not session.slots.get("WHEN"):
        session.last_asked = "WHEN"
        if breply.text and breply.text.count("?") == 1:
            return breply.text
        what = session.slots.get("WHAT")
        if what:
            return f"When should I remind you to {what}?"
        return "When should the reminder occur?"
    session.last_asked = "WHAT"
    if breply.text and breply.text.count("?") == 1:
        return breply.text
    return "What should I remind you about?"


def _confirm_reply(session: Session) -> str:
    sentence = render_intent_sentence(session.pending_intent)
    extra = ""
    if session.alternate_whens:
        ignored = "; ".join(session.alternate_whens)
        extra = f" I went with the first timing and ignored: {ignored}."
    return f"{sentence}{extra} Is that correct?"


def _infeasible_reply(verdict: FeasibilityVerdict) -> str:
    suggestions = verdict.suggestions[:2]
    if suggestions:
        alts = " or ".join(phrase for phrase, _ in suggestions)
        return f"{verdict.reason} I could instead remind you {alts}. Would that work?"
    return f"{verdict.reason} When should I remind you instead?"


def _handle_confirm(session: Session, text: str, home: HomeConfig,
                    ctx: AuthoringContext, backend: AssistantBackend) -> str:
    norm = text.strip().lower()
    if _AFFIRM_RE.match(norm):
        raw = backend.summarize(session, ctx)
        raw.pop("_ALTERNATE_WHENS", None)
        intent = normalize_intent(raw, ctx)
        compiled = compile_intent(intent, home)
        session.result = compiled
        session.pending_intent = intent
        session.stage = "done"
        session.alternate_whens = []
        return f"Reminder saved. {render_intent_sentence(intent)}"
    if _NEGATE_RE.match(norm):
        session.stage = "ask"
        session.pending_spec = None
        session.pending_intent = None
        session.alternate_whens = []
        session.slots.pop("WHEN", None)  # the contested slot
        remainder = _NEGATE_RE.sub("", text).strip(" ,.!?")
        if remainder:
            return _handle_ask(session, remainder, home, ctx, backend)
        session.last_asked = "WHEN"
        return "Okay, let's fix that. When should I remind you?"
    # neither a clear yes nor no: treat the message as a correction
    session.stage = "ask"
    session.pending_spec = None
    session.pending_intent = None
    return _handle_ask(session, text, home, ctx, backend)


# ---------------------------------------------------------------------------
# Intent -> DSL compilation
# ---------------------------------------------------------------------------

def _compile_when(spec: WhenSpec) -> str:
    if isinstance(spec, ClockTime):
        return f"at({fmt_hhmm(spec.at)})"
    if isinstance(spec, InferredTime):
        return f"at({fmt_hhmm(spec.window.anchor_time)})"
    if isinstance(spec, ActivityEvent):
        call = "started" if spec.phase == "start" else "ended"
        return f"{call}({spec.label})"
    if isinstance(spec, SensorEvent):
        return spec.snippet
    if isinstance(spec, SequenceSpec):
        return _sequence_snippet(spec)
    if isinstance(spec, Delay):
        return f"after({_compile_when(spec.base)}, {spec.seconds}s)"
    if isinstance(spec, BeforeActivity):
        raise InfeasibleIntent(f"'before {spec.label}' is not detectable")
    raise TypeError(f"unknown when-spec: {spec!r}")


def compile_intent(intent: ReminderIntent, home: HomeConfig) -> CompiledReminder:
    """Deterministic mapping from a feasible intent to a validated trigger
    program; recurrence and date stay on the intent, not in the DSL."""
    verdict = check_feasibility(intent.when_spec, home)
    if not verdict.feasible:
        raise InfeasibleIntent(verdict.reason)
    snippet = _compile_when(intent.when_spec)
    try:
        program = dsl.typecheck(dsl.parse(snippet), home)
    except (dsl.ParseError, dsl.TypecheckError) as exc:
        raise CompileError(f"compiled snippet rejected: {snippet!r}: {exc}") from exc
    return CompiledReminder(intent, program, dsl.classify(program))


# ---------------------------------------------------------------------------
# Scripted sessions (golden tests, corpus harness)
# ---------------------------------------------------------------------------

def run_scripted_session(script: list[dict], home: HomeConfig,
                         ctx: AuthoringContext,
                         backend: AssistantBackend | None = None
                         ) -> tuple[CompiledReminder | AuthoringFailure, int]:
    """Drive user turns through the state machine and compare against any
    pinned expectations. Entries are {role, text} plus optional
    expect_stage / expect_slots / expect_dsl / expect_reply_contains on
    user turns; an assistant entry pins the preceding reply verbatim."""
    session = new_session()
    turns = 0
    last_reply = ""
    for index, entry in enumerate(script):
        role = entry.get("role")
        if role == "user":
            turns += 1
            try:
                last_reply, _ = handle_user_message(session, entry["text"],
                                                    home, ctx, backend)
            except SessionClosed as exc:
                raise ScriptDivergence(index, f"session closed: {exc}") from exc
            expect_stage = entry.get("expect_stage")
            if expect_stage and session.stage != expect_stage:
                raise ScriptDivergence(index,
                                       f"stage {session.stage!r} != {expect_stage!r}")
            for slot, want in (entry.get("expect_slots") or {}).items():
                got = session.slots.get(slot)
                if got != want:
                    raise ScriptDivergence(index, f"slot {slot}: {got!r} != {want!r}")
            needle = entry.get("expect_reply_contains")
            if needle and needle not in last_reply:
                raise ScriptDivergence(index,
                                       f"reply {last_reply!r} lacks {needle!r}")
            expect_dsl = entry.get("expect_dsl")
            if expect_dsl:
                got_dsl = (session.result.program.canonical_text
                           if session.result else None)
                if got_dsl != expect_dsl:
                    raise ScriptDivergence(index, f"dsl {got_dsl!r} != {expect_dsl!r}")
        elif role == "assistant":
            if entry.get("text") and entry["text"] != last_reply:
                raise ScriptDivergence(index,
                                       f"reply {last_reply!r} != {entry['text']!r}")
        else:
            raise ScriptDivergence(index, f"unknown role {role!r}")
    if session.result is not None:
        return session.result, turns
    return AuthoringFailure(session.stage, last_reply), turns
