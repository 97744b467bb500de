"""Detectability rules for trigger specifications.

A deterministic rules engine, applied in a fixed order:

1. clock times and inferred time windows are always detectable;
2. "before <activity>" is never detectable (firing would need to predict
   the activity's start);
3. an activity event is detectable iff the label is configured;
4. sensor events and sequences are detectable iff every referenced sensor
   resolves and every location tied to a referenced activity has at least
   one sensor;
5. a delayed trigger is detectable iff its base is.

Verdicts for infeasible or vague specs carry concrete, individually
feasible alternatives so the conversation can steer users toward
configurations the home can actually detect.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import dsl
from .home import HomeConfig, fmt_hhmm
from .intent import (ActivityEvent, BeforeActivity, ClockTime, Delay,
                     EventStepSpec, InferredTime, SensorEvent, SequenceSpec,
                     WhenSpec, _sequence_snippet)

REASON_OK = ""
REASON_BEFORE = "before_activity"
REASON_UNKNOWN_ACTIVITY = "unknown_activity"
REASON_UNKNOWN_SENSOR = "unknown_sensor"
REASON_LOCATION = "location_not_instrumented"
REASON_BAD_SNIPPET = "unparseable_snippet"


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    reason_code: str = REASON_OK
    reason: str = ""
    suggestions: tuple[tuple[str, WhenSpec], ...] = ()


def _front_door_sensor(home: HomeConfig) -> str | None:
    if home.sensor("contact_front_door") is not None:
        return "contact_front_door"
    for sensor in home.sensors:
        if sensor.kind == "contact" and sensor.location == "entrance":
            return sensor.id
    return None


def _short_label(label: str) -> str:
    # "leaving_home" reads better as "leaving" in a spoken suggestion
    return label.removesuffix("_home").replace("_", " ")


def _referenced_names(snippet_roots: list[dsl.EventExpr | dsl.LevelExpr]) -> tuple[set[str], set[str]]:
    sensors: set[str] = set()
    activities: set[str] = set()
    for root in snippet_roots:
        for _, node in dsl.iter_nodes(root):
            if isinstance(node, (dsl.SensorBool, dsl.SensorCmp)):
                sensors.add(node.sensor_id)
            elif isinstance(node, (dsl.Active, dsl.Started, dsl.Ended)):
                activities.add(node.activity)
    return sensors, activities


def _parse_event_roots(spec: SensorEvent | SequenceSpec) -> list | None:
    text = spec.snippet if isinstance(spec, SensorEvent) else _sequence_snippet(spec)
    try:
        return [dsl.parse(text).root]
    except dsl.ParseError:
        return None


def check_feasibility(spec: WhenSpec, home: HomeConfig) -> FeasibilityVerdict:
    if isinstance(spec, (ClockTime, InferredTime)):
        suggestions = tuple(suggest_alternatives(spec, home)) \
            if isinstance(spec, InferredTime) else ()
        return FeasibilityVerdict(True, suggestions=suggestions)

    if isinstance(spec, BeforeActivity):
        return FeasibilityVerdict(
            False, REASON_BEFORE,
            f"I can't predict when {_short_label(spec.label)} is about to "
            f"happen; there is no signal before it starts.",
            tuple(suggest_alternatives(spec, home)))

    if isinstance(spec, ActivityEvent):
        if home.activity(spec.label) is None:
            return FeasibilityVerdict(
                False, REASON_UNKNOWN_ACTIVITY,
                f"The home cannot recognize the activity "
                f"'{spec.label.replace('_', ' ')}'.",
                tuple(suggest_alternatives(spec, home)))
        return FeasibilityVerdict(True)

    if isinstance(spec, (SensorEvent, SequenceSpec)):
        roots = _parse_event_roots(spec)
        if roots is None:
            return FeasibilityVerdict(False, REASON_BAD_SNIPPET,
                                      "The trigger expression does not parse.")
        sensors, activities = _referenced_names(roots)
        for sensor_id in sorted(sensors):
            if home.sensor(sensor_id) is None:
                return FeasibilityVerdict(
                    False, REASON_UNKNOWN_SENSOR,
                    f"No sensor '{sensor_id}' is installed in this home.")
        for label in sorted(activities):
            descriptor = home.activity(label)
            if descriptor is None:
                return FeasibilityVerdict(
                    False, REASON_UNKNOWN_ACTIVITY,
                    f"The home cannot recognize the activity "
                    f"'{label.replace('_', ' ')}'.")
            for location in descriptor.locations:
                if not any(s.location == location for s in home.sensors):
                    return FeasibilityVerdict(
                        False, REASON_LOCATION,
                        f"The {location.replace('_', ' ')} has no sensors, so "
                        f"'{label.replace('_', ' ')}' cannot be grounded there.")
        return FeasibilityVerdict(True)

    if isinstance(spec, Delay):
        base = check_feasibility(spec.base, home)
        if base.feasible:
            return FeasibilityVerdict(True)
        return FeasibilityVerdict(False, base.reason_code, base.reason,
                                  base.suggestions)

    raise TypeError(f"unknown when-spec: {spec!r}")


def suggest_alternatives(spec: WhenSpec, home: HomeConfig) -> list[tuple[str, WhenSpec]]:
    """Deterministic catalog of feasible stand-ins for an infeasible or
    vague spec. Every returned alternative passes check_feasibility against
    the same home; a feasible, non-vague input yields an empty list."""
    out: list[tuple[str, WhenSpec]] = []
    if isinstance(spec, BeforeActivity):
        if spec.label in ("leaving_home", "entering_home"):
            door = _front_door_sensor(home)
            if door is not None:
                out.append(("when the front door opens",
                            SensorEvent(f"rising(sensor({door}))",
                                        "the front door opens")))
        if home.activity(spec.label) is not None:
            out.append((f"when you start {_short_label(spec.label)}",
                        ActivityEvent(spec.label, "start")))
    elif isinstance(spec, InferredTime):
        label = _meal_activity(spec.phrase, home)
        if label is not None and home.activity(label) is not None:
            out.append((f"when you finish {_short_label(label)}",
                        ActivityEvent(label, "end")))
        edge = spec.window.anchor_time
        out.append((f"at {fmt_hhmm(edge)}", ClockTime(edge)))
    elif isinstance(spec, ActivityEvent) and home.activity(spec.label) is None:
        pass  # an unconfigured label carries no location to pivot on
    return [alt for alt in out if check_feasibility(alt[1], home).feasible]


def _meal_activity(phrase: str, home: HomeConfig) -> str | None:
    stripped = phrase
    for prefix in ("after ", "before ", "around ", "in the ", "at "):
        if stripped.startswith(prefix):
            stripped = stripped[len(prefix):]
            break
    return home.activity_phrases.get(stripped)
