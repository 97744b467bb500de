"""Smart-home capability model: sensors, activities, and language mappings.

A :class:`HomeConfig` is the ground truth for what the home can detect.
Every other layer (parsing, feasibility, compilation, runtime) consults it
and nothing else. Configs are immutable after load and safe to share.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import time

SENSOR_KINDS = ("contact", "motion", "power")

_ID_RE = re.compile(r"^[a-z0-9_]+$")
_HHMM_RE = re.compile(r"^([01]?\d|2[0-3]):([0-5]\d)$")

# Leading connectives stripped before the second lookup probe. This is
# rule-based normalization, not fuzzy matching: at most one prefix, exact
# match on the remainder.
_PHRASE_PREFIXES = ("after ", "before ", "around ", "in the ", "at ", "during ", "by ")


class ConfigError(ValueError):
    """Base class for home-config rejection."""


class MalformedConfig(ConfigError):
    pass


class DuplicateId(ConfigError):
    pass


class UnknownSensorKind(ConfigError):
    pass


class UnparseablePhraseSnippet(ConfigError):
    pass


class InvalidValue(ValueError):
    """A sensor value incompatible with the sensor's kind."""


@dataclass(frozen=True)
class SensorDescriptor:
    id: str
    kind: str
    location: str


@dataclass(frozen=True)
class ActivityDescriptor:
    label: str
    locations: tuple[str, ...] = ()


@dataclass(frozen=True)
class TimeWindow:
    """A named slice of the day. ``anchor`` picks the edge that a phrase
    like "after dinner" resolves to when no activity signal is available."""

    start: time
    end: time
    anchor: str = "start"  # "start" | "end"

    @property
    def wraps_midnight(self) -> bool:
        return self.start > self.end

    @property
    def anchor_time(self) -> time:
        return self.start if self.anchor == "start" else self.end


@dataclass(frozen=True, eq=True)
class HomeConfig:
    sensors: tuple[SensorDescriptor, ...]
    activities: tuple[ActivityDescriptor, ...]
    time_mappings: dict[str, TimeWindow]
    event_phrases: dict[str, str]
    activity_phrases: dict[str, str] = field(default_factory=dict)

    def sensor_ids(self) -> set[str]:
        return {s.id for s in self.sensors}

    def activity_labels(self) -> set[str]:
        return {a.label for a in self.activities}

    def sensor(self, sensor_id: str) -> SensorDescriptor | None:
        for s in self.sensors:
            if s.id == sensor_id:
                return s
        return None

    def activity(self, label: str) -> ActivityDescriptor | None:
        for a in self.activities:
            if a.label == label:
                return a
        return None


def parse_hhmm(text: str) -> time:
    m = _HHMM_RE.match(text.strip())
    if not m:
        raise MalformedConfig(f"invalid HH:MM time: {text!r}")
    return time(int(m.group(1)), int(m.group(2)))


def fmt_hhmm(t: time) -> str:
    return f"{t.hour:02d}:{t.minute:02d}"


def default_value(kind: str) -> bool | float:
    """Last-known-value default for a sensor that was never reported."""
    return 0.0 if kind == "power" else False


def validate_sensor_value(kind: str, value) -> bool | float:
    """Coerce and validate a raw value against the sensor's kind."""
    if kind in ("contact", "motion"):
        if isinstance(value, bool):
            return value
        raise InvalidValue(f"{kind} sensor expects a boolean, got {value!r}")
    if kind == "power":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidValue(f"power sensor expects a number, got {value!r}")
        if value < 0:
            raise InvalidValue(f"power reading must be >= 0, got {value!r}")
        return float(value)
    raise UnknownSensorKind(kind)


def _require(cond: bool, exc: type[ConfigError], message: str) -> None:
    if not cond:
        raise exc(message)


def load_home_config(source: str) -> HomeConfig:
    """Parse and validate a config document. Rejects invalid input, never
    repairs it: unknown keys, duplicate ids, bad sensor kinds and phrase
    snippets that do not typecheck are all hard errors."""
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise MalformedConfig(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedConfig("config root must be an object")

    allowed = {"sensors", "activities", "time_mappings", "event_phrases",
               "activity_phrases", "notes"}
    unknown = set(doc) - allowed
    _require(not unknown, MalformedConfig, f"unknown config keys: {sorted(unknown)}")
    for key in ("sensors", "activities"):
        _require(isinstance(doc.get(key), list), MalformedConfig,
                 f"config needs a {key!r} list")

    sensors: list[SensorDescriptor] = []
    seen_ids: set[str] = set()
    for raw in doc["sensors"]:
        _require(isinstance(raw, dict), MalformedConfig, f"sensor entries must be objects: {raw!r}")
        sid = raw.get("id", "")
        kind = raw.get("kind", "")
        location = raw.get("location", "")
        _require(bool(_ID_RE.match(sid or "")), MalformedConfig,
                 f"sensor id must match [a-z0-9_]+: {sid!r}")
        if kind not in SENSOR_KINDS:
            raise UnknownSensorKind(f"sensor {sid!r} has unknown kind {kind!r}")
        _require(bool(location), MalformedConfig, f"sensor {sid!r} needs a location")
        if sid in seen_ids:
            raise DuplicateId(f"duplicate sensor id {sid!r}")
        seen_ids.add(sid)
        sensors.append(SensorDescriptor(sid, kind, location))

    activities: list[ActivityDescriptor] = []
    seen_labels: set[str] = set()
    for raw in doc["activities"]:
        if isinstance(raw, str):
            raw = {"label": raw}
        _require(isinstance(raw, dict), MalformedConfig, f"activity entries must be objects: {raw!r}")
        label = raw.get("label", "")
        locations = tuple(raw.get("locations", ()))
        _require(bool(_ID_RE.match(label or "")), MalformedConfig,
                 f"activity label must match [a-z0-9_]+: {label!r}")
        if label in seen_labels:
            raise DuplicateId(f"duplicate activity label {label!r}")
        seen_labels.add(label)
        activities.append(ActivityDescriptor(label, locations))

    time_mappings: dict[str, TimeWindow] = {}
    for phrase, raw in (doc.get("time_mappings") or {}).items():
        _require(isinstance(raw, dict), MalformedConfig, f"time mapping {phrase!r} must be an object")
        start = parse_hhmm(raw.get("start", ""))
        end = parse_hhmm(raw.get("end", ""))
        anchor = raw.get("anchor", "start")
        _require(anchor in ("start", "end"), MalformedConfig,
                 f"time mapping {phrase!r}: anchor must be start or end")
        if start > end:
            _require(raw.get("wraps") is True, MalformedConfig,
                     f"time mapping {phrase!r} has start > end; set \"wraps\": true for a midnight wrap")
        time_mappings[phrase.strip().lower()] = TimeWindow(start, end, anchor)

    event_phrases = {k.strip().lower(): v for k, v in (doc.get("event_phrases") or {}).items()}
    activity_phrases = {k.strip().lower(): v for k, v in (doc.get("activity_phrases") or {}).items()}
    for phrase, label in activity_phrases.items():
        _require(label in seen_labels, MalformedConfig,
                 f"activity phrase {phrase!r} maps to unconfigured activity {label!r}")

    config = HomeConfig(tuple(sensors), tuple(activities), time_mappings,
                        event_phrases, activity_phrases)

    # Every event phrase must compile against this very config, checked at
    # load so runtime lookups can trust the snippets blindly.
    from . import dsl  # local import: dsl typechecks against HomeConfig

    for phrase, snippet in event_phrases.items():
        try:
            program = dsl.parse(snippet)
            dsl.typecheck(program, config)
        except (dsl.ParseError, dsl.TypecheckError) as exc:
            raise UnparseablePhraseSnippet(
                f"event phrase {phrase!r}: snippet {snippet!r} rejected: {exc}") from exc
    return config


def load_home_config_file(path) -> HomeConfig:
    with open(path, encoding="utf-8") as fh:
        return load_home_config(fh.read())


def format_home_config(config: HomeConfig) -> str:
    """Canonical serializer; load(format(c)) is structurally equal to c."""
    doc = {
        "sensors": [{"id": s.id, "kind": s.kind, "location": s.location}
                    for s in config.sensors],
        "activities": [{"label": a.label, "locations": list(a.locations)}
                       for a in config.activities],
        "time_mappings": {
            phrase: ({"start": fmt_hhmm(w.start), "end": fmt_hhmm(w.end),
                      "anchor": w.anchor, "wraps": True}
                     if w.wraps_midnight else
                     {"start": fmt_hhmm(w.start), "end": fmt_hhmm(w.end), "anchor": w.anchor})
            for phrase, w in sorted(config.time_mappings.items())
        },
        "event_phrases": dict(sorted(config.event_phrases.items())),
        "activity_phrases": dict(sorted(config.activity_phrases.items())),
    }
    return json.dumps(doc, indent=2) + "\n"


def lookup_window(mappings: dict[str, TimeWindow], phrase: str) -> TimeWindow | None:
    """Exact-match lookup of a normalized phrase, with a single follow-up
    probe after stripping one leading connective ("after dinner" finds the
    "dinner" mapping). No fuzzy matching."""
    window = mappings.get(phrase)
    if window is not None:
        return window
    for prefix in _PHRASE_PREFIXES:
        if phrase.startswith(prefix):
            return mappings.get(phrase[len(prefix):])
    return None


def lookup_time_mapping(config: HomeConfig, phrase: str) -> TimeWindow | None:
    return lookup_window(config.time_mappings, phrase)


def resolve_sensor(config: HomeConfig, sensor_id: str) -> SensorDescriptor | None:
    return config.sensor(sensor_id)


def sensors_at_location(config: HomeConfig, location: str) -> list[SensorDescriptor]:
    return [s for s in config.sensors if s.location == location]
