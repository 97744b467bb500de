import json

import pytest

from remindd.home import (DuplicateId, MalformedConfig, UnknownSensorKind,
                          UnparseablePhraseSnippet, InvalidValue,
                          format_home_config, load_home_config,
                          lookup_time_mapping, resolve_sensor,
                          sensors_at_location, validate_sensor_value)

MINIMAL = {
    "sensors": [
        {"id": "contact_front_door", "kind": "contact", "location": "entrance"},
        {"id": "plug_kettle", "kind": "power", "location": "kitchen"},
    ],
    "activities": [{"label": "eating", "locations": ["kitchen"]}],
    "time_mappings": {
        "dinner": {"start": "18:00", "end": "20:00", "anchor": "end"},
        "evening": {"start": "18:00", "end": "22:00", "anchor": "start"},
    },
    "event_phrases": {},
}


def make(doc=None, **overrides):
    base = json.loads(json.dumps(doc if doc is not None else MINIMAL))
    base.update(overrides)
    return json.dumps(base)


def test_default_study_config(study_home):
    assert len(study_home.sensors) == 6
    assert len(study_home.activities) == 6
    assert study_home.sensor("stove_activity").kind == "power"


def test_duplicate_sensor_id_rejected():
    doc = json.loads(make())
    doc["sensors"].append({"id": "contact_front_door", "kind": "contact",
                           "location": "hall"})
    with pytest.raises(DuplicateId):
        load_home_config(json.dumps(doc))


def test_duplicate_activity_rejected():
    doc = json.loads(make())
    doc["activities"].append({"label": "eating"})
    with pytest.raises(DuplicateId):
        load_home_config(json.dumps(doc))


def test_unknown_sensor_kind_rejected():
    doc = json.loads(make())
    doc["sensors"][0]["kind"] = "sonar"
    with pytest.raises(UnknownSensorKind):
        load_home_config(json.dumps(doc))


def test_event_phrase_snippet_typechecked_at_load():
    ok = load_home_config(make(event_phrases={
        "when you arrive home": "rising(sensor(contact_front_door))"}))
    assert "when you arrive home" in ok.event_phrases
    with pytest.raises(UnparseablePhraseSnippet):
        load_home_config(make(event_phrases={"x": "rising(sensor(plug_unicorn))"}))
    with pytest.raises(UnparseablePhraseSnippet):
        load_home_config(make(event_phrases={"x": "this is not dsl"}))


def test_malformed_config():
    with pytest.raises(MalformedConfig):
        load_home_config("{not json")
    with pytest.raises(MalformedConfig):
        load_home_config(json.dumps({"sensors": []}))
    with pytest.raises(MalformedConfig):
        load_home_config(make(bogus_key=1))


def test_midnight_wrap_needs_explicit_flag():
    doc = json.loads(make())
    doc["time_mappings"]["night"] = {"start": "22:00", "end": "06:00",
                                     "anchor": "start"}
    with pytest.raises(MalformedConfig):
        load_home_config(json.dumps(doc))
    doc["time_mappings"]["night"]["wraps"] = True
    cfg = load_home_config(json.dumps(doc))
    assert cfg.time_mappings["night"].wraps_midnight


def test_lookup_time_mapping():
    cfg = load_home_config(make())
    window = lookup_time_mapping(cfg, "after dinner")
    assert (str(window.start), str(window.end), window.anchor) == \
        ("18:00:00", "20:00:00", "end")
    assert lookup_time_mapping(cfg, "before breakfast") is None
    evening = lookup_time_mapping(cfg, "evening")
    assert evening.anchor == "start" and str(evening.start) == "18:00:00"


def test_resolve_sensor(study_home):
    sensor = resolve_sensor(study_home, "contact_microwave_door")
    assert sensor.kind == "contact" and sensor.location == "kitchen"
    assert resolve_sensor(study_home, "plug_bedroom") is None
    assert resolve_sensor(study_home, "") is None


def test_sensors_at_location(study_home):
    kitchen = {s.id for s in sensors_at_location(study_home, "kitchen")}
    assert {"contact_microwave_door", "plug_microwave", "stove_activity"} <= kitchen
    assert sensors_at_location(study_home, "garage") == []
    assert sensors_at_location(study_home, "") == []


def test_sensors_at_location_partitions(study_home):
    for sensor in study_home.sensors:
        assert sensor in sensors_at_location(study_home, sensor.location)
        others = [loc for loc in {s.location for s in study_home.sensors}
                  if loc != sensor.location]
        for loc in others:
            assert sensor not in sensors_at_location(study_home, loc)


def test_format_round_trip(study_home, stove_home):
    for cfg in (study_home, stove_home):
        assert load_home_config(format_home_config(cfg)) == cfg


def test_sensor_value_validation():
    assert validate_sensor_value("contact", True) is True
    assert validate_sensor_value("power", 2) == 2.0
    with pytest.raises(InvalidValue):
        validate_sensor_value("power", -1)
    with pytest.raises(InvalidValue):
        validate_sensor_value("contact", 0.5)
    with pytest.raises(InvalidValue):
        validate_sensor_value("power", True)
