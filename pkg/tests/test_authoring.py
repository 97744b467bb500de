import json
from datetime import time

import pytest

from remindd.authoring import (AuthoringFailure, BackendReply, CompileError,
                               FallbackBackend, InfeasibleIntent, RemoteBackend,
                               ScriptDivergence, ScriptedBackend, SessionClosed,
                               build_guide, compile_intent,
                               extract_slots_fallback, handle_user_message,
                               new_session, run_scripted_session)
from remindd.dsl import TriggerKind
from remindd.intent import (ActivityEvent, ClockTime, DateSpec, Delay,
                            EventStepSpec, HoldStepSpec, InferredTime,
                            Recurrence, ReminderIntent, SensorEvent,
                            SequenceSpec, normalize_intent)

from conftest import REPO


def load_script(name):
    doc = json.loads((REPO / "fixtures" / "corpus" / name).read_text())
    return doc["script"], doc


# -- slot extraction ---------------------------------------------------------

def test_extract_medication_example(study_home, ctx):
    slots = extract_slots_fallback(
        "Remind me to take medication at 6 PM every night.", study_home, ctx)
    assert slots == {"WHAT": "take medication", "WHEN": "6 PM",
                     "RECURRENCE": "daily"}


def test_extract_food_out_example(study_home, ctx):
    slots = extract_slots_fallback(
        "Please remind me to take my food out in 5 minutes.", study_home, ctx)
    assert slots == {"WHAT": "take my food out", "WHEN": "in 5 minutes"}


def test_extract_nothing(study_home, ctx):
    assert extract_slots_fallback("hello there", study_home, ctx) == {}


def test_extract_date_and_weekly(study_home, ctx):
    slots = extract_slots_fallback(
        "Remind me to take out the trash at 7pm every tuesday.", study_home, ctx)
    assert slots["RECURRENCE"] == "every tuesday"
    assert slots["WHEN"] == "7pm"
    slots = extract_slots_fallback(
        "Remind me to defrost the turkey at 17:00 tomorrow.", study_home, ctx)
    assert slots["DATE"] == "tomorrow"


def test_extract_every_time_implies_daily(study_home, ctx):
    slots = extract_slots_fallback(
        "Remind me to wash my hands every time I arrive home.", study_home, ctx)
    assert slots["RECURRENCE"] == "daily"
    assert slots["WHEN"].lower() == "every time i arrive home"


# -- conversation state machine ---------------------------------------------

def test_ask_for_missing_when(study_home, ctx):
    session = new_session()
    reply, _ = handle_user_message(session, "Remind me to water the plant.",
                                   study_home, ctx)
    assert session.stage == "ask"
    assert reply.count("?") == 1
    assert "water the plant" in reply
    # a bare clock answer fills the asked slot
    reply, _ = handle_user_message(session, "7pm", study_home, ctx)
    assert session.stage == "confirm"
    assert "at 19:00" in reply


def test_infeasible_reply_offers_proxy(study_home, ctx):
    session = new_session()
    reply, _ = handle_user_message(
        session, "remind me to check the stove before I leave the house",
        study_home, ctx)
    assert session.stage == "ask"
    assert "front door opens" in reply
    assert reply.count("?") == 1
    assert session.attempt_count == 1


def test_session_abandons_after_attempt_cap(study_home, ctx):
    session = new_session()
    handle_user_message(session, "Remind me to stretch before jogging.",
                        study_home, ctx)
    assert session.stage == "ask"
    reply, _ = handle_user_message(session, "before sailing then", study_home, ctx)
    assert session.stage == "abandoned"
    assert "?" not in reply
    with pytest.raises(SessionClosed):
        handle_user_message(session, "hello?", study_home, ctx)


def test_confirm_yes_finalizes(study_home, ctx):
    session = new_session()
    handle_user_message(session, "Remind me to call my son at 7pm.",
                        study_home, ctx)
    assert session.stage == "confirm"
    reply, _ = handle_user_message(session, "yes", study_home, ctx)
    assert session.stage == "done"
    assert "?" not in reply
    assert session.result.program.canonical_text == "at(19:00)"
    with pytest.raises(SessionClosed):
        handle_user_message(session, "one more", study_home, ctx)


def test_confirm_no_clears_contested_when(study_home, ctx):
    session = new_session()
    handle_user_message(session, "Remind me to call my son at 7pm.",
                        study_home, ctx)
    reply, _ = handle_user_message(session, "no", study_home, ctx)
    assert session.stage == "ask"
    assert "WHEN" not in session.slots
    assert reply.count("?") == 1
    reply, _ = handle_user_message(session, "at 8pm", study_home, ctx)
    assert session.stage == "confirm"
    assert "at 20:00" in reply
    handle_user_message(session, "yes", study_home, ctx)
    assert session.result.program.canonical_text == "at(20:00)"


def test_confirm_no_with_inline_correction(study_home, ctx):
    session = new_session()
    handle_user_message(session, "Remind me to call my son at 7pm.",
                        study_home, ctx)
    reply, _ = handle_user_message(session, "no, make it 8pm", study_home, ctx)
    assert session.stage == "confirm"
    assert "at 20:00" in reply


def test_transcript_alternates_roles(study_home, ctx):
    session = new_session()
    handle_user_message(session, "Remind me to call my son at 7pm.",
                        study_home, ctx)
    handle_user_message(session, "yes", study_home, ctx)
    roles = [role for role, _, _ in session.transcript]
    assert roles == ["user", "assistant", "user", "assistant"]


def test_stage_ordering_in_transcript(study_home, ctx):
    session = new_session()
    handle_user_message(session, "Remind me to take my supplements after dinner every day.",
                        study_home, ctx)
    confirm_reply = session.transcript[-1][1]
    handle_user_message(session, "yes", study_home, ctx)
    final_reply = session.transcript[-1][1]
    assert "Is that correct?" in confirm_reply
    assert session.result is not None
    assert "Reminder saved." in final_reply
    texts = [text for role, text, _ in session.transcript if role == "assistant"]
    assert texts.index(confirm_reply) < texts.index(final_reply)


def test_scripted_backend_drives_fsm(study_home, ctx):
    backend = ScriptedBackend([
        BackendReply(slots={"WHAT": "feed the cat", "WHEN": "8pm"}),
    ])
    session = new_session()
    reply, _ = handle_user_message(session, "the cat is hungry in the evenings",
                                   study_home, ctx, backend)
    assert session.stage == "confirm"
    assert "feed the cat" in reply


def test_backend_question_used_when_single_question(study_home, ctx):
    backend = ScriptedBackend([
        BackendReply(slots={"WHAT": "feed the cat"},
                     text="When would you like the cat-feeding nudge?"),
        BackendReply(slots={"WHAT": "feed the dog"},
                     text="Too? Many? Questions?"),
    ])
    session = new_session()
    reply, _ = handle_user_message(session, "cat", study_home, ctx, backend)
    assert reply == "When would you like the cat-feeding nudge?"
    session2 = new_session()
    reply2, _ = handle_user_message(session2, "dog", study_home, ctx, backend)
    assert reply2.count("?") == 1  # template replaces the invalid backend text


def test_remote_backend_parses_and_degrades(study_home, ctx, monkeypatch):
    calls = {}

    class FakeResponse:
        def __init__(self, payload):
            self._payload = payload

        def raise_for_status(self):
            return None

        def json(self):
            return self._payload

    def fake_post(url, json=None, headers=None, timeout=None):
        calls["url"] = url
        content = '{"slots": {"WHAT": "water plants", "WHEN": "7pm"}, "reply": null}'
        return FakeResponse({"choices": [{"message": {"content": content}}]})

    import httpx

    monkeypatch.setattr(httpx, "post", fake_post)
    backend = RemoteBackend("http://llm.local/v1", "test-model", "key")
    reply = backend.reply(new_session(), "whatever", study_home, ctx,
                          build_guide(study_home))
    assert calls["url"] == "http://llm.local/v1/chat/completions"
    assert reply.slots == {"WHAT": "water plants", "WHEN": "7pm"}

    def broken_post(*args, **kwargs):
        raise OSError("no route")

    monkeypatch.setattr(httpx, "post", broken_post)
    degraded = backend.reply(new_session(), "Remind me to nap at 2pm.",
                             study_home, ctx, build_guide(study_home))
    assert degraded.slots["WHAT"] == "nap"  # fallback extractor took over


# -- compilation -------------------------------------------------------------

def test_compile_examples(study_home, ctx):
    eating = normalize_intent({"WHAT": "take supplements", "WHEN": "after dinner",
                               "RECURRENCE": "daily"}, ctx)
    compiled = compile_intent(eating, study_home)
    assert compiled.program.canonical_text == "ended(eating)"
    assert compiled.kind == TriggerKind.ACTIVITY_BASED

    micro = normalize_intent(
        {"WHAT": "take food out",
         "WHEN": "when I forget my food in the microwave"}, ctx)
    compiled = compile_intent(micro, study_home)
    assert compiled.program.canonical_text == (
        "seq(rising(sensor(plug_microwave) > 1.0), "
        "falling(sensor(plug_microwave) > 1.0), "
        "hold(not sensor(contact_microwave_door), 180s))")
    assert compiled.kind == TriggerKind.STATE_MACHINE

    clock = normalize_intent({"WHAT": "call my son", "WHEN": "7pm"}, ctx)
    compiled = compile_intent(clock, study_home)
    assert compiled.program.canonical_text == "at(19:00)"
    assert compiled.kind == TriggerKind.TIME_BASED


def test_compile_rejects_infeasible(study_home, ctx):
    intent = ReminderIntent("x", ActivityEvent("jogging", "start"),
                            DateSpec.unrestricted(), Recurrence.once())
    with pytest.raises(InfeasibleIntent):
        compile_intent(intent, study_home)


def test_compile_rejects_bad_snippet(study_home):
    intent = ReminderIntent("x", SensorEvent("rising(sensor(contact_front_door)"),
                            DateSpec.unrestricted(), Recurrence.once())
    with pytest.raises((CompileError, InfeasibleIntent)):
        compile_intent(intent, study_home)


def test_compile_totality_over_feasible_variants(study_home, ctx, bare_ctx):
    specs = {
        "ClockTime": (ClockTime(time(19, 0)), TriggerKind.TIME_BASED),
        "InferredTime": (InferredTime("in the evening",
                                      study_home.time_mappings["evening"]),
                         TriggerKind.TIME_BASED),
        "ActivityEvent": (ActivityEvent("eating", "end"),
                          TriggerKind.ACTIVITY_BASED),
        "SensorEvent": (SensorEvent("rising(sensor(contact_front_door))", None),
                        TriggerKind.SENSOR_BASED),
        "SequenceSpec": (SequenceSpec((
            EventStepSpec("rising(sensor(plug_microwave) > 1.0)"),
            HoldStepSpec("not sensor(contact_microwave_door)", 120)), None),
            TriggerKind.STATE_MACHINE),
        "Delay": (Delay(ClockTime(time(7, 0)), 600), TriggerKind.STATE_MACHINE),
    }
    for name, (spec, expected_kind) in specs.items():
        intent = ReminderIntent("x", spec, DateSpec.unrestricted(),
                                Recurrence.once())
        compiled = compile_intent(intent, study_home)
        assert compiled.kind == expected_kind, name


# -- scripted sessions -------------------------------------------------------

def test_scenario_6_golden(study_home, ctx):
    script, doc = load_script("scenario_6_supplements.json")
    compiled, turns = run_scripted_session(script, study_home, ctx)
    assert turns == 2
    assert compiled.program.canonical_text == doc["expect_dsl"]
    assert compiled.kind.value == doc["expect_kind"]


def test_script_divergence_after_done(study_home, ctx):
    script, _ = load_script("scenario_6_supplements.json")
    script = script + [{"role": "user", "text": "are you still there"}]
    with pytest.raises(ScriptDivergence):
        run_scripted_session(script, study_home, ctx)


def test_scenario_2_delay_phrasing(study_home, ctx):
    script = [
        {"role": "user",
         "text": "Please remind me to take my food out in 5 minutes.",
         "expect_stage": "confirm"},
        {"role": "user", "text": "yes", "expect_stage": "done"},
    ]
    compiled, turns = run_scripted_session(script, study_home, ctx)
    assert turns == 2
    assert compiled.kind == TriggerKind.STATE_MACHINE
    assert compiled.program.canonical_text.startswith("after(at(")


def test_incomplete_script_returns_failure(study_home, ctx):
    script = [{"role": "user", "text": "Remind me to water the plant."}]
    result, turns = run_scripted_session(script, study_home, ctx)
    assert isinstance(result, AuthoringFailure)
    assert result.stage == "ask"
    assert turns == 1


def test_one_question_policy_on_all_goldens(study_home):
    from remindd.cli import load_corpus
    from remindd.intent import AuthoringContext

    entries = load_corpus(REPO / "fixtures" / "corpus")
    assert len(entries) == 6
    for entry in entries:
        ctx = AuthoringContext.for_home(study_home, entry.trace.start)
        from remindd.authoring import Session

        session = new_session()
        for item in entry.script:
            if item["role"] != "user":
                continue
            reply, _ = handle_user_message(session, item["text"], study_home, ctx)
            if session.stage in ("ask", "confirm"):
                assert reply.count("?") == 1, (entry.id, reply)
            else:
                assert reply.count("?") == 0, (entry.id, reply)
        assert session.stage == "done"
