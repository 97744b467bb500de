"""Differential testing: the incremental evaluator and the brute-force
oracle must produce identical fire sets on random programs and traces.
The full 1,000-pair batch runs in the acceptance suite; this module keeps
a faster always-on sample plus the tick-interval robustness property."""
import random

from remindd.intent import DateSpec, Recurrence, ReminderIntent, SensorEvent
from remindd.runtime import Engine, RuntimeReminder, evaluate_tick
from remindd.simulator import brute_force_oracle, tick_times

from astgen import gen_program, gen_trace
from conftest import REPO

from remindd.home import load_home_config_file

_HOME = None


def study_home():
    global _HOME
    if _HOME is None:
        _HOME = load_home_config_file(REPO / "homes" / "casas_study.json")
    return _HOME


def raw_fire_offsets(program, trace, tick_interval):
    """Replay a trace through the incremental evaluator with arming and
    recurrence out of the way: every root firing counts."""
    engine = Engine(program.home, tick_interval)
    reminder = RuntimeReminder(
        "probe",
        ReminderIntent("x", SensorEvent(program.canonical_text),
                       DateSpec.unrestricted(), Recurrence.once()),
        program)
    events = trace.sorted_events()
    pointer = 0
    offsets = []
    for now in tick_times(trace, tick_interval):
        offset = (now - trace.start).total_seconds()
        while pointer < len(events) and events[pointer].t <= offset:
            event = events[pointer]
            if event.kind == "sensor":
                engine.ingest_partial_snapshot({event.target: event.value})
            else:
                engine.set_activity(None if event.target == "none" else event.target)
            pointer += 1
        fired, _ = evaluate_tick(reminder, engine.make_tick(now))
        if fired:
            offsets.append(offset)
    return offsets


def run_batch(seed, pairs, max_depth=4, max_ticks=400, tick_interval=1.0):
    rng = random.Random(seed)
    home = study_home()
    mismatches = []
    for i in range(pairs):
        program = gen_program(rng, home, depth=max_depth)
        n_ticks = rng.randrange(50, max_ticks)
        trace = gen_trace(rng, home, n_ticks, tick_interval)
        expected = brute_force_oracle(program, trace, tick_interval)
        got = raw_fire_offsets(program, trace, tick_interval)
        if expected != got:
            mismatches.append((i, program.canonical_text, expected, got))
    return mismatches


def test_incremental_matches_oracle_sample():
    mismatches = run_batch(seed=20250311, pairs=150)
    assert not mismatches, mismatches[:3]


def test_tick_interval_robustness():
    """For programs without dwell/timer combinators on piecewise-constant
    traces (events aligned to the coarse grid), halving the tick interval
    never changes the number of firings."""
    rng = random.Random(424242)
    home = study_home()
    for _ in range(60):
        program = gen_program(rng, home, depth=3, stateful=False)
        n_ticks = rng.randrange(40, 160)
        trace = gen_trace(rng, home, n_ticks, tick_interval=2.0, align=2.0)
        coarse = raw_fire_offsets(program, trace, 2.0)
        fine = raw_fire_offsets(program, trace, 1.0)
        assert len(coarse) == len(fine), (program.canonical_text, coarse, fine)
