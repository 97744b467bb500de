"""Tick-based incremental trigger evaluation.

Every armed reminder advances one tick at a time over (now, sensor
snapshot, activity state, blackboard). All per-node memory lives in the
reminder's blackboard under keys derived from node paths, so state is
serializable and a cleared blackboard restarts evaluation from scratch.

Normative node semantics (both this evaluator and the brute-force oracle
in :mod:`remindd.simulator` implement exactly these rules):

* rising(L): fires when L is true and the stored previous value is false;
  previous starts false, so a level already true on the first evaluated
  tick fires.
* falling(L): symmetric; previous starts false, so nothing fires until a
  true has been seen.
* started(a) / ended(a): fire on activity transitions into / out of the
  label; previous activity starts as none.
* at(t): fires on the first tick of each calendar day whose time of day
  is >= t; at most once per day.
* held(L, d): fires on the tick where L has been continuously true for at
  least d; once per continuous run.
* after(E, d, cancel): E firing arms a deadline now+d (a newer E
  overwrites it); a tick where the cancel level is true clears the
  deadline, winning over a same-tick E; the event fires on the first tick
  at or past the deadline.
* seq(steps, within): steps advance in order. An event step advances on
  the tick its event fires; its sub-state starts accumulating on the tick
  after the step becomes active. A hold step is entered on the arrival
  tick, requires its level true on every tick, and advances once the
  dwell reaches its duration; a false level resets the whole sequence to
  step 0. If `within` is set, exceeding it since the first step's
  completion also resets. Completing the last step fires.
* E when G: fires iff E fires this tick and G samples true this tick; E's
  state updates every tick regardless of the gate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, time, timedelta

from . import dsl
from .home import HomeConfig, default_value, validate_sensor_value
from .intent import ReminderIntent

_EPOCH = datetime(1970, 1, 1)


def _ep(dt: datetime) -> float:
    return (dt - _EPOCH).total_seconds()


class ClockRegression(RuntimeError):
    """A tick arrived at or before the previous tick's time."""


class UnknownSensor(KeyError):
    pass


class UnknownActivity(KeyError):
    pass


@dataclass(frozen=True)
class ActivityState:
    current: str | None
    since: datetime


@dataclass(frozen=True)
class Tick:
    now: datetime
    snapshot: dict[str, bool | float]
    activity: ActivityState


@dataclass
class RuntimeReminder:
    id: str
    intent: ReminderIntent
    program: dsl.ValidatedProgram
    blackboard: dict = field(default_factory=dict)
    armed: bool = True
    last_fired: datetime | None = None
    fire_count: int = 0
    last_tick: datetime | None = None

    @property
    def kind(self) -> dsl.TriggerKind:
        return dsl.classify(self.program)


@dataclass(frozen=True)
class Notification:
    reminder_id: str
    message: str
    fired_at: datetime
    trigger_kind: dsl.TriggerKind

    def to_json(self) -> dict:
        return {
            "reminder_id": self.reminder_id,
            "message": self.message,
            "fired_at": self.fired_at.isoformat(sep=" "),
            "trigger_kind": self.trigger_kind.value,
        }


def notification_log_line(notification: Notification) -> str:
    return json.dumps(notification.to_json(), sort_keys=True)


# ---------------------------------------------------------------------------
# Level sampling
# ---------------------------------------------------------------------------

def _in_window(t: time, start: time, end: time) -> bool:
    # half-open [start, end); start > end wraps midnight; start == end is empty
    if start == end:
        return False
    if start < end:
        return start <= t < end
    return t >= start or t < end


def sample_level(node: dsl.LevelExpr, tick: Tick, home: HomeConfig) -> bool:
    if isinstance(node, dsl.SensorBool):
        kind = home.sensor(node.sensor_id).kind  # validated upstream
        return bool(tick.snapshot.get(node.sensor_id, default_value(kind)))
    if isinstance(node, dsl.SensorCmp):
        value = float(tick.snapshot.get(node.sensor_id, 0.0))
        if node.op == ">":
            return value > node.threshold
        if node.op == ">=":
            return value >= node.threshold
        if node.op == "<":
            return value < node.threshold
        return value <= node.threshold
    if isinstance(node, dsl.Active):
        return tick.activity.current == node.activity
    if isinstance(node, dsl.Between):
        return _in_window(tick.now.time(), node.start, node.end)
    if isinstance(node, dsl.Not):
        return not sample_level(node.child, tick, home)
    if isinstance(node, dsl.And):
        return sample_level(node.left, tick, home) and sample_level(node.right, tick, home)
    if isinstance(node, dsl.Or):
        return sample_level(node.left, tick, home) or sample_level(node.right, tick, home)
    raise TypeError(f"not a level node: {node!r}")


# ---------------------------------------------------------------------------
# Incremental event evaluation
# ---------------------------------------------------------------------------

def _clear_subtree(bb: dict, path: str) -> None:
    doomed = [k for k in bb if k.startswith(path + "/") or k.startswith(path + ".")]
    for k in doomed:
        del bb[k]


def _eval_event(node: dsl.EventExpr, path: str, tick: Tick, bb: dict,
                home: HomeConfig) -> bool:
    now = tick.now
    if isinstance(node, dsl.At):
        key = f"{path}/at_date"
        today = now.date().isoformat()
        if bb.get(key) != today and now.time() >= node.at:
            bb[key] = today
            return True
        return False

    if isinstance(node, (dsl.Rising, dsl.Falling)):
        key = f"{path}/prev"
        prev = bool(bb.get(key, False))
        cur = sample_level(node.level, tick, home)
        bb[key] = cur
        if isinstance(node, dsl.Rising):
            return cur and not prev
        return prev and not cur

    if isinstance(node, (dsl.Started, dsl.Ended)):
        key = f"{path}/prev_activity"
        prev = bb.get(key, "")
        cur = tick.activity.current or ""
        bb[key] = cur
        if isinstance(node, dsl.Started):
            return cur == node.activity and prev != node.activity
        return prev == node.activity and cur != node.activity

    if isinstance(node, dsl.Held):
        since_key = f"{path}/since"
        fired_key = f"{path}/fired"
        if sample_level(node.level, tick, home):
            since = bb.get(since_key)
            if since is None:
                since = _ep(now)
                bb[since_key] = since
            if not bb.get(fired_key, False) and _ep(now) - since >= node.seconds:
                bb[fired_key] = True
                return True
            return False
        bb.pop(since_key, None)
        bb.pop(fired_key, None)
        return False

    if isinstance(node, dsl.After):
        sub_fired = _eval_event(node.event, f"{path}.1", tick, bb, home)
        key = f"{path}/deadline"
        if sub_fired:
            bb[key] = _ep(now) + node.seconds
        if node.cancel is not None and sample_level(node.cancel, tick, home):
            bb.pop(key, None)
        deadline = bb.get(key)
        if deadline is not None and _ep(now) >= deadline:
            del bb[key]
            return True
        return False

    if isinstance(node, dsl.Seq):
        return _eval_seq(node, path, tick, bb, home)

    if isinstance(node, dsl.When):
        sub_fired = _eval_event(node.event, f"{path}.1", tick, bb, home)
        return sub_fired and sample_level(node.gate, tick, home)

    raise TypeError(f"not an event node: {node!r}")


def _seq_reset(node: dsl.Seq, path: str, bb: dict, now: datetime) -> None:
    for i in range(1, len(node.steps) + 1):
        _clear_subtree(bb, f"{path}.{i}")
        bb.pop(f"{path}.{i}/entry", None)
    bb.pop(f"{path}/t_first", None)
    bb[f"{path}/idx"] = 0
    bb[f"{path}/act"] = _ep(now)


def _seq_advance(node: dsl.Seq, path: str, tick: Tick, bb: dict,
                 home: HomeConfig) -> bool:
    """Advance past the step that just completed; returns True when the
    sequence as a whole fires. Hold steps are entered (and their level
    checked) on the arrival tick itself."""
    now = tick.now
    idx = int(bb.get(f"{path}/idx", 0))
    if idx == 0:
        bb[f"{path}/t_first"] = _ep(now)
    idx += 1
    if idx >= len(node.steps):
        _seq_reset(node, path, bb, now)
        return True
    bb[f"{path}/idx"] = idx
    step_path = f"{path}.{idx + 1}"
    _clear_subtree(bb, step_path)
    step = node.steps[idx]
    if isinstance(step, dsl.EventStep):
        bb[f"{path}/act"] = _ep(now)  # sub-event starts next tick
        return False
    # hold step: enter on the arrival tick, verify the level immediately
    # (durations are > 0, so a hold can never complete on its arrival tick)
    if not sample_level(step.level, tick, home):
        _seq_reset(node, path, bb, now)
        return False
    bb[f"{step_path}/entry"] = _ep(now)
    bb[f"{path}/act"] = _ep(now)
    return False


def _eval_seq(node: dsl.Seq, path: str, tick: Tick, bb: dict,
              home: HomeConfig) -> bool:
    now = tick.now
    idx = int(bb.get(f"{path}/idx", 0))
    t_first = bb.get(f"{path}/t_first")
    if (node.within is not None and idx > 0 and t_first is not None
            and _ep(now) - t_first > node.within):
        _seq_reset(node, path, bb, now)
        return False

    act = bb.get(f"{path}/act")
    if act is not None and _ep(now) <= act:
        return False

    idx = int(bb.get(f"{path}/idx", 0))
    step = node.steps[idx]
    step_path = f"{path}.{idx + 1}"
    if isinstance(step, dsl.EventStep):
        if _eval_event(step.event, f"{step_path}.1", tick, bb, home):
            return _seq_advance(node, path, tick, bb, home)
        return False

    # active hold step
    if not sample_level(step.level, tick, home):
        _seq_reset(node, path, bb, now)
        return False
    entry = bb.get(f"{step_path}/entry")
    if entry is None:
        entry = _ep(now)
        bb[f"{step_path}/entry"] = entry
    if _ep(now) - entry >= step.seconds:
        return _seq_advance(node, path, tick, bb, home)
    return False


# ---------------------------------------------------------------------------
# Reminder-level evaluation and arming policy
# ---------------------------------------------------------------------------

def window_admits(intent: ReminderIntent, now: datetime,
                  last_fired: datetime | None) -> bool:
    """Date restriction plus recurrence re-arm rule for this instant."""
    if intent.date.on is not None and now.date() != intent.date.on:
        return False
    recurrence = intent.recurrence
    if recurrence.kind == "once":
        return True
    if recurrence.kind == "daily":
        return last_fired is None or last_fired.date() < now.date()
    # weekly
    if now.weekday() != recurrence.weekday:
        return False
    return last_fired is None or last_fired.date() != now.date()


def evaluate_tick(reminder: RuntimeReminder, tick: Tick) -> tuple[bool, dict]:
    """Advance one reminder by one tick. Stateful nodes update exactly once
    whether or not the firing is admitted; the returned flag is true only
    when the root fires AND the reminder is armed AND the date/recurrence
    window admits it."""
    if reminder.last_tick is not None and tick.now <= reminder.last_tick:
        raise ClockRegression(
            f"tick {tick.now} is not after previous tick {reminder.last_tick}")
    reminder.last_tick = tick.now
    root_fired = _eval_event(reminder.program.root, "0", tick,
                             reminder.blackboard, reminder.program.home)
    fired = (root_fired and reminder.armed
             and window_admits(reminder.intent, tick.now, reminder.last_fired))
    return fired, reminder.blackboard


def reset_reminder_state(reminder: RuntimeReminder) -> None:
    """Clear evaluation memory; keep fire bookkeeping and re-arm per the
    recurrence policy (a spent `once` reminder stays disarmed)."""
    reminder.blackboard.clear()
    reminder.last_tick = None
    if reminder.intent.recurrence.kind == "once" and reminder.fire_count >= 1:
        reminder.armed = False
    else:
        reminder.armed = True


class Engine:
    """Owner of a set of reminders plus the last-known sensor snapshot.

    One engine has one logical owner: callers serialize all mutation
    (ingestion, stepping, add/remove). Unseen contact/motion sensors read
    false, unseen power sensors read 0.0.
    """

    def __init__(self, home: HomeConfig, tick_interval: float = 1.0):
        self.home = home
        self.tick_interval = tick_interval
        self.reminders: dict[str, RuntimeReminder] = {}
        self.snapshot: dict[str, bool | float] = {}
        self.activity = ActivityState(None, _EPOCH)
        self._pending_activity: str | None | object = _UNSET
        self.last_now: datetime | None = None

    def add(self, reminder: RuntimeReminder) -> None:
        self.reminders[reminder.id] = reminder

    def remove(self, reminder_id: str) -> None:
        self.reminders.pop(reminder_id, None)

    def ingest_partial_snapshot(self, updates: dict[str, bool | float]) -> None:
        staged: dict[str, bool | float] = {}
        for sensor_id, value in updates.items():
            descriptor = self.home.sensor(sensor_id)
            if descriptor is None:
                raise UnknownSensor(sensor_id)
            staged[sensor_id] = validate_sensor_value(descriptor.kind, value)
        self.snapshot.update(staged)

    def set_activity(self, label: str | None) -> None:
        if label is not None and self.home.activity(label) is None:
            raise UnknownActivity(label)
        self._pending_activity = label

    def make_tick(self, now: datetime) -> Tick:
        if self._pending_activity is not _UNSET:
            label = self._pending_activity  # type: ignore[assignment]
            self._pending_activity = _UNSET
            if label != self.activity.current:
                self.activity = ActivityState(label, now)
        return Tick(now, dict(self.snapshot), self.activity)

    def step(self, tick: Tick) -> list[Notification]:
        """Evaluate every armed reminder, in ascending id order, against
        this tick; the tick's (possibly partial) snapshot overlays the
        engine's last-known values first."""
        self.ingest_partial_snapshot(tick.snapshot)
        self.activity = tick.activity
        return self._evaluate(Tick(tick.now, dict(self.snapshot), self.activity))

    def advance(self, now: datetime) -> list[Notification]:
        """Build a tick from the engine's own caches and evaluate it."""
        return self._evaluate(self.make_tick(now))

    def _evaluate(self, tick: Tick) -> list[Notification]:
        if self.last_now is not None and tick.now <= self.last_now:
            raise ClockRegression(
                f"tick {tick.now} is not after previous tick {self.last_now}")
        self.last_now = tick.now
        notifications: list[Notification] = []
        for reminder_id in sorted(self.reminders):
            reminder = self.reminders[reminder_id]
            if not reminder.armed:
                continue
            fired, _ = evaluate_tick(reminder, tick)
            if fired:
                reminder.fire_count += 1
                reminder.last_fired = tick.now
                if reminder.intent.recurrence.kind == "once":
                    reminder.armed = False
                notifications.append(Notification(
                    reminder.id, reminder.intent.what, tick.now, reminder.kind))
        return notifications

    def run(self, start: datetime, seconds: float) -> list[Notification]:
        """Step the virtual clock from start through start+seconds."""
        notifications: list[Notification] = []
        steps = int(seconds // self.tick_interval)
        for k in range(steps + 1):
            now = start + timedelta(seconds=k * self.tick_interval)
            notifications.extend(self.advance(now))
        return notifications


class _Unset:
    __slots__ = ()


_UNSET = _Unset()
