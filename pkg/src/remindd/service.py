"""HTTP facade and persistence.

One process owns one engine. HTTP handlers are concurrent; every engine
mutation funnels through a single lock and event ingestion is queued and
applied between ticks, so the engine only ever sees a consistent world.

Storage layout under the data directory:

* ``reminders/<id>.json`` - one document per reminder (tombstoned on
  delete so repeated DELETEs stay idempotent across restarts);
* ``notifications.jsonl`` - append-only fired-notification log, one JSON
  record per line with a monotone ``seq``;
* ``blackboards.json`` - periodic checkpoint of evaluation state; losing
  it is safe (reminders re-arm at step 0).

Clock modes: ``wall`` ticks on a background thread at the configured
interval; ``virtual`` advances only through POST /ticks, which makes the
whole API deterministic for tests and demos.
"""
from __future__ import annotations

import json
import os
import queue
import threading
import time as time_mod
from contextlib import asynccontextmanager
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from starlette.concurrency import run_in_threadpool

from . import dsl
from .authoring import (AssistantBackend, SessionClosed, Session, handle_user_message,
                        new_session, select_backend)
from .home import HomeConfig, InvalidValue, load_home_config_file
from .intent import AuthoringContext, ReminderIntent, intent_from_json, intent_to_json
from .runtime import (Engine, Notification, RuntimeReminder, UnknownActivity,
                      UnknownSensor)

_B32 = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


def new_reminder_id(ts_ms: int | None = None) -> str:
    """ULID-style id: 48-bit millisecond timestamp + 80 random bits in
    Crockford base32; lexicographic order matches creation order."""
    ts = ts_ms if ts_ms is not None else int(time_mod.time() * 1000)
    value = (ts << 80) | int.from_bytes(os.urandom(10), "big")
    chars = []
    for _ in range(26):
        chars.append(_B32[value & 31])
        value >>= 5
    return "".join(reversed(chars))


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}")


@dataclass
class StoredReminder:
    id: str
    intent: ReminderIntent
    dsl_text: str
    kind: str
    created_at: datetime
    status: str = "armed"  # armed | disarmed | deleted

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "intent": intent_to_json(self.intent),
            "dsl": self.dsl_text,
            "kind": self.kind,
            "created_at": self.created_at.isoformat(sep=" "),
            "status": self.status,
        }

    @staticmethod
    def from_json(doc: dict) -> "StoredReminder":
        return StoredReminder(
            id=doc["id"],
            intent=intent_from_json(doc["intent"]),
            dsl_text=doc["dsl"],
            kind=doc["kind"],
            created_at=datetime.fromisoformat(doc["created_at"]),
            status=doc.get("status", "armed"),
        )

    def summary(self) -> dict:
        return {"id": self.id, "message": self.intent.what, "dsl": self.dsl_text,
                "kind": self.kind, "recurrence": self.intent.recurrence.kind,
                "status": self.status,
                "created_at": self.created_at.isoformat(sep=" ")}


class ServiceState:
    """Everything behind the HTTP surface; also usable headless in tests."""

    def __init__(self, home: HomeConfig, data_dir: str | Path,
                 clock: str = "virtual", tick_interval: float = 1.0,
                 start: datetime | None = None,
                 backend: AssistantBackend | None = None,
                 checkpoint_every: int = 60):
        if clock not in ("wall", "virtual"):
            raise ValueError(f"unknown clock mode {clock!r}")
        self.home = home
        self.clock = clock
        self.tick_interval = tick_interval
        self.backend = backend or select_backend()
        self.checkpoint_every = checkpoint_every
        self.data_dir = Path(data_dir)
        self.reminders_dir = self.data_dir / "reminders"
        self.reminders_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.data_dir / "notifications.jsonl"
        self.checkpoint_path = self.data_dir / "blackboards.json"

        self.lock = threading.RLock()
        self.engine = Engine(home, tick_interval)
        self.sessions: dict[str, Session] = {}
        self.stored: dict[str, StoredReminder] = {}
        self.notifications: list[dict] = []
        self.subscribers: list[queue.Queue] = []
        self.pending: list[tuple] = []  # queued (kind, target, value) ingestions
        self.vclock = start or datetime.now().replace(microsecond=0)
        self._ticks_since_checkpoint = 0
        self._wall_thread: threading.Thread | None = None
        self._stop = threading.Event()

        self._load()

    # -- persistence --------------------------------------------------------

    def _load(self) -> None:
        for path in sorted(self.reminders_dir.glob("*.json")):
            doc = json.loads(path.read_text(encoding="utf-8"))
            stored = StoredReminder.from_json(doc)
            self.stored[stored.id] = stored
            if stored.status == "deleted":
                continue
            program = dsl.typecheck(dsl.parse(stored.dsl_text), self.home)
            runtime = RuntimeReminder(stored.id, stored.intent, program,
                                      armed=stored.status == "armed")
            self.engine.add(runtime)
        if self.log_path.exists():
            with self.log_path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self.notifications.append(json.loads(line))
        if self.checkpoint_path.exists():
            doc = json.loads(self.checkpoint_path.read_text(encoding="utf-8"))
            for rid, state in (doc.get("reminders") or {}).items():
                runtime = self.engine.reminders.get(rid)
                if runtime is None:
                    continue
                runtime.blackboard = dict(state.get("blackboard") or {})
                runtime.fire_count = int(state.get("fire_count", 0))
                if state.get("last_fired"):
                    runtime.last_fired = datetime.fromisoformat(state["last_fired"])
                runtime.armed = bool(state.get("armed", runtime.armed))
            if self.clock == "virtual" and doc.get("clock"):
                restored = datetime.fromisoformat(doc["clock"])
                if restored > self.vclock:
                    self.vclock = restored
                self.engine.last_now = restored

    def _persist_reminder(self, stored: StoredReminder) -> None:
        path = self.reminders_dir / f"{stored.id}.json"
        path.write_text(json.dumps(stored.to_json(), indent=2) + "\n",
                        encoding="utf-8")

    def checkpoint(self) -> None:
        with self.lock:
            doc = {
                "clock": self.engine.last_now.isoformat(sep=" ")
                if self.engine.last_now else None,
                "reminders": {
                    rid: {"blackboard": r.blackboard, "armed": r.armed,
                          "fire_count": r.fire_count,
                          "last_fired": r.last_fired.isoformat(sep=" ")
                          if r.last_fired else None}
                    for rid, r in self.engine.reminders.items()
                },
            }
            self.checkpoint_path.write_text(json.dumps(doc, indent=2) + "\n",
                                            encoding="utf-8")

    # -- engine driving ------------------------------------------------------

    def enqueue_event(self, kind: str, target: str, value) -> None:
        with self.lock:
            if kind == "sensor":
                descriptor = self.home.sensor(target)
                if descriptor is None:
                    raise UnknownSensor(target)
                from .home import validate_sensor_value
                validate_sensor_value(descriptor.kind, value)
            elif kind == "activity":
                if target != "none" and self.home.activity(target) is None:
                    raise UnknownActivity(target)
            else:
                raise ApiError(422, "invalid_value", f"unknown event kind {kind!r}")
            self.pending.append((kind, target, value))

    def _apply_pending(self) -> None:
        for kind, target, value in self.pending:
            if kind == "sensor":
                self.engine.ingest_partial_snapshot({target: value})
            else:
                self.engine.set_activity(None if target == "none" else target)
        self.pending.clear()

    def _emit(self, fired: list[Notification]) -> None:
        if not fired:
            return
        with self.log_path.open("a", encoding="utf-8") as fh:
            for notification in fired:
                record = notification.to_json()
                record["seq"] = len(self.notifications) + 1
                self.notifications.append(record)
                fh.write(json.dumps(record, sort_keys=True) + "\n")
                stored = self.stored.get(notification.reminder_id)
                runtime = self.engine.reminders.get(notification.reminder_id)
                if (stored is not None and runtime is not None
                        and not runtime.armed and stored.status == "armed"):
                    stored.status = "disarmed"
                    self._persist_reminder(stored)
                for q in list(self.subscribers):
                    q.put(record)

    def tick_once(self, now: datetime) -> list[Notification]:
        with self.lock:
            self._apply_pending()
            fired = self.engine.advance(now)
            self._emit(fired)
            self._ticks_since_checkpoint += 1
        if self._ticks_since_checkpoint >= self.checkpoint_every:
            self._ticks_since_checkpoint = 0
            self.checkpoint()
        return fired

    def advance_virtual(self, seconds: float) -> dict:
        if self.clock != "virtual":
            raise ApiError(409, "clock_mode", "POST /ticks needs --clock virtual")
        fired_total = 0
        with self.lock:
            steps = max(1, int(seconds // self.tick_interval))
            for _ in range(steps):
                self.vclock += timedelta(seconds=self.tick_interval)
                fired_total += len(self.tick_once(self.vclock))
        self.checkpoint()
        return {"advanced": steps * self.tick_interval,
                "now": self.vclock.isoformat(sep=" "), "fired": fired_total}

    def start_wall_clock(self) -> None:
        if self.clock != "wall" or self._wall_thread is not None:
            return

        def loop() -> None:
            while not self._stop.wait(self.tick_interval):
                now = datetime.now().replace(microsecond=0)
                with self.lock:
                    if self.engine.last_now is not None and now <= self.engine.last_now:
                        continue
                try:
                    self.tick_once(now)
                except Exception:  # noqa: BLE001 - keep the heart beating
                    pass

        self._wall_thread = threading.Thread(target=loop, daemon=True,
                                             name="remindd-ticker")
        self._wall_thread.start()

    def shutdown(self) -> None:
        self._stop.set()
        if self._wall_thread is not None:
            self._wall_thread.join(timeout=2 * self.tick_interval + 1)
            self._wall_thread = None
        self.checkpoint()

    # -- authoring ----------------------------------------------------------

    def authoring_now(self) -> datetime:
        return self.vclock if self.clock == "virtual" else datetime.now()

    def create_session(self) -> Session:
        with self.lock:
            session = new_session()
            self.sessions[session.id] = session
            return session

    def post_message(self, session_id: str, text: str) -> dict:
        with self.lock:
            session = self.sessions.get(session_id)
            if session is None:
                raise ApiError(404, "unknown_session", f"no session {session_id!r}")
            if not text or not text.strip():
                raise ApiError(422, "empty_text", "message text must be non-empty")
            ctx = AuthoringContext.for_home(self.home, self.authoring_now())
            try:
                reply, _ = handle_user_message(session, text, self.home, ctx,
                                               self.backend)
            except SessionClosed as exc:
                raise ApiError(409, "session_closed", str(exc)) from exc
            payload = {"reply": reply, "stage": session.stage,
                       "slots": dict(session.slots)}
            if session.stage == "done" and session.result is not None:
                stored = self._store_compiled(session)
                payload["reminder_id"] = stored.id
            return payload

    def _store_compiled(self, session: Session) -> StoredReminder:
        compiled = session.result
        assert compiled is not None
        stored = StoredReminder(
            id=new_reminder_id(),
            intent=compiled.intent,
            dsl_text=compiled.program.canonical_text,
            kind=compiled.kind.value,
            created_at=self.authoring_now(),
        )
        self.stored[stored.id] = stored
        self._persist_reminder(stored)
        self.engine.add(RuntimeReminder(stored.id, compiled.intent,
                                        compiled.program))
        return stored

    def list_reminders(self) -> list[dict]:
        with self.lock:
            return [s.summary() for s in sorted(self.stored.values(),
                                                key=lambda s: s.id)
                    if s.status != "deleted"]

    def delete_reminder(self, reminder_id: str) -> None:
        with self.lock:
            stored = self.stored.get(reminder_id)
            if stored is None:
                raise ApiError(404, "unknown_reminder", f"no reminder {reminder_id!r}")
            if stored.status != "deleted":
                stored.status = "deleted"
                self._persist_reminder(stored)
            self.engine.remove(reminder_id)

    def notifications_since(self, since: int) -> list[dict]:
        with self.lock:
            return [record for record in self.notifications
                    if record.get("seq", 0) > since]

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self.lock:
            self.subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self.lock:
            if q in self.subscribers:
                self.subscribers.remove(q)

    def snapshot_state(self) -> dict:
        with self.lock:
            sensors = {}
            for sensor in self.home.sensors:
                from .home import default_value
                sensors[sensor.id] = self.engine.snapshot.get(
                    sensor.id, default_value(sensor.kind))
            return {
                "now": (self.engine.last_now or self.vclock).isoformat(sep=" "),
                "clock": self.clock,
                "tick_interval": self.tick_interval,
                "sensors": sensors,
                "activity": {"current": self.engine.activity.current,
                             "since": self.engine.activity.since.isoformat(sep=" ")},
            }


# ---------------------------------------------------------------------------
# FastAPI wiring
# ---------------------------------------------------------------------------

def create_app(home: HomeConfig | str | Path, data_dir: str | Path,
               clock: str = "virtual", tick_interval: float = 1.0,
               start: datetime | None = None,
               backend: AssistantBackend | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    if not isinstance(home, HomeConfig):
        home = load_home_config_file(home)
    state = ServiceState(home, data_dir, clock, tick_interval, start, backend)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        state.start_wall_clock()
        try:
            yield
        finally:
            state.shutdown()

    app = FastAPI(title="remindd", version="0.1.0", lifespan=lifespan)
    app.state.service = state

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def _invalid(_request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=422,
                            content={"code": "invalid_body", "message": str(exc.errors()[:1])})

    @app.exception_handler(Exception)
    async def _boom(_request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=500,
                            content={"code": "internal_error",
                                     "message": f"{type(exc).__name__}"})

    @app.post("/sessions")
    async def create_session() -> dict:
        session = state.create_session()
        return {"session_id": session.id, "stage": session.stage}

    @app.post("/sessions/{session_id}/messages")
    async def post_message(session_id: str, request: Request) -> dict:
        try:
            body = await request.json()
        except Exception as exc:  # noqa: BLE001
            raise ApiError(422, "invalid_body", "body must be JSON") from exc
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            raise ApiError(422, "empty_text", "body needs a string 'text' field")
        return state.post_message(session_id, body["text"])

    @app.get("/reminders")
    async def list_reminders() -> list[dict]:
        return state.list_reminders()

    @app.delete("/reminders/{reminder_id}")
    async def delete_reminder(reminder_id: str) -> dict:
        state.delete_reminder(reminder_id)
        return {"status": "deleted", "id": reminder_id}

    @app.post("/events")
    async def post_event(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception as exc:  # noqa: BLE001
            raise ApiError(422, "invalid_body", "body must be JSON") from exc
        if not isinstance(body, dict):
            raise ApiError(422, "invalid_body", "body must be an object")
        kind = body.get("kind")
        target = body.get("target")
        if kind not in ("sensor", "activity") or not isinstance(target, str):
            raise ApiError(422, "invalid_value",
                           "body needs kind in {sensor, activity} and a target")
        try:
            state.enqueue_event(kind, target, body.get("value"))
        except UnknownSensor as exc:
            raise ApiError(422, "unknown_sensor", str(exc)) from exc
        except UnknownActivity as exc:
            raise ApiError(422, "unknown_activity", str(exc)) from exc
        except InvalidValue as exc:
            raise ApiError(422, "invalid_value", str(exc)) from exc
        return {"accepted_at": state.authoring_now().isoformat(sep=" ")}

    @app.post("/ticks")
    async def post_ticks(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:  # noqa: BLE001
            body = {}
        seconds = body.get("seconds", state.tick_interval) if isinstance(body, dict) \
            else state.tick_interval
        if not isinstance(seconds, (int, float)) or seconds <= 0:
            raise ApiError(422, "invalid_value", "seconds must be a positive number")
        return await run_in_threadpool(state.advance_virtual, float(seconds))

    @app.get("/notifications")
    async def get_notifications(since: int = 0) -> list[dict]:
        return state.notifications_since(since)

    @app.get("/notifications/stream")
    async def stream_notifications(request: Request) -> StreamingResponse:
        q = state.subscribe()

        async def gen():
            try:
                yield ": connected\n\n"
                while True:
                    if await request.is_disconnected():
                        break
                    try:
                        record = await run_in_threadpool(q.get, True, 0.5)
                    except queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    yield f"id: {record['seq']}\ndata: {json.dumps(record, sort_keys=True)}\n\n"
            finally:
                state.unsubscribe(q)

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.get("/state")
    async def get_state() -> dict:
        return state.snapshot_state()

    @app.get("/home")
    async def get_home() -> dict:
        return {
            "sensors": [vars(s) for s in state.home.sensors],
            "activities": [{"label": a.label, "locations": list(a.locations)}
                           for a in state.home.activities],
        }

    if ui_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui_dir = bundled if bundled.is_dir() else None
    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
