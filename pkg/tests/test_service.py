import json
import threading
import time as time_mod
from datetime import datetime

import httpx
from fastapi.testclient import TestClient

from remindd.service import create_app, new_reminder_id

START = datetime(2025, 3, 3, 0, 0, 0)


def make_app(tmp_path, **kwargs):
    kwargs.setdefault("clock", "virtual")
    kwargs.setdefault("tick_interval", 60.0)
    kwargs.setdefault("start", START)
    return create_app("homes/casas_study.json", tmp_path / "data", **kwargs)


def author(client, text, confirm="yes"):
    sid = client.post("/sessions").json()["session_id"]
    r = client.post(f"/sessions/{sid}/messages", json={"text": text})
    assert r.status_code == 200, r.text
    assert r.json()["stage"] == "confirm", r.json()
    r = client.post(f"/sessions/{sid}/messages", json={"text": confirm})
    assert r.json()["stage"] == "done"
    return r.json()["reminder_id"]


def test_reminder_ids_sort_by_creation():
    ids = [new_reminder_id(1000), new_reminder_id(2000), new_reminder_id(3000)]
    assert ids == sorted(ids)
    assert len(ids[0]) == 26


def test_sessions_basic(tmp_path):
    with TestClient(make_app(tmp_path)) as client:
        a = client.post("/sessions").json()["session_id"]
        b = client.post("/sessions").json()["session_id"]
        assert a != b
        # request body is tolerated and ignored
        c = client.post("/sessions", content=b'{"anything": 1}')
        assert c.status_code == 200
        assert client.post("/sessions/nope/messages",
                           json={"text": "hi"}).status_code == 404
        assert client.post(f"/sessions/{a}/messages",
                           json={"text": "  "}).status_code == 422


def test_message_flow_and_session_closed(tmp_path):
    with TestClient(make_app(tmp_path)) as client:
        sid = client.post("/sessions").json()["session_id"]
        r = client.post(f"/sessions/{sid}/messages", json={
            "text": "Remind me to take medication at 6 PM every night."})
        body = r.json()
        assert body["stage"] == "confirm"
        assert "take medication" in body["reply"]
        r = client.post(f"/sessions/{sid}/messages", json={"text": "yes"})
        assert r.json()["stage"] == "done"
        assert r.json()["reminder_id"]
        r = client.post(f"/sessions/{sid}/messages", json={"text": "more"})
        assert r.status_code == 409
        assert r.json()["code"] == "session_closed"


def test_reminder_listing_and_idempotent_delete(tmp_path):
    with TestClient(make_app(tmp_path)) as client:
        assert client.get("/reminders").json() == []
        rid = author(client, "Remind me to water the plants at 09:00 every day.")
        rows = client.get("/reminders").json()
        assert len(rows) == 1 and rows[0]["kind"] == "time_based"
        assert rows[0]["recurrence"] == "daily"
        assert client.delete(f"/reminders/{rid}").status_code == 200
        assert client.delete(f"/reminders/{rid}").status_code == 200
        assert client.get("/reminders").json() == []
        assert client.delete("/reminders/GHOST").status_code == 404


def test_event_injection_and_firing(tmp_path):
    with TestClient(make_app(tmp_path, tick_interval=1.0)) as client:
        author(client, "Remind me to close the door when the front door opens.")
        r = client.post("/events", json={"kind": "sensor",
                                         "target": "contact_front_door",
                                         "value": True})
        assert r.status_code == 200
        client.post("/ticks", json={"seconds": 1})
        records = client.get("/notifications?since=0").json()
        assert len(records) == 1
        assert records[0]["message"] == "close the door"
        assert records[0]["trigger_kind"] == "sensor_based"


def test_activity_events_fire_ended(tmp_path):
    with TestClient(make_app(tmp_path, tick_interval=1.0)) as client:
        author(client, "Remind me to take my supplements after dinner.")
        client.post("/events", json={"kind": "activity", "target": "eating"})
        client.post("/ticks", json={"seconds": 1})
        client.post("/events", json={"kind": "activity", "target": "none"})
        client.post("/ticks", json={"seconds": 1})
        records = client.get("/notifications?since=0").json()
        assert [r["message"] for r in records] == ["take my supplements"]


def test_event_validation_codes(tmp_path):
    with TestClient(make_app(tmp_path)) as client:
        r = client.post("/events", json={"kind": "sensor", "target": "nope"})
        assert (r.status_code, r.json()["code"]) == (422, "unknown_sensor")
        r = client.post("/events", json={"kind": "activity", "target": "flying"})
        assert (r.status_code, r.json()["code"]) == (422, "unknown_activity")
        r = client.post("/events", json={"kind": "sensor",
                                         "target": "plug_microwave", "value": -2})
        assert (r.status_code, r.json()["code"]) == (422, "invalid_value")
        r = client.post("/events", json={"kind": "sonar", "target": "x"})
        assert r.status_code == 422


def test_state_endpoint(tmp_path):
    with TestClient(make_app(tmp_path, tick_interval=1.0)) as client:
        client.post("/events", json={"kind": "sensor",
                                     "target": "plug_microwave", "value": 1.5})
        client.post("/ticks", json={"seconds": 1})
        state = client.get("/state").json()
        assert state["sensors"]["plug_microwave"] == 1.5
        assert state["sensors"]["contact_front_door"] is False
        assert state["clock"] == "virtual"


def test_ticks_rejected_in_wall_mode(tmp_path):
    app = make_app(tmp_path, clock="wall", tick_interval=3600.0)
    with TestClient(app) as client:
        r = client.post("/ticks", json={"seconds": 5})
        assert (r.status_code, r.json()["code"]) == (409, "clock_mode")


def test_fuzzed_bodies_never_crash(tmp_path):
    with TestClient(make_app(tmp_path), raise_server_exceptions=False) as client:
        bodies = [b"", b"{", b"[]", b'{"text": 5}', b'"x"', b"\xff\xfe",
                  json.dumps({"kind": 7}).encode()]
        sid = client.post("/sessions").json()["session_id"]
        for body in bodies:
            for path in (f"/sessions/{sid}/messages", "/events", "/ticks"):
                r = client.post(path, content=body,
                                headers={"Content-Type": "application/json"})
                assert r.status_code < 500, (path, body, r.status_code)
                if r.status_code >= 400:
                    assert "code" in r.json()


def test_durability_and_stream_conservation(tmp_path):
    """Author three daily reminders, fire two, restart: the store reloads
    all three armed, the log holds exactly two lines, and the backlog
    endpoint replays both."""
    app = make_app(tmp_path, tick_interval=60.0)
    with TestClient(app) as client:
        author(client, "Remind me to take pills at 06:00 every day.")
        author(client, "Remind me to feed the cat at 07:30 every day.")
        author(client, "Remind me to stretch at 22:00 every day.")
        client.post("/ticks", json={"seconds": 8 * 3600})  # past 06:00 and 07:30
        assert len(client.get("/notifications?since=0").json()) == 2

    log_lines = (tmp_path / "data" / "notifications.jsonl").read_text().splitlines()
    assert len(log_lines) == 2

    app2 = make_app(tmp_path, tick_interval=60.0)
    with TestClient(app2) as client:
        rows = client.get("/reminders").json()
        assert len(rows) == 3
        assert all(row["status"] == "armed" for row in rows)
        dsl_texts = sorted(row["dsl"] for row in rows)
        assert dsl_texts == ["at(06:00)", "at(07:30)", "at(22:00)"]
        records = client.get("/notifications?since=0").json()
        assert len(records) == 2
        assert [r["seq"] for r in records] == [1, 2]
        assert len(client.get("/notifications?since=1").json()) == 1


def test_blackboard_checkpoint_restores_counts(tmp_path):
    app = make_app(tmp_path, tick_interval=60.0)
    with TestClient(app) as client:
        author(client, "Remind me to take pills at 06:00 every day.")
        client.post("/ticks", json={"seconds": 7 * 3600})
        assert len(client.get("/notifications?since=0").json()) == 1
    app2 = make_app(tmp_path, tick_interval=60.0)
    with TestClient(app2) as client:
        # same virtual day after restart: the daily reminder must not refire
        client.post("/ticks", json={"seconds": 3600})
        assert len(client.get("/notifications?since=0").json()) == 1


def test_notification_stream_broadcast(tmp_path):
    """Two subscribers both receive a pushed event within a tick."""
    import uvicorn

    app = make_app(tmp_path, tick_interval=1.0)
    config = uvicorn.Config(app, host="127.0.0.1", port=18787, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    for _ in range(100):
        if server.started:
            break
        time_mod.sleep(0.05)
    assert server.started
    base = "http://127.0.0.1:18787"
    received: dict[str, list] = {"a": [], "b": []}

    def listen(name):
        with httpx.stream("GET", f"{base}/notifications/stream",
                          timeout=10.0) as response:
            for line in response.iter_lines():
                if line.startswith("data: "):
                    received[name].append(json.loads(line[6:]))
                    return

    listeners = [threading.Thread(target=listen, args=(n,), daemon=True)
                 for n in ("a", "b")]
    for listener in listeners:
        listener.start()
    time_mod.sleep(0.3)

    with httpx.Client(base_url=base, timeout=10.0) as client:
        sid = client.post("/sessions").json()["session_id"]
        client.post(f"/sessions/{sid}/messages",
                    json={"text": "Remind me to shut the door when the front door opens."})
        client.post(f"/sessions/{sid}/messages", json={"text": "yes"})
        client.post("/events", json={"kind": "sensor",
                                     "target": "contact_front_door", "value": True})
        client.post("/ticks", json={"seconds": 1})

    for listener in listeners:
        listener.join(timeout=5)
    server.should_exit = True
    thread.join(timeout=5)
    assert len(received["a"]) == 1 and len(received["b"]) == 1
    assert received["a"][0]["message"] == "shut the door"
    assert received["a"][0] == received["b"][0]
