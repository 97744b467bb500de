"""Walkthrough: the HTTP service on a virtual clock.

Authors a reminder over HTTP, injects sensor events, advances the clock,
and reads the notification backlog, all deterministically in-process.

    python3 demos/service_demo.py
"""
import tempfile
from datetime import datetime

from fastapi.testclient import TestClient

from remindd.service import create_app


def main() -> None:
    with tempfile.TemporaryDirectory() as data_dir:
        app = create_app("homes/casas_study.json", data_dir, clock="virtual",
                         tick_interval=1.0, start=datetime(2025, 3, 3, 18, 0, 0))
        with TestClient(app) as client:
            sid = client.post("/sessions").json()["session_id"]
            for text in ("Remind me to take my food out when I forget my food "
                         "in the microwave.", "yes"):
                reply = client.post(f"/sessions/{sid}/messages",
                                    json={"text": text}).json()
                print(f"user:      {text}")
                print(f"assistant: {reply['reply']}")

            print("\ninjecting: microwave runs 18:00:00-18:00:30, door stays shut")
            client.post("/events", json={"kind": "sensor",
                                         "target": "plug_microwave", "value": 1.5})
            client.post("/ticks", json={"seconds": 30})
            client.post("/events", json={"kind": "sensor",
                                         "target": "plug_microwave", "value": 0.0})
            result = client.post("/ticks", json={"seconds": 300}).json()
            print(f"advanced to {result['now']}, fired {result['fired']}")

            for record in client.get("/notifications?since=0").json():
                print(f"notification #{record['seq']} at {record['fired_at']}: "
                      f"{record['message']} [{record['trigger_kind']}]")


if __name__ == "__main__":
    main()
