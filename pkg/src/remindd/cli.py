"""Command-line entry points: serve, simulate, author, eval."""
from __future__ import annotations

import argparse
import json
import re
import sys
from datetime import datetime
from pathlib import Path

from . import dsl
from .authoring import select_backend, handle_user_message, new_session
from .home import load_home_config_file
from .intent import AuthoringContext
from .runtime import RuntimeReminder
from .simulator import (CorpusEntry, Trace, TraceEvent, brute_force_oracle,
                        evaluate_corpus, load_trace, run_simulation)

_DUR_RE = re.compile(r"^(\d+(?:\.\d+)?)(s|m|h)?$")


def parse_duration(text: str) -> float:
    m = _DUR_RE.match(text.strip())
    if not m:
        raise argparse.ArgumentTypeError(f"bad duration {text!r} (use e.g. 1s, 5m)")
    mult = {"s": 1, "m": 60, "h": 3600, None: 1}[m.group(2)]
    return float(m.group(1)) * mult


def _load_reminders(home, reminders_dir: Path) -> list[RuntimeReminder]:
    from .service import StoredReminder

    out = []
    for path in sorted(reminders_dir.glob("*.json")):
        stored = StoredReminder.from_json(json.loads(path.read_text(encoding="utf-8")))
        if stored.status == "deleted":
            continue
        program = dsl.typecheck(dsl.parse(stored.dsl_text), home)
        out.append(RuntimeReminder(stored.id, stored.intent, program))
    return out


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    start = datetime.fromisoformat(args.start) if args.start else None
    app = create_app(args.home, args.data, clock=args.clock,
                     tick_interval=args.tick, start=start)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_simulate(args) -> int:
    home = load_home_config_file(args.home)
    trace = load_trace(Path(args.trace).read_text(encoding="utf-8"))
    reminders = _load_reminders(home, Path(args.reminders))
    if not reminders:
        print("no reminders to simulate", file=sys.stderr)
        return 1
    notifications = run_simulation(home, reminders, trace, args.tick)
    for notification in notifications:
        offset = (notification.fired_at - trace.start).total_seconds()
        print(f"t={offset:>10.1f}s  {notification.reminder_id}  "
              f"[{notification.trigger_kind.value}]  {notification.message}")
    print(f"{len(notifications)} notification(s) over {trace.duration:.0f}s")
    if args.oracle:
        ok = True
        by_reminder: dict[str, list[float]] = {r.id: [] for r in reminders}
        for notification in notifications:
            by_reminder[notification.reminder_id].append(
                (notification.fired_at - trace.start).total_seconds())
        for reminder in reminders:
            expected = brute_force_oracle(reminder.program, trace, args.tick)
            got = by_reminder[reminder.id]
            match = "ok" if expected == got else "MISMATCH"
            ok = ok and expected == got
            print(f"oracle {reminder.id}: {match} expected={expected} got={got}")
        return 0 if ok else 2
    return 0


def cmd_author(args) -> int:
    home = load_home_config_file(args.home)
    now = datetime.fromisoformat(args.now) if args.now else datetime.now()
    ctx = AuthoringContext.for_home(home, now.replace(microsecond=0))
    backend = select_backend()
    session = new_session()
    print("Describe the reminder you want (ctrl-d to quit).")
    try:
        for line in sys.stdin:
            text = line.strip()
            if not text:
                continue
            reply, _ = handle_user_message(session, text, home, ctx, backend)
            print(f"assistant: {reply}")
            if session.stage == "done":
                compiled = session.result
                print(f"dsl: {compiled.program.canonical_text}")
                print(f"kind: {compiled.kind.value}")
                if args.out:
                    from .intent import intent_to_json
                    doc = intent_to_json(compiled.intent)
                    doc["dsl"] = compiled.program.canonical_text
                    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n",
                                              encoding="utf-8")
                    print(f"wrote {args.out}")
                return 0
            if session.stage == "abandoned":
                return 1
    except KeyboardInterrupt:
        pass
    return 0


def load_corpus(corpus_dir: Path) -> list[CorpusEntry]:
    entries = []
    for path in sorted(corpus_dir.glob("*.json")):
        doc = json.loads(path.read_text(encoding="utf-8"))
        if "script" not in doc:  # e.g. the corpus-local home.json
            continue
        if "trace" in doc:
            trace = load_trace((corpus_dir / doc["trace"]).read_text(encoding="utf-8"))
        else:
            start = datetime.fromisoformat(doc["start"])
            events = tuple(TraceEvent(float(e["t"]), e["kind"], e["target"],
                                      e.get("value"))
                           for e in doc.get("trace_events", []))
            trace = Trace(doc.get("home", ""), start, float(doc["duration"]), events)
        entries.append(CorpusEntry(
            id=doc.get("id", path.stem),
            script=doc["script"],
            trace=trace,
            expected_offsets=tuple(float(t) for t in doc.get("expected_offsets", [])),
            tick_interval=float(doc.get("tick_interval", 1.0)),
            expect_dsl=doc.get("expect_dsl"),
            expect_kind=doc.get("expect_kind"),
            diagnosis_hint=doc.get("diagnosis_hint"),
        ))
    return entries


def cmd_eval(args) -> int:
    corpus_dir = Path(args.corpus)
    home_path = args.home or (corpus_dir / "home.json")
    home = load_home_config_file(home_path)
    entries = load_corpus(corpus_dir)
    report = evaluate_corpus(
        entries, home,
        make_ctx=lambda entry: AuthoringContext.for_home(home, entry.trace.start))
    print(report.to_table())
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_json(), indent=2) + "\n",
                                   encoding="utf-8")
        print(f"wrote {args.json}")
    counts = report.label_counts()
    return 0 if counts["correct"] == report.size else 2


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="remindd",
                                     description="context-aware smart-home reminders")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--home", required=True, help="home config JSON")
    p.add_argument("--data", required=True, help="data directory")
    p.add_argument("--clock", choices=("wall", "virtual"), default="wall")
    p.add_argument("--tick", type=parse_duration, default=1.0,
                   help="tick interval, e.g. 1s")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--start", help="virtual clock start (ISO datetime)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="replay a trace against stored reminders")
    p.add_argument("--home", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--reminders", required=True, help="directory of reminder JSON docs")
    p.add_argument("--tick", type=parse_duration, default=1.0)
    p.add_argument("--oracle", action="store_true",
                   help="cross-check firings against the brute-force oracle")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("author", help="author a reminder in the terminal")
    p.add_argument("--home", required=True)
    p.add_argument("--now", help="authoring clock (ISO datetime), defaults to now")
    p.add_argument("--out", help="write the finished intent document here")
    p.set_defaults(func=cmd_author)

    p = sub.add_parser("eval", help="run the scripted-corpus evaluation harness")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--home", help="home config (defaults to <corpus>/home.json)")
    p.add_argument("--json", help="also write the machine-readable report here")
    p.set_defaults(func=cmd_eval)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
