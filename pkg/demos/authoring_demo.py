"""Walkthrough: conversational authoring with feasibility steering.

Drives two conversations through the no-network fallback backend. The
first request is undetectable ("before I leave the house"), so the
assistant explains why and offers sensor-backed alternatives; the user
picks one and the session compiles to a validated trigger program.

    python3 demos/authoring_demo.py
"""
from datetime import datetime

from remindd import load_home_config_file
from remindd.authoring import handle_user_message, new_session
from remindd.intent import AuthoringContext

HOME = load_home_config_file("homes/casas_study.json")
CTX = AuthoringContext.for_home(HOME, datetime(2025, 3, 3, 12, 0, 0))


def converse(title: str, turns: list[str]) -> None:
    print(f"--- {title} ---")
    session = new_session()
    for text in turns:
        print(f"user:      {text}")
        reply, _ = handle_user_message(session, text, HOME, CTX)
        print(f"assistant: {reply}")
    if session.result is not None:
        compiled = session.result
        print(f"=> dsl:  {compiled.program.canonical_text}")
        print(f"=> kind: {compiled.kind.value}")
    print()


def main() -> None:
    converse("infeasible request, steered to a proxy", [
        "Remind me to check the stove before I leave the house.",
        "When the front door opens.",
        "yes",
    ])
    converse("activity-based habit", [
        "Remind me to take my supplements after dinner every day.",
        "yes",
    ])
    converse("state machine from one phrase", [
        "Remind me to take my food out when I forget my food in the microwave.",
        "yes",
    ])


if __name__ == "__main__":
    main()
