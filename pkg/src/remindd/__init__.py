"""Context-aware smart-home reminders.

Conversational authoring turns everyday-language requests into validated
trigger programs in a small condition DSL; a tick-based runtime fires them
from simulated or injected sensor and activity streams.
"""

from .home import (HomeConfig, SensorDescriptor, ActivityDescriptor, TimeWindow,
                   load_home_config, load_home_config_file, format_home_config,
                   lookup_time_mapping, resolve_sensor, sensors_at_location)
from .dsl import (parse, typecheck, classify, format_program, TriggerProgram,
                  ValidatedProgram, TriggerKind, ParseError, TypecheckError)
from .intent import (ReminderIntent, WhenSpec, AuthoringContext,
                     normalize_intent, parse_time_expression,
                     render_intent_sentence)
from .feasibility import FeasibilityVerdict, check_feasibility, suggest_alternatives
from .runtime import (Engine, RuntimeReminder, Notification, Tick, ActivityState,
                      evaluate_tick, reset_reminder_state, ClockRegression)

__all__ = [
    "HomeConfig", "SensorDescriptor", "ActivityDescriptor", "TimeWindow",
    "load_home_config", "load_home_config_file", "format_home_config",
    "lookup_time_mapping", "resolve_sensor", "sensors_at_location",
    "parse", "typecheck", "classify", "format_program", "TriggerProgram",
    "ValidatedProgram", "TriggerKind", "ParseError", "TypecheckError",
    "ReminderIntent", "WhenSpec", "AuthoringContext", "normalize_intent",
    "parse_time_expression", "render_intent_sentence",
    "FeasibilityVerdict", "check_feasibility", "suggest_alternatives",
    "Engine", "RuntimeReminder", "Notification", "Tick", "ActivityState",
    "evaluate_tick", "reset_reminder_state", "ClockRegression",
]

__version__ = "0.1.0"
