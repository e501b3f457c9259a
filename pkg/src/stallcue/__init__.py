"""stallcue: detect stalled editing sessions, nudge with generated continuations,
and measure whether the nudge worked."""

from .clock import VirtualClock, WallClock
from .core import (
    Condition,
    DocKind,
    EventKind,
    InteractionEvent,
    InterventionEpisode,
    NotificationRecord,
    PayloadKind,
    SessionConfig,
    Slide,
    WorkDocument,
    deck_document,
    text_document,
    validate_config,
)
from .detector import IdleDetector, Phase, Signal, SignalKind
from .dispatcher import Dispatcher, FileMailSink
from .generation import (
    Continuation,
    EncouragementSet,
    HttpBackend,
    MockBackend,
    build_slide_prompt,
    build_text_prompt,
    first_sentence,
    parse_slide_continuation,
)
from .metrics import MetricsReport, aggregate, aggregate_by_condition, export_csv
from .service import SessionService, replay_report
from .sim import Scenario, fuzz_scenarios, run_scenario, run_suite

__version__ = "0.1.0"

__all__ = [
    "Condition",
    "Continuation",
    "Dispatcher",
    "DocKind",
    "EncouragementSet",
    "EventKind",
    "FileMailSink",
    "HttpBackend",
    "IdleDetector",
    "InteractionEvent",
    "InterventionEpisode",
    "MetricsReport",
    "MockBackend",
    "NotificationRecord",
    "PayloadKind",
    "Phase",
    "Scenario",
    "SessionConfig",
    "SessionService",
    "Signal",
    "SignalKind",
    "Slide",
    "VirtualClock",
    "WallClock",
    "WorkDocument",
    "aggregate",
    "aggregate_by_condition",
    "build_slide_prompt",
    "build_text_prompt",
    "deck_document",
    "export_csv",
    "first_sentence",
    "fuzz_scenarios",
    "parse_slide_continuation",
    "replay_report",
    "run_scenario",
    "run_suite",
    "text_document",
    "validate_config",
]
