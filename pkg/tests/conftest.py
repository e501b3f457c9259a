from __future__ import annotations

import random

import pytest

from stallcue import (
    Condition,
    EventKind,
    IdleDetector,
    InteractionEvent,
    MockBackend,
    SessionConfig,
    SessionService,
    VirtualClock,
)

INTERACTIONS = (
    EventKind.KEY,
    EventKind.POINTER_MOVE,
    EventKind.CLICK,
    EventKind.SCROLL,
    EventKind.FOCUS,
    EventKind.PAGE_VISIBLE,
)


@pytest.fixture
def make_service(tmp_path):
    def factory(subdir="data", **kwargs):
        kwargs.setdefault("clock", VirtualClock())
        kwargs.setdefault("backend", MockBackend(seed=7))
        return SessionService(tmp_path / subdir, **kwargs)

    return factory


def ev(sid: str, at: int, kind: EventKind = EventKind.KEY, chars: int = 0) -> InteractionEvent:
    return InteractionEvent(session_id=sid, at=at, kind=kind, chars_delta=chars)


def random_trace(rng: random.Random, t_seconds: int):
    """Grid-aligned event trace for detector fuzzing.

    Times are multiples of 100 ms so threshold crossings land exactly on tick
    boundaries; interaction gaps mix sub-threshold noise with long stalls.
    """
    events: list[tuple[int, EventKind]] = []
    t = 0
    for _ in range(rng.randint(5, 60)):
        roll = rng.random()
        if roll < 0.6:
            gap_ms = rng.randrange(1, t_seconds * 10) * 100  # below threshold
        elif roll < 0.9:
            gap_ms = rng.randrange(t_seconds * 10, t_seconds * 30) * 100  # stall
        else:
            gap_ms = rng.choice([t_seconds * 1000, t_seconds * 1000 - 100])  # boundary
        t += gap_ms
        kind_roll = rng.random()
        if kind_roll < 0.75:
            kind = rng.choice(INTERACTIONS)
        elif kind_roll < 0.85:
            kind = EventKind.BLUR
        elif kind_roll < 0.95:
            kind = EventKind.PAGE_HIDDEN
        else:
            kind = EventKind.PAGE_VISIBLE
        events.append((t, kind))
    end_ms = t + rng.randrange(0, t_seconds * 30) * 100
    return events, end_ms


def drive_detector(events, end_ms: int, t_seconds: int, away_delay: float = 10**7):
    """Run a detector over a trace, ticking every 100 ms; ticks precede events
    that share a timestamp. Returns all emitted signals."""
    cfg = SessionConfig(
        idle_threshold_t=float(t_seconds),
        away_delay=away_delay,
        condition=Condition.NONE,
    )
    detector = IdleDetector()
    signals = []
    queue = list(events)
    for now in range(0, end_ms + 1, 100):
        signals.extend(detector.on_tick(now, cfg))
        while queue and queue[0][0] == now:
            at, kind = queue.pop(0)
            signals.extend(
                detector.on_event(
                    InteractionEvent("s", at, kind, 1 if kind == EventKind.KEY else 0),
                    cfg,
                )
            )
    return signals
