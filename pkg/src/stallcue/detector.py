"""Per-session idle state machine.

Watches the interaction stream and the clock, and raises four signals:

  * ``interruption_detected`` -- no interaction for the idle threshold T
  * ``repeat_prompt``         -- still stalled one threshold after the last prompt
  * ``resumed``               -- any interaction while a prompt is outstanding
  * ``away_confirmed``        -- page hidden continuously for the away delay

Phases: ``active`` (working or within T of the last touch), ``intervening``
(interruption declared, prompts cycling), ``away`` (hidden long enough for the
email channel; in-page prompting stops). ``idle_candidate`` is reserved in the
wire enum but no transition produces it.

Thresholds are closed: a signal fires at the first tick at or after the
deadline. Config is read fresh on every call, so a threshold change applies at
the next evaluation and never retroactively. Repeat cadence is self-clocked
from the detection instant and re-anchored via :meth:`IdleDetector.note_notification`
whenever the dispatcher actually emits, which keeps prompt spacing exact even
when payload preparation adds latency.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .core import EventKind, InteractionEvent, OutOfOrderEvent, SessionConfig


class SignalKind(str, enum.Enum):
    INTERRUPTION_DETECTED = "interruption_detected"
    REPEAT_PROMPT = "repeat_prompt"
    RESUMED = "resumed"
    AWAY_CONFIRMED = "away_confirmed"


class Phase(str, enum.Enum):
    ACTIVE = "active"
    IDLE_CANDIDATE = "idle_candidate"
    INTERVENING = "intervening"
    AWAY = "away"


@dataclass(frozen=True)
class Signal:
    kind: SignalKind
    at: int


class IdleDetector:
    """State machine instance for one session.

    All timestamps are session-relative ms. ``on_tick`` must be called at
    least once per second of session time; under the virtual clock the engine
    ticks every 100 ms so signal timestamps are exact.
    """

    def __init__(self, start_at: int = 0):
        self.phase = Phase.ACTIVE
        self.last_interaction_at = start_at
        self.last_event_at = start_at
        self.away_since: int | None = None
        self._away_confirmed = False
        self._last_prompt_at: int | None = None

    def on_event(self, ev: InteractionEvent, cfg: SessionConfig) -> list[Signal]:
        if ev.at < self.last_event_at:
            raise OutOfOrderEvent(
                f"event at {ev.at} precedes previous event at {self.last_event_at}"
            )
        self.last_event_at = ev.at

        if ev.kind == EventKind.PAGE_HIDDEN:
            # opens a hidden period; a repeated hidden event must not restart it
            if self.away_since is None:
                self.away_since = ev.at
                self._away_confirmed = False
            return []
        if ev.kind == EventKind.BLUR:
            # unfocused but visible: neither activity nor leaving the page
            return []

        # every remaining kind is an interaction
        signals: list[Signal] = []
        if ev.kind == EventKind.PAGE_VISIBLE:
            self.away_since = None
            self._away_confirmed = False
        if self.phase in (Phase.INTERVENING, Phase.AWAY):
            signals.append(Signal(SignalKind.RESUMED, ev.at))
            self._last_prompt_at = None
        self.phase = Phase.ACTIVE
        self.last_interaction_at = ev.at
        return signals

    def on_tick(self, now: int, cfg: SessionConfig) -> list[Signal]:
        t_ms = cfg.idle_threshold_ms

        # away confirmation wins over prompting at the boundary tick: once the
        # worker has provably left, the email channel takes over
        if (
            self.away_since is not None
            and not self._away_confirmed
            and now - self.away_since >= cfg.away_delay_ms
        ):
            self._away_confirmed = True
            self.phase = Phase.AWAY
            self._last_prompt_at = None
            return [Signal(SignalKind.AWAY_CONFIRMED, now)]

        if self.phase == Phase.ACTIVE:
            if now - self.last_interaction_at >= t_ms:
                self.phase = Phase.INTERVENING
                self._last_prompt_at = now
                return [Signal(SignalKind.INTERRUPTION_DETECTED, now)]
        elif self.phase == Phase.INTERVENING:
            if self._last_prompt_at is not None and now - self._last_prompt_at >= t_ms:
                self._last_prompt_at = now
                return [Signal(SignalKind.REPEAT_PROMPT, now)]
        return []

    def note_notification(self, at: int) -> None:
        """Re-anchor the repeat cadence on an actually emitted notification."""
        if self.phase == Phase.INTERVENING:
            self._last_prompt_at = at
