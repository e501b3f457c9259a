"""Clock abstraction: wall time for deployment, virtual time for tests.

The virtual clock only moves when told to, which makes every timing rule in
the engine (idle thresholds, prompt cadence, away delays, disconnect grace)
exactly reproducible. Deferred callbacks fire in timestamp order while the
clock advances, with ``now`` set to each callback's due time.
"""

from __future__ import annotations

import heapq
import itertools
import time
from typing import Callable


class ScheduledCall:
    """Handle for a deferred callback; cancellation is a flag flip."""

    __slots__ = ("at", "seq", "fn", "cancelled")

    def __init__(self, at: int, seq: int, fn: Callable[[], None]):
        self.at = at
        self.seq = seq
        self.fn = fn
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def __lt__(self, other: "ScheduledCall") -> bool:
        return (self.at, self.seq) < (other.at, other.seq)


class _BaseClock:
    def __init__(self) -> None:
        self._heap: list[ScheduledCall] = []
        self._seq = itertools.count()

    @property
    def now_ms(self) -> int:
        raise NotImplementedError

    def schedule_at(self, at_ms: int, fn: Callable[[], None]) -> ScheduledCall:
        call = ScheduledCall(int(at_ms), next(self._seq), fn)
        heapq.heappush(self._heap, call)
        return call

    def _run_due(self, upto_ms: int) -> None:
        while self._heap and self._heap[0].at <= upto_ms:
            call = heapq.heappop(self._heap)
            if call.cancelled:
                continue
            self._on_fire(call)
            call.fn()

    def _on_fire(self, call: ScheduledCall) -> None:
        pass


class VirtualClock(_BaseClock):
    """Deterministic clock; time advances only by explicit calls."""

    def __init__(self, start_ms: int = 0):
        super().__init__()
        self._now = int(start_ms)
        self._firing_at: int | None = None

    @property
    def now_ms(self) -> int:
        return self._firing_at if self._firing_at is not None else self._now

    def advance_to(self, t_ms: int) -> None:
        t_ms = int(t_ms)
        if t_ms < self._now:
            raise ValueError(f"virtual clock cannot rewind {self._now} -> {t_ms}")
        self._run_due(t_ms)
        self._firing_at = None
        self._now = t_ms

    def advance(self, delta_ms: int) -> None:
        self.advance_to(self._now + int(delta_ms))

    def _on_fire(self, call: ScheduledCall) -> None:
        # callbacks observe their own due time as "now"
        self._firing_at = max(call.at, self._now)


class WallClock(_BaseClock):
    """Monotonic wall clock anchored at construction."""

    def __init__(self) -> None:
        super().__init__()
        self._anchor = time.monotonic()

    @property
    def now_ms(self) -> int:
        return int((time.monotonic() - self._anchor) * 1000)

    def run_due(self) -> None:
        self._run_due(self.now_ms)
