"""Session lifecycle engine and append-only JSONL persistence.

One :class:`SessionService` owns a clock, a registry of live sessions, and the
shared backends. Each session gets its own detector, dispatcher, and log file;
all mutations for a session happen under the service lock, which serializes
them per the one-logical-executor model. Under a virtual clock the engine is
advanced explicitly in 100 ms quanta; under a wall clock a driver thread calls
:meth:`SessionService.tick` periodically.

Persistence is one JSONL file per session under ``<data_dir>/sessions``. The
log is complete: episodes and reports can be reconstructed from it alone (see
:func:`replay_report`), which is also how restart recovery works.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, TextIO

from .clock import ScheduledCall, VirtualClock, WallClock
from .core import (
    Condition,
    DocKind,
    EventKind,
    InteractionEvent,
    InterventionEpisode,
    MalformedDocument,
    MalformedEvent,
    NonPositiveDuration,
    NotificationRecord,
    OutOfOrderEvent,
    PayloadKind,
    SessionConfig,
    UnknownSession,
    WorkDocument,
    deck_document,
    document_length,
    validate_config,
    validate_document,
    validate_event,
)
from .detector import IdleDetector, Signal, SignalKind
from .dispatcher import Dispatcher, MailSink
from .generation import (
    DEFAULT_PROMPT_BUDGET,
    DEFAULT_TIMEOUT_S,
    EncouragementSet,
    GeneratorBackend,
    ImageBackend,
    MockBackend,
)
from .metrics import MetricsReport, SessionData, build_report
from .wire import (
    classify_line,
    config_from_dict,
    config_to_dict,
    document_from_dict,
    document_to_dict,
    dumps_line,
    event_from_dict,
    event_to_dict,
    slide_from_dict,
)

logger = logging.getLogger(__name__)

QUANTUM_MS = 100
GRACE_MS = 10_000


@dataclass
class _SessionRuntime:
    session_id: str
    config: SessionConfig
    doc_kind: DocKind
    doc: WorkDocument | None
    recipient: str | None
    start_clock_ms: int
    detector: IdleDetector
    dispatcher: Dispatcher
    log_path: Path
    log_fh: TextIO
    events: list[InteractionEvent] = field(default_factory=list)
    subscribers: list[Callable[[dict], None]] = field(default_factory=list)
    disconnect_call: ScheduledCall | None = None
    synthesized_hidden: bool = False


class SessionService:
    """Front door for everything except HTTP framing (see :mod:`stallcue.server`)."""

    def __init__(
        self,
        data_dir: str | Path,
        *,
        clock: VirtualClock | WallClock | None = None,
        backend: GeneratorBackend | None = None,
        encouragements: tuple[str, ...] | None = None,
        encouragement_seed: int = 0,
        mail_sink: MailSink | None = None,
        image_backend: ImageBackend | None = None,
        quantum_ms: int = QUANTUM_MS,
        grace_ms: int = GRACE_MS,
        prompt_budget: int = DEFAULT_PROMPT_BUDGET,
        gen_timeout: float = DEFAULT_TIMEOUT_S,
        background_generation: bool = False,
    ):
        self.data_dir = Path(data_dir)
        self.sessions_dir = self.data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.clock = clock if clock is not None else VirtualClock()
        self.backend = backend if backend is not None else MockBackend()
        self._enc_messages = encouragements
        self._enc_seed = encouragement_seed
        self.mail_sink = mail_sink
        self.image_backend = image_backend
        self.quantum_ms = quantum_ms
        self.grace_ms = grace_ms
        self.prompt_budget = prompt_budget
        self.gen_timeout = gen_timeout
        self._lock = threading.RLock()
        self._sessions: dict[str, _SessionRuntime] = {}
        self._seq = 0
        self.reports: list[MetricsReport] = []
        self._pool: ThreadPoolExecutor | None = (
            ThreadPoolExecutor(max_workers=4, thread_name_prefix="stallcue-gen")
            if background_generation
            else None
        )
        self._wall = isinstance(self.clock, WallClock)

    # -- lifecycle ---------------------------------------------------------

    def create_session(
        self,
        config: SessionConfig | None = None,
        doc_kind: DocKind | str = DocKind.TEXT,
        recipient: str | None = None,
    ) -> str:
        with self._lock:
            cfg = validate_config(config if config is not None else SessionConfig())
            doc_kind = DocKind(doc_kind)
            self._seq += 1
            sid = f"s{self._seq:06d}"
            log_path = self.sessions_dir / f"{sid}.jsonl"
            log_fh = log_path.open("w", encoding="utf-8")
            start = self.clock.now_ms
            detector = IdleDetector(start_at=0)
            runtime = _SessionRuntime(
                session_id=sid,
                config=cfg,
                doc_kind=doc_kind,
                doc=None,
                recipient=recipient,
                start_clock_ms=start,
                detector=detector,
                dispatcher=None,  # wired below, needs the runtime closure
                log_path=log_path,
                log_fh=log_fh,
            )
            runtime.dispatcher = Dispatcher(
                sid,
                config=lambda: runtime.config,
                document=lambda: runtime.doc,
                now=lambda: self.clock.now_ms - runtime.start_clock_ms,
                backend=self.backend,
                encouragements=EncouragementSet(
                    self._enc_messages, rng_seed=self._enc_seed + self._seq
                )
                if self._enc_messages is not None
                else EncouragementSet.default(rng_seed=self._enc_seed + self._seq),
                push=lambda msg: self._push(runtime, msg),
                log=lambda rec: self._write(runtime, rec),
                on_notified=detector.note_notification,
                apply_slide=lambda slide: self._append_generated_slide(runtime, slide),
                mail_sink=self.mail_sink,
                recipient=recipient,
                image_backend=self.image_backend,
                prompt_budget=self.prompt_budget,
                gen_timeout=self.gen_timeout,
                executor=self._pool,
                sleeper=time.sleep if self._wall else None,
                lock=self._lock,
            )
            self._sessions[sid] = runtime
            self._write(
                runtime,
                {
                    "record": "session_start",
                    "session_id": sid,
                    "at": 0,
                    "config": config_to_dict(cfg),
                    "doc_kind": doc_kind.value,
                    "recipient": recipient,
                    "wall_anchor": datetime.now(timezone.utc).isoformat()
                    if self._wall
                    else None,
                },
            )
            return sid

    def end_session(self, session_id: str) -> MetricsReport:
        with self._lock:
            runtime = self._open_runtime(session_id)
            # clients may stamp events slightly ahead of the server clock; the
            # session must close no earlier than anything it observed
            now = max(self._session_now(runtime), runtime.detector.last_event_at)
            self._write(runtime, {"record": "session_end", "at": now})
            runtime.log_fh.close()
            if runtime.disconnect_call is not None:
                runtime.disconnect_call.cancel()
            data = SessionData(
                session_id=session_id,
                condition=runtime.config.condition,
                idle_threshold_ms=runtime.config.idle_threshold_ms,
                progress_window_ms=runtime.config.progress_window_ms,
                episodes=runtime.dispatcher.episodes,
                events=runtime.events,
                started_at=0,
                ended_at=now,
            )
            report = build_report(data)
            if runtime.config.retain_content and runtime.doc is not None:
                doc_path = self.sessions_dir / f"{session_id}.document.json"
                doc_path.write_text(
                    json.dumps(document_to_dict(runtime.doc), ensure_ascii=False),
                    encoding="utf-8",
                )
            # retain_content=false: the in-memory copy is the only copy; drop it
            runtime.doc = None
            runtime.dispatcher.close()
            del self._sessions[session_id]
            self.reports.append(report)
            return report

    # -- ingestion -----------------------------------------------------------

    def ingest_event(self, session_id: str, ev: InteractionEvent) -> dict:
        with self._lock:
            runtime = self._open_runtime(session_id)
            if ev.session_id != session_id:
                raise MalformedEvent(
                    f"event session {ev.session_id!r} does not match {session_id!r}"
                )
            validate_event(ev)
            if ev.at < runtime.detector.last_event_at:
                raise OutOfOrderEvent(
                    f"event at {ev.at} precedes {runtime.detector.last_event_at}"
                )
            self._write(runtime, event_to_dict(ev))
            runtime.events.append(ev)
            signals = runtime.detector.on_event(ev, runtime.config)
            self._route(runtime, signals)
            return {"received_at": self._session_now(runtime)}

    def update_document(self, session_id: str, payload: WorkDocument | dict) -> dict:
        with self._lock:
            runtime = self._open_runtime(session_id)
            if isinstance(payload, WorkDocument):
                doc = validate_document(payload)
            elif isinstance(payload, dict) and "append_slide" in payload:
                slide = slide_from_dict(payload["append_slide"])
                base = runtime.doc
                if base is None:
                    base = deck_document(())
                if base.doc_kind != DocKind.SLIDE_DECK:
                    raise MalformedDocument("append_slide patch needs a slide deck")
                doc = deck_document(base.slides + (slide,))
            elif isinstance(payload, dict):
                doc = document_from_dict(payload)
            else:
                raise MalformedDocument(f"unsupported document payload {type(payload)!r}")
            if doc.doc_kind != runtime.doc_kind:
                raise MalformedDocument(
                    f"session holds a {runtime.doc_kind.value} document, got {doc.doc_kind.value}"
                )
            runtime.doc = doc
            record = {
                "record": "document_update",
                "at": self._session_now(runtime),
                "doc_kind": doc.doc_kind.value,
                "length": document_length(doc),
            }
            if doc.doc_kind == DocKind.SLIDE_DECK:
                record["slides"] = len(doc.slides)
            self._write(runtime, record)
            return {"length": record["length"]}

    def set_threshold(self, session_id: str, idle_threshold_t: float) -> dict:
        with self._lock:
            runtime = self._open_runtime(session_id)
            if not idle_threshold_t > 0:
                raise NonPositiveDuration("idle_threshold_t", idle_threshold_t)
            runtime.config = replace(
                runtime.config, idle_threshold_t=float(idle_threshold_t)
            )
            self._write(
                runtime,
                {
                    "record": "threshold_update",
                    "at": self._session_now(runtime),
                    "idle_threshold_t": float(idle_threshold_t),
                },
            )
            return {"idle_threshold_t": float(idle_threshold_t)}

    # -- stream support --------------------------------------------------------

    def subscribe(self, session_id: str, fn: Callable[[dict], None]) -> None:
        with self._lock:
            self._open_runtime(session_id).subscribers.append(fn)

    def unsubscribe(self, session_id: str, fn: Callable[[dict], None]) -> None:
        with self._lock:
            runtime = self._sessions.get(session_id)
            if runtime and fn in runtime.subscribers:
                runtime.subscribers.remove(fn)

    def stream_opened(self, session_id: str) -> None:
        with self._lock:
            runtime = self._open_runtime(session_id)
            if runtime.disconnect_call is not None:
                runtime.disconnect_call.cancel()
                runtime.disconnect_call = None
            elif runtime.synthesized_hidden:
                runtime.synthesized_hidden = False
                self._synthesize(runtime, EventKind.PAGE_VISIBLE, self._session_now(runtime))

    def stream_closed(self, session_id: str) -> None:
        with self._lock:
            runtime = self._sessions.get(session_id)
            if runtime is None:
                return
            deadline = self.clock.now_ms + self.grace_ms

            def expire() -> None:
                with self._lock:
                    current = self._sessions.get(session_id)
                    if current is None or current.disconnect_call is not call:
                        return
                    current.disconnect_call = None
                    current.synthesized_hidden = True
                    self._synthesize(
                        current, EventKind.PAGE_HIDDEN, deadline - current.start_clock_ms
                    )

            call = self.clock.schedule_at(deadline, expire)
            runtime.disconnect_call = call

    def _synthesize(self, runtime: _SessionRuntime, kind: EventKind, at: int) -> None:
        ev = InteractionEvent(session_id=runtime.session_id, at=at, kind=kind)
        if ev.at < runtime.detector.last_event_at:
            logger.warning(
                "skipping synthetic %s for %s: timestamp %d regressed",
                kind.value,
                runtime.session_id,
                at,
            )
            return
        self._write(runtime, event_to_dict(ev))
        runtime.events.append(ev)
        self._route(runtime, runtime.detector.on_event(ev, runtime.config))

    # -- engine ------------------------------------------------------------------

    def advance(self, ms: int) -> None:
        """Move virtual time forward, ticking every quantum. Virtual clock only."""
        if not isinstance(self.clock, VirtualClock):
            raise RuntimeError("advance() requires a virtual clock")
        with self._lock:
            target = self.clock.now_ms + int(ms)
            while self.clock.now_ms < target:
                step = min(self.quantum_ms, target - self.clock.now_ms)
                self._step(self.clock.now_ms + step)

    def tick(self) -> None:
        """One driver pass under a wall clock."""
        with self._lock:
            if isinstance(self.clock, WallClock):
                self.clock.run_due()
            self._tick_sessions(self.clock.now_ms)

    def _step(self, t: int) -> None:
        self.clock.advance_to(t)
        self._tick_sessions(t)

    def _tick_sessions(self, t: int) -> None:
        for runtime in list(self._sessions.values()):
            signals = runtime.detector.on_tick(t - runtime.start_clock_ms, runtime.config)
            self._route(runtime, signals)

    # -- internals ------------------------------------------------------------

    def _route(self, runtime: _SessionRuntime, signals: list[Signal]) -> None:
        for sig in signals:
            self._write(runtime, {"at": sig.at, "signal_kind": sig.kind.value})
            runtime.dispatcher.handle_signal(sig)

    def _push(self, runtime: _SessionRuntime, msg: dict) -> None:
        for fn in list(runtime.subscribers):
            try:
                fn(msg)
            except Exception:
                logger.exception("subscriber push failed for %s", runtime.session_id)

    def _write(self, runtime: _SessionRuntime, record: dict) -> None:
        runtime.log_fh.write(dumps_line(record))
        runtime.log_fh.flush()

    def _append_generated_slide(self, runtime: _SessionRuntime, slide) -> None:
        if runtime.doc is None or runtime.doc.doc_kind != DocKind.SLIDE_DECK:
            return
        runtime.doc = deck_document(runtime.doc.slides + (slide,))
        self._write(
            runtime,
            {
                "record": "document_update",
                "at": self._session_now(runtime),
                "doc_kind": DocKind.SLIDE_DECK.value,
                "length": document_length(runtime.doc),
                "slides": len(runtime.doc.slides),
                "source": "generated",
            },
        )

    def _open_runtime(self, session_id: str) -> _SessionRuntime:
        runtime = self._sessions.get(session_id)
        if runtime is None:
            raise UnknownSession(session_id)
        return runtime

    def _session_now(self, runtime: _SessionRuntime) -> int:
        return self.clock.now_ms - runtime.start_clock_ms

    def open_session_ids(self) -> list[str]:
        with self._lock:
            return list(self._sessions)

    def shutdown(self) -> None:
        with self._lock:
            for sid in list(self._sessions):
                self.end_session(sid)
        if self._pool is not None:
            self._pool.shutdown(wait=True)


# -- log replay ------------------------------------------------------------------


def read_session_data(path: str | Path) -> SessionData:
    """Rebuild a :class:`SessionData` from one session's JSONL log alone."""
    sid = None
    condition = Condition.PROPOSED
    cfg: SessionConfig | None = None
    events: list[InteractionEvent] = []
    episodes: list[InterventionEpisode] = []
    by_id: dict[str, InterventionEpisode] = {}
    open_ep: InterventionEpisode | None = None
    ended_at: int | None = None
    with Path(path).open(encoding="utf-8") as fh:
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            obj = json.loads(raw)
            kind = classify_line(obj)
            if kind == "session_start":
                sid = obj["session_id"]
                cfg = validate_config(config_from_dict(obj["config"]))
                condition = cfg.condition
            elif kind == "event":
                events.append(event_from_dict(obj))
            elif kind == "signal":
                sig = obj["signal_kind"]
                if sig == SignalKind.INTERRUPTION_DETECTED.value:
                    open_ep = InterventionEpisode(
                        episode_id=f"ep{len(episodes) + 1:04d}", detected_at=obj["at"]
                    )
                    episodes.append(open_ep)
                    by_id[open_ep.episode_id] = open_ep
                elif sig == SignalKind.RESUMED.value and open_ep is not None:
                    open_ep.resumed_at = obj["at"]
                    open_ep = None
            elif kind == "notification":
                ep = by_id.get(obj.get("episode_id", ""))
                if ep is not None:
                    ep.notifications.append(
                        NotificationRecord(
                            at=obj["at"],
                            payload_kind=PayloadKind(obj["payload_kind"]),
                            headline=obj["headline"],
                        )
                    )
                    if ep.continuation_ref is None and obj.get("continuation_ref"):
                        ep.continuation_ref = obj["continuation_ref"]
            elif kind == "email":
                ep = by_id.get(obj.get("episode_id") or "")
                if ep is not None and obj.get("status") != "skipped":
                    ep.notifications.append(
                        NotificationRecord(
                            at=obj["at"],
                            payload_kind=PayloadKind.AWAY_EMAIL,
                            headline=obj["headline"],
                        )
                    )
                    if ep.continuation_ref is None and obj.get("continuation_ref"):
                        ep.continuation_ref = obj["continuation_ref"]
            elif kind == "threshold_update":
                if cfg is not None:
                    cfg = replace(cfg, idle_threshold_t=float(obj["idle_threshold_t"]))
            elif kind == "session_end":
                ended_at = obj["at"]
    if sid is None or cfg is None:
        raise MalformedDocument(f"log {path} has no session_start record")
    if condition == Condition.PROPOSED:
        for ep in episodes:
            if any(
                n.payload_kind == PayloadKind.ENCOURAGEMENT for n in ep.notifications
            ):
                ep.fallback_used = True
    return SessionData(
        session_id=sid,
        condition=condition,
        idle_threshold_ms=cfg.idle_threshold_ms,
        progress_window_ms=cfg.progress_window_ms,
        episodes=episodes,
        events=events,
        started_at=0,
        ended_at=ended_at,
    )


def replay_report(path: str | Path) -> MetricsReport:
    """Recompute the metrics report for an ended session from its log."""
    return build_report(read_session_data(path))


def load_reports(data_dir: str | Path) -> list[MetricsReport]:
    """Restart recovery: replay every ended session found under a data directory."""
    reports = []
    for path in sorted(Path(data_dir).glob("sessions/*.jsonl")):
        data = read_session_data(path)
        if data.ended_at is None:
            continue  # session was live when the server stopped
        reports.append(build_report(data))
    return reports
