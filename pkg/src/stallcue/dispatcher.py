"""Per-session orchestration: detector signals in, notifications and email out.

The dispatcher owns the intervention episodes for one session. On detection it
acquires a payload for the session's condition (generated continuation,
encouraging message, or nothing), pushes a notification over the client
channel, and mirrors a content-safe record into the session log. Repeat
prompts re-emit the same payload; resumption closes the episode; a confirmed
away period queues one email.

Privacy rule: when ``retain_content`` is false, continuation-derived text is
never written to any record or log line -- only its length. The client channel
and the outgoing email still carry the full content; they are delivery
channels, not storage.
"""

from __future__ import annotations

import logging
import smtplib
import threading
from concurrent.futures import Executor
from dataclasses import dataclass
from email.message import EmailMessage
from pathlib import Path
from typing import Callable

from .core import (
    Condition,
    DocKind,
    InterventionEpisode,
    NotificationRecord,
    PayloadKind,
    SessionConfig,
    WorkDocument,
)
from .detector import Signal, SignalKind
from .generation import (
    BackendError,
    Continuation,
    EmptyDeck,
    EncouragementSet,
    GeneratorBackend,
    HEADLINE_MAX,
    ImageBackend,
    UnparsableOutput,
    build_slide_prompt,
    build_text_prompt,
    DEFAULT_PROMPT_BUDGET,
    DEFAULT_TIMEOUT_S,
    generate_image_caption_hook,
    slide_continuation,
    text_continuation,
)
from .wire import document_to_dict, dumps_line, slide_to_dict

logger = logging.getLogger(__name__)

MAX_EMAIL_RETRIES = 3
BACKOFF_SECONDS = (1.0, 2.0, 4.0)


@dataclass(frozen=True)
class NotificationPayload:
    headline: str
    body: str  # full continuation text or encouragement message; channel-only
    payload_kind: PayloadKind
    continuation_ref: str | None = None

    @property
    def body_preview(self) -> str:
        return self.body[:280]


@dataclass(frozen=True)
class AwayEmail:
    recipient: str
    headline: str
    body: str
    continuation_ref: str | None
    queued_at: int
    session_id: str
    episode_id: str | None = None


@dataclass
class DeliveryRecord:
    email: AwayEmail
    status: str  # delivered | failed | skipped
    attempts: int
    error: str | None = None


class MailSink:
    def deliver(self, email: AwayEmail) -> None:  # pragma: no cover - protocol
        raise NotImplementedError


class FileMailSink(MailSink):
    """Test/deployment sink that writes one RFC-822-like file per message."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._seq = 0
        self._lock = threading.Lock()

    def deliver(self, email: AwayEmail) -> None:
        with self._lock:
            self._seq += 1
            name = f"{self._seq:05d}-{email.session_id}-{email.queued_at}.eml"
        content = (
            f"From: stallcue <no-reply@localhost>\n"
            f"To: {email.recipient}\n"
            f"Subject: {email.headline}\n"
            f"X-Queued-At-Ms: {email.queued_at}\n"
            f"\n{email.body}\n"
        )
        (self.directory / name).write_text(content, encoding="utf-8")


class SmtpMailSink(MailSink):
    """SMTP client sink; host/port/credentials come from deployment config."""

    def __init__(
        self,
        host: str,
        port: int = 25,
        username: str | None = None,
        password: str | None = None,
        from_addr: str = "stallcue@localhost",
        starttls: bool = False,
        smtp_factory: Callable[..., smtplib.SMTP] = smtplib.SMTP,
    ):
        self.host = host
        self.port = port
        self.username = username
        self.password = password
        self.from_addr = from_addr
        self.starttls = starttls
        self._smtp_factory = smtp_factory

    def deliver(self, email: AwayEmail) -> None:
        msg = EmailMessage()
        msg["From"] = self.from_addr
        msg["To"] = email.recipient
        msg["Subject"] = email.headline
        msg.set_content(email.body)
        with self._smtp_factory(self.host, self.port, timeout=10) as client:
            if self.starttls:
                client.starttls()
            if self.username:
                client.login(self.username, self.password or "")
            client.send_message(msg)


class Dispatcher:
    """Signal consumer for one session; all calls arrive on that session's executor."""

    def __init__(
        self,
        session_id: str,
        *,
        config: Callable[[], SessionConfig],
        document: Callable[[], WorkDocument | None],
        now: Callable[[], int],
        backend: GeneratorBackend,
        encouragements: EncouragementSet,
        push: Callable[[dict], None],
        log: Callable[[dict], None],
        on_notified: Callable[[int], None],
        apply_slide: Callable[[object], None] | None = None,
        mail_sink: MailSink | None = None,
        recipient: str | None = None,
        image_backend: ImageBackend | None = None,
        prompt_budget: int = DEFAULT_PROMPT_BUDGET,
        gen_timeout: float = DEFAULT_TIMEOUT_S,
        executor: Executor | None = None,
        sleeper: Callable[[float], None] | None = None,
        lock: threading.RLock | None = None,
    ):
        self.session_id = session_id
        self._config = config
        self._document = document
        self._now = now
        self._backend = backend
        self._encouragements = encouragements
        self._push = push
        self._log = log
        self._on_notified = on_notified
        self._apply_slide = apply_slide
        self._mail_sink = mail_sink
        self._recipient = recipient
        self._image_backend = image_backend
        self._prompt_budget = prompt_budget
        self._gen_timeout = gen_timeout
        self._executor = executor
        self._sleep = sleeper

        self.episodes: list[InterventionEpisode] = []
        self.emails: list[DeliveryRecord] = []
        self._open: InterventionEpisode | None = None
        self._open_payload: NotificationPayload | None = None
        self._open_continuation: Continuation | None = None
        self._cache: dict[str, tuple[Continuation, str]] = {}
        self._ref_seq = 0
        self._inflight = False
        self._effects_lock = lock if lock is not None else threading.RLock()

    # -- signal entry point ----------------------------------------------

    def handle_signal(self, sig: Signal) -> None:
        if sig.kind == SignalKind.INTERRUPTION_DETECTED:
            self._on_detected(sig.at)
        elif sig.kind == SignalKind.REPEAT_PROMPT:
            self._on_repeat(sig.at)
        elif sig.kind == SignalKind.RESUMED:
            self._on_resumed(sig.at)
        elif sig.kind == SignalKind.AWAY_CONFIRMED:
            self._on_away(sig.at)

    def _on_detected(self, at: int) -> None:
        episode = InterventionEpisode(
            episode_id=f"ep{len(self.episodes) + 1:04d}", detected_at=at
        )
        self.episodes.append(episode)
        self._open = episode
        self._open_payload = None
        self._open_continuation = None
        if self._config().condition == Condition.NONE:
            return
        if self._executor is not None:
            # backend call must not block the tick/executor thread
            self._inflight = True
            self._executor.submit(self._complete_detection, episode)
        else:
            self._complete_detection(episode)

    def _complete_detection(self, episode: InterventionEpisode) -> None:
        # slow part (backend round trip) runs without the session lock; the
        # effects below re-acquire it, so this is safe from a worker thread
        payload, continuation = self._acquire_payload(episode)
        with self._effects_lock:
            self._inflight = False
            if self._open is not episode or episode.resumed_at is not None:
                return  # worker resumed while the payload was in flight
            self._open_payload = payload
            self._open_continuation = continuation
            episode.continuation_ref = payload.continuation_ref
            if continuation is not None and continuation.slide is not None:
                self._ship_slide(episode, continuation)
            self._emit(episode, payload, self._now())

    def _on_repeat(self, at: int) -> None:
        episode = self._open
        if episode is None or self._config().condition == Condition.NONE:
            return
        if self._open_payload is None:
            return  # payload still in flight; the pending result covers this prompt
        self._emit(episode, self._open_payload, at)

    def _on_resumed(self, at: int) -> None:
        if self._open is None:
            return
        self._open.resumed_at = at
        self._open = None
        self._open_payload = None
        self._open_continuation = None

    def _on_away(self, at: int) -> None:
        cfg = self._config()
        if cfg.condition == Condition.NONE:
            return
        if self._mail_sink is None or self._recipient is None:
            reason = "no recipient registered" if self._recipient is None else "no mail sink"
            self._log({"record": "email", "at": at, "status": "skipped", "reason": reason})
            logger.info("away email skipped for %s: %s", self.session_id, reason)
            return

        episode = self._open
        payload = self._open_payload
        continuation = self._open_continuation
        if payload is None:
            payload, continuation = self._acquire_payload(episode)
        body = payload.body
        email = AwayEmail(
            recipient=self._recipient,
            headline=payload.headline,
            body=body,
            continuation_ref=payload.continuation_ref,
            queued_at=at,
            session_id=self.session_id,
            episode_id=episode.episode_id if episode else None,
        )
        record = self.send_email(email)
        self.emails.append(record)
        if episode is not None:
            episode.notifications.append(
                NotificationRecord(
                    at=at,
                    payload_kind=PayloadKind.AWAY_EMAIL,
                    headline=self._stored_headline(payload.headline, payload.payload_kind),
                )
            )
        self._log(
            {
                "record": "email",
                "at": at,
                "episode_id": email.episode_id,
                "recipient": email.recipient,
                "headline": self._stored_headline(payload.headline, payload.payload_kind),
                "continuation_ref": email.continuation_ref,
                "status": record.status,
                "attempts": record.attempts,
            }
        )

    # -- payloads ----------------------------------------------------------

    def _acquire_payload(
        self, episode: InterventionEpisode | None
    ) -> tuple[NotificationPayload, Continuation | None]:
        cfg = self._config()
        if cfg.condition == Condition.CONTROL:
            return self._encouragement_payload(), None
        try:
            continuation, ref = self._generate_continuation()
        except (BackendError, UnparsableOutput, EmptyDeck, ValueError) as exc:
            # the cadence is preserved by downgrading the payload, never by
            # skipping the prompt
            logger.warning("generation failed for %s, falling back: %s", self.session_id, exc)
            if episode is not None:
                episode.fallback_used = True
            return self._encouragement_payload(), None
        payload = NotificationPayload(
            headline=continuation.headline,
            body=continuation.text,
            payload_kind=PayloadKind.CONTINUATION,
            continuation_ref=ref,
        )
        return payload, continuation

    def _encouragement_payload(self) -> NotificationPayload:
        message = self._encouragements.pick()
        return NotificationPayload(
            headline=message[:HEADLINE_MAX],
            body=message,
            payload_kind=PayloadKind.ENCOURAGEMENT,
        )

    def _generate_continuation(self) -> tuple[Continuation, str]:
        doc = self._document()
        if doc is None:
            doc = WorkDocument(doc_kind=DocKind.TEXT, text="")
        key = _doc_fingerprint(doc)
        with self._effects_lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        if doc.doc_kind == DocKind.TEXT:
            prompt = build_text_prompt(doc, self._prompt_budget)
            raw = self._backend.generate(prompt, timeout=self._gen_timeout)
            continuation = text_continuation(raw)
        else:
            prompt = build_slide_prompt(doc)
            raw = self._backend.generate(prompt, timeout=self._gen_timeout)
            continuation = slide_continuation(raw)
            if self._image_backend is not None and continuation.slide is not None:
                slide = generate_image_caption_hook(continuation.slide, self._image_backend)
                continuation = Continuation(
                    for_doc_kind=continuation.for_doc_kind,
                    headline=continuation.headline,
                    text=continuation.text,
                    slide=slide,
                )
        with self._effects_lock:
            cached = self._cache.get(key)
            if cached is not None:
                return cached
            self._ref_seq += 1
            ref = f"g{self._ref_seq}"
            self._cache[key] = (continuation, ref)
        return continuation, ref

    # -- effects -----------------------------------------------------------

    def _emit(self, episode: InterventionEpisode, payload: NotificationPayload, at: int) -> None:
        stored = self._stored_headline(payload.headline, payload.payload_kind)
        episode.notifications.append(
            NotificationRecord(at=at, payload_kind=payload.payload_kind, headline=stored)
        )
        self._push(
            {
                "type": "notification",
                "at": at,
                "headline": payload.headline,
                "body": payload.body,
                "payload_kind": payload.payload_kind.value,
                "episode_id": episode.episode_id,
            }
        )
        self._log(
            {
                "record": "notification",
                "at": at,
                "episode_id": episode.episode_id,
                "payload_kind": payload.payload_kind.value,
                "headline": stored,
                "continuation_ref": payload.continuation_ref,
            }
        )
        self._on_notified(at)

    def _ship_slide(self, episode: InterventionEpisode, continuation: Continuation) -> None:
        slide = continuation.slide
        if self._apply_slide is not None:
            self._apply_slide(slide)
        self._push(
            {
                "type": "patch",
                "at": self._now(),
                "episode_id": episode.episode_id,
                "slide": slide_to_dict(slide),
                "generated": True,
            }
        )

    def _stored_headline(self, headline: str, payload_kind: PayloadKind) -> str:
        # encouragements are operator-authored and content-free; continuations
        # derive from worker content and follow the retention rule
        if payload_kind == PayloadKind.ENCOURAGEMENT or self._config().retain_content:
            return headline
        return f"[redacted {len(headline)} chars]"

    # -- email delivery ------------------------------------------------------

    def send_email(self, email: AwayEmail) -> DeliveryRecord:
        """Deliver through the sink with up to three retries, then mark failed."""
        assert self._mail_sink is not None
        attempts = 0
        last_error: str | None = None
        while attempts <= MAX_EMAIL_RETRIES:
            attempts += 1
            try:
                self._mail_sink.deliver(email)
                return DeliveryRecord(email=email, status="delivered", attempts=attempts)
            except Exception as exc:
                last_error = str(exc)
                logger.warning(
                    "mail delivery attempt %d failed for %s: %s",
                    attempts,
                    self.session_id,
                    exc,
                )
                if attempts <= MAX_EMAIL_RETRIES and self._sleep is not None:
                    self._sleep(BACKOFF_SECONDS[attempts - 1])
        return DeliveryRecord(email=email, status="failed", attempts=attempts, error=last_error)

    # -- session end ---------------------------------------------------------

    def close(self) -> None:
        self._open = None
        self._open_payload = None
        self._open_continuation = None
        self._cache.clear()


def _doc_fingerprint(doc: WorkDocument) -> str:
    import hashlib

    return hashlib.sha256(dumps_line(document_to_dict(doc)).encode("utf-8")).hexdigest()
