"""Core domain types shared by every part of the stall-intervention pipeline.

All timestamps are session-relative integer milliseconds. Durations in
configuration are seconds (the operator-facing unit); helpers convert to
milliseconds once so the rest of the engine only compares integers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

MS = 1000


class Condition(str, enum.Enum):
    """Which intervention a session receives."""

    PROPOSED = "proposed"      # generated continuation of the stalled work
    CONTROL = "control"        # fixed encouraging message
    NONE = "none"              # detector runs, nothing is shown


class DocKind(str, enum.Enum):
    TEXT = "text"
    SLIDE_DECK = "slide_deck"


class EventKind(str, enum.Enum):
    KEY = "key"
    POINTER_MOVE = "pointer_move"
    CLICK = "click"
    SCROLL = "scroll"
    FOCUS = "focus"
    BLUR = "blur"
    PAGE_HIDDEN = "page_hidden"
    PAGE_VISIBLE = "page_visible"


# Kinds that count as the worker touching the page. Blur and PageHidden are
# state changes, not activity; PageVisible is deliberate return, so it counts.
INTERACTION_KINDS = frozenset(
    {
        EventKind.KEY,
        EventKind.POINTER_MOVE,
        EventKind.CLICK,
        EventKind.SCROLL,
        EventKind.FOCUS,
        EventKind.PAGE_VISIBLE,
    }
)


class PayloadKind(str, enum.Enum):
    CONTINUATION = "continuation"
    ENCOURAGEMENT = "encouragement"
    AWAY_EMAIL = "away_email"


class NonPositiveDuration(ValueError):
    """A configured duration must be strictly positive."""

    def __init__(self, field_name: str, value: float):
        super().__init__(f"{field_name} must be > 0, got {value!r}")
        self.field_name = field_name
        self.value = value


class OutOfOrderEvent(ValueError):
    """Event timestamp regressed within one session."""


class UnknownSession(KeyError):
    """Session id is not registered or already closed."""


class MalformedDocument(ValueError):
    pass


class MalformedEvent(ValueError):
    pass


class SessionNotEnded(RuntimeError):
    pass


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    """Per-session tuning knobs.

    ``progress_window`` defaults to the idle threshold when left unset; it is
    resolved to an explicit value by :func:`validate_config` so later threshold
    changes do not silently move the measurement window.
    """

    idle_threshold_t: float = 45.0
    away_delay: float = 300.0
    condition: Condition = Condition.PROPOSED
    retain_content: bool = False
    progress_window: float | None = None

    @property
    def idle_threshold_ms(self) -> int:
        return int(round(self.idle_threshold_t * MS))

    @property
    def away_delay_ms(self) -> int:
        return int(round(self.away_delay * MS))

    @property
    def progress_window_ms(self) -> int:
        window = self.progress_window
        if window is None:
            window = self.idle_threshold_t
        return int(round(window * MS))


def validate_config(cfg: SessionConfig) -> SessionConfig:
    """Validate durations and pin the progress window to a concrete value."""
    for name in ("idle_threshold_t", "away_delay"):
        value = getattr(cfg, name)
        if not value > 0:
            raise NonPositiveDuration(name, value)
    if cfg.progress_window is None:
        cfg = replace(cfg, progress_window=cfg.idle_threshold_t)
    if not cfg.progress_window > 0:
        raise NonPositiveDuration("progress_window", cfg.progress_window)
    if not isinstance(cfg.condition, Condition):
        raise MalformedDocument(f"unknown condition {cfg.condition!r}")
    return cfg


@dataclass(frozen=True)
class InteractionEvent:
    """One timestamped atom of worker activity."""

    session_id: str
    at: int
    kind: EventKind
    chars_delta: int = 0

    @property
    def is_interaction(self) -> bool:
        return self.kind in INTERACTION_KINDS


def validate_event(ev: InteractionEvent) -> InteractionEvent:
    if ev.at < 0:
        raise MalformedEvent(f"negative timestamp {ev.at}")
    if ev.kind != EventKind.KEY and ev.chars_delta != 0:
        raise MalformedEvent(f"chars_delta must be 0 for {ev.kind.value} events")
    return ev


@dataclass(frozen=True)
class Slide:
    """One slide of a deck: a title, bullet items, optionally an image.

    ``image_asset`` holds the reference returned by an image backend when the
    illustration hook is enabled; it is absent from decks authored by hand.
    """

    title: str
    body_items: tuple[str, ...] = ()
    image_caption: str | None = None
    image_asset: str | None = None


@dataclass(frozen=True)
class WorkDocument:
    """The in-progress artifact: plain text or an ordered slide deck."""

    doc_kind: DocKind
    text: str = ""
    slides: tuple[Slide, ...] = ()


def text_document(text: str) -> WorkDocument:
    return WorkDocument(doc_kind=DocKind.TEXT, text=text)


def deck_document(slides: tuple[Slide, ...] | list[Slide]) -> WorkDocument:
    return WorkDocument(doc_kind=DocKind.SLIDE_DECK, slides=tuple(slides))


def validate_document(doc: WorkDocument) -> WorkDocument:
    if doc.doc_kind == DocKind.TEXT:
        if doc.slides:
            raise MalformedDocument("text document must not carry slides")
    elif doc.doc_kind == DocKind.SLIDE_DECK:
        if doc.text:
            raise MalformedDocument("slide deck must not carry raw text")
    else:  # pragma: no cover - enum exhaustive
        raise MalformedDocument(f"unknown doc_kind {doc.doc_kind!r}")
    return doc


def document_length(doc: WorkDocument) -> int:
    """Character count used for content-free logging."""
    if doc.doc_kind == DocKind.TEXT:
        return len(doc.text)
    total = 0
    for slide in doc.slides:
        total += len(slide.title) + sum(len(item) for item in slide.body_items)
        if slide.image_caption:
            total += len(slide.image_caption)
    return total


@dataclass(frozen=True)
class NotificationRecord:
    """One prompt shown (or mailed) to the worker within an episode."""

    at: int
    payload_kind: PayloadKind
    headline: str

    @property
    def in_page(self) -> bool:
        return self.payload_kind != PayloadKind.AWAY_EMAIL


@dataclass
class InterventionEpisode:
    """One detection -> notification(s) -> resumption cycle."""

    episode_id: str
    detected_at: int
    notifications: list[NotificationRecord] = field(default_factory=list)
    resumed_at: int | None = None
    continuation_ref: str | None = None
    fallback_used: bool = False

    def in_page_notifications(self) -> list[NotificationRecord]:
        return [n for n in self.notifications if n.in_page]
