"""Wire and log encodings.

Session logs are JSONL: one compact JSON object per line, UTF-8, timestamps
as integer milliseconds. Interaction events and detector signals use their
bare field sets; every other record type carries a ``record`` discriminator.
A line is classified as:

  * interaction event  -- has ``kind``
  * detector signal    -- has ``signal_kind``
  * anything else      -- ``record`` names the type

Encoding is stable (fixed key order, no whitespace) so identical runs produce
byte-identical logs.
"""

from __future__ import annotations

import json
from typing import Any

from .core import (
    Condition,
    DocKind,
    EventKind,
    InteractionEvent,
    InterventionEpisode,
    MalformedDocument,
    MalformedEvent,
    NotificationRecord,
    PayloadKind,
    SessionConfig,
    Slide,
    WorkDocument,
    validate_document,
    validate_event,
)


def dumps_line(obj: dict[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


def config_to_dict(cfg: SessionConfig) -> dict[str, Any]:
    return {
        "idle_threshold_t": cfg.idle_threshold_t,
        "away_delay": cfg.away_delay,
        "condition": cfg.condition.value,
        "retain_content": cfg.retain_content,
        "progress_window": cfg.progress_window,
    }


def config_from_dict(obj: dict[str, Any]) -> SessionConfig:
    try:
        return SessionConfig(
            idle_threshold_t=obj.get("idle_threshold_t", 45.0),
            away_delay=obj.get("away_delay", 300.0),
            condition=Condition(obj.get("condition", "proposed")),
            retain_content=bool(obj.get("retain_content", False)),
            progress_window=obj.get("progress_window"),
        )
    except ValueError as exc:
        raise MalformedDocument(str(exc)) from exc


def event_to_dict(ev: InteractionEvent) -> dict[str, Any]:
    return {
        "session_id": ev.session_id,
        "at": ev.at,
        "kind": ev.kind.value,
        "chars_delta": ev.chars_delta,
    }


def event_from_dict(obj: dict[str, Any]) -> InteractionEvent:
    try:
        ev = InteractionEvent(
            session_id=str(obj["session_id"]),
            at=int(obj["at"]),
            kind=EventKind(obj["kind"]),
            chars_delta=int(obj.get("chars_delta", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedEvent(f"bad event object: {exc}") from exc
    return validate_event(ev)


def slide_to_dict(slide: Slide) -> dict[str, Any]:
    obj: dict[str, Any] = {"title": slide.title, "body_items": list(slide.body_items)}
    if slide.image_caption is not None:
        obj["image_caption"] = slide.image_caption
    if slide.image_asset is not None:
        obj["image_asset"] = slide.image_asset
    return obj


def slide_from_dict(obj: dict[str, Any]) -> Slide:
    try:
        return Slide(
            title=str(obj["title"]),
            body_items=tuple(str(i) for i in obj.get("body_items", [])),
            image_caption=obj.get("image_caption"),
            image_asset=obj.get("image_asset"),
        )
    except (KeyError, TypeError) as exc:
        raise MalformedDocument(f"bad slide object: {exc}") from exc


def document_to_dict(doc: WorkDocument) -> dict[str, Any]:
    if doc.doc_kind == DocKind.TEXT:
        return {"doc_kind": doc.doc_kind.value, "text": doc.text}
    return {
        "doc_kind": doc.doc_kind.value,
        "slides": [slide_to_dict(s) for s in doc.slides],
    }


def document_from_dict(obj: dict[str, Any]) -> WorkDocument:
    try:
        kind = DocKind(obj["doc_kind"])
    except (KeyError, ValueError) as exc:
        raise MalformedDocument(f"bad doc_kind: {exc}") from exc
    if kind == DocKind.TEXT:
        text = obj.get("text", "")
        if not isinstance(text, str):
            raise MalformedDocument("text must be a string")
        doc = WorkDocument(doc_kind=kind, text=text)
    else:
        slides = obj.get("slides", [])
        if not isinstance(slides, list):
            raise MalformedDocument("slides must be a list")
        doc = WorkDocument(doc_kind=kind, slides=tuple(slide_from_dict(s) for s in slides))
    return validate_document(doc)


def episode_to_dict(ep: InterventionEpisode) -> dict[str, Any]:
    return {
        "episode_id": ep.episode_id,
        "detected_at": ep.detected_at,
        "notifications": [
            {"at": n.at, "payload_kind": n.payload_kind.value, "headline": n.headline}
            for n in ep.notifications
        ],
        "resumed_at": ep.resumed_at,
        "continuation_ref": ep.continuation_ref,
        "fallback_used": ep.fallback_used,
    }


def episode_from_dict(obj: dict[str, Any]) -> InterventionEpisode:
    return InterventionEpisode(
        episode_id=str(obj["episode_id"]),
        detected_at=int(obj["detected_at"]),
        notifications=[
            NotificationRecord(
                at=int(n["at"]),
                payload_kind=PayloadKind(n["payload_kind"]),
                headline=str(n["headline"]),
            )
            for n in obj.get("notifications", [])
        ],
        resumed_at=obj.get("resumed_at"),
        continuation_ref=obj.get("continuation_ref"),
        fallback_used=bool(obj.get("fallback_used", False)),
    )


def classify_line(obj: dict[str, Any]) -> str:
    """Name the record type of a parsed log line."""
    if "signal_kind" in obj:
        return "signal"
    if "kind" in obj:
        return "event"
    return str(obj.get("record", "unknown"))
