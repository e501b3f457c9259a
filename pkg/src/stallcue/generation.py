"""Continuation generation: prompt building, backends, output parsing.

Slide decks are flattened to a line grammar that is trivial to parse back:

    Slide 1: <title>
    - <body item>
    [Image: <caption>]
    Slide 2: ...
    ...
    Slide <n+1>:

The trailing bare heading cues the model to produce the next slide, which is
parsed with :func:`parse_slide_continuation`.

Two generator backends ship here: an HTTP wire client for a remote model and
a deterministic mock whose output is a pure function of ``(prompt, seed)`` --
good enough to exercise every pipeline path reproducibly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass, replace
from importlib import resources
from typing import Protocol

import httpx

from .core import DocKind, Slide, WorkDocument

logger = logging.getLogger(__name__)

HEADLINE_MAX = 140
TITLE_MAX = 120
DEFAULT_PROMPT_BUDGET = 2000
DEFAULT_TIMEOUT_S = 20.0

# terminal punctuation for sentence segmentation (ASCII + fullwidth)
_TERMINALS = ".!?。！？"

DEFAULT_OPENER = (
    "The page is still blank. Suggest a strong opening sentence for a new piece of writing."
)

_HEADING_RE = re.compile(r"^\s*Slide\s+\d+\s*:")
_IMAGE_RE = re.compile(r"^\[Image:\s*(.*?)\s*\]$")


class BackendError(RuntimeError):
    """Generator backend failed (non-success status, transport error)."""


class BackendTimeout(BackendError):
    """Generator backend did not answer within the timeout."""


class UnparsableOutput(ValueError):
    """Model output could not be parsed into the expected structure."""


class EmptyDeck(ValueError):
    """A slide prompt needs at least one slide."""


def build_text_prompt(
    doc: WorkDocument, max_chars: int = DEFAULT_PROMPT_BUDGET, opener: str = DEFAULT_OPENER
) -> str:
    """Trailing window of the text in progress, preferring a whole-line start."""
    if doc.doc_kind != DocKind.TEXT:
        raise ValueError("build_text_prompt requires a text document")
    text = doc.text
    if not text:
        return opener
    if len(text) <= max_chars:
        return text
    tail = text[-max_chars:]
    if text[-max_chars - 1] == "\n":
        return tail
    cut = tail.find("\n")
    if cut != -1 and cut + 1 < len(tail):
        return tail[cut + 1 :]
    return tail


def build_slide_prompt(doc: WorkDocument) -> str:
    """Serialize every slide's text fragments and image captions, then cue the next slide."""
    if doc.doc_kind != DocKind.SLIDE_DECK:
        raise ValueError("build_slide_prompt requires a slide deck")
    if not doc.slides:
        raise EmptyDeck("deck has no slides to continue from")
    lines: list[str] = []
    for i, slide in enumerate(doc.slides, start=1):
        lines.append(f"Slide {i}: {slide.title}")
        lines.extend(f"- {item}" for item in slide.body_items)
        if slide.image_caption is not None:
            lines.append(f"[Image: {slide.image_caption}]")
    lines.append(f"Slide {len(doc.slides) + 1}:")
    return "\n".join(lines)


def parse_slide_continuation(raw: str) -> Slide:
    """Parse generator output that follows a ``Slide n:`` cue into one slide.

    First non-empty line is the title (capped at 120 chars), ``-`` lines are
    body items, an ``[Image: ...]`` line sets the caption. Parsing stops at
    the next slide heading; unrecognized lines are skipped.
    """
    if not raw or not raw.strip():
        raise UnparsableOutput("empty generator output")
    title: str | None = None
    body: list[str] = []
    caption: str | None = None
    for line in raw.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if _HEADING_RE.match(stripped):
            break
        if title is None:
            title = stripped[:TITLE_MAX]
            continue
        if stripped.startswith("-"):
            body.append(stripped[1:].strip())
            continue
        m = _IMAGE_RE.match(stripped)
        if m:
            caption = m.group(1) or None
    if title is None:
        raise UnparsableOutput("no title line before the next slide heading")
    return Slide(title=title, body_items=tuple(body), image_caption=caption)


def first_sentence(text: str) -> str:
    """Prefix through the first terminal punctuation mark, else the first 140 chars."""
    for i, ch in enumerate(text):
        if ch in _TERMINALS:
            return text[: i + 1]
    return text[:HEADLINE_MAX]


def headline_from_text(text: str) -> str:
    return first_sentence(text)[:HEADLINE_MAX]


@dataclass(frozen=True)
class Continuation:
    """Structured generation result plus the notification excerpt."""

    for_doc_kind: DocKind
    headline: str
    text: str = ""
    slide: Slide | None = None


def text_continuation(raw: str) -> Continuation:
    if not raw.strip():
        raise UnparsableOutput("empty generator output")
    return Continuation(for_doc_kind=DocKind.TEXT, headline=headline_from_text(raw), text=raw)


def slide_continuation(raw: str) -> Continuation:
    slide = parse_slide_continuation(raw)
    return Continuation(
        for_doc_kind=DocKind.SLIDE_DECK, headline=slide.title, text=raw, slide=slide
    )


class GeneratorBackend(Protocol):
    def generate(self, prompt: str, timeout: float | None = None) -> str: ...


# --- deterministic mock -----------------------------------------------------

_CONNECTORS = ("suggests", "points toward", "builds on", "leads to", "recalls", "sharpens")
_FILLERS = ("In short", "From there", "Meanwhile", "More concretely", "Next", "Beyond that")
_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _pseudo_word(digest: bytes) -> str:
    syllables = [_CONSONANTS[b % 14] + _VOWELS[(b >> 4) % 5] for b in digest]
    word = "".join(syllables)
    return word[:1].upper() + word[1:]


def mock_continuation(prompt: str, seed: int) -> str:
    """Pure function of (prompt, seed): echoes salient prompt n-grams.

    A digest-derived pseudo-word is woven in so distinct prompts practically
    never collide on output.
    """
    digest = hashlib.sha256(f"{seed}\x1f{prompt}".encode("utf-8")).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))
    words = re.findall(r"\w+", prompt, flags=re.UNICODE) or ["the", "work"]
    unique = list(dict.fromkeys(words))
    salient = sorted(unique, key=len, reverse=True)[:6]
    tag = _pseudo_word(digest[8:16])

    cue_lines = [l for l in prompt.splitlines() if l.strip()]
    slide_mode = bool(cue_lines) and re.match(r"^Slide\s+\d+\s*:\s*$", cue_lines[-1])

    tail = " ".join(words[-2:])
    lead = f"{tail} {rng.choice(_CONNECTORS)} {rng.choice(salient).lower()}"
    opening = lead[:1].upper() + lead[1:] + "."

    if slide_mode:
        items = [
            f"- {rng.choice(salient).lower()} and {rng.choice(salient).lower()}"
            for _ in range(rng.randint(1, 3))
        ]
        lines = [opening[:TITLE_MAX]] + items
        if rng.random() < 0.5:
            lines.append(f"[Image: {rng.choice(salient).lower()} overview by {tag}]")
        else:
            lines.append(f"- {tag.lower()} framework")
        return "\n".join(lines)

    second = (
        f"{rng.choice(_FILLERS)}, {rng.choice(salient).lower()} "
        f"{rng.choice(_CONNECTORS)} {rng.choice(salient).lower()} via {tag}."
    )
    return f"{opening} {second}"


class MockBackend:
    """Deterministic local stand-in for a remote generative model."""

    def __init__(self, seed: int = 7):
        self.seed = seed
        self.calls = 0

    def generate(self, prompt: str, timeout: float | None = None) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        self.calls += 1
        return mock_continuation(prompt, self.seed)


class HttpBackend:
    """Wire client for a remote completion endpoint.

    Request:  POST {endpoint} with JSON {"prompt", "max_tokens", "temperature"}
              and an ``Authorization: Bearer <key>`` header.
    Response: 200 with JSON {"text": "..."}.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        max_tokens: int = 256,
        temperature: float = 0.9,
        timeout: float = DEFAULT_TIMEOUT_S,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.api_key = api_key
        self.max_tokens = max_tokens
        self.temperature = temperature
        self.timeout = timeout
        self.calls = 0
        self._client = httpx.Client(transport=transport) if transport else httpx.Client()

    def generate(self, prompt: str, timeout: float | None = None) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        self.calls += 1
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "prompt": prompt,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }
        try:
            resp = self._client.post(
                self.endpoint,
                json=body,
                headers=headers,
                timeout=timeout if timeout is not None else self.timeout,
            )
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"generation timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise BackendError(f"generation transport error: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"generation endpoint returned {resp.status_code}")
        try:
            return str(resp.json()["text"])
        except (KeyError, ValueError) as exc:
            raise BackendError(f"malformed generation response: {exc}") from exc


# --- encouragements (control condition) -------------------------------------


def load_default_messages() -> tuple[str, ...]:
    raw = resources.files("stallcue.data").joinpath("encouragements.json").read_text("utf-8")
    return tuple(json.loads(raw)["messages"])


class EncouragementSet:
    """Exactly six fixed messages; picks are uniform and seed-reproducible."""

    SIZE = 6

    def __init__(self, messages: tuple[str, ...] | list[str], rng_seed: int = 0):
        messages = tuple(messages)
        if len(messages) != self.SIZE:
            raise ValueError(f"need exactly {self.SIZE} messages, got {len(messages)}")
        self.messages = messages
        self.rng_seed = rng_seed
        self._rng = random.Random(rng_seed)

    @classmethod
    def default(cls, rng_seed: int = 0) -> "EncouragementSet":
        return cls(load_default_messages(), rng_seed=rng_seed)

    def pick(self) -> str:
        return self.messages[self._rng.randrange(self.SIZE)]


# --- optional illustration hook ----------------------------------------------


class ImageBackend(Protocol):
    def generate_image(self, prompt: str) -> str: ...


class MockImageBackend:
    """Returns a stable asset reference derived from the prompt."""

    def generate_image(self, prompt: str) -> str:
        return "img:" + hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]


class HttpImageBackend:
    """Wire client for an image endpoint: POST {"prompt"} -> {"asset_ref"}."""

    def __init__(self, endpoint: str, api_key: str | None = None, timeout: float = DEFAULT_TIMEOUT_S):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout
        self._client = httpx.Client()

    def generate_image(self, prompt: str) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(
                self.endpoint, json={"prompt": prompt}, headers=headers, timeout=self.timeout
            )
        except httpx.HTTPError as exc:
            raise BackendError(f"image transport error: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"image endpoint returned {resp.status_code}")
        try:
            return str(resp.json()["asset_ref"])
        except (KeyError, ValueError) as exc:
            raise BackendError(f"malformed image response: {exc}") from exc


def generate_image_caption_hook(slide: Slide, backend: ImageBackend | None = None) -> Slide:
    """Attach a generated illustration to a parsed slide; disabled by default.

    Backend failures degrade to the unchanged slide: the notification must go
    out whether or not the illustration arrives.
    """
    if backend is None:
        return slide
    try:
        asset = backend.generate_image(slide.title)
    except Exception as exc:
        logger.warning("image backend failed, keeping slide bare: %s", exc)
        return slide
    return replace(slide, image_asset=asset)
