"""Model backends: speech recognition, gesture recognition, rewriting.

Three small protocols keep the pipeline independent of any vendor. Each has
a deterministic mock (fixture-keyed, for offline runs and tests) and an HTTP
implementation speaking the common chat/transcription JSON dialects. HTTP
calls always carry timeouts, retry transient failures with exponential
backoff, and share a bounded in-flight limit per client.
"""

from __future__ import annotations

import base64
import json
import logging
import threading
import time
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import requests

from .core import DEFAULT_GESTURE_LABELS, GestureEvent, GestureLabel, TimeSpan
from .errors import (
    BackendError,
    DecodeError,
    EmptyResponseError,
    TransportError,
    UnparseableLabelError,
)
from .filtering import ScoredToken, ScoredTranscript, transcript_from_json
from .prompts import NO_GESTURE, PromptBundle
from .wer import NormalizationConfig, normalize

logger = logging.getLogger(__name__)

_FRAME_SUFFIXES = (".jpg", ".jpeg", ".png")
_RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})


# ---------------------------------------------------------------------------
# Inputs and outputs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AudioRef:
    """One audio item to transcribe."""

    id: str
    path: str


@dataclass(frozen=True)
class FrameSet:
    """Still frames sampled from one video segment."""

    segment_id: str
    paths: tuple[str, ...]
    span: TimeSpan | None = None
    utterance_index: int = 0

    @classmethod
    def from_dir(
        cls,
        segment_id: str,
        directory: str | Path,
        span: TimeSpan | None = None,
        utterance_index: int = 0,
    ) -> "FrameSet":
        base = Path(directory)
        if not base.is_dir():
            raise FileNotFoundError(f"frame directory not found: {base}")
        paths = tuple(
            str(p)
            for p in sorted(base.iterdir())
            if p.suffix.lower() in _FRAME_SUFFIXES
        )
        if not paths:
            raise ValueError(f"no image frames in {base}")
        return cls(segment_id, paths, span, utterance_index)


@dataclass(frozen=True)
class RewriteContext:
    """Everything the rewriter may use for one utterance."""

    id: str
    words: tuple[str, ...]
    gestures: tuple[GestureEvent, ...]


@dataclass(frozen=True)
class RewriteResult:
    text: str
    backend: str


# ---------------------------------------------------------------------------
# Protocols
# ---------------------------------------------------------------------------

class SpeechRecognizer(Protocol):
    name: str

    def transcribe(self, audio: AudioRef) -> ScoredTranscript: ...


class GestureRecognizer(Protocol):
    name: str

    def recognize(
        self, frames: FrameSet, labels: tuple[GestureLabel, ...]
    ) -> list[GestureEvent]: ...


class Rewriter(Protocol):
    name: str

    def rewrite(self, context: RewriteContext) -> RewriteResult: ...


# ---------------------------------------------------------------------------
# Label reply parsing
# ---------------------------------------------------------------------------

def parse_label(
    reply: str,
    candidates: tuple[GestureLabel, ...] = DEFAULT_GESTURE_LABELS,
    allow_other: bool = False,
) -> GestureLabel | None:
    """Map a model's free-text reply onto a candidate label.

    Tries exact match (after trimming and lowercasing), then whole-word
    containment. Returns None when the reply names no gesture. An ambiguous
    or unrecognized reply raises, unless ``allow_other`` turns it into a
    verbatim label.
    """
    cleaned = reply.strip().strip(".!\"'").lower()
    if not cleaned:
        raise UnparseableLabelError("empty label reply")
    by_text = {c.text.lower(): c for c in candidates}
    if cleaned in by_text:
        return by_text[cleaned]
    if cleaned == NO_GESTURE:
        return None
    hits = [
        c
        for text, c in by_text.items()
        if re.search(rf"\b{re.escape(text)}\b", cleaned)
    ]
    none_hit = re.search(rf"\b{NO_GESTURE}\b", cleaned) is not None
    if len(hits) == 1 and not none_hit:
        return hits[0]
    if not hits and none_hit:
        return None
    if allow_other and not hits:
        return GestureLabel(reply.strip())
    raise UnparseableLabelError(
        f"cannot map reply {reply!r} to one of "
        + ", ".join(c.text for c in candidates)
    )


# ---------------------------------------------------------------------------
# Deterministic mocks
# ---------------------------------------------------------------------------

class MockSpeechRecognizer:
    """Returns canned transcripts keyed by audio id."""

    def __init__(self, responses: dict[str, ScoredTranscript], name: str = "mock-asr"):
        self.name = name
        self._responses = dict(responses)

    @classmethod
    def from_fixture(cls, path: str | Path, name: str = "mock-asr") -> "MockSpeechRecognizer":
        """Load an {id: scored transcript} JSON map."""
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise DecodeError(f"{path}: expected an object mapping id to transcript")
        return cls(
            {key: transcript_from_json({"id": key, **value}) for key, value in raw.items()},
            name=name,
        )

    def transcribe(self, audio: AudioRef) -> ScoredTranscript:
        try:
            return self._responses[audio.id]
        except KeyError:
            raise BackendError(f"{self.name}: no canned transcript for {audio.id!r}") from None


class MockGestureRecognizer:
    """Returns canned label replies keyed by segment id."""

    def __init__(
        self,
        replies: dict[str, str],
        name: str = "mock-gesture",
        allow_other: bool = False,
    ):
        self.name = name
        self._replies = dict(replies)
        self._allow_other = allow_other

    @classmethod
    def from_fixture(cls, path: str | Path, name: str = "mock-gesture") -> "MockGestureRecognizer":
        """Load an {segment id: label reply} JSON map."""
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict) or not all(isinstance(v, str) for v in raw.values()):
            raise DecodeError(f"{path}: expected an object mapping segment id to label text")
        return cls(raw, name=name)

    def recognize(
        self, frames: FrameSet, labels: tuple[GestureLabel, ...] = DEFAULT_GESTURE_LABELS
    ) -> list[GestureEvent]:
        try:
            reply = self._replies[frames.segment_id]
        except KeyError:
            raise BackendError(f"{self.name}: no canned reply for {frames.segment_id!r}") from None
        label = parse_label(reply, labels, allow_other=self._allow_other)
        if label is None:
            return []
        return [
            GestureEvent(
                label=label,
                span=frames.span,
                confidence=None,
                source="model",
                utterance_index=frames.utterance_index,
            )
        ]


class MockRewriter:
    """Rule-based rewriter: kept words minus hesitations, then gesture labels.

    Deterministic stand-in for a language model. It lowercases and strips
    punctuation from the surviving recognized words, drops hesitation
    fillers, and appends each gesture's label in time order, which restores
    the action word the speech itself lost.
    """

    def __init__(self, name: str = "mock-rewriter"):
        self.name = name
        self._norm = NormalizationConfig(keep_fillers=False, keep_fragments=False)

    def rewrite(self, context: RewriteContext) -> RewriteResult:
        words = normalize(" ".join(context.words), self._norm)
        words.extend(event.label.text for event in context.gestures)
        return RewriteResult(text=" ".join(words), backend=self.name)


# ---------------------------------------------------------------------------
# HTTP backends
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BackendConfig:
    """Connection settings shared by the HTTP clients."""

    base_url: str
    model: str
    api_key: str | None = None
    connect_timeout_s: float = 10.0
    read_timeout_s: float = 60.0
    max_attempts: int = 3
    backoff_s: float = 0.5
    max_parallel: int = 4

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ValueError("base_url must be non-empty")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be at least 1")

    def headers(self) -> dict[str, str]:
        if self.api_key:
            return {"Authorization": f"Bearer {self.api_key}"}
        return {}


class _HttpClient:
    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        self.config = config
        self._session = session if session is not None else requests.Session()
        self._slots = threading.BoundedSemaphore(config.max_parallel)

    def _post(self, path: str, **kwargs) -> dict:
        url = self.config.base_url.rstrip("/") + path
        timeout = (self.config.connect_timeout_s, self.config.read_timeout_s)
        last_error: Exception | None = None
        for attempt in range(1, self.config.max_attempts + 1):
            try:
                with self._slots:
                    response = self._session.post(
                        url, headers=self.config.headers(), timeout=timeout, **kwargs
                    )
            except requests.RequestException as exc:
                last_error = TransportError(f"POST {url} failed: {exc}")
            else:
                if response.status_code in _RETRY_STATUSES:
                    last_error = BackendError(
                        f"POST {url} returned {response.status_code}",
                        status=response.status_code,
                        body=response.text[:500],
                    )
                elif response.status_code >= 400:
                    raise BackendError(
                        f"POST {url} returned {response.status_code}",
                        status=response.status_code,
                        body=response.text[:500],
                    )
                else:
                    try:
                        return response.json()
                    except ValueError as exc:
                        raise DecodeError(f"POST {url}: response is not JSON: {exc}") from exc
            if attempt < self.config.max_attempts:
                delay = self.config.backoff_s * 2 ** (attempt - 1)
                logger.warning(
                    "attempt %d/%d for %s failed (%s), retrying in %.1fs",
                    attempt,
                    self.config.max_attempts,
                    url,
                    last_error,
                    delay,
                )
                time.sleep(delay)
        assert last_error is not None
        raise last_error


def _seconds_to_span(word: dict, where: str) -> TimeSpan | None:
    start = word.get("start")
    end = word.get("end")
    if start is None or end is None:
        return None
    try:
        start_ms = round(float(start) * 1000)
        end_ms = round(float(end) * 1000)
    except (TypeError, ValueError) as exc:
        raise DecodeError(f"{where}: bad word timing: {exc}") from exc
    if end_ms <= start_ms:
        return None
    return TimeSpan(start_ms, end_ms)


class HttpSpeechRecognizer(_HttpClient):
    """Transcription endpoint client (multipart upload, word confidences)."""

    def __init__(
        self,
        config: BackendConfig,
        session: requests.Session | None = None,
        name: str = "http-asr",
    ):
        super().__init__(config, session)
        self.name = name

    def transcribe(self, audio: AudioRef) -> ScoredTranscript:
        payload = Path(audio.path).read_bytes()
        body = self._post(
            "/v1/audio/transcriptions",
            data={"model": self.config.model},
            files={"file": (Path(audio.path).name, payload, "application/octet-stream")},
        )
        words = body.get("words")
        if not isinstance(words, list):
            raise DecodeError(f"{self.name}: response for {audio.id!r} has no word list")
        tokens = []
        for i, word in enumerate(words):
            where = f"{self.name}: word {i} of {audio.id!r}"
            if not isinstance(word, dict):
                raise DecodeError(f"{where}: expected an object")
            text = word.get("word")
            confidence = word.get("confidence")
            if not isinstance(text, str) or not text.strip():
                raise DecodeError(f"{where}: missing word text")
            if not isinstance(confidence, (int, float)) or isinstance(confidence, bool):
                raise DecodeError(f"{where}: missing confidence")
            try:
                tokens.append(
                    ScoredToken(text.strip(), float(confidence), _seconds_to_span(word, where))
                )
            except ValueError as exc:
                raise DecodeError(f"{where}: {exc}") from exc
        return ScoredTranscript(id=audio.id, tokens=tuple(tokens))


def _chat_content(body: dict, name: str) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise DecodeError(f"{name}: malformed chat completion response") from exc
    if not isinstance(content, str) or not content.strip():
        raise EmptyResponseError(f"{name}: model returned empty content")
    return content.strip()


def _encode_frame(path: str) -> dict:
    data = base64.b64encode(Path(path).read_bytes()).decode("ascii")
    suffix = Path(path).suffix.lower().lstrip(".")
    mime = "image/png" if suffix == "png" else "image/jpeg"
    return {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{data}"}}


class HttpGestureRecognizer(_HttpClient):
    """Zero-shot gesture labeling through a multimodal chat endpoint."""

    def __init__(
        self,
        config: BackendConfig,
        bundle: PromptBundle | None = None,
        session: requests.Session | None = None,
        name: str = "http-gesture",
        allow_other: bool = False,
    ):
        super().__init__(config, session)
        self.name = name
        self.bundle = bundle if bundle is not None else PromptBundle()
        self._allow_other = allow_other

    def recognize(
        self, frames: FrameSet, labels: tuple[GestureLabel, ...] = DEFAULT_GESTURE_LABELS
    ) -> list[GestureEvent]:
        prompt = self.bundle.build_gesture_prompt(labels)
        content = [{"type": "text", "text": prompt}]
        content.extend(_encode_frame(p) for p in frames.paths)
        body = self._post(
            "/v1/chat/completions",
            json={
                "model": self.config.model,
                "messages": [{"role": "user", "content": content}],
            },
        )
        reply = _chat_content(body, self.name)
        label = parse_label(reply, labels, allow_other=self._allow_other)
        if label is None:
            return []
        return [
            GestureEvent(
                label=label,
                span=frames.span,
                confidence=None,
                source="model",
                utterance_index=frames.utterance_index,
            )
        ]


class HttpRewriter(_HttpClient):
    """Contextual rewriting through a chat endpoint."""

    def __init__(
        self,
        config: BackendConfig,
        bundle: PromptBundle | None = None,
        session: requests.Session | None = None,
        name: str = "http-rewriter",
    ):
        super().__init__(config, session)
        self.name = name
        self.bundle = bundle if bundle is not None else PromptBundle()

    def rewrite(self, context: RewriteContext) -> RewriteResult:
        prompt = self.bundle.build_rewrite_prompt(
            list(context.words), list(context.gestures)
        )
        body = self._post(
            "/v1/chat/completions",
            json={
                "model": self.config.model,
                "messages": [{"role": "user", "content": prompt}],
            },
        )
        return RewriteResult(text=_chat_content(body, self.name), backend=self.name)
