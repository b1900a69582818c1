"""Confidence-based filtering of recognized words.

A recognizer emits one confidence per word. Filtering keeps a word only if
its confidence is strictly above the threshold (default 0.2); the
``inclusive_threshold`` flag switches the comparison to >= for recognizers
that emit exact threshold values. Removed words are counted cumulatively on
the transcript, which makes filtering idempotent as plain value equality:
``filter_tokens(filter_tokens(t, c), c) == filter_tokens(t, c)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .core import TimeSpan
from .errors import DecodeError, InvalidThresholdError

DEFAULT_THRESHOLD = 0.2


@dataclass(frozen=True)
class ScoredToken:
    """A recognized word with its confidence and optional timing."""

    text: str
    confidence: float
    span: TimeSpan | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("scored token text must be non-empty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence!r} outside [0, 1]")


@dataclass(frozen=True)
class ScoredTranscript:
    """Recognizer output for one audio item, possibly already filtered."""

    id: str
    tokens: tuple[ScoredToken, ...]
    removed_count: int = 0

    def words(self) -> list[str]:
        return [t.text for t in self.tokens]


@dataclass(frozen=True)
class FilterConfig:
    threshold: float = DEFAULT_THRESHOLD
    inclusive_threshold: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidThresholdError(
                f"threshold {self.threshold!r} outside [0, 1]"
            )

    def keeps(self, confidence: float) -> bool:
        if self.inclusive_threshold:
            return confidence >= self.threshold
        return confidence > self.threshold


def filter_tokens(
    transcript: ScoredTranscript, config: FilterConfig | None = None
) -> ScoredTranscript:
    """Drop tokens at or below the confidence threshold.

    Kept tokens preserve their original relative order and are untouched;
    ``removed_count`` accumulates across repeated applications.
    """
    if config is None:
        config = FilterConfig()
    kept = tuple(t for t in transcript.tokens if config.keeps(t.confidence))
    dropped = len(transcript.tokens) - len(kept)
    return replace(
        transcript, tokens=kept, removed_count=transcript.removed_count + dropped
    )


# ---------------------------------------------------------------------------
# JSON interchange (matches the speech recognizer response schema)
# ---------------------------------------------------------------------------

def _span_from_fields(obj: dict, where: str) -> TimeSpan | None:
    start = obj.get("start_ms")
    end = obj.get("end_ms")
    if start is None and end is None:
        return None
    if start is None or end is None:
        raise DecodeError(f"{where}: start_ms and end_ms must appear together")
    try:
        return TimeSpan(int(start), int(end))
    except (TypeError, ValueError) as exc:
        raise DecodeError(f"{where}: bad time span: {exc}") from exc


def token_to_json(token: ScoredToken) -> dict:
    obj: dict = {"word": token.text, "confidence": token.confidence}
    if token.span is not None:
        obj["start_ms"] = token.span.start_ms
        obj["end_ms"] = token.span.end_ms
    return obj


def token_from_json(obj: dict, where: str = "scored token") -> ScoredToken:
    if not isinstance(obj, dict):
        raise DecodeError(f"{where}: expected an object, got {type(obj).__name__}")
    try:
        text = obj["word"]
        confidence = obj["confidence"]
    except KeyError as exc:
        raise DecodeError(f"{where}: missing field {exc.args[0]!r}") from exc
    if not isinstance(text, str):
        raise DecodeError(f"{where}: word must be a string")
    if not isinstance(confidence, (int, float)) or isinstance(confidence, bool):
        raise DecodeError(f"{where}: confidence must be a number")
    try:
        return ScoredToken(text, float(confidence), _span_from_fields(obj, where))
    except ValueError as exc:
        raise DecodeError(f"{where}: {exc}") from exc


def transcript_to_json(transcript: ScoredTranscript) -> dict:
    return {
        "id": transcript.id,
        "words": [token_to_json(t) for t in transcript.tokens],
        "removed_count": transcript.removed_count,
    }


def transcript_from_json(obj: dict) -> ScoredTranscript:
    if not isinstance(obj, dict):
        raise DecodeError(f"scored transcript: expected an object, got {type(obj).__name__}")
    ident = obj.get("id")
    if not isinstance(ident, str) or not ident:
        raise DecodeError("scored transcript: id must be a non-empty string")
    words = obj.get("words")
    if not isinstance(words, list):
        raise DecodeError("scored transcript: words must be a list")
    tokens = tuple(
        token_from_json(w, where=f"word {i} of {ident!r}") for i, w in enumerate(words)
    )
    removed = obj.get("removed_count", 0)
    if not isinstance(removed, int) or isinstance(removed, bool) or removed < 0:
        raise DecodeError("scored transcript: removed_count must be a non-negative integer")
    return ScoredTranscript(id=ident, tokens=tokens, removed_count=removed)
