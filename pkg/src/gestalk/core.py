"""Core value types shared by the parser, stats, backends, and fusion layers."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal


@dataclass(frozen=True, order=True)
class TimeSpan:
    """A half-open time interval in integer milliseconds.

    ``start_ms`` must be non-negative and strictly below ``end_ms``.
    """

    start_ms: int
    end_ms: int

    def __post_init__(self):
        if self.start_ms < 0:
            raise ValueError(f"start_ms must be >= 0, got {self.start_ms}")
        if self.start_ms >= self.end_ms:
            raise ValueError(f"empty or inverted span: {self.start_ms}_{self.end_ms}")

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms

    def duration_s(self) -> Decimal:
        """Duration in decimal seconds, exact at millisecond precision."""
        return Decimal(self.duration_ms) / Decimal(1000)

    def overlap_ms(self, other: "TimeSpan") -> int:
        """Length of the intersection with ``other``; 0 when disjoint."""
        return max(0, min(self.end_ms, other.end_ms) - max(self.start_ms, other.start_ms))

    def gap_ms(self, other: "TimeSpan") -> int:
        """Distance between disjoint spans; 0 when they touch or overlap."""
        if self.overlap_ms(other) > 0:
            return 0
        return max(other.start_ms - self.end_ms, self.start_ms - other.end_ms, 0)


# The six iconic-gesture names recognized out of the box, in canonical order.
CANONICAL_GESTURES = ("cutting", "eating", "folding", "layering", "opening", "spreading")


@dataclass(frozen=True, order=True)
class GestureLabel:
    """An iconic-gesture label.

    The six canonical names compare equal to the module constants below;
    anything else is carried verbatim as an "other" label so that no
    annotation is ever lost.
    """

    text: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("gesture label text must be non-empty")

    @property
    def is_canonical(self) -> bool:
        return self.text in CANONICAL_GESTURES

    def __str__(self) -> str:
        return self.text


CUTTING = GestureLabel("cutting")
EATING = GestureLabel("eating")
FOLDING = GestureLabel("folding")
LAYERING = GestureLabel("layering")
OPENING = GestureLabel("opening")
SPREADING = GestureLabel("spreading")

#: Default candidate set offered to gesture backends.
DEFAULT_GESTURE_LABELS = (CUTTING, EATING, FOLDING, LAYERING, OPENING, SPREADING)

GESTURE_SOURCES = ("annotation", "model")


@dataclass(frozen=True)
class GestureEvent:
    """One detected or annotated gesture occurrence.

    ``source`` records whether the event came from a transcript annotation
    or from a vision backend. ``utterance_index`` links annotation events
    back to their position in the source file.
    """

    label: GestureLabel
    span: TimeSpan | None = None
    confidence: float | None = None
    source: str = "annotation"
    utterance_index: int | None = None

    def __post_init__(self):
        if self.source not in GESTURE_SOURCES:
            raise ValueError(f"source must be one of {GESTURE_SOURCES}, got {self.source!r}")
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence!r}")


def event_to_json(event: GestureEvent) -> dict:
    out: dict = {"label": event.label.text, "source": event.source}
    if event.span is not None:
        out["start_ms"] = event.span.start_ms
        out["end_ms"] = event.span.end_ms
    if event.confidence is not None:
        out["confidence"] = event.confidence
    if event.utterance_index is not None:
        out["utterance_index"] = event.utterance_index
    return out


def event_from_json(obj: dict) -> GestureEvent:
    span = None
    if "start_ms" in obj or "end_ms" in obj:
        span = TimeSpan(int(obj["start_ms"]), int(obj["end_ms"]))
    return GestureEvent(
        label=GestureLabel(obj["label"]),
        span=span,
        confidence=obj.get("confidence"),
        source=obj.get("source", "annotation"),
        utterance_index=obj.get("utterance_index"),
    )
