"""Gesture-speech fusion and the end-to-end enrichment pipeline.

Per item the pipeline runs: recognize speech (or load a precomputed
transcript), drop low-confidence words, obtain gesture events (transcript
annotations win over frame-based recognition), keep events that temporally
belong to the item, and rewrite the utterance with the gesture context.

Items are independent, so they run on a thread pool. One item failing
records a stage failure instead of aborting the run, and every manifest
item ends up in exactly one of the two result lists. An interrupt
(Ctrl-C) still produces a report; unfinished items are recorded as
failures at the "interrupted" stage.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path

from . import chat
from .clients import (
    AudioRef,
    FrameSet,
    GestureRecognizer,
    RewriteContext,
    Rewriter,
    SpeechRecognizer,
)
from .core import DEFAULT_GESTURE_LABELS, GestureEvent, GestureLabel, TimeSpan, event_to_json
from .errors import DecodeError, DuplicateIdError, ManifestError
from .filtering import FilterConfig, ScoredTranscript, filter_tokens, transcript_from_json
from .prompts import PromptBundle

logger = logging.getLogger(__name__)

DEFAULT_SLACK_MS = 500


# ---------------------------------------------------------------------------
# Temporal assignment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OverlapRule:
    """How gesture events attach to utterance time spans.

    An event belongs to the span it overlaps most; with no overlap anywhere
    it may still attach to the nearest span when the gap is within
    ``slack_ms``, which absorbs small annotation timing offsets.
    """

    slack_ms: int = DEFAULT_SLACK_MS

    def __post_init__(self) -> None:
        if self.slack_ms < 0:
            raise ValueError("slack_ms must be non-negative")

    def matches(self, event_span: TimeSpan | None, target: TimeSpan | None) -> bool:
        """True when an event with this span belongs to the target span."""
        if event_span is None or target is None:
            return True
        if event_span.overlap_ms(target) > 0:
            return True
        return event_span.gap_ms(target) <= self.slack_ms


def assign_gesture(
    event_span: TimeSpan | None,
    spans: list[TimeSpan | None],
    rule: OverlapRule | None = None,
) -> int | None:
    """Pick the index of the span an event belongs to, or None.

    Maximum overlap wins; ties go to the earliest span. With zero overlap
    everywhere, the nearest span within the slack window wins.
    """
    if rule is None:
        rule = OverlapRule()
    if event_span is None:
        return None
    best: int | None = None
    best_overlap = 0
    for i, span in enumerate(spans):
        if span is None:
            continue
        overlap = event_span.overlap_ms(span)
        if overlap > best_overlap:
            best, best_overlap = i, overlap
    if best is not None:
        return best
    nearest: int | None = None
    nearest_gap: int | None = None
    for i, span in enumerate(spans):
        if span is None:
            continue
        gap = event_span.gap_ms(span)
        if gap <= rule.slack_ms and (nearest_gap is None or gap < nearest_gap):
            nearest, nearest_gap = i, gap
    return nearest


def _event_sort_key(event: GestureEvent) -> tuple[int, int, str]:
    if event.span is None:
        return (1, 0, event.label.text)
    return (0, event.span.start_ms, event.label.text)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

_MANIFEST_KEYS = frozenset(
    {
        "id",
        "audio",
        "precomputed_asr",
        "frames_dir",
        "cha_file",
        "utterance_index",
        "start_ms",
        "end_ms",
    }
)


@dataclass(frozen=True)
class ManifestItem:
    """One unit of work: an utterance-sized segment to enrich."""

    id: str
    audio: str | None = None
    precomputed_asr: str | dict | None = None
    frames_dir: str | None = None
    cha_file: str | None = None
    utterance_index: int | None = None
    span: TimeSpan | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ManifestError("manifest item id must be non-empty")
        if self.audio is None and self.precomputed_asr is None:
            raise ManifestError(
                f"item {self.id!r} needs audio or precomputed_asr"
            )
        if self.utterance_index is not None and self.utterance_index < 0:
            raise ManifestError(f"item {self.id!r}: utterance_index must be >= 0")


def _item_from_json(obj: dict, where: str) -> ManifestItem:
    if not isinstance(obj, dict):
        raise ManifestError(f"{where}: expected an object")
    unknown = set(obj) - _MANIFEST_KEYS
    if unknown:
        raise ManifestError(f"{where}: unknown keys {sorted(unknown)}")
    ident = obj.get("id")
    if not isinstance(ident, str):
        raise ManifestError(f"{where}: id must be a string")
    start, end = obj.get("start_ms"), obj.get("end_ms")
    if (start is None) != (end is None):
        raise ManifestError(f"{where}: start_ms and end_ms must appear together")
    span = None
    if start is not None:
        try:
            span = TimeSpan(int(start), int(end))
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"{where}: bad span: {exc}") from exc
    for key in ("audio", "frames_dir", "cha_file"):
        if obj.get(key) is not None and not isinstance(obj[key], str):
            raise ManifestError(f"{where}: {key} must be a string path")
    pre = obj.get("precomputed_asr")
    if pre is not None and not isinstance(pre, (str, dict)):
        raise ManifestError(f"{where}: precomputed_asr must be a path or inline object")
    index = obj.get("utterance_index")
    if index is not None and (not isinstance(index, int) or isinstance(index, bool)):
        raise ManifestError(f"{where}: utterance_index must be an integer")
    try:
        return ManifestItem(
            id=ident,
            audio=obj.get("audio"),
            precomputed_asr=pre,
            frames_dir=obj.get("frames_dir"),
            cha_file=obj.get("cha_file"),
            utterance_index=index,
            span=span,
        )
    except ManifestError as exc:
        raise ManifestError(f"{where}: {exc}") from exc


def load_manifest(path: str | Path) -> list[ManifestItem]:
    """Read a JSON-lines manifest; every line is one item.

    Unknown keys and duplicate ids abort the whole run up front, before any
    model is called.
    """
    items: list[ManifestItem] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise ManifestError(f"{where}: invalid JSON: {exc}") from exc
            item = _item_from_json(obj, where)
            if item.id in seen:
                raise DuplicateIdError(f"{where}: duplicate item id {item.id!r}")
            seen.add(item.id)
            items.append(item)
    return items


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Provenance:
    """What produced a report: backends, prompts, and knobs."""

    asr_backend: str | None
    gesture_backend: str | None
    rewrite_backend: str
    threshold: float
    inclusive_threshold: bool
    slack_ms: int
    prompt_digest: str
    labels: tuple[str, ...]

    def as_dict(self) -> dict:
        return {
            "asr_backend": self.asr_backend,
            "gesture_backend": self.gesture_backend,
            "rewrite_backend": self.rewrite_backend,
            "threshold": self.threshold,
            "inclusive_threshold": self.inclusive_threshold,
            "slack_ms": self.slack_ms,
            "prompt_digest": self.prompt_digest,
            "labels": list(self.labels),
        }


@dataclass(frozen=True)
class EnrichedUtterance:
    """Final pipeline output for one item."""

    id: str
    words: tuple[str, ...]
    removed_count: int
    gestures: tuple[GestureEvent, ...]
    text: str

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "words": list(self.words),
            "removed_count": self.removed_count,
            "gestures": [event_to_json(e) for e in self.gestures],
            "text": self.text,
        }


@dataclass(frozen=True)
class StageFailure:
    id: str
    stage: str
    message: str

    def as_dict(self) -> dict:
        return {"id": self.id, "stage": self.stage, "message": self.message}


@dataclass(frozen=True)
class PipelineReport:
    items: tuple[EnrichedUtterance, ...]
    failures: tuple[StageFailure, ...]
    provenance: Provenance
    interrupted: bool = False

    def as_dict(self) -> dict:
        return {
            "items": [i.as_dict() for i in self.items],
            "failures": [f.as_dict() for f in self.failures],
            "provenance": self.provenance.as_dict(),
            "interrupted": self.interrupted,
            "counts": {
                "total": len(self.items) + len(self.failures),
                "succeeded": len(self.items),
                "failed": len(self.failures),
            },
        }


class _StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    filter: FilterConfig
    rule: OverlapRule
    labels: tuple[GestureLabel, ...] = DEFAULT_GESTURE_LABELS
    parallel: int = 1

    def __post_init__(self) -> None:
        if self.parallel < 1:
            raise ValueError("parallel must be at least 1")


def _load_transcript(item: ManifestItem, recognizer: SpeechRecognizer | None) -> ScoredTranscript:
    pre = item.precomputed_asr
    if pre is not None:
        if isinstance(pre, str):
            try:
                with open(pre, encoding="utf-8") as fh:
                    obj = json.load(fh)
            except ValueError as exc:
                raise DecodeError(f"{pre}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise DecodeError(f"{pre}: expected a transcript object")
        else:
            obj = dict(pre)
        obj = {**obj, "id": item.id}
        return transcript_from_json(obj)
    if recognizer is None:
        raise ManifestError(
            f"item {item.id!r} has audio but no speech recognizer is configured"
        )
    return recognizer.transcribe(AudioRef(id=item.id, path=item.audio))


def _annotation_events(item: ManifestItem) -> list[GestureEvent]:
    file = chat.parse_path(item.cha_file)
    events = chat.extract_gesture_events(file)
    if item.utterance_index is not None:
        if item.utterance_index >= len(file.utterances):
            raise ManifestError(
                f"item {item.id!r}: utterance_index {item.utterance_index} out of "
                f"range for {item.cha_file} ({len(file.utterances)} utterances)"
            )
        events = [e for e in events if e.utterance_index == item.utterance_index]
    return events


def _gesture_events(
    item: ManifestItem,
    recognizer: GestureRecognizer | None,
    labels: tuple[GestureLabel, ...],
) -> list[GestureEvent]:
    if item.cha_file is not None:
        return _annotation_events(item)
    if item.frames_dir is not None:
        if recognizer is None:
            raise ManifestError(
                f"item {item.id!r} has frames but no gesture recognizer is configured"
            )
        frames = FrameSet.from_dir(
            item.id,
            item.frames_dir,
            span=item.span,
            utterance_index=item.utterance_index or 0,
        )
        return recognizer.recognize(frames, labels)
    return []


def _process_item(
    item: ManifestItem,
    asr: SpeechRecognizer | None,
    gesture: GestureRecognizer | None,
    rewriter: Rewriter,
    config: PipelineConfig,
) -> EnrichedUtterance:
    stage = "transcribe"
    try:
        transcript = _load_transcript(item, asr)
        stage = "filter"
        filtered = filter_tokens(transcript, config.filter)
        stage = "gesture"
        events = _gesture_events(item, gesture, config.labels)
        stage = "assign"
        kept = sorted(
            (e for e in events if config.rule.matches(e.span, item.span)),
            key=_event_sort_key,
        )
        stage = "rewrite"
        result = rewriter.rewrite(
            RewriteContext(
                id=item.id, words=tuple(filtered.words()), gestures=tuple(kept)
            )
        )
    except Exception as exc:
        raise _StageError(stage, exc) from exc
    return EnrichedUtterance(
        id=item.id,
        words=tuple(filtered.words()),
        removed_count=filtered.removed_count,
        gestures=tuple(kept),
        text=result.text,
    )


def run_pipeline(
    items: list[ManifestItem],
    rewriter: Rewriter,
    asr: SpeechRecognizer | None = None,
    gesture: GestureRecognizer | None = None,
    config: PipelineConfig | None = None,
    bundle: PromptBundle | None = None,
) -> PipelineReport:
    """Enrich every manifest item; never raises for a single bad item.

    The report covers the whole manifest: each item appears either in
    ``items`` or in ``failures``, including when the run is interrupted.
    """
    if config is None:
        config = PipelineConfig(filter=FilterConfig(), rule=OverlapRule())
    if bundle is None:
        bundle = PromptBundle()
    provenance = Provenance(
        asr_backend=getattr(asr, "name", None),
        gesture_backend=getattr(gesture, "name", None),
        rewrite_backend=rewriter.name,
        threshold=config.filter.threshold,
        inclusive_threshold=config.filter.inclusive_threshold,
        slack_ms=config.rule.slack_ms,
        prompt_digest=bundle.digest(),
        labels=tuple(label.text for label in config.labels),
    )
    results: dict[str, EnrichedUtterance] = {}
    failures: dict[str, StageFailure] = {}
    interrupted = False

    with ThreadPoolExecutor(max_workers=config.parallel) as pool:
        futures = {
            pool.submit(_process_item, item, asr, gesture, rewriter, config): item
            for item in items
        }
        pending = set(futures)
        try:
            while pending:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for future in done:
                    item = futures[future]
                    try:
                        results[item.id] = future.result()
                    except _StageError as exc:
                        logger.warning("item %s failed at %s: %s", item.id, exc.stage, exc.cause)
                        failures[item.id] = StageFailure(item.id, exc.stage, str(exc.cause))
                    except Exception as exc:
                        logger.warning("item %s failed: %s", item.id, exc)
                        failures[item.id] = StageFailure(item.id, "internal", str(exc))
        except KeyboardInterrupt:
            interrupted = True
            for future in pending:
                future.cancel()
            for future, item in futures.items():
                if item.id not in results and item.id not in failures:
                    failures[item.id] = StageFailure(item.id, "interrupted", "run interrupted")

    ordered_items = tuple(results[i.id] for i in items if i.id in results)
    ordered_failures = tuple(failures[i.id] for i in items if i.id in failures)
    return PipelineReport(
        items=ordered_items,
        failures=ordered_failures,
        provenance=provenance,
        interrupted=interrupted,
    )
