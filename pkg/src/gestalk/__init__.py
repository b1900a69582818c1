"""Gesture-aware transcript parsing, scoring, and enrichment.

The package turns transcripts of gesture-accompanied disordered speech into
structured data, measures recognition quality, and reconstructs intended
utterances by fusing recognized words with gesture labels.
"""

from .chat import (
    Corpus,
    TranscriptFile,
    Utterance,
    extract_gesture_events,
    parse_corpus,
    parse_file,
    parse_path,
    serialize,
)
from .clients import (
    AudioRef,
    FrameSet,
    MockGestureRecognizer,
    MockRewriter,
    MockSpeechRecognizer,
    RewriteContext,
    RewriteResult,
    parse_label,
)
from .core import (
    CANONICAL_GESTURES,
    DEFAULT_GESTURE_LABELS,
    GestureEvent,
    GestureLabel,
    TimeSpan,
)
from .errors import GestalkError
from .filtering import FilterConfig, ScoredToken, ScoredTranscript, filter_tokens
from .fusion import (
    EnrichedUtterance,
    ManifestItem,
    OverlapRule,
    PipelineConfig,
    PipelineReport,
    assign_gesture,
    load_manifest,
    run_pipeline,
)
from .prompts import PromptBundle
from .stats import StatsReport, compute_stats, render_stats
from .wer import Alignment, NormalizationConfig, WerReport, WerScore, align, corpus_wer, normalize, wer

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Alignment",
    "AudioRef",
    "CANONICAL_GESTURES",
    "Corpus",
    "DEFAULT_GESTURE_LABELS",
    "EnrichedUtterance",
    "FilterConfig",
    "FrameSet",
    "GestalkError",
    "GestureEvent",
    "GestureLabel",
    "ManifestItem",
    "MockGestureRecognizer",
    "MockRewriter",
    "MockSpeechRecognizer",
    "NormalizationConfig",
    "OverlapRule",
    "PipelineConfig",
    "PipelineReport",
    "PromptBundle",
    "RewriteContext",
    "RewriteResult",
    "ScoredToken",
    "ScoredTranscript",
    "StatsReport",
    "TimeSpan",
    "TranscriptFile",
    "Utterance",
    "WerReport",
    "WerScore",
    "align",
    "assign_gesture",
    "compute_stats",
    "corpus_wer",
    "extract_gesture_events",
    "filter_tokens",
    "load_manifest",
    "normalize",
    "parse_corpus",
    "parse_file",
    "parse_label",
    "parse_path",
    "render_stats",
    "run_pipeline",
    "serialize",
    "wer",
]
