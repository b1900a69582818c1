"""Command line entry points.

Exit codes: 0 success, 1 data or per-item failures, 2 usage and
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, chat
from .clients import (
    BackendConfig,
    FrameSet,
    GestureRecognizer,
    HttpGestureRecognizer,
    HttpRewriter,
    HttpSpeechRecognizer,
    MockGestureRecognizer,
    MockRewriter,
    MockSpeechRecognizer,
    RewriteContext,
    Rewriter,
    SpeechRecognizer,
)
from .config import Settings, load_settings
from .core import DEFAULT_GESTURE_LABELS, GestureEvent, GestureLabel, TimeSpan, event_to_json
from .errors import (
    ConfigError,
    GestalkError,
    InvalidThresholdError,
    TemplateError,
    UnknownFormatError,
)
from .filtering import FilterConfig, filter_tokens
from .filtering import transcript_from_json as scored_from_json
from .filtering import transcript_to_json as scored_to_json
from .fusion import OverlapRule, PipelineConfig, load_manifest, run_pipeline
from .prompts import PromptBundle
from .stats import compute_stats, render_stats
from .wer import NormalizationConfig, corpus_wer

_USAGE_ERRORS = (ConfigError, InvalidThresholdError, UnknownFormatError, TemplateError)


def _labels_from(settings: Settings) -> tuple[GestureLabel, ...]:
    names = settings.label_list()
    if not names:
        return DEFAULT_GESTURE_LABELS
    return tuple(GestureLabel(n) for n in names)


def _bundle_from(settings: Settings) -> PromptBundle:
    if settings.prompts_dir:
        return PromptBundle.from_dir(settings.prompts_dir)
    return PromptBundle()


def _chat_backend_config(settings: Settings, model: str) -> BackendConfig:
    if not settings.chat_base_url:
        raise ConfigError("chat_base_url is required without --mock")
    if not model:
        raise ConfigError("gesture_model / rewrite_model is required without --mock")
    return BackendConfig(
        base_url=settings.chat_base_url,
        model=model,
        api_key=settings.chat_api_key or None,
        connect_timeout_s=settings.connect_timeout_s,
        read_timeout_s=settings.read_timeout_s,
        max_attempts=settings.max_attempts,
        backoff_s=settings.backoff_s,
        max_parallel=settings.max_parallel_requests,
    )


def _build_asr(settings: Settings, mock: bool) -> SpeechRecognizer | None:
    if mock:
        if settings.asr_fixture:
            return MockSpeechRecognizer.from_fixture(settings.asr_fixture)
        return None
    if not settings.asr_base_url:
        return None
    return HttpSpeechRecognizer(
        BackendConfig(
            base_url=settings.asr_base_url,
            model=settings.asr_model,
            api_key=settings.asr_api_key or None,
            connect_timeout_s=settings.connect_timeout_s,
            read_timeout_s=settings.read_timeout_s,
            max_attempts=settings.max_attempts,
            backoff_s=settings.backoff_s,
            max_parallel=settings.max_parallel_requests,
        )
    )


def _build_gesture(settings: Settings, mock: bool, bundle: PromptBundle) -> GestureRecognizer | None:
    if mock:
        if settings.gesture_fixture:
            return MockGestureRecognizer.from_fixture(settings.gesture_fixture)
        return None
    if not settings.chat_base_url or not settings.gesture_model:
        return None
    return HttpGestureRecognizer(
        _chat_backend_config(settings, settings.gesture_model), bundle=bundle
    )


def _build_rewriter(settings: Settings, mock: bool, bundle: PromptBundle) -> Rewriter:
    if mock:
        return MockRewriter()
    return HttpRewriter(
        _chat_backend_config(settings, settings.rewrite_model), bundle=bundle
    )


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_parse(args: argparse.Namespace, settings: Settings) -> int:
    failed = 0
    documents = []
    for path in args.files:
        try:
            file = chat.parse_path(path)
        except GestalkError as exc:
            print(f"error: {exc}", file=sys.stderr)
            failed += 1
            continue
        documents.append(file)
    if args.json:
        payload = [chat.transcript_to_json(f) for f in documents]
        body = payload[0] if len(args.files) == 1 and payload else payload
        print(json.dumps(body, indent=2))
    else:
        for file in documents:
            sys.stdout.write(chat.serialize(file))
    return 1 if failed else 0


def _cmd_stats(args: argparse.Namespace, settings: Settings) -> int:
    corpus = chat.parse_corpus(args.root, extension=args.extension)
    for diag in corpus.diagnostics:
        print(f"warning: skipped {diag.path}: {diag.error}", file=sys.stderr)
    _emit(render_stats(compute_stats(corpus), format=args.format), args.out)
    return 1 if corpus.diagnostics else 0


def _load_pairs(path: str) -> list[tuple[str, str, str]]:
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        rows = json.loads(text)
    else:
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    pairs = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict) or not {"id", "ref", "hyp"} <= set(row):
            raise GestalkError(f"{path}: row {i} must be an object with id, ref, hyp")
        pairs.append((str(row["id"]), str(row["ref"]), str(row["hyp"])))
    return pairs


def _cmd_wer(args: argparse.Namespace, settings: Settings) -> int:
    config = NormalizationConfig(
        keep_fillers=not args.drop_fillers, keep_fragments=args.keep_fragments
    )
    report = corpus_wer(_load_pairs(args.pairs), config)
    if args.format == "json":
        _emit(json.dumps(report.as_dict(), indent=2) + "\n", args.out)
        return 0
    lines = [f"{'id':<16}{'wer':>8}{'S':>4}{'D':>4}{'I':>4}{'N':>4}"]
    for item_id, score in report.per_item:
        lines.append(
            f"{item_id:<16}{float(score.wer):>8.3f}{score.substitutions:>4}"
            f"{score.deletions:>4}{score.insertions:>4}{score.ref_len:>4}"
        )
    avg, micro = report.average_wer, report.micro_wer
    lines.append(
        "macro {} micro {} skipped {}".format(
            "n/a" if avg is None else f"{float(avg):.3f}",
            "n/a" if micro is None else f"{float(micro):.3f}",
            len(report.skipped),
        )
    )
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_filter(args: argparse.Namespace, settings: Settings) -> int:
    threshold = settings.threshold if args.threshold is None else args.threshold
    config = FilterConfig(
        threshold=threshold,
        inclusive_threshold=args.inclusive or settings.inclusive_threshold,
    )
    if args.input == "-":
        payload = json.load(sys.stdin)
    else:
        with open(args.input, encoding="utf-8") as fh:
            payload = json.load(fh)
    filtered = filter_tokens(scored_from_json(payload), config)
    _emit(json.dumps(scored_to_json(filtered), indent=2) + "\n", args.out)
    return 0


def _cmd_gestures(args: argparse.Namespace, settings: Settings) -> int:
    labels = _labels_from(settings)
    events: list[GestureEvent]
    if args.cha:
        events = chat.extract_gesture_events(chat.parse_path(args.cha))
    else:
        span = None
        if args.start_ms is not None or args.end_ms is not None:
            if args.start_ms is None or args.end_ms is None:
                raise ConfigError("--start-ms and --end-ms must appear together")
            span = TimeSpan(args.start_ms, args.end_ms)
        frames = FrameSet.from_dir(args.id, args.frames, span=span)
        recognizer = _build_gesture(settings, args.mock, _bundle_from(settings))
        if recognizer is None:
            raise ConfigError(
                "no gesture backend: set gesture_fixture (with --mock) or "
                "chat_base_url and gesture_model"
            )
        events = recognizer.recognize(frames, labels)
    _emit(json.dumps([event_to_json(e) for e in events], indent=2) + "\n", args.out)
    return 0


def _parse_gesture_arg(raw: str) -> GestureEvent:
    name, _, timing = raw.partition(":")
    span = None
    if timing:
        start, _, end = timing.partition("-")
        try:
            span = TimeSpan(int(start), int(end))
        except ValueError as exc:
            raise ConfigError(f"bad --gesture timing {raw!r}: {exc}") from exc
    if not name:
        raise ConfigError(f"bad --gesture value {raw!r}")
    return GestureEvent(label=GestureLabel(name), span=span, source="model")


def _cmd_rewrite(args: argparse.Namespace, settings: Settings) -> int:
    bundle = _bundle_from(settings)
    rewriter = _build_rewriter(settings, args.mock, bundle)
    gestures = tuple(_parse_gesture_arg(g) for g in args.gesture)
    context = RewriteContext(
        id=args.id, words=tuple(args.words.split()), gestures=gestures
    )
    result = rewriter.rewrite(context)
    print(result.text)
    return 0


def _pipeline_config(args: argparse.Namespace, settings: Settings) -> PipelineConfig:
    threshold = settings.threshold if args.threshold is None else args.threshold
    slack = settings.slack_ms if args.slack_ms is None else args.slack_ms
    parallel = settings.parallel if args.parallel is None else args.parallel
    return PipelineConfig(
        filter=FilterConfig(
            threshold=threshold,
            inclusive_threshold=args.inclusive or settings.inclusive_threshold,
        ),
        rule=OverlapRule(slack_ms=slack),
        labels=_labels_from(settings),
        parallel=parallel,
    )


def _run_manifest(args: argparse.Namespace, settings: Settings):
    items = load_manifest(args.manifest)
    bundle = _bundle_from(settings)
    return run_pipeline(
        items,
        rewriter=_build_rewriter(settings, args.mock, bundle),
        asr=_build_asr(settings, args.mock),
        gesture=_build_gesture(settings, args.mock, bundle),
        config=_pipeline_config(args, settings),
        bundle=bundle,
    )


def _cmd_pipeline(args: argparse.Namespace, settings: Settings) -> int:
    report = _run_manifest(args, settings)
    _emit(json.dumps(report.as_dict(), indent=2) + "\n", args.out)
    for failure in report.failures:
        print(f"failed: {failure.id} at {failure.stage}: {failure.message}", file=sys.stderr)
    return 1 if report.failures or report.interrupted else 0


def _cmd_case_report(args: argparse.Namespace, settings: Settings) -> int:
    report = _run_manifest(args, settings)
    rows = [("id", "recognized", "gestures", "ours")]
    for item in report.items:
        rows.append(
            (
                item.id,
                " ".join(item.words) or "(empty)",
                ", ".join(e.label.text for e in item.gestures) or "(none)",
                item.text or "(empty)",
            )
        )
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
    lines.insert(1, "-" * len(lines[0]))
    _emit("\n".join(lines) + "\n", args.out)
    for failure in report.failures:
        print(f"failed: {failure.id} at {failure.stage}: {failure.message}", file=sys.stderr)
    return 1 if report.failures or report.interrupted else 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gestalk",
        description="Gesture-aware transcript parsing, scoring, and enrichment.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="path to a key = value settings file")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse transcript files and echo them canonically")
    p.add_argument("files", nargs="+")
    p.add_argument("--json", action="store_true", help="emit the JSON document model")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("stats", help="per-gesture usage statistics over a corpus")
    p.add_argument("root", help="directory searched recursively for transcripts")
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--extension", default=chat.DEFAULT_EXTENSION)
    p.add_argument("-o", "--out")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("wer", help="word error rate over reference/hypothesis pairs")
    p.add_argument("pairs", help="JSON array or JSONL of {id, ref, hyp}")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--drop-fillers", action="store_true")
    p.add_argument("--keep-fragments", action="store_true")
    p.add_argument("-o", "--out")
    p.set_defaults(func=_cmd_wer)

    p = sub.add_parser("filter", help="drop low-confidence words from a scored transcript")
    p.add_argument("input", help="scored transcript JSON file, or - for stdin")
    p.add_argument("--threshold", type=float)
    p.add_argument("--inclusive", action="store_true", help="keep words at the threshold too")
    p.add_argument("-o", "--out")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("gestures", help="extract or recognize gesture events")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--cha", help="read annotation events from a transcript file")
    src.add_argument("--frames", help="recognize from a directory of still frames")
    p.add_argument("--id", default="segment", help="segment id for --frames")
    p.add_argument("--start-ms", type=int)
    p.add_argument("--end-ms", type=int)
    p.add_argument("--mock", action="store_true")
    p.add_argument("-o", "--out")
    p.set_defaults(func=_cmd_gestures)

    p = sub.add_parser("rewrite", help="rewrite one utterance with gesture context")
    p.add_argument("--words", required=True, help="space-separated recognized words")
    p.add_argument(
        "--gesture",
        action="append",
        default=[],
        metavar="LABEL[:START-END]",
        help="gesture event, milliseconds optional; repeatable",
    )
    p.add_argument("--id", default="utterance")
    p.add_argument("--mock", action="store_true")
    p.set_defaults(func=_cmd_rewrite)

    for name, handler, help_text in (
        ("pipeline", _cmd_pipeline, "run the full enrichment pipeline over a manifest"),
        ("case-report", _cmd_case_report, "run the pipeline and print a comparison table"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--manifest", required=True, help="JSONL manifest of items")
        p.add_argument("--mock", action="store_true", help="use fixture-backed backends")
        p.add_argument("--threshold", type=float)
        p.add_argument("--inclusive", action="store_true")
        p.add_argument("--slack-ms", type=int)
        p.add_argument("--parallel", type=int)
        p.add_argument("-o", "--out")
        p.set_defaults(func=handler)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        settings = load_settings(args.config)
        return args.func(args, settings)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GestalkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
