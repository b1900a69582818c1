"""Per-label gesture statistics over a parsed corpus.

Counting rules:

* ``utterance_count`` counts utterances containing at least one event of the
  label, so an utterance with two cutting gestures counts once for cutting.
* ``user_count`` counts distinct (file, speaker code) identities with at
  least one such utterance; the total row counts identities across all
  labels, so it is not the column sum.
* Durations come from event spans. Events without a span stay in the counts
  but are excluded from duration aggregates; the exclusion is reported.

All duration math is exact (integer milliseconds); published values are
quantized half-to-even, at 3 decimals in rows and CSV/JSON, 2 decimals in
the rendered table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal

from .chat import Corpus, extract_gesture_events
from .core import CANONICAL_GESTURES, GestureLabel
from .errors import UnknownFormatError

TOTAL_LABEL = GestureLabel("total")

_CSV_HEADER = "label,# utt,# user,mean,min,max"


@dataclass(frozen=True)
class GestureStatsRow:
    label: GestureLabel
    utterance_count: int
    user_count: int
    event_count: int
    spanless_count: int
    duration_sum_ms: int
    duration_min_ms: int | None
    duration_max_ms: int | None

    @property
    def spanned_count(self) -> int:
        return self.event_count - self.spanless_count

    def _seconds(self, ms: int | None, places: str) -> Decimal | None:
        if ms is None:
            return None
        return (Decimal(ms) / 1000).quantize(Decimal(places), rounding=ROUND_HALF_EVEN)

    def _mean(self, places: str) -> Decimal | None:
        if self.spanned_count == 0:
            return None
        exact = Decimal(self.duration_sum_ms) / (1000 * self.spanned_count)
        return exact.quantize(Decimal(places), rounding=ROUND_HALF_EVEN)

    @property
    def duration_mean_s(self) -> Decimal | None:
        return self._mean("0.001")

    @property
    def duration_min_s(self) -> Decimal | None:
        return self._seconds(self.duration_min_ms, "0.001")

    @property
    def duration_max_s(self) -> Decimal | None:
        return self._seconds(self.duration_max_ms, "0.001")


@dataclass(frozen=True)
class StatsReport:
    rows: tuple[GestureStatsRow, ...]
    total: GestureStatsRow


def _label_sort_key(label: GestureLabel) -> tuple[int, str]:
    if label.text in CANONICAL_GESTURES:
        return (0, f"{CANONICAL_GESTURES.index(label.text):02d}")
    return (1, label.text)


def compute_stats(corpus: Corpus) -> StatsReport:
    """Aggregate gesture events across all parsed files.

    Order-insensitive: shuffling the corpus file list leaves the report
    unchanged.
    """
    utts: dict[GestureLabel, set[tuple[str, int]]] = {}
    users: dict[GestureLabel, set[tuple[str, str]]] = {}
    events: dict[GestureLabel, int] = {}
    spanless: dict[GestureLabel, int] = {}
    sums: dict[GestureLabel, int] = {}
    mins: dict[GestureLabel, int] = {}
    maxs: dict[GestureLabel, int] = {}
    all_users: set[tuple[str, str]] = set()

    for file in corpus.files:
        for event in extract_gesture_events(file):
            label = event.label
            speaker = file.utterances[event.utterance_index].speaker
            utts.setdefault(label, set()).add((file.path, event.utterance_index))
            users.setdefault(label, set()).add((file.path, speaker))
            all_users.add((file.path, speaker))
            events[label] = events.get(label, 0) + 1
            if event.span is None:
                spanless[label] = spanless.get(label, 0) + 1
            else:
                d = event.span.duration_ms
                sums[label] = sums.get(label, 0) + d
                mins[label] = min(mins.get(label, d), d)
                maxs[label] = max(maxs.get(label, d), d)

    rows = tuple(
        GestureStatsRow(
            label=label,
            utterance_count=len(utts[label]),
            user_count=len(users[label]),
            event_count=events[label],
            spanless_count=spanless.get(label, 0),
            duration_sum_ms=sums.get(label, 0),
            duration_min_ms=mins.get(label),
            duration_max_ms=maxs.get(label),
        )
        for label in sorted(events, key=_label_sort_key)
    )
    total = GestureStatsRow(
        label=TOTAL_LABEL,
        utterance_count=sum(r.utterance_count for r in rows),
        user_count=len(all_users),
        event_count=sum(r.event_count for r in rows),
        spanless_count=sum(r.spanless_count for r in rows),
        duration_sum_ms=sum(r.duration_sum_ms for r in rows),
        duration_min_ms=min((r.duration_min_ms for r in rows if r.duration_min_ms is not None), default=None),
        duration_max_ms=max((r.duration_max_ms for r in rows if r.duration_max_ms is not None), default=None),
    )
    return StatsReport(rows=rows, total=total)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _fmt(value: Decimal | None) -> str:
    return "" if value is None else str(value)


def _csv_line(row: GestureStatsRow) -> str:
    return ",".join(
        [
            row.label.text,
            str(row.utterance_count),
            str(row.user_count),
            _fmt(row.duration_mean_s),
            _fmt(row.duration_min_s),
            _fmt(row.duration_max_s),
        ]
    )


def _table(report: StatsReport) -> str:
    headers = ("label", "# utt", "# user", "mean", "min", "max")
    body = []
    for row in (*report.rows, report.total):
        body.append(
            (
                row.label.text,
                str(row.utterance_count),
                str(row.user_count),
                _fmt(row._mean("0.01")),
                _fmt(row._seconds(row.duration_min_ms, "0.01")),
                _fmt(row._seconds(row.duration_max_ms, "0.01")),
            )
        )
    widths = [max(len(headers[i]), *(len(r[i]) for r in body)) if body else len(headers[i]) for i in range(6)]
    lines = ["  ".join(h.ljust(widths[i]) if i == 0 else h.rjust(widths[i]) for i, h in enumerate(headers))]
    for r in body[:-1]:
        lines.append("  ".join(c.ljust(widths[i]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(r)))
    lines.append("-" * len(lines[0]))
    r = body[-1]
    lines.append("  ".join(c.ljust(widths[i]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(r)))
    if report.total.spanless_count:
        lines.append("")
        lines.append(
            f"{report.total.spanless_count} event(s) without a time span excluded from duration aggregates."
        )
    return "\n".join(lines) + "\n"


def _row_to_json(row: GestureStatsRow) -> dict:
    return {
        "label": row.label.text,
        "utterances": row.utterance_count,
        "users": row.user_count,
        "events": row.event_count,
        "spanless": row.spanless_count,
        "duration_sum_ms": row.duration_sum_ms,
        "duration_min_ms": row.duration_min_ms,
        "duration_max_ms": row.duration_max_ms,
        "mean_s": _fmt(row.duration_mean_s) or None,
        "min_s": _fmt(row.duration_min_s) or None,
        "max_s": _fmt(row.duration_max_s) or None,
    }


def _row_from_json(obj: dict) -> GestureStatsRow:
    return GestureStatsRow(
        label=GestureLabel(obj["label"]),
        utterance_count=obj["utterances"],
        user_count=obj["users"],
        event_count=obj["events"],
        spanless_count=obj["spanless"],
        duration_sum_ms=obj["duration_sum_ms"],
        duration_min_ms=obj["duration_min_ms"],
        duration_max_ms=obj["duration_max_ms"],
    )


def report_to_json(report: StatsReport) -> dict:
    return {"rows": [_row_to_json(r) for r in report.rows], "total": _row_to_json(report.total)}


def report_from_json(obj: dict) -> StatsReport:
    return StatsReport(
        rows=tuple(_row_from_json(r) for r in obj["rows"]),
        total=_row_from_json(obj["total"]),
    )


def render_stats(report: StatsReport, format: str = "table") -> str:
    """Render as a human table, lossless CSV, or lossless JSON."""
    if format == "table":
        return _table(report)
    if format == "csv":
        lines = [_CSV_HEADER]
        lines.extend(_csv_line(r) for r in report.rows)
        lines.append(_csv_line(report.total))
        return "\n".join(lines) + "\n"
    if format == "json":
        return json.dumps(report_to_json(report), indent=2) + "\n"
    raise UnknownFormatError(f"unknown stats format {format!r} (expected table, csv, or json)")
