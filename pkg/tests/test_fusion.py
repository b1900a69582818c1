import json

import pytest

from gestalk.clients import MockGestureRecognizer, MockRewriter, MockSpeechRecognizer, RewriteResult
from gestalk.core import CUTTING, FOLDING, GestureEvent, GestureLabel, TimeSpan
from gestalk.errors import DuplicateIdError, ManifestError
from gestalk.filtering import FilterConfig, ScoredToken, ScoredTranscript
from gestalk.fusion import (
    ManifestItem,
    OverlapRule,
    PipelineConfig,
    assign_gesture,
    load_manifest,
    run_pipeline,
)


# ---------------------------------------------------------------------------
# Temporal assignment
# ---------------------------------------------------------------------------

def test_rule_overlap_and_slack():
    rule = OverlapRule(slack_ms=500)
    target = TimeSpan(1000, 2000)
    assert rule.matches(TimeSpan(1500, 2500), target)  # overlaps
    assert rule.matches(TimeSpan(2000, 2400), target)  # touching, gap 0
    assert rule.matches(TimeSpan(2500, 3000), target)  # gap 500, at the slack edge
    assert not rule.matches(TimeSpan(2501, 3000), target)  # gap 501
    assert rule.matches(None, target)
    assert rule.matches(TimeSpan(0, 1), None)


def test_rule_rejects_negative_slack():
    with pytest.raises(ValueError):
        OverlapRule(slack_ms=-1)


def test_assign_picks_maximum_overlap():
    spans = [TimeSpan(0, 1000), TimeSpan(800, 3000), None]
    assert assign_gesture(TimeSpan(700, 1200), spans) == 1  # 300ms vs 200ms
    assert assign_gesture(TimeSpan(100, 900), spans) == 0


def test_assign_tie_goes_to_earliest():
    spans = [TimeSpan(0, 1000), TimeSpan(1000, 2000)]
    # 500ms overlap with each
    assert assign_gesture(TimeSpan(500, 1500), spans) == 0


def test_assign_uses_slack_when_disjoint():
    spans = [TimeSpan(0, 1000), TimeSpan(5000, 6000)]
    assert assign_gesture(TimeSpan(1200, 1400), spans) == 0  # gap 200
    assert assign_gesture(TimeSpan(4400, 4600), spans) == 1  # gap 400
    assert assign_gesture(TimeSpan(2600, 2800), spans) is None  # gap > 500 both ways


def test_assign_spanless_event():
    assert assign_gesture(None, [TimeSpan(0, 1)]) is None
    assert assign_gesture(TimeSpan(0, 1), [None, None]) is None


# ---------------------------------------------------------------------------
# Manifest loading
# ---------------------------------------------------------------------------

def _write_manifest(tmp_path, rows):
    path = tmp_path / "items.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def test_load_manifest_happy_path(tmp_path):
    path = _write_manifest(
        tmp_path,
        [
            {"id": "a", "audio": "a.wav", "frames_dir": "frames/a", "start_ms": 0, "end_ms": 900},
            {"id": "b", "precomputed_asr": {"words": []}, "cha_file": "b.cha", "utterance_index": 0},
        ],
    )
    items = load_manifest(path)
    assert [i.id for i in items] == ["a", "b"]
    assert items[0].span == TimeSpan(0, 900)
    assert items[1].precomputed_asr == {"words": []}


@pytest.mark.parametrize(
    "row",
    [
        {"id": "a", "audio": "a.wav", "mystery": 1},
        {"audio": "a.wav"},
        {"id": "", "audio": "a.wav"},
        {"id": "a"},
        {"id": "a", "audio": "a.wav", "start_ms": 10},
        {"id": "a", "audio": "a.wav", "start_ms": 20, "end_ms": 10},
        {"id": "a", "audio": "a.wav", "utterance_index": -1},
        {"id": "a", "audio": "a.wav", "utterance_index": True},
        {"id": "a", "audio": 3},
        {"id": "a", "precomputed_asr": 3},
    ],
)
def test_load_manifest_rejects_bad_rows(tmp_path, row):
    path = _write_manifest(tmp_path, [row])
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_load_manifest_rejects_duplicates(tmp_path):
    path = _write_manifest(
        tmp_path, [{"id": "a", "audio": "x"}, {"id": "a", "audio": "y"}]
    )
    with pytest.raises(DuplicateIdError):
        load_manifest(path)


def test_load_manifest_rejects_bad_json(tmp_path):
    path = tmp_path / "items.jsonl"
    path.write_text('{"id": "a", "audio": \n', encoding="utf-8")
    with pytest.raises(ManifestError, match="items.jsonl:1"):
        load_manifest(path)


def test_load_manifest_skips_blank_lines(tmp_path):
    path = tmp_path / "items.jsonl"
    path.write_text('\n{"id": "a", "audio": "x"}\n\n', encoding="utf-8")
    assert len(load_manifest(path)) == 1


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def _case_items(corpus_dir):
    return [
        ManifestItem(
            id="case2",
            precomputed_asr={"words": [{"word": "right.", "confidence": 0.9}]},
            cha_file=str(corpus_dir / "folding1.cha"),
            utterance_index=0,
        ),
        ManifestItem(
            id="case3",
            precomputed_asr={
                "words": [
                    {"word": "Um...", "confidence": 0.1},
                    {"word": "Banana.", "confidence": 0.95},
                ]
            },
            cha_file=str(corpus_dir / "cutting2.cha"),
            utterance_index=0,
        ),
        ManifestItem(
            id="case4",
            precomputed_asr={"words": [{"word": "and", "confidence": 0.8}]},
            cha_file=str(corpus_dir / "eating1.cha"),
            utterance_index=0,
        ),
    ]


def test_pipeline_enriches_case_items(corpus_dir):
    report = run_pipeline(_case_items(corpus_dir), rewriter=MockRewriter())
    assert report.failures == ()
    assert not report.interrupted
    by_id = {item.id: item for item in report.items}

    assert by_id["case2"].words == ("right.",)
    assert by_id["case2"].gestures[0].label == FOLDING
    assert by_id["case2"].text == "right folding"

    assert by_id["case3"].words == ("Banana.",)
    assert by_id["case3"].removed_count == 1
    assert [e.label for e in by_id["case3"].gestures] == [CUTTING, CUTTING]
    assert by_id["case3"].text == "banana cutting cutting"

    assert by_id["case4"].text == "and eating"

    assert report.provenance.rewrite_backend == "mock-rewriter"
    assert report.provenance.threshold == 0.2


def test_pipeline_gestures_sorted_by_time(corpus_dir):
    report = run_pipeline(_case_items(corpus_dir), rewriter=MockRewriter())
    case3 = next(i for i in report.items if i.id == "case3")
    starts = [e.span.start_ms for e in case3.gestures]
    assert starts == sorted(starts)


def test_pipeline_uses_mock_asr_and_gesture_backends(fixtures_dir):
    items = [
        ManifestItem(
            id="seg1",
            audio="ignored.wav",
            frames_dir=str(fixtures_dir / "frames" / "seg1"),
            span=TimeSpan(5000, 9000),
        )
    ]
    report = run_pipeline(
        items,
        rewriter=MockRewriter(),
        asr=MockSpeechRecognizer.from_fixture(fixtures_dir / "mock_asr.json"),
        gesture=MockGestureRecognizer.from_fixture(fixtures_dir / "mock_gestures.json"),
    )
    assert report.failures == ()
    item = report.items[0]
    assert item.words == ("jam", "bread")  # krx fell below the threshold
    assert item.removed_count == 1
    assert item.gestures[0].label == GestureLabel("spreading")
    assert item.text == "jam bread spreading"
    assert report.provenance.asr_backend == "mock-asr"
    assert report.provenance.gesture_backend == "mock-gesture"


def test_pipeline_drops_events_outside_slack(corpus_dir):
    # annotation at 1000-3500ms, item window far away: event is not fused
    item = ManifestItem(
        id="far",
        precomputed_asr={"words": [{"word": "right", "confidence": 0.9}]},
        cha_file=str(corpus_dir / "folding1.cha"),
        utterance_index=0,
        span=TimeSpan(9000, 9900),
    )
    report = run_pipeline([item], rewriter=MockRewriter())
    assert report.items[0].gestures == ()
    assert report.items[0].text == "right"

    near = ManifestItem(
        id="near",
        precomputed_asr={"words": [{"word": "right", "confidence": 0.9}]},
        cha_file=str(corpus_dir / "folding1.cha"),
        utterance_index=0,
        span=TimeSpan(3600, 4000),
    )
    report = run_pipeline([near], rewriter=MockRewriter())
    assert [e.label for e in report.items[0].gestures] == [FOLDING]


def test_pipeline_out_of_range_utterance_index(corpus_dir):
    item = ManifestItem(
        id="oops",
        precomputed_asr={"words": []},
        cha_file=str(corpus_dir / "folding1.cha"),
        utterance_index=7,
    )
    report = run_pipeline([item], rewriter=MockRewriter())
    assert report.items == ()
    assert report.failures[0].stage == "gesture"


def test_pipeline_isolates_per_item_failures(corpus_dir, tmp_path):
    items = _case_items(corpus_dir) + [
        ManifestItem(id="lost", precomputed_asr=str(tmp_path / "absent.json")),
        ManifestItem(
            id="badidx",
            precomputed_asr={"words": []},
            cha_file=str(corpus_dir / "eating1.cha"),
            utterance_index=9,
        ),
    ]
    report = run_pipeline(items, rewriter=MockRewriter())
    assert len(report.items) + len(report.failures) == len(items)
    assert {f.id for f in report.failures} == {"lost", "badidx"}
    assert {f.stage for f in report.failures} == {"transcribe", "gesture"}
    # manifest order is preserved in both lists
    assert [i.id for i in report.items] == ["case2", "case3", "case4"]


def test_pipeline_parallel_results_are_deterministic(corpus_dir):
    items = _case_items(corpus_dir)
    serial = run_pipeline(items, rewriter=MockRewriter())
    parallel = run_pipeline(
        items,
        rewriter=MockRewriter(),
        config=PipelineConfig(filter=FilterConfig(), rule=OverlapRule(), parallel=4),
    )
    assert serial.items == parallel.items
    assert serial.failures == parallel.failures


def test_pipeline_audio_without_recognizer_fails_item():
    report = run_pipeline(
        [ManifestItem(id="a", audio="a.wav")], rewriter=MockRewriter()
    )
    assert report.failures[0].stage == "transcribe"
    assert "no speech recognizer" in report.failures[0].message


class _InterruptingRewriter:
    name = "boom"

    def __init__(self, trip_id):
        self.trip_id = trip_id

    def rewrite(self, context):
        if context.id == self.trip_id:
            raise KeyboardInterrupt
        return RewriteResult(text=" ".join(context.words), backend=self.name)


def test_pipeline_interrupt_yields_partial_report(corpus_dir):
    items = _case_items(corpus_dir)
    report = run_pipeline(items, rewriter=_InterruptingRewriter("case3"))
    assert report.interrupted
    assert len(report.items) + len(report.failures) == len(items)
    assert any(f.stage == "interrupted" for f in report.failures)


def test_pipeline_filter_config_respected(corpus_dir):
    items = [_case_items(corpus_dir)[1]]  # case3: um 0.1, banana 0.95
    keep_all = PipelineConfig(
        filter=FilterConfig(threshold=0.05), rule=OverlapRule()
    )
    report = run_pipeline(items, rewriter=MockRewriter(), config=keep_all)
    assert report.items[0].words == ("Um...", "Banana.")
