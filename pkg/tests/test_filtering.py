import pytest
from hypothesis import given
from hypothesis import strategies as st

from gestalk.core import TimeSpan
from gestalk.errors import DecodeError, InvalidThresholdError
from gestalk.filtering import (
    FilterConfig,
    ScoredToken,
    ScoredTranscript,
    filter_tokens,
    token_from_json,
    token_to_json,
    transcript_from_json,
    transcript_to_json,
)

confidences = st.one_of(
    st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
    st.sampled_from([0.0, 0.2, 1.0]),
)
tokens = st.builds(
    ScoredToken,
    text=st.text(alphabet="abcdefg", min_size=1, max_size=6),
    confidence=confidences,
)
transcripts = st.builds(
    ScoredTranscript,
    id=st.just("t"),
    tokens=st.lists(tokens, max_size=12).map(tuple),
)
thresholds = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def _is_subsequence(sub, full):
    it = iter(full)
    return all(any(x is y for y in it) for x in sub)


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------

@given(transcripts, thresholds)
def test_kept_tokens_are_an_ordered_subsequence(transcript, threshold):
    out = filter_tokens(transcript, FilterConfig(threshold=threshold))
    assert _is_subsequence(out.tokens, transcript.tokens)


@given(transcripts, thresholds)
def test_strict_threshold_partition(transcript, threshold):
    out = filter_tokens(transcript, FilterConfig(threshold=threshold))
    assert all(t.confidence > threshold for t in out.tokens)
    assert len(out.tokens) == sum(1 for t in transcript.tokens if t.confidence > threshold)


@given(transcripts, thresholds)
def test_inclusive_threshold_partition(transcript, threshold):
    config = FilterConfig(threshold=threshold, inclusive_threshold=True)
    out = filter_tokens(transcript, config)
    assert all(t.confidence >= threshold for t in out.tokens)
    assert len(out.tokens) == sum(1 for t in transcript.tokens if t.confidence >= threshold)


@given(transcripts, thresholds, st.booleans())
def test_filtering_is_idempotent(transcript, threshold, inclusive):
    config = FilterConfig(threshold=threshold, inclusive_threshold=inclusive)
    once = filter_tokens(transcript, config)
    assert filter_tokens(once, config) == once


@given(transcripts, thresholds)
def test_counts_balance(transcript, threshold):
    out = filter_tokens(transcript, FilterConfig(threshold=threshold))
    assert len(out.tokens) + out.removed_count == len(transcript.tokens) + transcript.removed_count


@given(transcripts, st.tuples(thresholds, thresholds).map(sorted))
def test_raising_threshold_only_shrinks(transcript, pair):
    low, high = pair
    kept_low = filter_tokens(transcript, FilterConfig(threshold=low)).tokens
    kept_high = filter_tokens(transcript, FilterConfig(threshold=high)).tokens
    assert _is_subsequence(kept_high, kept_low)


def test_boundary_token_strict_vs_inclusive():
    transcript = ScoredTranscript("t", (ScoredToken("word", 0.2),))
    assert filter_tokens(transcript, FilterConfig(threshold=0.2)).tokens == ()
    kept = filter_tokens(transcript, FilterConfig(threshold=0.2, inclusive_threshold=True))
    assert kept.tokens == transcript.tokens


def test_default_threshold_is_point_two():
    assert FilterConfig().threshold == 0.2
    transcript = ScoredTranscript(
        "t", (ScoredToken("lo", 0.2), ScoredToken("hi", 0.21))
    )
    assert [t.text for t in filter_tokens(transcript).tokens] == ["hi"]


def test_words_helper():
    transcript = ScoredTranscript("t", (ScoredToken("a", 0.5), ScoredToken("b", 0.6)))
    assert transcript.words() == ["a", "b"]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("value", [-0.1, 1.1])
def test_threshold_outside_unit_interval_rejected(value):
    with pytest.raises(InvalidThresholdError):
        FilterConfig(threshold=value)


def test_token_validation():
    with pytest.raises(ValueError):
        ScoredToken("", 0.5)
    with pytest.raises(ValueError):
        ScoredToken("x", 1.5)


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def test_token_json_round_trip():
    token = ScoredToken("jam", 0.92, TimeSpan(5100, 5600))
    assert token_from_json(token_to_json(token)) == token
    bare = ScoredToken("jam", 0.92)
    assert token_from_json(token_to_json(bare)) == bare


def test_transcript_json_round_trip():
    transcript = ScoredTranscript(
        "seg1",
        (ScoredToken("jam", 0.92, TimeSpan(0, 10)), ScoredToken("krx", 0.11)),
        removed_count=2,
    )
    assert transcript_from_json(transcript_to_json(transcript)) == transcript


@pytest.mark.parametrize(
    "payload",
    [
        {"id": "", "words": []},
        {"id": "x", "words": {}},
        {"id": "x", "words": [{"word": "a"}]},
        {"id": "x", "words": [{"word": "a", "confidence": "high"}]},
        {"id": "x", "words": [{"word": "a", "confidence": 2.0}]},
        {"id": "x", "words": [{"word": "a", "confidence": 0.5, "start_ms": 5}]},
        {"id": "x", "words": [], "removed_count": -1},
    ],
)
def test_malformed_transcript_json_rejected(payload):
    with pytest.raises(DecodeError):
        transcript_from_json(payload)
