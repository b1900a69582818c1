"""Word-level alignment and Word Error Rate scoring.

WER = (substitutions + deletions + insertions) / reference length, under a
minimum-edit alignment with unit costs. Values above 1.0 are legitimate and
never clipped. Scores are kept as exact fractions; convert to float at the
reporting edge.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

from . import chat
from .errors import DuplicateIdError, EmptyReferenceError

#: A normalized word sequence: non-empty lowercase strings, no whitespace.
WordSequence = list[str]

_BRACKET_RE = re.compile(r"\[[^\]]*\]")
_EDGE_PUNCT_RE = re.compile(r"^[^\w]+|[^\w]+$")


@dataclass(frozen=True)
class NormalizationConfig:
    """Switches controlling how raw text maps to scoring words.

    Fillers (um, uh, ...) are kept by default because disfluencies are part
    of the reference transcripts; fragments (``uz@u``, stranded letters)
    are dropped by default, or reduced to their letter prefix when kept.
    """

    keep_fillers: bool = True
    keep_fragments: bool = False

    def as_dict(self) -> dict:
        return {"keep_fillers": self.keep_fillers, "keep_fragments": self.keep_fragments}


DEFAULT_NORMALIZATION = NormalizationConfig()


def normalize(raw: str, config: NormalizationConfig = DEFAULT_NORMALIZATION) -> WordSequence:
    """Lowercase, strip punctuation and bracketed codes, apply disfluency rules."""
    words: WordSequence = []
    for piece in _BRACKET_RE.sub(" ", raw).split():
        piece = _EDGE_PUNCT_RE.sub("", piece).lower()
        if not piece:
            continue
        if piece in chat.FILLER_WORDS:
            if config.keep_fillers:
                words.append(piece)
        elif chat.is_fragment_text(piece):
            if config.keep_fragments:
                token = chat.classify_word(piece)
                words.append(token.letters if isinstance(token, chat.Fragment) else piece)
        else:
            words.append(piece)
    return words


def words_from_utterance(utt: chat.Utterance, config: NormalizationConfig = DEFAULT_NORMALIZATION) -> WordSequence:
    """Scoring words for a parsed utterance, under the same rules as normalize()."""
    words: WordSequence = []
    for token in utt.tokens:
        if isinstance(token, chat.Word):
            words.extend(normalize(token.text, config))
        elif isinstance(token, chat.Filler):
            if config.keep_fillers:
                words.append(token.text)
        elif isinstance(token, chat.Fragment):
            if config.keep_fragments:
                words.append(token.letters.lower())
    return words


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Match:
    ref_i: int
    hyp_j: int


@dataclass(frozen=True)
class Substitute:
    ref_i: int
    hyp_j: int


@dataclass(frozen=True)
class Delete:
    ref_i: int


@dataclass(frozen=True)
class Insert:
    hyp_j: int


AlignOp = Union[Match, Substitute, Delete, Insert]


@dataclass(frozen=True)
class Alignment:
    ops: tuple[AlignOp, ...]

    @property
    def substitutions(self) -> int:
        return sum(isinstance(op, Substitute) for op in self.ops)

    @property
    def deletions(self) -> int:
        return sum(isinstance(op, Delete) for op in self.ops)

    @property
    def insertions(self) -> int:
        return sum(isinstance(op, Insert) for op in self.ops)

    @property
    def cost(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    def reconstruct(self, ref: Sequence[str], hyp: Sequence[str]) -> list[str]:
        """Replay the ops against ``ref``; the result must equal ``hyp``."""
        out: list[str] = []
        for op in self.ops:
            if isinstance(op, Match):
                if ref[op.ref_i] != hyp[op.hyp_j]:
                    raise ValueError(f"match op over unequal words at {op}")
                out.append(ref[op.ref_i])
            elif isinstance(op, (Substitute, Insert)):
                out.append(hyp[op.hyp_j])
        return out


def align(ref: Sequence[str], hyp: Sequence[str]) -> Alignment:
    """Minimum-edit alignment with deterministic backtrace.

    Ties during backtrace resolve Match > Substitute > Delete > Insert, so
    identical inputs always produce the identical op list.
    """
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row, prev = dist[i], dist[i - 1]
        rw = ref[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (rw != hyp[j - 1])
            row[j] = min(sub, prev[j] + 1, row[j - 1] + 1)

    ops: list[AlignOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dist[i - 1][j - 1] == here:
            ops.append(Match(i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i - 1][j - 1] + 1 == here:
            ops.append(Substitute(i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and dist[i - 1][j] + 1 == here:
            ops.append(Delete(i - 1))
            i -= 1
        else:
            ops.append(Insert(j - 1))
            j -= 1
    ops.reverse()
    return Alignment(tuple(ops))


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WerScore:
    substitutions: int
    deletions: int
    insertions: int
    ref_len: int
    wer: Fraction

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    def as_dict(self) -> dict:
        return {
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "ref_len": self.ref_len,
            "wer": float(self.wer),
        }


def wer(ref: Sequence[str], hyp: Sequence[str], strict_empty_ref: bool = True) -> WerScore:
    """Score one reference/hypothesis pair.

    An empty reference raises EmptyReferenceError in strict mode; otherwise
    the error count is taken over a reference length of one by convention.
    """
    if not ref:
        if strict_empty_ref:
            raise EmptyReferenceError("reference is empty")
        return WerScore(0, 0, len(hyp), 0, Fraction(len(hyp), 1))
    a = align(ref, hyp)
    return WerScore(
        substitutions=a.substitutions,
        deletions=a.deletions,
        insertions=a.insertions,
        ref_len=len(ref),
        wer=Fraction(a.cost, len(ref)),
    )


@dataclass(frozen=True)
class WerReport:
    per_item: tuple[tuple[str, WerScore], ...]
    skipped: tuple[str, ...]
    config: NormalizationConfig = DEFAULT_NORMALIZATION

    @property
    def average_wer(self) -> Fraction | None:
        """Macro average: mean of per-item WER values."""
        if not self.per_item:
            return None
        return sum((s.wer for _, s in self.per_item), Fraction(0)) / len(self.per_item)

    @property
    def micro_wer(self) -> Fraction | None:
        """Global errors over global reference length, for transparency."""
        total_ref = sum(s.ref_len for _, s in self.per_item)
        if total_ref == 0:
            return None
        return Fraction(sum(s.errors for _, s in self.per_item), total_ref)

    def as_dict(self) -> dict:
        avg, micro = self.average_wer, self.micro_wer
        return {
            "average_wer": None if avg is None else float(avg),
            "micro_wer": None if micro is None else float(micro),
            "items": [dict(id=item_id, **score.as_dict()) for item_id, score in self.per_item],
            "skipped": list(self.skipped),
            "normalization": self.config.as_dict(),
        }


def corpus_wer(
    pairs: Iterable[tuple[str, str, str]],
    config: NormalizationConfig = DEFAULT_NORMALIZATION,
) -> WerReport:
    """Normalize and score (id, ref_text, hyp_text) triples.

    Items whose normalized reference is empty are skipped, not errors:
    disordered-speech corpora contain gesture-only utterances.
    """
    seen: set[str] = set()
    scored: list[tuple[str, WerScore]] = []
    skipped: list[str] = []
    for item_id, ref_text, hyp_text in pairs:
        if item_id in seen:
            raise DuplicateIdError(f"duplicate item id {item_id!r}")
        seen.add(item_id)
        ref = normalize(ref_text, config)
        if not ref:
            skipped.append(item_id)
            continue
        scored.append((item_id, wer(ref, normalize(hyp_text, config))))
    return WerReport(per_item=tuple(scored), skipped=tuple(skipped), config=config)
