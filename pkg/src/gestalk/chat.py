"""Reader and writer for a gesture-annotated subset of CHAT transcripts.

The dialect handled here is deliberately small:

* header lines        ``@Key:<TAB>value`` (or bare ``@Begin`` / ``@End``),
  preserved verbatim and in document position;
* main tiers          ``*CODE:<TAB>token token ... [terminator] [bullet]``;
* dependent tiers     ``%mor:`` / ``%gra:`` etc., kept as opaque strings
  attached to the utterance above them;
* gesture groups      ``[gesture:label]`` with ``label`` matching ``[a-z]+``
  (a ``[gesture::label]`` double colon is accepted and canonicalized);
* other bracket codes ``[/]``, ``[//]``, ... kept as opaque annotation tokens;
* fragments           ``word@u`` and stranded single letters (``w``) other
  than the English one-letter words "a" and "I";
* a fixed filler set  um, uh, er, eh, mm;
* terminators         ``.`` ``?`` ``!`` plus commas, each its own token;
* time bullets        ``\\x15start_end\\x15`` in integer milliseconds. A
  bullet immediately after a gesture group times that gesture; a bullet in
  final position times the utterance.

Long tiers may wrap onto continuation lines that start with a tab.
Everything else is a syntax error: malformed lines are reported with line
and column, never silently dropped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Union

from .core import GestureEvent, GestureLabel, TimeSpan
from .errors import ChatSyntaxError, EncodingError

BULLET = "\x15"
FILLER_WORDS = frozenset({"um", "uh", "er", "eh", "mm"})
FRAGMENT_MARKER = "@u"
# Single letters that are real English words, never stranded fragments.
_ONE_LETTER_WORDS = frozenset({"a", "i"})
PUNCT_CHARS = ".?!,"

DEFAULT_EXTENSION = ".cha"


# ---------------------------------------------------------------------------
# Document model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Word:
    text: str

    def __post_init__(self):
        if not self.text or re.search(r"[\s\[\]]", self.text):
            raise ValueError(f"bad word text: {self.text!r}")


@dataclass(frozen=True)
class Filler:
    text: str

    def __post_init__(self):
        if self.text not in FILLER_WORDS:
            raise ValueError(f"{self.text!r} is not in the filler lexicon")


@dataclass(frozen=True)
class Fragment:
    """A word fragment: either ``xx@u`` or a stranded single letter.

    ``text`` keeps the literal source form including any ``@u`` suffix;
    ``marker`` is ``"@u"`` when that suffix is present, else None.
    """

    text: str
    marker: str | None = None

    @property
    def letters(self) -> str:
        """The letter prefix without the fragment marker."""
        if self.marker and self.text.endswith(self.marker):
            return self.text[: -len(self.marker)]
        return self.text


@dataclass(frozen=True)
class GestureAnnotation:
    label: GestureLabel
    span: TimeSpan | None = None


@dataclass(frozen=True)
class Punct:
    text: str


@dataclass(frozen=True)
class Annotation:
    """An unmodelled bracketed code (e.g. ``[/]``), preserved verbatim."""

    text: str


Token = Union[Word, Filler, Fragment, GestureAnnotation, Punct, Annotation]


@dataclass(frozen=True)
class ParticipantInfo:
    code: str
    role: str = ""
    demographics: dict[str, str] | None = None

    def __post_init__(self):
        if not self.code or not re.fullmatch(r"[A-Z]+", self.code):
            raise ValueError(f"participant code must be uppercase letters, got {self.code!r}")


@dataclass(frozen=True)
class Utterance:
    speaker: str
    tokens: tuple[Token, ...]
    span: TimeSpan | None = None
    tiers: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("utterance must contain at least one token")

    def text(self) -> str:
        """The tier body in canonical form, without the time bullet."""
        return " ".join(_token_source(t) for t in self.tokens)


@dataclass(frozen=True)
class HeaderLine:
    """An ``@`` line kept verbatim; ``after_utterance`` is how many
    utterances preceded it, so serialization can restore its position."""

    key: str
    value: str | None
    after_utterance: int = 0


@dataclass(frozen=True)
class TranscriptFile:
    path: str
    participants: tuple[ParticipantInfo, ...]
    utterances: tuple[Utterance, ...]
    headers: tuple[HeaderLine, ...] = ()


@dataclass(frozen=True)
class ParseDiagnostic:
    path: str
    error: str


@dataclass(frozen=True)
class Corpus:
    files: tuple[TranscriptFile, ...]
    diagnostics: tuple[ParseDiagnostic, ...] = ()


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(r"^@([^:]+?)(:[ \t]*(.*))?$")
_MAIN_TIER_RE = re.compile(r"^\*([A-Z]+):[ \t]*(.*)$")
_DEP_TIER_RE = re.compile(r"^%\w+:")
_GESTURE_RE = re.compile(r"\[gesture::?([a-z]+)\]")
_BULLET_RE = re.compile(rf"{BULLET}(\d+)_(\d+){BULLET}")

_TOKEN_RE = re.compile(
    rf"""(?P<ws>\s+)
    |(?P<gesture>\[gesture::?[a-z]+\])
    |(?P<bracket>\[[^\[\]]*\])
    |(?P<bullet>{BULLET}\d+_\d+{BULLET})
    |(?P<punct>[{re.escape(PUNCT_CHARS)}])
    |(?P<word>[^\s\[\]{BULLET}]+)
    """,
    re.VERBOSE,
)


def classify_word(raw: str) -> Token:
    """Map a bare (non-bracket) token string onto its Token variant."""
    if raw in FILLER_WORDS:
        return Filler(raw)
    if raw.lower().endswith(FRAGMENT_MARKER):
        return Fragment(raw, FRAGMENT_MARKER)
    if len(raw) == 1 and raw.isalpha() and raw.lower() not in _ONE_LETTER_WORDS:
        return Fragment(raw, None)
    return Word(raw)


def is_fragment_text(raw: str) -> bool:
    """True when a plain word string looks like a fragment (``xx@u`` / stranded letter)."""
    return isinstance(classify_word(raw), Fragment)


@dataclass
class _RawTier:
    line_no: int
    text: str


def _logical_lines(source_text: str) -> list[_RawTier]:
    """Join tab-continuation lines; returns (first line number, full text) pairs."""
    out: list[_RawTier] = []
    for no, line in enumerate(source_text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        if line[0] == "\t":
            if not out:
                raise ChatSyntaxError(no, 1, "continuation line with nothing to continue")
            out[-1].text += " " + line.strip()
        else:
            out.append(_RawTier(no, line.rstrip()))
    return out


def _parse_participants_header(value: str) -> list[ParticipantInfo]:
    infos = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        code, _, role = part.partition(" ")
        infos.append(ParticipantInfo(code=code, role=role.strip()))
    return infos


# Positional fields of an @ID header, per TalkBank convention.
_ID_FIELDS = ("language", "corpus", "code", "age", "sex", "group", "ses", "role", "education", "custom")


def _parse_id_header(value: str) -> tuple[str, dict[str, str]]:
    fields_ = value.split("|")
    named = {name: fields_[i].strip() for i, name in enumerate(_ID_FIELDS) if i < len(fields_)}
    code = named.pop("code", "")
    named.pop("role", None)
    demo = {k: v for k, v in named.items() if v}
    return code, demo


def _tokenize_body(body: str, line_no: int, col_offset: int) -> list[tuple[str, str, int]]:
    """Scan an utterance body into (kind, text, column) triples."""
    items = []
    pos = 0
    while pos < len(body):
        m = _TOKEN_RE.match(body, pos)
        if m is None:
            raise ChatSyntaxError(line_no, col_offset + pos + 1, f"unexpected character {body[pos]!r}")
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        items.append((kind, m.group(), m.start() + col_offset + 1))
    return items


def _build_utterance(speaker: str, body: str, line_no: int, col_offset: int) -> Utterance:
    raw = _tokenize_body(body, line_no, col_offset)
    tokens: list[Token] = []
    span: TimeSpan | None = None

    for idx, (kind, text, col) in enumerate(raw):
        if kind == "gesture":
            label = GestureLabel(_GESTURE_RE.fullmatch(text).group(1))
            tokens.append(GestureAnnotation(label))
        elif kind == "bracket":
            tokens.append(Annotation(text))
        elif kind == "punct":
            tokens.append(Punct(text))
        elif kind == "word":
            tokens.append(classify_word(text))
        elif kind == "bullet":
            start, end = map(int, _BULLET_RE.fullmatch(text).groups())
            try:
                bullet_span = TimeSpan(start, end)
            except ValueError as exc:
                raise ChatSyntaxError(line_no, col, str(exc)) from None
            if tokens and isinstance(tokens[-1], GestureAnnotation) and tokens[-1].span is None:
                tokens[-1] = replace(tokens[-1], span=bullet_span)
            elif idx == len(raw) - 1:
                span = bullet_span
            else:
                raise ChatSyntaxError(line_no, col, "time bullet must follow a gesture group or end the line")

    if not tokens:
        raise ChatSyntaxError(line_no, col_offset + 1, "utterance has no tokens")
    return Utterance(speaker=speaker, tokens=tuple(tokens), span=span)


def parse_file(source_text: str, path: str = "<string>") -> TranscriptFile:
    """Parse one CHAT document from text already decoded as UTF-8.

    Raises ChatSyntaxError on the first malformed line. Participants named
    only on main tiers (absent from ``@Participants``) are registered with
    an empty role so the speaker/participant invariant always holds.
    """
    headers: list[HeaderLine] = []
    utterances: list[Utterance] = []
    participants: dict[str, ParticipantInfo] = {}
    demographics: dict[str, dict[str, str]] = {}

    for tier in _logical_lines(source_text):
        text = tier.text
        if text.startswith("@"):
            m = _HEADER_RE.match(text)
            if m is None:
                raise ChatSyntaxError(tier.line_no, 1, f"malformed header line: {text!r}")
            key, value = m.group(1), m.group(3)
            if m.group(2) is None:
                value = None
            headers.append(HeaderLine(key, value, after_utterance=len(utterances)))
            if key == "Participants" and value:
                for info in _parse_participants_header(value):
                    participants.setdefault(info.code, info)
            elif key == "ID" and value:
                code, demo = _parse_id_header(value)
                if code:
                    demographics[code] = demo
        elif text.startswith("*"):
            m = _MAIN_TIER_RE.match(text)
            if m is None:
                raise ChatSyntaxError(tier.line_no, 1, f"malformed main tier: {text!r}")
            speaker, body = m.group(1), m.group(2)
            utterances.append(_build_utterance(speaker, body, tier.line_no, m.start(2)))
            participants.setdefault(speaker, ParticipantInfo(code=speaker))
        elif text.startswith("%"):
            if not _DEP_TIER_RE.match(text):
                raise ChatSyntaxError(tier.line_no, 1, f"malformed dependent tier: {text!r}")
            if not utterances:
                raise ChatSyntaxError(tier.line_no, 1, "dependent tier before any utterance")
            last = utterances[-1]
            utterances[-1] = replace(last, tiers=last.tiers + (text,))
        else:
            raise ChatSyntaxError(tier.line_no, 1, f"unrecognized line start: {text[:1]!r}")

    resolved = tuple(
        replace(info, demographics=demographics.get(code) or info.demographics)
        for code, info in participants.items()
    )
    return TranscriptFile(
        path=path,
        participants=resolved,
        utterances=tuple(utterances),
        headers=tuple(headers),
    )


def parse_path(path: str | Path) -> TranscriptFile:
    """Read and parse one file; rejects anything that is not valid UTF-8."""
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(f"{path}: not valid UTF-8 ({exc})") from None
    return parse_file(text, path=str(path))


def parse_corpus(root: str | Path, extension: str = DEFAULT_EXTENSION) -> Corpus:
    """Parse every ``*<extension>`` file under ``root``, recursively.

    Files are visited in lexicographic path order. Per-file failures become
    diagnostics; they never abort the rest of the corpus.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root is not a readable directory: {root}")
    files: list[TranscriptFile] = []
    diagnostics: list[ParseDiagnostic] = []
    for path in sorted(root.rglob(f"*{extension}"), key=lambda p: p.as_posix()):
        try:
            files.append(parse_path(path))
        except (ChatSyntaxError, EncodingError) as exc:
            diagnostics.append(ParseDiagnostic(path=str(path), error=str(exc)))
    return Corpus(files=tuple(files), diagnostics=tuple(diagnostics))


def extract_gesture_events(file: TranscriptFile) -> list[GestureEvent]:
    """One event per gesture token, in document order.

    An annotation's own bullet wins; otherwise the enclosing utterance span
    is inherited; otherwise the event has no span.
    """
    events = []
    for idx, utt in enumerate(file.utterances):
        for token in utt.tokens:
            if isinstance(token, GestureAnnotation):
                events.append(
                    GestureEvent(
                        label=token.label,
                        span=token.span or utt.span,
                        source="annotation",
                        utterance_index=idx,
                    )
                )
    return events


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _token_source(token: Token) -> str:
    if isinstance(token, GestureAnnotation):
        text = f"[gesture:{token.label.text}]"
        if token.span is not None:
            text += f" {BULLET}{token.span.start_ms}_{token.span.end_ms}{BULLET}"
        return text
    return token.text


def serialize(file: TranscriptFile) -> str:
    """Emit the canonical text form; ``parse_file(serialize(f))`` == ``f``."""
    by_position: dict[int, list[HeaderLine]] = {}
    for header in file.headers:
        by_position.setdefault(header.after_utterance, []).append(header)

    def header_lines(position: int) -> Iterable[str]:
        for h in by_position.get(position, []):
            yield f"@{h.key}" if h.value is None else f"@{h.key}:\t{h.value}"

    lines: list[str] = list(header_lines(0))
    for idx, utt in enumerate(file.utterances):
        line = f"*{utt.speaker}:\t{utt.text()}"
        if utt.span is not None:
            line += f" {BULLET}{utt.span.start_ms}_{utt.span.end_ms}{BULLET}"
        lines.append(line)
        lines.extend(utt.tiers)
        lines.extend(header_lines(idx + 1))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# JSON view
# ---------------------------------------------------------------------------

_TOKEN_KINDS = {
    Word: "word",
    Filler: "filler",
    Fragment: "fragment",
    GestureAnnotation: "gesture",
    Punct: "punct",
    Annotation: "annotation",
}


def token_to_json(token: Token) -> dict:
    kind = _TOKEN_KINDS[type(token)]
    if isinstance(token, GestureAnnotation):
        out: dict = {"type": kind, "label": token.label.text}
        if token.span is not None:
            out["start_ms"] = token.span.start_ms
            out["end_ms"] = token.span.end_ms
        return out
    out = {"type": kind, "text": token.text}
    if isinstance(token, Fragment) and token.marker:
        out["marker"] = token.marker
    return out


def token_from_json(obj: dict) -> Token:
    kind = obj["type"]
    if kind == "gesture":
        span = TimeSpan(obj["start_ms"], obj["end_ms"]) if "start_ms" in obj else None
        return GestureAnnotation(GestureLabel(obj["label"]), span)
    if kind == "word":
        return Word(obj["text"])
    if kind == "filler":
        return Filler(obj["text"])
    if kind == "fragment":
        return Fragment(obj["text"], obj.get("marker"))
    if kind == "punct":
        return Punct(obj["text"])
    if kind == "annotation":
        return Annotation(obj["text"])
    raise ValueError(f"unknown token type {kind!r}")


def transcript_to_json(file: TranscriptFile) -> dict:
    return {
        "path": file.path,
        "participants": [
            {"code": p.code, "role": p.role, "demographics": p.demographics or {}}
            for p in file.participants
        ],
        "headers": [
            {"key": h.key, "value": h.value, "after_utterance": h.after_utterance}
            for h in file.headers
        ],
        "utterances": [
            {
                "speaker": u.speaker,
                "tokens": [token_to_json(t) for t in u.tokens],
                **({"start_ms": u.span.start_ms, "end_ms": u.span.end_ms} if u.span else {}),
                **({"tiers": list(u.tiers)} if u.tiers else {}),
            }
            for u in file.utterances
        ],
    }


def transcript_from_json(obj: dict) -> TranscriptFile:
    return TranscriptFile(
        path=obj["path"],
        participants=tuple(
            ParticipantInfo(p["code"], p.get("role", ""), p.get("demographics") or None)
            for p in obj["participants"]
        ),
        utterances=tuple(
            Utterance(
                speaker=u["speaker"],
                tokens=tuple(token_from_json(t) for t in u["tokens"]),
                span=TimeSpan(u["start_ms"], u["end_ms"]) if "start_ms" in u else None,
                tiers=tuple(u.get("tiers", ())),
            )
            for u in obj["utterances"]
        ),
        headers=tuple(
            HeaderLine(h["key"], h["value"], h["after_utterance"]) for h in obj["headers"]
        ),
    )
