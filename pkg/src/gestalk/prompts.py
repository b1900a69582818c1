"""Prompt templates for gesture recognition and utterance rewriting.

Templates are plain text with ``$name`` placeholders (``string.Template``
syntax). The gesture template receives ``$labels``; the rewrite template
receives ``$words`` and ``$gestures``. Both default templates can be
overridden from files so prompt changes never require a code change; the
bundle digest records exactly which text was sent to a model.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from string import Template

from .core import DEFAULT_GESTURE_LABELS, GestureEvent, GestureLabel
from .errors import TemplateError

NO_GESTURE = "none"

DEFAULT_GESTURE_TEMPLATE = """\
You are watching still frames sampled from a short video of a person \
speaking. The person may perform a hand gesture that acts out an action.

Decide which single action, if any, the hands are performing. Choose from \
exactly these labels:

$labels

Reply with exactly one label from the list, or the word "none" if no such \
gesture is visible. Reply with that single word and nothing else.
"""

DEFAULT_REWRITE_TEMPLATE = """\
A person with a language impairment is describing what they are doing. \
Their speech is fragmented, so an automatic transcript of it is unreliable, \
but their hand gestures carry part of the meaning.

Recognized words (low-confidence words already removed):
$words

Gestures performed while speaking:
$gestures

Rewrite the utterance as the short sentence the person most plausibly \
meant. Use the gesture to restore any action word the speech is missing. \
Keep every content word that is already present, do not invent objects \
that were never mentioned, and drop hesitations. Reply with the corrected \
utterance only.
"""


def _substitute(template: str, mapping: dict[str, str], what: str) -> str:
    try:
        return Template(template).substitute(mapping)
    except KeyError as exc:
        raise TemplateError(
            f"{what}: unknown placeholder ${exc.args[0]} (available: "
            + ", ".join(sorted(mapping)) + ")"
        ) from exc
    except ValueError as exc:
        raise TemplateError(f"{what}: malformed placeholder: {exc}") from exc


@dataclass(frozen=True)
class PromptBundle:
    """The pair of templates used by one pipeline run."""

    gesture_template: str = DEFAULT_GESTURE_TEMPLATE
    rewrite_template: str = DEFAULT_REWRITE_TEMPLATE

    @classmethod
    def from_dir(cls, path: str | Path) -> "PromptBundle":
        """Load ``gesture.txt`` and ``rewrite.txt`` from a directory.

        A missing file falls back to the built-in default for that template.
        """
        base = Path(path)
        if not base.is_dir():
            raise TemplateError(f"prompt directory not found: {base}")
        gesture = base / "gesture.txt"
        rewrite = base / "rewrite.txt"
        return cls(
            gesture_template=(
                gesture.read_text(encoding="utf-8")
                if gesture.is_file()
                else DEFAULT_GESTURE_TEMPLATE
            ),
            rewrite_template=(
                rewrite.read_text(encoding="utf-8")
                if rewrite.is_file()
                else DEFAULT_REWRITE_TEMPLATE
            ),
        )

    def digest(self) -> str:
        """Stable content hash of both templates, for run provenance."""
        h = hashlib.sha256()
        h.update(self.gesture_template.encode("utf-8"))
        h.update(b"\x00")
        h.update(self.rewrite_template.encode("utf-8"))
        return h.hexdigest()

    def build_gesture_prompt(
        self, labels: tuple[GestureLabel, ...] = DEFAULT_GESTURE_LABELS
    ) -> str:
        if not labels:
            raise TemplateError("gesture prompt needs at least one candidate label")
        listing = "\n".join(f"- {label.text}" for label in labels)
        return _substitute(self.gesture_template, {"labels": listing}, "gesture template")

    def build_rewrite_prompt(
        self, words: list[str], gestures: list[GestureEvent]
    ) -> str:
        rendered_words = " ".join(words) if words else "(no words survived filtering)"
        if gestures:
            lines = []
            for event in gestures:
                if event.span is not None:
                    lines.append(
                        f"- {event.label.text} "
                        f"({event.span.start_ms}-{event.span.end_ms} ms)"
                    )
                else:
                    lines.append(f"- {event.label.text}")
            rendered_gestures = "\n".join(lines)
        else:
            rendered_gestures = "(none)"
        return _substitute(
            self.rewrite_template,
            {"words": rendered_words, "gestures": rendered_gestures},
            "rewrite template",
        )
