"""Prompt construction for every LLM call the engine makes.

All natural-language material lives in plain-text template files under
``templates/`` with ``{name}`` placeholders, plus two JSON data files under
``data/`` (the few-shot example registry and the Likert rubrics). This module
loads those resources once and exposes typed render operations that return a
:class:`RenderedPrompt` ready for the gateway.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from ..taxonomy import ERROR_ORDER, TAXONOMY, ErrorCode, PromptingMode

__all__ = [
    "PromptError",
    "TemplateError",
    "RegistryIncomplete",
    "MissingTranscript",
    "EmptyFeedback",
    "EmptyInput",
    "TooFewCandidates",
    "Severity",
    "FewShotExample",
    "LikertDimension",
    "PromptPurpose",
    "RenderedPrompt",
    "PromptLibrary",
    "MIN_RANK_CANDIDATES",
    "MAX_RANK_CANDIDATES",
]


class PromptError(ValueError):
    """Base class for prompt rendering failures."""


class TemplateError(PromptError):
    """A template referenced a placeholder with no supplied value."""


class RegistryIncomplete(PromptError):
    """The few-shot registry lacks a minor or major example for a type."""


class MissingTranscript(PromptError):
    """A render needs the transcript but none was provided."""


class EmptyFeedback(PromptError):
    """Consolidation or refinement was asked to run on empty feedback."""


class EmptyInput(PromptError):
    """A required text input (summary or transcript) was empty."""


class TooFewCandidates(PromptError):
    """Ranking needs at least two candidate summaries."""


MIN_RANK_CANDIDATES = 2
MAX_RANK_CANDIDATES = 25

_PLACEHOLDER_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")


class Severity(str, Enum):
    MINOR = "minor"
    MAJOR = "major"

    def __str__(self) -> str:
        return self.value


class LikertDimension(str, Enum):
    RELEVANCE = "REL"
    INFORMATIVENESS = "INF"
    CONCISENESS = "CON"
    COHERENCE = "COH"

    def __str__(self) -> str:
        return self.value


class PromptPurpose(str, Enum):
    IDENTIFY = "identify"
    CONSOLIDATE = "consolidate"
    REFINE = "refine"
    RANK = "rank"
    LIKERT = "likert"
    CORRECTION = "correction"
    REFERENCE = "reference"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class FewShotExample:
    """One worked example for an error type at a given severity."""

    error: ErrorCode
    severity: Severity
    transcript_excerpt: str
    predicted_summary: str
    explanation: str

    @classmethod
    def from_dict(cls, record: Mapping[str, str]) -> "FewShotExample":
        return cls(
            error=ErrorCode(record["error"]),
            severity=Severity(record["severity"]),
            transcript_excerpt=record["transcript_excerpt"],
            predicted_summary=record["predicted_summary"],
            explanation=record["explanation"],
        )


@dataclass(frozen=True)
class RenderedPrompt:
    """A fully expanded prompt pair, tagged with its purpose."""

    system: str
    user: str
    purpose: PromptPurpose


def _fill(template: str, values: Mapping[str, str]) -> str:
    """Expand every ``{name}`` placeholder in a single pass.

    Substituted values are never rescanned, so braces inside user content
    cannot trigger a second expansion.
    """

    def replace(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in values:
            raise TemplateError(f"no value supplied for placeholder {{{name}}}")
        return values[name]

    return _PLACEHOLDER_RE.sub(replace, template)


def _quoted(text: str) -> str:
    return f'"""{text}"""'


def _require(text: str, what: str) -> str:
    if not text or not text.strip():
        raise EmptyInput(f"{what} must be non-empty")
    return text


_SECONDARY_COT = (
    "Your secondary task: \"\"\"Let's think step by step and describe every "
    "step you consider which leads you to the result that an error occurs "
    "or not.\"\"\""
)

_PRIMARY_MULTI = (
    "Your primary task: \"\"\"Please provide feedback on the existence of "
    "the error. Does this passage contain an error? Answer 'yes' or "
    "'no'.\"\"\""
)

_PRIMARY_SINGLE = (
    "Your primary task: \"\"\"Please provide feedback on the existence of "
    "each error type defined above. For every error type, does this passage "
    "contain an error of that type? Answer 'yes' or 'no' for each.\"\"\""
)

_TRANSCRIPT_LOOKUP = (
    'If required, you can use the original transcript for look up: '
    '"""{transcript}"""\n'
)


class PromptLibrary:
    """Loads templates and few-shot data, renders every prompt family."""

    def __init__(
        self,
        fewshot: Sequence[FewShotExample],
        rubrics: Mapping[str, Mapping[str, str]] | None = None,
        template_dir: Path | None = None,
    ) -> None:
        self._templates: dict[str, str] = {}
        self._template_dir = template_dir
        self._examples: dict[tuple[ErrorCode, Severity], FewShotExample] = {}
        for example in fewshot:
            self._examples[(example.error, example.severity)] = example
        self._validate_registry()
        self._rubrics = dict(rubrics) if rubrics is not None else _load_rubrics()
        for code in LikertDimension:
            if code.value not in self._rubrics:
                raise RegistryIncomplete(f"no Likert rubric for dimension {code.value}")

    @classmethod
    def default(cls) -> "PromptLibrary":
        """Library backed by the bundled registry and rubrics."""
        return cls(fewshot=_load_fewshot(), rubrics=_load_rubrics())

    def _validate_registry(self) -> None:
        missing = [
            f"{code}/{severity}"
            for code in ERROR_ORDER
            for severity in (Severity.MINOR, Severity.MAJOR)
            if (code, severity) not in self._examples
        ]
        if missing:
            raise RegistryIncomplete(
                "few-shot registry is missing examples: " + ", ".join(missing)
            )

    def _template(self, name: str) -> str:
        if name not in self._templates:
            if self._template_dir is not None:
                text = (self._template_dir / f"{name}.txt").read_text(encoding="utf-8")
            else:
                ref = resources.files(__package__) / "templates" / f"{name}.txt"
                text = ref.read_text(encoding="utf-8")
            self._templates[name] = text.strip("\n")
        return self._templates[name]

    def example(self, error: ErrorCode, severity: Severity) -> FewShotExample:
        return self._examples[(error, severity)]

    def _example_text(self, error: ErrorCode, severity: Severity) -> str:
        ex = self._examples[(error, severity)]
        return _fill(
            self._template("fewshot_example"),
            {
                "transcript_excerpt": ex.transcript_excerpt,
                "predicted_summary": ex.predicted_summary,
                "explanation": ex.explanation,
            },
        )

    def _definition_block(self, error: ErrorCode) -> str:
        entry = TAXONOMY[error]
        definition = f"{entry.name} ({entry.code}): {entry.definition}"
        return _fill(
            self._template("identify_definition_block"),
            {"error_definition": definition},
        )

    def _examples_block(self, error: ErrorCode) -> str:
        return _fill(
            self._template("identify_examples_block"),
            {
                "minor_example": self._example_text(error, Severity.MINOR),
                "major_example": self._example_text(error, Severity.MAJOR),
            },
        )

    def render_identify(
        self,
        error: ErrorCode | None,
        summary: str,
        transcript: str | None = None,
        prompting: PromptingMode = PromptingMode.COT,
    ) -> RenderedPrompt:
        """Identification prompt for one error type or, with ``None``, all nine.

        The single error form asks for one ``VERDICT: <yes|no>`` sentinel; the
        all-nine form asks for one ``VERDICT[CODE]: <yes|no>`` line per type.
        Raises :class:`MissingTranscript` when any requested type needs the
        transcript and none is given.
        """
        _require(summary, "summary")
        errors: tuple[ErrorCode, ...] = ERROR_ORDER if error is None else (error,)
        needs_transcript = any(TAXONOMY[code].requires_transcript for code in errors)
        if needs_transcript and transcript is None:
            names = ", ".join(str(code) for code in errors if TAXONOMY[code].requires_transcript)
            raise MissingTranscript(f"transcript required to identify: {names}")
        cot = prompting is PromptingMode.COT

        parts = [self._template("identify_role")]
        if error is None:
            for code in errors:
                parts.append(self._definition_block(code))
                parts.append(self._examples_block(code))
            parts.append(self._template("identify_steps"))
        else:
            parts.append(self._definition_block(error))
            parts.append(self._template("identify_steps"))
            parts.append(self._examples_block(error))
        if cot:
            parts.append(_SECONDARY_COT)
        parts.append(_PRIMARY_SINGLE if error is None else _PRIMARY_MULTI)
        system = "\n\n".join(parts)

        if error is None:
            verdict_lines = "\n".join(f"VERDICT[{code}]: <yes|no>" for code in errors)
            fmt = f"<your reasoning per error type>\n{verdict_lines}" if cot else verdict_lines
        else:
            fmt = "<your step-by-step reasoning>\nVERDICT: <yes|no>" if cot else "VERDICT: <yes|no>"

        transcript_block = ""
        if transcript is not None:
            _require(transcript, "transcript")
            transcript_block = _fill(_TRANSCRIPT_LOOKUP, {"transcript": transcript})
        user = _fill(
            self._template("identify_user"),
            {"summary": summary, "transcript_block": transcript_block, "format": fmt},
        )
        return RenderedPrompt(system=system, user=user, purpose=PromptPurpose.IDENTIFY)

    def render_correction(
        self,
        error: ErrorCode,
        summary: str,
        transcript: str | None = None,
    ) -> RenderedPrompt:
        """Follow-up prompt asking how to fix one detected error."""
        _require(summary, "summary")
        entry = TAXONOMY[error]
        if entry.requires_transcript and transcript is None:
            raise MissingTranscript(f"transcript required to correct {error}")
        definition = f"{entry.name} ({entry.code}): {entry.definition}"
        system = _fill(
            self._template("correction_system"), {"error_definition": definition}
        )
        transcript_block = ""
        if transcript is not None:
            transcript_block = _fill(_TRANSCRIPT_LOOKUP, {"transcript": transcript})
        user = _fill(
            self._template("correction_user"),
            {"summary": summary, "transcript_block": transcript_block},
        )
        return RenderedPrompt(system=system, user=user, purpose=PromptPurpose.CORRECTION)

    def render_consolidate(self, feedback: str) -> RenderedPrompt:
        """Prompt turning a verbose feedback report into an edit plan."""
        if not feedback or not feedback.strip():
            raise EmptyFeedback("cannot consolidate empty feedback")
        return RenderedPrompt(
            system=self._template("consolidate_system"),
            user=_fill(self._template("consolidate_user"), {"feedback": feedback}),
            purpose=PromptPurpose.CONSOLIDATE,
        )

    def render_refine(self, summary: str, feedback: str) -> RenderedPrompt:
        """Prompt asking the refiner to improve ``summary`` given ``feedback``."""
        _require(summary, "summary")
        if not feedback or not feedback.strip():
            raise EmptyFeedback("cannot refine against empty feedback")
        return RenderedPrompt(
            system=self._template("refine_system"),
            user=_fill(
                self._template("refine_user"),
                {"summary": summary, "feedback": feedback},
            ),
            purpose=PromptPurpose.REFINE,
        )

    def render_rank(self, transcript: str, candidates: Sequence[str]) -> RenderedPrompt:
        """K-way ranking prompt; candidates are numbered 1..K in given order."""
        _require(transcript, "transcript")
        k = len(candidates)
        if k < MIN_RANK_CANDIDATES:
            raise TooFewCandidates(f"ranking needs at least 2 candidates, got {k}")
        if k > MAX_RANK_CANDIDATES:
            raise PromptError(f"ranking supports at most {MAX_RANK_CANDIDATES} candidates, got {k}")
        for i, text in enumerate(candidates, start=1):
            _require(text, f"candidate {i}")
        blocks = "\n".join(
            f"Summary {i}: {_quoted(text)}" for i, text in enumerate(candidates, start=1)
        )
        system = _fill(self._template("rank_system"), {"k_worst": str(k)})
        user = _fill(
            self._template("rank_user"),
            {"transcript": transcript, "candidate_blocks": blocks},
        )
        return RenderedPrompt(system=system, user=user, purpose=PromptPurpose.RANK)

    def render_likert(
        self, dimension: LikertDimension, summary: str, transcript: str
    ) -> RenderedPrompt:
        """1..5 quality judgment prompt for one evaluation dimension."""
        _require(summary, "summary")
        _require(transcript, "transcript")
        entry = self._rubrics[dimension.value]
        user = _fill(
            self._template("likert_user"),
            {
                "transcript": transcript,
                "summary": summary,
                "dimension_name": entry["name"],
                "rubric": entry["rubric"],
            },
        )
        return RenderedPrompt(
            system=self._template("likert_system"), user=user, purpose=PromptPurpose.LIKERT
        )

    def render_reference_summary(self, transcript: str) -> RenderedPrompt:
        """Prompt producing the from-scratch reference summary."""
        _require(transcript, "transcript")
        return RenderedPrompt(
            system=self._template("reference_summarize_system"),
            user=_fill(
                self._template("reference_summarize_user"), {"transcript": transcript}
            ),
            purpose=PromptPurpose.REFERENCE,
        )

    def render_reference_refine(self, summary: str, transcript: str) -> RenderedPrompt:
        """Prompt producing the feedback-free refinement reference."""
        _require(summary, "summary")
        _require(transcript, "transcript")
        return RenderedPrompt(
            system=self._template("reference_refine_system"),
            user=_fill(
                self._template("reference_refine_user"),
                {"summary": summary, "transcript": transcript},
            ),
            purpose=PromptPurpose.REFERENCE,
        )


def _load_fewshot() -> list[FewShotExample]:
    ref = resources.files(__package__) / "data" / "fewshot.json"
    records = json.loads(ref.read_text(encoding="utf-8"))
    return [FewShotExample.from_dict(record) for record in records]


def _load_rubrics() -> dict[str, dict[str, str]]:
    ref = resources.files(__package__) / "data" / "likert_rubrics.json"
    return json.loads(ref.read_text(encoding="utf-8"))
