"""Feedback assembly and transfer.

Turns identification verdicts into the feedback payload the refiner will see.
The report always carries the essential part (existence of each detected error
plus a short note) and, depending on configuration, chain-of-thought
explanations, correction suggestions, and the transcript. Transfer either
passes the serialized report through unchanged or asks an intermediate LLM to
consolidate it into an Add/Remove/Rephrase/Simplify/Keep edit plan.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .gateway import write_json_atomic
from .identify import IdentificationResult, Identifier
from .prompts import PromptLibrary
from .taxonomy import (
    ERROR_ORDER,
    TAXONOMY,
    ErrorCode,
    FeedbackSource,
    ProtocolConfig,
    PromptingMode,
    Sample,
    TransferMode,
)

__all__ = [
    "MissingCoT",
    "PlanParseFailure",
    "EssentialNote",
    "FeedbackReport",
    "EditPlan",
    "TransferPayload",
    "FeedbackBuilder",
    "serialize_feedback",
    "parse_edit_plan",
    "feedback_path",
    "save_payload",
    "load_payload",
]

logger = logging.getLogger(__name__)


class MissingCoT(ValueError):
    """CoT blocks were requested but identification ran in direct mode."""


class PlanParseFailure(ValueError):
    """The consolidator response contained none of the plan headers."""


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
# Headers may sit at a line start, after whitespace, or inside markdown
# emphasis ("**Add:**"); list bullets around items are stripped separately.
_PLAN_HEADER_RE = re.compile(
    r"(?i)(?:^|(?<=[\s*_>-]))(add|remove|rephrase|simplify|keep)\s*:", re.MULTILINE
)
_PLAN_SLOTS = ("add", "remove", "rephrase", "simplify", "keep")
_ITEM_TRIM = " \t-*_•"


def _first_sentence(text: str) -> str:
    stripped = text.strip()
    if not stripped:
        return stripped
    return _SENTENCE_SPLIT.split(stripped, maxsplit=1)[0].strip()


@dataclass(frozen=True)
class EssentialNote:
    """Existence verdict plus a one-line note for a single error type."""

    error: ErrorCode
    detected: bool
    short_note: str = ""

    def to_dict(self) -> dict:
        return {
            "error": str(self.error),
            "detected": self.detected,
            "short_note": self.short_note,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EssentialNote":
        return cls(
            error=ErrorCode(data["error"]),
            detected=bool(data["detected"]),
            short_note=data.get("short_note", ""),
        )


@dataclass
class FeedbackReport:
    """Structured feedback for one sample, one configuration."""

    sample_id: str
    essential: list[EssentialNote]
    cot_blocks: dict[ErrorCode, str] | None = None
    corrections: dict[ErrorCode, str] | None = None
    include_transcript: bool = False

    def detected(self) -> tuple[ErrorCode, ...]:
        return tuple(n.error for n in self.essential if n.detected)

    @property
    def any_detected(self) -> bool:
        return any(n.detected for n in self.essential)

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "essential": [n.to_dict() for n in self.essential],
            "cot_blocks": (
                {str(k): v for k, v in self.cot_blocks.items()}
                if self.cot_blocks is not None
                else None
            ),
            "corrections": (
                {str(k): v for k, v in self.corrections.items()}
                if self.corrections is not None
                else None
            ),
            "include_transcript": self.include_transcript,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FeedbackReport":
        def decode(block: Mapping | None) -> dict[ErrorCode, str] | None:
            if block is None:
                return None
            return {ErrorCode(k): v for k, v in block.items()}

        return cls(
            sample_id=data["sample_id"],
            essential=[EssentialNote.from_dict(n) for n in data["essential"]],
            cot_blocks=decode(data.get("cot_blocks")),
            corrections=decode(data.get("corrections")),
            include_transcript=bool(data.get("include_transcript", False)),
        )


@dataclass
class EditPlan:
    """Consolidated editing instructions in the five-slot format."""

    add: list[str] = field(default_factory=list)
    remove: list[str] = field(default_factory=list)
    rephrase: list[str] = field(default_factory=list)
    simplify: list[str] = field(default_factory=list)
    keep: list[str] = field(default_factory=list)
    raw: str = ""

    def slots(self) -> dict[str, list[str]]:
        return {
            "add": self.add,
            "remove": self.remove,
            "rephrase": self.rephrase,
            "simplify": self.simplify,
            "keep": self.keep,
        }

    def to_dict(self) -> dict:
        out: dict = dict(self.slots())
        out["raw"] = self.raw
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "EditPlan":
        return cls(
            add=list(data.get("add", [])),
            remove=list(data.get("remove", [])),
            rephrase=list(data.get("rephrase", [])),
            simplify=list(data.get("simplify", [])),
            keep=list(data.get("keep", [])),
            raw=data.get("raw", ""),
        )


@dataclass
class TransferPayload:
    """What the refiner actually receives."""

    mode: TransferMode
    feedback_text: str
    edit_plan: EditPlan | None = None
    transcript: str | None = None
    consolidation_failed: bool = False

    def rendered_feedback(self) -> str:
        """Feedback text with the transcript section appended when carried."""
        if self.transcript is None:
            return self.feedback_text
        return (
            f"{self.feedback_text}\n\n"
            f'Original transcript for reference: """{self.transcript}"""'
        )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "feedback_text": self.feedback_text,
            "edit_plan": self.edit_plan.to_dict() if self.edit_plan else None,
            "transcript": self.transcript,
            "consolidation_failed": self.consolidation_failed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "TransferPayload":
        plan = data.get("edit_plan")
        return cls(
            mode=TransferMode(data["mode"]),
            feedback_text=data["feedback_text"],
            edit_plan=EditPlan.from_dict(plan) if plan else None,
            transcript=data.get("transcript"),
            consolidation_failed=bool(data.get("consolidation_failed", False)),
        )


def serialize_feedback(report: FeedbackReport) -> str:
    """Deterministic plain-text rendering of a feedback report.

    One section per detected error in taxonomy order with an EXISTS line and
    optional EXPLANATION and CORRECTION blocks; undetected types collapse to a
    single closing line.
    """
    by_code = {n.error: n for n in report.essential}
    sections: list[str] = []
    clean: list[ErrorCode] = []
    for code in ERROR_ORDER:
        note = by_code.get(code)
        if note is None or not note.detected:
            clean.append(code)
            continue
        lines = [f"[{code}] {TAXONOMY[code].name}", "EXISTS: yes"]
        if note.short_note:
            lines.append(f"NOTE: {note.short_note}")
        if report.cot_blocks and code in report.cot_blocks:
            lines.append(f"EXPLANATION:\n{report.cot_blocks[code]}")
        if report.corrections and code in report.corrections:
            lines.append(f"CORRECTION:\n{report.corrections[code]}")
        sections.append("\n".join(lines))
    if not sections:
        return "No errors were detected in the summary."
    closing = (
        "No errors of type " + ", ".join(str(c) for c in clean) + " were detected."
        if clean
        else "All nine error types were detected."
    )
    sections.append(closing)
    return "\n\n".join(sections)


def parse_edit_plan(raw: str) -> EditPlan:
    """Split a consolidator response on the five plan headers.

    Headers are case-insensitive and may appear in any order, at line starts
    or inline after whitespace; each is optional. Text under a header becomes
    one item per line or sentence. Raises :class:`PlanParseFailure` when no
    header is present at all.
    """
    matches = list(_PLAN_HEADER_RE.finditer(raw))
    if not matches:
        raise PlanParseFailure("no Add/Remove/Rephrase/Simplify/Keep header found")
    plan = EditPlan(raw=raw)
    slots = plan.slots()
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(raw)
        chunk = raw[m.end() : end].strip()
        items: list[str] = []
        for line in chunk.splitlines():
            for sentence in _SENTENCE_SPLIT.split(line.strip(_ITEM_TRIM)):
                item = sentence.strip()
                if item.startswith("<") and item.endswith(">"):
                    item = item[1:-1].strip()
                if item:
                    items.append(item)
        slots[m.group(1).lower()].extend(items)
    return plan


class FeedbackBuilder:
    """Assembles reports and runs the transfer protocol."""

    def __init__(self, identifier: Identifier, library: PromptLibrary | None = None) -> None:
        self.identifier = identifier
        self.library = library or identifier.library

    def assemble_feedback(
        self,
        result: IdentificationResult,
        cfg: ProtocolConfig,
        sample: Sample,
    ) -> FeedbackReport:
        """Build the feedback report for one identification result.

        Corrections are elicited lazily (one extra call per detected error)
        when the configuration asks for them and the verdict has none yet.
        Raises :class:`MissingCoT` when CoT blocks are requested but the
        detection ran with direct prompting.
        """
        wants_cot = FeedbackSource.COT_EXPLANATION in cfg.fp_sources
        if wants_cot and result.prompting is PromptingMode.DIRECT:
            raise MissingCoT(
                "feedback requests CoT explanations but identification ran direct"
            )

        essential: list[EssentialNote] = []
        cot_blocks: dict[ErrorCode, str] = {}
        corrections: dict[ErrorCode, str] = {}
        for code in ERROR_ORDER:
            verdict = result.verdicts[code]
            if not verdict.detected:
                essential.append(EssentialNote(error=code, detected=False))
                continue
            note = (
                _first_sentence(verdict.cot_explanation)
                if verdict.cot_explanation
                else f"{code}: detected"
            )
            essential.append(EssentialNote(error=code, detected=True, short_note=note))
            if wants_cot and verdict.cot_explanation:
                cot_blocks[code] = verdict.cot_explanation
            if FeedbackSource.CORRECTION in cfg.fp_sources:
                if verdict.correction is None:
                    verdict.correction = self.identifier.elicit_correction(
                        sample, code, verdict
                    )
                corrections[code] = verdict.correction

        return FeedbackReport(
            sample_id=sample.id,
            essential=essential,
            cot_blocks=cot_blocks if wants_cot else None,
            corrections=(
                corrections if FeedbackSource.CORRECTION in cfg.fp_sources else None
            ),
            include_transcript=FeedbackSource.TRANSCRIPT in cfg.fp_sources,
        )

    def transfer(
        self,
        report: FeedbackReport,
        cfg: ProtocolConfig,
        sample: Sample,
    ) -> TransferPayload:
        """Apply the transfer protocol to a feedback report.

        Direct mode wraps the serialized report; consolidated mode spends one
        gateway call on the edit plan. A plan that cannot be parsed falls back
        to direct transfer with ``consolidation_failed`` set. The transcript
        is attached after consolidation, so it is never altered by it.
        """
        text = serialize_feedback(report)
        transcript = sample.transcript_text() if report.include_transcript else None
        if cfg.tp_mode is TransferMode.DIRECT:
            return TransferPayload(
                mode=TransferMode.DIRECT, feedback_text=text, transcript=transcript
            )

        prompt = self.library.render_consolidate(text)
        response = self.identifier.gateway.complete(
            self.identifier.request(prompt.system, prompt.user)
        )
        try:
            plan = parse_edit_plan(response.text)
        except PlanParseFailure:
            logger.warning(
                "sample %s: consolidation produced no plan headers; "
                "falling back to direct transfer",
                report.sample_id,
            )
            return TransferPayload(
                mode=TransferMode.DIRECT,
                feedback_text=text,
                transcript=transcript,
                consolidation_failed=True,
            )
        return TransferPayload(
            mode=TransferMode.CONSOLIDATED,
            feedback_text=response.text,
            edit_plan=plan,
            transcript=transcript,
        )


def feedback_path(run_dir: Path, sample_id: str, variant: str) -> Path:
    return Path(run_dir) / "feedback" / f"{sample_id}.{variant}.json"


def save_payload(
    run_dir: Path,
    sample_id: str,
    variant: str,
    report: FeedbackReport,
    payload: TransferPayload,
) -> Path:
    path = feedback_path(run_dir, sample_id, variant)
    write_json_atomic(path, {"report": report.to_dict(), "payload": payload.to_dict()})
    return path


def load_payload(path: Path) -> tuple[FeedbackReport, TransferPayload]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return FeedbackReport.from_dict(data["report"]), TransferPayload.from_dict(data["payload"])
