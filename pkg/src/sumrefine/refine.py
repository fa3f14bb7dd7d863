"""Summary refinement: the second LLM and the multi-round driver.

One round is identify, assemble feedback, transfer, refine. The loop repeats
rounds on the refined text up to ``cfg.max_rounds`` and by default stops early
after a round in which the detectors found nothing. Reference summaries used
by the evaluation (gold, original, from-scratch, and transcript-only refine)
are produced here too.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .feedback import FeedbackBuilder, TransferPayload
from .gateway import write_json_atomic
from .identify import Identifier
from .prompts import PromptLibrary
from .taxonomy import ProtocolConfig, Sample, validate_config

__all__ = [
    "RefineFailure",
    "RefinementRound",
    "RefinementTrace",
    "Refiner",
    "REFERENCE_KEYS",
    "refine_path",
    "save_trace",
    "load_trace",
]

logger = logging.getLogger(__name__)

# Reference systems the evaluation compares against, in report order.
REFERENCE_KEYS = ("GOLD", "ORIG", "GPT-S", "GPT-R")


class RefineFailure(RuntimeError):
    """The refiner returned empty text."""


def _payload_digest(payload: TransferPayload) -> str:
    blob = json.dumps(payload.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RefinementRound:
    """One pass of identify, feedback, transfer, refine."""

    round_index: int
    input_summary: str
    payload_digest: str
    refined_summary: str
    detected_errors: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "input_summary": self.input_summary,
            "payload_digest": self.payload_digest,
            "refined_summary": self.refined_summary,
            "detected_errors": list(self.detected_errors),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RefinementRound":
        return cls(
            round_index=int(data["round_index"]),
            input_summary=data["input_summary"],
            payload_digest=data["payload_digest"],
            refined_summary=data["refined_summary"],
            detected_errors=list(data.get("detected_errors", [])),
        )


@dataclass
class RefinementTrace:
    """Full history of the refinement loop for one sample and variant."""

    sample_id: str
    variant: ProtocolConfig
    rounds: list[RefinementRound] = field(default_factory=list)
    final_summary: str = ""
    early_stopped: bool = False

    def validate(self) -> None:
        if not self.rounds:
            raise ValueError("trace has no rounds")
        for i, r in enumerate(self.rounds, start=1):
            if r.round_index != i:
                raise ValueError(f"round indices not dense: expected {i}, got {r.round_index}")
        if self.final_summary != self.rounds[-1].refined_summary:
            raise ValueError("final_summary does not match the last round")

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "variant": self.variant.to_dict(),
            "rounds": [r.to_dict() for r in self.rounds],
            "final_summary": self.final_summary,
            "early_stopped": self.early_stopped,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RefinementTrace":
        return cls(
            sample_id=data["sample_id"],
            variant=ProtocolConfig.from_dict(data["variant"]),
            rounds=[RefinementRound.from_dict(r) for r in data["rounds"]],
            final_summary=data["final_summary"],
            early_stopped=bool(data.get("early_stopped", False)),
        )


class Refiner:
    """Drives refinement through the same gateway as identification."""

    def __init__(
        self,
        identifier: Identifier,
        library: PromptLibrary | None = None,
        early_stop: bool = True,
    ) -> None:
        self.identifier = identifier
        self.library = library or identifier.library
        self.builder = FeedbackBuilder(identifier, self.library)
        self.early_stop = early_stop

    @property
    def gateway(self):
        return self.identifier.gateway

    def refine_once(self, summary: str, payload: TransferPayload) -> str:
        """One refiner call; returns the improved summary verbatim."""
        prompt = self.library.render_refine(summary, payload.rendered_feedback())
        response = self.gateway.complete(
            self.identifier.request(prompt.system, prompt.user)
        )
        if not response.text.strip():
            raise RefineFailure("refiner returned empty text")
        return response.text

    def refine_loop(self, sample: Sample, cfg: ProtocolConfig) -> RefinementTrace:
        """Run up to ``cfg.max_rounds`` refinement rounds on one sample.

        Every round is recorded, including the one that triggers the early
        stop, so the trace is never empty and the final summary always comes
        from an actual refiner call.
        """
        validate_config(cfg)
        trace = RefinementTrace(sample_id=sample.id, variant=cfg)
        current = sample.generated_summary
        for index in range(1, cfg.max_rounds + 1):
            view = dataclasses.replace(sample, generated_summary=current)
            result = self.identifier.identify(view, cfg)
            report = self.builder.assemble_feedback(result, cfg, view)
            payload = self.builder.transfer(report, cfg, view)
            refined = self.refine_once(current, payload)
            trace.rounds.append(
                RefinementRound(
                    round_index=index,
                    input_summary=current,
                    payload_digest=_payload_digest(payload),
                    refined_summary=refined,
                    detected_errors=[str(c) for c in result.detected()],
                )
            )
            current = refined
            if self.early_stop and not result.any_detected:
                trace.early_stopped = True
                logger.info(
                    "sample %s: round %d detected no errors, stopping early",
                    sample.id,
                    index,
                )
                break
        trace.final_summary = current
        trace.validate()
        return trace

    def make_references(self, sample: Sample) -> dict[str, str]:
        """The four comparison summaries for ranking and scoring."""
        transcript = sample.transcript_text()
        summarize = self.library.render_reference_summary(transcript)
        refine = self.library.render_reference_refine(
            sample.generated_summary, transcript
        )
        gpt_s = self.gateway.complete(
            self.identifier.request(summarize.system, summarize.user)
        ).text
        gpt_r = self.gateway.complete(
            self.identifier.request(refine.system, refine.user)
        ).text
        return {
            "GOLD": sample.gold_summary,
            "ORIG": sample.generated_summary,
            "GPT-S": gpt_s,
            "GPT-R": gpt_r,
        }


def refine_path(run_dir: Path, sample_id: str, variant: str) -> Path:
    return Path(run_dir) / "refine" / f"{sample_id}.{variant}.json"


def save_trace(trace: RefinementTrace, run_dir: Path) -> Path:
    path = refine_path(run_dir, trace.sample_id, trace.variant.variant_label())
    write_json_atomic(path, trace.to_dict())
    return path


def load_trace(path: Path) -> RefinementTrace:
    return RefinementTrace.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
