"""Error taxonomy, sample data model, and refinement-protocol configuration.

The nine-entry error taxonomy is a closed set. Every other module keys its
verdicts, feedback and metrics on :class:`ErrorCode`, so the codes and their
canonical order are defined once here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class ConfigError(ValueError):
    """A protocol configuration violates one of its invariants."""


class ErrorCode(str, Enum):
    """Short codes for the nine summary error types."""

    P_OM = "P-OM"
    T_OM = "T-OM"
    REP = "REP"
    INC = "INC"
    COR = "COR"
    HAL = "HAL"
    LAN = "LAN"
    STR = "STR"
    IRR = "IRR"

    def __str__(self) -> str:  # filenames, report rows
        return self.value


@dataclass(frozen=True)
class ErrorType:
    """One taxonomy entry: code, display name, definition, transcript need."""

    code: ErrorCode
    name: str
    definition: str
    requires_transcript: bool


# Canonical order used for prompts, serialized feedback and report rows.
ERROR_ORDER: tuple[ErrorCode, ...] = (
    ErrorCode.P_OM,
    ErrorCode.T_OM,
    ErrorCode.REP,
    ErrorCode.INC,
    ErrorCode.COR,
    ErrorCode.HAL,
    ErrorCode.LAN,
    ErrorCode.STR,
    ErrorCode.IRR,
)

TAXONOMY: dict[ErrorCode, ErrorType] = {
    ErrorCode.P_OM: ErrorType(
        code=ErrorCode.P_OM,
        name="Partial omission",
        definition=(
            "Missing information from the meeting, such as significant decisions "
            "or actions. Salient topics are mentioned but not captured in detail."
        ),
        requires_transcript=True,
    ),
    ErrorCode.T_OM: ErrorType(
        code=ErrorCode.T_OM,
        name="Total omission",
        definition=(
            "Missing information from the meeting, such as significant decisions "
            "or actions. Relevant topics and key points are not stated."
        ),
        requires_transcript=True,
    ),
    ErrorCode.REP: ErrorType(
        code=ErrorCode.REP,
        name="Repetition",
        definition=(
            "The summary contains repeated or redundant information, which does "
            "not help the understanding or contextualization."
        ),
        requires_transcript=False,
    ),
    ErrorCode.INC: ErrorType(
        code=ErrorCode.INC,
        name="Incoherence",
        definition=(
            "The summary contains characteristics that disrupt the logical flow, "
            "relevance, or clarity of content either within a sentence "
            "(intra-sentence) or across sentences (inter-sentence)."
        ),
        requires_transcript=False,
    ),
    ErrorCode.COR: ErrorType(
        code=ErrorCode.COR,
        name="Coreference",
        definition=(
            "The summary fails to resolve a reference to a participant or entity, "
            "misattributes statements, or omits necessary mentions."
        ),
        requires_transcript=True,
    ),
    ErrorCode.HAL: ErrorType(
        code=ErrorCode.HAL,
        name="Hallucination",
        definition=(
            "The summary produces inconsistencies not aligned with the meeting "
            "content, either misrepresenting information from the transcript or "
            "introducing content not present in the transcript."
        ),
        requires_transcript=True,
    ),
    ErrorCode.LAN: ErrorType(
        code=ErrorCode.LAN,
        name="Language",
        definition=(
            "The summary uses inappropriate, incorrect (ungrammatical), or "
            "ambiguous language or fails to capture unique linguistic styles."
        ),
        requires_transcript=False,
    ),
    ErrorCode.STR: ErrorType(
        code=ErrorCode.STR,
        name="Structure",
        definition=(
            "The summary misrepresents the order or logic of the meeting's "
            "discourse, misplacing topics or events."
        ),
        requires_transcript=True,
    ),
    ErrorCode.IRR: ErrorType(
        code=ErrorCode.IRR,
        name="Irrelevance",
        definition=(
            "The summary includes information that is unrelated or not central to "
            "the main topics or objectives of the meeting."
        ),
        requires_transcript=True,
    ),
}

# Errors checkable from the summary alone.
TRANSCRIPT_FREE: frozenset[ErrorCode] = frozenset(
    c for c, t in TAXONOMY.items() if not t.requires_transcript
)


@dataclass(frozen=True)
class Turn:
    """One speaker turn of a meeting transcript."""

    speaker: str
    text: str


@dataclass(frozen=True)
class Sample:
    """A meeting with its gold summary, a machine summary, and optional labels."""

    id: str
    transcript: tuple[Turn, ...]
    gold_summary: str
    generated_summary: str
    generator_model: str = ""
    human_labels: Optional[dict[ErrorCode, bool]] = None

    def __post_init__(self) -> None:
        if not self.transcript:
            raise ValueError(f"sample {self.id!r}: transcript needs at least one turn")
        if not self.gold_summary.strip():
            raise ValueError(f"sample {self.id!r}: gold_summary is empty")
        if not self.generated_summary.strip():
            raise ValueError(f"sample {self.id!r}: generated_summary is empty")
        if self.human_labels is not None:
            missing = [c.value for c in ERROR_ORDER if c not in self.human_labels]
            if missing:
                raise ValueError(
                    f"sample {self.id!r}: human_labels missing {', '.join(missing)}"
                )

    def transcript_text(self) -> str:
        """Flatten the structured transcript to "SPEAKER: utterance" lines."""
        return "\n".join(f"{t.speaker}: {t.text}" for t in self.transcript)

    def is_erroneous(self) -> bool:
        """True when at least one human label is positive."""
        return bool(self.human_labels) and any(self.human_labels.values())


class MipSetup(str, Enum):
    """Detector architecture: one combined call or one call per error type."""

    SINGLE_INSTANCE = "single"
    MULTI_INSTANCE = "multi"


class PromptingMode(str, Enum):
    DIRECT = "direct"
    COT = "cot"


class FeedbackSource(str, Enum):
    """Optional detail sources attached to the feedback payload."""

    COT_EXPLANATION = "cot"
    CORRECTION = "cor"
    TRANSCRIPT = "tra"


class TransferMode(str, Enum):
    """How feedback reaches the refiner."""

    DIRECT = "direct"
    CONSOLIDATED = "consolidated"


# Feedback-source subsets in the order reports list them; the slugs double as
# the row labels of the refinement report and as filename components.
FP_SUBSETS: tuple[tuple[str, frozenset[FeedbackSource]], ...] = (
    ("essential", frozenset()),
    ("cot", frozenset({FeedbackSource.COT_EXPLANATION})),
    ("cor", frozenset({FeedbackSource.CORRECTION})),
    ("cot+cor", frozenset({FeedbackSource.COT_EXPLANATION, FeedbackSource.CORRECTION})),
    ("tra", frozenset({FeedbackSource.TRANSCRIPT})),
    ("tra+cot", frozenset({FeedbackSource.TRANSCRIPT, FeedbackSource.COT_EXPLANATION})),
    ("tra+cor", frozenset({FeedbackSource.TRANSCRIPT, FeedbackSource.CORRECTION})),
    (
        "cot+cor+tra",
        frozenset(
            {
                FeedbackSource.COT_EXPLANATION,
                FeedbackSource.CORRECTION,
                FeedbackSource.TRANSCRIPT,
            }
        ),
    ),
)

_FP_SLUGS: dict[frozenset[FeedbackSource], str] = {s: n for n, s in FP_SUBSETS}

MAX_ROUNDS_DEFAULT_CAP = 10


@dataclass(frozen=True)
class ProtocolConfig:
    """Full variant selector for one identification+refinement pipeline run."""

    mip_setup: MipSetup = MipSetup.MULTI_INSTANCE
    prompting: PromptingMode = PromptingMode.COT
    fp_sources: frozenset[FeedbackSource] = frozenset()
    tp_mode: TransferMode = TransferMode.DIRECT
    max_rounds: int = 1
    judge_enabled: bool = True
    # Lifts the ten-round ceiling when explicitly requested.
    allow_extended_rounds: bool = False

    def fp_slug(self) -> str:
        return _FP_SLUGS[frozenset(self.fp_sources)]

    def variant_label(self) -> str:
        """Stable slug used in filenames and report rows, e.g. "direct-cot+cor"."""
        return f"{self.tp_mode.value}-{self.fp_slug()}"

    def mip_label(self) -> str:
        """Detector-variant slug, e.g. "multi-cot"."""
        return f"{self.mip_setup.value}-{self.prompting.value}"

    def to_dict(self) -> dict:
        return {
            "mip_setup": self.mip_setup.value,
            "prompting": self.prompting.value,
            "fp_sources": sorted(s.value for s in self.fp_sources),
            "tp_mode": self.tp_mode.value,
            "max_rounds": self.max_rounds,
            "judge_enabled": self.judge_enabled,
            "allow_extended_rounds": self.allow_extended_rounds,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolConfig":
        return cls(
            mip_setup=MipSetup(data["mip_setup"]),
            prompting=PromptingMode(data["prompting"]),
            fp_sources=frozenset(FeedbackSource(s) for s in data.get("fp_sources", [])),
            tp_mode=TransferMode(data["tp_mode"]),
            max_rounds=int(data.get("max_rounds", 1)),
            judge_enabled=bool(data.get("judge_enabled", True)),
            allow_extended_rounds=bool(data.get("allow_extended_rounds", False)),
        )


def validate_config(cfg: ProtocolConfig) -> None:
    """Raise :class:`ConfigError` naming the first violated invariant."""
    if cfg.max_rounds < 1:
        raise ConfigError(f"max_rounds must be >= 1, got {cfg.max_rounds}")
    if cfg.max_rounds > MAX_ROUNDS_DEFAULT_CAP and not cfg.allow_extended_rounds:
        raise ConfigError(
            f"max_rounds {cfg.max_rounds} exceeds the cap of "
            f"{MAX_ROUNDS_DEFAULT_CAP}; set allow_extended_rounds to override"
        )
    if (
        FeedbackSource.COT_EXPLANATION in cfg.fp_sources
        and cfg.prompting is not PromptingMode.COT
    ):
        raise ConfigError(
            "fp_sources includes the chain-of-thought explanation but prompting "
            "is direct; explanations only exist under cot prompting"
        )
    if frozenset(cfg.fp_sources) not in _FP_SLUGS:
        raise ConfigError(f"unknown fp_sources combination: {cfg.fp_sources!r}")


def enumerate_variants() -> list[ProtocolConfig]:
    """All 16 one-round refinement variants: 2 transfer modes x 8 source subsets.

    Every variant uses the multi-instance, chain-of-thought detector setup.
    Order is deterministic: the direct-transfer block first, each block in
    :data:`FP_SUBSETS` order.
    """
    variants = []
    for tp in (TransferMode.DIRECT, TransferMode.CONSOLIDATED):
        for _, sources in FP_SUBSETS:
            variants.append(
                ProtocolConfig(
                    mip_setup=MipSetup.MULTI_INSTANCE,
                    prompting=PromptingMode.COT,
                    fp_sources=sources,
                    tp_mode=tp,
                    max_rounds=1,
                )
            )
    return variants


@dataclass
class Verdict:
    """Per-error detection outcome for one sample."""

    error: ErrorCode
    detected: bool
    cot_explanation: Optional[str] = None
    correction: Optional[str] = None
    raw_response: str = ""
    parse_failed: bool = False

    def to_dict(self) -> dict:
        return {
            "error": self.error.value,
            "detected": self.detected,
            "cot_explanation": self.cot_explanation,
            "correction": self.correction,
            "raw_response": self.raw_response,
            "parse_failed": self.parse_failed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Verdict":
        return cls(
            error=ErrorCode(data["error"]),
            detected=data["detected"],
            cot_explanation=data.get("cot_explanation"),
            correction=data.get("correction"),
            raw_response=data.get("raw_response", ""),
            parse_failed=data.get("parse_failed", False),
        )
