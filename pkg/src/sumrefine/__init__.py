"""Typed-error identification and iterative refinement for meeting summaries.

The package finds nine kinds of mistakes in machine-generated meeting
summaries with one detector instance per error type, turns the findings into
structured feedback, asks a second model to refine the summary, and scores
the outcome with detection metrics, agreement coefficients, ROUGE, and
model-judged Likert and ranking protocols. Every provider call goes through
a caching gateway, so runs are resumable and replayable offline.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .dataset import Corpus, CorpusStats, SchemaError, corpus_stats, load_corpus, make_fixtures, make_fixtures_with_log, save_corpus
from .feedback import EditPlan, FeedbackBuilder, FeedbackReport, MissingCoT, PlanParseFailure, TransferPayload, parse_edit_plan, serialize_feedback
from .gateway import ChatRequest, ChatResponse, Gateway, ResponseCache, RetryPolicy, TokenBucket, write_json_atomic
from .identify import Identifier, IdentificationResult, ParseFailure, identify_path, parse_multi_verdicts, parse_verdict
from .judge import Judge, LikertScores, RankingOutcome, RankParseFailure, ScoreParseFailure, aggregate_likert, aggregate_rank, parse_likert_score, parse_rank_response
from .metrics import DegenerateData, DetectionMetrics, MissingLabels, PerErrorMetrics, RougeScores, detection_metrics, krippendorff_alpha, rouge
from .prompts import PromptLibrary, RenderedPrompt
from .providers import CallableProvider, MockProvider, OpenAICompatProvider, ProviderError
from .refine import REFERENCE_KEYS, RefinementRound, RefinementTrace, Refiner, refine_path
from .runner import MIP_VARIANTS, RunManifest, run_eval, run_identify, run_refine
from .taxonomy import (
    ERROR_ORDER,
    FP_SUBSETS,
    TAXONOMY,
    ConfigError,
    ErrorCode,
    FeedbackSource,
    MipSetup,
    PromptingMode,
    ProtocolConfig,
    Sample,
    TransferMode,
    Turn,
    Verdict,
    enumerate_variants,
    validate_config,
)

__all__ = [
    "__version__",
    "Corpus",
    "CorpusStats",
    "SchemaError",
    "corpus_stats",
    "load_corpus",
    "make_fixtures",
    "make_fixtures_with_log",
    "save_corpus",
    "EditPlan",
    "FeedbackBuilder",
    "FeedbackReport",
    "MissingCoT",
    "PlanParseFailure",
    "TransferPayload",
    "parse_edit_plan",
    "serialize_feedback",
    "ChatRequest",
    "ChatResponse",
    "Gateway",
    "ResponseCache",
    "RetryPolicy",
    "TokenBucket",
    "write_json_atomic",
    "Identifier",
    "IdentificationResult",
    "ParseFailure",
    "identify_path",
    "parse_multi_verdicts",
    "parse_verdict",
    "Judge",
    "LikertScores",
    "RankingOutcome",
    "RankParseFailure",
    "ScoreParseFailure",
    "aggregate_likert",
    "aggregate_rank",
    "parse_likert_score",
    "parse_rank_response",
    "DegenerateData",
    "DetectionMetrics",
    "MissingLabels",
    "PerErrorMetrics",
    "RougeScores",
    "detection_metrics",
    "krippendorff_alpha",
    "rouge",
    "PromptLibrary",
    "RenderedPrompt",
    "CallableProvider",
    "MockProvider",
    "OpenAICompatProvider",
    "ProviderError",
    "REFERENCE_KEYS",
    "RefinementRound",
    "RefinementTrace",
    "Refiner",
    "refine_path",
    "MIP_VARIANTS",
    "RunManifest",
    "run_eval",
    "run_identify",
    "run_refine",
    "ERROR_ORDER",
    "FP_SUBSETS",
    "TAXONOMY",
    "ConfigError",
    "ErrorCode",
    "FeedbackSource",
    "MipSetup",
    "PromptingMode",
    "ProtocolConfig",
    "Sample",
    "TransferMode",
    "Turn",
    "Verdict",
    "enumerate_variants",
    "validate_config",
]
