"""LLM-as-judge scoring: Likert quality ratings and K-way ranking.

The judge sees each summary four times for Likert scores (one call per
dimension) and each sample once for ranking. Candidate presentation order is
shuffled with a seeded RNG derived from the sample key so runs are
reproducible while still mitigating position bias. Parsed scores that clash
with obvious praise or criticism in the rationale are flagged for human
review rather than silently accepted.
"""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .gateway import ChatRequest, Gateway
from .prompts import LikertDimension, PromptLibrary

__all__ = [
    "ScoreParseFailure",
    "RankParseFailure",
    "InconsistentCandidates",
    "RankJudgment",
    "RankingOutcome",
    "LikertScores",
    "Judge",
    "parse_likert_score",
    "parse_rank_response",
    "aggregate_rank",
    "aggregate_likert",
    "polarity_conflict",
]

logger = logging.getLogger(__name__)


class ScoreParseFailure(ValueError):
    """No integer in 1..5 found in a Likert response."""


class RankParseFailure(ValueError):
    """The ranking response does not describe a full permutation."""


class InconsistentCandidates(ValueError):
    """Per-sample rankings disagree on the candidate set."""


_SCORE_RE = re.compile(r"(?<!\d)(?<!\d\.)([1-5])(?!\.?\d)")
# "1. Summary 3" / "1) Summary 3"
_ORDERED_RE = re.compile(r"^\s*(\d+)\s*[.):]\s*Summary\s+(\d+)\b", re.IGNORECASE | re.MULTILINE)
# "Summary 3: 1" / "Summary 3 - rank 1"
_LABELED_RE = re.compile(
    r"^\s*Summary\s+(\d+)\s*[:\-]\s*(?:rank\s*)?(\d+)\b", re.IGNORECASE | re.MULTILINE
)

_POSITIVE_WORDS = ("excellent", "outstanding", "flawless", "near perfect", "very good")
_NEGATIVE_WORDS = ("terrible", "awful", "unusable", "incoherent", "very poor", "very bad")


def parse_likert_score(text: str) -> int:
    """First standalone integer in 1..5; decimals and larger numbers ignored."""
    m = _SCORE_RE.search(text)
    if m is None:
        raise ScoreParseFailure(f"no integer score 1-5 in response: {text[:80]!r}")
    return int(m.group(1))


def polarity_conflict(score: int, rationale: str) -> bool:
    """True when a score contradicts strong sentiment words in the rationale."""
    lowered = rationale.lower()
    if score <= 2 and any(w in lowered for w in _POSITIVE_WORDS):
        return True
    if score >= 4 and any(w in lowered for w in _NEGATIVE_WORDS):
        return True
    return False


def parse_rank_response(text: str, k: int) -> dict[int, int]:
    """Map summary number (1..k) to rank (1..k) from a judge response.

    Accepts an ordered list ("1. Summary 3") or labeled lines
    ("Summary 3: rank 1"). The result must be a full permutation; duplicate or
    conflicting assignments raise :class:`RankParseFailure`.
    """
    assigned: dict[int, int] = {}
    used_ranks: set[int] = set()

    def assign(summary_no: int, rank: int) -> None:
        if not (1 <= summary_no <= k and 1 <= rank <= k):
            raise RankParseFailure(
                f"out-of-range assignment: summary {summary_no} rank {rank} with k={k}"
            )
        if assigned.get(summary_no, rank) != rank:
            raise RankParseFailure(f"summary {summary_no} assigned two ranks")
        if summary_no not in assigned and rank in used_ranks:
            raise RankParseFailure(f"rank {rank} assigned twice")
        assigned[summary_no] = rank
        used_ranks.add(rank)

    ordered = _ORDERED_RE.findall(text)
    if ordered:
        for rank_str, summary_str in ordered:
            assign(int(summary_str), int(rank_str))
    else:
        for summary_str, rank_str in _LABELED_RE.findall(text):
            assign(int(summary_str), int(rank_str))

    if len(assigned) != k:
        raise RankParseFailure(
            f"expected a permutation of 1..{k}, got {len(assigned)} assignments"
        )
    return assigned


@dataclass
class RankJudgment:
    """One sample's ranking with its chain-of-thought rationale."""

    ranks: dict[str, int]
    rationale: str
    presentation_order: list[str]

    def to_dict(self) -> dict:
        return {
            "ranks": dict(self.ranks),
            "rationale": self.rationale,
            "presentation_order": list(self.presentation_order),
        }


@dataclass
class RankingOutcome:
    """Aggregated K-way ranking across samples."""

    candidate_ids: list[str]
    per_sample_ranks: dict[str, dict[str, int]]
    avg_rank: dict[str, float]
    judge_rationales: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "candidate_ids": list(self.candidate_ids),
            "per_sample_ranks": {k: dict(v) for k, v in self.per_sample_ranks.items()},
            "avg_rank": dict(self.avg_rank),
            "judge_rationales": dict(self.judge_rationales),
        }


@dataclass
class LikertScores:
    """Aggregated 1..5 judgments per dimension."""

    per_dimension: dict[str, float]
    per_sample: dict[str, dict[str, int]]
    flagged: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_dimension": dict(self.per_dimension),
            "per_sample": {k: dict(v) for k, v in self.per_sample.items()},
            "flagged": list(self.flagged),
        }


def aggregate_rank(per_sample: Mapping[str, Mapping[str, int]]) -> dict[str, float]:
    """Arithmetic mean rank per candidate across samples."""
    if not per_sample:
        raise InconsistentCandidates("no rankings to aggregate")
    ids: set[str] | None = None
    for sample_id, ranks in per_sample.items():
        current = set(ranks)
        if ids is None:
            ids = current
        elif current != ids:
            raise InconsistentCandidates(
                f"sample {sample_id!r} ranks a different candidate set"
            )
    assert ids is not None
    n = len(per_sample)
    return {
        cid: sum(ranks[cid] for ranks in per_sample.values()) / n for cid in sorted(ids)
    }


def aggregate_likert(per_sample: Mapping[str, Mapping[str, int]]) -> dict[str, float]:
    """Mean score per dimension across samples."""
    if not per_sample:
        return {}
    dims = sorted({dim for scores in per_sample.values() for dim in scores})
    out: dict[str, float] = {}
    for dim in dims:
        values = [scores[dim] for scores in per_sample.values() if dim in scores]
        out[dim] = sum(values) / len(values)
    return out


class Judge:
    """Likert and ranking judgments through the shared gateway."""

    def __init__(
        self,
        gateway: Gateway,
        library: PromptLibrary | None = None,
        model_id: str = "default",
        temperature: float = 0.0,
        max_output_tokens: int = 2048,
        seed: int = 0,
    ) -> None:
        self.gateway = gateway
        self.library = library or PromptLibrary.default()
        self.model_id = model_id
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens
        self.seed = seed

    def _request(self, system: str, user: str) -> ChatRequest:
        return ChatRequest(
            system_prompt=system,
            user_prompt=user,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            model_id=self.model_id,
        )

    def judge_likert(self, summary: str, transcript: str) -> tuple[dict[str, int], bool]:
        """Four calls, one per dimension; returns scores and a conflict flag."""
        scores: dict[str, int] = {}
        conflict = False
        for dim in LikertDimension:
            prompt = self.library.render_likert(dim, summary=summary, transcript=transcript)
            response = self.gateway.complete(self._request(prompt.system, prompt.user))
            score = parse_likert_score(response.text)
            if polarity_conflict(score, response.text):
                logger.warning("likert score %d conflicts with rationale wording", score)
                conflict = True
            scores[dim.value] = score
        return scores, conflict

    def judge_rank(
        self,
        transcript: str,
        candidates: Mapping[str, str],
        sample_key: str = "",
    ) -> RankJudgment:
        """One K-way ranking call over a shuffled candidate order."""
        ids = list(candidates)
        rng = random.Random(f"{self.seed}:{sample_key}")
        rng.shuffle(ids)
        prompt = self.library.render_rank(transcript, [candidates[cid] for cid in ids])
        response = self.gateway.complete(self._request(prompt.system, prompt.user))
        by_number = parse_rank_response(response.text, len(ids))
        ranks = {cid: by_number[i] for i, cid in enumerate(ids, start=1)}
        return RankJudgment(ranks=ranks, rationale=response.text, presentation_order=ids)

    def rank_many(
        self,
        items: Sequence[tuple[str, str, Mapping[str, str]]],
    ) -> RankingOutcome:
        """Rank the same candidate set for many samples.

        ``items`` holds ``(sample_id, transcript, candidates)`` triples.
        """
        per_sample: dict[str, dict[str, int]] = {}
        rationales: dict[str, str] = {}
        candidate_ids: list[str] = []
        for sample_id, transcript, candidates in items:
            if not candidate_ids:
                candidate_ids = list(candidates)
            judgment = self.judge_rank(transcript, candidates, sample_key=sample_id)
            per_sample[sample_id] = judgment.ranks
            rationales[sample_id] = judgment.rationale
        return RankingOutcome(
            candidate_ids=candidate_ids,
            per_sample_ranks=per_sample,
            avg_rank=aggregate_rank(per_sample),
            judge_rationales=rationales,
        )
