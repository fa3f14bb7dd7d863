"""Deterministic measurement: detection quality, agreement, and ROUGE.

Everything in this module is a pure function of its inputs. Detection rates
are expressed in percent and computed as ``100 * count / n`` so prevalence
fractions like 158/200 come out as exact floats. The ROUGE implementation is
self-contained (lowercase tokens split on non-alphanumerics) to keep scores
reproducible across environments.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Mapping, Optional, Sequence

from .identify import IdentificationResult
from .taxonomy import ERROR_ORDER, ErrorCode, Sample

__all__ = [
    "MissingLabels",
    "DegenerateData",
    "PerErrorMetrics",
    "DetectionMetrics",
    "RougeScores",
    "detection_metrics",
    "krippendorff_alpha",
    "rouge",
]


class MissingLabels(ValueError):
    """A sample needed for scoring has no human labels."""


class DegenerateData(ValueError):
    """Krippendorff's alpha is undefined (expected disagreement is zero)."""


@dataclass(frozen=True)
class PerErrorMetrics:
    """Confusion counts and rates for one error type, rates in percent."""

    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    fp_rate: Optional[float]
    fn_rate: Optional[float]

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "accuracy": self.accuracy,
            "fp_rate": self.fp_rate,
            "fn_rate": self.fn_rate,
        }


@dataclass
class DetectionMetrics:
    """Detection quality against human labels, per error type and averaged."""

    per_error: dict[ErrorCode, PerErrorMetrics]
    mean_accuracy: float
    mean_fp_rate: Optional[float]
    mean_fn_rate: Optional[float]
    baseline_always_true: dict[ErrorCode, float]
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "per_error": {str(c): self.per_error[c].to_dict() for c in ERROR_ORDER},
            "mean_accuracy": self.mean_accuracy,
            "mean_fp_rate": self.mean_fp_rate,
            "mean_fn_rate": self.mean_fn_rate,
            "baseline_always_true": {
                str(c): self.baseline_always_true[c] for c in ERROR_ORDER
            },
        }


def _pct(count: int, total: int) -> float:
    return 100.0 * count / total


def detection_metrics(
    results: Sequence[IdentificationResult],
    samples: Sequence[Sample],
    erroneous_only: bool = False,
) -> DetectionMetrics:
    """Score identification results against human labels.

    ``accuracy = (tp+tn)/n``, ``fp_rate = fp/(fp+tn)``, ``fn_rate =
    fn/(fn+tp)``, all in percent. A rate with an empty denominator is reported
    as ``None`` and skipped by the unweighted means. ``erroneous_only``
    restricts scoring to samples with at least one positive label. Raises
    :class:`MissingLabels` when a scored sample has no labels.
    """
    by_id = {s.id: s for s in samples}
    pairs: list[tuple[IdentificationResult, Sample]] = []
    for result in results:
        sample = by_id.get(result.sample_id)
        if sample is None:
            raise MissingLabels(f"no sample found for result {result.sample_id!r}")
        if sample.human_labels is None:
            raise MissingLabels(f"sample {sample.id!r} has no human labels")
        if erroneous_only and not sample.is_erroneous():
            continue
        pairs.append((result, sample))
    if not pairs:
        raise MissingLabels("no labeled samples to score")

    n = len(pairs)
    per_error: dict[ErrorCode, PerErrorMetrics] = {}
    baseline: dict[ErrorCode, float] = {}
    for code in ERROR_ORDER:
        tp = fp = tn = fn = 0
        for result, sample in pairs:
            predicted = result.verdicts[code].detected
            actual = sample.human_labels[code]
            if predicted and actual:
                tp += 1
            elif predicted and not actual:
                fp += 1
            elif not predicted and not actual:
                tn += 1
            else:
                fn += 1
        per_error[code] = PerErrorMetrics(
            tp=tp,
            fp=fp,
            tn=tn,
            fn=fn,
            accuracy=_pct(tp + tn, n),
            fp_rate=_pct(fp, fp + tn) if fp + tn else None,
            fn_rate=_pct(fn, fn + tp) if fn + tp else None,
        )
        baseline[code] = _pct(tp + fn, n)

    def mean_of(values: list[float]) -> Optional[float]:
        return sum(values) / len(values) if values else None

    accuracies = [per_error[c].accuracy for c in ERROR_ORDER]
    fp_rates = [per_error[c].fp_rate for c in ERROR_ORDER if per_error[c].fp_rate is not None]
    fn_rates = [per_error[c].fn_rate for c in ERROR_ORDER if per_error[c].fn_rate is not None]
    return DetectionMetrics(
        per_error=per_error,
        mean_accuracy=sum(accuracies) / len(accuracies),
        mean_fp_rate=mean_of(fp_rates),
        mean_fn_rate=mean_of(fn_rates),
        baseline_always_true=baseline,
        n_samples=n,
    )


def krippendorff_alpha(ratings: Sequence[Sequence[Optional[Hashable]]]) -> float:
    """Krippendorff's alpha for nominal data, missing entries allowed.

    ``ratings[r][i]`` is rater ``r``'s value for item ``i`` (``None`` when the
    rater skipped it). Items with fewer than two ratings contribute nothing.
    Raises :class:`DegenerateData` when expected disagreement is zero, which
    covers the all-identical-values case and the no-pairable-data case.
    """
    if len(ratings) < 2:
        raise ValueError("alpha needs at least two raters")
    n_items = {len(row) for row in ratings}
    if len(n_items) != 1:
        raise ValueError("all raters must rate the same item list")

    # Coincidence counts: within each item, every ordered pair of ratings
    # contributes 1/(m_u - 1) to its value-pair cell.
    coincidence: Counter[tuple[Hashable, Hashable]] = Counter()
    totals: Counter[Hashable] = Counter()
    for item in range(n_items.pop()):
        values = [row[item] for row in ratings if row[item] is not None]
        m = len(values)
        if m < 2:
            continue
        item_counts = Counter(values)
        for c, nc in item_counts.items():
            totals[c] += nc
            for k, nk in item_counts.items():
                pairs = nc * (nc - 1) if c == k else nc * nk
                coincidence[(c, k)] += pairs / (m - 1)

    n = sum(totals.values())
    if n == 0:
        raise DegenerateData("no item has two or more ratings")
    observed = sum(v for (c, k), v in coincidence.items() if c != k)
    expected = sum(
        totals[c] * totals[k] for c in totals for k in totals if c != k
    )
    if expected == 0:
        raise DegenerateData("all pairable values are identical")
    return 1.0 - (n - 1) * observed / expected


_TOKEN_RE = re.compile(r"[a-z0-9]+")
_SENT_SPLIT_RE = re.compile(r"(?<=[.!?])\s+|\n+")


@dataclass(frozen=True)
class RougeScores:
    r1: float
    r2: float
    rlsum: float

    def to_dict(self) -> dict:
        return {"rouge1": self.r1, "rouge2": self.r2, "rougeLsum": self.rlsum}


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _f1(matches: float, cand_total: int, ref_total: int) -> float:
    if cand_total == 0 or ref_total == 0 or matches == 0:
        return 0.0
    precision = matches / cand_total
    recall = matches / ref_total
    return 2 * precision * recall / (precision + recall)


def _ngram_f1(cand: Sequence[str], ref: Sequence[str], n: int) -> float:
    cand_counts = _ngrams(cand, n)
    ref_counts = _ngrams(ref, n)
    matches = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
    return _f1(matches, sum(cand_counts.values()), sum(ref_counts.values()))


def _lcs_tokens(a: Sequence[str], b: Sequence[str]) -> list[str]:
    """Tokens of one longest common subsequence of ``a`` and ``b``."""
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        return []
    table = [[0] * (lb + 1) for _ in range(la + 1)]
    for i in range(1, la + 1):
        for j in range(1, lb + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    out: list[str] = []
    i, j = la, lb
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1]:
            out.append(a[i - 1])
            i -= 1
            j -= 1
        elif table[i - 1][j] >= table[i][j - 1]:
            i -= 1
        else:
            j -= 1
    out.reverse()
    return out


def _rlsum(candidate: str, reference: str) -> float:
    cand_tokens = _tokens(candidate)
    ref_sentences = [
        _tokens(s) for s in _SENT_SPLIT_RE.split(reference) if _tokens(s)
    ]
    ref_total = sum(len(s) for s in ref_sentences)
    if not cand_tokens or ref_total == 0:
        return 0.0
    # Union aggregation: per-sentence LCS hits, clipped by candidate counts so
    # one candidate token cannot be credited more often than it occurs.
    hits: Counter[str] = Counter()
    for sentence in ref_sentences:
        hits.update(_lcs_tokens(sentence, cand_tokens))
    cand_counts = Counter(cand_tokens)
    matches = sum(min(count, cand_counts[token]) for token, count in hits.items())
    return _f1(matches, len(cand_tokens), ref_total)


def rouge(candidate: str, reference: str) -> RougeScores:
    """ROUGE-1, ROUGE-2, and ROUGE-LSum F1 scores.

    Tokenization lowercases and splits on non-alphanumeric characters. Empty
    inputs score 0.0 across the board.
    """
    cand = _tokens(candidate)
    ref = _tokens(reference)
    return RougeScores(
        r1=_ngram_f1(cand, ref, 1),
        r2=_ngram_f1(cand, ref, 2),
        rlsum=_rlsum(candidate, reference),
    )
