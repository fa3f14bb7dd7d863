from __future__ import annotations

import json
import random

import pytest

from oracles import alpha_pairwise_oracle, confusion_oracle, rouge_oracle
from sumrefine.identify import IdentificationResult
from sumrefine.metrics import (
    DegenerateData,
    MissingLabels,
    detection_metrics,
    krippendorff_alpha,
    rouge,
)
from sumrefine.taxonomy import (
    ERROR_ORDER,
    ErrorCode,
    MipSetup,
    PromptingMode,
    Sample,
    Turn,
    Verdict,
)


def labeled_sample(sid: str, labels: dict[ErrorCode, bool]) -> Sample:
    return Sample(
        id=sid,
        transcript=(Turn("ALEX", "We agreed on the plan."),),
        gold_summary="The plan was agreed.",
        generated_summary="A plan was agreed.",
        human_labels=labels,
    )


def result_for(sid: str, predictions: dict[ErrorCode, bool]) -> IdentificationResult:
    verdicts = {
        code: Verdict(error=code, detected=predictions[code]) for code in ERROR_ORDER
    }
    return IdentificationResult(
        sample_id=sid,
        setup=MipSetup.MULTI_INSTANCE,
        prompting=PromptingMode.COT,
        verdicts=verdicts,
        call_count=9,
    )


def random_eval(rng: random.Random, n: int):
    samples, results = [], []
    for i in range(n):
        labels = {c: rng.random() < 0.4 for c in ERROR_ORDER}
        preds = {c: rng.random() < 0.5 for c in ERROR_ORDER}
        samples.append(labeled_sample(f"s{i}", labels))
        results.append(result_for(f"s{i}", preds))
    return results, samples


class TestDetectionMetrics:
    def test_exact_percentages(self):
        # 158 correct out of 200 must come out as exactly 79.0, not 78.999...
        rng = random.Random(7)
        correct_flags = [True] * 158 + [False] * 42
        rng.shuffle(correct_flags)
        samples, results = [], []
        for i, correct in enumerate(correct_flags):
            actual = rng.random() < 0.5
            predicted = actual if correct else not actual
            labels = {c: False for c in ERROR_ORDER}
            preds = {c: False for c in ERROR_ORDER}
            labels[ErrorCode.HAL] = actual
            preds[ErrorCode.HAL] = predicted
            samples.append(labeled_sample(f"s{i}", labels))
            results.append(result_for(f"s{i}", preds))
        metrics = detection_metrics(results, samples)
        assert metrics.per_error[ErrorCode.HAL].accuracy == 79.0
        assert metrics.n_samples == 200

    def test_matches_confusion_oracle_on_random_data(self):
        rng = random.Random(13)
        for trial in range(20):
            results, samples = random_eval(rng, rng.randint(3, 30))
            metrics = detection_metrics(results, samples)
            for code in ERROR_ORDER:
                pairs = [
                    (r.verdicts[code].detected, s.human_labels[code])
                    for r, s in zip(results, samples)
                ]
                want = confusion_oracle(pairs)
                got = metrics.per_error[code]
                assert (got.tp, got.fp, got.tn, got.fn) == (
                    want["tp"],
                    want["fp"],
                    want["tn"],
                    want["fn"],
                )
                assert got.accuracy == want["accuracy"]
                assert got.fp_rate == want["fp_rate"]
                assert got.fn_rate == want["fn_rate"]
                assert metrics.baseline_always_true[code] == want["baseline"]

    def test_rates_none_when_denominator_empty(self):
        labels = {c: False for c in ERROR_ORDER}
        preds = {c: False for c in ERROR_ORDER}
        metrics = detection_metrics(
            [result_for("s0", preds)], [labeled_sample("s0", labels)]
        )
        hal = metrics.per_error[ErrorCode.HAL]
        assert hal.fn_rate is None  # no actual positives
        assert hal.fp_rate == 0.0
        assert metrics.mean_fn_rate is None

    def test_baseline_is_prevalence(self):
        labels_a = {c: c is ErrorCode.REP for c in ERROR_ORDER}
        labels_b = {c: False for c in ERROR_ORDER}
        preds = {c: False for c in ERROR_ORDER}
        metrics = detection_metrics(
            [result_for("a", preds), result_for("b", preds)],
            [labeled_sample("a", labels_a), labeled_sample("b", labels_b)],
        )
        assert metrics.baseline_always_true[ErrorCode.REP] == 50.0
        assert metrics.baseline_always_true[ErrorCode.HAL] == 0.0

    def test_erroneous_only_filter(self):
        labels_dirty = {c: c is ErrorCode.HAL for c in ERROR_ORDER}
        labels_clean = {c: False for c in ERROR_ORDER}
        preds = {c: c is ErrorCode.HAL for c in ERROR_ORDER}
        results = [result_for("dirty", preds), result_for("clean", preds)]
        samples = [
            labeled_sample("dirty", labels_dirty),
            labeled_sample("clean", labels_clean),
        ]
        full = detection_metrics(results, samples)
        dirty_only = detection_metrics(results, samples, erroneous_only=True)
        assert full.n_samples == 2
        assert dirty_only.n_samples == 1
        assert dirty_only.per_error[ErrorCode.HAL].accuracy == 100.0

    def test_missing_labels_raises(self):
        preds = {c: False for c in ERROR_ORDER}
        unlabeled = Sample(
            id="s0",
            transcript=(Turn("A", "hi"),),
            gold_summary="g",
            generated_summary="p",
        )
        with pytest.raises(MissingLabels, match="s0"):
            detection_metrics([result_for("s0", preds)], [unlabeled])
        with pytest.raises(MissingLabels, match="missing"):
            detection_metrics([result_for("missing", preds)], [unlabeled])


class TestKrippendorffAlpha:
    def test_perfect_agreement(self):
        assert krippendorff_alpha([[1, 0, 1, 0], [1, 0, 1, 0]]) == 1.0

    def test_known_small_case(self):
        ratings = [[1, 1, 0, 0], [1, 1, 1, 0]]
        assert krippendorff_alpha(ratings) == pytest.approx(
            alpha_pairwise_oracle(ratings), abs=1e-12
        )

    def test_matches_pairwise_oracle_randomized(self):
        rng = random.Random(29)
        checked = 0
        while checked < 60:
            raters = rng.randint(2, 5)
            items = rng.randint(2, 12)
            values = [0, 1, 2][: rng.randint(2, 3)]
            ratings = [
                [
                    rng.choice(values) if rng.random() > 0.2 else None
                    for _ in range(items)
                ]
                for _ in range(raters)
            ]
            try:
                want = alpha_pairwise_oracle(ratings)
            except ValueError:
                continue
            assert krippendorff_alpha(ratings) == pytest.approx(want, abs=1e-9)
            checked += 1

    def test_missing_entries_are_skipped(self):
        with_gap = krippendorff_alpha([[1, 0, None], [1, 0, 1]])
        no_gap = krippendorff_alpha([[1, 0], [1, 0]])
        assert with_gap == no_gap == 1.0

    def test_degenerate_inputs(self):
        with pytest.raises(DegenerateData):
            krippendorff_alpha([[1, 1], [1, 1]])  # single value everywhere
        with pytest.raises(DegenerateData):
            krippendorff_alpha([[1, None], [None, 1]])  # nothing pairable

    def test_invalid_shapes(self):
        with pytest.raises(ValueError, match="two raters"):
            krippendorff_alpha([[1, 0, 1]])
        with pytest.raises(ValueError, match="same item list"):
            krippendorff_alpha([[1, 0], [1, 0, 1]])

    def test_nominal_relabeling_invariance(self):
        ratings = [[0, 1, 2, 0, None], [0, 2, 2, 1, 0]]
        relabeled = [
            ["x" if v == 0 else "y" if v == 1 else "z" if v == 2 else None for v in row]
            for row in ratings
        ]
        assert krippendorff_alpha(ratings) == pytest.approx(
            krippendorff_alpha(relabeled), abs=1e-12
        )


class TestRouge:
    def test_identity(self):
        scores = rouge("The plan was approved today.", "The plan was approved today.")
        assert (scores.r1, scores.r2, scores.rlsum) == (1.0, 1.0, 1.0)

    def test_disjoint(self):
        scores = rouge("alpha beta gamma", "delta epsilon zeta")
        assert (scores.r1, scores.r2, scores.rlsum) == (0.0, 0.0, 0.0)

    def test_worked_example(self):
        scores = rouge("the cat sat", "the cat ran")
        assert scores.r1 == pytest.approx(2 / 3, abs=1e-9)
        assert scores.r2 == pytest.approx(1 / 2, abs=1e-9)

    def test_empty_inputs(self):
        assert rouge("", "anything").to_dict() == {
            "rouge1": 0.0,
            "rouge2": 0.0,
            "rougeLsum": 0.0,
        }
        assert rouge("anything", "").rlsum == 0.0
        assert rouge("...", "!!!").r1 == 0.0  # tokenizer drops punctuation

    def test_single_token_pair(self):
        scores = rouge("hello", "hello")
        assert scores.r1 == 1.0
        assert scores.r2 == 0.0  # no bigrams exist
        assert scores.rlsum == 1.0

    def test_case_and_punctuation_folded(self):
        assert rouge("The CAT sat!", "the cat sat").r1 == 1.0

    def test_golden_pairs(self, golden_dir):
        pairs = json.loads((golden_dir / "rouge_pairs.json").read_text())
        assert len(pairs) == 20
        for pair in pairs:
            scores = rouge(pair["candidate"], pair["reference"])
            for key, got in (
                ("rouge1", scores.r1),
                ("rouge2", scores.r2),
                ("rougeLsum", scores.rlsum),
            ):
                assert got == pytest.approx(pair[key], abs=1e-6), pair["id"]

    def test_oracle_agreement_randomized(self):
        rng = random.Random(41)
        vocab = ["the", "cat", "sat", "ran", "fast", "dog", "barked", "loud"]
        for _ in range(40):
            cand = " ".join(rng.choices(vocab, k=rng.randint(0, 8)))
            ref_sents = [
                " ".join(rng.choices(vocab, k=rng.randint(1, 6))) + "."
                for _ in range(rng.randint(1, 3))
            ]
            ref = " ".join(ref_sents)
            want = rouge_oracle(cand, ref)
            scores = rouge(cand, ref)
            (want_r1,) = want["rouge1"]
            (want_r2,) = want["rouge2"]
            assert scores.r1 == pytest.approx(want_r1, abs=1e-9)
            assert scores.r2 == pytest.approx(want_r2, abs=1e-9)
            # Any maximal LCS choice is an acceptable Lsum value.
            assert any(
                abs(scores.rlsum - v) < 1e-9 for v in want["rougeLsum"]
            ), (cand, ref, scores.rlsum, want["rougeLsum"])

    def test_scores_bounded(self):
        rng = random.Random(43)
        vocab = ["a", "b", "c", "d"]
        for _ in range(50):
            cand = " ".join(rng.choices(vocab, k=rng.randint(0, 10)))
            ref = " ".join(rng.choices(vocab, k=rng.randint(0, 10)))
            s = rouge(cand, ref)
            for v in (s.r1, s.r2, s.rlsum):
                assert 0.0 <= v <= 1.0
