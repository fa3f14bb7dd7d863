from __future__ import annotations

import dataclasses

import pytest

from sumrefine.feedback import TransferPayload
from sumrefine.gateway import Gateway
from sumrefine.identify import Identifier
from sumrefine.providers import MockProvider, MockRule, MockScript
from sumrefine.refine import (
    REFERENCE_KEYS,
    RefineFailure,
    RefinementRound,
    RefinementTrace,
    Refiner,
    load_trace,
    refine_path,
    save_trace,
)
from sumrefine.taxonomy import ProtocolConfig, TransferMode

ALWAYS_DETECT = MockScript(
    rules=(
        MockRule(pattern="Please improve this summary", response="A better summary."),
    ),
    default_response="VERDICT: yes",
)
NEVER_DETECT = MockScript(
    rules=(
        MockRule(pattern="Please improve this summary", response="A better summary."),
    ),
    default_response="VERDICT: no",
)


def make_refiner(script=None, early_stop=True) -> tuple[Refiner, MockProvider]:
    provider = MockProvider(script=script)
    refiner = Refiner(Identifier(Gateway(provider)), early_stop=early_stop)
    return refiner, provider


class TestRefineLoop:
    def test_runs_all_rounds_when_errors_persist(self, small_corpus):
        refiner, _ = make_refiner(ALWAYS_DETECT)
        cfg = ProtocolConfig(max_rounds=3)
        trace = refiner.refine_loop(small_corpus.samples[0], cfg)
        assert len(trace.rounds) == 3
        assert not trace.early_stopped
        assert trace.final_summary == "A better summary."
        trace.validate()

    def test_early_stop_after_clean_round(self, small_corpus):
        refiner, _ = make_refiner(NEVER_DETECT)
        cfg = ProtocolConfig(max_rounds=5)
        trace = refiner.refine_loop(small_corpus.samples[0], cfg)
        assert len(trace.rounds) == 1
        assert trace.early_stopped
        assert trace.rounds[0].detected_errors == []
        # The clean round still produces a refinement.
        assert trace.final_summary == "A better summary."

    def test_early_stop_disabled_runs_to_cap(self, small_corpus):
        refiner, _ = make_refiner(NEVER_DETECT, early_stop=False)
        cfg = ProtocolConfig(max_rounds=4)
        trace = refiner.refine_loop(small_corpus.samples[0], cfg)
        assert len(trace.rounds) == 4
        assert not trace.early_stopped

    def test_rounds_chain_summaries(self, small_corpus):
        responses = iter(["draft two", "draft three", "draft four"])
        script_calls = []

        def respond(req):
            if "Please improve this summary" in req.user_prompt:
                text = next(responses)
                script_calls.append(text)
                return text
            return "VERDICT: yes"

        from sumrefine.providers import CallableProvider

        refiner = Refiner(Identifier(Gateway(CallableProvider(respond))))
        sample = small_corpus.samples[0]
        trace = refiner.refine_loop(sample, ProtocolConfig(max_rounds=3))
        assert [r.refined_summary for r in trace.rounds] == [
            "draft two",
            "draft three",
            "draft four",
        ]
        assert trace.rounds[0].input_summary == sample.generated_summary
        assert trace.rounds[1].input_summary == "draft two"
        assert trace.rounds[2].input_summary == "draft three"
        assert trace.final_summary == "draft four"

    def test_detected_errors_recorded_per_round(self, small_corpus):
        refiner, _ = make_refiner(ALWAYS_DETECT)
        trace = refiner.refine_loop(small_corpus.samples[0], ProtocolConfig())
        assert len(trace.rounds[0].detected_errors) == 9

    def test_refiner_never_sees_gold(self, small_corpus):
        provider = MockProvider()
        refiner = Refiner(Identifier(Gateway(provider)))
        sample = small_corpus.samples[0]
        refiner.refine_loop(sample, ProtocolConfig(max_rounds=2))
        for req in provider.calls:
            assert sample.gold_summary not in req.user_prompt
            assert sample.gold_summary not in req.system_prompt

    def test_invalid_config_rejected(self, small_corpus):
        refiner, _ = make_refiner()
        with pytest.raises(Exception):
            refiner.refine_loop(small_corpus.samples[0], ProtocolConfig(max_rounds=0))

    def test_empty_refinement_raises(self, small_corpus):
        script = MockScript(
            rules=(MockRule(pattern="Please improve this summary", response="   "),),
            default_response="VERDICT: yes",
        )
        refiner, _ = make_refiner(script)
        with pytest.raises(RefineFailure):
            refiner.refine_loop(small_corpus.samples[0], ProtocolConfig())


class TestRefineOnce:
    def test_returns_provider_text_verbatim(self, small_corpus):
        refiner, _ = make_refiner(ALWAYS_DETECT)
        payload = TransferPayload(mode=TransferMode.DIRECT, feedback_text="fix it")
        out = refiner.refine_once(small_corpus.samples[0].generated_summary, payload)
        assert out == "A better summary."


class TestMakeReferences:
    def test_four_keys_in_order(self, mock_gateway, small_corpus):
        gateway, provider = mock_gateway
        refiner = Refiner(Identifier(gateway))
        sample = small_corpus.samples[0]
        refs = refiner.make_references(sample)
        assert tuple(refs) == REFERENCE_KEYS
        assert refs["GOLD"] == sample.gold_summary
        assert refs["ORIG"] == sample.generated_summary
        assert refs["GPT-S"].strip()
        assert refs["GPT-R"].strip()
        assert provider.call_count == 2


class TestTraceValidation:
    def test_sparse_round_indices_rejected(self):
        trace = RefinementTrace(
            sample_id="s1",
            variant=ProtocolConfig(),
            rounds=[
                RefinementRound(1, "a", "d", "b"),
                RefinementRound(3, "b", "d", "c"),
            ],
            final_summary="c",
        )
        with pytest.raises(ValueError, match="dense"):
            trace.validate()

    def test_final_must_match_last_round(self):
        trace = RefinementTrace(
            sample_id="s1",
            variant=ProtocolConfig(),
            rounds=[RefinementRound(1, "a", "d", "b")],
            final_summary="other",
        )
        with pytest.raises(ValueError, match="final_summary"):
            trace.validate()

    def test_empty_trace_rejected(self):
        trace = RefinementTrace(sample_id="s1", variant=ProtocolConfig())
        with pytest.raises(ValueError, match="no rounds"):
            trace.validate()


class TestPersistence:
    def test_round_trip(self, small_corpus, tmp_path):
        refiner, _ = make_refiner(ALWAYS_DETECT)
        cfg = ProtocolConfig(max_rounds=2)
        trace = refiner.refine_loop(small_corpus.samples[0], cfg)
        path = save_trace(trace, tmp_path)
        assert path == refine_path(tmp_path, trace.sample_id, cfg.variant_label())
        loaded = load_trace(path)
        assert loaded.to_dict() == trace.to_dict()
        assert loaded.variant == cfg
        assert dataclasses.asdict(loaded.variant) == dataclasses.asdict(cfg)
