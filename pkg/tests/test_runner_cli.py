from __future__ import annotations

import json

import pytest

from sumrefine.cli import build_parser, load_config_file, main, resolve_options
from sumrefine.dataset import make_fixtures, save_corpus
from sumrefine.gateway import Gateway
from sumrefine.providers import MockProvider, MockRule, MockScript
from sumrefine.refine import REFERENCE_KEYS, load_trace, refine_path
from sumrefine.runner import (
    MIP_VARIANTS,
    finish_manifest,
    manifest_path,
    references_path,
    run_eval,
    run_identify,
    run_refine,
    start_manifest,
)
from sumrefine.taxonomy import ConfigError, enumerate_variants


@pytest.fixture(scope="module")
def tiny_corpus():
    return make_fixtures(seed=7, n=2)


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "c.jsonl"
    save_corpus(make_fixtures(seed=19, n=2), path)
    return path


def fresh_gateway() -> tuple[Gateway, MockProvider]:
    provider = MockProvider()
    return Gateway(provider), provider


class TestRunIdentify:
    def test_sections_files_and_reports(self, tiny_corpus, tmp_path):
        gateway, _ = fresh_gateway()
        sections = run_identify(tiny_corpus, gateway, tmp_path, ["multi-cot", "single-cot"])
        assert "Whole dataset" in sections
        assert set(sections["Whole dataset"]) == {"multi-cot", "single-cot"}
        for sample in tiny_corpus:
            assert (tmp_path / "identify" / f"{sample.id}.multi-cot.json").exists()
            assert (tmp_path / "identify" / f"{sample.id}.single-cot.json").exists()
        assert (tmp_path / "eval" / "identify_metrics.json").exists()
        report = (tmp_path / "eval" / "identify_report.md").read_text()
        assert "## Corpus statistics" in report
        assert "## Mistake identification accuracy" in report

    def test_erroneous_section_when_labels_positive(self, tmp_path):
        corpus = make_fixtures(seed=11, n=6)
        assert any(s.is_erroneous() for s in corpus)
        gateway, _ = fresh_gateway()
        sections = run_identify(corpus, gateway, tmp_path, ["multi-direct"])
        assert "Erroneous samples" in sections
        whole = sections["Whole dataset"]["multi-direct"]
        dirty = sections["Erroneous samples"]["multi-direct"]
        assert dirty.n_samples <= whole.n_samples

    def test_unknown_variant_rejected(self, tiny_corpus, tmp_path):
        gateway, _ = fresh_gateway()
        with pytest.raises(ConfigError, match="unknown identify variants"):
            run_identify(tiny_corpus, gateway, tmp_path, ["multi-cot", "bogus"])

    def test_resume_skips_completed_samples(self, tiny_corpus, tmp_path):
        gateway, provider = fresh_gateway()
        run_identify(tiny_corpus, gateway, tmp_path, ["multi-cot"])
        assert provider.call_count == 9 * len(tiny_corpus)

        gateway2, provider2 = fresh_gateway()
        run_identify(tiny_corpus, gateway2, tmp_path, ["multi-cot"])
        assert provider2.call_count == 0

        victim = tmp_path / "identify" / f"{tiny_corpus.samples[0].id}.multi-cot.json"
        victim.unlink()
        gateway3, provider3 = fresh_gateway()
        run_identify(tiny_corpus, gateway3, tmp_path, ["multi-cot"])
        assert provider3.call_count == 9
        assert victim.exists()


class TestRunRefine:
    def test_full_grid_artifacts(self, tiny_corpus, tmp_path):
        gateway, _ = fresh_gateway()
        count = run_refine(tiny_corpus, gateway, tmp_path)
        assert count == 16 * len(tiny_corpus)
        for sample in tiny_corpus:
            refs = json.loads(references_path(tmp_path, sample.id).read_text())
            assert set(refs) == set(REFERENCE_KEYS)
            for cfg in enumerate_variants():
                trace_file = refine_path(tmp_path, sample.id, cfg.variant_label())
                assert trace_file.exists()
                trace = load_trace(trace_file)
                trace.validate()
                assert trace.variant == cfg

    def test_resume_skips_existing_traces(self, tiny_corpus, tmp_path):
        variants = [enumerate_variants()[0]]
        gateway, provider = fresh_gateway()
        run_refine(tiny_corpus, gateway, tmp_path, variants=variants)
        first_cost = provider.call_count
        assert first_cost > 0

        gateway2, provider2 = fresh_gateway()
        run_refine(tiny_corpus, gateway2, tmp_path, variants=variants)
        assert provider2.call_count == 0

    def test_rounds_override(self, tiny_corpus, tmp_path):
        script = MockScript(
            rules=(
                MockRule(pattern="Please improve this summary", response="Better."),
                MockRule(pattern="Summarize the following meeting", response="Ref."),
                MockRule(pattern="Refine this summary by considering", response="Ref."),
            ),
            default_response="VERDICT: yes",
        )
        gateway = Gateway(MockProvider(script=script))
        variants = [enumerate_variants()[0]]
        run_refine(tiny_corpus, gateway, tmp_path, variants=variants, rounds=3)
        trace = load_trace(
            refine_path(tmp_path, tiny_corpus.samples[0].id, variants[0].variant_label())
        )
        assert len(trace.rounds) == 3
        assert trace.variant.max_rounds == 3


class TestRunEval:
    @pytest.fixture()
    def refined_dir(self, tiny_corpus, tmp_path):
        gateway, _ = fresh_gateway()
        variants = [enumerate_variants()[0], enumerate_variants()[8]]
        run_refine(tiny_corpus, gateway, tmp_path, variants=variants)
        return tmp_path

    def test_payload_and_report(self, tiny_corpus, refined_dir):
        gateway, _ = fresh_gateway()
        payload = run_eval(tiny_corpus, gateway, refined_dir, seed=3)
        assert payload["n_samples"] == len(tiny_corpus)
        assert payload["seed"] == 3
        assert payload["candidates"][:4] == list(REFERENCE_KEYS)
        assert len(payload["candidates"]) == 4 + 2
        assert set(payload["rouge"]) == set(payload["candidates"])
        assert set(payload["likert"]) == set(payload["candidates"])
        assert set(payload["ranking"]["avg_rank"]) == set(payload["candidates"])
        metrics_file = refined_dir / "eval" / "metrics.json"
        assert json.loads(metrics_file.read_text())["candidates"] == payload["candidates"]
        report = (refined_dir / "eval" / "quality_report.md").read_text()
        assert "## Refinement quality" in report
        for cid in payload["candidates"]:
            assert f"| {cid} |" in report

    def test_skip_judge_costs_nothing(self, tiny_corpus, refined_dir):
        gateway, provider = fresh_gateway()
        payload = run_eval(tiny_corpus, gateway, refined_dir, skip_judge=True)
        assert provider.call_count == 0
        assert "likert" not in payload
        assert "ranking" not in payload
        assert set(payload["rouge"]) == set(payload["candidates"])

    def test_missing_traces_raise(self, tiny_corpus, tmp_path):
        gateway, _ = fresh_gateway()
        with pytest.raises(FileNotFoundError):
            run_eval(tiny_corpus, gateway, tmp_path)

    def test_missing_references_raise(self, tiny_corpus, refined_dir):
        references_path(refined_dir, tiny_corpus.samples[0].id).unlink()
        gateway, _ = fresh_gateway()
        with pytest.raises(FileNotFoundError, match="references"):
            run_eval(tiny_corpus, gateway, refined_dir, skip_judge=True)


class TestManifest:
    def test_written_at_start_and_finished_later(self, tmp_path):
        manifest = start_manifest(
            tmp_path,
            "identify",
            corpus_path="c.jsonl",
            provider="mock",
            model="default",
            seed=4,
        )
        path = manifest_path(tmp_path, "identify")
        assert path.exists()
        first = json.loads(path.read_text())
        assert first["started_at"]
        assert first["finished_at"] == ""
        assert first["seed"] == 4
        assert first["versions"]

        finish_manifest(tmp_path, manifest)
        second = json.loads(path.read_text())
        assert second["finished_at"]

    def test_commands_do_not_clobber_each_other(self, tmp_path):
        fields = dict(corpus_path="c", provider="mock", model="m", seed=0)
        start_manifest(tmp_path, "identify", **fields)
        start_manifest(tmp_path, "refine", **fields)
        assert manifest_path(tmp_path, "identify").exists()
        assert manifest_path(tmp_path, "refine").exists()


class TestConfigResolution:
    def test_defaults(self):
        args = build_parser().parse_args(["identify", "--corpus", "c.jsonl"])
        opts = resolve_options(args)
        assert opts["provider"] == "mock"
        assert opts["rounds"] == 1
        assert opts["no_cache"] is False
        assert opts["corpus"] == "c.jsonl"

    def test_toml_file_then_flag_precedence(self, tmp_path):
        cfg = tmp_path / "conf.toml"
        cfg.write_text('seed = 9\nrounds = 2\nout = "from-file"\n', encoding="utf-8")
        args = build_parser().parse_args(
            ["refine", "--corpus", "c.jsonl", "--config", str(cfg), "--rounds", "5"]
        )
        opts = resolve_options(args)
        assert opts["seed"] == 9  # file beats default
        assert opts["rounds"] == 5  # flag beats file
        assert opts["out"] == "from-file"

    def test_json_config(self, tmp_path):
        cfg = tmp_path / "conf.json"
        cfg.write_text(json.dumps({"seed": 3, "no_cache": True}), encoding="utf-8")
        args = build_parser().parse_args(
            ["eval", "--corpus", "c.jsonl", "--config", str(cfg)]
        )
        opts = resolve_options(args)
        assert opts["seed"] == 3
        assert opts["no_cache"] is True

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "conf.toml"
        cfg.write_text('sedd = 1\n', encoding="utf-8")
        args = build_parser().parse_args(
            ["identify", "--corpus", "c.jsonl", "--config", str(cfg)]
        )
        with pytest.raises(ConfigError, match="unknown config keys"):
            resolve_options(args)

    def test_config_must_be_table(self, tmp_path):
        cfg = tmp_path / "conf.json"
        cfg.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError, match="table"):
            load_config_file(cfg)


class TestCliMain:
    def test_identify_exit_zero(self, corpus_file, tmp_path):
        out = tmp_path / "run"
        rc = main(
            [
                "identify",
                "--corpus",
                str(corpus_file),
                "--out",
                str(out),
                "--variants",
                "multi-cot",
            ]
        )
        assert rc == 0
        assert (out / "eval" / "identify_report.md").exists()
        assert manifest_path(out, "identify").exists()

    def test_refine_then_eval_skip_judge(self, corpus_file, tmp_path):
        out = tmp_path / "run"
        rc = main(
            [
                "refine",
                "--corpus",
                str(corpus_file),
                "--out",
                str(out),
                "--variants",
                "direct-essential",
            ]
        )
        assert rc == 0
        rc = main(
            ["eval", "--corpus", str(corpus_file), "--out", str(out), "--skip-judge"]
        )
        assert rc == 0
        payload = json.loads((out / "eval" / "metrics.json").read_text())
        assert payload["candidates"] == [*REFERENCE_KEYS, "direct-essential"]
        assert "likert" not in payload

    def test_unknown_variant_exits_one(self, corpus_file, tmp_path, capsys):
        rc = main(
            [
                "refine",
                "--corpus",
                str(corpus_file),
                "--out",
                str(tmp_path / "run"),
                "--variants",
                "no-such-variant",
            ]
        )
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_corpus_exits_one(self, tmp_path, capsys):
        rc = main(["identify", "--out", str(tmp_path / "run")])
        assert rc == 1
        assert "corpus" in capsys.readouterr().err

    def test_openai_compat_requires_base_url(self, corpus_file, tmp_path, capsys):
        rc = main(
            [
                "identify",
                "--corpus",
                str(corpus_file),
                "--out",
                str(tmp_path / "run"),
                "--provider",
                "openai-compat",
            ]
        )
        assert rc == 1
        assert "base-url" in capsys.readouterr().err

    def test_variant_labels_listed_in_cli(self):
        # Parser help must advertise the four detector variants.
        parser = build_parser()
        assert set(MIP_VARIANTS) == {"multi-direct", "multi-cot", "single-direct", "single-cot"}
        assert parser.prog == "sumrefine"
