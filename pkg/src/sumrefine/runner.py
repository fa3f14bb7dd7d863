"""Run orchestration: identification benchmarks, refinement grids, evaluation.

A run lives in one directory: ``identify/`` and ``refine/`` hold per-sample
JSON artifacts, ``eval/`` holds metric reports, ``cache/`` holds the response
cache, and ``manifest.json`` records enough configuration to reproduce the
run. Completed sample artifacts are skipped on re-run, so interrupted runs
resume without duplicate provider calls.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .dataset import Corpus, corpus_stats
from .feedback import FeedbackBuilder
from .gateway import Gateway, write_json_atomic
from .identify import Identifier, identify_path, load_result, save_result
from .judge import Judge, LikertScores, aggregate_likert
from .metrics import DetectionMetrics, RougeScores, detection_metrics, rouge
from .refine import REFERENCE_KEYS, Refiner, load_trace, refine_path, save_trace
from .reports import render_table1, render_table2, render_table3
from .taxonomy import (
    ConfigError,
    MipSetup,
    PromptingMode,
    ProtocolConfig,
    enumerate_variants,
    validate_config,
)

__all__ = [
    "RunManifest",
    "MIP_VARIANTS",
    "manifest_path",
    "references_path",
    "start_manifest",
    "finish_manifest",
    "run_identify",
    "run_refine",
    "run_eval",
]

logger = logging.getLogger(__name__)

# The four detector setups benchmarked against human labels.
MIP_VARIANTS: dict[str, ProtocolConfig] = {
    "multi-direct": ProtocolConfig(
        mip_setup=MipSetup.MULTI_INSTANCE, prompting=PromptingMode.DIRECT
    ),
    "multi-cot": ProtocolConfig(
        mip_setup=MipSetup.MULTI_INSTANCE, prompting=PromptingMode.COT
    ),
    "single-direct": ProtocolConfig(
        mip_setup=MipSetup.SINGLE_INSTANCE, prompting=PromptingMode.DIRECT
    ),
    "single-cot": ProtocolConfig(
        mip_setup=MipSetup.SINGLE_INSTANCE, prompting=PromptingMode.COT
    ),
}


@dataclass
class RunManifest:
    """Reproducibility record written before the first provider call."""

    run_id: str
    command: str
    corpus_path: str
    provider: str
    model: str
    seed: int
    variants: list[str] = field(default_factory=list)
    rounds: int = 1
    concurrency: int = 4
    cache_enabled: bool = True
    started_at: str = ""
    finished_at: str = ""
    versions: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "command": self.command,
            "corpus_path": self.corpus_path,
            "provider": self.provider,
            "model": self.model,
            "seed": self.seed,
            "variants": list(self.variants),
            "rounds": self.rounds,
            "concurrency": self.concurrency,
            "cache_enabled": self.cache_enabled,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "versions": dict(self.versions),
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _module_versions() -> dict[str, str]:
    modules = (
        "taxonomy",
        "gateway",
        "prompts",
        "identify",
        "feedback",
        "refine",
        "metrics",
        "judge",
        "dataset",
        "cli",
    )
    return {name: __version__ for name in modules}


def manifest_path(run_dir: Path, command: str) -> Path:
    return Path(run_dir) / f"manifest.{command}.json"


def write_manifest(run_dir: Path, manifest: RunManifest) -> Path:
    path = manifest_path(run_dir, manifest.command)
    write_json_atomic(path, manifest.to_dict())
    return path


def start_manifest(run_dir: Path, command: str, **fields) -> RunManifest:
    manifest = RunManifest(
        run_id=f"{command}-{fields.get('seed', 0)}",
        command=command,
        started_at=_now(),
        versions=_module_versions(),
        **fields,
    )
    write_manifest(run_dir, manifest)
    return manifest


def finish_manifest(run_dir: Path, manifest: RunManifest) -> None:
    manifest.finished_at = _now()
    write_manifest(run_dir, manifest)


def references_path(run_dir: Path, sample_id: str) -> Path:
    return Path(run_dir) / "refine" / f"{sample_id}.references.json"


def run_identify(
    corpus: Corpus,
    gateway: Gateway,
    run_dir: Path,
    variant_labels: Sequence[str] | None = None,
    concurrency: int = 4,
) -> dict[str, dict[str, DetectionMetrics]]:
    """Benchmark the requested detector variants over a labeled corpus.

    Returns sections ("Whole dataset", and "Erroneous samples" when the
    corpus has any) mapping variant label to metrics, and writes
    ``eval/identify_metrics.json`` plus a detection report table.
    """
    labels = list(variant_labels or MIP_VARIANTS)
    unknown = [v for v in labels if v not in MIP_VARIANTS]
    if unknown:
        raise ConfigError(
            f"unknown identify variants {unknown}; choose from {sorted(MIP_VARIANTS)}"
        )
    run_dir = Path(run_dir)
    identifier = Identifier(gateway, max_workers=concurrency)

    results_by_variant: dict[str, list] = {}
    for label in labels:
        cfg = MIP_VARIANTS[label]

        def one(sample):
            path = identify_path(run_dir, sample.id, cfg.mip_label())
            if path.exists():
                return load_result(path)
            result = identifier.identify(sample, cfg)
            save_result(result, run_dir)
            return result

        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            results_by_variant[label] = list(pool.map(one, corpus.samples))

    sections: dict[str, dict[str, DetectionMetrics]] = {
        "Whole dataset": {
            label: detection_metrics(results_by_variant[label], corpus.samples)
            for label in labels
        }
    }
    if any(s.is_erroneous() for s in corpus.samples):
        sections["Erroneous samples"] = {
            label: detection_metrics(
                results_by_variant[label], corpus.samples, erroneous_only=True
            )
            for label in labels
        }

    payload = {
        section: {label: m.to_dict() for label, m in by_variant.items()}
        for section, by_variant in sections.items()
    }
    write_json_atomic(run_dir / "eval" / "identify_metrics.json", payload)
    report = "\n\n".join(
        [render_table1(corpus_stats(corpus)), render_table2(sections)]
    )
    report_path = run_dir / "eval" / "identify_report.md"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report + "\n", encoding="utf-8")
    return sections


def run_refine(
    corpus: Corpus,
    gateway: Gateway,
    run_dir: Path,
    variants: Sequence[ProtocolConfig] | None = None,
    rounds: int = 1,
    concurrency: int = 4,
    early_stop: bool = True,
) -> int:
    """Refine every sample under every requested variant; returns trace count.

    Also produces the four reference summaries per sample. Completed
    sample-variant artifacts are skipped, which makes interrupted runs
    resumable without repeat provider calls.
    """
    run_dir = Path(run_dir)
    if variants is None:
        base = enumerate_variants()
    else:
        base = list(variants)
    configs = []
    for cfg in base:
        if rounds != cfg.max_rounds:
            cfg = dataclasses.replace(cfg, max_rounds=rounds)
        validate_config(cfg)
        configs.append(cfg)

    identifier = Identifier(gateway, max_workers=concurrency)
    refiner = Refiner(identifier, early_stop=early_stop)

    def make_refs(sample) -> None:
        path = references_path(run_dir, sample.id)
        if path.exists():
            return
        write_json_atomic(path, refiner.make_references(sample))

    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        list(pool.map(make_refs, corpus.samples))

    tasks = [(sample, cfg) for cfg in configs for sample in corpus.samples]

    def one(task) -> None:
        sample, cfg = task
        path = refine_path(run_dir, sample.id, cfg.variant_label())
        if path.exists():
            return
        trace = refiner.refine_loop(sample, cfg)
        save_trace(trace, run_dir)

    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        list(pool.map(one, tasks))
    return len(tasks)


def _discover_variants(run_dir: Path, sample_id: str) -> list[str]:
    """Variant labels with traces for a sample, in canonical order."""
    refine_dir = Path(run_dir) / "refine"
    prefix = f"{sample_id}."
    found = {
        p.name[len(prefix) : -len(".json")]
        for p in refine_dir.glob(f"{prefix}*.json")
        if not p.name.endswith(".references.json")
    }
    canonical = [cfg.variant_label() for cfg in enumerate_variants()]
    ordered = [label for label in canonical if label in found]
    ordered += sorted(found - set(canonical))
    return ordered


def run_eval(
    corpus: Corpus,
    gateway: Gateway,
    run_dir: Path,
    seed: int = 0,
    skip_judge: bool = False,
    concurrency: int = 4,
) -> dict:
    """Score a finished refinement run: ROUGE, Likert judging, K-way ranking.

    Expects traces and references under ``run_dir/refine``; raises
    ``FileNotFoundError`` when they are missing. Writes ``eval/metrics.json``
    and a quality report table.
    """
    run_dir = Path(run_dir)
    sample_ids = [s.id for s in corpus.samples]
    variants = _discover_variants(run_dir, sample_ids[0])
    if not variants:
        raise FileNotFoundError(f"no refinement traces under {run_dir / 'refine'}")

    candidates_order = [*REFERENCE_KEYS, *variants]
    per_sample_candidates: dict[str, dict[str, str]] = {}
    for sample in corpus.samples:
        refs_file = references_path(run_dir, sample.id)
        if not refs_file.exists():
            raise FileNotFoundError(f"missing references for sample {sample.id}")
        refs = json.loads(refs_file.read_text(encoding="utf-8"))
        texts: dict[str, str] = {key: refs[key] for key in REFERENCE_KEYS}
        for label in variants:
            trace_file = refine_path(run_dir, sample.id, label)
            if not trace_file.exists():
                raise FileNotFoundError(
                    f"missing trace for sample {sample.id}, variant {label}"
                )
            texts[label] = load_trace(trace_file).final_summary
        per_sample_candidates[sample.id] = texts

    rouge_acc: dict[str, list[RougeScores]] = {cid: [] for cid in candidates_order}
    for sample in corpus.samples:
        for cid in candidates_order:
            rouge_acc[cid].append(
                rouge(per_sample_candidates[sample.id][cid], sample.gold_summary)
            )
    rouge_means = {
        cid: RougeScores(
            r1=sum(s.r1 for s in scores) / len(scores),
            r2=sum(s.r2 for s in scores) / len(scores),
            rlsum=sum(s.rlsum for s in scores) / len(scores),
        )
        for cid, scores in rouge_acc.items()
    }

    payload: dict = {
        "n_samples": len(corpus.samples),
        "seed": seed,
        "candidates": candidates_order,
        "rouge": {cid: rouge_means[cid].to_dict() for cid in candidates_order},
    }

    likert_by_candidate: dict[str, LikertScores] = {}
    ranking = None
    if not skip_judge:
        judge = Judge(gateway, seed=seed)

        def likert_for(sample) -> tuple[str, dict[str, dict[str, int]], list[str]]:
            per_candidate: dict[str, dict[str, int]] = {}
            flagged: list[str] = []
            for cid in candidates_order:
                scores, conflict = judge.judge_likert(
                    per_sample_candidates[sample.id][cid], sample.transcript_text()
                )
                per_candidate[cid] = scores
                if conflict:
                    flagged.append(cid)
            return sample.id, per_candidate, flagged

        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            likert_rows = list(pool.map(likert_for, corpus.samples))

        for cid in candidates_order:
            per_sample = {sid: scores[cid] for sid, scores, _ in likert_rows}
            flagged = sorted(
                f"{sid}:{cid}" for sid, _, flags in likert_rows if cid in flags
            )
            likert_by_candidate[cid] = LikertScores(
                per_dimension=aggregate_likert(per_sample),
                per_sample=per_sample,
                flagged=flagged,
            )

        items = [
            (s.id, s.transcript_text(), per_sample_candidates[s.id])
            for s in corpus.samples
        ]
        ranking = judge.rank_many(items)
        payload["likert"] = {
            cid: likert_by_candidate[cid].to_dict() for cid in candidates_order
        }
        payload["ranking"] = ranking.to_dict()

    write_json_atomic(run_dir / "eval" / "metrics.json", payload)

    report = render_table3(
        candidates_order,
        avg_rank=ranking.avg_rank if ranking else {},
        likert={
            cid: likert_by_candidate[cid].per_dimension for cid in likert_by_candidate
        },
        rouge_means=rouge_means,
    )
    report_path = run_dir / "eval" / "quality_report.md"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report + "\n", encoding="utf-8")
    return payload
