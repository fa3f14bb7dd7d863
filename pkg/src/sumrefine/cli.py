"""Command-line surface: identify, refine, and eval subcommands.

Configuration can come from a TOML or JSON file (``--config``); explicit
flags override file values, which override built-in defaults. The config
file holds a flat table whose keys match the long flag names with dashes
replaced by underscores, for example::

    corpus = "corpus.jsonl"
    provider = "mock"
    variants = "all"
    rounds = 1
    seed = 7
    out = "runs/demo"
    concurrency = 4
    no_cache = false

Every command exits 0 on success and 1 on failure with a diagnostic on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Mapping, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dataset import load_corpus
from .gateway import Gateway
from .providers import MockProvider, OpenAICompatProvider
from .runner import (
    MIP_VARIANTS,
    finish_manifest,
    run_eval,
    run_identify,
    run_refine,
    start_manifest,
)
from .taxonomy import ConfigError, enumerate_variants

__all__ = ["main", "build_parser", "load_config_file", "resolve_options"]

logger = logging.getLogger(__name__)

_DEFAULTS: dict[str, Any] = {
    "provider": "mock",
    "model": "default",
    "variants": "all",
    "rounds": 1,
    "seed": 0,
    "out": "run",
    "concurrency": 4,
    "no_cache": False,
    "base_url": None,
    "skip_judge": False,
    "no_early_stop": False,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sumrefine",
        description="Find typed errors in meeting summaries, refine them, and score the results.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--corpus", help="corpus JSONL path")
        p.add_argument("--config", help="TOML or JSON config file; flags override it")
        p.add_argument(
            "--provider", choices=["mock", "openai-compat"], help="backend (default mock)"
        )
        p.add_argument("--model", help="model identifier passed to the provider")
        p.add_argument("--base-url", dest="base_url", help="openai-compat endpoint URL")
        p.add_argument("--seed", type=int, help="seed for shuffles and jitter")
        p.add_argument("--out", help="run directory (default ./run)")
        p.add_argument("--concurrency", type=int, help="worker pool size (default 4)")
        p.add_argument(
            "--no-cache",
            dest="no_cache",
            action="store_const",
            const=True,
            help="disable the response cache",
        )

    p_identify = sub.add_parser("identify", help="benchmark error detection variants")
    common(p_identify)
    p_identify.add_argument(
        "--variants",
        help=f"comma-separated subset of {','.join(MIP_VARIANTS)} or 'all'",
    )

    p_refine = sub.add_parser("refine", help="refine summaries under variant grids")
    common(p_refine)
    p_refine.add_argument(
        "--variants",
        help="comma-separated refinement variant labels (e.g. direct-cot+cor) or 'all'",
    )
    p_refine.add_argument("--rounds", type=int, help="refinement rounds (default 1)")
    p_refine.add_argument(
        "--no-early-stop",
        dest="no_early_stop",
        action="store_const",
        const=True,
        help="always run the full round budget",
    )

    p_eval = sub.add_parser("eval", help="score a finished refinement run")
    common(p_eval)
    p_eval.add_argument(
        "--skip-judge",
        dest="skip_judge",
        action="store_const",
        const=True,
        help="compute ROUGE only; no judge calls",
    )
    return parser


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Flat option table from a TOML or JSON file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        data = tomllib.loads(text)
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a table/object at top level")
    return data


def resolve_options(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then config-file values, then explicit flags."""
    resolved = dict(_DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        file_values = load_config_file(config_path)
        unknown = set(file_values) - set(_DEFAULTS) - {"corpus"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(file_values)
    for key in [*_DEFAULTS, "corpus"]:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    resolved.setdefault("corpus", None)
    return resolved


def _make_gateway(opts: Mapping[str, Any], run_dir: Path) -> Gateway:
    if opts["provider"] == "mock":
        provider = MockProvider()
    else:
        if not opts["base_url"]:
            raise ConfigError("--base-url is required with --provider openai-compat")
        provider = OpenAICompatProvider(base_url=opts["base_url"])
    cache_dir = None if opts["no_cache"] else run_dir / "cache"
    return Gateway(
        provider,
        cache_dir=cache_dir,
        max_concurrency=max(1, int(opts["concurrency"])),
        jitter_seed=int(opts["seed"]),
    )


def _load_corpus(opts: Mapping[str, Any]):
    if not opts["corpus"]:
        raise ConfigError("--corpus is required")
    return load_corpus(opts["corpus"])


def _manifest_fields(opts: Mapping[str, Any], variants: list[str]) -> dict[str, Any]:
    return {
        "corpus_path": str(opts["corpus"]),
        "provider": opts["provider"],
        "model": opts["model"],
        "seed": int(opts["seed"]),
        "variants": variants,
        "rounds": int(opts["rounds"]),
        "concurrency": int(opts["concurrency"]),
        "cache_enabled": not opts["no_cache"],
    }


def _identify_labels(variants_text: str) -> list[str]:
    if variants_text == "all":
        return list(MIP_VARIANTS)
    labels = [v.strip() for v in variants_text.split(",") if v.strip()]
    if not labels:
        raise ConfigError("--variants must name at least one variant")
    return labels


def _refine_variants(variants_text: str):
    all_variants = {cfg.variant_label(): cfg for cfg in enumerate_variants()}
    if variants_text == "all":
        return list(all_variants.values())
    labels = [v.strip() for v in variants_text.split(",") if v.strip()]
    unknown = [v for v in labels if v not in all_variants]
    if unknown:
        raise ConfigError(
            f"unknown refinement variants {unknown}; choose from {sorted(all_variants)}"
        )
    if not labels:
        raise ConfigError("--variants must name at least one variant")
    return [all_variants[v] for v in labels]


def cmd_identify(opts: Mapping[str, Any]) -> int:
    corpus = _load_corpus(opts)
    labels = _identify_labels(opts["variants"])
    run_dir = Path(opts["out"])
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = start_manifest(run_dir, "identify", **_manifest_fields(opts, labels))
    gateway = _make_gateway(opts, run_dir)
    run_identify(
        corpus,
        gateway,
        run_dir,
        variant_labels=labels,
        concurrency=int(opts["concurrency"]),
    )
    finish_manifest(run_dir, manifest)
    logger.info("identify run complete: %s", run_dir / "eval" / "identify_report.md")
    return 0


def cmd_refine(opts: Mapping[str, Any]) -> int:
    corpus = _load_corpus(opts)
    variants = _refine_variants(opts["variants"])
    run_dir = Path(opts["out"])
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = start_manifest(
        run_dir, "refine", **_manifest_fields(opts, [v.variant_label() for v in variants])
    )
    gateway = _make_gateway(opts, run_dir)
    run_refine(
        corpus,
        gateway,
        run_dir,
        variants=variants,
        rounds=int(opts["rounds"]),
        concurrency=int(opts["concurrency"]),
        early_stop=not opts["no_early_stop"],
    )
    finish_manifest(run_dir, manifest)
    logger.info("refine run complete: %s", run_dir / "refine")
    return 0


def cmd_eval(opts: Mapping[str, Any]) -> int:
    corpus = _load_corpus(opts)
    run_dir = Path(opts["out"])
    manifest = start_manifest(run_dir, "eval", **_manifest_fields(opts, []))
    gateway = _make_gateway(opts, run_dir)
    run_eval(
        corpus,
        gateway,
        run_dir,
        seed=int(opts["seed"]),
        skip_judge=bool(opts["skip_judge"]),
        concurrency=int(opts["concurrency"]),
    )
    finish_manifest(run_dir, manifest)
    logger.info("eval complete: %s", run_dir / "eval" / "metrics.json")
    return 0


_COMMANDS = {"identify": cmd_identify, "refine": cmd_refine, "eval": cmd_eval}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](resolve_options(args))
    except Exception as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
