"""Markdown report rendering for corpus stats, detection, and refinement.

All renderers are pure string builders over already-computed values, so
reports are byte-stable for identical inputs. Numbers are fixed-precision:
percentages one decimal, Likert and rank two decimals, ROUGE three.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .dataset import CorpusStats
from .metrics import DetectionMetrics, RougeScores
from .taxonomy import ERROR_ORDER

__all__ = [
    "render_table1",
    "render_table2",
    "render_table3",
]


def _row(cells: Sequence[str]) -> str:
    return "| " + " | ".join(cells) + " |"


def _fmt_pct(value: float | None) -> str:
    return f"{value:.1f}" if value is not None else "n/a"


def render_table1(stats: CorpusStats, title: str = "Corpus statistics") -> str:
    """One-row statistics table: meeting counts and average lengths."""
    header = [
        "Meetings",
        "Erroneous",
        "Avg. turns",
        "Avg. speakers",
        "Meeting len.",
        "Gold len.",
        "Generated len.",
    ]
    values = [
        str(stats.n_meetings),
        str(stats.n_erroneous),
        f"{stats.avg_turns:.1f}",
        f"{stats.avg_speakers:.1f}",
        f"{stats.avg_meeting_len_words:.1f}",
        f"{stats.avg_gold_len_words:.1f}",
        f"{stats.avg_auto_len_words:.1f}",
    ]
    return "\n".join(
        [
            f"## {title}",
            "",
            _row(header),
            _row(["---"] * len(header)),
            _row(values),
            "",
            "Lengths are average word counts.",
        ]
    )


def render_table2(
    sections: Mapping[str, Mapping[str, DetectionMetrics]],
    title: str = "Mistake identification accuracy",
) -> str:
    """Accuracy per error type for every detector variant, plus baseline.

    ``sections`` maps a section name (for example "Whole dataset" or
    "Erroneous samples") to per-variant metrics keyed by variant label.
    """
    lines = [f"## {title}", ""]
    for section, by_variant in sections.items():
        variant_labels = list(by_variant)
        if not variant_labels:
            continue
        first = by_variant[variant_labels[0]]
        lines.append(f"### {section}")
        lines.append("")
        lines.append(_row(["Error", *variant_labels, "Always True"]))
        lines.append(_row(["---"] * (len(variant_labels) + 2)))
        for code in ERROR_ORDER:
            cells = [str(code)]
            for label in variant_labels:
                cells.append(_fmt_pct(by_variant[label].per_error[code].accuracy))
            cells.append(_fmt_pct(first.baseline_always_true[code]))
            lines.append(_row(cells))
        mean_cells = ["Mean"]
        for label in variant_labels:
            mean_cells.append(_fmt_pct(by_variant[label].mean_accuracy))
        baseline_mean = sum(first.baseline_always_true[c] for c in ERROR_ORDER) / len(
            ERROR_ORDER
        )
        mean_cells.append(_fmt_pct(baseline_mean))
        lines.append(_row(mean_cells))
        lines.append("")
    lines.append("Values are accuracy in percent; Always True flags every sample.")
    return "\n".join(lines)


def render_table3(
    candidates: Sequence[str],
    avg_rank: Mapping[str, float],
    likert: Mapping[str, Mapping[str, float]],
    rouge_means: Mapping[str, RougeScores],
    title: str = "Refinement quality",
) -> str:
    """Per-candidate ranking, Likert, and ROUGE aggregate table.

    Rank is the average position across samples (lower is better); Likert
    columns are 1..5 means (higher is better).
    """
    header = [
        "Summary",
        "Rank (lower better)",
        "REL",
        "INF",
        "CON",
        "COH",
        "R-1",
        "R-2",
        "R-LSum",
    ]
    lines = [f"## {title}", "", _row(header), _row(["---"] * len(header))]
    for cid in candidates:
        scores = likert.get(cid, {})
        rg = rouge_means.get(cid)
        lines.append(
            _row(
                [
                    cid,
                    f"{avg_rank[cid]:.2f}" if cid in avg_rank else "n/a",
                    *(
                        f"{scores[dim]:.2f}" if dim in scores else "n/a"
                        for dim in ("REL", "INF", "CON", "COH")
                    ),
                    f"{rg.r1:.3f}" if rg else "n/a",
                    f"{rg.r2:.3f}" if rg else "n/a",
                    f"{rg.rlsum:.3f}" if rg else "n/a",
                ]
            )
        )
    lines.append("")
    lines.append(
        "Rank averages K-way judge rankings across samples; REL/INF/CON/COH "
        "are mean 1-5 judge scores; ROUGE is F1 against the gold summary."
    )
    return "\n".join(lines)
