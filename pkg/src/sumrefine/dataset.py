"""Corpus loading, validation, statistics, and synthetic fixtures.

The corpus format is JSONL: one sample object per line with ``id``,
``transcript`` (array of ``{speaker, text}``), ``gold_summary``,
``generated_summary``, optional ``generator_model``, and optional
``human_labels`` covering all nine error codes. Fixture generation builds
desk-scale corpora by injecting known errors into clean synthetic meetings,
so labels are correct by construction.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .taxonomy import ERROR_ORDER, ErrorCode, Sample, Turn

__all__ = [
    "SchemaError",
    "Corpus",
    "CorpusStats",
    "load_corpus",
    "save_corpus",
    "corpus_stats",
    "make_fixtures",
    "make_fixtures_with_log",
]


class SchemaError(ValueError):
    """A corpus file violates the sample schema; message names line and field."""


@dataclass
class Corpus:
    """An ordered collection of samples from one source."""

    samples: list[Sample]
    source_tag: str = "synthetic"

    def __post_init__(self) -> None:
        if not self.samples:
            raise SchemaError("corpus is empty")
        seen: set[str] = set()
        for sample in self.samples:
            if sample.id in seen:
                raise SchemaError(f"duplicate sample id {sample.id!r}")
            seen.add(sample.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def by_id(self, sample_id: str) -> Sample:
        for sample in self.samples:
            if sample.id == sample_id:
                return sample
        raise KeyError(sample_id)


@dataclass(frozen=True)
class CorpusStats:
    """Table-style corpus statistics; lengths are word counts."""

    n_meetings: int
    n_erroneous: int
    avg_turns: float
    avg_speakers: float
    avg_meeting_len_words: float
    avg_gold_len_words: float
    avg_auto_len_words: float

    def to_dict(self) -> dict:
        return {
            "n_meetings": self.n_meetings,
            "n_erroneous": self.n_erroneous,
            "avg_turns": self.avg_turns,
            "avg_speakers": self.avg_speakers,
            "avg_meeting_len_words": self.avg_meeting_len_words,
            "avg_gold_len_words": self.avg_gold_len_words,
            "avg_auto_len_words": self.avg_auto_len_words,
        }


def _field(record: Mapping, name: str, line: int, kind: type) -> object:
    if name not in record:
        raise SchemaError(f"line {line}: missing field {name!r}")
    value = record[name]
    if not isinstance(value, kind):
        raise SchemaError(
            f"line {line}: field {name!r} must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _parse_sample(record: Mapping, line: int) -> Sample:
    sample_id = _field(record, "id", line, str)
    raw_turns = _field(record, "transcript", line, list)
    if not raw_turns:
        raise SchemaError(f"line {line}: field 'transcript' must be a non-empty array")
    turns = []
    for i, raw in enumerate(raw_turns):
        if not isinstance(raw, dict) or "speaker" not in raw or "text" not in raw:
            raise SchemaError(
                f"line {line}: transcript[{i}] must be an object with 'speaker' and 'text'"
            )
        if not isinstance(raw["speaker"], str) or not isinstance(raw["text"], str):
            raise SchemaError(f"line {line}: transcript[{i}] speaker/text must be strings")
        turns.append(Turn(speaker=raw["speaker"], text=raw["text"]))

    labels = None
    if record.get("human_labels") is not None:
        raw_labels = _field(record, "human_labels", line, dict)
        labels = {}
        for code in ERROR_ORDER:
            if str(code) not in raw_labels:
                raise SchemaError(f"line {line}: human_labels missing {code}")
            value = raw_labels[str(code)]
            if not isinstance(value, bool):
                raise SchemaError(f"line {line}: human_labels[{code}] must be boolean")
            labels[code] = value
        unknown = set(raw_labels) - {str(c) for c in ERROR_ORDER}
        if unknown:
            raise SchemaError(
                f"line {line}: human_labels has unknown codes {sorted(unknown)}"
            )

    try:
        return Sample(
            id=sample_id,
            transcript=tuple(turns),
            gold_summary=_field(record, "gold_summary", line, str),
            generated_summary=_field(record, "generated_summary", line, str),
            generator_model=record.get("generator_model", ""),
            human_labels=labels,
        )
    except ValueError as exc:
        raise SchemaError(f"line {line}: {exc}") from exc


def load_corpus(path: Path | str, source_tag: str | None = None) -> Corpus:
    """Parse a JSONL corpus file, failing hard with line-numbered messages."""
    path = Path(path)
    samples: list[Sample] = []
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {line_no}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise SchemaError(f"line {line_no}: expected a JSON object")
            samples.append(_parse_sample(record, line_no))
    return Corpus(samples=samples, source_tag=source_tag or path.stem)


def _sample_to_record(sample: Sample) -> dict:
    record: dict = {
        "id": sample.id,
        "transcript": [{"speaker": t.speaker, "text": t.text} for t in sample.transcript],
        "gold_summary": sample.gold_summary,
        "generated_summary": sample.generated_summary,
        "generator_model": sample.generator_model,
    }
    if sample.human_labels is not None:
        record["human_labels"] = {str(c): sample.human_labels[c] for c in ERROR_ORDER}
    return record


def save_corpus(corpus: Corpus, path: Path | str) -> Path:
    """Write a corpus as JSONL with a stable key order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for sample in corpus.samples:
            handle.write(json.dumps(_sample_to_record(sample), sort_keys=True))
            handle.write("\n")
    return path


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Averages over meetings; words counted by whitespace splitting.

    Meeting length counts utterance words only (speaker names are metadata);
    turns are counted raw, with no merging of consecutive same-speaker turns.
    """
    n = len(corpus.samples)
    turns = [len(s.transcript) for s in corpus.samples]
    speakers = [len({t.speaker for t in s.transcript}) for s in corpus.samples]
    meeting_words = [sum(len(t.text.split()) for t in s.transcript) for s in corpus.samples]
    gold_words = [len(s.gold_summary.split()) for s in corpus.samples]
    auto_words = [len(s.generated_summary.split()) for s in corpus.samples]
    return CorpusStats(
        n_meetings=n,
        n_erroneous=sum(1 for s in corpus.samples if s.is_erroneous()),
        avg_turns=sum(turns) / n,
        avg_speakers=sum(speakers) / n,
        avg_meeting_len_words=sum(meeting_words) / n,
        avg_gold_len_words=sum(gold_words) / n,
        avg_auto_len_words=sum(auto_words) / n,
    )


# --- synthetic fixture generation -----------------------------------------

_SPEAKERS = ("Ana", "Ben", "Chloe", "Dev", "Eda", "Farid", "Gus", "Hana")
_PROJECTS = ("Atlas", "Borealis", "Coral", "Dune", "Ember")
_ARTIFACTS = ("agenda", "roadmap", "budget sheet", "test plan", "hiring plan")
_VERBS = ("send", "draft", "review", "update", "share")
_WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday")
_REGIONS = ("Europe", "Asia", "North America", "Latin America")
_ROOMS = ("Maple", "Cedar", "Birch", "Willow")
_FAKE_VENDORS = ("Acme Corp", "Globex", "Initech", "Vandelay")
_FILLERS = ("Noted.", "Sounds good.", "Agreed.", "Understood.", "Makes sense.")

_WILL_RE = re.compile(r"\bwill (\w+)\b")


def _make_clean_sample(rng: random.Random) -> tuple[list[Turn], list[tuple[str, str]], str]:
    """Build a clean meeting: transcript turns, (essential, detail) facts,
    and one small-talk sentence that appears in the transcript only."""
    speakers = rng.sample(_SPEAKERS, rng.randint(2, 4))
    project = rng.choice(_PROJECTS)
    actor_a, actor_b = rng.sample(speakers, 2)

    facts = [
        (
            f"The {project} {rng.choice(_ARTIFACTS)} review moves to "
            f"{rng.choice(_WEEKDAYS)}",
            f"at {rng.randint(9, 11)}am in the {rng.choice(_ROOMS)} room.",
        ),
        (
            f"{actor_a} will {rng.choice(_VERBS)} the {rng.choice(_ARTIFACTS)}",
            f"by {rng.choice(_WEEKDAYS)}.",
        ),
        (
            f"{actor_b} will {rng.choice(_VERBS)} the {rng.choice(_ARTIFACTS)}",
            f"before the {rng.choice(_WEEKDAYS)} checkpoint.",
        ),
        (
            f"The {project} budget increases by {5 * rng.randint(2, 12)} percent",
            f"in {rng.choice(_REGIONS)}.",
        ),
    ]
    if rng.random() < 0.5:
        facts.append(
            (
                f"The team agreed to hire {rng.randint(1, 4)} more engineers",
                f"for the {project} team.",
            )
        )

    small_talk = f"The office party is on {rng.choice(_WEEKDAYS)}."
    turns: list[Turn] = [
        Turn(speaker=rng.choice(speakers), text=f"Let's get started on {project}.")
    ]
    for essential, detail in facts:
        turns.append(Turn(speaker=rng.choice(speakers), text=f"{essential} {detail}"))
        if rng.random() < 0.4:
            turns.append(Turn(speaker=rng.choice(speakers), text=rng.choice(_FILLERS)))
    turns.append(Turn(speaker=rng.choice(speakers), text=f"By the way: {small_talk}"))
    return turns, facts, small_talk


def _inject(
    rng: random.Random,
    code: ErrorCode,
    sentences: list[str],
    essentials: list[str],
    small_talk: str,
    names: tuple[str, ...],
) -> None:
    """Apply one error injection in place; the order below keeps targets valid."""
    if code is ErrorCode.T_OM:
        # Drop a whole topic. Index 1 (the first "will" fact) is protected so
        # the language and reference injectors always keep a target.
        victim = rng.choice([i for i in range(len(sentences)) if i != 1])
        del sentences[victim]
        del essentials[victim]
    elif code is ErrorCode.P_OM:
        # Replace one sentence by its essential clause, losing the detail.
        idx = rng.randrange(len(sentences))
        sentences[idx] = essentials[idx] + "."
    elif code is ErrorCode.LAN:
        for i, s in enumerate(sentences):
            m = _WILL_RE.search(s)
            if m:
                sentences[i] = s.replace(m.group(0), f"will {m.group(1)}s", 1)
                break
    elif code is ErrorCode.COR:
        for i, s in enumerate(sentences):
            present = [n for n in names if n in s]
            if present:
                wrong = rng.choice([n for n in _SPEAKERS if n not in names])
                sentences[i] = s.replace(present[0], wrong, 1)
                break
    elif code is ErrorCode.INC:
        idx = rng.randrange(len(sentences))
        words = sentences[idx].rstrip(".").split()
        sentences[idx] = " ".join(reversed(words)) + "."
    elif code is ErrorCode.STR:
        i, j = sorted(rng.sample(range(len(sentences)), 2))
        sentences[i], sentences[j] = sentences[j], sentences[i]
    elif code is ErrorCode.REP:
        idx = rng.randrange(len(sentences))
        sentences.insert(idx + 1, sentences[idx])
    elif code is ErrorCode.HAL:
        sentences.append(
            f"The committee awarded the contract to {rng.choice(_FAKE_VENDORS)} "
            f"for {rng.randint(1, 9)} million."
        )
    elif code is ErrorCode.IRR:
        sentences.append(small_talk)


# Injection order chosen so each injector's target still exists: deletions and
# truncations first, grammar and reference edits next, then reordering,
# duplication, and appends.
_INJECTION_ORDER = (
    ErrorCode.T_OM,
    ErrorCode.P_OM,
    ErrorCode.LAN,
    ErrorCode.COR,
    ErrorCode.INC,
    ErrorCode.STR,
    ErrorCode.REP,
    ErrorCode.HAL,
    ErrorCode.IRR,
)


def make_fixtures_with_log(
    seed: int, n: int
) -> tuple[Corpus, list[frozenset[ErrorCode]]]:
    """Synthetic corpus plus, per sample, the set of injected error codes."""
    if n < 1:
        raise ValueError("fixture corpus needs n >= 1")
    rng = random.Random(seed)
    samples: list[Sample] = []
    log: list[frozenset[ErrorCode]] = []
    for idx in range(n):
        turns, facts, small_talk = _make_clean_sample(rng)
        names = tuple(sorted({t.speaker for t in turns}))
        sentences = [f"{essential} {detail}" for essential, detail in facts]
        gold = " ".join(sentences)

        if rng.random() < 0.15:
            injected: frozenset[ErrorCode] = frozenset()
        else:
            count = rng.randint(1, 3)
            injected = frozenset(rng.sample(ERROR_ORDER, count))
        generated = list(sentences)
        essentials = [essential for essential, _ in facts]
        for code in _INJECTION_ORDER:
            if code in injected:
                _inject(rng, code, generated, essentials, small_talk, names)

        labels = {code: code in injected for code in ERROR_ORDER}
        samples.append(
            Sample(
                id=f"synth-{seed}-{idx:04d}",
                transcript=tuple(turns),
                gold_summary=gold,
                generated_summary=" ".join(generated),
                generator_model="synthetic-injector",
                human_labels=labels,
            )
        )
        log.append(injected)
    return Corpus(samples=samples, source_tag="synthetic"), log


def make_fixtures(seed: int, n: int) -> Corpus:
    """Deterministic synthetic corpus with labels matching the injections."""
    corpus, _ = make_fixtures_with_log(seed, n)
    return corpus
