"""Mistake identification: one detector instance per error type.

Runs the identification protocol over a sample in either setup. The
multi-instance setup issues nine independent calls, one per error type; the
single-instance setup asks one instance to produce all nine verdicts at once.
Responses are parsed for sentinel lines (``VERDICT: yes`` or
``VERDICT[P-OM]: yes``); anything unparseable degrades to a not-detected
verdict flagged with ``parse_failed`` instead of aborting the run.
"""

from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .gateway import ChatRequest, Gateway, write_json_atomic
from .prompts import PromptLibrary
from .taxonomy import (
    ERROR_ORDER,
    TAXONOMY,
    ErrorCode,
    MipSetup,
    ProtocolConfig,
    PromptingMode,
    Sample,
    Verdict,
)

__all__ = [
    "ParseFailure",
    "IdentificationResult",
    "Identifier",
    "parse_verdict",
    "parse_multi_verdicts",
    "identify_path",
    "save_result",
    "load_result",
]

logger = logging.getLogger(__name__)

_LINE_PREFIX = r"^[ \t>*-]*(?:\d+[.)]\s*)?"
_SENTINEL_RE = re.compile(
    _LINE_PREFIX + r"VERDICT\s*:\s*(yes|no)\b", re.IGNORECASE | re.MULTILINE
)
_CODED_RE = re.compile(
    _LINE_PREFIX + r"VERDICT\s*\[\s*([A-Za-z_-]+)\s*\]\s*:\s*(yes|no)\b",
    re.IGNORECASE | re.MULTILINE,
)
_BARE_RE = re.compile(
    r"^[^a-zA-Z0-9]*(?:(?:final\s+)?answer\s*[:\-]?\s*)?(yes|no)\b[^a-zA-Z0-9]*$",
    re.IGNORECASE,
)
# Free-form fallback for single-instance replies that skipped the sentinels:
# a line that names an error code and ends in a yes/no determination.
_FREEFORM_CODE_RE = re.compile(
    _LINE_PREFIX
    + r"(P[-_]OM|T[-_]OM|REP|INC|COR|HAL|LAN|STR|IRR)\b[^\n]*?\b(yes|no)\b[^a-zA-Z0-9]*$",
    re.IGNORECASE | re.MULTILINE,
)
_FALLBACK_WINDOW = 3


class ParseFailure(ValueError):
    """A detector response did not contain a recognizable verdict."""


def parse_verdict(text: str) -> tuple[bool, str | None]:
    """Extract the yes/no verdict from a per-error detector response.

    Returns ``(detected, explanation)`` where the explanation is everything
    before the sentinel line, or ``None`` when nothing precedes it. The last
    sentinel wins when several appear. Without a sentinel, the last three
    non-empty lines are scanned for a bare yes/no answer. Raises
    :class:`ParseFailure` when no verdict can be recovered.
    """
    matches = list(_SENTINEL_RE.finditer(text))
    if matches:
        final = matches[-1]
        explanation = text[: final.start()].strip() or None
        return final.group(1).lower() == "yes", explanation

    lines = [line for line in text.splitlines() if line.strip()]
    for line in reversed(lines[-_FALLBACK_WINDOW:]):
        m = _BARE_RE.match(line.strip())
        if m:
            idx = text.rfind(line)
            explanation = text[:idx].strip() or None
            return m.group(1).lower() == "yes", explanation
    raise ParseFailure("no verdict sentinel or trailing yes/no found")


def parse_multi_verdicts(text: str) -> dict[str, bool]:
    """Extract per-error verdicts from a single-instance response.

    Primary form is one ``VERDICT[CODE]: yes|no`` line per type; when a code
    has no sentinel line, free-form lines like ``P-OM: ... no`` are accepted.
    Keys are upper-cased codes with underscores normalized to hyphens; the
    last sentinel line wins per code.
    """
    out: dict[str, bool] = {}
    for m in _FREEFORM_CODE_RE.finditer(text):
        code = m.group(1).upper().replace("_", "-")
        out[code] = m.group(2).lower() == "yes"
    for m in _CODED_RE.finditer(text):
        code = m.group(1).upper().replace("_", "-")
        out[code] = m.group(2).lower() == "yes"
    return out


@dataclass
class IdentificationResult:
    """All verdicts for one sample under one identification setup."""

    sample_id: str
    setup: MipSetup
    prompting: PromptingMode
    verdicts: dict[ErrorCode, Verdict] = field(default_factory=dict)
    elapsed_ms: int = 0
    call_count: int = 0

    @property
    def mip_label(self) -> str:
        return f"{self.setup.value}-{self.prompting.value}"

    @property
    def parse_failures(self) -> int:
        return sum(1 for v in self.verdicts.values() if v.parse_failed)

    def detected(self) -> tuple[ErrorCode, ...]:
        """Error codes judged present, in canonical order."""
        return tuple(code for code in ERROR_ORDER if self.verdicts[code].detected)

    @property
    def any_detected(self) -> bool:
        return any(v.detected for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "setup": self.setup.value,
            "prompting": self.prompting.value,
            "elapsed_ms": self.elapsed_ms,
            "call_count": self.call_count,
            "parse_failures": self.parse_failures,
            "verdicts": {str(code): self.verdicts[code].to_dict() for code in ERROR_ORDER},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "IdentificationResult":
        verdicts = {
            ErrorCode(code): Verdict.from_dict(payload)
            for code, payload in data["verdicts"].items()
        }
        return cls(
            sample_id=data["sample_id"],
            setup=MipSetup(data["setup"]),
            prompting=PromptingMode(data["prompting"]),
            verdicts=verdicts,
            elapsed_ms=int(data.get("elapsed_ms", 0)),
            call_count=int(data["call_count"]),
        )


def identify_path(run_dir: Path, sample_id: str, mip_label: str) -> Path:
    return Path(run_dir) / "identify" / f"{sample_id}.{mip_label}.json"


def save_result(result: IdentificationResult, run_dir: Path) -> Path:
    path = identify_path(run_dir, result.sample_id, result.mip_label)
    write_json_atomic(path, result.to_dict())
    return path


def load_result(path: Path) -> IdentificationResult:
    return IdentificationResult.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class Identifier:
    """Runs the identification protocol through a gateway."""

    def __init__(
        self,
        gateway: Gateway,
        library: PromptLibrary | None = None,
        model_id: str = "default",
        temperature: float = 0.0,
        max_output_tokens: int = 2048,
        max_workers: int = 4,
    ) -> None:
        self.gateway = gateway
        self.library = library or PromptLibrary.default()
        self.model_id = model_id
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens
        self.max_workers = max(1, max_workers)

    def request(self, system: str, user: str) -> ChatRequest:
        """Build a ChatRequest with this identifier's sampling settings."""
        return ChatRequest(
            system_prompt=system,
            user_prompt=user,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            model_id=self.model_id,
        )

    def identify(self, sample: Sample, config: ProtocolConfig) -> IdentificationResult:
        """Produce a verdict for all nine error types on one sample.

        The summary judged is ``sample.generated_summary``; pass a modified
        sample to judge an intermediate refinement.
        """
        start = time.monotonic()
        if config.mip_setup is MipSetup.MULTI_INSTANCE:
            result = self._identify_multi(sample, config)
        else:
            result = self._identify_single(sample, config)
        result.elapsed_ms = int((time.monotonic() - start) * 1000)
        return result

    def _identify_multi(self, sample: Sample, config: ProtocolConfig) -> IdentificationResult:
        transcript = sample.transcript_text()

        def detect(error: ErrorCode) -> Verdict:
            # The transcript rides along only when this error type needs it.
            prompt = self.library.render_identify(
                error,
                summary=sample.generated_summary,
                transcript=transcript if TAXONOMY[error].requires_transcript else None,
                prompting=config.prompting,
            )
            response = self.gateway.complete(self.request(prompt.system, prompt.user))
            return self._verdict_from_text(error, response.text)

        result = IdentificationResult(
            sample_id=sample.id, setup=config.mip_setup, prompting=config.prompting
        )
        with ThreadPoolExecutor(max_workers=min(self.max_workers, len(ERROR_ORDER))) as pool:
            for error, verdict in zip(ERROR_ORDER, pool.map(detect, ERROR_ORDER)):
                result.verdicts[error] = verdict
        result.call_count = len(ERROR_ORDER)
        return result

    def _identify_single(self, sample: Sample, config: ProtocolConfig) -> IdentificationResult:
        prompt = self.library.render_identify(
            None,
            summary=sample.generated_summary,
            transcript=sample.transcript_text(),
            prompting=config.prompting,
        )
        response = self.gateway.complete(self.request(prompt.system, prompt.user))
        found = parse_multi_verdicts(response.text)
        explanation = None
        if config.prompting is PromptingMode.COT:
            first = _CODED_RE.search(response.text)
            if first is not None:
                explanation = response.text[: first.start()].strip() or None

        result = IdentificationResult(
            sample_id=sample.id, setup=config.mip_setup, prompting=config.prompting
        )
        for error in ERROR_ORDER:
            if str(error) in found:
                result.verdicts[error] = Verdict(
                    error=error,
                    detected=found[str(error)],
                    cot_explanation=explanation,
                    raw_response=response.text,
                )
            else:
                logger.warning(
                    "sample %s: no verdict for %s in single-instance response",
                    sample.id,
                    error,
                )
                result.verdicts[error] = Verdict(
                    error=error,
                    detected=False,
                    raw_response=response.text,
                    parse_failed=True,
                )
        result.call_count = 1
        return result

    def _verdict_from_text(self, error: ErrorCode, text: str) -> Verdict:
        try:
            detected, explanation = parse_verdict(text)
        except ParseFailure:
            logger.warning("unparseable verdict for %s; treating as not detected", error)
            return Verdict(error=error, detected=False, raw_response=text, parse_failed=True)
        return Verdict(
            error=error,
            detected=detected,
            cot_explanation=explanation,
            raw_response=text,
        )

    def elicit_correction(self, sample: Sample, error: ErrorCode, verdict: Verdict) -> str:
        """One follow-up call asking how to fix a detected error."""
        if not verdict.detected:
            raise ValueError(f"correction requested for undetected error {error}")
        prompt = self.library.render_correction(
            error,
            summary=sample.generated_summary,
            transcript=sample.transcript_text(),
        )
        return self.gateway.complete(self.request(prompt.system, prompt.user)).text
