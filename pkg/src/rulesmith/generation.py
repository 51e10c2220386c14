"""Candidate rule generation: parallel lanes with feedback-driven refinement.

Five candidates per CVE (configurable), each at a temperature sampled once
from a seeded stream, each allowed up to five attempts. Validation failures
append their feedback to that candidate's history only; lanes never share
feedback. The best passing candidate wins on product confidence, then
specificity, then lane index.
"""

from __future__ import annotations

import hashlib
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

from .gateway import (
    REFUSAL_MARKER,
    REQUEST_FENCE_CLOSE,
    REQUEST_FENCE_OPEN,
    GenerationRequest,
    LlmGateway,
    prompt_hash,
)
from .nuclei import CveRecord
from .rules import COMPARISONS, VARIABLES, DetectionRule, SchemaError, parse_rule
from .safe_regex import RegexError
from .validation import ValidationReport

logger = logging.getLogger(__name__)

STATUS_PENDING = "pending"
STATUS_PASSED = "passed"
STATUS_FAILED = "failed"
STATUS_REFUSED = "refused"


@dataclass(frozen=True)
class GenerationConfig:
    num_candidates: int = 5
    max_attempts: int = 5
    temp_low: float = 0.7
    temp_high: float = 0.9
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.temp_low <= self.temp_high <= 1.0:
            raise ValueError("require 0 <= temp_low <= temp_high <= 1")
        if self.num_candidates < 1 or self.max_attempts < 1:
            raise ValueError("num_candidates and max_attempts must be >= 1")


@dataclass(frozen=True)
class AttemptLog:
    attempt: int
    prompt_sha256: str
    outcome: str  # passed | refused | parse_error | failed:<stage>


@dataclass
class CandidateRule:
    cve_id: str
    candidate_index: int
    attempt: int
    temperature: float
    rule: DetectionRule | None = None
    refusal: str | None = None
    feedback_history: list[str] = field(default_factory=list)
    validation: ValidationReport | None = None
    status: str = STATUS_PENDING
    attempts_log: list[AttemptLog] = field(default_factory=list)

    @property
    def confidence(self) -> float:
        report = self.validation.confidence_report if self.validation else None
        return report.confidence if report else 0.0

    @property
    def specificity(self) -> float:
        report = self.validation.confidence_report if self.validation else None
        return report.specificity_score if report else 0.0


@dataclass(frozen=True)
class GenerationOutcome:
    best: CandidateRule | None
    candidates: list[CandidateRule]


class Validator(Protocol):
    def validate(self, rule: DetectionRule, record: CveRecord) -> ValidationReport: ...


def derive_seed(seed: int, *parts: object) -> int:
    """Stable 64-bit sub-seed (never the salted built-in hash)."""
    key = ":".join([str(seed), *map(str, parts)])
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


def sample_temperatures(record_id: str, config: GenerationConfig) -> list[float]:
    """One temperature per candidate lane, uniform in [temp_low, temp_high]."""
    rng = random.Random(derive_seed(config.rng_seed, "temps", record_id))
    return [rng.uniform(config.temp_low, config.temp_high) for _ in range(config.num_candidates)]


def build_prompt(
    record: CveRecord,
    feedback_history: Sequence[str],
    human_feedback: Sequence[str] = (),
) -> str:
    """Deterministic generation prompt.

    Description block, fenced example requests when present, the rule grammar,
    the refusal instruction, then reviewer feedback and prior-attempt feedback
    verbatim, oldest first. No feedback heading appears when there is none.
    """
    parts = [
        "Write one JSON detection rule that flags HTTP requests exploiting this vulnerability.",
        "",
        f"CVE: {record.cve_id}",
        "Description:",
        record.template.description,
        "",
    ]
    if record.template.raw_requests:
        parts.append("Example requests:")
        for raw in record.template.raw_requests:
            parts.extend([REQUEST_FENCE_OPEN, raw, REQUEST_FENCE_CLOSE])
        parts.append("")
    parts.extend(
        [
            "Respond with a single JSON object of the form "
            '{"conditions": [{"var": ..., "comparison": ..., "constant": ...}, ...], '
            '"conditions_match": "and" | "or"}.',
            f"Variables: {', '.join(VARIABLES)}, header:<name>.",
            f"Comparisons: {', '.join(COMPARISONS)}.",
            "Anchor the rule to the vulnerable endpoint and the attack payload; "
            "avoid conditions that legitimate traffic can satisfy.",
            "If the input does not describe a web vulnerability or HTTP-based attack, "
            "reply exactly: This is not describing a web vulnerability or HTTP-based attack.",
        ]
    )
    if human_feedback:
        parts.extend(["", "### Reviewer feedback"])
        for index, item in enumerate(human_feedback, start=1):
            parts.extend([f"[reviewer {index}]", item, ""])
    if feedback_history:
        parts.extend(["", "### Previous attempt feedback"])
        for index, item in enumerate(feedback_history, start=1):
            parts.extend([f"[feedback {index}]", item, ""])
    return "\n".join(parts)


def _attach_ids(rule: DetectionRule, record: CveRecord, candidate_index: int) -> DetectionRule:
    return replace(rule, rule_id=f"{record.cve_id}-cand{candidate_index}", cve_id=record.cve_id)


def _run_lane(
    record: CveRecord,
    candidate_index: int,
    temperature: float,
    config: GenerationConfig,
    gateway: LlmGateway,
    validator: Validator,
    human_feedback: Sequence[str],
) -> CandidateRule:
    candidate = CandidateRule(
        cve_id=record.cve_id,
        candidate_index=candidate_index,
        attempt=0,
        temperature=temperature,
    )
    tag = f"rulegen:{record.cve_id}:cand{candidate_index}"
    for attempt in range(1, config.max_attempts + 1):
        candidate.attempt = attempt
        prompt = build_prompt(record, candidate.feedback_history, human_feedback)
        digest = prompt_hash(prompt)
        completion = gateway.complete(
            GenerationRequest(prompt=prompt, temperature=temperature, tag=tag)
        )
        if REFUSAL_MARKER in completion:
            candidate.refusal = completion.strip()
            candidate.status = STATUS_REFUSED
            candidate.attempts_log.append(AttemptLog(attempt, digest, "refused"))
            return candidate
        try:
            rule = _attach_ids(parse_rule(completion), record, candidate_index)
        except (SchemaError, RegexError) as exc:
            candidate.attempts_log.append(AttemptLog(attempt, digest, "parse_error"))
            candidate.feedback_history.append(f"Rule JSON was rejected: {exc}")
            continue
        candidate.rule = rule
        report = validator.validate(rule, record)
        candidate.validation = report
        if report.passed:
            candidate.status = STATUS_PASSED
            candidate.attempts_log.append(AttemptLog(attempt, digest, "passed"))
            return candidate
        candidate.attempts_log.append(AttemptLog(attempt, digest, f"failed:{report.stage_reached}"))
        candidate.feedback_history.append(report.feedback)
    candidate.status = STATUS_FAILED
    return candidate


def generate_for_cve(
    record: CveRecord,
    config: GenerationConfig,
    gateway: LlmGateway,
    validator: Validator,
    *,
    human_feedback: Sequence[str] = (),
    parallel: bool = True,
) -> GenerationOutcome:
    """Run all candidate lanes for one record and pick the best performer.

    Lanes run concurrently but independently; the result is a deterministic
    reduction over lane index, so completion order never matters. No passing
    candidate is not an error: the outcome is (None, candidates) with all
    feedback preserved.
    """
    temperatures = sample_temperatures(record.cve_id, config)

    def lane(index: int) -> CandidateRule:
        return _run_lane(record, index, temperatures[index], config, gateway, validator, human_feedback)

    if parallel and config.num_candidates > 1:
        with ThreadPoolExecutor(max_workers=config.num_candidates) as pool:
            candidates = list(pool.map(lane, range(config.num_candidates)))
    else:
        candidates = [lane(index) for index in range(config.num_candidates)]

    passed = [c for c in candidates if c.status == STATUS_PASSED]
    best = min(passed, key=lambda c: (-c.confidence, -c.specificity, c.candidate_index)) if passed else None
    return GenerationOutcome(best=best, candidates=candidates)


def run_manifest(record: CveRecord, config: GenerationConfig, outcome: GenerationOutcome) -> dict:
    """JSON-able audit manifest for one CVE's run (deterministic; no clocks)."""
    from .rules import rule_to_object

    return {
        "cve_id": record.cve_id,
        "config": {
            "num_candidates": config.num_candidates,
            "max_attempts": config.max_attempts,
            "temp_low": config.temp_low,
            "temp_high": config.temp_high,
            "rng_seed": config.rng_seed,
        },
        "best_candidate": outcome.best.candidate_index if outcome.best else None,
        "candidates": [
            {
                "candidate_index": c.candidate_index,
                "temperature": c.temperature,
                "status": c.status,
                "attempt": c.attempt,
                "refusal": c.refusal,
                "rule": rule_to_object(c.rule) if c.rule else None,
                "feedback_history": list(c.feedback_history),
                "attempts": [
                    {"attempt": a.attempt, "prompt_sha256": a.prompt_sha256, "outcome": a.outcome}
                    for a in c.attempts_log
                ],
                "confidence": c.confidence if c.validation and c.validation.confidence else None,
                "stage_reached": c.validation.stage_reached if c.validation else None,
            }
            for c in outcome.candidates
        ],
    }
