"""LLM-as-a-judge confidence scoring for (CVE, rule) pairs.

Two questions per rule, one per quality dimension. The judge's raw answers
are problem probabilities; their complements are the sensitivity score
(avoiding false negatives) and specificity score (avoiding false positives),
and the overall confidence is their product. Reasoning chains are kept
verbatim so threshold failures can feed them back into generation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .gateway import GenerationRequest, LlmGateway
from .nuclei import CveRecord
from .rules import DetectionRule, serialize_rule

PHRASING_VARIANTS = (
    "negative_specific",
    "positive_specific",
    "generic_confidence",
    "generic_fp_fn",
)
DEFAULT_VARIANT = "negative_specific"

DEFAULT_MIN_SENSITIVITY = 0.5
DEFAULT_MIN_SPECIFICITY = 0.7

_SCORE_LINE = re.compile(r"^\s*SCORE:\s*([0-9]*\.?[0-9]+)\s*$")
_RE_ASKS = 2  # re-requests after a malformed score line, then ScoreParseError


class ScoreParseError(RuntimeError):
    """Judge completion had no parseable SCORE line after re-asks."""


@dataclass(frozen=True)
class JudgeThresholds:
    min_sensitivity: float = DEFAULT_MIN_SENSITIVITY
    min_specificity: float = DEFAULT_MIN_SPECIFICITY

    def __post_init__(self) -> None:
        for value in (self.min_sensitivity, self.min_specificity):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"threshold must be in [0,1], got {value}")


@dataclass(frozen=True)
class ConfidenceReport:
    sensitivity_score: float
    specificity_score: float
    confidence: float
    sensitivity_reasoning: str
    specificity_reasoning: str
    phrasing_variant: str = DEFAULT_VARIANT


@dataclass(frozen=True)
class GateVerdict:
    passed: bool
    feedback: str


def load_variant_template(variant: str, prompt_dir: str | Path | None = None) -> dict[str, str]:
    """Load a variant's question templates, split into the two dimensions.

    Templates live as editable text files, one per variant, with a
    [sensitivity] and a [specificity] section and {description}/{rule_json}
    placeholders. prompt_dir overrides the packaged defaults.
    """
    if variant not in PHRASING_VARIANTS:
        raise ValueError(f"unknown phrasing variant {variant!r}; allowed: {PHRASING_VARIANTS}")
    if prompt_dir is not None:
        text = (Path(prompt_dir) / f"{variant}.txt").read_text(encoding="utf-8")
    else:
        text = resources.files("rulesmith.prompts").joinpath(f"{variant}.txt").read_text(encoding="utf-8")
    sections: dict[str, str] = {}
    current: str | None = None
    buffer: list[str] = []
    for line in text.splitlines():
        if line.strip() in ("[sensitivity]", "[specificity]"):
            if current is not None:
                sections[current] = "\n".join(buffer).strip()
            current = line.strip()[1:-1]
            buffer = []
        else:
            buffer.append(line)
    if current is not None:
        sections[current] = "\n".join(buffer).strip()
    if set(sections) != {"sensitivity", "specificity"}:
        raise ValueError(f"variant template {variant} must define [sensitivity] and [specificity]")
    return sections


def _fill(template: str, description: str, rule_json: str) -> str:
    return template.replace("{description}", description).replace("{rule_json}", rule_json)


def _parse_score(completion: str) -> tuple[float, str] | None:
    """Return (score, reasoning-before-the-score-line), or None when malformed."""
    lines = completion.splitlines()
    for index in range(len(lines) - 1, -1, -1):
        match = _SCORE_LINE.match(lines[index])
        if match:
            value = float(match.group(1))
            if 0.0 <= value <= 1.0:
                return value, "\n".join(lines[:index]).strip()
            return None
    return None


def _ask(gateway: LlmGateway, prompt: str, tag: str) -> tuple[float, str]:
    for _ in range(1 + _RE_ASKS):
        completion = gateway.complete(GenerationRequest(prompt=prompt, temperature=0.0, tag=tag))
        parsed = _parse_score(completion)
        if parsed is not None:
            return parsed
    raise ScoreParseError(f"no parseable SCORE line after {1 + _RE_ASKS} asks ({tag})")


def judge_rule(
    record: CveRecord,
    rule: DetectionRule,
    gateway: LlmGateway,
    variant: str = DEFAULT_VARIANT,
    *,
    prompt_dir: str | Path | None = None,
) -> ConfidenceReport:
    """Score one rule on both dimensions.

    Raises:
        ScoreParseError: a question's score line stayed malformed after 2 re-asks.
    """
    templates = load_variant_template(variant, prompt_dir)
    rule_json = serialize_rule(rule)
    description = record.template.description

    p_miss, sensitivity_reasoning = _ask(
        gateway,
        _fill(templates["sensitivity"], description, rule_json),
        tag=f"judge-sensitivity:{record.cve_id}:{variant}",
    )
    p_correlate, specificity_reasoning = _ask(
        gateway,
        _fill(templates["specificity"], description, rule_json),
        tag=f"judge-specificity:{record.cve_id}:{variant}",
    )

    sensitivity = 1.0 - p_miss
    specificity = 1.0 - p_correlate
    return ConfidenceReport(
        sensitivity_score=sensitivity,
        specificity_score=specificity,
        confidence=sensitivity * specificity,
        sensitivity_reasoning=sensitivity_reasoning,
        specificity_reasoning=specificity_reasoning,
        phrasing_variant=variant,
    )


def gate(report: ConfidenceReport, thresholds: JudgeThresholds | None = None) -> GateVerdict:
    """Threshold check with inclusive boundaries.

    On failure the feedback contains only the failing dimension(s)' reasoning,
    each under a labeled heading.
    """
    thresholds = thresholds or JudgeThresholds()
    failing: list[str] = []
    if report.sensitivity_score < thresholds.min_sensitivity:
        failing.append(f"Sensitivity feedback:\n{report.sensitivity_reasoning}")
    if report.specificity_score < thresholds.min_specificity:
        failing.append(f"Specificity feedback:\n{report.specificity_reasoning}")
    return GateVerdict(passed=not failing, feedback="\n\n".join(failing))
