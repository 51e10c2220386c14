"""The staged candidate-rule validation pipeline.

Stages run in order: synthetic testing, confidence gating, traffic/IP
validation, then enqueue for human review. The first failing stage stops the
pipeline and its feedback text is what flows back into generation.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from pathlib import Path

from .events import HttpEvent, MalformedRequest, normalize_raw_http
from .gateway import REQUEST_FENCE_CLOSE, REQUEST_FENCE_OPEN, GenerationRequest, LlmGateway
from .judge import ConfidenceReport, JudgeThresholds, ScoreParseError, gate, judge_rule
from .nuclei import CveRecord
from .rules import DetectionRule, evaluate, match_corpus, rule_inspects_body

logger = logging.getLogger(__name__)

SYNTHETIC_TOTAL = 10
SYNTHETIC_MALICIOUS = 7
SYNTHETIC_BENIGN = 3
SYNTHETIC_PASS_MIN = 8
_SYNTHETIC_RETRIES = 2

REPUTATION_LABELS = ("malicious", "benign", "unknown")


class SyntheticGenerationFailed(RuntimeError):
    """Backend kept returning a malformed or miscounted synthetic test set."""


@dataclass(frozen=True)
class SyntheticTest:
    raw_request: str
    label: str  # malicious | benign

    def event(self) -> HttpEvent:
        return normalize_raw_http(self.raw_request)


@dataclass(frozen=True)
class IpValidationConfig:
    min_matches: int = 10
    max_matches: int = 500
    min_malicious_fraction: float = 0.70

    def __post_init__(self) -> None:
        if not 0 < self.min_matches <= self.max_matches:
            raise ValueError("require 0 < min_matches <= max_matches")
        if not 0.0 <= self.min_malicious_fraction <= 1.0:
            raise ValueError("min_malicious_fraction must be in [0,1]")


@dataclass(frozen=True)
class SyntheticStage:
    passed: bool
    correct_count: int
    failures: tuple[str, ...]
    feedback: str


@dataclass(frozen=True)
class ConfidenceStage:
    report: ConfidenceReport
    passed: bool
    feedback: str


@dataclass(frozen=True)
class TrafficStage:
    passed: bool
    distinct_ip_count: int = 0
    malicious_fraction: float = 0.0
    skipped_reason: str | None = None
    feedback: str = ""

    @property
    def skipped(self) -> bool:
        return self.skipped_reason is not None


@dataclass(frozen=True)
class ReviewStage:
    decision: str = "pending"  # approved | rejected | pending
    reviewer_comment: str = ""


@dataclass(frozen=True)
class ValidationReport:
    """Stage outcomes in pipeline order; later stages are absent after a failure."""

    stage_reached: str
    passed: bool
    feedback: str
    synthetic: SyntheticStage | None = None
    confidence: ConfidenceStage | None = None
    traffic: TrafficStage | None = None
    review: ReviewStage | None = None

    @property
    def confidence_report(self) -> ConfidenceReport | None:
        return self.confidence.report if self.confidence else None


# ── Synthetic testing ────────────────────────────────────────────────────────


def parse_synthetic_output(text: str) -> list[SyntheticTest]:
    """Parse '#TEST <label> ... #END' blocks; every request must be raw HTTP.

    Raises:
        ValueError: wrong block structure, label, counts or unparseable request.
    """
    tests: list[SyntheticTest] = []
    label: str | None = None
    buffer: list[str] = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("#TEST"):
            label = stripped.removeprefix("#TEST").strip()
            if label not in ("malicious", "benign"):
                raise ValueError(f"bad test label {label!r}")
            buffer = []
        elif stripped == "#END":
            if label is None:
                raise ValueError("#END without #TEST")
            raw = "\n".join(buffer)
            normalize_raw_http(raw)  # MalformedRequest propagates as ValueError
            tests.append(SyntheticTest(raw_request=raw, label=label))
            label = None
        elif label is not None:
            buffer.append(line)
    if label is not None:
        raise ValueError("unterminated #TEST block")
    return tests


def _synthetic_prompt(record: CveRecord) -> str:
    parts = [
        "Generate synthetic HTTP test requests for a detection rule covering this vulnerability.",
        "",
        f"CVE: {record.cve_id}",
        "Description:",
        record.template.description,
        "",
    ]
    if record.template.raw_requests:
        parts.append("Example exploit request:")
        parts.append(REQUEST_FENCE_OPEN)
        parts.append(record.template.raw_requests[0])
        parts.append(REQUEST_FENCE_CLOSE)
        parts.append("")
    parts.append(
        f"Produce exactly {SYNTHETIC_TOTAL} raw HTTP requests: {SYNTHETIC_MALICIOUS} malicious "
        f"exploitation attempts and {SYNTHETIC_BENIGN} benign requests resembling legitimate traffic. "
        'Wrap each as a block: a line "#TEST malicious" or "#TEST benign", the raw request, then a line "#END".'
    )
    return "\n".join(parts)


def generate_synthetic_tests(record: CveRecord, gateway: LlmGateway) -> list[SyntheticTest]:
    """Exactly 10 parseable tests with the 7/3 malicious/benign split.

    Malformed or miscounted output is re-requested up to 2 times.

    Raises:
        SyntheticGenerationFailed: still malformed after the retries.
    """
    prompt = _synthetic_prompt(record)
    last_problem = ""
    for _ in range(1 + _SYNTHETIC_RETRIES):
        completion = gateway.complete(
            GenerationRequest(prompt=prompt, temperature=0.3, tag=f"synthetic:{record.cve_id}")
        )
        try:
            tests = parse_synthetic_output(completion)
        except (ValueError, MalformedRequest) as exc:
            last_problem = str(exc)
            continue
        malicious = sum(1 for t in tests if t.label == "malicious")
        benign = len(tests) - malicious
        if len(tests) == SYNTHETIC_TOTAL and malicious == SYNTHETIC_MALICIOUS and benign == SYNTHETIC_BENIGN:
            return tests
        last_problem = f"got {malicious} malicious + {benign} benign, need {SYNTHETIC_MALICIOUS}+{SYNTHETIC_BENIGN}"
    raise SyntheticGenerationFailed(f"{record.cve_id}: {last_problem}")


def run_synthetic_gate(rule: DetectionRule, tests: list[SyntheticTest]) -> SyntheticStage:
    """Count correct classifications; pass needs at least 8 of the 10 right."""
    correct = 0
    failures: list[str] = []
    for test in tests:
        matched = evaluate(rule, test.event())
        ok = matched if test.label == "malicious" else not matched
        if ok:
            correct += 1
        else:
            request_line = test.raw_request.splitlines()[0] if test.raw_request else ""
            verdict = "matched" if matched else "did not match"
            failures.append(f"[{test.label}] {request_line} — rule {verdict}")
    passed = correct >= SYNTHETIC_PASS_MIN
    feedback = ""
    if not passed:
        feedback = (
            f"Synthetic testing: only {correct}/{len(tests)} test requests were classified "
            "correctly. Misclassified:\n" + "\n".join(failures)
        )
    return SyntheticStage(passed=passed, correct_count=correct, failures=tuple(failures), feedback=feedback)


# ── IP validation ────────────────────────────────────────────────────────────


def run_ip_validation(
    rule: DetectionRule,
    corpus: list[HttpEvent],
    reputation: dict[str, str],
    config: IpValidationConfig | None = None,
) -> TrafficStage:
    """Traffic-volume window plus IP-reputation fraction check.

    Body-inspecting rules are skipped (recorded as skipped, never passed).
    Unknown reputation counts against the malicious fraction; the fraction
    must strictly exceed the configured minimum.
    """
    config = config or IpValidationConfig()
    if rule_inspects_body(rule):
        return TrafficStage(passed=False, skipped_reason="body rule")

    stats = match_corpus(rule, corpus)
    count = len(stats.distinct_ips)
    if count < config.min_matches or count > config.max_matches:
        return TrafficStage(
            passed=False,
            distinct_ip_count=count,
            feedback=(
                f"Traffic validation: rule matched {count} distinct IPs, outside the "
                f"{config.min_matches}-{config.max_matches} window."
            ),
        )
    malicious = sum(1 for ip in stats.distinct_ips if reputation.get(ip) == "malicious")
    fraction = malicious / count
    passed = fraction > config.min_malicious_fraction
    feedback = ""
    if not passed:
        feedback = (
            f"Traffic validation: only {malicious} of {count} matched IPs "
            f"({fraction:.0%}) are labeled malicious; the rule is matching benign sources."
        )
    return TrafficStage(passed=passed, distinct_ip_count=count, malicious_fraction=fraction, feedback=feedback)


def load_reputation(path: str | Path) -> dict[str, str]:
    """Reputation JSONL: one {"ip", "label"} object per line."""
    import json

    reputation: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            label = obj.get("label", "unknown")
            if label not in REPUTATION_LABELS:
                label = "unknown"
            reputation[str(obj["ip"])] = label
    return reputation


# ── Pipeline ─────────────────────────────────────────────────────────────────


def run_pipeline(
    rule: DetectionRule,
    record: CveRecord,
    gateway: LlmGateway,
    *,
    thresholds: JudgeThresholds | None = None,
    ip_config: IpValidationConfig | None = None,
    variant: str = "negative_specific",
    corpus: list[HttpEvent] | None = None,
    reputation: dict[str, str] | None = None,
    synthetic_tests: list[SyntheticTest] | None = None,
    enable_confidence: bool = True,
    prompt_dir: str | Path | None = None,
) -> ValidationReport:
    """Run the automated stages in order; first failure stops and carries feedback.

    A candidate that clears every automated stage comes back with a pending
    review stage (the store enqueues it for human review). Stage-internal
    errors are recorded as that stage's failure; gateway errors propagate.
    """
    # stage 1: synthetic testing
    try:
        tests = synthetic_tests if synthetic_tests is not None else generate_synthetic_tests(record, gateway)
    except SyntheticGenerationFailed as exc:
        stage = SyntheticStage(passed=False, correct_count=0, failures=(), feedback=f"Synthetic testing errored: {exc}")
        return ValidationReport(stage_reached="synthetic", passed=False, feedback=stage.feedback, synthetic=stage)
    synthetic = run_synthetic_gate(rule, tests)
    if not synthetic.passed:
        return ValidationReport(
            stage_reached="synthetic", passed=False, feedback=synthetic.feedback, synthetic=synthetic
        )

    # stage 2: confidence gating
    confidence: ConfidenceStage | None = None
    if enable_confidence:
        try:
            report = judge_rule(record, rule, gateway, variant, prompt_dir=prompt_dir)
        except ScoreParseError as exc:
            feedback = f"Confidence scoring errored: {exc}"
            return ValidationReport(
                stage_reached="confidence", passed=False, feedback=feedback, synthetic=synthetic
            )
        verdict = gate(report, thresholds)
        confidence = ConfidenceStage(report=report, passed=verdict.passed, feedback=verdict.feedback)
        if not verdict.passed:
            return ValidationReport(
                stage_reached="confidence",
                passed=False,
                feedback=verdict.feedback,
                synthetic=synthetic,
                confidence=confidence,
            )

    # stage 3: traffic / IP validation
    traffic: TrafficStage | None = None
    if corpus is not None and reputation is not None:
        traffic = run_ip_validation(rule, corpus, reputation, ip_config)
        if not traffic.passed and not traffic.skipped:
            return ValidationReport(
                stage_reached="traffic",
                passed=False,
                feedback=traffic.feedback,
                synthetic=synthetic,
                confidence=confidence,
                traffic=traffic,
            )

    # stage 4: human review queue
    return ValidationReport(
        stage_reached="review",
        passed=True,
        feedback="",
        synthetic=synthetic,
        confidence=confidence,
        traffic=traffic,
        review=ReviewStage(decision="pending"),
    )


class PipelineValidator:
    """Reusable validator for the generation engine.

    Synthetic tests are generated once per CVE and cached: they depend on the
    CVE, not the candidate rule, and caching keeps the call budget flat.
    """

    def __init__(
        self,
        gateway: LlmGateway,
        *,
        thresholds: JudgeThresholds | None = None,
        ip_config: IpValidationConfig | None = None,
        variant: str = "negative_specific",
        corpus: list[HttpEvent] | None = None,
        reputation: dict[str, str] | None = None,
        enable_confidence: bool = True,
        prompt_dir: str | Path | None = None,
    ):
        self.gateway = gateway
        self.thresholds = thresholds
        self.ip_config = ip_config
        self.variant = variant
        self.corpus = corpus
        self.reputation = reputation
        self.enable_confidence = enable_confidence
        self.prompt_dir = prompt_dir
        self._test_cache: dict[str, list[SyntheticTest]] = {}
        self._lock = threading.Lock()

    def _tests_for(self, record: CveRecord) -> list[SyntheticTest]:
        with self._lock:
            cached = self._test_cache.get(record.cve_id)
        if cached is not None:
            return cached
        tests = generate_synthetic_tests(record, self.gateway)
        with self._lock:
            return self._test_cache.setdefault(record.cve_id, tests)

    def validate(self, rule: DetectionRule, record: CveRecord) -> ValidationReport:
        try:
            tests = self._tests_for(record)
        except SyntheticGenerationFailed as exc:
            stage = SyntheticStage(
                passed=False, correct_count=0, failures=(), feedback=f"Synthetic testing errored: {exc}"
            )
            return ValidationReport(stage_reached="synthetic", passed=False, feedback=stage.feedback, synthetic=stage)
        return run_pipeline(
            rule,
            record,
            self.gateway,
            thresholds=self.thresholds,
            ip_config=self.ip_config,
            variant=self.variant,
            corpus=self.corpus,
            reputation=self.reputation,
            synthetic_tests=tests,
            enable_confidence=self.enable_confidence,
            prompt_dir=self.prompt_dir,
        )
