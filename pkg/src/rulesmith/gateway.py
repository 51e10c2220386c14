"""Text-generation gateway: one text-in/text-out abstraction over backends.

Two backends ship: a provider client for an HTTP completion API, and a
deterministic seeded mock whose planted-flaw behavior lets the whole
generation/validation loop run offline and reproducibly. The gateway itself
owns retries with backoff, the per-run request budget, a concurrency cap and
an optional requests-per-minute ceiling.

Prompt/tag conventions (the contract between prompt builders and the mock):
  tags        "rulegen:<cve_id>:cand<k>", "synthetic:<cve_id>",
              "judge-sensitivity:<cve_id>:<variant>", "judge-specificity:..."
  requests    example HTTP requests are fenced between REQUEST_FENCE_OPEN and
              REQUEST_FENCE_CLOSE lines
  feedback    each prior-attempt feedback item starts with "[feedback N]"
  rule JSON   judge prompts fence the rule between ```json and ```
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol

import requests as requests_lib

from .events import MalformedRequest, normalize_raw_http
from .nuclei import CveRecord
from .rules import Condition, DetectionRule, serialize_rule

logger = logging.getLogger(__name__)

REQUEST_FENCE_OPEN = "<<<REQUEST"
REQUEST_FENCE_CLOSE = "REQUEST>>>"
FEEDBACK_ITEM_PREFIX = "[feedback "
REFUSAL_TEXT = "This is not describing a web vulnerability or HTTP-based attack."
REFUSAL_MARKER = "not describing a web vulnerability"

# Payload markers the mock recognizes in exploit requests, checked in order.
PAYLOAD_MARKERS = (
    "../../",
    "..%2f..%2f",
    "etc/passwd",
    "${jndi:",
    "' or '1'='1",
    "union select",
    "<script",
    ";cat ",
    "|id|",
    "%00",
)

DEFAULT_MAX_INFLIGHT = 5
DEFAULT_BUDGET = 500
BACKOFF_SCHEDULE = (1.0, 2.0, 4.0)
RETRY_ATTEMPTS = 3


class BackendUnavailable(RuntimeError):
    """Backend could not serve the request (retryable)."""


class BudgetExceeded(RuntimeError):
    """The per-run completion budget was hit."""


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    temperature: float
    max_tokens: int = 2048
    tag: str = ""

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must be in [0,1], got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class MockBehavior:
    seed: int = 0
    defect_rate: float = 0.0
    feedback_sensitivity: float = 1.0
    fixture_dir: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.defect_rate <= 1.0:
            raise ValueError("defect_rate must be in [0,1]")
        if not 0.0 <= self.feedback_sensitivity <= 1.0:
            raise ValueError("feedback_sensitivity must be in [0,1]")


class Backend(Protocol):
    def complete(self, request: GenerationRequest) -> str: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def _unit_stream(seed: int, *parts: object) -> float:
    """Deterministic uniform [0,1) value keyed on seed + parts (platform-stable)."""
    key = ":".join([str(seed), *map(str, parts)])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


# ── Rate limiting ────────────────────────────────────────────────────────────


class RateLimiter:
    """Sliding-window requests-per-minute ceiling, safe under contention."""

    def __init__(
        self,
        requests_per_minute: int | None,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.requests_per_minute = requests_per_minute
        self._clock = clock
        self._sleeper = sleeper
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.requests_per_minute is None:
            return
        while True:
            with self._lock:
                now = self._clock()
                while self._stamps and self._stamps[0] <= now - 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.requests_per_minute:
                    self._stamps.append(now)
                    return
                wait_for = 60.0 - (now - self._stamps[0])
            self._sleeper(max(wait_for, 0.0))


# ── Gateway ──────────────────────────────────────────────────────────────────


class LlmGateway:
    """Shared front door to a backend: retries, budget, concurrency, rate limit."""

    def __init__(
        self,
        backend: Backend,
        *,
        max_inflight: int = DEFAULT_MAX_INFLIGHT,
        budget: int = DEFAULT_BUDGET,
        requests_per_minute: int | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.budget = budget
        self._sleeper = sleeper
        self._clock = clock
        self._semaphore = threading.BoundedSemaphore(max_inflight)
        self._rate = RateLimiter(requests_per_minute, clock=clock, sleeper=sleeper)
        self._lock = threading.Lock()
        self.calls = 0
        self.calls_by_tag: dict[str, int] = {}

    def _charge(self, tag: str) -> None:
        with self._lock:
            if self.calls >= self.budget:
                raise BudgetExceeded(f"completion budget of {self.budget} exhausted")
            self.calls += 1
            stage = tag.split(":", 1)[0] if tag else ""
            self.calls_by_tag[stage] = self.calls_by_tag.get(stage, 0) + 1

    def complete(self, request: GenerationRequest) -> str:
        """Return the backend completion verbatim.

        Raises:
            BudgetExceeded: per-run request cap hit (charged once per call).
            BackendUnavailable: after exactly RETRY_ATTEMPTS attempts with
                backoff sleeps between them.
        """
        self._charge(request.tag)
        self._rate.acquire()
        with self._semaphore:
            started = self._clock()
            last_error: BackendUnavailable | None = None
            for attempt in range(RETRY_ATTEMPTS):
                try:
                    completion = self.backend.complete(request)
                    logger.debug(
                        "completion tag=%s prompt=%s latency=%.3fs",
                        request.tag, prompt_hash(request.prompt)[:12], self._clock() - started,
                    )
                    return completion
                except BackendUnavailable as exc:
                    last_error = exc
                    if attempt < RETRY_ATTEMPTS - 1:
                        self._sleeper(BACKOFF_SCHEDULE[attempt])
            assert last_error is not None
            raise last_error


# ── Provider backend ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str
    model: str = "default"
    api_key_env: str = ""
    timeout: float = 60.0


class ProviderBackend:
    """Client for a JSON completion endpoint: POST {model, prompt, ...} -> {completion}."""

    def __init__(self, config: ProviderConfig, session: requests_lib.Session | None = None):
        self.config = config
        self._session = session or requests_lib.Session()

    def complete(self, request: GenerationRequest) -> str:
        headers = {}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.config.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        try:
            response = self._session.post(
                self.config.endpoint, json=payload, headers=headers, timeout=self.config.timeout
            )
        except requests_lib.RequestException as exc:
            raise BackendUnavailable(f"provider request failed: {exc}") from exc
        if response.status_code != 200:
            raise BackendUnavailable(f"provider returned HTTP {response.status_code}")
        try:
            completion = response.json()["completion"]
        except (ValueError, KeyError) as exc:
            raise BackendUnavailable(f"provider response malformed: {exc}") from exc
        return str(completion)


# ── Mock backend ─────────────────────────────────────────────────────────────


def extract_fenced_requests(prompt: str) -> list[str]:
    """Pull example-request blocks out of a prompt (see fencing convention)."""
    blocks: list[str] = []
    lines = prompt.splitlines()
    current: list[str] | None = None
    for line in lines:
        if line.strip() == REQUEST_FENCE_OPEN:
            current = []
        elif line.strip() == REQUEST_FENCE_CLOSE and current is not None:
            blocks.append("\n".join(current))
            current = None
        elif current is not None:
            current.append(line)
    return blocks


def count_feedback_items(prompt: str) -> int:
    return sum(1 for line in prompt.splitlines() if line.startswith(FEEDBACK_ITEM_PREFIX))


def _extract_fenced_json(prompt: str) -> str | None:
    open_at = prompt.find("```json")
    if open_at < 0:
        return None
    close_at = prompt.find("```", open_at + 7)
    if close_at < 0:
        return None
    return prompt[open_at + 7 : close_at].strip()


def find_payload_marker(exploit_query: str, exploit_body: str = "") -> str | None:
    """The distinctive payload substring of an exploit request, if any."""
    for haystack in (exploit_query, exploit_body):
        for marker in PAYLOAD_MARKERS:
            if marker in haystack:
                return marker
    # fall back to the longest query parameter value
    best = ""
    for pair in exploit_query.split("&"):
        _, _, value = pair.partition("=")
        if len(value) > len(best):
            best = value
    return best if len(best) >= 3 else None


def synthesize_rule_text(
    cve_id: str,
    exploit_raw: str | None,
    feedback_rounds: int,
    candidate_index: int,
    behavior: MockBehavior,
) -> str:
    """Deterministic mock rule generation with planted flaws.

    With probability defect_rate * feedback_sensitivity**feedback_rounds
    (seeded on cve_id + candidate index + round) the emitted rule carries one
    planted flaw: an over-broad single-quote condition, or a payload condition
    missing the endpoint anchor. Templates with no HTTP content get a refusal.
    """
    if exploit_raw is None:
        return REFUSAL_TEXT
    try:
        exploit = normalize_raw_http(exploit_raw)
    except MalformedRequest:
        return REFUSAL_TEXT

    marker = find_payload_marker(exploit.query_string, exploit.body)
    if marker is None and exploit.query_string:
        marker = exploit.query_string
    payload_var = "query_string" if marker and marker in exploit.query_string else "body"
    if marker is None:
        # no query/body payload at all: anchor on the path only
        marker = ""

    flaw_probability = behavior.defect_rate * behavior.feedback_sensitivity**feedback_rounds
    draw = _unit_stream(behavior.seed, "flaw", cve_id, candidate_index, feedback_rounds)
    flawed = draw < flaw_probability

    if flawed and marker:
        flavor = _unit_stream(behavior.seed, "flavor", cve_id, candidate_index, feedback_rounds)
        if flavor < 0.5:
            conditions = [Condition("query_string", "contains", "'")]
        else:
            conditions = [Condition(payload_var, "contains", marker)]
    elif marker:
        conditions = [
            Condition(payload_var, "contains", marker),
            Condition("path", "equals", exploit.path),
        ]
    else:
        conditions = [Condition("path", "equals", exploit.path)]

    rule = DetectionRule(conditions=tuple(conditions), conditions_match="and")
    return serialize_rule(rule, bare=True)


def mock_generate_rule(
    cve: CveRecord,
    feedback_rounds: int,
    behavior: MockBehavior,
    candidate_index: int = 0,
) -> str:
    """Rule JSON text (possibly flawed) or refusal text for a record."""
    exploit_raw = cve.template.raw_requests[0] if cve.template.raw_requests else None
    return synthesize_rule_text(cve.cve_id, exploit_raw, feedback_rounds, candidate_index, behavior)


_MALICIOUS_TAILS = ("etc/shadow", "etc/hosts", "proc/self/environ", "etc/group", "wp-config.php", "id_rsa")
_BENIGN_VALUES = ("logo.png", "report.pdf", "style.css")


def _synthetic_tests_text(exploit_raw: str) -> str:
    """Seven marker-preserving malicious requests and three benign ones."""
    exploit = normalize_raw_http(exploit_raw)
    marker = find_payload_marker(exploit.query_string, exploit.body)

    if marker and marker in exploit.query_string:
        param = "input"
        for pair in exploit.query_string.split("&"):
            key, sep, value = pair.partition("=")
            if sep and marker in value:
                param = key
                break
        queries = [exploit.query_string] + [f"{param}={marker}{tail}" for tail in _MALICIOUS_TAILS]
        malicious = [f"GET {exploit.path}?{q} HTTP/1.1\nHost: target.example" for q in queries[:7]]
        benign = [f"GET {exploit.path}?{param}={v} HTTP/1.1\nHost: target.example" for v in _BENIGN_VALUES]
    elif marker:
        bodies = [exploit.body] + [f"data={marker}{tail}" for tail in _MALICIOUS_TAILS]
        malicious = [f"POST {exploit.path} HTTP/1.1\nHost: target.example\n\n{b}" for b in bodies[:7]]
        benign = [f"POST {exploit.path} HTTP/1.1\nHost: target.example\n\ndata={v}" for v in _BENIGN_VALUES]
    else:
        # endpoint-only exploit: benign traffic targets other paths
        malicious = [f"GET {exploit.path}?probe={i} HTTP/1.1\nHost: target.example" for i in range(7)]
        benign = [f"GET /assets/{v} HTTP/1.1\nHost: target.example" for v in _BENIGN_VALUES]

    blocks = [f"#TEST malicious\n{req}\n#END" for req in malicious]
    blocks += [f"#TEST benign\n{req}\n#END" for req in benign]
    return "\n".join(blocks)


def _judge_answer(kind: str, variant: str, prompt: str, behavior: MockBehavior) -> str:
    """Structural-heuristic judge: reasoning lines, then a final SCORE line."""
    rule_json = _extract_fenced_json(prompt)
    anchored = False
    payloadish = False
    generic_constant = None
    if rule_json:
        try:
            obj = json.loads(rule_json)
            conditions = obj.get("conditions", [])
            for cond in conditions:
                var, constant = cond.get("var", ""), cond.get("constant", "")
                if var in ("path", "path_decoded") and cond.get("comparison") in ("equals", "starts_with") and len(constant) > 1:
                    anchored = True
                if var not in ("path", "path_decoded") and len(constant) >= 3:
                    payloadish = True
                if var not in ("path", "path_decoded") and len(constant) < 3:
                    generic_constant = constant
            anchored = anchored and len(conditions) >= 2 and obj.get("conditions_match") == "and"
        except ValueError:
            pass

    if kind == "sensitivity":
        if payloadish:
            base = 0.15
            reasoning = (
                "The rule keys on a concrete payload substring from the exploit request, "
                "so exploitation attempts described for this CVE should be flagged."
            )
        else:
            base = 0.85
            reasoning = (
                "No condition captures the actual attack payload; requests exploiting "
                "this CVE with the documented payload would not be flagged."
            )
    else:
        if anchored and payloadish:
            base = 0.15
            reasoning = (
                "The rule is anchored to the vulnerable endpoint and additionally requires "
                "the attack payload, so benign traffic elsewhere will not match."
            )
        elif generic_constant is not None:
            base = 0.9
            reasoning = (
                f"The condition matches any request whose query contains {generic_constant!r}, "
                "which is overly broad: it targets a feature merely correlated with the "
                "vulnerability and will fire on unrelated traffic."
            )
        else:
            base = 0.85
            reasoning = (
                "Nothing ties the match to the vulnerable endpoint; the rule is overly broad "
                "and will match the same payload pattern anywhere it appears."
            )

    jitter_scale = 0.15 if variant == "generic_fp_fn" else 0.05
    jitter = (_unit_stream(behavior.seed, "jitter", kind, prompt) - 0.5) * 2 * jitter_scale
    probability = base + jitter
    if variant == "positive_specific":
        probability *= 0.6  # overconfident when framed around correctness
    elif variant == "generic_confidence":
        probability = 0.1 + 0.2 * probability  # compressed, weakly discriminative
    probability = min(max(probability, 0.0), 1.0)
    return f"{reasoning}\nSCORE: {probability:.4f}"


class MockBackend:
    """Deterministic stand-in: fixed (seed, inputs) give bit-identical outputs."""

    def __init__(self, behavior: MockBehavior):
        self.behavior = behavior

    def complete(self, request: GenerationRequest) -> str:
        if self.behavior.fixture_dir:
            path = os.path.join(self.behavior.fixture_dir, prompt_hash(request.prompt) + ".txt")
            if os.path.exists(path):
                with open(path, encoding="utf-8") as fh:
                    return fh.read()

        tag_parts = request.tag.split(":")
        stage = tag_parts[0] if tag_parts else ""
        if stage == "rulegen":
            cve_id = tag_parts[1] if len(tag_parts) > 1 else "CVE-0000-0000"
            cand_text = tag_parts[2] if len(tag_parts) > 2 else "cand0"
            candidate_index = int(cand_text.removeprefix("cand") or 0)
            fenced = extract_fenced_requests(request.prompt)
            exploit_raw = fenced[0] if fenced else None
            rounds = count_feedback_items(request.prompt)
            return synthesize_rule_text(cve_id, exploit_raw, rounds, candidate_index, self.behavior)
        if stage == "synthetic":
            fenced = extract_fenced_requests(request.prompt)
            if not fenced:
                return REFUSAL_TEXT
            return _synthetic_tests_text(fenced[0])
        if stage in ("judge-sensitivity", "judge-specificity"):
            variant = tag_parts[2] if len(tag_parts) > 2 else "negative_specific"
            return _judge_answer(stage.removeprefix("judge-"), variant, request.prompt, self.behavior)
        # generic deterministic echo for untagged traffic
        return f"mock-completion:{prompt_hash(request.prompt)[:16]}"
