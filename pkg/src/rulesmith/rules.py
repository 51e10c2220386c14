"""The JSON detection-rule DSL: parsing, validation, serialization, evaluation.

A rule is a flat list of (var, comparison, constant) conditions joined by a
single "and"/"or". The wire format is the bare condition-list object, plus an
envelope variant carrying top-level "rule_id" and "cve_id".
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable

from .events import HttpEvent
from .safe_regex import RegexError, compile_pattern

VARIABLES = (
    "method",
    "path",
    "path_decoded",
    "query_string",
    "query_string_decoded",
    "body",
)
COMPARISONS = (
    "equals",
    "contains",
    "starts_with",
    "ends_with",
    "regex",
    "equals_ignore_case",
    "contains_ignore_case",
)

CVE_ID_PATTERN = re.compile(r"^CVE-\d{4}-\d{4,}$")
_HEADER_VAR = re.compile(r"^header:[a-z0-9!#$%&'*+.^_`|~-]+$")


class SchemaError(ValueError):
    """Rule JSON violates the DSL schema."""


@dataclass(frozen=True)
class Condition:
    var: str
    comparison: str
    constant: str

    def holds(self, event: HttpEvent) -> bool:
        value = event.variable(self.var)
        op = self.comparison
        if op == "equals":
            return value == self.constant
        if op == "contains":
            return self.constant in value
        if op == "starts_with":
            return value.startswith(self.constant)
        if op == "ends_with":
            return value.endswith(self.constant)
        if op == "equals_ignore_case":
            return value.lower() == self.constant.lower()
        if op == "contains_ignore_case":
            return self.constant.lower() in value.lower()
        return compile_pattern(self.constant).search(value)


@dataclass(frozen=True)
class DetectionRule:
    conditions: tuple[Condition, ...]
    conditions_match: str
    rule_id: str = ""
    cve_id: str = ""


@dataclass(frozen=True)
class TrafficStats:
    """match_corpus outcome: match volume and distinct source IPs."""

    matched: int
    distinct_ips: frozenset[str] = field(default_factory=frozenset)


def _validate_condition(obj: object, index: int) -> Condition:
    if not isinstance(obj, dict):
        raise SchemaError(f"condition {index}: expected an object")
    extra = set(obj) - {"var", "comparison", "constant"}
    missing = {"var", "comparison", "constant"} - set(obj)
    if extra:
        raise SchemaError(f"condition {index}: unknown keys {sorted(extra)}")
    if missing:
        raise SchemaError(f"condition {index}: missing keys {sorted(missing)}")
    var, comparison, constant = obj["var"], obj["comparison"], obj["constant"]
    if not isinstance(var, str) or not isinstance(comparison, str) or not isinstance(constant, str):
        raise SchemaError(f"condition {index}: var/comparison/constant must be strings")
    if var not in VARIABLES and not _HEADER_VAR.match(var):
        raise SchemaError(
            f"condition {index}: unknown var {var!r}; allowed: {', '.join(VARIABLES)}, header:<name>"
        )
    if comparison not in COMPARISONS:
        raise SchemaError(
            f"condition {index}: unknown comparison {comparison!r}; allowed: {', '.join(COMPARISONS)}"
        )
    if comparison == "regex":
        try:
            compile_pattern(constant)
        except RegexError as exc:
            raise RegexError(f"condition {index}: {exc}") from exc
    return Condition(var=var, comparison=comparison, constant=constant)


def rule_from_object(obj: dict, *, strict_bare: bool = False) -> DetectionRule:
    """Validate an already-decoded rule object. See parse_rule."""
    if not isinstance(obj, dict):
        raise SchemaError("rule must be a JSON object")
    allowed = {"conditions", "conditions_match"}
    if not strict_bare:
        allowed |= {"rule_id", "cve_id"}
    extra = set(obj) - allowed
    if extra:
        raise SchemaError(f"unknown top-level keys {sorted(extra)}")
    if "conditions" not in obj or "conditions_match" not in obj:
        raise SchemaError("rule requires 'conditions' and 'conditions_match'")

    raw_conditions = obj["conditions"]
    if not isinstance(raw_conditions, list) or not raw_conditions:
        raise SchemaError("'conditions' must be a non-empty list")
    conditions = tuple(_validate_condition(c, i) for i, c in enumerate(raw_conditions))

    match_mode = obj["conditions_match"]
    if match_mode not in ("and", "or"):
        raise SchemaError(f"'conditions_match' must be 'and' or 'or', got {match_mode!r}")

    rule_id = obj.get("rule_id", "")
    cve_id = obj.get("cve_id", "")
    if not isinstance(rule_id, str) or not isinstance(cve_id, str):
        raise SchemaError("'rule_id' and 'cve_id' must be strings")
    if cve_id and not CVE_ID_PATTERN.match(cve_id):
        raise SchemaError(f"'cve_id' must match CVE-YYYY-NNNN..., got {cve_id!r}")
    return DetectionRule(conditions=conditions, conditions_match=match_mode, rule_id=rule_id, cve_id=cve_id)


def parse_rule(json_text: str, *, strict_bare: bool = False) -> DetectionRule:
    """Parse and validate rule JSON.

    The bare Appendix-style object (conditions + conditions_match only) and
    the envelope form (plus rule_id/cve_id) are both accepted; with
    strict_bare=True the envelope keys are rejected. Unknown keys are always
    rejected.

    Raises:
        SchemaError: malformed JSON, missing/extra keys, bad enum values.
        RegexError: a regex constant does not compile (with condition index).
    """
    try:
        obj = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    return rule_from_object(obj, strict_bare=strict_bare)


def rule_to_object(rule: DetectionRule, *, bare: bool = False) -> dict:
    """Emit the canonical key order: conditions, conditions_match, then envelope."""
    obj: dict = {
        "conditions": [
            {"var": c.var, "comparison": c.comparison, "constant": c.constant} for c in rule.conditions
        ],
        "conditions_match": rule.conditions_match,
    }
    if not bare:
        obj["rule_id"] = rule.rule_id
        obj["cve_id"] = rule.cve_id
    return obj


def serialize_rule(rule: DetectionRule, *, bare: bool = False) -> str:
    """Canonical serialization; parse(serialize(rule)) == rule, byte-stable."""
    return json.dumps(rule_to_object(rule, bare=bare), indent=2)


def evaluate(rule: DetectionRule, event: HttpEvent) -> bool:
    """Side-effect-free and/or fold of the rule's conditions over one event."""
    if rule.conditions_match == "and":
        return all(c.holds(event) for c in rule.conditions)
    return any(c.holds(event) for c in rule.conditions)


def match_corpus(rule: DetectionRule, events: Iterable[HttpEvent]) -> TrafficStats:
    """Scan a corpus: matched-event count plus the distinct matching source IPs.

    Events without a source_ip count toward matches but contribute no IP.
    """
    matched = 0
    ips: set[str] = set()
    for event in events:
        if evaluate(rule, event):
            matched += 1
            if event.source_ip:
                ips.add(event.source_ip)
    return TrafficStats(matched=matched, distinct_ips=frozenset(ips))


def rule_inspects_body(rule: DetectionRule) -> bool:
    return any(c.var == "body" for c in rule.conditions)
