"""Nuclei YAML template parsing into CVE records.

Only the fields the pipeline consumes are extracted; the full YAML text is
kept verbatim on the record for audit.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import TYPE_CHECKING

import yaml

from .rules import CVE_ID_PATTERN

if TYPE_CHECKING:
    from .selector import AuditTrail

logger = logging.getLogger(__name__)

SEVERITIES = ("info", "low", "medium", "high", "critical")

PLACEHOLDERS = {
    "{{BaseURL}}": "http://target.example",
    "{{RootURL}}": "http://target.example",
    "{{Hostname}}": "target.example",
}

_CVE_ANYWHERE = re.compile(r"CVE-\d{4}-\d{4,}", re.IGNORECASE)


class YamlError(ValueError):
    """Template is not well-formed YAML."""


class MissingField(ValueError):
    """Template lacks a required field (id or description)."""


@dataclass(frozen=True)
class NucleiTemplate:
    template_id: str
    name: str
    description: str
    severity: str
    raw_requests: tuple[str, ...]
    cve_id: str | None = None
    cvss_score: float | None = None
    matcher_summaries: tuple[str, ...] = ()
    raw_yaml: str = ""


@dataclass(frozen=True)
class CveRecord:
    cve_id: str
    template: NucleiTemplate
    ingested_at: datetime
    priority_score: float | None = None
    score_audit: "AuditTrail | None" = None

    def with_score(self, score: float, audit: "AuditTrail") -> "CveRecord":
        return replace(self, priority_score=score, score_audit=audit)


def substitute_placeholders(text: str) -> str:
    for token, value in PLACEHOLDERS.items():
        text = text.replace(token, value)
    return text


def _collect_raw_requests(doc: dict) -> list[str]:
    blocks: list[str] = []
    for section_key in ("http", "requests"):
        section = doc.get(section_key)
        if not isinstance(section, list):
            continue
        for entry in section:
            if not isinstance(entry, dict):
                continue
            for raw in entry.get("raw") or []:
                if isinstance(raw, str) and raw.strip():
                    blocks.append(substitute_placeholders(raw.strip()))
    return blocks


def _collect_matcher_summaries(doc: dict) -> list[str]:
    summaries: list[str] = []
    for section_key in ("http", "requests"):
        section = doc.get(section_key)
        if not isinstance(section, list):
            continue
        for entry in section:
            if not isinstance(entry, dict):
                continue
            for matcher in entry.get("matchers") or []:
                if isinstance(matcher, dict):
                    kind = matcher.get("type", "?")
                    part = matcher.get("part", "")
                    summaries.append(f"{kind} {part}".strip())
    return summaries


def parse_template(yaml_text: str) -> NucleiTemplate:
    """Parse one Nuclei template.

    {{BaseURL}}/{{Hostname}}/{{RootURL}} placeholders in raw request blocks are
    substituted with fixed values so the blocks parse as plain HTTP. A missing
    http section is not an error: raw_requests may be empty and generation can
    still proceed from the description alone.

    Raises:
        YamlError: not well-formed YAML.
        MissingField: no template id or no info.description.
    """
    try:
        doc = yaml.safe_load(yaml_text)
    except yaml.YAMLError as exc:
        raise YamlError(f"invalid template YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise YamlError("template YAML must be a mapping")

    template_id = doc.get("id")
    if not template_id or not isinstance(template_id, str):
        raise MissingField("template has no id")

    info = doc.get("info") or {}
    if not isinstance(info, dict):
        raise MissingField("template has no info section")
    description = str(info.get("description") or "").strip()
    if not description:
        raise MissingField(f"template {template_id}: no description")
    name = str(info.get("name") or template_id)
    severity = str(info.get("severity") or "info").lower()
    if severity not in SEVERITIES:
        severity = "info"

    classification = info.get("classification") or {}
    cve_value = classification.get("cve-id") if isinstance(classification, dict) else None
    if isinstance(cve_value, list):
        cve_value = cve_value[0] if cve_value else None
    cve_id = str(cve_value).upper() if cve_value else None
    if cve_id and not CVE_ID_PATTERN.match(cve_id):
        cve_id = None

    cvss_score = None
    if isinstance(classification, dict) and classification.get("cvss-score") is not None:
        try:
            cvss_score = float(classification["cvss-score"])
        except (TypeError, ValueError):
            cvss_score = None

    return NucleiTemplate(
        template_id=template_id,
        name=name,
        description=description,
        severity=severity,
        raw_requests=tuple(_collect_raw_requests(doc)),
        cve_id=cve_id,
        cvss_score=cvss_score,
        matcher_summaries=tuple(_collect_matcher_summaries(doc)),
        raw_yaml=yaml_text,
    )


def record_from_template(template: NucleiTemplate, *, now: datetime | None = None) -> CveRecord:
    """Build a CveRecord; the CVE id comes from classification or a CVE-shaped template id.

    Raises:
        MissingField: no resolvable CVE id.
    """
    cve_id = template.cve_id
    if cve_id is None:
        candidate = template.template_id.upper()
        if CVE_ID_PATTERN.match(candidate):
            cve_id = candidate
    if cve_id is None:
        found = _CVE_ANYWHERE.search(template.template_id)
        if found:
            cve_id = found.group(0).upper()
    if cve_id is None:
        raise MissingField(f"template {template.template_id}: no CVE id")
    return CveRecord(
        cve_id=cve_id,
        template=template,
        ingested_at=now or datetime.now(timezone.utc),
    )
