"""Multi-criteria weighted CVE scoring, ranking and threshold selection.

Score = sum of keyword weights found in the description (case-insensitive
whole-phrase substring) + a KEV bonus + a news bonus. Every nonzero
contribution is logged in an audit trail whose entry sum equals the total.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Iterable

from .nuclei import CveRecord

CVE_ID_ANYWHERE = re.compile(r"CVE-\d{4}-\d{4,}", re.IGNORECASE)

# Shipped defaults; directions come from the selection policy, the numbers are
# configuration, not claims. Editable via the scoring config JSON.
DEFAULT_KEYWORD_WEIGHTS: dict[str, float] = {
    "remote code execution": 30,
    "command injection": 25,
    "authentication bypass": 25,
    "sql injection": 20,
    "path traversal": 15,
    "vmware": 15,
    "citrix": 15,
    "fortinet": 15,
    "atlassian": 15,
    "jira": 15,
    "confluence": 15,
    "microsoft exchange": 15,
    "oracle weblogic": 15,
    "wordpress plugin": -25,
    "joomla plugin": -25,
    "drupal module": -25,
}
DEFAULT_KEV_BONUS = 50
DEFAULT_NEWS_BONUS = 20
DEFAULT_SELECTION_THRESHOLD = 40


class FeedFormatError(ValueError):
    """A threat-intel feed does not have the expected shape."""


@dataclass(frozen=True)
class ScoringConfig:
    keyword_weights: dict[str, float]
    kev_bonus: float = DEFAULT_KEV_BONUS
    news_bonus: float = DEFAULT_NEWS_BONUS
    selection_threshold: float = DEFAULT_SELECTION_THRESHOLD

    def __post_init__(self) -> None:
        weights = list(self.keyword_weights.values())
        if not any(w > 0 for w in weights) or not any(w < 0 for w in weights):
            raise ValueError("keyword_weights needs at least one positive and one negative weight")

    @classmethod
    def default(cls) -> "ScoringConfig":
        return cls(keyword_weights=dict(DEFAULT_KEYWORD_WEIGHTS))


@dataclass(frozen=True)
class AuditEntry:
    criterion: str
    evidence: str
    weight: float


@dataclass(frozen=True)
class AuditTrail:
    entries: tuple[AuditEntry, ...]
    total: float
    selected: bool
    decided_at: datetime


def score_cve(
    record: CveRecord,
    kev_ids: set[str],
    news_ids: set[str],
    config: ScoringConfig,
    *,
    now: datetime | None = None,
) -> tuple[float, AuditTrail]:
    """Score one record; each contribution is logged with its matched evidence."""
    description = record.template.description
    haystack = description.lower()
    entries: list[AuditEntry] = []
    for keyword, weight in config.keyword_weights.items():
        at = haystack.find(keyword.lower())
        if at >= 0:
            entries.append(
                AuditEntry(
                    criterion=f"keyword:{keyword}",
                    evidence=description[at : at + len(keyword)],
                    weight=weight,
                )
            )
    if record.cve_id in kev_ids:
        entries.append(AuditEntry(criterion="kev", evidence=record.cve_id, weight=config.kev_bonus))
    if record.cve_id in news_ids:
        entries.append(AuditEntry(criterion="news", evidence=record.cve_id, weight=config.news_bonus))

    total = sum(e.weight for e in entries)
    audit = AuditTrail(
        entries=tuple(entries),
        total=total,
        selected=total >= config.selection_threshold,
        decided_at=now or datetime.now(timezone.utc),
    )
    return total, audit


def _cve_year(cve_id: str) -> int:
    try:
        return int(cve_id.split("-")[1])
    except (IndexError, ValueError):
        return 0


def rank_and_select(
    records: Iterable[CveRecord],
    config: ScoringConfig,
    kev_ids: set[str],
    news_ids: set[str],
    *,
    now: datetime | None = None,
) -> tuple[list[CveRecord], list[CveRecord]]:
    """Score everything, return (selected, all_scored).

    Selected: score >= threshold, sorted by score descending, ties broken by
    newer CVE year then lexicographic id. all_scored carries an audit trail
    for every input record regardless of selection, in the same sort order.
    """
    scored: list[CveRecord] = []
    for record in records:
        total, audit = score_cve(record, kev_ids, news_ids, config, now=now)
        scored.append(record.with_score(total, audit))
    scored.sort(key=lambda r: (-r.priority_score, -_cve_year(r.cve_id), r.cve_id))
    selected = [r for r in scored if r.priority_score >= config.selection_threshold]
    return selected, scored


def load_kev_catalog(source: IO[str] | str) -> set[str]:
    """Distinct cveID set from a KEV catalog JSON ("vulnerabilities"[]."cveID")."""
    text = source if isinstance(source, str) else source.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FeedFormatError(f"KEV feed is not valid JSON: {exc}") from exc
    vulnerabilities = doc.get("vulnerabilities") if isinstance(doc, dict) else None
    if not isinstance(vulnerabilities, list):
        raise FeedFormatError("KEV feed has no 'vulnerabilities' array")
    ids: set[str] = set()
    for entry in vulnerabilities:
        if not isinstance(entry, dict) or "cveID" not in entry:
            raise FeedFormatError("KEV entry without 'cveID'")
        ids.add(str(entry["cveID"]).upper())
    return ids


def load_news_ids(source: IO[str] | str) -> set[str]:
    """CVE ids from a newline-delimited file (blank lines and '#' comments ignored)."""
    text = source if isinstance(source, str) else source.read()
    ids: set[str] = set()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        ids.add(line.upper())
    return ids


def extract_cve_ids(feed_text: str) -> set[str]:
    """Grep arbitrary feed text (e.g. downloaded RSS titles) for CVE ids."""
    return {m.group(0).upper() for m in CVE_ID_ANYWHERE.finditer(feed_text)}
