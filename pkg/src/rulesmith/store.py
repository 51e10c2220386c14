"""Local directory store: CVE records, candidates, approved rules, feedback, audit.

Layout under the store root:
    cves/<CVE>.json + <CVE>.yaml   record metadata + verbatim template
    candidates/<CVE>/cand<K>.json  candidate rules with validation reports
    rules/<CVE>.json               approved rules (bytes copied from the candidate)
    feedback/<CVE>.jsonl           append-only human + systemic feedback
    audit/                         selection audits, run manifests, review log

Writes serialize through a lock file; reads are concurrent-safe.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

from filelock import FileLock

from .generation import AttemptLog, CandidateRule, GenerationConfig, GenerationOutcome, run_manifest
from .judge import ConfidenceReport
from .nuclei import CveRecord, NucleiTemplate
from .rules import DetectionRule, parse_rule, serialize_rule
from .selector import AuditEntry, AuditTrail
from .validation import (
    ConfidenceStage,
    ReviewStage,
    SyntheticStage,
    TrafficStage,
    ValidationReport,
)

logger = logging.getLogger(__name__)


class StoreError(RuntimeError):
    pass


def _dump(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _iso(moment: datetime) -> str:
    return moment.isoformat()


def _from_iso(text: str) -> datetime:
    return datetime.fromisoformat(text.replace("Z", "+00:00"))


# ── record serialization ─────────────────────────────────────────────────────


def record_to_json(record: CveRecord) -> dict:
    obj: dict = {
        "cve_id": record.cve_id,
        "ingested_at": _iso(record.ingested_at),
        "priority_score": record.priority_score,
        "template": {
            "template_id": record.template.template_id,
            "name": record.template.name,
            "description": record.template.description,
            "severity": record.template.severity,
            "cve_id": record.template.cve_id,
            "cvss_score": record.template.cvss_score,
            "raw_requests": list(record.template.raw_requests),
            "matcher_summaries": list(record.template.matcher_summaries),
        },
    }
    if record.score_audit is not None:
        obj["score_audit"] = audit_to_json(record.score_audit)
    return obj


def audit_to_json(audit: AuditTrail) -> dict:
    return {
        "entries": [asdict(e) for e in audit.entries],
        "total": audit.total,
        "selected": audit.selected,
        "decided_at": _iso(audit.decided_at),
    }


def audit_from_json(obj: dict) -> AuditTrail:
    return AuditTrail(
        entries=tuple(AuditEntry(**e) for e in obj["entries"]),
        total=obj["total"],
        selected=obj["selected"],
        decided_at=_from_iso(obj["decided_at"]),
    )


def record_from_json(obj: dict, raw_yaml: str = "") -> CveRecord:
    t = obj["template"]
    template = NucleiTemplate(
        template_id=t["template_id"],
        name=t["name"],
        description=t["description"],
        severity=t["severity"],
        cve_id=t.get("cve_id"),
        cvss_score=t.get("cvss_score"),
        raw_requests=tuple(t.get("raw_requests") or ()),
        matcher_summaries=tuple(t.get("matcher_summaries") or ()),
        raw_yaml=raw_yaml,
    )
    audit = audit_from_json(obj["score_audit"]) if "score_audit" in obj else None
    return CveRecord(
        cve_id=obj["cve_id"],
        template=template,
        ingested_at=_from_iso(obj["ingested_at"]),
        priority_score=obj.get("priority_score"),
        score_audit=audit,
    )


# ── validation report serialization ──────────────────────────────────────────


def report_to_json(report: ValidationReport) -> dict:
    obj: dict = {
        "stage_reached": report.stage_reached,
        "passed": report.passed,
        "feedback": report.feedback,
    }
    if report.synthetic:
        obj["synthetic"] = asdict(report.synthetic)
        obj["synthetic"]["failures"] = list(report.synthetic.failures)
    if report.confidence:
        obj["confidence"] = {
            "passed": report.confidence.passed,
            "feedback": report.confidence.feedback,
            "report": asdict(report.confidence.report),
        }
    if report.traffic:
        obj["traffic"] = asdict(report.traffic)
    if report.review:
        obj["review"] = asdict(report.review)
    return obj


def report_from_json(obj: dict) -> ValidationReport:
    synthetic = None
    if "synthetic" in obj:
        s = dict(obj["synthetic"])
        s["failures"] = tuple(s.get("failures") or ())
        synthetic = SyntheticStage(**s)
    confidence = None
    if "confidence" in obj:
        c = obj["confidence"]
        confidence = ConfidenceStage(
            report=ConfidenceReport(**c["report"]), passed=c["passed"], feedback=c["feedback"]
        )
    traffic = TrafficStage(**obj["traffic"]) if "traffic" in obj else None
    review = ReviewStage(**obj["review"]) if "review" in obj else None
    return ValidationReport(
        stage_reached=obj["stage_reached"],
        passed=obj["passed"],
        feedback=obj["feedback"],
        synthetic=synthetic,
        confidence=confidence,
        traffic=traffic,
        review=review,
    )


def candidate_to_json(candidate: CandidateRule) -> dict:
    obj: dict = {
        "cve_id": candidate.cve_id,
        "candidate_index": candidate.candidate_index,
        "attempt": candidate.attempt,
        "temperature": candidate.temperature,
        "status": candidate.status,
        "refusal": candidate.refusal,
        "feedback_history": list(candidate.feedback_history),
        "attempts_log": [asdict(a) for a in candidate.attempts_log],
    }
    if candidate.rule is not None:
        obj["rule_json"] = serialize_rule(candidate.rule)
    if candidate.validation is not None:
        obj["validation"] = report_to_json(candidate.validation)
    return obj


def candidate_from_json(obj: dict) -> CandidateRule:
    rule: DetectionRule | None = None
    if "rule_json" in obj:
        rule = parse_rule(obj["rule_json"])
    return CandidateRule(
        cve_id=obj["cve_id"],
        candidate_index=obj["candidate_index"],
        attempt=obj["attempt"],
        temperature=obj["temperature"],
        rule=rule,
        refusal=obj.get("refusal"),
        feedback_history=list(obj.get("feedback_history") or []),
        validation=report_from_json(obj["validation"]) if "validation" in obj else None,
        status=obj["status"],
        attempts_log=[AttemptLog(**a) for a in obj.get("attempts_log") or []],
    )


# ── store ────────────────────────────────────────────────────────────────────


class Store:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.cves = self.root / "cves"
        self.candidates = self.root / "candidates"
        self.rules = self.root / "rules"
        self.feedback = self.root / "feedback"
        self.audit = self.root / "audit"
        for directory in (self.cves, self.candidates, self.rules, self.feedback, self.audit):
            directory.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.root / ".lock"))

    def lock(self) -> FileLock:
        return self._lock

    # ── records ──

    def has_record(self, cve_id: str) -> bool:
        return (self.cves / f"{cve_id}.json").exists()

    def save_record(self, record: CveRecord) -> None:
        with self._lock:
            _dump(self.cves / f"{record.cve_id}.json", record_to_json(record))
            if record.template.raw_yaml:
                (self.cves / f"{record.cve_id}.yaml").write_text(record.template.raw_yaml, encoding="utf-8")

    def load_record(self, cve_id: str) -> CveRecord:
        path = self.cves / f"{cve_id}.json"
        if not path.exists():
            raise StoreError(f"no such CVE record: {cve_id}")
        yaml_path = self.cves / f"{cve_id}.yaml"
        raw_yaml = yaml_path.read_text(encoding="utf-8") if yaml_path.exists() else ""
        return record_from_json(_load(path), raw_yaml)

    def list_cve_ids(self) -> list[str]:
        return sorted(p.stem for p in self.cves.glob("CVE-*.json"))

    def load_records(self) -> list[CveRecord]:
        return [self.load_record(cve_id) for cve_id in self.list_cve_ids()]

    # ── selection audits ──

    def save_selection_audit(self, record: CveRecord) -> None:
        if record.score_audit is None:
            return
        with self._lock:
            _dump(
                self.audit / f"select-{record.cve_id}.json",
                {"cve_id": record.cve_id, "score": record.priority_score, "audit": audit_to_json(record.score_audit)},
            )

    def has_selection_audit(self, cve_id: str) -> bool:
        return (self.audit / f"select-{cve_id}.json").exists()

    # ── generation runs ──

    def save_run(self, record: CveRecord, config: GenerationConfig, outcome: GenerationOutcome) -> Path:
        """Persist every candidate plus the deterministic run manifest; returns the manifest path."""
        with self._lock:
            cand_dir = self.candidates / record.cve_id
            cand_dir.mkdir(parents=True, exist_ok=True)
            for candidate in outcome.candidates:
                _dump(cand_dir / f"cand{candidate.candidate_index}.json", candidate_to_json(candidate))
            manifest_path = self.audit / f"run-{record.cve_id}.json"
            _dump(manifest_path, run_manifest(record, config, outcome))
        return manifest_path

    def load_candidate(self, ref: str) -> CandidateRule:
        """ref is '<CVE>/cand<K>'."""
        cve_id, _, name = ref.partition("/")
        path = self.candidates / cve_id / f"{name}.json"
        if not path.exists():
            raise StoreError(f"no such candidate: {ref}")
        return candidate_from_json(_load(path))

    def _save_candidate(self, candidate: CandidateRule) -> None:
        cand_dir = self.candidates / candidate.cve_id
        cand_dir.mkdir(parents=True, exist_ok=True)
        _dump(cand_dir / f"cand{candidate.candidate_index}.json", candidate_to_json(candidate))

    def pending_candidates(self) -> list[tuple[str, CandidateRule]]:
        """(ref, candidate) pairs whose review decision is pending."""
        pending: list[tuple[str, CandidateRule]] = []
        for path in sorted(self.candidates.glob("CVE-*/cand*.json")):
            candidate = candidate_from_json(_load(path))
            review = candidate.validation.review if candidate.validation else None
            if review and review.decision == "pending":
                pending.append((f"{path.parent.name}/{path.stem}", candidate))
        return pending

    # ── review queue ──

    def _review_transition(self, ref: str, decision: str, comment: str) -> CandidateRule:
        candidate = self.load_candidate(ref)
        review = candidate.validation.review if candidate.validation else None
        if review is None or review.decision != "pending":
            status = review.decision if review else "not validated"
            raise StoreError(f"candidate {ref} is not pending (status: {status})")
        candidate.validation = replace(
            candidate.validation, review=ReviewStage(decision=decision, reviewer_comment=comment)
        )
        self._save_candidate(candidate)
        self._append_review_log(ref, decision, comment)
        return candidate

    def approve(self, ref: str, comment: str = "") -> Path:
        """Move the candidate's rule into rules/, bit-identical to the candidate's JSON."""
        with self._lock:
            candidate = self._review_transition(ref, "approved", comment)
            if candidate.rule is None:
                raise StoreError(f"candidate {ref} has no rule to approve")
            rule_path = self.rules / f"{candidate.cve_id}.json"
            rule_path.write_text(serialize_rule(candidate.rule), encoding="utf-8")
        return rule_path

    def reject(self, ref: str, comment: str) -> None:
        if not comment:
            raise StoreError("rejection requires a comment")
        with self._lock:
            candidate = self._review_transition(ref, "rejected", comment)
            self.append_feedback(candidate.cve_id, comment, source="human")

    def _append_review_log(self, ref: str, decision: str, comment: str) -> None:
        entry = {
            "ref": ref,
            "transition": f"pending->{decision}",
            "comment": comment,
            "at": _iso(datetime.now(timezone.utc)),
        }
        with open(self.audit / "reviews.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def review_log(self) -> list[dict]:
        path = self.audit / "reviews.jsonl"
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]

    # ── feedback ──

    def append_feedback(self, cve_id: str, comment: str, source: str = "system") -> None:
        entry = {"at": _iso(datetime.now(timezone.utc)), "source": source, "comment": comment}
        with open(self.feedback / f"{cve_id}.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def feedback_entries(self, cve_id: str) -> list[dict]:
        path = self.feedback / f"{cve_id}.jsonl"
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]

    def human_feedback(self, cve_id: str) -> list[str]:
        return [e["comment"] for e in self.feedback_entries(cve_id) if e.get("source") == "human"]

    # ── approved rules ──

    def has_approved_rule(self, cve_id: str) -> bool:
        return (self.rules / f"{cve_id}.json").exists()
