"""rulesmith: a CVE-to-detection-rule factory.

Ingests Nuclei vulnerability templates, prioritizes CVEs with weighted
scoring, generates JSON detection rules through parallel candidates with
feedback-driven refinement, validates them through staged gates (synthetic
tests, judge confidence, traffic/IP reputation, human review), and measures
judge calibration.
"""

from .events import HttpEvent, make_event, normalize_raw_http
from .rules import DetectionRule, evaluate, match_corpus, parse_rule, serialize_rule

__version__ = "0.1.0"

__all__ = [
    "HttpEvent",
    "make_event",
    "normalize_raw_http",
    "DetectionRule",
    "parse_rule",
    "serialize_rule",
    "evaluate",
    "match_corpus",
    "__version__",
]
