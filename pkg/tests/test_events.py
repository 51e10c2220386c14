import io
import json
import random
from datetime import datetime, timezone

import pytest

from rulesmith.events import (
    CorpusCorrupt,
    MalformedRequest,
    event_from_json,
    event_to_json,
    event_to_jsonl_line,
    load_event_corpus,
    make_event,
    normalize_raw_http,
    percent_decode,
)


def test_normalize_traversal_exploit():
    raw = (
        "GET /plugins/servlet/snjFooterNavigationConfig?fileName=../../../../etc/passwd HTTP/1.1\n"
        "Host: x\n\n"
    )
    event = normalize_raw_http(raw)
    assert event.path == "/plugins/servlet/snjFooterNavigationConfig"
    assert event.query_string == "fileName=../../../../etc/passwd"
    assert event.headers == {"host": "x"}


def test_normalize_minimal_request():
    event = normalize_raw_http("GET / HTTP/1.1\n\n")
    assert event.path == "/"
    assert event.query_string == ""
    assert event.headers == {}
    assert event.body == ""


def test_percent_decoding_applied_to_views():
    event = normalize_raw_http("GET /a?x=%2e%2e%2f HTTP/1.1\n\n")
    assert event.query_string == "x=%2e%2e%2f"
    assert event.query_string_decoded == "x=../"


def test_malformed_escapes_left_verbatim():
    assert percent_decode("a%zz%4") == "a%zz%4"
    assert percent_decode("%41%zz") == "A%zz"
    assert percent_decode("100%") == "100%"


def test_decoding_no_escapes_is_identity():
    for text in ("", "plain", "a b+c", "läuft"):
        assert percent_decode(text) == text


def test_absolute_form_target_stripped():
    event = normalize_raw_http("GET http://target.example/x/y?z=1 HTTP/1.1\nHost: t\n\n")
    assert event.path == "/x/y"
    assert event.query_string == "z=1"


def test_any_method_token_accepted_and_uppercased():
    event = normalize_raw_http("brew /teapot HTTP/1.1\n\n")
    assert event.method == "BREW"


def test_duplicate_headers_joined_in_order():
    raw = "GET / HTTP/1.1\nX-Token: a\nx-token: b\n\n"
    assert normalize_raw_http(raw).headers == {"x-token": "a, b"}


def test_crlf_and_body_preserved():
    raw = "POST /submit HTTP/1.1\r\nHost: h\r\nContent-Type: text/plain\r\n\r\nline1\nline2"
    event = normalize_raw_http(raw)
    assert event.method == "POST"
    assert event.body == "line1\nline2"


def test_malformed_request_line_raises():
    with pytest.raises(MalformedRequest):
        normalize_raw_http("not an http request\nHost: x\n\n")
    with pytest.raises(MalformedRequest):
        normalize_raw_http("")


def test_normalize_is_deterministic():
    raw = "GET /a?b=%41&c=2 HTTP/1.1\nHost: h\nX: y\n\nbody"
    assert normalize_raw_http(raw) == normalize_raw_http(raw)


def test_corpus_roundtrip_exact():
    rng = random.Random(7)
    events = [
        make_event(
            method=rng.choice(["GET", "POST"]),
            path=f"/p{rng.randint(0, 9)}",
            query_string=f"a=%2e%2e%2f{rng.randint(0, 99)}",
            headers={"Host": "h", "X-N": str(rng.random())},
            body="b" * rng.randint(0, 5),
            source_ip=f"10.0.0.{rng.randint(1, 9)}" if rng.random() < 0.7 else None,
            timestamp=datetime(2025, 1, 1, 12, 0, tzinfo=timezone.utc) if rng.random() < 0.5 else None,
        )
        for _ in range(50)
    ]
    lines = [event_to_jsonl_line(e) for e in events]
    reloaded = list(load_event_corpus(iter(lines)))
    assert reloaded == events


def test_corpus_counts_and_tolerance():
    good = event_to_jsonl_line(make_event("GET", "/a"))
    stream = io.StringIO("\n".join([good, good, good]) + "\n")
    assert len(list(load_event_corpus(stream))) == 3

    # 2 valid + 1 malformed: skipped without error
    stream = io.StringIO("\n".join([good, "{broken", good]))
    assert len(list(load_event_corpus(stream))) == 2

    # empty file: empty sequence
    assert list(load_event_corpus(io.StringIO(""))) == []


def test_corpus_corrupt_above_threshold():
    good = event_to_jsonl_line(make_event("GET", "/a"))
    lines = [good] * 10 + ["nope"] * 2  # 2/12 ≈ 17% > 10%
    with pytest.raises(CorpusCorrupt):
        list(load_event_corpus(iter(lines)))
    # exactly 10% does not abort
    lines = [good] * 18 + ["nope"] * 2
    assert len(list(load_event_corpus(iter(lines)))) == 18


def test_event_json_shape():
    event = make_event("GET", "/a", "q=1", {"Host": "h"}, source_ip="1.2.3.4")
    obj = event_to_json(event)
    assert set(obj) == {"method", "path", "query_string", "headers", "body", "source_ip"}
    assert event_from_json(json.loads(event_to_jsonl_line(event))) == event
