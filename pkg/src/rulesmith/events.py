"""Normalized HTTP event model and raw-request / corpus ingestion.

Events are a deliberately small profile of a security-event schema: just the
HTTP request surface the rule DSL can reference, in both raw and
percent-decoded views.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime
from typing import IO, Iterable, Iterator

logger = logging.getLogger(__name__)


class MalformedRequest(ValueError):
    """Raw HTTP text has no parseable request line."""


class CorpusCorrupt(RuntimeError):
    """Too many unparseable lines in an event corpus."""


_REQUEST_LINE = re.compile(r"^(\S+)[ \t]+(\S+)[ \t]+HTTP/\d+(?:\.\d+)?\s*$")
_HEX = "0123456789abcdefABCDEF"


def percent_decode(text: str) -> str:
    """RFC 3986 percent-decoding; malformed escapes are left verbatim.

    Decoded byte runs are interpreted as UTF-8, falling back to latin-1 so
    decoding never raises. '+' is not translated (that is form encoding).
    """
    if "%" not in text:
        return text
    out: list[str] = []
    pending: bytearray = bytearray()
    i, n = 0, len(text)

    def flush() -> None:
        if pending:
            try:
                out.append(pending.decode("utf-8"))
            except UnicodeDecodeError:
                out.append(pending.decode("latin-1"))
            pending.clear()

    while i < n:
        ch = text[i]
        if ch == "%" and i + 3 <= n:
            pair = text[i + 1 : i + 3]
            if pair[0] in _HEX and pair[1] in _HEX:
                pending.append(int(pair, 16))
                i += 3
                continue
        flush()
        out.append(ch)
        i += 1
    flush()
    return "".join(out)


def _normalize_headers(raw_headers: Iterable[tuple[str, str]]) -> dict[str, str]:
    """Lowercase names; duplicates joined with ', ' in arrival order."""
    merged: dict[str, str] = {}
    for name, value in raw_headers:
        key = name.strip().lower()
        if not key:
            continue
        if key in merged:
            merged[key] = merged[key] + ", " + value
        else:
            merged[key] = value
    return merged


@dataclass(frozen=True)
class HttpEvent:
    """One normalized HTTP request.

    Immutable after construction; safe to share between workers. Header names
    are lowercase and unique, `path` always begins with "/", and the decoded
    views equal the raw views when no percent-escapes are present.
    """

    method: str
    path: str
    path_decoded: str
    query_string: str
    query_string_decoded: str
    headers: dict[str, str] = field(default_factory=dict)
    body: str = ""
    source_ip: str | None = None
    timestamp: datetime | None = None

    def variable(self, name: str) -> str:
        """Resolve a rule variable name to this event's value ('' if absent)."""
        if name.startswith("header:"):
            return self.headers.get(name[len("header:") :], "")
        value = getattr(self, name, "")
        return value if isinstance(value, str) else ""


def make_event(
    method: str,
    path: str,
    query_string: str = "",
    headers: dict[str, str] | Iterable[tuple[str, str]] | None = None,
    body: str = "",
    source_ip: str | None = None,
    timestamp: datetime | None = None,
) -> HttpEvent:
    """Build an HttpEvent from raw parts, computing normalization and decoded views."""
    if headers is None:
        pairs: Iterable[tuple[str, str]] = ()
    elif isinstance(headers, dict):
        pairs = headers.items()
    else:
        pairs = headers
    if not path.startswith("/"):
        path = "/" + path
    return HttpEvent(
        method=method.upper(),
        path=path,
        path_decoded=percent_decode(path),
        query_string=query_string,
        query_string_decoded=percent_decode(query_string),
        headers=_normalize_headers(pairs),
        body=body,
        source_ip=source_ip,
        timestamp=timestamp,
    )


def _split_target(target: str) -> tuple[str, str]:
    """Split a request target into (path, query), stripping any absolute-form prefix."""
    if target.startswith(("http://", "https://")):
        scheme_end = target.index("://") + 3
        slash = target.find("/", scheme_end)
        target = target[slash:] if slash >= 0 else "/"
    path, _, query = target.partition("?")
    return path, query


def normalize_raw_http(raw: str) -> HttpEvent:
    """Parse raw HTTP request text into a normalized event.

    Accepts CRLF or LF line endings; any method token is accepted. The body,
    when present, is everything after the first blank line, verbatim.

    Raises:
        MalformedRequest: no parseable "METHOD SP target SP HTTP/x.y" line.
    """
    crlf = raw.find("\r\n\r\n")
    lf = raw.find("\n\n")
    if crlf >= 0 and (lf < 0 or crlf <= lf):
        head, body = raw[:crlf], raw[crlf + 4 :]
    elif lf >= 0:
        head, body = raw[:lf], raw[lf + 2 :]
    else:
        head, body = raw, ""

    lines = head.splitlines()
    if not lines:
        raise MalformedRequest("empty request")
    match = _REQUEST_LINE.match(lines[0])
    if match is None:
        raise MalformedRequest(f"no parseable request line: {lines[0]!r}")
    method, target = match.group(1), match.group(2)

    header_pairs: list[tuple[str, str]] = []
    for line in lines[1:]:
        name, sep, value = line.partition(":")
        if sep:
            header_pairs.append((name, value.strip()))

    path, query = _split_target(target)
    return make_event(method, path, query, header_pairs, body)


# ── Corpus JSONL serialization ───────────────────────────────────────────────


def event_to_json(event: HttpEvent) -> dict:
    """Raw-form JSON object for one corpus line (decoded views are derived)."""
    obj: dict = {
        "method": event.method,
        "path": event.path,
        "query_string": event.query_string,
        "headers": dict(event.headers),
        "body": event.body,
        "source_ip": event.source_ip,
    }
    if event.timestamp is not None:
        obj["timestamp"] = event.timestamp.isoformat()
    return obj


def event_from_json(obj: dict) -> HttpEvent:
    ts_text = obj.get("timestamp")
    timestamp = None
    if ts_text:
        timestamp = datetime.fromisoformat(str(ts_text).replace("Z", "+00:00"))
    headers = obj.get("headers") or {}
    if not isinstance(headers, dict):
        raise ValueError("headers must be a JSON object")
    return make_event(
        method=str(obj["method"]),
        path=str(obj["path"]),
        query_string=str(obj.get("query_string", "")),
        headers={str(k): str(v) for k, v in headers.items()},
        body=str(obj.get("body", "")),
        source_ip=obj.get("source_ip") or None,
        timestamp=timestamp,
    )


def event_to_jsonl_line(event: HttpEvent) -> str:
    return json.dumps(event_to_json(event), sort_keys=True)


def load_event_corpus(source: IO[str] | Iterable[str]) -> Iterator[HttpEvent]:
    """Yield events lazily from a JSONL stream, one object per non-blank line.

    Unparseable lines are counted, skipped and reported at the end. The stream
    is considered corrupt when skips exceed max(1, 10% of non-blank lines);
    CorpusCorrupt is then raised after iteration completes.
    """
    total = 0
    skipped = 0
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        total += 1
        try:
            yield event_from_json(json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            skipped += 1
            logger.warning("corpus line %d skipped: %s", lineno, exc)
    if skipped:
        logger.warning("corpus load finished: %d events, %d lines skipped", total - skipped, skipped)
    if skipped > max(1.0, 0.10 * total):
        raise CorpusCorrupt(f"{skipped} of {total} corpus lines unparseable (>10%)")


def read_event_corpus(path: str) -> list[HttpEvent]:
    """Eagerly load a corpus file (convenience wrapper over load_event_corpus)."""
    with open(path, encoding="utf-8") as fh:
        return list(load_event_corpus(fh))
