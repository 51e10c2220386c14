"""Linear-time regular expressions for rule constants.

Detection rules run over large traffic corpora, so regex matching must never
backtrack pathologically. This is a small Thompson-NFA engine: compile to an
NFA, simulate with a state set, O(len(pattern) * len(text)) worst case.

Dialect (a strict subset of Python `re` with ASCII classes):
  literals, '.', escapes (\\d \\D \\w \\W \\s \\S, \\n \\t \\r, escaped
  punctuation), character classes [..] with ranges and negation, quantifiers
  * + ? {m} {m,} {m,n}, alternation |, groups ( ) / (?: ), anchors ^ $.
Backreferences, lookaround, named groups and inline flags are rejected.
"""

from __future__ import annotations

from functools import lru_cache

MAX_REPEAT = 64

_DIGITS = (ord("0"), ord("9"))
_WORD_INTERVALS = ((ord("0"), ord("9")), (ord("A"), ord("Z")), (ord("_"), ord("_")), (ord("a"), ord("z")))
_SPACE_CHARS = " \t\n\r\f\v"


class RegexError(ValueError):
    """Pattern is invalid or uses an unsupported construct."""


class _CharSet:
    """Set of codepoints as sorted intervals, optionally negated."""

    __slots__ = ("intervals", "negated")

    def __init__(self, intervals: tuple[tuple[int, int], ...], negated: bool = False):
        self.intervals = intervals
        self.negated = negated

    def matches(self, ch: str) -> bool:
        code = ord(ch)
        hit = any(lo <= code <= hi for lo, hi in self.intervals)
        return hit != self.negated


def _literal(ch: str) -> _CharSet:
    code = ord(ch)
    return _CharSet(((code, code),))


_DOT = _CharSet(((ord("\n"), ord("\n")),), negated=True)
_CLASS_D = _CharSet((_DIGITS,))
_CLASS_D_NEG = _CharSet((_DIGITS,), negated=True)
_CLASS_W = _CharSet(_WORD_INTERVALS)
_CLASS_W_NEG = _CharSet(_WORD_INTERVALS, negated=True)
_CLASS_S = _CharSet(tuple((ord(c), ord(c)) for c in sorted(_SPACE_CHARS)))
_CLASS_S_NEG = _CharSet(tuple((ord(c), ord(c)) for c in sorted(_SPACE_CHARS)), negated=True)

_ESCAPE_CLASSES = {
    "d": _CLASS_D, "D": _CLASS_D_NEG,
    "w": _CLASS_W, "W": _CLASS_W_NEG,
    "s": _CLASS_S, "S": _CLASS_S_NEG,
}
_ESCAPE_LITERALS = {"n": "\n", "t": "\t", "r": "\r", "f": "\f", "v": "\v", "0": "\0"}


# ── AST ──────────────────────────────────────────────────────────────────────
# Nodes: ("char", _CharSet) ("cat", a, b) ("alt", a, b) ("star", a, greedy-irrelevant)
#        ("plus", a) ("opt", a) ("rep", a, m, n|None) ("empty",) ("anchor", "^"|"$")

class _Parser:
    def __init__(self, pattern: str):
        self.pattern = pattern
        self.pos = 0

    def error(self, message: str) -> RegexError:
        return RegexError(f"{message} at position {self.pos} in {self.pattern!r}")

    def peek(self) -> str | None:
        return self.pattern[self.pos] if self.pos < len(self.pattern) else None

    def take(self) -> str:
        ch = self.pattern[self.pos]
        self.pos += 1
        return ch

    def parse(self):
        node = self.alternation()
        if self.pos != len(self.pattern):
            raise self.error(f"unexpected {self.pattern[self.pos]!r}")
        return node

    def alternation(self):
        node = self.concatenation()
        while self.peek() == "|":
            self.take()
            node = ("alt", node, self.concatenation())
        return node

    def concatenation(self):
        parts = []
        while (ch := self.peek()) is not None and ch not in "|)":
            parts.append(self.repeated())
        if not parts:
            return ("empty",)
        node = parts[0]
        for part in parts[1:]:
            node = ("cat", node, part)
        return node

    def repeated(self):
        atom = self.atom()
        while (ch := self.peek()) is not None and ch in "*+?{":
            if ch == "{" and not self._looks_like_bound():
                break  # literal brace
            if atom[0] == "anchor":
                raise self.error("quantifier applied to anchor")
            ch = self.take()
            if ch == "*":
                atom = ("star", atom)
            elif ch == "+":
                atom = ("plus", atom)
            elif ch == "?":
                atom = ("opt", atom)
            else:
                atom = self._bound(atom)
        return atom

    def _looks_like_bound(self) -> bool:
        rest = self.pattern[self.pos :]
        close = rest.find("}")
        if close <= 1:
            return False
        inner = rest[1:close]
        head, _, tail = inner.partition(",")
        return head.isdigit() and (tail.isdigit() or tail == "" or ("," in inner and tail == ""))

    def _bound(self, atom):
        start = self.pos
        close = self.pattern.find("}", start)
        if close < 0:
            raise self.error("unterminated {m,n}")
        inner = self.pattern[start:close]
        self.pos = close + 1
        if "," in inner:
            low_text, _, high_text = inner.partition(",")
            low = int(low_text)
            high = int(high_text) if high_text else None
        else:
            low = high = int(inner)
        if high is not None and high < low:
            raise self.error("bad repeat bounds {m,n} with n < m")
        if low > MAX_REPEAT or (high or 0) > MAX_REPEAT:
            raise self.error(f"repeat bound exceeds {MAX_REPEAT}")
        return ("rep", atom, low, high)

    def atom(self):
        ch = self.take()
        if ch == "(":
            if self.peek() == "?":
                self.take()
                nxt = self.peek()
                if nxt == ":":
                    self.take()
                else:
                    raise self.error("unsupported group extension (lookaround/flags/named)")
            node = self.alternation()
            if self.peek() != ")":
                raise self.error("unbalanced parenthesis")
            self.take()
            return node
        if ch == "[":
            return ("char", self.char_class())
        if ch == ".":
            return ("char", _DOT)
        if ch == "^":
            return ("anchor", "^")
        if ch == "$":
            return ("anchor", "$")
        if ch == "\\":
            return ("char", self.escape())
        if ch in "*+?":
            raise self.error("quantifier with nothing to repeat")
        return ("char", _literal(ch))

    def escape(self) -> _CharSet:
        if self.peek() is None:
            raise self.error("trailing backslash")
        ch = self.take()
        if ch in _ESCAPE_CLASSES:
            return _ESCAPE_CLASSES[ch]
        if ch in _ESCAPE_LITERALS:
            return _literal(_ESCAPE_LITERALS[ch])
        if ch.isdigit():
            raise self.error("backreferences are not supported")
        if ch.isalpha():
            raise self.error(f"unsupported escape \\{ch}")
        return _literal(ch)

    def char_class(self) -> _CharSet:
        negated = False
        if self.peek() == "^":
            self.take()
            negated = True
        intervals: list[tuple[int, int]] = []
        saw_any = False
        while True:
            ch = self.peek()
            if ch is None:
                raise self.error("unterminated character class")
            if ch == "]" and saw_any:
                self.take()
                break
            saw_any = True
            item = self._class_item()
            if isinstance(item, _CharSet):  # \d etc. inside a class
                if item.negated:
                    raise self.error("negated class escape inside character class")
                intervals.extend(item.intervals)
                continue
            lo = item
            if self.peek() == "-" and self.pos + 1 < len(self.pattern) and self.pattern[self.pos + 1] != "]":
                self.take()
                hi_item = self._class_item()
                if isinstance(hi_item, _CharSet):
                    raise self.error("class escape cannot end a range")
                if hi_item < lo:
                    raise self.error("reversed character range")
                intervals.append((lo, hi_item))
            else:
                intervals.append((lo, lo))
        if not intervals:
            raise self.error("empty character class")
        return _CharSet(tuple(sorted(intervals)), negated=negated)

    def _class_item(self) -> int | _CharSet:
        ch = self.take()
        if ch != "\\":
            return ord(ch)
        if self.peek() is None:
            raise self.error("trailing backslash in class")
        esc = self.take()
        if esc in _ESCAPE_CLASSES:
            return _ESCAPE_CLASSES[esc]
        if esc in _ESCAPE_LITERALS:
            return ord(_ESCAPE_LITERALS[esc])
        if esc.isdigit():
            raise self.error("backreferences are not supported")
        if esc.isalpha():
            raise self.error(f"unsupported escape \\{esc}")
        return ord(esc)


# ── NFA construction ─────────────────────────────────────────────────────────
# States are lists: ["char", charset, next] ["split", a, b] ["assert", kind, next]
# ["match"]. next/a/b are state indices patched during construction.


class SafeRegex:
    """Compiled pattern supporting boolean unanchored search."""

    __slots__ = ("pattern", "_states", "_start")

    def __init__(self, pattern: str):
        self.pattern = pattern
        ast = _Parser(pattern).parse()
        self._states: list[list] = []
        start, outs = self._build(ast)
        match_state = self._add(["match"])
        for state_idx, slot in outs:
            self._states[state_idx][slot] = match_state
        self._start = start

    def _add(self, state: list) -> int:
        self._states.append(state)
        return len(self._states) - 1

    def _build(self, node) -> tuple[int, list[tuple[int, int]]]:
        """Return (entry state, dangling (state, slot) pairs to patch)."""
        kind = node[0]
        if kind == "empty":
            idx = self._add(["split", None, None])
            return idx, [(idx, 1)]  # slot 1 is the single out-edge; slot 2 unused
        if kind == "char":
            idx = self._add(["char", node[1], None])
            return idx, [(idx, 2)]
        if kind == "anchor":
            idx = self._add(["assert", node[1], None])
            return idx, [(idx, 2)]
        if kind == "cat":
            a_start, a_outs = self._build(node[1])
            b_start, b_outs = self._build(node[2])
            self._patch(a_outs, b_start)
            return a_start, b_outs
        if kind == "alt":
            a_start, a_outs = self._build(node[1])
            b_start, b_outs = self._build(node[2])
            idx = self._add(["split", a_start, b_start])
            return idx, a_outs + b_outs
        if kind == "star":
            inner_start, inner_outs = self._build(node[1])
            idx = self._add(["split", inner_start, None])
            self._patch(inner_outs, idx)
            return idx, [(idx, 2)]
        if kind == "plus":
            inner_start, inner_outs = self._build(node[1])
            idx = self._add(["split", inner_start, None])
            self._patch(inner_outs, idx)
            return inner_start, [(idx, 2)]
        if kind == "opt":
            inner_start, inner_outs = self._build(node[1])
            idx = self._add(["split", inner_start, None])
            return idx, inner_outs + [(idx, 2)]
        if kind == "rep":
            _, inner, low, high = node
            parts = [inner] * low
            if high is None:
                parts.append(("star", inner))
            else:
                parts.extend([("opt", inner)] * (high - low))
            if not parts:
                return self._build(("empty",))
            tree = parts[0]
            for part in parts[1:]:
                tree = ("cat", tree, part)
            return self._build(tree)
        raise RegexError(f"internal: unknown node {kind}")  # pragma: no cover

    def _patch(self, outs: list[tuple[int, int]], target: int) -> None:
        for state_idx, slot in outs:
            self._states[state_idx][slot] = target

    # ── simulation ──

    def _closure(self, seeds: list[int], pos: int, end: int, into: set[int]) -> None:
        stack = list(seeds)
        while stack:
            idx = stack.pop()
            if idx is None or idx in into:
                continue
            state = self._states[idx]
            kind = state[0]
            if kind == "split":
                into.add(idx)
                stack.append(state[1])
                stack.append(state[2])
            elif kind == "assert":
                ok = (pos == 0) if state[1] == "^" else (pos == end)
                into.add(idx)
                if ok:
                    stack.append(state[2])
            else:
                into.add(idx)

    def search(self, text: str) -> bool:
        """True when the pattern matches anywhere in text."""
        end = len(text)
        current: set[int] = set()
        self._closure([self._start], 0, end, current)
        for pos in range(end + 1):
            if any(self._states[i][0] == "match" for i in current):
                return True
            if pos == end:
                break
            ch = text[pos]
            seeds = [self._states[i][2] for i in current if self._states[i][0] == "char" and self._states[i][1].matches(ch)]
            nxt: set[int] = set()
            self._closure(seeds, pos + 1, end, nxt)
            # unanchored search: a fresh match may start at pos + 1
            self._closure([self._start], pos + 1, end, nxt)
            current = nxt
        return any(self._states[i][0] == "match" for i in current)


@lru_cache(maxsize=4096)
def compile_pattern(pattern: str) -> SafeRegex:
    """Compile (memoized); raises RegexError on invalid or unsupported syntax."""
    return SafeRegex(pattern)
