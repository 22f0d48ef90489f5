"""Deterministic answer normalization.

Replaces LLM-assisted format cleanup with fixed rules. All functions are
idempotent: normalize(normalize(x)) == normalize(x).
"""
from __future__ import annotations

import re

KINDS = ("integer", "integer_list", "string", "grid", "expression")

_QUOTE_PAIRS = {('"', '"'), ("'", "'")}
_BRACKET_PAIRS = {("[", "]"), ("(", ")"), ("{", "}")}
_INT_RE = re.compile(r"^[+-]?\d+$")
_CLOSER = {"[": "]", "(": ")", "{": "}"}


def _strip_matching_wrap(s: str, pairs: set[tuple[str, str]]) -> str:
    """Strip wrapping pairs, but only when the opener really closes at the end."""
    while len(s) >= 2:
        head, tail = s[0], s[-1]
        if (head, tail) not in pairs:
            break
        if head in _CLOSER:
            depth = 0
            closes_at_end = False
            for i, ch in enumerate(s):
                if ch == head:
                    depth += 1
                elif ch == _CLOSER[head]:
                    depth -= 1
                    if depth == 0:
                        closes_at_end = i == len(s) - 1
                        break
            if not closes_at_end:
                break
        s = s[1:-1].strip()
    return s


def _norm_integer(s: str) -> str:
    s = _strip_matching_wrap(s, _QUOTE_PAIRS | _BRACKET_PAIRS)
    s = s.rstrip(".").strip()
    compact = s.replace(",", "").replace(" ", "")
    if _INT_RE.match(compact):
        return str(int(compact))
    return s


def _norm_integer_list(s: str) -> str:
    s = _strip_matching_wrap(s, _QUOTE_PAIRS | _BRACKET_PAIRS)
    parts = [p for p in re.split(r"[,;\s]+", s) if p]
    return ",".join(_norm_integer(p) for p in parts)


def _norm_string(s: str) -> str:
    s = _strip_matching_wrap(s, _QUOTE_PAIRS)
    s = " ".join(s.split())
    return s.casefold()


def _split_row(row: str) -> list[str]:
    row = row.strip()
    if "," in row:
        return [c.strip() for c in row.split(",") if c.strip()]
    if any(ch.isspace() for ch in row):
        return row.split()
    return list(row)


def _norm_grid(s: str) -> str:
    rows = [r.strip() for r in re.split(r"[\n;]+", s) if r.strip()]
    rows = [_strip_matching_wrap(r, _BRACKET_PAIRS | _QUOTE_PAIRS) for r in rows]
    return ";".join(",".join(_split_row(r)) for r in rows if r)


def _norm_expression(s: str) -> str:
    s = _strip_matching_wrap(s, _QUOTE_PAIRS)
    return re.sub(r"\s+", "", s)


def normalize_answer(raw: str, kind: str) -> str:
    """Canonicalize a raw model answer for rule-based comparison."""
    if kind not in KINDS:
        raise ValueError(f"unknown normalization kind {kind!r}; expected one of {KINDS}")
    s = raw.strip()
    if kind == "integer":
        return _norm_integer(s)
    if kind == "integer_list":
        return _norm_integer_list(s)
    if kind == "string":
        return _norm_string(s)
    if kind == "grid":
        return _norm_grid(s)
    return _norm_expression(s)
