"""Staged repair for almost-JSON emitted by language models.

Models wrap payloads in code fences, leave trailing commas, use single
quotes, or forget to close brackets. Repair runs a fixed stage order,
attempting a parse after each cumulative stage, and stops at the first
success:

    strip_noise -> balance_brackets -> trailing_commas -> single_quotes -> bare_keys

Each stage can be disabled; disabled stages are skipped without changing
the order of the rest. If no stage yields valid JSON the input is
rejected with ParseFailed rather than guessed at.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import ParseFailed

_FENCE_RE = re.compile(r"```(?:json|JSON)?\s*\n?(.*?)```", re.DOTALL)
_BARE_KEY_RE = re.compile(r"([{,]\s*)([A-Za-z_][A-Za-z0-9_\-]*)(\s*:)")


@dataclass(frozen=True)
class RepairOutcome:
    data: object
    text: str
    repair_applied: bool
    stages: tuple[str, ...]


def _split_strings(text: str) -> list[tuple[bool, str]]:
    """Split into (is_string, segment) runs, honouring backslash escapes.

    Only double-quoted strings count; single quotes are data until the
    single_quotes stage rewrites them.
    """
    segments: list[tuple[bool, str]] = []
    buf: list[str] = []
    in_string = False
    i = 0
    while i < len(text):
        ch = text[i]
        if in_string:
            buf.append(ch)
            if ch == "\\" and i + 1 < len(text):
                buf.append(text[i + 1])
                i += 2
                continue
            if ch == '"':
                segments.append((True, "".join(buf)))
                buf = []
                in_string = False
        else:
            if ch == '"':
                if buf:
                    segments.append((False, "".join(buf)))
                buf = [ch]
                in_string = True
            else:
                buf.append(ch)
        i += 1
    if buf:
        segments.append((in_string, "".join(buf)))
    return segments


def strip_noise(text: str) -> str:
    """Drop code fences and any prose around the outermost JSON value."""
    fenced = _FENCE_RE.search(text)
    if fenced and ("{" in fenced.group(1) or "[" in fenced.group(1)):
        # A fence match without an opener is a stray marker, not a payload.
        text = fenced.group(1)
    starts = [i for i in (text.find("{"), text.find("[")) if i != -1]
    ends = [i for i in (text.rfind("}"), text.rfind("]")) if i != -1]
    if starts and ends and max(ends) > min(starts):
        text = text[min(starts) : max(ends) + 1]
    return text.strip()


def balance_brackets(text: str) -> str:
    """Close unterminated strings and brackets, drop unmatched closers."""
    out: list[str] = []
    stack: list[str] = []
    in_string = False
    i = 0
    while i < len(text):
        ch = text[i]
        if in_string:
            out.append(ch)
            if ch == "\\" and i + 1 < len(text):
                out.append(text[i + 1])
                i += 2
                continue
            if ch == '"':
                in_string = False
        else:
            if ch == '"':
                in_string = True
                out.append(ch)
            elif ch in "{[":
                stack.append(ch)
                out.append(ch)
            elif ch in "}]":
                opener = "{" if ch == "}" else "["
                if stack and stack[-1] == opener:
                    stack.pop()
                    out.append(ch)
                # unmatched closer: dropped
            else:
                out.append(ch)
        i += 1
    if in_string:
        out.append('"')
    while stack:
        out.append("}" if stack.pop() == "{" else "]")
    return "".join(out)


def remove_trailing_commas(text: str) -> str:
    segments = _split_strings(text)
    rebuilt = [
        seg if is_str else re.sub(r",(\s*[}\]])", r"\1", seg) for is_str, seg in segments
    ]
    return "".join(rebuilt)


def convert_single_quotes(text: str) -> str:
    """Rewrite single-quoted strings as double-quoted, outside real strings."""
    out: list[str] = []
    state = "plain"  # plain | double | single
    i = 0
    while i < len(text):
        ch = text[i]
        if state == "plain":
            if ch == '"':
                state = "double"
                out.append(ch)
            elif ch == "'":
                state = "single"
                out.append('"')
            else:
                out.append(ch)
        elif state == "double":
            out.append(ch)
            if ch == "\\" and i + 1 < len(text):
                out.append(text[i + 1])
                i += 2
                continue
            if ch == '"':
                state = "plain"
        else:  # single
            if ch == "\\" and i + 1 < len(text):
                nxt = text[i + 1]
                if nxt == "'":
                    out.append("'")
                else:
                    out.append(ch)
                    out.append(nxt)
                i += 2
                continue
            if ch == "'":
                state = "plain"
                out.append('"')
            elif ch == '"':
                out.append('\\"')
            else:
                out.append(ch)
        i += 1
    return "".join(out)


def quote_bare_keys(text: str) -> str:
    segments = _split_strings(text)
    rebuilt = []
    for is_str, seg in segments:
        if is_str:
            rebuilt.append(seg)
        else:
            rebuilt.append(_BARE_KEY_RE.sub(r'\1"\2"\3', seg))
    return "".join(rebuilt)


STAGES: tuple[tuple[str, object], ...] = (
    ("strip_noise", strip_noise),
    ("balance_brackets", balance_brackets),
    ("trailing_commas", remove_trailing_commas),
    ("single_quotes", convert_single_quotes),
    ("bare_keys", quote_bare_keys),
)

STAGE_NAMES = tuple(name for name, _ in STAGES)


def repair_json(text: str, enabled_stages: set[str] | None = None) -> RepairOutcome:
    """Parse `text` as JSON, repairing in stages if the raw parse fails.

    enabled_stages restricts which stages may run (default: all). Raises
    ParseFailed when nothing parses after the last enabled stage.
    """
    if enabled_stages is not None:
        unknown = set(enabled_stages) - set(STAGE_NAMES)
        if unknown:
            raise ValueError(f"unknown repair stages: {sorted(unknown)}")
    try:
        return RepairOutcome(json.loads(text), text, False, ())
    except (json.JSONDecodeError, UnicodeDecodeError):
        pass
    current = text
    applied: list[str] = []
    for name, fn in STAGES:
        if enabled_stages is not None and name not in enabled_stages:
            continue
        current = fn(current)
        applied.append(name)
        try:
            data = json.loads(current)
        except json.JSONDecodeError:
            continue
        return RepairOutcome(data, current, True, tuple(applied))
    raise ParseFailed(
        f"unparseable after stages {applied}: {text[:120]!r}"
    )
