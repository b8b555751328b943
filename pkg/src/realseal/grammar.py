"""Canonical ``key=value`` line format shared by manifests, trust lists,
configuration files and machine-readable CLI output.

Each line is ``key=value\\n``. Lines are sorted by key. Values escape ``%``,
``=`` and newline by percent-encoding, so the first ``=`` on a line always
separates key from value.
"""

from __future__ import annotations

import re
from typing import Iterable, Mapping

_KEY_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")
_ESCAPES = {"%": "%25", "=": "%3D", "\n": "%0A"}
_UNESCAPE_RE = re.compile(r"%(25|3D|0A)")
_UNESCAPES = {"25": "%", "3D": "=", "0A": "\n"}


class GrammarError(ValueError):
    """Text does not follow the key=value grammar."""


def escape_value(value: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in value)


def unescape_value(text: str) -> str:
    # any other '%' sequence is malformed in canonical text
    if re.search(r"%(?!25|3D|0A)", text):
        raise GrammarError(f"bad percent escape in {text!r}")
    return _UNESCAPE_RE.sub(lambda m: _UNESCAPES[m.group(1)], text)


def check_key(key: str) -> str:
    if not _KEY_RE.match(key):
        raise GrammarError(f"invalid key {key!r}")
    return key


def dumps(fields: Mapping[str, object]) -> bytes:
    """Serialize ``fields`` canonically (sorted keys, escaped values)."""
    lines = []
    for key in sorted(fields):
        check_key(key)
        value = fields[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={escape_value(str(value))}\n")
    return "".join(lines).encode("utf-8")


def loads(data: bytes | str, strict: bool = True) -> dict[str, str]:
    """Parse key=value text.

    With ``strict`` the input must be byte-for-byte canonical: sorted unique
    keys, every line newline-terminated, no blank lines or comments. The
    relaxed mode is for hand-written configuration files and accepts ``#``
    comments, blank lines and any key order (duplicate keys still fail).
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise GrammarError("not valid UTF-8") from exc
    else:
        text = data
    if strict and text and not text.endswith("\n"):
        raise GrammarError("missing trailing newline")

    out: dict[str, str] = {}
    previous = None
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    for raw in lines:
        line = raw.rstrip("\r") if not strict else raw
        if not strict and (not line.strip() or line.lstrip().startswith("#")):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise GrammarError(f"line without '=': {line!r}")
        if not strict:
            key, value = key.strip(), value.strip()
        check_key(key)
        if key in out:
            raise GrammarError(f"duplicate key {key!r}")
        if strict and previous is not None and key < previous:
            raise GrammarError(f"key {key!r} out of order")
        previous = key
        out[key] = unescape_value(value)
    if strict and dumps(out) != text.encode("utf-8"):
        raise GrammarError("input is not in canonical form")
    return out


def indexed(fields: Mapping[str, str], prefix: str) -> list[dict[str, str]]:
    """Group ``prefix.N.name`` keys into a list ordered by N.

    Indices must be contiguous from zero.
    """
    groups: dict[int, dict[str, str]] = {}
    head = prefix + "."
    for key, value in fields.items():
        if not key.startswith(head):
            continue
        index, dot, name = key[len(head):].partition(".")
        if not index.isdigit() or (len(index) > 1 and index[0] == "0"):
            raise GrammarError(f"bad index in {key!r}")
        groups.setdefault(int(index), {})[name if dot else ""] = value
    if sorted(groups) != list(range(len(groups))):
        raise GrammarError(f"{prefix} indices are not contiguous")
    return [groups[i] for i in range(len(groups))]


def flatten(prefix: str, items: Iterable[Mapping[str, object]]) -> dict[str, object]:
    out: dict[str, object] = {}
    for i, item in enumerate(items):
        for name, value in item.items():
            out[f"{prefix}.{i}.{name}" if name else f"{prefix}.{i}"] = value
    return out
