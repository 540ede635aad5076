"""Plain ``key: value`` documents used for metrics and certificate reports."""

from __future__ import annotations

import math
from typing import Any, Mapping


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def dumps(doc: Mapping[str, Any], title: str | None = None) -> str:
    lines = [f"# {title}"] if title else []
    for k, v in doc.items():
        if "\n" in str(k) or ":" in str(k):
            raise ValueError(f"bad key {k!r}")
        lines.append(f"{k}: {_fmt(v)}")
    return "\n".join(lines) + "\n"


def _parse(s: str) -> Any:
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    if low == "none":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def loads(text: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition(":")
        if not sep:
            raise ValueError(f"malformed report line: {raw!r}")
        out[key.strip()] = _parse(val.strip())
    return out
