"""Canonical structured-text serialization.

One serializer backs everything that must be byte-stable: event-log records,
API request/response bodies, state snapshots, and scenario files. Canonical
form is UTF-8 JSON with lexicographically sorted keys and no insignificant
whitespace. Absent optional fields are omitted, never null.
"""

from __future__ import annotations

import json
from typing import Any


def dumps(value: Any) -> str:
    """Render a value in canonical form."""
    return json.dumps(
        value,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    )


def dump_bytes(value: Any) -> bytes:
    return dumps(value).encode("utf-8")


def loads(text: str | bytes) -> Any:
    return json.loads(text)
