"""Canonical JSON helpers: sorted keys, compact separators, stable floats."""
from __future__ import annotations

import json
from typing import Any, Iterable


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def to_jsonl(records: Iterable[Any]) -> str:
    return "".join(canonical_json(r) + "\n" for r in records)


def from_jsonl(text: str) -> list:
    return [json.loads(line) for line in text.splitlines() if line.strip()]
