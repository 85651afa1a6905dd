"""Loading and validation of SFT JSONL training records.

One record per line: {"id", "task", "prompt", "target", "weight"}. The
weight is the per-record loss multiplier; it must be present and
non-negative. Targets must be non-empty, otherwise a record has no tokens
to compute a loss over.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class RecordError(ValueError):
    """A record file line is missing, malformed, or inconsistent."""


REQUIRED_KEYS = ("id", "task", "prompt", "target", "weight")
STRING_KEYS = ("id", "task", "prompt", "target")


@dataclass(frozen=True)
class SFTRecord:
    record_id: str
    task: str
    prompt: str
    target: str
    weight: float


def _parse_line(lineno: int, line: str) -> SFTRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(f"line {lineno}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise RecordError(f"line {lineno}: expected an object")
    missing = [key for key in REQUIRED_KEYS if key not in obj]
    if missing:
        raise RecordError(f"line {lineno}: missing {', '.join(missing)}")
    for key in STRING_KEYS:
        if not isinstance(obj[key], str):
            raise RecordError(f"line {lineno}: {key} must be a string")
    weight = obj["weight"]
    # bool is an int subclass; reject it explicitly
    if isinstance(weight, bool) or not isinstance(weight, (int, float)):
        raise RecordError(f"line {lineno}: weight must be a number")
    if weight < 0:
        raise RecordError(f"line {lineno}: weight must be non-negative")
    if not obj["target"]:
        raise RecordError(f"line {lineno}: empty target")
    if not obj["id"]:
        raise RecordError(f"line {lineno}: empty id")
    return SFTRecord(
        record_id=obj["id"],
        task=obj["task"],
        prompt=obj["prompt"],
        target=obj["target"],
        weight=float(weight),
    )


def load_records(path: str | Path) -> list[SFTRecord]:
    """Read every record in the file, skipping blank lines.

    Raises RecordError naming the first offending line, or if the file
    contains no records at all.
    """
    records: list[SFTRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                records.append(_parse_line(lineno, line))
    if not records:
        raise RecordError(f"{path}: no records")
    return records
