"""Shared helpers: stable seed derivation, order-stable sampling, JSONL I/O."""
from __future__ import annotations

import hashlib
import json
import random
from pathlib import Path
from typing import Any, Iterable, Iterator


def derive_seed(*parts: Any) -> int:
    """Stable 64-bit seed from heterogeneous parts.

    Python's builtin hash() is salted per process; this must survive
    re-runs, so it goes through sha256.
    """
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def substream(*parts: Any) -> random.Random:
    """Named RNG substream derived from the given parts."""
    return random.Random(derive_seed(*parts))


def sample_without_replacement(rng: random.Random, pool: list, k: int) -> list:
    """Uniform draw of k items, partial Fisher-Yates.

    Spelled out with randrange only, so the draw is stable across Python
    versions (random.sample's internals are not guaranteed to be).
    """
    items = list(pool)
    n = len(items)
    k = min(k, n)
    for i in range(k):
        j = rng.randrange(i, n)
        items[i], items[j] = items[j], items[i]
    return items[:k]


def shuffled(rng: random.Random, items: Iterable) -> list:
    """Full Fisher-Yates shuffle returning a new list."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = rng.randrange(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def dumps(row: dict) -> str:
    return json.dumps(row, ensure_ascii=False)


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> int:
    """Write rows atomically-ish (tmp file + rename). Returns row count."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    n = 0
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(dumps(row))
            fh.write("\n")
            n += 1
    tmp.replace(path)
    return n


def write_json(path: str | Path, obj: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
