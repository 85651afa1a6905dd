"""Test-time answering: render prompts, collect completions under the
concurrency bound, parse letters, and aggregate choices into event pairs.

Runs persist records incrementally and can resume, skipping sample ids that
already have a record on disk. Endpoint failures degrade to a
"None of the above" prediction so a long run always completes.
"""
from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

from .client import ClientError, EndpointConfig
from .corpus import Document
from .mcq import MODE_TEST, MCQSample
from .prompts import TaskKind, TemplateSet, render
from .scorer import PairPredictionSet, normalize_pair
from .util import dumps, read_jsonl

STATUS_OK = "ok"
STATUS_FALLBACK = "fallback_none"
STATUS_UNKNOWN = "unknown_letters"

_LETTER_RUNS = re.compile(r"[A-Za-z]+")


class InferenceError(Exception):
    """Records and samples disagree, or inputs are malformed."""


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    raw: str
    letters: frozenset[str]
    status: str


def record_to_dict(record: PredictionRecord) -> dict:
    return {
        "sample_id": record.sample_id,
        "raw": record.raw,
        "letters": sorted(record.letters),
        "status": record.status,
    }


def record_from_dict(raw: dict) -> PredictionRecord:
    return PredictionRecord(
        sample_id=raw["sample_id"],
        raw=raw["raw"],
        letters=frozenset(raw["letters"]),
        status=raw["status"],
    )


def parse_answer(raw: str, sample: MCQSample) -> PredictionRecord:
    """Total function from any reply text to a prediction.

    Letter candidates are single alphabetic tokens (case-folded) and
    all-uppercase runs ("BD"); a run contributes its characters only when
    every one is a valid option letter. The None option is dropped when it
    co-occurs with event letters. No valid letters: unknown_letters if
    letter-like candidates were present, fallback_none otherwise; both fall
    back to the None option.
    """
    option_letters = sample.option_letters
    none_letter = sample.none_letter
    saw_candidate = False
    valid: set[str] = set()
    for token in _LETTER_RUNS.findall(raw):
        if len(token) == 1:
            saw_candidate = True
            folded = token.upper()
            if folded in option_letters:
                valid.add(folded)
        elif token.isupper():
            saw_candidate = True
            if all(ch in option_letters for ch in token):
                valid.update(token)
    if not valid:
        status = STATUS_UNKNOWN if saw_candidate else STATUS_FALLBACK
        return PredictionRecord(
            sample_id=sample.sample_id,
            raw=raw,
            letters=frozenset({none_letter}),
            status=status,
        )
    if none_letter in valid and len(valid) > 1:
        valid.discard(none_letter)
    return PredictionRecord(
        sample_id=sample.sample_id,
        raw=raw,
        letters=frozenset(valid),
        status=STATUS_OK,
    )


def load_records(path: str | Path) -> list[PredictionRecord]:
    return [record_from_dict(row) for row in read_jsonl(path)]


def run_inference(
    samples: list[MCQSample],
    cfg: EndpointConfig,
    responder,
    out_path: str | Path | None = None,
    resume: bool = False,
    templates: TemplateSet | None = None,
) -> list[PredictionRecord]:
    """One answer completion per sample; returns records in sample order.

    `responder` is any callable (prompt, correlation_id) -> text. Records are
    appended to `out_path` as they arrive, so a crash loses at most in-flight
    work; with resume=True, sample ids already present there are not re-sent.
    """
    for sample in samples:
        if sample.mode != MODE_TEST:
            raise InferenceError(
                f"{sample.sample_id}: inference expects test-mode samples, "
                f"got {sample.mode!r}"
            )
    ids = [s.sample_id for s in samples]
    if len(set(ids)) != len(ids):
        raise InferenceError("duplicate sample ids")

    done: dict[str, PredictionRecord] = {}
    out_path = Path(out_path) if out_path is not None else None
    if resume and out_path is not None and out_path.exists():
        for record in load_records(out_path):
            done[record.sample_id] = record

    pending = [s for s in samples if s.sample_id not in done]

    def ask(sample: MCQSample) -> PredictionRecord:
        prompt = render(TaskKind.QA, sample, templates=templates)
        try:
            text = responder(prompt, correlation_id=sample.sample_id)
        except ClientError:
            return PredictionRecord(
                sample_id=sample.sample_id,
                raw="",
                letters=frozenset({sample.none_letter}),
                status=STATUS_FALLBACK,
            )
        return parse_answer(text, sample)

    sink = None
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        sink = open(out_path, "a" if resume else "w", encoding="utf-8")
    try:
        if pending:
            with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
                futures = [pool.submit(ask, s) for s in pending]
                for future in as_completed(futures):
                    record = future.result()
                    done[record.sample_id] = record
                    if sink is not None:
                        sink.write(dumps(record_to_dict(record)))
                        sink.write("\n")
                        sink.flush()
    finally:
        if sink is not None:
            sink.close()

    missing = [sid for sid in ids if sid not in done]
    if missing:
        raise InferenceError(f"no record produced for {missing[:3]}...")
    return [done[sid] for sid in ids]


def aggregate(
    records: list[PredictionRecord],
    samples: list[MCQSample],
    docs: list[Document] | None = None,
    expand_coref: bool = False,
) -> PairPredictionSet:
    """Union of (observed, chosen option) pairs over all records.

    With expand_coref, each mention stands for its whole coreference cluster
    and all cross-cluster pairs are added; `docs` is required then.
    """
    by_id = {s.sample_id: s for s in samples}
    docs_by_id = {d.doc_id: d for d in docs} if docs else {}
    if expand_coref and not docs_by_id:
        raise InferenceError("coreference expansion requires documents")

    pairs: set[tuple[str, str, str]] = set()
    for record in records:
        sample = by_id.get(record.sample_id)
        if sample is None:
            raise InferenceError(f"record for unknown sample {record.sample_id!r}")
        for letter in record.letters:
            mention = sample.mention_of(letter)
            if mention is None:
                continue
            if expand_coref:
                doc = docs_by_id[sample.doc_id]
                for a in doc.cluster_of(sample.observed):
                    for b in doc.cluster_of(mention):
                        if a != b:
                            pairs.add(normalize_pair(sample.doc_id, a, b))
            else:
                pairs.add(normalize_pair(sample.doc_id, sample.observed, mention))
    return PairPredictionSet(pairs=frozenset(pairs))
