"""Precision / recall / F1 over unordered causal event pairs, with
intra-sentence and inter-sentence breakdowns.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .corpus import Document, UnknownMentionError
from .util import read_jsonl, write_jsonl


class ScoringError(Exception):
    """Predictions reference unknown documents or mentions."""


def normalize_pair(doc_id: str, a: str, b: str) -> tuple[str, str, str]:
    if a == b:
        raise ScoringError(f"{doc_id}: self-pair {a!r}")
    return (doc_id, a, b) if a < b else (doc_id, b, a)


@dataclass(frozen=True)
class PairPredictionSet:
    pairs: frozenset[tuple[str, str, str]]

    @staticmethod
    def from_pairs(items) -> "PairPredictionSet":
        return PairPredictionSet(
            pairs=frozenset(normalize_pair(*item) for item in items)
        )


def load_pairs(path: str | Path) -> PairPredictionSet:
    return PairPredictionSet.from_pairs(
        (row["doc_id"], row["a"], row["b"]) for row in read_jsonl(path)
    )


def save_pairs(path: str | Path, pred: PairPredictionSet) -> int:
    rows = ({"doc_id": d, "a": a, "b": b} for d, a, b in sorted(pred.pairs))
    return write_jsonl(path, rows)


@dataclass(frozen=True)
class Bucket:
    tp: int
    fp: int
    fn: int
    f1: float


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    intra: Bucket
    inter: Bucket


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return precision, recall, f1


def gold_pairs(docs: list[Document]) -> frozenset[tuple[str, str, str]]:
    """Unordered gold pairs; links annotated in both directions collapse."""
    pairs = set()
    for doc in docs:
        for link in doc.causal_links:
            pairs.add(normalize_pair(doc.doc_id, link.cause, link.effect))
    return frozenset(pairs)


def score(pred: PairPredictionSet, docs: list[Document]) -> Metrics:
    by_id = {doc.doc_id: doc for doc in docs}

    def is_intra(pair: tuple[str, str, str]) -> bool:
        doc_id, a, b = pair
        doc = by_id.get(doc_id)
        if doc is None:
            raise ScoringError(f"unknown doc_id {doc_id!r} in predictions")
        try:
            return doc.mention(a).sentence_index == doc.mention(b).sentence_index
        except UnknownMentionError as exc:
            raise ScoringError(f"{doc_id}: {exc}") from exc

    gold = gold_pairs(docs)
    for pair in pred.pairs:
        is_intra(pair)

    tp_pairs = pred.pairs & gold
    fp_pairs = pred.pairs - gold
    fn_pairs = gold - pred.pairs

    def bucket(want_intra: bool) -> Bucket:
        tp = sum(1 for p in tp_pairs if is_intra(p) == want_intra)
        fp = sum(1 for p in fp_pairs if is_intra(p) == want_intra)
        fn = sum(1 for p in fn_pairs if is_intra(p) == want_intra)
        return Bucket(tp=tp, fp=fp, fn=fn, f1=_prf(tp, fp, fn)[2])

    tp, fp, fn = len(tp_pairs), len(fp_pairs), len(fn_pairs)
    precision, recall, f1 = _prf(tp, fp, fn)
    return Metrics(
        tp=tp,
        fp=fp,
        fn=fn,
        precision=precision,
        recall=recall,
        f1=f1,
        intra=bucket(True),
        inter=bucket(False),
    )


def metrics_to_dict(m: Metrics) -> dict:
    return {
        "tp": m.tp,
        "fp": m.fp,
        "fn": m.fn,
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "intra": {"tp": m.intra.tp, "fp": m.intra.fp, "fn": m.intra.fn, "f1": m.intra.f1},
        "inter": {"tp": m.inter.tp, "fp": m.inter.fp, "fn": m.inter.fn, "f1": m.inter.f1},
    }
