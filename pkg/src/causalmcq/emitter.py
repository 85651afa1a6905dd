"""Supervised fine-tuning record emission with per-task loss weights.

Multitask mode writes one record per (sample, task): answer letters, the
collected rationale, and one graph-serialization record per distinct clipped
span. Concat mode writes a single record per sample whose target is the
answer followed by the rationale. Output is order-stable and byte-identical
across reruns.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .causal_graph import build_graph, linearize, span_key
from .corpus import Document
from .mcq import MCQSample
from .prompts import TaskKind, TemplateSet, answer_label, render
from .util import write_jsonl

MODE_MULTITASK = "multitask"
MODE_CONCAT = "concat"

WEIGHTS_THREE_TASK: dict[TaskKind, float] = {
    TaskKind.QA: 0.5,
    TaskKind.RATIONALE: 0.25,
    TaskKind.ECG_EXTRACT: 0.25,
}
WEIGHTS_TWO_TASK: dict[TaskKind, float] = {
    TaskKind.QA: 0.3,
    TaskKind.RATIONALE: 0.7,
}

WEIGHT_SUM_TOLERANCE = 1e-9


class EmitError(Exception):
    """Inputs incomplete or weights invalid."""


@dataclass(frozen=True)
class SFTRecord:
    record_id: str
    task: TaskKind
    prompt: str
    target: str
    weight: float

    def to_dict(self) -> dict:
        return {
            "id": self.record_id,
            "task": self.task.value,
            "prompt": self.prompt,
            "target": self.target,
            "weight": self.weight,
        }


@dataclass(frozen=True)
class EmissionReport:
    path: str
    total: int
    per_task: dict

    def to_dict(self) -> dict:
        return {"path": self.path, "total": self.total, "per_task": dict(self.per_task)}


def sample_span_key(sample: MCQSample) -> str:
    return span_key(
        sample.doc_id, sample.context.first_sentence, sample.context.last_sentence
    )


def gold_linearizations(
    samples: list[MCQSample], docs: list[Document]
) -> dict[str, str]:
    """Serialized gold graph per distinct clipped span across the samples."""
    by_id = {d.doc_id: d for d in docs}
    out: dict[str, str] = {}
    for sample in samples:
        key = sample_span_key(sample)
        if key in out:
            continue
        doc = by_id.get(sample.doc_id)
        if doc is None:
            raise EmitError(f"sample {sample.sample_id} references unknown document")
        graph = build_graph(
            doc, sample.context.first_sentence, sample.context.last_sentence
        )
        out[key] = linearize(graph, doc)
    return out


def _validate_weights(weights: dict[TaskKind, float]) -> None:
    if not weights:
        raise EmitError("no active tasks")
    if TaskKind.QA_CONCAT_R in weights:
        raise EmitError("qa_concat_r is not a weighted task; use concat mode")
    for task, weight in weights.items():
        if not 0.0 < weight <= 1.0:
            raise EmitError(f"weight for {task.value} must be in (0, 1], got {weight}")
    total = sum(weights.values())
    if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise EmitError(f"task weights must sum to 1.0, got {total!r}")


def _require_coverage(name: str, needed: list[str], available: dict) -> None:
    missing = [key for key in needed if key not in available]
    if missing:
        shown = ", ".join(missing[:5])
        more = f" (+{len(missing) - 5} more)" if len(missing) > 5 else ""
        raise EmitError(f"missing {name} for: {shown}{more}")


def build_records(
    samples: list[MCQSample],
    rationales: dict[str, str] | None = None,
    linearizations: dict[str, str] | None = None,
    weights: dict[TaskKind, float] | None = None,
    mode: str = MODE_MULTITASK,
    templates: TemplateSet | None = None,
) -> list[SFTRecord]:
    rationales = rationales or {}
    linearizations = linearizations or {}
    records: list[SFTRecord] = []

    if mode == MODE_CONCAT:
        _require_coverage(
            "rationales", [s.sample_id for s in samples], rationales
        )
        for sample in samples:
            target = answer_label(sample.gold_letters) + "\n" + rationales[sample.sample_id]
            records.append(
                SFTRecord(
                    record_id=f"{sample.sample_id}::qa_concat_r",
                    task=TaskKind.QA_CONCAT_R,
                    prompt=render(
                        TaskKind.QA_CONCAT_R, sample, templates=templates, mode=mode
                    ),
                    target=target,
                    weight=1.0,
                )
            )
        return records

    if mode != MODE_MULTITASK:
        raise EmitError(f"unknown emission mode {mode!r}")
    weights = weights if weights is not None else dict(WEIGHTS_THREE_TASK)
    _validate_weights(weights)
    if TaskKind.RATIONALE in weights:
        _require_coverage(
            "rationales", [s.sample_id for s in samples], rationales
        )
    if TaskKind.ECG_EXTRACT in weights:
        span_keys = []
        seen = set()
        for sample in samples:
            key = sample_span_key(sample)
            if key not in seen:
                seen.add(key)
                span_keys.append(key)
        _require_coverage("span linearizations", span_keys, linearizations)

    emitted_spans: set[str] = set()
    for sample in samples:
        if TaskKind.QA in weights:
            records.append(
                SFTRecord(
                    record_id=f"{sample.sample_id}::qa",
                    task=TaskKind.QA,
                    prompt=render(TaskKind.QA, sample, templates=templates),
                    target=answer_label(sample.gold_letters),
                    weight=weights[TaskKind.QA],
                )
            )
        if TaskKind.RATIONALE in weights:
            records.append(
                SFTRecord(
                    record_id=f"{sample.sample_id}::rationale",
                    task=TaskKind.RATIONALE,
                    prompt=render(TaskKind.RATIONALE, sample, templates=templates),
                    target=rationales[sample.sample_id],
                    weight=weights[TaskKind.RATIONALE],
                )
            )
        if TaskKind.ECG_EXTRACT in weights:
            key = sample_span_key(sample)
            if key not in emitted_spans:
                emitted_spans.add(key)
                records.append(
                    SFTRecord(
                        record_id=f"{key}::ecg",
                        task=TaskKind.ECG_EXTRACT,
                        prompt=render(TaskKind.ECG_EXTRACT, sample, templates=templates),
                        target=linearizations[key],
                        weight=weights[TaskKind.ECG_EXTRACT],
                    )
                )
    return records


def emit_sft(
    samples: list[MCQSample],
    rationales: dict[str, str] | None,
    linearizations: dict[str, str] | None,
    weights: dict[TaskKind, float] | None,
    mode: str,
    out: str | Path,
    templates: TemplateSet | None = None,
) -> EmissionReport:
    records = build_records(
        samples,
        rationales=rationales,
        linearizations=linearizations,
        weights=weights,
        mode=mode,
        templates=templates,
    )
    write_jsonl(out, (r.to_dict() for r in records))
    per_task: dict[str, int] = {}
    for record in records:
        per_task[record.task.value] = per_task.get(record.task.value, 0) + 1
    return EmissionReport(path=str(out), total=len(records), per_task=per_task)
