"""Prompt rendering for the training tasks and the rationale-collection request.

Templates are versioned and byte-frozen: goldens under testdata/prompts/ pin
the default set. Custom wording can be supplied from a JSON file, but the
placeholder structure is validated so downstream parsing stays intact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .mcq import MCQSample

TEMPLATE_VERSION = "v1"

RATIONALE_INSTRUCTION = (
    "The known answer to this question has been determined to be {labels}. "
    "Please provide a reason for choosing this answer. No more than 50 words."
)


class PromptError(Exception):
    """Template validation or rendering failure."""


class TaskKind(str, Enum):
    QA = "qa"
    RATIONALE = "rationale"
    ECG_EXTRACT = "ecg"
    QA_CONCAT_R = "qa_concat_r"


QA_FAMILY = (TaskKind.QA, TaskKind.RATIONALE, TaskKind.QA_CONCAT_R)

DEFAULT_INSTRUCTIONS: dict[TaskKind, str] = {
    TaskKind.QA: (
        "Answer the following multiple-choice question by listing the letters "
        "of all correct options.\n\n{context}\n{question}\n{options}"
    ),
    TaskKind.RATIONALE: (
        "Explain the reasoning for the correct answer to the following "
        "question.\n\n{context}\n{question}\n{options}"
    ),
    TaskKind.ECG_EXTRACT: (
        "List all coreference and causal relations between events in the "
        "following text.\n\n{context}"
    ),
    TaskKind.QA_CONCAT_R: (
        "Answer the following multiple-choice question by listing the letters "
        "of all correct options, then explain the reasoning for your "
        "answer.\n\n{context}\n{question}\n{options}"
    ),
}


def _check_placeholders(task: TaskKind, template: str) -> None:
    counts = {
        name: template.count("{%s}" % name)
        for name in ("context", "question", "options")
    }
    if task in QA_FAMILY:
        wrong = [name for name, n in counts.items() if n != 1]
        if wrong:
            raise PromptError(
                f"{task.value} template must use each of {{context}}, "
                f"{{question}}, {{options}} exactly once; bad: {wrong}"
            )
    else:
        if counts["context"] != 1:
            raise PromptError(
                f"{task.value} template must use {{context}} exactly once"
            )
        if counts["question"] or counts["options"]:
            raise PromptError(
                f"{task.value} template must not use {{question}} or {{options}}"
            )


@dataclass(frozen=True)
class TemplateSet:
    instructions: dict = field(default_factory=lambda: dict(DEFAULT_INSTRUCTIONS))
    version: str = TEMPLATE_VERSION

    def __post_init__(self) -> None:
        for task in TaskKind:
            if task not in self.instructions:
                raise PromptError(f"missing template for task {task.value!r}")
            _check_placeholders(task, self.instructions[task])

    def instruction(self, task: TaskKind) -> str:
        return self.instructions[task]


DEFAULT_TEMPLATES = TemplateSet()


def load_templates(path: str | Path) -> TemplateSet:
    """Load a partial override: JSON object of {task name: template string}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise PromptError(f"{path}: expected a JSON object")
    merged = dict(DEFAULT_INSTRUCTIONS)
    valid = {t.value: t for t in TaskKind}
    for name, template in raw.items():
        if name not in valid:
            raise PromptError(f"{path}: unknown task {name!r}")
        if not isinstance(template, str):
            raise PromptError(f"{path}: template for {name!r} is not a string")
        merged[valid[name]] = template
    return TemplateSet(instructions=merged)


def options_block(sample: MCQSample) -> str:
    return "\n".join(f"{opt.letter}: {opt.surface}" for opt in sample.options)


def render(
    task: TaskKind,
    sample: MCQSample,
    templates: TemplateSet | None = None,
    mode: str = "multitask",
) -> str:
    """Render the prompt for one task over one sample. Deterministic:
    identical inputs produce identical bytes."""
    if task is TaskKind.QA_CONCAT_R and mode != "concat":
        raise PromptError("qa_concat_r prompts are only valid in concat mode")
    templates = templates or DEFAULT_TEMPLATES
    text = templates.instruction(task)
    # str.replace, not str.format: context text may itself contain braces.
    text = text.replace("{context}", sample.context.text)
    if task in QA_FAMILY:
        text = text.replace("{question}", sample.question)
        text = text.replace("{options}", options_block(sample))
    return text


def answer_label(gold_letters) -> str:
    return "".join(sorted(gold_letters))


def render_rationale_request(
    sample: MCQSample,
    gold_letters=None,
    templates: TemplateSet | None = None,
) -> str:
    """QA prompt plus the answer-conditioned request for a short justification."""
    letters = sample.gold_letters if gold_letters is None else gold_letters
    if not letters:
        raise PromptError(f"{sample.sample_id}: empty gold letters")
    base = render(TaskKind.QA, sample, templates=templates)
    tail = RATIONALE_INSTRUCTION.replace("{labels}", answer_label(letters))
    return base + "\n" + tail
