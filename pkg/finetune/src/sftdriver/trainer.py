"""Weighted multi-task fine-tuning loop.

Each record is packed as [bos] + prompt + target + [eos]. Labels mask the
bos and prompt positions with -100, so cross-entropy is computed over the
target tokens (and the closing eos) only. The batch objective is the sum
over records of weight * mean cross-entropy, with weights taken from the
records themselves.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch.nn import functional as F

from .lora import adapter_state_dict, apply_adapters
from .records import RecordError, SFTRecord, load_records

IGNORE_INDEX = -100
WEIGHT_MODE_FROM_RECORDS = "from_records"


@dataclass(frozen=True)
class TrainConfig:
    sft_path: str
    base_model: str
    adapter_rank: int = 32
    epochs: int = 10
    dropout: float = 0.1
    learning_rate: float = 5e-5
    weight_mode: str = WEIGHT_MODE_FROM_RECORDS
    batch_size: int = 8
    max_steps: int | None = None
    max_length: int = 512
    seed: int = 0
    device: str = "cpu"
    output_dir: str = "adapter_out"

    def __post_init__(self):
        if self.adapter_rank < 1:
            raise ValueError("adapter_rank must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_mode != WEIGHT_MODE_FROM_RECORDS:
            raise ValueError(f"unsupported weight_mode: {self.weight_mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1 when set")
        if self.max_length < 2:
            raise ValueError("max_length must be >= 2")


@dataclass(frozen=True)
class TrainResult:
    steps: int
    initial_loss: float
    final_loss: float
    adapter_path: Path
    config_path: Path
    log_path: Path
    wrapped_modules: list[str] = field(default_factory=list)


def encode_record(
    record: SFTRecord, tokenizer, max_length: int
) -> tuple[list[int], list[int]]:
    """Token ids and labels for one record.

    Labels carry IGNORE_INDEX over bos and prompt positions and the real
    token ids over target and eos positions. Raises RecordError when
    truncation to max_length leaves no scorable target token.
    """
    prompt_ids = tokenizer(record.prompt, add_special_tokens=False)["input_ids"]
    target_ids = tokenizer(record.target, add_special_tokens=False)["input_ids"]
    bos = [] if tokenizer.bos_token_id is None else [tokenizer.bos_token_id]
    eos = [] if tokenizer.eos_token_id is None else [tokenizer.eos_token_id]
    input_ids = bos + prompt_ids + target_ids + eos
    labels = [IGNORE_INDEX] * (len(bos) + len(prompt_ids)) + target_ids + eos
    input_ids = input_ids[:max_length]
    labels = labels[:max_length]
    # the first position is never predicted, so a target there is unusable
    if all(lab == IGNORE_INDEX for lab in labels[1:]):
        raise RecordError(
            f"record {record.record_id}: no target tokens left after "
            f"truncation to {max_length}"
        )
    return input_ids, labels


def collate(
    records: list[SFTRecord], tokenizer, max_length: int, device=None
) -> dict:
    """Right-pad a batch of encoded records into tensors."""
    if not records:
        raise ValueError("empty batch")
    encoded = [encode_record(r, tokenizer, max_length) for r in records]
    width = max(len(ids) for ids, _ in encoded)
    pad_id = tokenizer.pad_token_id
    if pad_id is None:
        pad_id = tokenizer.eos_token_id if tokenizer.eos_token_id is not None else 0
    input_ids = torch.full((len(records), width), pad_id, dtype=torch.long)
    attention_mask = torch.zeros((len(records), width), dtype=torch.long)
    labels = torch.full((len(records), width), IGNORE_INDEX, dtype=torch.long)
    for row, (ids, labs) in enumerate(encoded):
        input_ids[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
        attention_mask[row, : len(ids)] = 1
        labels[row, : len(labs)] = torch.tensor(labs, dtype=torch.long)
    batch = {
        "input_ids": input_ids,
        "attention_mask": attention_mask,
        "labels": labels,
        "weights": torch.tensor([r.weight for r in records], dtype=torch.float64),
        "tasks": [r.task for r in records],
    }
    if device is not None:
        for key in ("input_ids", "attention_mask", "labels", "weights"):
            batch[key] = batch[key].to(device)
    return batch


def weighted_loss_from_logits(
    logits: torch.Tensor, labels: torch.Tensor, weights: torch.Tensor
) -> tuple[torch.Tensor, list[float]]:
    """Sum over records of weight * mean cross-entropy on unmasked labels.

    Returns the differentiable total and the unweighted per-record values.
    Masked positions contribute nothing: only labels != IGNORE_INDEX enter
    the cross-entropy, and each record's mean divides by its own count.
    """
    total = logits.new_zeros((), dtype=logits.dtype)
    per_record: list[float] = []
    for row in range(logits.shape[0]):
        # causal shift: position t predicts token t+1
        shift_logits = logits[row, :-1]
        shift_labels = labels[row, 1:]
        mask = shift_labels != IGNORE_INDEX
        ce = F.cross_entropy(shift_logits[mask], shift_labels[mask])
        total = total + weights[row].to(logits.dtype) * ce
        per_record.append(float(ce.detach()))
    return total, per_record


def batch_loss(model, batch: dict) -> tuple[torch.Tensor, dict[str, float]]:
    """Forward one collated batch; returns (total, mean CE per task)."""
    out = model(
        input_ids=batch["input_ids"], attention_mask=batch["attention_mask"]
    )
    total, per_record = weighted_loss_from_logits(
        out.logits, batch["labels"], batch["weights"]
    )
    sums: dict[str, list[float]] = {}
    for task, value in zip(batch["tasks"], per_record):
        sums.setdefault(task, []).append(value)
    per_task = {task: sum(vals) / len(vals) for task, vals in sums.items()}
    return total, per_task


def _load_base(name: str):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(name)
    if tokenizer.pad_token_id is None:
        tokenizer.pad_token = tokenizer.eos_token
    model = AutoModelForCausalLM.from_pretrained(name)
    return model, tokenizer


def train(cfg: TrainConfig, model=None, tokenizer=None) -> TrainResult:
    """Run the fine-tuning loop and write the adapter artifacts.

    model and tokenizer may be injected (tests use a tiny local model);
    otherwise both load from cfg.base_model. Writes adapter.pt,
    adapter_config.json, and loss_log.jsonl (one line per step with the
    weighted total and the mean per-task cross-entropy) to cfg.output_dir.
    """
    records = load_records(cfg.sft_path)
    if model is None or tokenizer is None:
        model, tokenizer = _load_base(cfg.base_model)
    wrapped = apply_adapters(model, cfg.adapter_rank, cfg.dropout)
    device = torch.device(cfg.device)
    model.to(device)
    model.train()
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(params, lr=cfg.learning_rate)
    rng = random.Random(cfg.seed)

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "loss_log.jsonl"

    step = 0
    initial = final = 0.0
    done = False
    with open(log_path, "w", encoding="utf-8") as log:
        for epoch in range(cfg.epochs):
            order = list(range(len(records)))
            rng.shuffle(order)
            for start in range(0, len(order), cfg.batch_size):
                chunk = [records[i] for i in order[start : start + cfg.batch_size]]
                batch = collate(chunk, tokenizer, cfg.max_length, device)
                total, per_task = batch_loss(model, batch)
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
                step += 1
                value = float(total.detach())
                if step == 1:
                    initial = value
                final = value
                log.write(
                    json.dumps(
                        {
                            "step": step,
                            "epoch": epoch,
                            "loss": value,
                            "tasks": per_task,
                        }
                    )
                    + "\n"
                )
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    done = True
                    break
            if done:
                break

    adapter_path = out_dir / "adapter.pt"
    torch.save(adapter_state_dict(model), adapter_path)
    config_path = out_dir / "adapter_config.json"
    config_path.write_text(
        json.dumps(
            {
                "base_model": cfg.base_model,
                "adapter_rank": cfg.adapter_rank,
                "epochs": cfg.epochs,
                "dropout": cfg.dropout,
                "learning_rate": cfg.learning_rate,
                "weight_mode": cfg.weight_mode,
                "batch_size": cfg.batch_size,
                "max_length": cfg.max_length,
                "seed": cfg.seed,
                "steps": step,
                "wrapped_modules": wrapped,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return TrainResult(
        steps=step,
        initial_loss=initial,
        final_loss=final,
        adapter_path=adapter_path,
        config_path=config_path,
        log_path=log_path,
        wrapped_modules=wrapped,
    )
