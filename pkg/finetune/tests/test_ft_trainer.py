import json

import pytest
import torch

from sftdriver.records import RecordError
from sftdriver.trainer import (
    IGNORE_INDEX,
    TrainConfig,
    batch_loss,
    collate,
    encode_record,
    train,
    weighted_loss_from_logits,
)

from ft_helpers import SAMPLE_ROWS, manual_record_ce, record_from_row


def test_config_defaults():
    cfg = TrainConfig(sft_path="x.jsonl", base_model="m")
    assert cfg.adapter_rank == 32
    assert cfg.epochs == 10
    assert cfg.dropout == 0.1
    assert cfg.learning_rate == 5e-5
    assert cfg.weight_mode == "from_records"


@pytest.mark.parametrize(
    "overrides",
    [
        {"adapter_rank": 0},
        {"epochs": 0},
        {"dropout": 1.0},
        {"dropout": -0.1},
        {"learning_rate": 0.0},
        {"weight_mode": "uniform"},
        {"batch_size": 0},
        {"max_steps": 0},
        {"max_length": 1},
    ],
)
def test_config_validation(overrides):
    with pytest.raises(ValueError):
        TrainConfig(sft_path="x.jsonl", base_model="m", **overrides)


def test_encode_masks_prompt_and_labels_target(tokenizer):
    record = record_from_row(SAMPLE_ROWS[0])
    input_ids, labels = encode_record(record, tokenizer, max_length=512)
    prompt_len = len(tokenizer(record.prompt)["input_ids"])
    target_ids = tokenizer(record.target)["input_ids"]
    assert input_ids[0] == tokenizer.bos_token_id
    assert input_ids[-1] == tokenizer.eos_token_id
    assert len(input_ids) == 1 + prompt_len + len(target_ids) + 1
    assert labels[: 1 + prompt_len] == [IGNORE_INDEX] * (1 + prompt_len)
    assert labels[1 + prompt_len :] == target_ids + [tokenizer.eos_token_id]


def test_encode_rejects_fully_truncated_target(tokenizer):
    record = record_from_row(SAMPLE_ROWS[0])
    prompt_len = len(tokenizer(record.prompt)["input_ids"])
    with pytest.raises(RecordError, match="no target tokens"):
        encode_record(record, tokenizer, max_length=prompt_len + 1)


def test_encode_keeps_partial_target(tokenizer):
    record = record_from_row(SAMPLE_ROWS[4])
    prompt_len = len(tokenizer(record.prompt)["input_ids"])
    input_ids, labels = encode_record(record, tokenizer, max_length=prompt_len + 4)
    assert len(input_ids) == prompt_len + 4
    assert sum(1 for lab in labels if lab != IGNORE_INDEX) == 3


def test_collate_pads_and_masks(tokenizer):
    records = [record_from_row(row) for row in SAMPLE_ROWS[:3]]
    batch = collate(records, tokenizer, max_length=512)
    lengths = [len(encode_record(r, tokenizer, 512)[0]) for r in records]
    width = max(lengths)
    assert batch["input_ids"].shape == (3, width)
    assert batch["attention_mask"].shape == (3, width)
    assert batch["labels"].shape == (3, width)
    for row, length in enumerate(lengths):
        assert batch["attention_mask"][row, :length].all()
        assert not batch["attention_mask"][row, length:].any()
        assert (batch["labels"][row, length:] == IGNORE_INDEX).all()
        assert (batch["input_ids"][row, length:] == tokenizer.pad_token_id).all()
    assert batch["weights"].tolist() == [0.5, 0.5, 0.5]
    assert batch["tasks"] == ["qa", "qa", "qa"]


def test_collate_rejects_empty_batch(tokenizer):
    with pytest.raises(ValueError, match="empty batch"):
        collate([], tokenizer, max_length=512)


def test_masked_positions_contribute_nothing(tokenizer, make_model):
    model = make_model(torch.float64).eval()
    records = [record_from_row(row) for row in (SAMPLE_ROWS[0], SAMPLE_ROWS[5])]
    batch = collate(records, tokenizer, max_length=512)
    with torch.no_grad():
        logits = model(
            input_ids=batch["input_ids"], attention_mask=batch["attention_mask"]
        ).logits
    total, per_record = weighted_loss_from_logits(
        logits, batch["labels"], batch["weights"]
    )

    noisy = logits.clone()
    torch.manual_seed(9)
    # scoring positions predict the NEXT token, so position p is unused
    # whenever labels[p + 1] is masked; the last position is always unused
    for row in range(noisy.shape[0]):
        unused = batch["labels"][row, 1:] == IGNORE_INDEX
        noisy[row, :-1][unused] += torch.randn_like(noisy[row, :-1][unused]) * 10
        noisy[row, -1] += torch.randn_like(noisy[row, -1]) * 10
    total_noisy, per_noisy = weighted_loss_from_logits(
        noisy, batch["labels"], batch["weights"]
    )
    assert torch.equal(total, total_noisy)
    assert per_record == per_noisy


def test_unit_weights_reduce_to_plain_loss_sum(tokenizer, make_model):
    model = make_model(torch.float64).eval()
    records = [
        record_from_row(dict(row, weight=1.0))
        for row in (SAMPLE_ROWS[1], SAMPLE_ROWS[6], SAMPLE_ROWS[9])
    ]
    batch = collate(records, tokenizer, max_length=512)
    with torch.no_grad():
        total, per_task = batch_loss(model, batch)
    manual = sum(manual_record_ce(model, tokenizer, r) for r in records)
    assert abs(float(total) - float(manual)) < 1e-9
    assert set(per_task) == {"qa", "rationale", "ecg"}


def test_train_writes_artifacts_and_log(tokenizer, make_model, sft_file, tmp_path):
    cfg = TrainConfig(
        sft_path=str(sft_file),
        base_model="tiny-local",
        adapter_rank=4,
        epochs=2,
        dropout=0.0,
        learning_rate=1e-3,
        batch_size=4,
        seed=5,
        output_dir=str(tmp_path / "out"),
    )
    result = train(cfg, model=make_model(), tokenizer=tokenizer)
    # 12 records / batch 4 = 3 steps per epoch
    assert result.steps == 6
    assert result.adapter_path.exists()
    assert result.config_path.exists()
    assert result.log_path.exists()

    state = torch.load(result.adapter_path, weights_only=True)
    assert all(k.endswith(("lora_a", "lora_b")) for k in state)
    assert len(state) == 16  # 8 wrapped modules x 2 matrices

    meta = json.loads(result.config_path.read_text(encoding="utf-8"))
    assert meta["adapter_rank"] == 4
    assert meta["weight_mode"] == "from_records"
    assert meta["steps"] == 6
    assert len(meta["wrapped_modules"]) == 8

    lines = [
        json.loads(line)
        for line in result.log_path.read_text(encoding="utf-8").splitlines()
    ]
    assert [entry["step"] for entry in lines] == list(range(1, 7))
    assert {entry["epoch"] for entry in lines} == {0, 1}
    for entry in lines:
        assert entry["loss"] > 0
        assert set(entry["tasks"]) <= {"qa", "rationale", "ecg"}
        assert all(v > 0 for v in entry["tasks"].values())


def test_train_respects_max_steps(tokenizer, make_model, sft_file, tmp_path):
    cfg = TrainConfig(
        sft_path=str(sft_file),
        base_model="tiny-local",
        adapter_rank=4,
        epochs=10,
        dropout=0.0,
        batch_size=4,
        max_steps=2,
        output_dir=str(tmp_path / "capped"),
    )
    result = train(cfg, model=make_model(), tokenizer=tokenizer)
    assert result.steps == 2
    lines = result.log_path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2


def test_train_rejects_missing_weight_file(tokenizer, make_model, tmp_path):
    bad = tmp_path / "bad.jsonl"
    row = {k: v for k, v in SAMPLE_ROWS[0].items() if k != "weight"}
    bad.write_text(json.dumps(row) + "\n", encoding="utf-8")
    cfg = TrainConfig(
        sft_path=str(bad),
        base_model="tiny-local",
        output_dir=str(tmp_path / "out"),
    )
    with pytest.raises(RecordError, match="missing weight"):
        train(cfg, model=make_model(), tokenizer=tokenizer)
