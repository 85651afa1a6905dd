"""Weighted multi-task fine-tuning driver for SFT JSONL records."""

from .lora import LoRALinear, adapter_state_dict, apply_adapters, load_adapter
from .records import RecordError, SFTRecord, load_records
from .trainer import TrainConfig, TrainResult, batch_loss, collate, train

__all__ = [
    "LoRALinear",
    "RecordError",
    "SFTRecord",
    "TrainConfig",
    "TrainResult",
    "adapter_state_dict",
    "apply_adapters",
    "batch_loss",
    "collate",
    "load_adapter",
    "load_records",
    "train",
]
