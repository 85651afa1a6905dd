"""Low-rank adapter layers for parameter-efficient fine-tuning."""
from __future__ import annotations

import math

import torch
from torch import nn

# attention projection names in Llama-style decoder blocks
DEFAULT_TARGETS = ("q_proj", "k_proj", "v_proj", "o_proj")


class LoRALinear(nn.Module):
    """A frozen linear layer plus a trainable low-rank update.

    The update path computes dropout(x) @ A^T @ B^T scaled by alpha/rank.
    B starts at zero, so the wrapped module reproduces the base mapping
    exactly until training moves B away from zero.
    """

    def __init__(
        self,
        base: nn.Linear,
        rank: int,
        alpha: float | None = None,
        dropout: float = 0.0,
    ):
        super().__init__()
        if rank <= 0:
            raise ValueError("rank must be positive")
        self.base = base
        for param in self.base.parameters():
            param.requires_grad_(False)
        self.rank = rank
        self.scaling = (float(rank) if alpha is None else alpha) / rank
        self.lora_a = nn.Parameter(
            torch.empty(rank, base.in_features, dtype=base.weight.dtype)
        )
        self.lora_b = nn.Parameter(
            torch.zeros(base.out_features, rank, dtype=base.weight.dtype)
        )
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        update = self.dropout(x) @ self.lora_a.transpose(0, 1)
        update = update @ self.lora_b.transpose(0, 1)
        return self.base(x) + update * self.scaling


def apply_adapters(
    model: nn.Module,
    rank: int,
    dropout: float = 0.0,
    targets: tuple[str, ...] = DEFAULT_TARGETS,
) -> list[str]:
    """Wrap every matching linear submodule and freeze everything else.

    Returns the qualified names of the wrapped modules. After this call the
    only trainable parameters in the model are the adapters' A/B matrices.
    """
    wrapped: list[str] = []
    for parent_name, parent in list(model.named_modules()):
        for child_name, child in list(parent.named_children()):
            if child_name in targets and isinstance(child, nn.Linear):
                setattr(parent, child_name, LoRALinear(child, rank, dropout=dropout))
                full = f"{parent_name}.{child_name}" if parent_name else child_name
                wrapped.append(full)
    if not wrapped:
        raise ValueError(f"no linear layers named {targets} to adapt")
    for name, param in model.named_parameters():
        param.requires_grad_(name.endswith(("lora_a", "lora_b")))
    return wrapped


def adapter_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    """The A/B matrices only, detached to CPU."""
    return {
        name: tensor.detach().cpu()
        for name, tensor in model.state_dict().items()
        if name.endswith(("lora_a", "lora_b"))
    }


def load_adapter(model: nn.Module, state: dict[str, torch.Tensor]) -> None:
    """Load saved A/B matrices into an already-adapted model."""
    missing, unexpected = model.load_state_dict(state, strict=False)
    if unexpected:
        raise ValueError(f"unexpected adapter keys: {sorted(unexpected)[:5]}")
    leftover = [name for name in missing if name.endswith(("lora_a", "lora_b"))]
    if leftover:
        raise ValueError(f"adapter keys absent from state: {leftover[:5]}")
