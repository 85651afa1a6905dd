import sys
from pathlib import Path

import pytest
import torch
from transformers import LlamaConfig, LlamaForCausalLM

sys.path.insert(0, str(Path(__file__).resolve().parent))
# shared acceptance line registry lives next to the primary tests
sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "tests"))

from ft_helpers import SAMPLE_ROWS, ByteTokenizer, write_sft


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import acceptance_log

    acceptance_log.print_summary(terminalreporter)


@pytest.fixture(scope="session")
def tokenizer():
    return ByteTokenizer()


@pytest.fixture
def make_model():
    """Factory for fresh tiny decoder models with identical random init.

    Training mutates the model in place, so tests that train must not share
    an instance; identical init keeps cross-test comparisons meaningful.
    """

    def build(dtype=torch.float32):
        torch.manual_seed(1234)
        config = LlamaConfig(
            vocab_size=ByteTokenizer.vocab_size,
            hidden_size=64,
            intermediate_size=128,
            num_hidden_layers=2,
            num_attention_heads=4,
            num_key_value_heads=4,
            max_position_embeddings=512,
            pad_token_id=0,
            bos_token_id=1,
            eos_token_id=2,
        )
        model = LlamaForCausalLM(config)
        return model.to(dtype)

    return build


@pytest.fixture
def sft_file(tmp_path):
    return write_sft(tmp_path / "sft.jsonl", SAMPLE_ROWS)
