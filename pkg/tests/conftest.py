"""Shared fixtures: the hand-written volcano document plus generated corpora."""
from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from causalmcq.corpus import Document
from causalmcq.mcq import BuilderConfig, build_train_sample
from causalmcq.synthetic import fixture_corpus

from helpers import make_volcano_doc


@pytest.fixture()
def volcano_doc() -> Document:
    return make_volcano_doc()


@pytest.fixture()
def golden_sample(volcano_doc):
    """Train sample for observed ev3: options destroyed/arrived/flooding/None,
    gold {A, C}, context spanning sentences 1-2."""
    return build_train_sample(volcano_doc, "ev3", BuilderConfig(seed=0))


@pytest.fixture(scope="session")
def small_corpus():
    return fixture_corpus(seed=11, num_docs=6)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import acceptance_log

    acceptance_log.print_summary(terminalreporter)
