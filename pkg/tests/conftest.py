from importlib import resources

import numpy as np
import pytest

from macbig import layers as L
from macbig import model as M
from macbig.gradcheck import tiny_hyperparams


@pytest.fixture
def synthetic_path():
    return str(resources.files("macbig").joinpath("data", "synthetic.jsonl"))


@pytest.fixture
def tiny():
    """Small hyperparameters, a built model and a random batch of documents."""
    hp = tiny_hyperparams()
    rng = L.make_rng(3)
    params = M.build(hp, 20, rng)
    docs = rng.integers(0, 20, size=(4, hp.max_sentences, hp.max_tokens))
    return hp, params, docs


@pytest.fixture(scope="session")
def default_model():
    hp = M.HyperParams()
    return hp, M.build(hp, 50, L.make_rng(0))


def random_docs(rng, n, hp, vocab):
    docs = rng.integers(0, vocab, size=(n, hp.max_sentences, hp.max_tokens))
    # realistic padding: ragged sentence counts and lengths
    for d in docs:
        d[rng.integers(1, hp.max_sentences + 1):] = 0
        d[:, rng.integers(1, hp.max_tokens + 1):] = 0
    return docs


ACCEPTANCE_LINES = {}


def record_criterion(number: int, title: str, ok: bool, detail: str):
    ACCEPTANCE_LINES[number] = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
