from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from helpers import corpus_e2e, corpus_exact, corpus_mixed  # noqa: E402


@pytest.fixture()
def exact_corpus():
    return corpus_exact()


@pytest.fixture()
def mixed_corpus():
    return corpus_mixed()


@pytest.fixture()
def e2e_corpus():
    return corpus_e2e()
