"""Shared fixtures: a tiny offline config and deterministic toy corpora."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from trainer_backend.config import BackendConfig

NEGATIVE_WORDS = ["awful", "terrible", "bland", "soggy", "stale"]
POSITIVE_WORDS = ["superb", "lovely", "great", "fresh"]
NEUTRAL_WORDS = ["ordinary", "average", "plain"]


def toy_rows(counts: tuple[int, int, int] = (30, 12, 8)) -> list[dict]:
    """Sentiment pairs with a strong lexical signal and a skewed label mix."""
    specs = (
        (NEGATIVE_WORDS, "negative", counts[0]),
        (POSITIVE_WORDS, "positive", counts[1]),
        (NEUTRAL_WORDS, "neutral", counts[2]),
    )
    rows = []
    for words, label, count in specs:
        for k in range(count):
            i = len(rows)
            rows.append(
                {
                    "input": f"get sentiment: the dish {i} was {words[k % len(words)]}. aspect: dish",
                    "target": label,
                }
            )
    # interleave the classes so any prefix and any split sees all of them
    random.Random(13).shuffle(rows)
    return rows


def write_rows(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return path


@pytest.fixture
def tiny_config(tmp_path: Path) -> BackendConfig:
    return BackendConfig(
        max_input_length=64,
        max_target_length=16,
        checkpoint_dir=tmp_path / "checkpoints",
    )


@pytest.fixture
def toy_files(tmp_path: Path) -> tuple[Path, Path]:
    rows = toy_rows()
    assert {row["target"] for row in rows[40:]} == {"positive", "negative", "neutral"}
    train = write_rows(tmp_path / "toy.train.jsonl", rows[:40])
    val = write_rows(tmp_path / "toy.val.jsonl", rows[40:])
    return train, val
