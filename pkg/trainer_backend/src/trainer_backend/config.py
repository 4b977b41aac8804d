"""Backend configuration: one JSON file plus environment overrides.

The file holds the model choice, sequence length caps, early-stopping
defaults, and the checkpoint root. TRAINER_BACKEND_DEVICE overrides the
device without editing the file, so one config can serve CPU smoke runs
and GPU boxes alike.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

# reserved model name: small randomly initialised byte-level model, no downloads
TINY_MODEL = "tiny-random"

DEVICE_ENV = "TRAINER_BACKEND_DEVICE"

DEFAULT_PATIENCE = 3

MONITORS = ("auto", "loss", "accuracy", "macro_f1")


@dataclass(frozen=True)
class BackendConfig:
    model_name: str = TINY_MODEL
    device: str = "cpu"
    max_input_length: int = 512
    max_target_length: int = 32
    checkpoint_dir: Path = Path("checkpoints")
    patience: int = DEFAULT_PATIENCE
    monitor: str = "auto"

    def __post_init__(self):
        if self.monitor not in MONITORS:
            raise ValueError(f"monitor must be one of {MONITORS}, not {self.monitor!r}")
        if self.max_input_length < 1 or self.max_target_length < 1:
            raise ValueError("sequence length caps must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> BackendConfig:
    """Read a config file (all keys optional) and apply environment overrides.

    A relative checkpoint_dir resolves against the config file's directory,
    so configs can ship next to their checkpoints. The directory is created
    eagerly; a config pointing somewhere unwritable fails here, not mid-job.
    """
    env = os.environ if env is None else env
    raw: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: config must be a JSON object")

    checkpoint_dir = Path(raw.get("checkpoint_dir", "checkpoints"))
    if path is not None and not checkpoint_dir.is_absolute():
        checkpoint_dir = Path(path).resolve().parent / checkpoint_dir

    config = BackendConfig(
        model_name=str(raw.get("model_name", TINY_MODEL)),
        device=env.get(DEVICE_ENV) or str(raw.get("device", "cpu")),
        max_input_length=int(raw.get("max_input_length", 512)),
        max_target_length=int(raw.get("max_target_length", 32)),
        checkpoint_dir=checkpoint_dir,
        patience=int(raw.get("patience", DEFAULT_PATIENCE)),
        monitor=str(raw.get("monitor", "auto")),
    )
    config.checkpoint_dir.mkdir(parents=True, exist_ok=True)
    probe = config.checkpoint_dir / ".write-probe"
    probe.touch()
    probe.unlink()
    return config
