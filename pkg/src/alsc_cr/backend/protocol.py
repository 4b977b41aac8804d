"""Wire protocol shared by all trainer backends.

Messages are single-line JSON objects. Requests carry an "op" field
(train, predict, ping, shutdown); responses carry "ok" plus either the
op's payload or {"code", "message"} on failure. Field names are part of
the contract and must not drift.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from ..errors import MalformedRecord

OPS = ("train", "predict", "ping", "shutdown")

DEFAULT_BATCH_SIZE = 16
DEFAULT_MAX_EPOCHS = 30
DEFAULT_PATIENCE = 3

# wall-clock caps per request
DEFAULT_TIMEOUT_REAL = 72 * 3600.0
DEFAULT_TIMEOUT_MOCK = 60.0


@dataclass(frozen=True)
class TrainJob:
    job_id: str
    train_path: str
    val_path: str
    hyperparams: dict = field(hash=False)
    seed: int = 0
    init_from: str | None = None

    def __post_init__(self):
        merged = {
            "batch_size": DEFAULT_BATCH_SIZE,
            "max_epochs": DEFAULT_MAX_EPOCHS,
            "early_stop_patience": DEFAULT_PATIENCE,
        }
        merged.update(self.hyperparams)
        if "learning_rate" not in merged:
            raise ValueError("hyperparams must include learning_rate")
        object.__setattr__(self, "hyperparams", merged)


@dataclass(frozen=True)
class ModelHandle:
    model_id: str
    lineage: tuple[str, ...]
    best_val_metric: float

    def __post_init__(self):
        if not self.lineage:
            raise ValueError("lineage must be non-empty")


def train_request(job: TrainJob) -> dict:
    return {
        "op": "train",
        "job_id": job.job_id,
        "train_path": job.train_path,
        "val_path": job.val_path,
        "hyperparams": dict(job.hyperparams),
        "seed": job.seed,
        "init_from": job.init_from,
    }


def train_job_from_request(message: dict) -> TrainJob:
    try:
        return TrainJob(
            job_id=message["job_id"],
            train_path=message["train_path"],
            val_path=message["val_path"],
            hyperparams=dict(message["hyperparams"]),
            seed=int(message["seed"]),
            init_from=message.get("init_from"),
        )
    except KeyError as exc:
        raise MalformedRecord(f"train request missing field {exc}") from exc


def predict_request(model_id: str, inputs: list[str]) -> dict:
    return {"op": "predict", "model_id": model_id, "inputs": list(inputs)}


def ping_request() -> dict:
    return {"op": "ping"}


def shutdown_request() -> dict:
    return {"op": "shutdown"}


def ok_response(**payload) -> dict:
    out = {"ok": True}
    out.update(payload)
    return out


def error_response(code: str, message: str) -> dict:
    return {"ok": False, "code": code, "message": message}


def encode(message: dict) -> str:
    return json.dumps(message, sort_keys=True, ensure_ascii=False)


def decode(line: str) -> dict:
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"undecodable protocol message: {exc}") from exc
    if not isinstance(message, dict):
        raise MalformedRecord("protocol message must be an object")
    return message


def job_digest(job: TrainJob) -> str:
    """Deterministic model identity for backends that key models by job."""
    payload = train_request(job)
    del payload["op"]
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
