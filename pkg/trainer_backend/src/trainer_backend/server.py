"""Line-JSON trainer service over stdio.

Requests arrive one JSON object per line on stdin and each gets exactly one
response line on stdout; logs go to stderr so the protocol stream stays
clean. The loop is strictly sequential, which is the whole concurrency
story: one train job at a time, predictions whenever no train is in flight.
The process exits after a shutdown request or when stdin closes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from typing import IO

import torch

from .config import BackendConfig, load_config
from .modeling import build_model, build_tokenizer, weight_digest
from .training import (
    fine_tune,
    greedy_decode,
    load_checkpoint,
    read_pairs,
    save_checkpoint,
)

logger = logging.getLogger(__name__)

TRAIN_FIELDS = ("job_id", "train_path", "val_path", "hyperparams", "seed")


def error_response(code: str, message: str) -> dict:
    return {"ok": False, "code": code, "message": message}


def model_id_for(request: dict) -> str:
    """Deterministic model identity from the job coordinates."""
    payload = {
        "job_id": request["job_id"],
        "train_path": request["train_path"],
        "val_path": request["val_path"],
        "hyperparams": dict(request["hyperparams"]),
        "seed": int(request["seed"]),
        "init_from": request.get("init_from"),
    }
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


class TrainerBackend:
    def __init__(self, config: BackendConfig):
        self.config = config
        self.tokenizer = build_tokenizer(config)
        self.stopped = False
        self._cache: tuple[str, torch.nn.Module] | None = None  # last model touched

    # ---- ops ----

    def train(self, request: dict) -> dict:
        for field in TRAIN_FIELDS:
            if field not in request:
                return error_response("TrainFailed", f"train request missing {field!r}")
        hyperparams = request["hyperparams"]
        if not isinstance(hyperparams, dict) or "learning_rate" not in hyperparams:
            return error_response("TrainFailed", "hyperparams must include learning_rate")

        model = build_model(self.config, self.tokenizer)
        init_from = request.get("init_from")
        parent_digest = None
        if init_from is not None:
            parent = load_checkpoint(self.config, init_from)
            if parent is None:
                return error_response("TrainFailed", f"unknown init_from model {init_from!r}")
            state, meta = parent
            model.load_state_dict(state)
            parent_digest = meta.get("weight_digest")

        try:
            train_pairs = read_pairs(request["train_path"])
            val_pairs = read_pairs(request["val_path"])
            outcome = fine_tune(
                model,
                self.tokenizer,
                self.config,
                train_pairs,
                val_pairs,
                hyperparams,
                int(request["seed"]),
            )
        except (OSError, ValueError, KeyError, TypeError) as exc:
            return error_response("TrainFailed", str(exc))

        model_id = model_id_for(request)
        save_checkpoint(
            self.config,
            model_id,
            outcome.best_state,
            {
                "job_id": request["job_id"],
                "parent": init_from,
                "parent_digest": parent_digest,
                "monitor": outcome.monitor,
                "best_val_metric": outcome.best_metric,
                "epochs_run": outcome.epochs_run,
                "seed": int(request["seed"]),
                "weight_digest": weight_digest(outcome.best_state),
            },
        )
        logger.info(
            "job %s -> model %s (%s %.4f after %d epochs)",
            request["job_id"],
            model_id,
            outcome.monitor,
            outcome.best_metric,
            outcome.epochs_run,
        )
        model.load_state_dict(outcome.best_state)
        self._cache = (model_id, model)
        return {"ok": True, "model_id": model_id, "best_val_metric": outcome.best_metric}

    def predict(self, request: dict) -> dict:
        model_id = request.get("model_id")
        model = self._model_for(model_id) if model_id else None
        if model is None:
            return error_response("UnknownModel", f"no model {model_id!r}")
        inputs = request.get("inputs")
        if not isinstance(inputs, list) or not all(isinstance(x, str) for x in inputs):
            return error_response("MalformedRecord", "inputs must be a list of strings")
        outputs = greedy_decode(model, self.tokenizer, inputs, self.config)
        return {"ok": True, "outputs": outputs}

    def _model_for(self, model_id: str):
        if self._cache and self._cache[0] == model_id:
            return self._cache[1]
        loaded = load_checkpoint(self.config, model_id)
        if loaded is None:
            return None
        model = build_model(self.config, self.tokenizer)
        model.load_state_dict(loaded[0])
        self._cache = (model_id, model)
        return model

    # ---- protocol ----

    def handle(self, request: dict) -> dict:
        op = request.get("op")
        if op == "ping":
            return {"ok": True}
        if op == "shutdown":
            self.stopped = True
            return {"ok": True}
        if op == "train":
            return self.train(request)
        if op == "predict":
            return self.predict(request)
        return error_response("UnknownOp", f"unsupported op {op!r}")


def serve(config: BackendConfig, stdin: IO[str] | None = None, stdout: IO[str] | None = None):
    backend = TrainerBackend(config)
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("protocol message must be an object")
            response = backend.handle(request)
        except ValueError as exc:
            response = error_response("MalformedRecord", f"undecodable protocol message: {exc}")
        stdout.write(json.dumps(response, sort_keys=True, ensure_ascii=False) + "\n")
        stdout.flush()
        if backend.stopped:
            break


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="reference trainer backend (stdio)")
    parser.add_argument("--config", help="backend config JSON")
    parser.add_argument("-v", "--verbose", action="store_true", help="INFO-level logging on stderr")
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    serve(load_config(args.config))
    return 0


if __name__ == "__main__":
    sys.exit(main())
