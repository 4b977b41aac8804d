"""Deterministic in-process trainer stand-in for desk-scale pipeline tests.

Training memorizes (input, target) pairs and the majority target; prediction
returns the memorized target for seen inputs, then consults the optional
skill profile, then falls back to the majority label, then to "neutral".
Everything is a pure function of (jobs, inputs), so whole-pipeline runs are
reproducible byte for byte.

The skill profile is an ordered list of rules:
    {"pattern": regex, "output": replacement, "when": {...}}
where "when" may constrain learning_rate, has_init, or chain_contains
(substring of any job_id in the model's training chain). "output" may use
regex group references, which makes scripted antecedent extraction possible.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from collections import Counter
from pathlib import Path
from typing import IO

from ..errors import MalformedRecord
from . import protocol

logger = logging.getLogger(__name__)

FALLBACK_OUTPUT = "neutral"


def _read_pairs(path: str) -> list[tuple[str, str]]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                pairs.append((record["input"], record["target"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedRecord(f"{path}: bad record ({exc})", line=lineno) from exc
    return pairs


class MockBackend:
    def __init__(self, skill_profile: list[dict] | None = None, state_dir: str | Path | None = None):
        self.skill_profile = skill_profile or []
        self.state_dir = Path(state_dir) if state_dir else None
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)
        self._models: dict[str, dict] = {}
        self.stopped = False

    # ---- model store ----

    def _save(self, model_id: str, state: dict):
        self._models[model_id] = state
        if self.state_dir:
            with open(self.state_dir / f"{model_id}.json", "w", encoding="utf-8") as fh:
                json.dump(state, fh, sort_keys=True, ensure_ascii=False)

    def _load(self, model_id: str) -> dict | None:
        state = self._models.get(model_id)
        if state is None and self.state_dir:
            path = self.state_dir / f"{model_id}.json"
            if path.exists():
                with open(path, "r", encoding="utf-8") as fh:
                    state = json.load(fh)
                self._models[model_id] = state
        return state

    # ---- semantics ----

    def _train(self, job: protocol.TrainJob) -> tuple[str, float]:
        memory: dict[str, str] = {}
        chain: list[str] = []
        if job.init_from is not None:
            parent = self._load(job.init_from)
            if parent is None:
                raise KeyError(f"unknown init_from model {job.init_from!r}")
            memory.update(parent["memory"])
            chain = list(parent["chain"])

        pairs = _read_pairs(job.train_path)
        memory.update(pairs)
        counts = Counter(target for _, target in pairs)
        # ties break toward the lexicographically smallest target
        majority = min(
            (t for t, c in counts.items() if c == max(counts.values())), default=None
        )
        state = {
            "memory": memory,
            "majority": majority,
            "learning_rate": job.hyperparams["learning_rate"],
            "has_init": job.init_from is not None,
            "chain": chain + [job.job_id],
        }
        model_id = protocol.job_digest(job)
        self._save(model_id, state)

        val_pairs = _read_pairs(job.val_path)
        correct = sum(
            1 for inp, target in val_pairs if self._predict_one(state, inp) == target
        )
        best_val_metric = 100.0 * correct / len(val_pairs) if val_pairs else 0.0
        return model_id, best_val_metric

    def _rule_applies(self, rule: dict, state: dict) -> bool:
        when = rule.get("when", {})
        if "lr" in when and float(when["lr"]) != float(state["learning_rate"]):
            return False
        if "has_init" in when and bool(when["has_init"]) != bool(state["has_init"]):
            return False
        if "chain_contains" in when:
            needle = when["chain_contains"]
            if not any(needle in job_id for job_id in state["chain"]):
                return False
        return True

    def _predict_one(self, state: dict, text: str) -> str:
        memorized = state["memory"].get(text)
        if memorized is not None:
            return memorized
        for rule in self.skill_profile:
            if not self._rule_applies(rule, state):
                continue
            match = re.search(rule["pattern"], text)
            if match:
                return match.expand(rule["output"])
        if state["majority"] is not None:
            return state["majority"]
        return FALLBACK_OUTPUT

    # ---- protocol ----

    def handle(self, request: dict) -> dict:
        op = request.get("op")
        if op == "ping":
            return protocol.ok_response()
        if op == "shutdown":
            self.stopped = True
            return protocol.ok_response()
        if op == "train":
            try:
                job = protocol.train_job_from_request(request)
                model_id, best_val_metric = self._train(job)
            except (KeyError, OSError, MalformedRecord, ValueError) as exc:
                return protocol.error_response("TrainFailed", str(exc))
            return protocol.ok_response(model_id=model_id, best_val_metric=best_val_metric)
        if op == "predict":
            model_id = request.get("model_id")
            state = self._load(model_id) if model_id else None
            if state is None:
                return protocol.error_response("UnknownModel", f"no model {model_id!r}")
            inputs = request.get("inputs")
            if not isinstance(inputs, list):
                return protocol.error_response("MalformedRecord", "inputs must be a list")
            return protocol.ok_response(
                outputs=[self._predict_one(state, text) for text in inputs]
            )
        return protocol.error_response("UnknownOp", f"unsupported op {op!r}")


def serve_stdio(backend: MockBackend, stdin: IO[str] | None = None, stdout: IO[str] | None = None):
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        try:
            request = protocol.decode(line)
            response = backend.handle(request)
        except MalformedRecord as exc:
            response = protocol.error_response(exc.code, exc.message)
        stdout.write(protocol.encode(response) + "\n")
        stdout.flush()
        if backend.stopped:
            break


def serve_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="deterministic mock trainer backend (stdio)")
    parser.add_argument("--skill-profile", help="JSON file with an ordered rule list")
    parser.add_argument("--state-dir", help="directory for persisted model state")
    args = parser.parse_args(argv)
    profile = None
    if args.skill_profile:
        with open(args.skill_profile, "r", encoding="utf-8") as fh:
            profile = json.load(fh)
    serve_stdio(MockBackend(skill_profile=profile, state_dir=args.state_dir))
    return 0


if __name__ == "__main__":
    sys.exit(serve_main())
