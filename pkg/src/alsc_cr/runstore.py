"""Append-only store of experiment runs, keyed by coordinate digests.

Layout: one JSON file per run under runs/, an index.json summarizing all
records, and a timings.json sidecar. Record files and the index are pure
functions of the run coordinates and outcomes, so a deterministic backend
yields byte-identical stores across reruns; wall-clock durations live only
in the sidecar, which is excluded from that guarantee. Existing record
files are never rewritten, which is what makes restarts cheap and safe.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import MalformedRecord

logger = logging.getLogger(__name__)

RUN_SCHEMA = "run-record/1"
INDEX_SCHEMA = "run-index/1"

KINDS = ("baseline", "sweep", "probe", "lrsel")
EVAL_DATASETS = ("ALSC-CR", "ALSC-Regular", "DPR")

_INDEX_FIELDS = (
    "run_id", "kind", "phase", "aux_task", "fraction", "seed",
    "eval_dataset", "status", "metric", "val_metric", "error",
)


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    kind: str
    aux_task: str | None = None
    fraction: float | None = None
    seed: int | None = None
    lr_aux: float | None = None
    lr_target: float | None = None
    phase: str | None = None  # lrsel records only: "aux" or "target"
    lineage: tuple[str, ...] = ()
    eval_dataset: str | None = None
    predictions: tuple[str, ...] = ()
    metric: float | None = None
    val_metric: float | None = None
    status: str = "ok"
    error: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown run kind {self.kind!r}")
        if self.eval_dataset is not None and self.eval_dataset not in EVAL_DATASETS:
            raise ValueError(f"unknown eval_dataset {self.eval_dataset!r}")
        if self.status not in ("ok", "failed"):
            raise ValueError(f"unknown status {self.status!r}")
        if self.metric is not None and not 0.0 <= self.metric <= 100.0:
            raise ValueError(f"metric {self.metric} outside [0, 100]")


def record_to_dict(record: RunRecord) -> dict:
    out = {"schema_version": RUN_SCHEMA}
    for f in fields(RunRecord):
        value = getattr(record, f.name)
        if isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def record_from_dict(raw: dict) -> RunRecord:
    if raw.get("schema_version") != RUN_SCHEMA:
        raise MalformedRecord(f"unsupported run record schema {raw.get('schema_version')!r}")
    kwargs = {}
    for f in fields(RunRecord):
        if f.name not in raw:
            raise MalformedRecord(f"run record missing field {f.name!r}")
        value = raw[f.name]
        if isinstance(value, list):
            value = tuple(value)
        kwargs[f.name] = value
    return RunRecord(**kwargs)


def run_id_for(coords: dict) -> str:
    canonical = json.dumps(coords, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def lrsel_coords(
    phase: str, aux_task: str | None, fraction: float | None, lr: float, seed: int
) -> dict:
    return {
        "kind": "lrsel",
        "phase": phase,
        "aux_task": aux_task,
        "fraction": fraction,
        "lr": lr,
        "seed": seed,
    }


def baseline_coords(seed: int, eval_dataset: str) -> dict:
    return {"kind": "baseline", "seed": seed, "eval_dataset": eval_dataset}


def sweep_coords(aux_task: str, fraction: float, seed: int) -> dict:
    return {
        "kind": "sweep",
        "aux_task": aux_task,
        "fraction": fraction,
        "seed": seed,
        "eval_dataset": "ALSC-CR",
    }


def probe_coords(aux_task: str | None, fraction: float | None) -> dict:
    return {
        "kind": "probe",
        "aux_task": aux_task,
        "fraction": fraction,
        "eval_dataset": "DPR",
    }


class RunStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.runs_dir = self.root / "runs"
        self.runs_dir.mkdir(parents=True, exist_ok=True)
        self._records: dict[str, RunRecord] = {}
        for path in sorted(self.runs_dir.glob("*.json")):
            record = self._read(path)
            self._records[record.run_id] = record

    def _read(self, path: Path) -> RunRecord:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}: {exc}") from exc
        record = record_from_dict(raw)
        if path.stem != record.run_id:
            raise MalformedRecord(f"{path}: file name does not match run_id {record.run_id}")
        return record

    def has(self, run_id: str) -> bool:
        return run_id in self._records

    def get(self, run_id: str) -> RunRecord | None:
        return self._records.get(run_id)

    def records(self) -> list[RunRecord]:
        return [self._records[rid] for rid in sorted(self._records)]

    def put(self, record: RunRecord, wall_time: float | None = None) -> bool:
        """Persist a new record; returns False (untouched) if the run exists."""
        if record.run_id in self._records:
            return False
        path = self.runs_dir / f"{record.run_id}.json"
        tmp = path.with_suffix(".json.tmp")
        payload = json.dumps(
            record_to_dict(record), sort_keys=True, ensure_ascii=False, indent=2
        )
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(payload)
            fh.write("\n")
        tmp.replace(path)
        self._records[record.run_id] = record
        self._write_index()
        if wall_time is not None:
            self._record_timing(record.run_id, wall_time)
        return True

    def _write_index(self):
        entries = []
        for rid in sorted(self._records):
            record = self._records[rid]
            entries.append({name: getattr(record, name) for name in _INDEX_FIELDS})
        payload = {"schema_version": INDEX_SCHEMA, "runs": entries}
        tmp = self.root / "index.json.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, ensure_ascii=False, indent=2)
            fh.write("\n")
        tmp.replace(self.root / "index.json")

    def _record_timing(self, run_id: str, seconds: float):
        path = self.root / "timings.json"
        timings = {}
        if path.exists():
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    timings = json.load(fh)
            except (json.JSONDecodeError, OSError):
                logger.warning("timings sidecar unreadable; starting fresh")
        timings[run_id] = seconds
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(timings, fh, sort_keys=True, indent=2)
            fh.write("\n")


def read_records_jsonl(path: str | Path) -> list[RunRecord]:
    """Externally produced records, one JSON object per line."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(str(exc), line=lineno) from exc
            records.append(record_from_dict(raw))
    return records


def import_records(store: RunStore, records: list[RunRecord]) -> int:
    added = 0
    for record in records:
        if store.put(record):
            added += 1
    return added
