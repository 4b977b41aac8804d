"""Experiment config loading and orchestrator assembly.

The config is a single JSON document; relative paths resolve against the
config file's directory. Shape:

    {
      "output_dir": "out",
      "corpus": "labeled.jsonl",
      "bundles": {"alsc_cr": "cr.json", "alsc_regular": "regular.json"},
      "aux_data": {
        "commongen": {"train": "cg.train.jsonl", "val": "cg.val.jsonl"},
        "dpr": {"train": "...", "val": "...", "eval": "..."}
      },
      "backend": {"kind": "mock"},
      "sweep": {"aux_tasks": ["commongen"], "seeds": [0, 1, 2], "small_scale": true},
      "stages": ["baseline", "sweep", "probe"]
    }
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from .aux_corpora import load_aux_corpus
from .backend.gateway import Gateway, make_client
from .bundles import index_by_id, read_manifest
from .errors import ConfigError
from .orchestrator import Orchestrator, SweepManifest, manifest_from_dict
from .records import AuxTask, Split, read_corpus
from .runstore import RunStore

logger = logging.getLogger(__name__)

DEFAULT_STAGES = ("baseline", "sweep", "probe")


def load_config(path: str | Path) -> tuple[dict, Path]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config, path.parent


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _require(config: dict, key: str):
    if key not in config:
        raise ConfigError(f"config is missing {key!r}")
    return config[key]


def build_orchestrator(
    config: dict,
    base_dir: Path,
    backend_override: dict | None = None,
) -> tuple[Orchestrator, Gateway]:
    manifest: SweepManifest = manifest_from_dict(config.get("sweep", {}))

    corpus_path = _resolve(base_dir, _require(config, "corpus"))
    labeled = index_by_id(read_corpus(corpus_path))

    bundles_cfg = _require(config, "bundles")
    bundle_cr = read_manifest(_resolve(base_dir, _require(bundles_cfg, "alsc_cr")))
    bundle_regular = None
    if bundles_cfg.get("alsc_regular"):
        bundle_regular = read_manifest(_resolve(base_dir, bundles_cfg["alsc_regular"]))

    missing = [iid for p in ("train", "val", "test") for iid in bundle_cr.partition(p) if iid not in labeled]
    if missing:
        raise ConfigError(
            f"bundle references {len(missing)} instance_ids absent from the corpus "
            f"(first: {missing[0]})"
        )
    if bundle_regular is not None:
        missing = [
            iid for p in ("train", "val", "test")
            for iid in bundle_regular.partition(p) if iid not in labeled
        ]
        if missing:
            raise ConfigError(
                f"regular bundle references {len(missing)} unknown instance_ids"
            )

    aux_cfg = config.get("aux_data", {})
    aux_train: dict[AuxTask, list] = {}
    aux_val: dict[AuxTask, list] = {}
    for task in manifest.aux_tasks:
        entry = aux_cfg.get(task.value)
        if not entry:
            raise ConfigError(f"sweep includes {task.value} but aux_data has no entry for it")
        try:
            aux_train[task] = load_aux_corpus(
                task, _resolve(base_dir, _require(entry, "train")), split=Split.TRAIN
            )
            aux_val[task] = load_aux_corpus(
                task, _resolve(base_dir, _require(entry, "val")), split=Split.VAL
            )
        except OSError as exc:
            raise ConfigError(f"aux_data for {task.value}: {exc}") from exc

    dpr_eval = []
    dpr_entry = aux_cfg.get(AuxTask.DPR.value)
    if dpr_entry:
        eval_path = dpr_entry.get("eval") or dpr_entry.get("val")
        if eval_path:
            dpr_eval = load_aux_corpus(
                AuxTask.DPR, _resolve(base_dir, eval_path), split=Split.TEST
            )

    output_dir = _resolve(base_dir, _require(config, "output_dir"))
    output_dir.mkdir(parents=True, exist_ok=True)

    backend_cfg = dict(config.get("backend", {"kind": "mock"}))
    if backend_override:
        backend_cfg.update(backend_override)
    if backend_cfg.get("skill_profile") and isinstance(backend_cfg["skill_profile"], str):
        backend_cfg["skill_profile"] = str(_resolve(base_dir, backend_cfg["skill_profile"]))
    if backend_cfg.get("state_dir"):
        backend_cfg["state_dir"] = str(_resolve(base_dir, backend_cfg["state_dir"]))
    gateway = Gateway(make_client(backend_cfg))

    store = RunStore(output_dir)
    orchestrator = Orchestrator(
        manifest=manifest,
        bundle_cr=bundle_cr,
        bundle_regular=bundle_regular,
        labeled=labeled,
        aux_train=aux_train,
        aux_val=aux_val,
        dpr_eval=dpr_eval,
        gateway=gateway,
        store=store,
        workdir=output_dir,
    )
    return orchestrator, gateway


def stages_from_config(config: dict) -> tuple[str, ...]:
    stages = tuple(config.get("stages", DEFAULT_STAGES))
    unknown = [s for s in stages if s not in DEFAULT_STAGES]
    if unknown:
        raise ConfigError(f"unknown stages {unknown}; valid: {list(DEFAULT_STAGES)}")
    return stages
