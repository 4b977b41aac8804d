"""Experiment driver: baseline, auxiliary sweeps, learning-rate selection,
and the coreference probe, all resumable through the run store.

Every training call is identified by a deterministic job_id built from its
coordinates, so retraining after a restart reproduces the same model on any
deterministic backend, and completed runs are skipped outright.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import prompts, runstore
from .backend.gateway import Gateway
from .backend.protocol import TrainJob
from .bundles import DatasetBundle, subset_fraction
from .errors import (
    AlscCrError,
    BackendTimeout,
    BackendUnavailable,
    EmptyEval,
    MissingValMetric,
    TrainFailed,
    UnknownModel,
)
from .records import AuxRecord, AuxTask, LabeledInstance
from .stats import dpr_score, macro_f1

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.1, 0.2, 0.5, 1.0)
DEFAULT_LR_GRID_AUX = (5e-4, 1e-4, 5e-5)
DEFAULT_LR_GRID_TARGET = (1e-3, 5e-4, 1e-4)
MIN_SEEDS = 10
LR_SELECT_SEEDS = 3


@dataclass(frozen=True)
class SweepManifest:
    aux_tasks: tuple[AuxTask, ...]
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    seeds: tuple[int, ...] = tuple(range(MIN_SEEDS))
    lr_grid_aux: tuple[float, ...] = DEFAULT_LR_GRID_AUX
    lr_grid_target: tuple[float, ...] = DEFAULT_LR_GRID_TARGET
    small_scale: bool = False
    fractions_by_task: dict = field(default_factory=dict, hash=False)
    hyperparams: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if len(self.seeds) < MIN_SEEDS and not self.small_scale:
            raise ValueError(
                f"need at least {MIN_SEEDS} seeds; set small_scale for scaled-down runs"
            )
        if not self.lr_grid_aux or not self.lr_grid_target:
            raise ValueError("learning-rate grids must be non-empty")

    def fractions_for(self, task: AuxTask) -> tuple[float, ...]:
        override = self.fractions_by_task.get(task.value)
        return tuple(override) if override else self.fractions

    def selection_seeds(self) -> tuple[int, ...]:
        return self.seeds[:LR_SELECT_SEEDS]


def manifest_from_dict(raw: dict) -> SweepManifest:
    return SweepManifest(
        aux_tasks=tuple(AuxTask(t) for t in raw.get("aux_tasks", [])),
        fractions=tuple(raw.get("fractions", DEFAULT_FRACTIONS)),
        seeds=tuple(raw.get("seeds", range(MIN_SEEDS))),
        lr_grid_aux=tuple(raw.get("lr_grid_aux", DEFAULT_LR_GRID_AUX)),
        lr_grid_target=tuple(raw.get("lr_grid_target", DEFAULT_LR_GRID_TARGET)),
        small_scale=bool(raw.get("small_scale", False)),
        fractions_by_task=dict(raw.get("fractions_by_task", {})),
        hyperparams=dict(raw.get("hyperparams", {})),
    )


_BACKEND_ERRORS = (TrainFailed, BackendTimeout, BackendUnavailable, UnknownModel)


class Orchestrator:
    def __init__(
        self,
        manifest: SweepManifest,
        bundle_cr: DatasetBundle,
        bundle_regular: DatasetBundle | None,
        labeled: dict[str, LabeledInstance],
        aux_train: dict[AuxTask, list[AuxRecord]],
        aux_val: dict[AuxTask, list[AuxRecord]],
        dpr_eval: list[AuxRecord],
        gateway: Gateway,
        store: runstore.RunStore,
        workdir: str | Path,
    ):
        self.manifest = manifest
        self.bundle_cr = bundle_cr
        self.bundle_regular = bundle_regular
        self.labeled = labeled
        self.aux_train = aux_train
        self.aux_val = aux_val
        self.dpr_eval = dpr_eval
        self.gateway = gateway
        self.store = store
        self.workdir = Path(workdir)
        self._prompt_files: dict[str, Path] = {}
        self._handles: dict[str, object] = {}  # job_id -> ModelHandle, this session

    # ---- prompt files ----

    def _prompt_path(self, key: str) -> Path:
        return self.workdir / "prompts" / f"{key}.jsonl"

    def _alsc_file(self, bundle: DatasetBundle, partition: str) -> Path:
        key = f"{bundle.name.lower()}.{partition}"
        if key not in self._prompt_files:
            examples = [
                prompts.render_alsc(self.labeled[iid].instance)
                for iid in bundle.partition(partition)
            ]
            path = self._prompt_path(key)
            prompts.write_prompts(examples, path)
            self._prompt_files[key] = path
        return self._prompt_files[key]

    def _alsc_golds(self, bundle: DatasetBundle, partition: str):
        return [self.labeled[iid].instance.polarity for iid in bundle.partition(partition)]

    def _aux_train_file(self, task: AuxTask, fraction: float, seed: int) -> Path:
        key = f"aux.{task.value}.f{fraction:g}.s{seed}"
        if key not in self._prompt_files:
            subset = subset_fraction(self.aux_train[task], fraction, seed)
            path = self._prompt_path(key)
            prompts.write_prompts((prompts.render_aux(r) for r in subset), path)
            self._prompt_files[key] = path
        return self._prompt_files[key]

    def _aux_val_file(self, task: AuxTask) -> Path:
        key = f"aux.{task.value}.val"
        if key not in self._prompt_files:
            path = self._prompt_path(key)
            prompts.write_prompts((prompts.render_aux(r) for r in self.aux_val[task]), path)
            self._prompt_files[key] = path
        return self._prompt_files[key]

    def _dpr_eval_file(self) -> Path:
        key = "dpr.eval"
        if key not in self._prompt_files:
            path = self._prompt_path(key)
            prompts.write_prompts((prompts.render_aux(r) for r in self.dpr_eval), path)
            self._prompt_files[key] = path
        return self._prompt_files[key]

    # ---- training ----

    def _train(self, job: TrainJob):
        handle = self._handles.get(job.job_id)
        if handle is None:
            handle = self.gateway.train(job)
            self._handles[job.job_id] = handle
        return handle

    def _aux_job(self, task: AuxTask, fraction: float, seed: int, lr: float) -> TrainJob:
        return TrainJob(
            job_id=f"aux:{task.value}:f{fraction:g}:lr{lr:g}:s{seed}",
            train_path=str(self._aux_train_file(task, fraction, seed)),
            val_path=str(self._aux_val_file(task)),
            hyperparams={"learning_rate": lr, **self.manifest.hyperparams},
            seed=seed,
        )

    def _target_job(self, tag: str, seed: int, lr: float, init_model: str | None) -> TrainJob:
        return TrainJob(
            job_id=f"target:{tag}:lr{lr:g}:s{seed}",
            train_path=str(self._alsc_file(self.bundle_cr, "train")),
            val_path=str(self._alsc_file(self.bundle_cr, "val")),
            hyperparams={"learning_rate": lr, **self.manifest.hyperparams},
            seed=seed,
            init_from=init_model,
        )

    def _sweep_tag(self, task: AuxTask, fraction: float, aux_lr: float) -> str:
        return f"{task.value}:f{fraction:g}:auxlr{aux_lr:g}"

    # ---- evaluation ----

    def _predict_parsed(self, model_id: str, prompt_file: Path) -> tuple[list[str], list]:
        examples = prompts.read_prompts(prompt_file)
        if not examples:
            raise EmptyEval(str(prompt_file))
        outputs = self.gateway.predict(model_id, [e.input_text for e in examples])
        return outputs, [prompts.parse_alsc_output(o) for o in outputs]

    def _val_f1(self, model_id: str) -> float:
        _, parsed = self._predict_parsed(model_id, self._alsc_file(self.bundle_cr, "val"))
        return macro_f1(parsed, self._alsc_golds(self.bundle_cr, "val"))

    def _eval_alsc(self, model_id: str, bundle: DatasetBundle) -> tuple[list[str], float]:
        outputs, parsed = self._predict_parsed(model_id, self._alsc_file(bundle, "test"))
        return outputs, macro_f1(parsed, self._alsc_golds(bundle, "test"))

    # ---- learning-rate selection ----

    def select_learning_rate(
        self,
        phase: str,
        task: AuxTask | None = None,
        fraction: float | None = None,
        aux_lr: float | None = None,
    ) -> float:
        """Mean validation metric over the selection seeds per candidate rate;
        maximum wins, ties break toward the smaller rate."""
        grid = self.manifest.lr_grid_aux if phase == "aux" else self.manifest.lr_grid_target
        task_name = task.value if task else None
        means: dict[float, float] = {}
        for lr in grid:
            scores = []
            for seed in self.manifest.selection_seeds():
                coords = runstore.lrsel_coords(phase, task_name, fraction, lr, seed)
                run_id = runstore.run_id_for(coords)
                record = self.store.get(run_id)
                if record is None:
                    started = time.monotonic()
                    if phase == "aux":
                        assert task is not None and fraction is not None
                        handle = self._train(self._aux_job(task, fraction, seed, lr))
                        metric, lr_aux, lr_target = handle.best_val_metric, lr, None
                    else:
                        init_model = None
                        lr_aux = None
                        tag = "baseline"
                        if task is not None:
                            assert fraction is not None and aux_lr is not None
                            aux_handle = self._train(self._aux_job(task, fraction, seed, aux_lr))
                            init_model = aux_handle.model_id
                            lr_aux = aux_lr
                            tag = self._sweep_tag(task, fraction, aux_lr)
                        handle = self._train(self._target_job(tag, seed, lr, init_model))
                        metric, lr_target = self._val_f1(handle.model_id), lr
                    record = runstore.RunRecord(
                        run_id=run_id,
                        kind="lrsel",
                        phase=phase,
                        aux_task=task_name,
                        fraction=fraction,
                        seed=seed,
                        lr_aux=lr_aux,
                        lr_target=lr_target,
                        lineage=handle.lineage,
                        metric=metric,
                    )
                    self.store.put(record, wall_time=time.monotonic() - started)
                scores.append(record.metric)
            means[lr] = sum(scores) / len(scores)
        best = max(means.values())
        chosen = min(lr for lr, mean in means.items() if mean == best)
        logger.info(
            "lr selection (%s%s): chose %g from %s",
            phase,
            f", {task_name}@{fraction:g}" if task_name else "",
            chosen,
            {f"{lr:g}": round(m, 3) for lr, m in means.items()},
        )
        return chosen

    # ---- stages ----

    def _failed_record(self, run_id: str, kind: str, exc: Exception, **coords) -> runstore.RunRecord:
        logger.warning("%s run %s failed: %s", kind, run_id, exc)
        return runstore.RunRecord(
            run_id=run_id, kind=kind, status="failed", error=str(exc), **coords
        )

    def run_baseline(self) -> list[runstore.RunRecord]:
        """Per seed: train on the CR bundle, evaluate on both test sets."""
        lr = self.select_learning_rate("target")
        evals = [("ALSC-CR", self.bundle_cr)]
        if self.bundle_regular is not None:
            evals.append(("ALSC-Regular", self.bundle_regular))
        out = []
        for seed in self.manifest.seeds:
            for eval_name, bundle in evals:
                run_id = runstore.run_id_for(runstore.baseline_coords(seed, eval_name))
                record = self.store.get(run_id)
                if record is None:
                    started = time.monotonic()
                    try:
                        handle = self._train(self._target_job("baseline", seed, lr, None))
                        val_metric = self._val_f1(handle.model_id)
                        predictions, metric = self._eval_alsc(handle.model_id, bundle)
                        record = runstore.RunRecord(
                            run_id=run_id,
                            kind="baseline",
                            seed=seed,
                            lr_target=lr,
                            lineage=handle.lineage,
                            eval_dataset=eval_name,
                            predictions=tuple(predictions),
                            metric=metric,
                            val_metric=val_metric,
                        )
                    except _BACKEND_ERRORS as exc:
                        record = self._failed_record(
                            run_id, "baseline", exc,
                            seed=seed, lr_target=lr, eval_dataset=eval_name,
                        )
                    self.store.put(record, wall_time=time.monotonic() - started)
                out.append(record)
        return out

    def run_aux_sweep(self) -> list[runstore.RunRecord]:
        """Per (task, fraction, seed): auxiliary training, then chained
        target training, evaluated on the CR test set."""
        out = []
        for task in self.manifest.aux_tasks:
            for fraction in self.manifest.fractions_for(task):
                aux_lr = self.select_learning_rate("aux", task, fraction)
                target_lr = self.select_learning_rate("target", task, fraction, aux_lr=aux_lr)
                tag = self._sweep_tag(task, fraction, aux_lr)
                for seed in self.manifest.seeds:
                    run_id = runstore.run_id_for(
                        runstore.sweep_coords(task.value, fraction, seed)
                    )
                    record = self.store.get(run_id)
                    if record is None:
                        started = time.monotonic()
                        try:
                            aux_handle = self._train(self._aux_job(task, fraction, seed, aux_lr))
                            handle = self._train(
                                self._target_job(tag, seed, target_lr, aux_handle.model_id)
                            )
                            val_metric = self._val_f1(handle.model_id)
                            predictions, metric = self._eval_alsc(handle.model_id, self.bundle_cr)
                            record = runstore.RunRecord(
                                run_id=run_id,
                                kind="sweep",
                                aux_task=task.value,
                                fraction=fraction,
                                seed=seed,
                                lr_aux=aux_lr,
                                lr_target=target_lr,
                                lineage=handle.lineage,
                                eval_dataset="ALSC-CR",
                                predictions=tuple(predictions),
                                metric=metric,
                                val_metric=val_metric,
                            )
                        except _BACKEND_ERRORS as exc:
                            record = self._failed_record(
                                run_id, "sweep", exc,
                                aux_task=task.value, fraction=fraction, seed=seed,
                                lr_aux=aux_lr, lr_target=target_lr, eval_dataset="ALSC-CR",
                            )
                        self.store.put(record, wall_time=time.monotonic() - started)
                    out.append(record)
        return out

    def _probe_cells(self) -> list[tuple[str | None, float | None]]:
        cells: list[tuple[str | None, float | None]] = [(None, None)]
        for task in self.manifest.aux_tasks:
            for fraction in self.manifest.fractions_for(task):
                cells.append((task.value, fraction))
        return cells

    def _cell_eval_records(self, aux_task: str | None, fraction: float | None):
        records = []
        for record in self.store.records():
            if aux_task is None:
                if record.kind == "baseline" and record.eval_dataset == "ALSC-CR":
                    records.append(record)
            elif (
                record.kind == "sweep"
                and record.aux_task == aux_task
                and record.fraction == fraction
            ):
                records.append(record)
        return records

    def _rebuild_model(self, record: runstore.RunRecord) -> str:
        """Retrain the record's chain; deterministic backends reproduce it."""
        init_model = None
        if record.aux_task is not None:
            task = AuxTask(record.aux_task)
            aux_handle = self._train(
                self._aux_job(task, record.fraction, record.seed, record.lr_aux)
            )
            init_model = aux_handle.model_id
            tag = self._sweep_tag(task, record.fraction, record.lr_aux)
        else:
            tag = "baseline"
        handle = self._train(
            self._target_job(tag, record.seed, record.lr_target, init_model)
        )
        return handle.model_id

    def run_dpr_probe(self) -> list[runstore.RunRecord]:
        """Per cell: evaluate the best-validation seed model on the pronoun
        resolution eval set."""
        if not self.dpr_eval:
            logger.warning("no pronoun-resolution eval records; probe skipped")
            return []
        eval_file = self._dpr_eval_file()
        eval_examples = prompts.read_prompts(eval_file)
        golds = [e.target_text for e in eval_examples]
        out = []
        for aux_task, fraction in self._probe_cells():
            run_id = runstore.run_id_for(runstore.probe_coords(aux_task, fraction))
            record = self.store.get(run_id)
            if record is not None:
                out.append(record)
                continue
            candidates = [
                r for r in self._cell_eval_records(aux_task, fraction) if r.status == "ok"
            ]
            if not candidates:
                logger.warning(
                    "probe cell (%s, %s) has no successful runs; skipped", aux_task, fraction
                )
                continue
            missing = [r.run_id for r in candidates if r.val_metric is None]
            if missing:
                raise MissingValMetric(
                    f"cell ({aux_task}, {fraction}): runs without val metric: {missing}"
                )
            best_metric = max(r.val_metric for r in candidates)
            chosen = min(
                (r for r in candidates if r.val_metric == best_metric),
                key=lambda r: r.seed,
            )
            started = time.monotonic()
            try:
                model_id = self._rebuild_model(chosen)
                outputs = self.gateway.predict(
                    model_id, [e.input_text for e in eval_examples]
                )
                metric = dpr_score(outputs, golds)
                record = runstore.RunRecord(
                    run_id=run_id,
                    kind="probe",
                    aux_task=aux_task,
                    fraction=fraction,
                    seed=chosen.seed,
                    lr_aux=chosen.lr_aux,
                    lr_target=chosen.lr_target,
                    lineage=chosen.lineage,
                    eval_dataset="DPR",
                    predictions=tuple(outputs),
                    metric=metric,
                )
            except _BACKEND_ERRORS as exc:
                record = self._failed_record(
                    run_id, "probe", exc,
                    aux_task=aux_task, fraction=fraction, seed=chosen.seed,
                    eval_dataset="DPR",
                )
            self.store.put(record, wall_time=time.monotonic() - started)
            out.append(record)
        return out

    def run_all(self, stages: Sequence[str] = ("baseline", "sweep", "probe")) -> list[runstore.RunRecord]:
        out = []
        if "baseline" in stages:
            out.extend(self.run_baseline())
        if "sweep" in stages:
            out.extend(self.run_aux_sweep())
        if "probe" in stages:
            out.extend(self.run_dpr_probe())
        return out
