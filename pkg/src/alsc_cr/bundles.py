"""Assembly of the two benchmark bundles and fraction subsetting for sweeps.

The coreference-focused bundle concentrates every confirmed CR case in its
test partition; the regular bundle mirrors its partition sizes and per-source
ratios so the two are comparable head to head.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .errors import EmptyPartition, InsufficientInstances, MalformedRecord, UnreviewedCasesRemain
from .records import (
    AuxRecord,
    CaseKind,
    CrState,
    LabeledInstance,
    SourceDataset,
    Split,
)

logger = logging.getLogger(__name__)

BUNDLE_SCHEMA = "bundle-manifest/1"
PARTITIONS = ("train", "val", "test")
FRACTION_GRID = (0.1, 0.2, 0.5, 1.0)

# percentage shares of the two validation sampling pools
VAL_PRONOUN_SHARE = Fraction(15, 100)
VAL_HELDOUT_SHARE = Fraction(50, 100)

# composition_report key: (source_dataset, case_kind, is_cr, polarity)
CompositionKey = tuple[str, str, str, str]


@dataclass(frozen=True)
class DatasetBundle:
    name: str  # "ALSC-CR" or "ALSC-Regular"
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    composition_report: dict[str, dict[CompositionKey, int]] = field(hash=False)
    build_seed: int = 0

    def partition(self, which: str) -> tuple[str, ...]:
        if which not in PARTITIONS:
            raise KeyError(which)
        return getattr(self, which)

    def sizes(self) -> dict[str, int]:
        return {p: len(self.partition(p)) for p in PARTITIONS}


def index_by_id(items: Sequence[LabeledInstance]) -> dict[str, LabeledInstance]:
    return {it.instance_id: it for it in items}


def _rng(seed: int, tag: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{tag}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _sample_ids(pool: Sequence[LabeledInstance], count: int, seed: int, tag: str) -> list[str]:
    """Deterministic sample of `count` ids; the pool is ordered by id first."""
    ids = sorted(it.instance_id for it in pool)
    _rng(seed, tag).shuffle(ids)
    return ids[:count]


def _floor_share(share: Fraction, n: int) -> int:
    return math.floor(share * n)


def _composition(
    items: Sequence[LabeledInstance],
) -> dict[CompositionKey, int]:
    counts: dict[CompositionKey, int] = {}
    for it in items:
        key = (
            it.instance.source_dataset.value,
            it.label.kind.value,
            it.label.is_cr.value,
            it.instance.polarity.value,
        )
        counts[key] = counts.get(key, 0) + 1
    return counts


def _report(partitions: dict[str, list[LabeledInstance]]) -> dict[str, dict[CompositionKey, int]]:
    return {name: _composition(items) for name, items in partitions.items()}


def _pool(
    items: Sequence[LabeledInstance],
    dataset: SourceDataset | None = None,
    split: Split | None = None,
    kind: CaseKind | None = None,
    is_cr: CrState | None = None,
) -> list[LabeledInstance]:
    out = []
    for it in items:
        if dataset is not None and it.instance.source_dataset is not dataset:
            continue
        if split is not None and it.instance.source_split is not split:
            continue
        if kind is not None and it.label.kind is not kind:
            continue
        if is_cr is not None and it.label.is_cr is not is_cr:
            continue
        out.append(it)
    return out


def build_alsc_cr(
    instances: Sequence[LabeledInstance],
    seed: int,
    mams_val_all_cases: bool = True,
) -> DatasetBundle:
    """Assemble the CR-focused bundle.

    test: every confirmed CR case from MAMS Test and from all Rest16 splits.
    val: 15% of the remaining (non-CR) pronoun cases in those same pools,
    plus 50% of MAMS Val and the Rest16 Val non-pronoun cases.
    train: all of MAMS Train plus the Rest16 Train non-pronoun cases.
    Overlaps resolve in favor of test, then val, then train.

    `mams_val_all_cases=False` narrows the 50% pool to non-pronoun cases on
    the MAMS side as well.
    """
    by_id = index_by_id(instances)
    if len(by_id) != len(instances):
        raise MalformedRecord("duplicate instance_ids in labeled corpus")

    review_pools = _pool(instances, dataset=SourceDataset.MAMS, split=Split.TEST) + _pool(
        instances, dataset=SourceDataset.REST16
    )
    unreviewed = sorted(
        it.instance_id
        for it in review_pools
        if it.label.kind is CaseKind.PRONOUN and it.label.is_cr is CrState.UNREVIEWED
    )
    if unreviewed:
        raise UnreviewedCasesRemain(unreviewed)

    test_items = [it for it in review_pools if it.label.is_cr is CrState.YES]
    test_ids = sorted(it.instance_id for it in test_items)
    taken = set(test_ids)

    pronoun_rest = [
        it
        for it in review_pools
        if it.label.kind is CaseKind.PRONOUN and it.instance_id not in taken
    ]
    pronoun_quota = _floor_share(VAL_PRONOUN_SHARE, len(pronoun_rest))
    val_ids = _sample_ids(pronoun_rest, pronoun_quota, seed, "val/pronoun")

    mams_val = _pool(
        instances,
        dataset=SourceDataset.MAMS,
        split=Split.VAL,
        kind=None if mams_val_all_cases else CaseKind.NON_PRONOUN,
    )
    rest_val_np = _pool(
        instances, dataset=SourceDataset.REST16, split=Split.VAL, kind=CaseKind.NON_PRONOUN
    )
    heldout = [it for it in mams_val + rest_val_np if it.instance_id not in taken]
    heldout_quota = _floor_share(VAL_HELDOUT_SHARE, len(heldout))
    val_ids += _sample_ids(heldout, heldout_quota, seed, "val/heldout")
    val_ids = sorted(set(val_ids) - taken)
    taken |= set(val_ids)

    train_items = _pool(instances, dataset=SourceDataset.MAMS, split=Split.TRAIN) + _pool(
        instances,
        dataset=SourceDataset.REST16,
        split=Split.TRAIN,
        kind=CaseKind.NON_PRONOUN,
    )
    train_ids = sorted(it.instance_id for it in train_items if it.instance_id not in taken)

    partitions = {
        "train": [by_id[i] for i in train_ids],
        "val": [by_id[i] for i in val_ids],
        "test": [by_id[i] for i in test_ids],
    }
    for name, items in partitions.items():
        if not items:
            raise EmptyPartition(name)

    bundle = DatasetBundle(
        name="ALSC-CR",
        train=tuple(train_ids),
        val=tuple(val_ids),
        test=tuple(test_ids),
        composition_report=_report(partitions),
        build_seed=seed,
    )
    logger.info("ALSC-CR built: sizes %s", bundle.sizes())
    return bundle


_PARTITION_SPLIT = {"train": Split.TRAIN, "val": Split.VAL, "test": Split.TEST}


def build_alsc_regular(
    instances: Sequence[LabeledInstance],
    seed: int,
    reference: DatasetBundle,
) -> DatasetBundle:
    """Mirror the reference bundle's sizes and per-source ratios without the CR restriction.

    Each partition draws from the matching original split of each source, so
    a partition with 222 Rest16 and 124 MAMS instances in the reference gets
    exactly those counts here, sampled seed-keyed from the full pools.
    """
    by_id = index_by_id(instances)
    taken: set[str] = set()
    partitions: dict[str, list[LabeledInstance]] = {}

    for name in ("test", "val", "train"):
        if not reference.partition(name):
            raise EmptyPartition(name)
        ref_counts = reference.composition_report[name]
        ids: list[str] = []
        for dataset in (SourceDataset.REST16, SourceDataset.MAMS):
            needed = sum(
                count for key, count in ref_counts.items() if key[0] == dataset.value
            )
            if needed == 0:
                continue
            pool = [
                it
                for it in _pool(instances, dataset=dataset, split=_PARTITION_SPLIT[name])
                if it.instance_id not in taken
            ]
            if len(pool) < needed:
                raise InsufficientInstances(
                    f"{name}: need {needed} {dataset.value} instances, pool has {len(pool)}"
                )
            ids += _sample_ids(pool, needed, seed, f"regular:{name}:{dataset.value}")
        ids = sorted(ids)
        taken |= set(ids)
        partitions[name] = [by_id[i] for i in ids]

    bundle = DatasetBundle(
        name="ALSC-Regular",
        train=tuple(it.instance_id for it in partitions["train"]),
        val=tuple(it.instance_id for it in partitions["val"]),
        test=tuple(it.instance_id for it in partitions["test"]),
        composition_report=_report(partitions),
        build_seed=seed,
    )
    logger.info("ALSC-Regular built: sizes %s", bundle.sizes())
    return bundle


def subset_fraction(records: Sequence[AuxRecord], fraction: float, seed: int) -> list[AuxRecord]:
    """floor(fraction * n) records chosen by a seed-keyed shuffle; 1.0 is the identity."""
    if fraction == 1.0:
        return list(records)
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    if fraction not in FRACTION_GRID:
        logger.warning("fraction %s is off the sweep grid %s", fraction, FRACTION_GRID)
    count = math.floor(Fraction(str(fraction)) * len(records))
    order = list(range(len(records)))
    _rng(seed, f"subset:{fraction}").shuffle(order)
    return [records[i] for i in order[:count]]


def _composition_to_json(report: dict[str, dict[CompositionKey, int]]) -> dict:
    return {
        partition: {"|".join(key): count for key, count in sorted(counts.items())}
        for partition, counts in report.items()
    }


def _composition_from_json(raw: dict) -> dict[str, dict[CompositionKey, int]]:
    out: dict[str, dict[CompositionKey, int]] = {}
    for partition, counts in raw.items():
        parsed: dict[CompositionKey, int] = {}
        for key, count in counts.items():
            parts = key.split("|")
            if len(parts) != 4:
                raise MalformedRecord(f"bad composition key {key!r}")
            parsed[tuple(parts)] = int(count)  # type: ignore[assignment]
        out[partition] = parsed
    return out


def _manifest_payload(bundle: DatasetBundle) -> dict:
    return {
        "schema_version": BUNDLE_SCHEMA,
        "name": bundle.name,
        "build_seed": bundle.build_seed,
        "train": list(bundle.train),
        "val": list(bundle.val),
        "test": list(bundle.test),
        "composition_report": _composition_to_json(bundle.composition_report),
    }


def manifest_digest(bundle: DatasetBundle) -> str:
    canonical = json.dumps(_manifest_payload(bundle), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(bundle: DatasetBundle, path: str | Path) -> str:
    payload = _manifest_payload(bundle)
    payload["digest"] = manifest_digest(bundle)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, ensure_ascii=False, indent=2)
        fh.write("\n")
    return payload["digest"]


def read_manifest(path: str | Path) -> DatasetBundle:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"{path}: {exc}") from exc
    if payload.get("schema_version") != BUNDLE_SCHEMA:
        raise MalformedRecord(f"{path}: unsupported schema {payload.get('schema_version')!r}")
    bundle = DatasetBundle(
        name=payload["name"],
        train=tuple(payload["train"]),
        val=tuple(payload["val"]),
        test=tuple(payload["test"]),
        composition_report=_composition_from_json(payload["composition_report"]),
        build_seed=int(payload["build_seed"]),
    )
    stated = payload.get("digest")
    if stated != manifest_digest(bundle):
        raise MalformedRecord(f"{path}: digest mismatch, file was edited or truncated")
    return bundle
