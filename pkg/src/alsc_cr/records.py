"""Core domain records: reviews, aspect instances, case labels, auxiliary task records.

All records serialize to line-delimited JSON with an explicit schema-version
field so corpus files remain diffable and forward-checkable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import MalformedRecord

INSTANCE_SCHEMA = "alsc-instances/1"
CORPUS_SCHEMA = "alsc-corpus/1"
AUX_SCHEMA = "aux-corpus/1"


class SourceDataset(str, Enum):
    REST16 = "rest16"
    MAMS = "mams"


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"


class AuxTask(str, Enum):
    COMMONGEN = "commongen"
    COSMOSQA = "cosmosqa"
    SQUAD = "squad"
    QQP = "qqp"
    DPR = "dpr"


class CaseKind(str, Enum):
    NON_PRONOUN = "non_pronoun"
    PRONOUN = "pronoun"


class CrState(str, Enum):
    UNREVIEWED = "unreviewed"
    YES = "yes"
    NO = "no"


@dataclass(frozen=True)
class AspectAnnotation:
    """One opinion on a sentence, polarity kept as the raw corpus string."""

    term: str
    start: int
    end: int
    polarity_label: str


@dataclass(frozen=True)
class RawReview:
    review_id: str
    sentence: str
    aspect_annotations: tuple[AspectAnnotation, ...]
    source_dataset: SourceDataset
    source_split: Split


def instance_id_for(
    dataset: SourceDataset, split: Split, review_id: str, term: str, start: int, end: int
) -> str:
    """Stable content hash identifying one (sentence, aspect) example."""
    key = f"{dataset.value}|{split.value}|{review_id}|{term}|{start}:{end}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class AspectInstance:
    instance_id: str
    sentence: str
    aspect: str
    polarity: Polarity
    source_dataset: SourceDataset
    source_split: Split


@dataclass(frozen=True)
class CaseLabel:
    kind: CaseKind
    pronoun_occurrences: tuple[tuple[str, int], ...]
    is_cr: CrState

    def __post_init__(self):
        if (self.kind is CaseKind.NON_PRONOUN) != (not self.pronoun_occurrences):
            raise ValueError("kind must be NON_PRONOUN exactly when no pronouns occur")
        if self.is_cr is CrState.YES and self.kind is not CaseKind.PRONOUN:
            raise ValueError("is_cr=yes requires a pronoun case")


@dataclass(frozen=True)
class LabeledInstance:
    instance: AspectInstance
    label: CaseLabel

    @property
    def instance_id(self) -> str:
        return self.instance.instance_id

    def with_cr(self, state: CrState) -> "LabeledInstance":
        return LabeledInstance(
            self.instance,
            CaseLabel(self.label.kind, self.label.pronoun_occurrences, state),
        )


@dataclass(frozen=True)
class AnnotationDecision:
    instance_id: str
    verdict: CrState  # YES or NO only
    annotator: str = ""
    note: str = ""


@dataclass(frozen=True)
class AuxRecord:
    """One auxiliary-task example; payload fields depend on the task."""

    task: AuxTask
    record_id: str
    split: Split
    payload: dict = field(hash=False)


# required payload fields per task, used by validation and prompt rendering
AUX_PAYLOAD_FIELDS: dict[AuxTask, tuple[str, ...]] = {
    AuxTask.COMMONGEN: ("concepts", "reference"),
    AuxTask.COSMOSQA: ("context", "question", "answers", "gold_index"),
    AuxTask.SQUAD: ("context", "question", "answer"),
    AuxTask.QQP: ("question1", "question2", "is_duplicate"),
    AuxTask.DPR: ("sentence", "pronoun", "pronoun_start", "pronoun_end", "antecedent", "candidates"),
}


# ---------------------------------------------------------------------------
# line-delimited serialization


def raw_instance_to_dict(inst: AspectInstance) -> dict:
    return {
        "schema_version": INSTANCE_SCHEMA,
        "instance_id": inst.instance_id,
        "sentence": inst.sentence,
        "aspect": inst.aspect,
        "polarity": inst.polarity.value,
        "source_dataset": inst.source_dataset.value,
        "source_split": inst.source_split.value,
    }


def raw_instance_from_dict(row: dict) -> AspectInstance:
    try:
        return AspectInstance(
            instance_id=row["instance_id"],
            sentence=row["sentence"],
            aspect=row["aspect"],
            polarity=Polarity(row["polarity"]),
            source_dataset=SourceDataset(row["source_dataset"]),
            source_split=Split(row["source_split"]),
        )
    except (KeyError, ValueError) as exc:
        raise MalformedRecord(f"bad instance record: {exc}") from exc


def instance_to_dict(item: LabeledInstance) -> dict:
    inst, label = item.instance, item.label
    return {
        "schema_version": CORPUS_SCHEMA,
        "instance_id": inst.instance_id,
        "sentence": inst.sentence,
        "aspect": inst.aspect,
        "polarity": inst.polarity.value,
        "source_dataset": inst.source_dataset.value,
        "source_split": inst.source_split.value,
        "case_kind": label.kind.value,
        "pronouns": [[p, i] for p, i in label.pronoun_occurrences],
        "is_cr": label.is_cr.value,
    }


def instance_from_dict(row: dict) -> LabeledInstance:
    try:
        inst = AspectInstance(
            instance_id=row["instance_id"],
            sentence=row["sentence"],
            aspect=row["aspect"],
            polarity=Polarity(row["polarity"]),
            source_dataset=SourceDataset(row["source_dataset"]),
            source_split=Split(row["source_split"]),
        )
        label = CaseLabel(
            kind=CaseKind(row["case_kind"]),
            pronoun_occurrences=tuple((p, i) for p, i in row["pronouns"]),
            is_cr=CrState(row["is_cr"]),
        )
    except (KeyError, ValueError) as exc:
        raise MalformedRecord(f"bad corpus record: {exc}") from exc
    return LabeledInstance(inst, label)


def aux_to_dict(record: AuxRecord) -> dict:
    return {
        "schema_version": AUX_SCHEMA,
        "task": record.task.value,
        "record_id": record.record_id,
        "split": record.split.value,
        "payload": record.payload,
    }


def aux_from_dict(row: dict) -> AuxRecord:
    try:
        return AuxRecord(
            task=AuxTask(row["task"]),
            record_id=row["record_id"],
            split=Split(row["split"]),
            payload=row["payload"],
        )
    except (KeyError, ValueError) as exc:
        raise MalformedRecord(f"bad aux record: {exc}") from exc


def write_jsonl(rows: Iterable[dict], path: str | Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(str(exc), line=lineno) from exc


def write_instances(instances: Iterable[AspectInstance], path: str | Path) -> int:
    return write_jsonl((raw_instance_to_dict(inst) for inst in instances), path)


def read_instances(path: str | Path) -> list[AspectInstance]:
    return [raw_instance_from_dict(row) for row in read_jsonl(path)]


def write_corpus(items: Iterable[LabeledInstance], path: str | Path) -> int:
    return write_jsonl((instance_to_dict(it) for it in items), path)


def read_corpus(path: str | Path) -> list[LabeledInstance]:
    return [instance_from_dict(row) for row in read_jsonl(path)]


def write_aux_corpus(records: Iterable[AuxRecord], path: str | Path) -> int:
    return write_jsonl((aux_to_dict(r) for r in records), path)


def read_aux_corpus(path: str | Path) -> list[AuxRecord]:
    return [aux_from_dict(row) for row in read_jsonl(path)]
