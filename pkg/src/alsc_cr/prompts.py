"""Text-to-text prompt rendering for every task, and output parsing.

All renderers are pure: the same record always yields byte-identical text.
Rendered files are what backends consume, as line-delimited JSON records
{input, target, origin_id, task}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import MalformedRecord, SpanOutOfBounds, TaskMismatch
from .records import AspectInstance, AuxRecord, AuxTask, Polarity

ALSC_TASK_TAG = "alsc"

QQP_TARGETS = ("duplicate", "not_duplicate")


@dataclass(frozen=True)
class PromptedExample:
    task: str
    input_text: str
    target_text: str
    origin_id: str

    def __post_init__(self):
        if not self.input_text:
            raise ValueError("input_text must be non-empty")


def _ensure_terminal_period(sentence: str) -> str:
    # keep existing terminal punctuation runs (e.g. "...") untouched
    trimmed = sentence.rstrip()
    if trimmed.endswith("."):
        return trimmed
    return trimmed + "."


def render_alsc(instance: AspectInstance) -> PromptedExample:
    sentence = _ensure_terminal_period(instance.sentence)
    return PromptedExample(
        task=ALSC_TASK_TAG,
        input_text=f"get sentiment: {sentence} aspect: {instance.aspect}",
        target_text=instance.polarity.value,
        origin_id=instance.instance_id,
    )


def parse_alsc_output(text: str) -> Polarity | None:
    """Trim, lowercase, exact match; anything else is invalid (None)."""
    normalized = text.strip().lower()
    for polarity in Polarity:
        if normalized == polarity.value:
            return polarity
    return None


def _require_task(record: AuxRecord, task: AuxTask):
    if record.task is not task:
        raise TaskMismatch(f"record {record.record_id} is {record.task.value}, not {task.value}")


def render_dpr(record: AuxRecord) -> PromptedExample:
    _require_task(record, AuxTask.DPR)
    payload = record.payload
    sentence = payload["sentence"]
    start, end = payload["pronoun_start"], payload["pronoun_end"]
    if not (0 <= start < end <= len(sentence)):
        raise SpanOutOfBounds(f"{record.record_id}: span {start}:{end} outside sentence")
    if sentence[start:end].lower() != payload["pronoun"].lower():
        raise SpanOutOfBounds(
            f"{record.record_id}: span {start}:{end} does not cover {payload['pronoun']!r}"
        )
    marked = f"{sentence[:start]}*{sentence[start:end]}*{sentence[end:]}"
    return PromptedExample(
        task=AuxTask.DPR.value,
        input_text=f"Get antecedent: {marked}",
        target_text=payload["antecedent"],
        origin_id=record.record_id,
    )


def render_commongen(record: AuxRecord) -> PromptedExample:
    _require_task(record, AuxTask.COMMONGEN)
    concepts = " ".join(record.payload["concepts"])
    return PromptedExample(
        task=AuxTask.COMMONGEN.value,
        input_text=f"generate a sentence with: {concepts}",
        target_text=record.payload["reference"],
        origin_id=record.record_id,
    )


def render_cosmosqa(record: AuxRecord) -> PromptedExample:
    _require_task(record, AuxTask.COSMOSQA)
    payload = record.payload
    answers = payload["answers"]
    answer_part = " ".join(f"answer_{i}: {answers[i]}" for i in range(4))
    return PromptedExample(
        task=AuxTask.COSMOSQA.value,
        input_text=(
            f"question: {payload['question']} {answer_part} context: {payload['context']}"
        ),
        target_text=str(payload["gold_index"]),
        origin_id=record.record_id,
    )


def render_squad(record: AuxRecord) -> PromptedExample:
    _require_task(record, AuxTask.SQUAD)
    payload = record.payload
    return PromptedExample(
        task=AuxTask.SQUAD.value,
        input_text=f"question: {payload['question']} context: {payload['context']}",
        target_text=payload["answer"],
        origin_id=record.record_id,
    )


def render_qqp(record: AuxRecord) -> PromptedExample:
    _require_task(record, AuxTask.QQP)
    payload = record.payload
    target = QQP_TARGETS[0] if payload["is_duplicate"] else QQP_TARGETS[1]
    return PromptedExample(
        task=AuxTask.QQP.value,
        input_text=f"qqp question1: {payload['question1']} question2: {payload['question2']}",
        target_text=target,
        origin_id=record.record_id,
    )


AUX_RENDERERS: dict[AuxTask, Callable[[AuxRecord], PromptedExample]] = {
    AuxTask.COMMONGEN: render_commongen,
    AuxTask.COSMOSQA: render_cosmosqa,
    AuxTask.SQUAD: render_squad,
    AuxTask.QQP: render_qqp,
    AuxTask.DPR: render_dpr,
}


def render_aux(record: AuxRecord) -> PromptedExample:
    return AUX_RENDERERS[record.task](record)


def example_to_dict(example: PromptedExample) -> dict:
    return {
        "input": example.input_text,
        "target": example.target_text,
        "origin_id": example.origin_id,
        "task": example.task,
    }


def example_from_dict(raw: dict) -> PromptedExample:
    try:
        return PromptedExample(
            task=raw["task"],
            input_text=raw["input"],
            target_text=raw["target"],
            origin_id=raw["origin_id"],
        )
    except KeyError as exc:
        raise MalformedRecord(f"prompted example missing field {exc}") from exc


def write_prompts(examples: Iterable[PromptedExample], path: str | Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(json.dumps(example_to_dict(example), sort_keys=True, ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def read_prompts(path: str | Path) -> list[PromptedExample]:
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(str(exc), line=lineno) from exc
            examples.append(example_from_dict(raw))
    return examples
