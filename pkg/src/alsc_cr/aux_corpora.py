"""Loaders normalizing the five auxiliary-task corpora into AuxRecord JSONL.

Input files are line-delimited JSON in each task's published field layout;
common field-name variants are accepted. QQP train sets are capped at 50,000
records in a deterministic shuffle order keyed by a fixed internal seed, so
the cap does not depend on how a particular distribution happens to be sorted.
"""

from __future__ import annotations

import json
import logging
import random
import re
from pathlib import Path

from .errors import MalformedRecord, TaskMismatch
from .records import AuxRecord, AuxTask, Split

logger = logging.getLogger(__name__)

QQP_TRAIN_CAP = 50_000
_QQP_CAP_SHUFFLE_SEED = 909  # internal constant, not a tunable

# shape checks that strongly identify a record as belonging to a task; an
# "answers" list is shared with cosmosqa, only the dict form is squad-specific
_SIGNATURE_CHECKS = {
    AuxTask.COMMONGEN: lambda row: "concepts" in row or "concept_set" in row,
    AuxTask.COSMOSQA: lambda row: "answer0" in row,
    AuxTask.SQUAD: lambda row: isinstance(row.get("answers"), dict) or "answer_start" in row,
    AuxTask.QQP: lambda row: "question1" in row,
    AuxTask.DPR: lambda row: "candidates" in row,
}


def _detect_foreign_task(row: dict, declared: AuxTask) -> AuxTask | None:
    for task, looks_like in _SIGNATURE_CHECKS.items():
        if task is not declared and looks_like(row):
            return task
    return None


def _get(row: dict, lineno: int, *names: str):
    for name in names:
        if name in row:
            return row[name]
    raise MalformedRecord(f"missing field {names[0]!r}", line=lineno)


def _normalize_commongen(row: dict, lineno: int) -> dict:
    concepts = row.get("concepts")
    if concepts is None and "concept_set" in row:
        concepts = [c for c in str(row["concept_set"]).split("#") if c]
    if not isinstance(concepts, list) or not concepts:
        raise MalformedRecord("missing or empty concept list", line=lineno)
    reference = _get(row, lineno, "target", "reference", "scene")
    if isinstance(reference, list):
        if not reference:
            raise MalformedRecord("empty reference list", line=lineno)
        reference = reference[0]
    return {"concepts": [str(c) for c in concepts], "reference": str(reference)}


def _normalize_cosmosqa(row: dict, lineno: int) -> dict:
    if "answers" in row and isinstance(row["answers"], list):
        answers = [str(a) for a in row["answers"]]
    else:
        answers = [str(_get(row, lineno, f"answer{i}")) for i in range(4)]
    if len(answers) != 4:
        raise MalformedRecord(f"expected 4 answers, got {len(answers)}", line=lineno)
    gold = _get(row, lineno, "label", "gold_index")
    try:
        gold = int(gold)
    except (TypeError, ValueError):
        raise MalformedRecord(f"gold index {gold!r} is not an integer", line=lineno)
    if gold not in (0, 1, 2, 3):
        raise MalformedRecord(f"gold index {gold} outside 0..3", line=lineno)
    return {
        "context": str(_get(row, lineno, "context")),
        "question": str(_get(row, lineno, "question")),
        "answers": answers,
        "gold_index": gold,
    }


def _normalize_squad(row: dict, lineno: int) -> dict:
    if "answer" in row:
        answer = str(row["answer"])
    else:
        answers = _get(row, lineno, "answers")
        texts = answers.get("text") if isinstance(answers, dict) else answers
        if not isinstance(texts, list) or not texts:
            raise MalformedRecord("no answer text", line=lineno)
        answer = str(texts[0])
    return {
        "context": str(_get(row, lineno, "context")),
        "question": str(_get(row, lineno, "question")),
        "answer": answer,
    }


def _normalize_qqp(row: dict, lineno: int) -> dict:
    flag = _get(row, lineno, "is_duplicate", "label")
    if isinstance(flag, str):
        if flag not in ("0", "1"):
            raise MalformedRecord(f"duplicate flag {flag!r} is not 0/1", line=lineno)
        flag = int(flag)
    if flag not in (0, 1, True, False):
        raise MalformedRecord(f"duplicate flag {flag!r} is not 0/1", line=lineno)
    return {
        "question1": str(_get(row, lineno, "question1")),
        "question2": str(_get(row, lineno, "question2")),
        "is_duplicate": bool(flag),
    }


_WORD_RE_TEMPLATE = r"(?<!\w){}(?!\w)"


def _find_pronoun_span(sentence: str, pronoun: str, lineno: int) -> tuple[int, int]:
    pattern = _WORD_RE_TEMPLATE.format(re.escape(pronoun))
    match = re.search(pattern, sentence) or re.search(pattern, sentence, re.IGNORECASE)
    if match is None:
        raise MalformedRecord(
            f"pronoun {pronoun!r} does not occur in sentence", line=lineno
        )
    return match.start(), match.end()


def _normalize_dpr(row: dict, lineno: int) -> dict:
    sentence = str(_get(row, lineno, "sentence"))
    pronoun = str(_get(row, lineno, "pronoun"))
    candidates = _get(row, lineno, "candidates")
    if not isinstance(candidates, list) or not candidates:
        raise MalformedRecord("missing candidate antecedents", line=lineno)
    candidates = [str(c) for c in candidates]
    if "antecedent" in row:
        antecedent = str(row["antecedent"])
    else:
        label = _get(row, lineno, "label")
        try:
            antecedent = candidates[int(label)]
        except (TypeError, ValueError, IndexError):
            raise MalformedRecord(f"label {label!r} does not index candidates", line=lineno)
    if "pronoun_start" in row:
        start = int(row["pronoun_start"])
        end = start + len(pronoun)
        if sentence[start:end] != pronoun:
            raise MalformedRecord(
                f"pronoun_start {start} does not address {pronoun!r}", line=lineno
            )
    else:
        start, end = _find_pronoun_span(sentence, pronoun, lineno)
    return {
        "sentence": sentence,
        "pronoun": pronoun,
        "pronoun_start": start,
        "pronoun_end": end,
        "antecedent": antecedent,
        "candidates": candidates,
    }


_NORMALIZERS = {
    AuxTask.COMMONGEN: _normalize_commongen,
    AuxTask.COSMOSQA: _normalize_cosmosqa,
    AuxTask.SQUAD: _normalize_squad,
    AuxTask.QQP: _normalize_qqp,
    AuxTask.DPR: _normalize_dpr,
}


def load_aux_corpus(task: AuxTask, path: str | Path, split: Split = Split.TRAIN) -> list[AuxRecord]:
    """Load one split of an auxiliary-task corpus from line-delimited JSON."""
    normalize = _NORMALIZERS[task]
    records: list[AuxRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(str(exc), line=lineno) from exc
            if not isinstance(row, dict):
                raise MalformedRecord("record is not an object", line=lineno)
            try:
                payload = normalize(row, lineno)
            except MalformedRecord:
                foreign = _detect_foreign_task(row, task)
                if foreign is not None:
                    raise TaskMismatch(
                        f"line {lineno}: fields look like {foreign.value!r}, not {task.value!r}"
                    ) from None
                raise
            records.append(
                AuxRecord(
                    task=task,
                    record_id=f"{task.value}-{split.value}-{lineno:06d}",
                    split=split,
                    payload=payload,
                )
            )
    loaded = len(records)
    if task is AuxTask.QQP and split is Split.TRAIN and loaded > QQP_TRAIN_CAP:
        order = list(range(loaded))
        random.Random(_QQP_CAP_SHUFFLE_SEED).shuffle(order)
        records = [records[i] for i in order[:QQP_TRAIN_CAP]]
        logger.info(
            "%s %s: loaded %d records, capped to %d", task.value, split.value, loaded, len(records)
        )
    else:
        logger.info("%s %s: loaded %d records", task.value, split.value, loaded)
    return records
