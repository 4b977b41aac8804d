"""Builders for synthetic corpora and workspaces shared across the test modules.

The two labeled corpora here are constructed so their bundle partitions can be
counted by hand. Group sizes are chosen so every sampling quota lands on exact
or easily floored values and the regular bundle is feasible for any seed.
"""

from __future__ import annotations

import json
from pathlib import Path

from alsc_cr.records import (
    AspectInstance,
    AuxRecord,
    AuxTask,
    CaseKind,
    CaseLabel,
    CrState,
    LabeledInstance,
    Polarity,
    SourceDataset,
    Split,
    instance_id_for,
)

_QUALITY = {
    Polarity.POSITIVE: "superb",
    Polarity.NEGATIVE: "stale",
    Polarity.NEUTRAL: "ordinary",
}


def make_case(
    dataset: SourceDataset,
    split: Split,
    n: int,
    kind: CaseKind,
    is_cr: CrState,
    polarity: Polarity,
) -> LabeledInstance:
    quality = _QUALITY[polarity]
    if kind is CaseKind.PRONOUN:
        sentence = f"The food arrived and it was {quality}, order {n}."
        occurrences = (("it", 4),)
    else:
        sentence = f"The food tasted {quality} on day {n}."
        occurrences = ()
    inst = AspectInstance(
        instance_id=instance_id_for(dataset, split, f"{split.value}-{n:04d}", "food", 4, 8),
        sentence=sentence,
        aspect="food",
        polarity=polarity,
        source_dataset=dataset,
        source_split=split,
    )
    return LabeledInstance(inst, CaseLabel(kind, occurrences, is_cr))


def make_group(
    dataset: SourceDataset,
    split: Split,
    start: int,
    count: int,
    kind: CaseKind,
    is_cr: CrState,
    polarity: Polarity,
) -> list[LabeledInstance]:
    return [
        make_case(dataset, split, start + i, kind, is_cr, polarity) for i in range(count)
    ]


def corpus_exact() -> list[LabeledInstance]:
    """Corpus whose ALSC-CR composition is identical for every build seed.

    Hand enumeration:
      test  = 4 MAMS Test CR + (3 + 1 + 2) Rest16 CR = 10, all positive.
      val   = floor(0.15 * 20) = 3 of the MAMS Test non-CR pronoun cases
              (the only pronoun cases left in the review pools)
            + floor(0.50 * 14) = 7 of MAMS Val (all non-pronoun)
              (Rest16 Val has no non-pronoun cases)   -> 10 total.
      train = 40 MAMS Train + 20 Rest16 Train non-pronoun = 60.
    Every sampled pool is homogeneous in (dataset, kind, is_cr, polarity), so
    the composition report is seed-independent.
    """
    P, NP = CaseKind.PRONOUN, CaseKind.NON_PRONOUN
    YES, NO = CrState.YES, CrState.NO
    POS, NEG, NEU = Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.NEUTRAL
    c: list[LabeledInstance] = []
    c += make_group(SourceDataset.MAMS, Split.TRAIN, 0, 8, P, NO, NEG)
    c += make_group(SourceDataset.MAMS, Split.TRAIN, 100, 32, NP, NO, NEU)
    c += make_group(SourceDataset.MAMS, Split.VAL, 0, 14, NP, NO, NEU)
    c += make_group(SourceDataset.MAMS, Split.TEST, 0, 4, P, YES, POS)
    c += make_group(SourceDataset.MAMS, Split.TEST, 100, 20, P, NO, NEG)
    c += make_group(SourceDataset.MAMS, Split.TEST, 200, 10, NP, NO, NEU)
    c += make_group(SourceDataset.REST16, Split.TRAIN, 0, 3, P, YES, POS)
    c += make_group(SourceDataset.REST16, Split.TRAIN, 100, 20, NP, NO, NEU)
    c += make_group(SourceDataset.REST16, Split.VAL, 0, 1, P, YES, POS)
    c += make_group(SourceDataset.REST16, Split.TEST, 0, 2, P, YES, POS)
    c += make_group(SourceDataset.REST16, Split.TEST, 100, 6, NP, NO, NEU)
    return c


def corpus_mixed() -> list[LabeledInstance]:
    """Corpus with non-CR pronoun cases in every pool, for flag and ratio tests.

    Sizes: MAMS 40/20/20, Rest16 30/10/10. With mams_val_all_cases=True the
    val quota is floor(0.15 * 17) + floor(0.50 * 27) = 2 + 13 = 15; with the
    flag off the heldout pool shrinks to 21 and the quota to 2 + 10 = 12.
    """
    P, NP = CaseKind.PRONOUN, CaseKind.NON_PRONOUN
    YES, NO = CrState.YES, CrState.NO
    POS, NEG, NEU = Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.NEUTRAL
    c: list[LabeledInstance] = []
    c += make_group(SourceDataset.MAMS, Split.TRAIN, 0, 8, P, NO, NEG)
    c += make_group(SourceDataset.MAMS, Split.TRAIN, 100, 32, NP, NO, NEU)
    c += make_group(SourceDataset.MAMS, Split.VAL, 0, 6, P, NO, NEG)
    c += make_group(SourceDataset.MAMS, Split.VAL, 100, 14, NP, NO, NEU)
    c += make_group(SourceDataset.MAMS, Split.TEST, 0, 4, P, YES, POS)
    c += make_group(SourceDataset.MAMS, Split.TEST, 100, 6, P, NO, NEG)
    c += make_group(SourceDataset.MAMS, Split.TEST, 200, 10, NP, NO, NEU)
    c += make_group(SourceDataset.REST16, Split.TRAIN, 0, 3, P, YES, POS)
    c += make_group(SourceDataset.REST16, Split.TRAIN, 100, 7, P, NO, NEG)
    c += make_group(SourceDataset.REST16, Split.TRAIN, 200, 20, NP, NO, NEU)
    c += make_group(SourceDataset.REST16, Split.VAL, 0, 1, P, YES, POS)
    c += make_group(SourceDataset.REST16, Split.VAL, 100, 2, P, NO, NEG)
    c += make_group(SourceDataset.REST16, Split.VAL, 200, 7, NP, NO, NEU)
    c += make_group(SourceDataset.REST16, Split.TEST, 0, 2, P, YES, POS)
    c += make_group(SourceDataset.REST16, Split.TEST, 100, 2, P, NO, NEG)
    c += make_group(SourceDataset.REST16, Split.TEST, 200, 6, NP, NO, NEU)
    return c


def corpus_e2e() -> list[LabeledInstance]:
    """Corpus for pipeline runs: polarities cycle so no partition is single-class."""
    P, NP = CaseKind.PRONOUN, CaseKind.NON_PRONOUN
    YES, NO = CrState.YES, CrState.NO
    cycle = (Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.NEUTRAL)
    plan = [
        (SourceDataset.MAMS, Split.TRAIN, P, NO, 6),
        (SourceDataset.MAMS, Split.TRAIN, NP, NO, 18),
        (SourceDataset.MAMS, Split.VAL, NP, NO, 12),
        (SourceDataset.MAMS, Split.TEST, P, YES, 6),
        (SourceDataset.MAMS, Split.TEST, P, NO, 9),
        (SourceDataset.MAMS, Split.TEST, NP, NO, 6),
        (SourceDataset.REST16, Split.TRAIN, P, YES, 3),
        (SourceDataset.REST16, Split.TRAIN, NP, NO, 12),
        (SourceDataset.REST16, Split.VAL, P, YES, 3),
        (SourceDataset.REST16, Split.VAL, NP, NO, 6),
        (SourceDataset.REST16, Split.TEST, P, YES, 3),
        (SourceDataset.REST16, Split.TEST, NP, NO, 6),
    ]
    c: list[LabeledInstance] = []
    for base, (dataset, split, kind, is_cr, count) in enumerate(plan):
        for i in range(count):
            c.append(
                make_case(dataset, split, base * 100 + i, kind, is_cr, cycle[i % 3])
            )
    return c


# ---------------------------------------------------------------------------
# auxiliary-task corpora


def aux_rows(task: AuxTask, count: int, offset: int = 0) -> list[dict]:
    """Raw JSONL rows in each task's published field layout."""
    rows = []
    for i in range(offset, offset + count):
        if task is AuxTask.COMMONGEN:
            rows.append(
                {"concepts": ["cook", f"meal{i}", "kitchen"], "target": f"I cook meal{i}."}
            )
        elif task is AuxTask.COSMOSQA:
            rows.append(
                {
                    "context": f"Sam baked {i} pies for the fair.",
                    "question": "What did Sam bake?",
                    "answer0": "bread",
                    "answer1": "pies",
                    "answer2": "cake",
                    "answer3": "nothing",
                    "label": 1,
                }
            )
        elif task is AuxTask.SQUAD:
            rows.append(
                {
                    "context": f"Lab {i} opened in 1901 in Oslo.",
                    "question": f"When did lab {i} open?",
                    "answers": {"text": ["1901"], "answer_start": [15]},
                }
            )
        elif task is AuxTask.QQP:
            rows.append(
                {
                    "question1": f"How do I learn piano in {i} days?",
                    "question2": f"Can piano be learned in {i} days?",
                    "is_duplicate": i % 2,
                }
            )
        elif task is AuxTask.DPR:
            rows.append(
                {
                    "sentence": f"The cook thanked the farmer number {i} because he grew the beans.",
                    "pronoun": "he",
                    "candidates": ["The cook", "the farmer"],
                    "antecedent": "the farmer",
                }
            )
        else:
            raise AssertionError(task)
    return rows


def write_rows(rows: list[dict], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def write_aux_file(task: AuxTask, count: int, path: Path, offset: int = 0) -> Path:
    return write_rows(aux_rows(task, count, offset), path)


def make_aux_records(task: AuxTask, count: int, split: Split = Split.TRAIN) -> list[AuxRecord]:
    from alsc_cr.aux_corpora import load_aux_corpus  # local to avoid cycles in helpers
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        path = write_aux_file(task, count, Path(tmp) / "rows.jsonl")
        return load_aux_corpus(task, path, split)
