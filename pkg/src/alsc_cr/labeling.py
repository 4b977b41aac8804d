"""Definite-pronoun detection, case classification, and the manual review queue.

Tokenization splits on Unicode word boundaries (regex word characters), so
edge punctuation never reaches the matcher and contractions split apart:
"it's" yields the token "it". Matching is case-insensitive and token-exact;
"hers" never matches "her".
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    ConflictingDuplicateDecisions,
    DecisionOnNonPronounCase,
    MalformedRecord,
    UnknownInstance,
)
from .records import (
    AnnotationDecision,
    AspectInstance,
    CaseKind,
    CaseLabel,
    CrState,
    LabeledInstance,
)

logger = logging.getLogger(__name__)

# the full closed class of definite pronoun forms tracked by the benchmark
DEFAULT_PRONOUNS = (
    "it", "which", "they", "he", "who", "she", "their",
    "them", "its", "his", "there", "him", "her", "hers",
)


@dataclass(frozen=True)
class PronounLexicon:
    entries: tuple[str, ...] = DEFAULT_PRONOUNS

    def __post_init__(self):
        lowered = tuple(e.lower() for e in self.entries)
        if len(set(lowered)) != len(lowered):
            raise ValueError("lexicon entries must be unique")
        object.__setattr__(self, "entries", lowered)

    def __contains__(self, token: str) -> bool:
        return token.lower() in set(self.entries)


_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def tokenize(sentence: str) -> list[str]:
    return _TOKEN_RE.findall(sentence)


def detect_pronoun_spans(
    sentence: str, lexicon: PronounLexicon | None = None
) -> list[tuple[str, int, int, int]]:
    """All lexicon hits as (form, token_index, char_start, char_end)."""
    lexicon = lexicon or PronounLexicon()
    forms = set(lexicon.entries)
    hits = []
    for index, match in enumerate(_TOKEN_RE.finditer(sentence)):
        token = match.group(0).lower()
        if token in forms:
            hits.append((token, index, match.start(), match.end()))
    return hits


def detect_pronouns(
    sentence: str, lexicon: PronounLexicon | None = None
) -> list[tuple[str, int]]:
    """Lexicon pronouns in the sentence as (lowercased form, token index)."""
    return [(form, idx) for form, idx, _, _ in detect_pronoun_spans(sentence, lexicon)]


def classify_case(
    instance: AspectInstance, lexicon: PronounLexicon | None = None
) -> CaseLabel:
    """Pronoun case iff the sentence contains a lexicon pronoun; CR status starts unreviewed."""
    occurrences = tuple(detect_pronouns(instance.sentence, lexicon))
    if occurrences:
        return CaseLabel(CaseKind.PRONOUN, occurrences, CrState.UNREVIEWED)
    return CaseLabel(CaseKind.NON_PRONOUN, (), CrState.NO)


def classify_corpus(
    instances: list[AspectInstance], lexicon: PronounLexicon | None = None
) -> list[LabeledInstance]:
    return [LabeledInstance(inst, classify_case(inst, lexicon)) for inst in instances]


def mark_pronouns(sentence: str, lexicon: PronounLexicon | None = None) -> str:
    """Wrap every detected pronoun token in asterisks, for human review."""
    spans = detect_pronoun_spans(sentence, lexicon)
    out = []
    cursor = 0
    for _, _, start, end in spans:
        out.append(sentence[cursor:start])
        out.append(f"*{sentence[start:end]}*")
        cursor = end
    out.append(sentence[cursor:])
    return "".join(out)


QUEUE_COLUMNS = ("instance_id", "sentence", "aspect", "polarity")
DECISION_COLUMNS = ("instance_id", "verdict", "annotator", "note")


def _tsv_safe(value: str) -> str:
    return value.replace("\t", " ").replace("\n", " ")


def emit_annotation_queue(
    items: list[LabeledInstance],
    out_path: str | Path,
    lexicon: PronounLexicon | None = None,
) -> int:
    """Write the unreviewed pronoun cases as a TSV queue; returns the row count."""
    pending = sorted(
        (
            it for it in items
            if it.label.kind is CaseKind.PRONOUN and it.label.is_cr is CrState.UNREVIEWED
        ),
        key=lambda it: it.instance_id,
    )
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(QUEUE_COLUMNS)
        for it in pending:
            writer.writerow(
                [
                    it.instance_id,
                    _tsv_safe(mark_pronouns(it.instance.sentence, lexicon)),
                    _tsv_safe(it.instance.aspect),
                    it.instance.polarity.value,
                ]
            )
    return len(pending)


def load_decisions(path: str | Path) -> list[AnnotationDecision]:
    """Read an annotation decisions TSV (append-only; may span several sittings)."""
    decisions = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["instance_id", "verdict"]:
            raise MalformedRecord(f"{path}: expected TSV header starting with instance_id, verdict")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise MalformedRecord("decision row needs instance_id and verdict", line=lineno)
            verdict_raw = row[1].strip().lower()
            if verdict_raw not in ("yes", "no"):
                raise MalformedRecord(f"verdict {row[1]!r} is not yes/no", line=lineno)
            decisions.append(
                AnnotationDecision(
                    instance_id=row[0].strip(),
                    verdict=CrState.YES if verdict_raw == "yes" else CrState.NO,
                    annotator=row[2].strip() if len(row) > 2 else "",
                    note=row[3].strip() if len(row) > 3 else "",
                )
            )
    return decisions


def apply_decisions(
    items: list[LabeledInstance], decisions: list[AnnotationDecision]
) -> tuple[list[LabeledInstance], dict[str, int]]:
    """Set CR verdicts on pronoun cases; returns items plus yes/no/unreviewed counts."""
    by_id = {it.instance_id: it for it in items}
    verdicts: dict[str, CrState] = {}
    for dec in decisions:
        item = by_id.get(dec.instance_id)
        if item is None:
            raise UnknownInstance(dec.instance_id)
        if item.label.kind is not CaseKind.PRONOUN:
            raise DecisionOnNonPronounCase(dec.instance_id)
        prior = verdicts.get(dec.instance_id)
        if prior is not None and prior is not dec.verdict:
            raise ConflictingDuplicateDecisions(dec.instance_id)
        verdicts[dec.instance_id] = dec.verdict

    updated = [
        it.with_cr(verdicts[it.instance_id]) if it.instance_id in verdicts else it
        for it in items
    ]
    counts = {"yes": 0, "no": 0, "unreviewed": 0}
    for it in updated:
        if it.label.kind is CaseKind.PRONOUN:
            counts[it.label.is_cr.value] += 1
    logger.info(
        "decisions applied: %d yes, %d no, %d unreviewed pronoun cases",
        counts["yes"], counts["no"], counts["unreviewed"],
    )
    return updated, counts
