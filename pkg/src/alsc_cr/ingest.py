"""Parsers for the raw review corpora and the cleanup pass producing aspect instances.

Parsing is lossless: raw polarity strings (including "conflict") survive into
RawReview and are only resolved by clean(). Implicit opinions (SemEval
target="NULL") carry no aspect term span and are skipped at parse time.
"""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET

from .errors import DuplicateInstance, MalformedXml, SchemaViolation, UnknownPolarityLabel
from .records import (
    AspectAnnotation,
    AspectInstance,
    Polarity,
    RawReview,
    SourceDataset,
    Split,
    instance_id_for,
)

logger = logging.getLogger(__name__)

_POLARITY_MAP = {
    "positive": Polarity.POSITIVE,
    "negative": Polarity.NEGATIVE,
    "neutral": Polarity.NEUTRAL,
}
CONFLICT_LABEL = "conflict"


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def _check_span(review_id: str, sentence: str, term: str, start: int, end: int) -> None:
    if not (0 <= start < end <= len(sentence)):
        raise SchemaViolation(
            f"{review_id}: span {start}:{end} outside sentence of length {len(sentence)}"
        )
    if _normalize_ws(sentence[start:end]) != _normalize_ws(term):
        raise SchemaViolation(
            f"{review_id}: span text {sentence[start:end]!r} does not match term {term!r}"
        )


def _parse_root(data: bytes) -> ET.Element:
    try:
        return ET.fromstring(data)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc


def _require(elem: ET.Element, attr: str, context: str) -> str:
    value = elem.get(attr)
    if value is None:
        raise SchemaViolation(f"{context}: missing required attribute {attr!r}")
    return value


def parse_semeval_xml(data: bytes, split: Split) -> list[RawReview]:
    """Parse a SemEval-2016 restaurant-review ABSA document (Rest16)."""
    root = _parse_root(data)
    reviews: list[RawReview] = []
    for sentence_el in root.iter("sentence"):
        sid = _require(sentence_el, "id", "sentence")
        text_el = sentence_el.find("text")
        if text_el is None or text_el.text is None:
            raise SchemaViolation(f"sentence {sid}: missing text element")
        sentence = text_el.text
        annotations = []
        opinions_el = sentence_el.find("Opinions")
        if opinions_el is not None:
            for op in opinions_el.findall("Opinion"):
                target = _require(op, "target", f"sentence {sid} opinion")
                if target == "NULL":
                    continue  # implicit aspect, no term span to classify
                polarity = _require(op, "polarity", f"sentence {sid} opinion")
                start = int(_require(op, "from", f"sentence {sid} opinion"))
                end = int(_require(op, "to", f"sentence {sid} opinion"))
                _check_span(sid, sentence, target, start, end)
                annotations.append(AspectAnnotation(target, start, end, polarity))
        reviews.append(
            RawReview(
                review_id=sid,
                sentence=sentence,
                aspect_annotations=tuple(annotations),
                source_dataset=SourceDataset.REST16,
                source_split=split,
            )
        )
    return reviews


def parse_mams_xml(data: bytes, split: Split) -> list[RawReview]:
    """Parse a MAMS ATSA document. Sentences carry no ids; positions are used."""
    root = _parse_root(data)
    reviews: list[RawReview] = []
    for index, sentence_el in enumerate(root.iter("sentence")):
        sid = sentence_el.get("id") or f"{index:05d}"
        text_el = sentence_el.find("text")
        if text_el is None or text_el.text is None:
            raise SchemaViolation(f"sentence {sid}: missing text element")
        sentence = text_el.text
        annotations = []
        terms_el = sentence_el.find("aspectTerms")
        if terms_el is not None:
            for term_el in terms_el.findall("aspectTerm"):
                term = _require(term_el, "term", f"sentence {sid} aspectTerm")
                polarity = _require(term_el, "polarity", f"sentence {sid} aspectTerm")
                start = int(_require(term_el, "from", f"sentence {sid} aspectTerm"))
                end = int(_require(term_el, "to", f"sentence {sid} aspectTerm"))
                _check_span(sid, sentence, term, start, end)
                annotations.append(AspectAnnotation(term, start, end, polarity))
        reviews.append(
            RawReview(
                review_id=sid,
                sentence=sentence,
                aspect_annotations=tuple(annotations),
                source_dataset=SourceDataset.MAMS,
                source_split=split,
            )
        )
    return reviews


def clean(reviews: list[RawReview]) -> list[AspectInstance]:
    """Drop aspect-free reviews and conflict-polarity annotations, normalize the rest.

    Raw polarity matching is case-insensitive and whitespace-trimmed; any
    label outside {positive, negative, neutral, conflict} aborts with the
    offending review id.
    """
    instances: list[AspectInstance] = []
    seen: dict[str, AspectInstance] = {}
    for review in reviews:
        if not review.aspect_annotations:
            continue
        for ann in review.aspect_annotations:
            raw = ann.polarity_label.strip().lower()
            if raw == CONFLICT_LABEL:
                continue
            if raw not in _POLARITY_MAP:
                raise UnknownPolarityLabel(
                    f"review {review.review_id}: polarity label {ann.polarity_label!r}"
                )
            iid = instance_id_for(
                review.source_dataset, review.source_split,
                review.review_id, ann.term, ann.start, ann.end,
            )
            instance = AspectInstance(
                instance_id=iid,
                sentence=review.sentence,
                aspect=ann.term,
                polarity=_POLARITY_MAP[raw],
                source_dataset=review.source_dataset,
                source_split=review.source_split,
            )
            if iid in seen:
                if seen[iid] == instance:
                    logger.warning(
                        "dropping exact duplicate annotation %s (%s / %s)",
                        iid, review.review_id, ann.term,
                    )
                    continue
                raise DuplicateInstance(
                    f"instance id collision on {iid}: review {review.review_id}, "
                    f"aspect {ann.term!r} annotated with two different polarities"
                )
            seen[iid] = instance
            instances.append(instance)
    _warn_cross_split_duplicates(instances)
    return instances


def _warn_cross_split_duplicates(instances: list[AspectInstance]) -> None:
    # the source corpora are not deduplicated across splits; surface, keep
    by_text: dict[tuple[str, str], set[tuple[str, str]]] = {}
    for inst in instances:
        key = (_normalize_ws(inst.sentence), _normalize_ws(inst.aspect))
        by_text.setdefault(key, set()).add((inst.source_dataset.value, inst.source_split.value))
    dupes = [k for k, origins in by_text.items() if len(origins) > 1]
    if dupes:
        logger.warning(
            "%d (sentence, aspect) pairs appear in more than one corpus split; kept as-is",
            len(dupes),
        )
