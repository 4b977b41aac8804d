"""Parsing and cleanup of the two raw review-corpus formats."""

from __future__ import annotations

import logging

import pytest

from alsc_cr.errors import (
    DuplicateInstance,
    MalformedXml,
    SchemaViolation,
    UnknownPolarityLabel,
)
from alsc_cr.ingest import clean, parse_mams_xml, parse_semeval_xml
from alsc_cr.records import (
    Polarity,
    SourceDataset,
    Split,
    read_instances,
    write_instances,
)

REST16_DOC = b"""<?xml version="1.0" encoding="UTF-8"?>
<Reviews>
  <Review rid="1004293">
    <sentences>
      <sentence id="1004293:0">
        <text>The soup was great, but the staff was rude.</text>
        <Opinions>
          <Opinion target="soup" category="FOOD#QUALITY" polarity="positive" from="4" to="8"/>
          <Opinion target="staff" category="SERVICE#GENERAL" polarity="negative" from="28" to="33"/>
          <Opinion target="NULL" category="AMBIENCE#GENERAL" polarity="negative" from="0" to="0"/>
        </Opinions>
      </sentence>
      <sentence id="1004293:1">
        <text>Nothing to add.</text>
      </sentence>
    </sentences>
  </Review>
</Reviews>
"""

MAMS_DOC = b"""<?xml version="1.0"?>
<sentences>
  <sentence>
    <text>The decor is dull but the food shines.</text>
    <aspectTerms>
      <aspectTerm term="decor" polarity="negative" from="4" to="9"/>
      <aspectTerm term="food" polarity="positive" from="26" to="30"/>
    </aspectTerms>
  </sentence>
  <sentence>
    <text>Portions are average here.</text>
    <aspectTerms>
      <aspectTerm term="Portions" polarity="neutral" from="0" to="8"/>
    </aspectTerms>
  </sentence>
</sentences>
"""


def test_parse_semeval_happy_path():
    reviews = parse_semeval_xml(REST16_DOC, Split.TRAIN)
    assert len(reviews) == 2
    first = reviews[0]
    assert first.review_id == "1004293:0"
    assert first.source_dataset is SourceDataset.REST16
    assert first.source_split is Split.TRAIN
    # the NULL target carries no span and is dropped at parse time
    assert [a.term for a in first.aspect_annotations] == ["soup", "staff"]
    assert first.aspect_annotations[0].polarity_label == "positive"
    assert reviews[1].aspect_annotations == ()


def test_parse_mams_happy_path_and_positional_ids():
    reviews = parse_mams_xml(MAMS_DOC, Split.VAL)
    assert len(reviews) == 2
    assert [r.review_id for r in reviews] == ["00000", "00001"]
    assert reviews[0].source_dataset is SourceDataset.MAMS
    assert [a.term for a in reviews[0].aspect_annotations] == ["decor", "food"]
    assert reviews[1].aspect_annotations[0].polarity_label == "neutral"


def test_malformed_xml():
    with pytest.raises(MalformedXml):
        parse_semeval_xml(b"<Reviews><sentence>", Split.TRAIN)


def test_missing_attribute_is_schema_violation():
    doc = b'<sentences><sentence><text>Hi there now.</text><aspectTerms><aspectTerm term="Hi" from="0" to="2"/></aspectTerms></sentence></sentences>'
    with pytest.raises(SchemaViolation, match="polarity"):
        parse_mams_xml(doc, Split.TRAIN)


def test_missing_text_is_schema_violation():
    doc = b'<Reviews><sentence id="a:0"><Opinions/></sentence></Reviews>'
    with pytest.raises(SchemaViolation, match="text"):
        parse_semeval_xml(doc, Split.TRAIN)


def test_span_outside_sentence_is_schema_violation():
    doc = b'<sentences><sentence><text>Tiny.</text><aspectTerms><aspectTerm term="Tiny" polarity="neutral" from="0" to="99"/></aspectTerms></sentence></sentences>'
    with pytest.raises(SchemaViolation, match="span"):
        parse_mams_xml(doc, Split.TRAIN)


def test_span_term_mismatch_is_schema_violation():
    doc = b'<sentences><sentence><text>The soup is hot.</text><aspectTerms><aspectTerm term="soup" polarity="neutral" from="0" to="4"/></aspectTerms></sentence></sentences>'
    with pytest.raises(SchemaViolation, match="does not match"):
        parse_mams_xml(doc, Split.TRAIN)


def test_clean_resolves_polarities_and_assigns_ids():
    instances = clean(parse_semeval_xml(REST16_DOC, Split.TRAIN))
    assert len(instances) == 2
    soup, staff = instances
    assert soup.polarity is Polarity.POSITIVE
    assert staff.polarity is Polarity.NEGATIVE
    assert soup.aspect == "soup"
    assert soup.sentence == "The soup was great, but the staff was rude."
    assert len(soup.instance_id) == 16
    assert soup.instance_id != staff.instance_id


def test_clean_is_case_and_whitespace_tolerant_on_labels():
    doc = b'<sentences><sentence><text>The soup is hot.</text><aspectTerms><aspectTerm term="soup" polarity=" Positive " from="4" to="8"/></aspectTerms></sentence></sentences>'
    instances = clean(parse_mams_xml(doc, Split.TRAIN))
    assert instances[0].polarity is Polarity.POSITIVE


def test_clean_drops_conflict_annotations():
    doc = b'<sentences><sentence><text>The soup is hot.</text><aspectTerms><aspectTerm term="soup" polarity="conflict" from="4" to="8"/></aspectTerms></sentence></sentences>'
    assert clean(parse_mams_xml(doc, Split.TRAIN)) == []


def test_clean_rejects_unknown_labels():
    doc = b'<sentences><sentence><text>The soup is hot.</text><aspectTerms><aspectTerm term="soup" polarity="mixed" from="4" to="8"/></aspectTerms></sentence></sentences>'
    with pytest.raises(UnknownPolarityLabel, match="mixed"):
        clean(parse_mams_xml(doc, Split.TRAIN))


def test_clean_drops_exact_duplicates_keeps_first(caplog):
    doc = (
        b'<sentences><sentence><text>The soup is hot.</text><aspectTerms>'
        b'<aspectTerm term="soup" polarity="positive" from="4" to="8"/>'
        b'<aspectTerm term="soup" polarity="positive" from="4" to="8"/>'
        b"</aspectTerms></sentence></sentences>"
    )
    with caplog.at_level(logging.WARNING):
        instances = clean(parse_mams_xml(doc, Split.TRAIN))
    assert len(instances) == 1
    assert any("duplicate" in rec.message for rec in caplog.records)


def test_clean_rejects_conflicting_duplicate_polarities():
    doc = (
        b'<sentences><sentence><text>The soup is hot.</text><aspectTerms>'
        b'<aspectTerm term="soup" polarity="positive" from="4" to="8"/>'
        b'<aspectTerm term="soup" polarity="negative" from="4" to="8"/>'
        b"</aspectTerms></sentence></sentences>"
    )
    with pytest.raises(DuplicateInstance):
        clean(parse_mams_xml(doc, Split.TRAIN))


def test_clean_warns_on_cross_split_text_duplicates(caplog):
    doc = b'<sentences><sentence><text>The soup is hot.</text><aspectTerms><aspectTerm term="soup" polarity="positive" from="4" to="8"/></aspectTerms></sentence></sentences>'
    both = parse_mams_xml(doc, Split.TRAIN) + parse_mams_xml(doc, Split.VAL)
    with caplog.at_level(logging.WARNING):
        instances = clean(both)
    assert len(instances) == 2  # kept, only surfaced
    assert any("more than one corpus split" in rec.message for rec in caplog.records)


def test_instance_jsonl_round_trip_is_deterministic(tmp_path):
    instances = clean(
        parse_semeval_xml(REST16_DOC, Split.TRAIN) + parse_mams_xml(MAMS_DOC, Split.VAL)
    )
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert write_instances(instances, p1) == len(instances)
    assert read_instances(p1) == instances
    write_instances(instances, p2)
    assert p1.read_bytes() == p2.read_bytes()
