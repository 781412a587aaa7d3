import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perioparse.corpus import AnnotatedNote, Note
from perioparse.extraction import (
    PredictionFileError,
    RuleExtractor,
    detect_status_rulebased,
    extract_entities,
    extract_statements,
    load_external_predictions,
    reconstruct,
    tokenize,
)
from perioparse.model import (
    Dimension,
    Extent,
    Grade,
    PeriodontalStatus,
    Stage,
    Subtype,
    span_violations,
)

P, G, H = (
    PeriodontalStatus.PERIODONTITIS,
    PeriodontalStatus.GINGIVITIS,
    PeriodontalStatus.HEALTH,
)


def spans_of(text, mode="strict"):
    return [(s.dimension, s.value, s.raw_text) for s in extract_entities(text, mode)]


# --------------------------------------------------------------------------
# tokenizer

def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_offsets():
    tokens = tokenize("Stage I Grade A")
    assert [(t.text, t.start, t.end) for t in tokens] == [
        ("Stage", 0, 5),
        ("I", 6, 7),
        ("Grade", 8, 13),
        ("A", 14, 15),
    ]


def test_tokenize_punctuation_and_round_trip():
    text = "D: Localized"
    tokens = tokenize(text)
    assert [(t.text, t.start, t.end) for t in tokens] == [
        ("D", 0, 1),
        (":", 1, 2),
        ("Localized", 3, 12),
    ]
    assert reconstruct(text, tokens) == text


@settings(max_examples=500, deadline=None)
@given(text=st.text(max_size=120))
def test_tokenizer_round_trip_property(text):
    tokens = tokenize(text)
    assert reconstruct(text, tokens) == text
    for tok in tokens:
        assert text[tok.start : tok.end] == tok.text


def test_no_character_in_two_tokens():
    tokens = tokenize("a,b  c..d e")
    covered = []
    for t in tokens:
        covered.extend(range(t.start, t.end))
    assert len(covered) == len(set(covered))


# --------------------------------------------------------------------------
# rule-based status detector

def test_detector_single_keyword():
    assert detect_status_rulebased("generalized gingivitis on an intact periodontium") is G


def test_detector_severity_tie_break():
    text = "History of gingivitis. Today: periodontitis noted."
    assert detect_status_rulebased(text) is P


def test_detector_no_keyword():
    assert detect_status_rulebased("patient presents for recall") is None


def test_detector_health_needs_periodontal_context():
    assert detect_status_rulebased("patient in good general health") is None
    assert detect_status_rulebased("gingival health maintained") is H
    assert detect_status_rulebased("healthy periodontium observed") is H


def test_detector_subtype_periodontitis_is_not_a_status():
    text = "gingival health on reduced periodontium with stable periodontitis"
    assert detect_status_rulebased(text) is H
    assert detect_status_rulebased("reduced periodontium, non-periodontitis, gingival health") is H


# --------------------------------------------------------------------------
# grammar fixtures

def test_recession_distractor_absorbs_extent():
    text = "D: Localized Periodontitis Stage I Grade A with Generalized Recession"
    assert spans_of(text) == [
        (Dimension.EXTENT, Extent.LOCALIZED, "Localized"),
        (Dimension.STATUS, P, "Periodontitis"),
        (Dimension.STAGE, Stage.I, "I"),
        (Dimension.GRADE, Grade.A, "A"),
    ]


def test_sentence_initial_diagnosis():
    text = "Generalized Stage 3 Grade B"
    assert spans_of(text) == [
        (Dimension.EXTENT, Extent.GENERALIZED, "Generalized"),
        (Dimension.STAGE, Stage.III, "3"),
        (Dimension.GRADE, Grade.B, "B"),
    ]


def test_informal_bare_roman_and_letter():
    text = "Generalized III B"
    assert spans_of(text, "strict") == []
    assert spans_of(text, "informal") == [
        (Dimension.EXTENT, Extent.GENERALIZED, "Generalized"),
        (Dimension.STAGE, Stage.III, "III"),
        (Dimension.GRADE, Grade.B, "B"),
    ]


def test_informal_stage_arabic_bare_grade():
    assert spans_of("D: Stage 3 B", "informal") == [
        (Dimension.STAGE, Stage.III, "3"),
        (Dimension.GRADE, Grade.B, "B"),
    ]
    assert spans_of("D: Stage 3 B", "strict") == [(Dimension.STAGE, Stage.III, "3")]


def test_hedged_statement_still_yields_spans():
    statements = extract_statements(
        "Diagnosis: Stage III Grade B but to be confirmed with radiographs"
    )
    assert len(statements) == 1
    assert statements[0].hedged is True
    assert [(s.dimension, s.value) for s in statements[0].spans] == [
        (Dimension.STAGE, Stage.III),
        (Dimension.GRADE, Grade.B),
    ]


def test_unhedged_statement_not_flagged():
    statements = extract_statements("D: Periodontitis Stage II Grade A.")
    assert statements[0].hedged is False


def test_empty_and_unparseable_text():
    assert extract_entities("") == []
    assert extract_entities("Patient brushing well, no findings today.") == []


def test_multi_diagnosis_two_statements():
    text = "D: Localized Periodontitis Stage I Grade A and Generalized Periodontitis Stage II Grade B"
    statements = extract_statements(text)
    assert len(statements) == 2
    first, second = statements
    assert {(s.dimension, s.value) for s in first.spans} == {
        (Dimension.STATUS, P),
        (Dimension.STAGE, Stage.I),
        (Dimension.GRADE, Grade.A),
        (Dimension.EXTENT, Extent.LOCALIZED),
    }
    assert {(s.dimension, s.value) for s in second.spans} == {
        (Dimension.STATUS, P),
        (Dimension.STAGE, Stage.II),
        (Dimension.GRADE, Grade.B),
        (Dimension.EXTENT, Extent.GENERALIZED),
    }


def test_subtype_phrases():
    assert (Dimension.SUBTYPE, Subtype.INTACT_PERIODONTIUM, "intact periodontium") in spans_of(
        "D: Gingival health on an intact periodontium."
    )
    spans = spans_of("D: Gingivitis on a reduced periodontium with stable periodontitis.")
    assert (Dimension.STATUS, G, "Gingivitis") in spans
    assert any(
        d is Dimension.SUBTYPE and v is Subtype.REDUCED_PERIODONTIUM_STABLE_PERIODONTITIS
        for d, v, _ in spans
    )
    # the "periodontitis" inside the subtype phrase is not a status
    assert all(v is not P for d, v, _ in spans if d is Dimension.STATUS)


def test_typo_tolerance_in_entity_words():
    spans = spans_of("D: Generalzed Periodontits Stge III Grade B.")
    assert (Dimension.EXTENT, Extent.GENERALIZED, "Generalzed") in spans
    assert (Dimension.STATUS, P, "Periodontits") in spans
    assert (Dimension.STAGE, Stage.III, "III") in spans


def test_anchor_variants():
    for anchor in ("D:", "D-", "Dx:", "Diagnosis:"):
        spans = spans_of(f"{anchor} Periodontitis Stage II Grade A.")
        assert (Dimension.STATUS, P, "Periodontitis") in spans, anchor


def test_spans_satisfy_invariants_and_do_not_overlap():
    text = (
        "Exam completed. D: Localized Periodontitis Stage IV Grade C with Generalized "
        "Recession. Dx: Generalized Gingivitis on a reduced periodontium, non-periodontitis."
    )
    spans = extract_entities(text, "informal")
    assert spans
    assert span_violations(text, spans) == []


def test_appending_unrelated_text_is_harmless():
    base = "D: Localized Periodontitis Stage I Grade A."
    extended = base + " Patient was advised to continue current home care."
    assert spans_of(base, "informal") == spans_of(extended, "informal")


def test_strict_is_subset_of_informal():
    texts = [
        "D: Localized Periodontitis Stage I Grade A with Generalized Recession",
        "Generalized III B",
        "D: Stage 3 B",
        "Generalized Stage 3 Grade B",
        "D: Gingival health on an intact periodontium.",
    ]
    for text in texts:
        strict = {(s.dimension, s.start, s.end, s.value) for s in extract_entities(text)}
        informal = {
            (s.dimension, s.start, s.end, s.value) for s in extract_entities(text, "informal")
        }
        assert strict <= informal, text


def test_rule_extractor_interface():
    extractor = RuleExtractor(mode="informal")
    spans = extractor.extract("Generalized III B")
    assert spans == extractor.extract("Generalized III B")  # deterministic
    assert len(spans) == 3


def test_invalid_mode_rejected():
    with pytest.raises(ValueError):
        extract_entities("x", mode="fuzzy")


# --------------------------------------------------------------------------
# external predictions

@pytest.fixture
def small_corpus():
    return [
        AnnotatedNote(note=Note("n-1", "site1", "D: Periodontitis Stage II Grade A.")),
        AnnotatedNote(note=Note("n-2", "site1", "D: Generalized Gingivitis.")),
        AnnotatedNote(note=Note("n-3", "site1", "No diagnosis.")),
    ]


def write_predictions(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")


def test_load_predictions_happy_path(tmp_path, small_corpus):
    path = tmp_path / "preds.jsonl"
    write_predictions(
        path,
        [
            {"note_id": "n-1", "spans": [{"dimension": "Stage", "value": "II", "start": 23, "end": 25}]},
            {"note_id": "n-2", "spans": [{"dimension": "Extent", "value": "Generalized", "start": 3, "end": 14}]},
            {"note_id": "n-3", "spans": []},
        ],
    )
    loaded = load_external_predictions(path, small_corpus)
    assert set(loaded) == {"n-1", "n-2", "n-3"}
    assert loaded["n-1"][0].raw_text == "II"


def test_load_predictions_unknown_note_id(tmp_path, small_corpus):
    path = tmp_path / "preds.jsonl"
    write_predictions(path, [{"note_id": "ghost", "spans": []}])
    with pytest.raises(PredictionFileError, match="ghost"):
        load_external_predictions(path, small_corpus)


def test_load_predictions_out_of_bounds(tmp_path, small_corpus):
    path = tmp_path / "preds.jsonl"
    write_predictions(
        path,
        [{"note_id": "n-1", "spans": [{"dimension": "Stage", "value": "II", "start": 23, "end": 999}]}],
    )
    with pytest.raises(PredictionFileError, match="n-1"):
        load_external_predictions(path, small_corpus)


def test_load_predictions_raw_text_mismatch(tmp_path, small_corpus):
    path = tmp_path / "preds.jsonl"
    write_predictions(
        path,
        [
            {
                "note_id": "n-1",
                "spans": [
                    {"dimension": "Stage", "value": "II", "start": 23, "end": 25, "raw_text": "IX"}
                ],
            }
        ],
    )
    with pytest.raises(PredictionFileError, match="raw_text"):
        load_external_predictions(path, small_corpus)
