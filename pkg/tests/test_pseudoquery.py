import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coronet.errors import ContractError, EmptyQueryError, ParseError, ValidationError
from coronet.proposal import MomentSpan
from coronet.pseudoquery import (PAD, UNK, Detection, PseudoQuery, Vocabulary, queries_to_jsonl,
                                 read_detections, read_query_corpus, select_seed_concepts,
                                 simplify_query, top_k_objects)


def test_top_k_by_max_confidence_in_span():
    dets = [Detection(0, "cup", 0.9), Detection(1, "cup", 0.5), Detection(1, "table", 0.7),
            Detection(2, "lamp", 0.99), Detection(3, "mug", 0.95)]
    q = top_k_objects(dets, MomentSpan(0.0, 0.5), 5, 4)
    assert q.tokens == ("cup", "table")
    assert top_k_objects(dets, MomentSpan(0.0, 1.0), 2, 4).tokens == ("lamp", "mug")


def test_ties_break_alphabetically():
    dets = [Detection(0, "zebra", 0.8), Detection(0, "apple", 0.8), Detection(0, "mango", 0.8)]
    assert top_k_objects(dets, MomentSpan(0, 1), 2, 1).tokens == ("apple", "mango")


def test_empty_span_raises():
    with pytest.raises(EmptyQueryError):
        top_k_objects([Detection(3, "cup", 0.9)], MomentSpan(0.0, 0.5), 5, 4)


label = st.sampled_from(["cup", "table", "door", "lamp", "book", "bed"])
detection = st.builds(Detection, st.integers(0, 15), label, st.floats(0.0, 1.0))


@settings(max_examples=80, deadline=None)
@given(st.lists(detection, min_size=1, max_size=40), st.integers(1, 6))
def test_top_k_properties(dets, k):
    span = MomentSpan(0.0, 1.0)
    q = top_k_objects(dets, span, k, 16)
    assert 1 <= len(q.tokens) <= k and len(set(q.tokens)) == len(q.tokens)
    best = {}
    for d in dets:
        best[d.label] = max(best.get(d.label, -1), d.confidence)
    scores = [best[t] for t in q.tokens]
    assert scores == sorted(scores, reverse=True)
    # nothing left out scores higher than the weakest kept token
    assert all(v <= scores[-1] for t, v in best.items() if t not in q.tokens)


def test_pseudo_query_invariants():
    with pytest.raises(ValidationError):
        PseudoQuery((), MomentSpan(0, 1))
    with pytest.raises(ValidationError):
        PseudoQuery(("a", "a"), MomentSpan(0, 1))


def test_vocabulary_reserved_ids_and_roundtrip():
    v = Vocabulary(["cup", "table"])
    assert v.encode(["<pad>"]) == [PAD] and v.encode(["nope"]) == [UNK]
    assert v.encode(["cup", "table"]) == [2, 3]
    assert v.decode(v.encode(["table", "cup"])) == ["table", "cup"]
    assert "cup" in v and "<unk>" not in v
    with pytest.raises(ContractError):
        v.decode([7])


def test_vocabulary_from_corpus_sorted():
    qs = [PseudoQuery(("table", "cup"), MomentSpan(0, 1)), PseudoQuery(("bed",), MomentSpan(0, 1))]
    assert Vocabulary.from_corpus(qs).tokens == ["bed", "cup", "table"]


def test_select_seed_concepts():
    qs = [("cup", "table"), ("cup",), ("door", "table"), ("cup", "bed")]
    assert select_seed_concepts(qs, 3) == ["cup", "table", "bed"]
    assert select_seed_concepts(qs, 10) == ["cup", "table", "bed", "door"]


def test_simplify_query():
    lex = {"cup", "table", "coffee_table", "door"}
    assert simplify_query("A person puts the cup on the coffee table.", lex) == \
        ["cup", "coffee_table"]
    assert simplify_query("Door, door, DOOR!", lex) == ["door"]
    assert simplify_query("nothing here", lex) == []
    assert simplify_query("cup table door", lex, k=2) == ["cup", "table"]


def test_detection_manifest(tmp_path):
    path = tmp_path / "d.jsonl"
    rows = [{"header": {"x": 1}},
            {"video_id": "v", "frame_index": 0, "label": "Coffee Table", "confidence": 0.5}]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n\n")
    assert read_detections(path) == {"v": [Detection(0, "coffee_table", 0.5)]}
    path.write_text('{"video_id": "v", "frame_index": 0}\n')
    with pytest.raises(ParseError, match="line 1"):
        read_detections(path)


def test_query_corpus_roundtrip(tmp_path):
    rows = [("v1", PseudoQuery(("cup", "table"), MomentSpan(0.25, 0.5)))]
    path = tmp_path / "pq.jsonl"
    path.write_text(queries_to_jsonl(rows, header={"k": 5}))
    assert read_query_corpus(path) == [rows[0][1]]
