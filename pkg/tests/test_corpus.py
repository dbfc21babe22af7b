import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from opinrec.corpus import (
    SPECIALS,
    IngestError,
    Review,
    Vocabulary,
    assemble_instances,
    build_split,
    build_vocabulary,
    ingest_jsonl,
    load_instances,
    save_instances,
    tokenize,
    write_reviews_jsonl,
)


def rv(rid, user, product, score=3.0, ts=0, text="ok food"):
    return Review(rid, user, product, text, score, ts)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def record(i, **over):
    rec = {"review_id": f"r{i}", "user_id": f"u{i % 3}", "product_id": f"p{i % 4}",
           "text": f"review number {i}", "score": 1 + i % 5, "timestamp": 100 + i}
    rec.update(over)
    return json.dumps(rec)


# ---------------------------------------------------------------- ingestion


def test_ingest_three_valid_lines(tmp_path):
    path = write_lines(tmp_path / "r.jsonl", [record(i) for i in range(3)])
    res = ingest_jsonl(path)
    assert [r.review_id for r in res] == ["r0", "r1", "r2"]
    assert res.diagnostics == []


def test_score_out_of_range_is_skipped(tmp_path):
    lines = [record(i) for i in range(10)] + [record(10, score=7)]
    res = ingest_jsonl(write_lines(tmp_path / "r.jsonl", lines))
    assert len(res) == 10
    assert res.diagnostics == [(11, "score out of range: 7.0")]


def twelve_line_fixture(tmp_path):
    lines = [record(i) for i in range(12)]
    lines[3] = '{"review_id": "r3", "user_id": "u0"'  # truncated JSON
    lines[8] = record(8, text="   ")  # blank text
    return write_lines(tmp_path / "r12.jsonl", lines)


def test_twelve_line_fixture_counts(tmp_path):
    res = ingest_jsonl(twelve_line_fixture(tmp_path), max_skip_fraction=0.2)
    assert len(res.records) == 10
    assert [ln for ln, _ in res.diagnostics] == [4, 9]


def test_twelve_line_fixture_trips_default_skip_limit(tmp_path):
    # 2 of 12 is above the 10% cutoff, so the default call refuses the file
    with pytest.raises(IngestError, match="2 of 12"):
        ingest_jsonl(twelve_line_fixture(tmp_path))


def test_missing_file_is_fatal(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest_jsonl(tmp_path / "nope.jsonl")


def test_yelp_field_aliases(tmp_path):
    line = json.dumps({"review_id": "a", "user_id": "u", "business_id": "b", "text": "fine",
                       "stars": 4, "date": "2015-01-02 03:04:05"})
    (r,) = ingest_jsonl(write_lines(tmp_path / "y.jsonl", [line])).records
    assert (r.product_id, r.score) == ("b", 4.0)
    assert r.timestamp == 1420167845


def test_business_schema(tmp_path):
    path = write_lines(tmp_path / "b.jsonl", [json.dumps({"business_id": f"b{i}"}) for i in range(4)])
    assert len(ingest_jsonl(path, schema="business")) == 4


def test_ingest_write_ingest_round_trip(tmp_path):
    first = ingest_jsonl(write_lines(tmp_path / "a.jsonl", [record(i) for i in range(20)])).records
    write_reviews_jsonl(tmp_path / "b.jsonl", first)
    second = ingest_jsonl(tmp_path / "b.jsonl").records
    assert second == first


# ---------------------------------------------------------------- tokenize


@pytest.mark.parametrize(
    "text, tokens",
    [
        ("Great food!", ["great", "food", "!"]),
        ("", []),
        ("It's SO-SO.", ["it", "'s", "so", "-", "so", "."]),
        ("tabs\tand nbsp\nlines", ["tabs", "and", "nbsp", "lines"]),
    ],
)
def test_tokenize_examples(text, tokens):
    assert tokenize(text) == tokens


@given(st.text())
def test_tokenize_idempotent_on_joined_output(text):
    once = tokenize(text)
    assert tokenize(" ".join(once)) == once


# ---------------------------------------------------------------- vocabulary


def test_vocab_min_count_prunes():
    v = build_vocabulary([rv("1", "u", "p", text="a a b")], min_count=2)
    assert v.itos[4:] == ["a"]
    assert v.lookup("b") == 0


def test_vocab_empty_corpus_has_specials_only():
    v = build_vocabulary([], min_count=1)
    assert tuple(v.itos) == SPECIALS


def test_vocab_matches_brute_force_frequency():
    texts = ["the soup was hot", "the bread was stale !", "hot hot soup", "bread and soup",
             "nothing here", "the end !"]
    reviews = [rv(str(i), "u", "p", text=t) for i, t in enumerate(texts)]
    counts = {}
    for t in texts:
        for w in t.split():
            counts[w] = counts.get(w, 0) + 1
    expected = sorted([w for w, c in counts.items() if c >= 2], key=lambda w: (-counts[w], w))
    v = build_vocabulary(reviews, min_count=2)
    assert v.itos[4:] == expected
    assert all(v.itos[v.stoi[t]] == t for t in v.itos)


def test_vocab_rejects_bad_min_count():
    with pytest.raises(ValueError):
        build_vocabulary([], min_count=0)


def test_vocab_tsv_round_trip(tmp_path):
    v = build_vocabulary([rv("1", "u", "p", text="x y y z z z")], min_count=1)
    v.save_tsv(tmp_path / "v.tsv")
    back = Vocabulary.load_tsv(tmp_path / "v.tsv")
    assert back.itos == v.itos and back.counts == v.counts and back.min_count == 1


# ---------------------------------------------------------------- instances


def test_assemble_basic_pair():
    reviews = [rv("a", "u1", "p1", ts=5), rv("b", "u1", "p2", ts=3), rv("c", "u2", "p1", ts=1)]
    (inst,) = assemble_instances(reviews, [("u1", "p1")])
    assert inst.gold.review_id == "a"
    assert [r.review_id for r in inst.user_reviews] == ["b"]
    assert [r.review_id for r in inst.target_reviews] == ["c"]


def test_assemble_skips_product_with_only_gold():
    reviews = [rv("a", "u1", "p1"), rv("b", "u1", "p2")]
    diags = []
    assert assemble_instances(reviews, [("u1", "p1")], diagnostics=diags) == []
    assert "no other reviews" in diags[0]


def five_user_fixture():
    layout = {
        "u1": ["p1", "p2", "p3"],
        "u2": ["p1", "p4"],
        "u3": ["p2"],
        "u4": ["p3", "p4", "p5"],
        "u5": ["p5", "p1"],
    }
    reviews, k = [], 0
    for u, prods in layout.items():
        for p in prods:
            reviews.append(rv(f"r{k:02d}", u, p, score=float(k % 5), ts=(7 * k) % 11))
            k += 1
    return reviews


def test_assemble_counts_match_enumeration():
    reviews = five_user_fixture()
    users = sorted({r.user_id for r in reviews})
    products = sorted({r.product_id for r in reviews})
    pairs = [(u, p) for u in users for p in products]
    expected = 0
    for u, p in pairs:
        has_gold = any(r.user_id == u and r.product_id == p for r in reviews)
        others_p = any(r.product_id == p and r.user_id != u for r in reviews)
        others_u = any(r.user_id == u and r.product_id != p for r in reviews)
        expected += has_gold and others_p and others_u
    assert len(assemble_instances(reviews, pairs)) == expected == 10


def test_instances_are_leak_free_and_sorted():
    reviews = five_user_fixture()
    pairs = [(r.user_id, r.product_id) for r in reviews]
    for inst in assemble_instances(reviews, pairs):
        for seq in (inst.target_reviews, inst.user_reviews):
            assert inst.gold.review_id not in {r.review_id for r in seq}
            keys = [r.sort_key for r in seq]
            assert keys == sorted(keys)
        assert inst.gold.user_id == inst.user_id
        assert all(r.user_id == inst.user_id for r in inst.user_reviews)


def test_timestamp_ties_broken_by_review_id():
    reviews = [rv("b", "u1", "p2", ts=1), rv("a", "u1", "p3", ts=1), rv("c", "u1", "p1"), rv("d", "u2", "p1")]
    (inst,) = assemble_instances(reviews, [("u1", "p1")])
    assert [r.review_id for r in inst.user_reviews] == ["a", "b"]


def test_sequence_cap_keeps_most_recent():
    reviews = [rv(f"h{i:02d}", "u1", f"q{i}", ts=i) for i in range(40)]
    reviews += [rv("g", "u1", "p"), rv("t", "u2", "p")]
    (inst,) = assemble_instances(reviews, [("u1", "p")], cap=30)
    assert len(inst.user_reviews) == 30
    assert inst.user_reviews[0].review_id == "h10"


def test_split_hides_eval_golds_from_every_context():
    reviews = five_user_fixture()
    pairs = [("u1", "p1", "train"), ("u4", "p3", "test"), ("u2", "p4", "dev")]
    split = build_split(reviews, pairs)
    hidden = split.held_out_review_ids
    assert hidden
    for inst in split.train + split.dev + split.test:
        for seq in (inst.target_reviews, inst.user_reviews):
            assert not hidden & {r.review_id for r in seq}
    assert not hidden & {r.review_id for r in split.context_reviews()}


def test_split_rejects_duplicate_pairs():
    with pytest.raises(ValueError, match="more than once"):
        build_split(five_user_fixture(), [("u1", "p1", "train"), ("u1", "p1", "test")])


def test_instance_file_round_trip(tmp_path):
    reviews = five_user_fixture()
    insts = assemble_instances(reviews, [(r.user_id, r.product_id) for r in reviews])
    save_instances(tmp_path / "i.jsonl", insts)
    back = load_instances(tmp_path / "i.jsonl", {r.review_id: r for r in reviews})
    assert back == insts


def test_review_invariants():
    with pytest.raises(ValueError):
        rv("x", "u", "p", score=5.5)
    with pytest.raises(ValueError):
        rv("x", "u", "p", ts=-1)
    with pytest.raises(ValueError):
        rv("x", "u", "p", text="  ")

