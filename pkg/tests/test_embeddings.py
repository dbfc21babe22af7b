import numpy as np
import pytest

from opinrec.corpus import Review, build_vocabulary, tokenize
from opinrec.embeddings import (
    EmbeddingTable,
    embed_review,
    init_table,
    load_pretrained,
    skipgram_objective,
    train_skipgram,
)


def vocab_for(texts, min_count=1):
    return build_vocabulary([Review(str(i), "u", "p", t, 3.0, i) for i, t in enumerate(texts)], min_count)


def encode(texts, vocab):
    return [vocab.encode(tokenize(t)) for t in texts]


def test_zero_epochs_returns_initialisation():
    texts = ["a b c d e f"] * 3
    v = vocab_for(texts)
    table = train_skipgram(encode(texts, v), v, dim=8, epochs=0, seed=3)
    np.testing.assert_array_equal(table.vectors, init_table(v, 8, seed=3).vectors)


def test_repeated_pair_loss_decreases_over_ten_epochs():
    texts = ["a b"] * 50
    v = vocab_for(texts)
    with pytest.warns(UserWarning, match="window"):
        pass_through = train_skipgram(encode(["a b"], v), v, dim=8, epochs=1)
    assert pass_through.losses
    table = train_skipgram(encode(texts, v), v, dim=8, epochs=10, seed=0, track_objective=True)
    obj = table.objective
    assert len(obj) == 10
    assert all(b < a for a, b in zip(obj, obj[1:]))
    assert skipgram_objective(table, encode(texts, v)) == pytest.approx(obj[-1])


def test_epoch_averaged_sampled_loss_trends_down():
    rng = np.random.default_rng(1)
    texts = [" ".join(rng.choice(list("abcdefgh"), 10)) for _ in range(100)]
    v = vocab_for(texts)
    losses = train_skipgram(encode(texts, v), v, dim=8, epochs=6, seed=0).losses
    assert np.mean(losses[3:]) < np.mean(losses[:3])


def test_topic_clusters_separate():
    rng = np.random.default_rng(0)
    left = ["apple", "pear", "plum", "fig", "kiwi"]
    right = ["bolt", "nut", "screw", "gear", "rivet"]
    texts = [" ".join(rng.choice(pool, 8)) for pool in (left, right) for _ in range(150)]
    v = vocab_for(texts)
    table = train_skipgram(encode(texts, v), v, dim=16, epochs=5, seed=0)
    E = table.vectors / np.linalg.norm(table.vectors, axis=1, keepdims=True)
    ids_l = [v.stoi[w] for w in left]
    ids_r = [v.stoi[w] for w in right]

    def mean_cos(a, b, same):
        vals = [E[i] @ E[j] for i in a for j in b if not (same and i == j)]
        return float(np.mean(vals))

    intra = (mean_cos(ids_l, ids_l, True) + mean_cos(ids_r, ids_r, True)) / 2
    inter = mean_cos(ids_l, ids_r, False)
    assert intra > inter


def test_training_is_deterministic():
    texts = ["the cat sat on the mat", "the dog sat on the log"] * 10
    v = vocab_for(texts)
    a = train_skipgram(encode(texts, v), v, dim=8, epochs=2, seed=7)
    b = train_skipgram(encode(texts, v), v, dim=8, epochs=2, seed=7)
    np.testing.assert_array_equal(a.vectors, b.vectors)


def test_empty_corpus_rejected():
    v = vocab_for([])
    with pytest.raises(ValueError):
        train_skipgram([], v)


# ---------------------------------------------------------------- embed_review


def test_single_token_review_is_its_embedding(rng):
    E = rng.normal(size=(6, 4))
    np.testing.assert_array_equal(embed_review([3], E), E[3])


def test_opposite_vectors_cancel():
    E = np.array([[1.0, -2.0, 0.5], [-1.0, 2.0, -0.5]])
    np.testing.assert_array_equal(embed_review([0, 1], E), np.zeros(3))


def test_five_token_mean_matches_summation(rng):
    E = rng.normal(size=(10, 5))
    ids = [1, 4, 4, 7, 9]
    total = [0.0] * 5
    for i in ids:
        for k in range(5):
            total[k] += E[i, k]
    np.testing.assert_allclose(embed_review(ids, E), [t / 5 for t in total], rtol=1e-14)


def test_empty_review_gives_zeros(rng, caplog):
    assert not embed_review([], rng.normal(size=(3, 4))).any()
    assert "empty review" in caplog.text


def test_mean_is_permutation_invariant_and_bounded(rng):
    E = rng.normal(size=(20, 6))
    ids = list(rng.integers(0, 20, size=9))
    m = embed_review(ids, E)
    np.testing.assert_allclose(embed_review(ids[::-1], E), m, rtol=1e-13)
    assert np.linalg.norm(m) <= np.linalg.norm(E[ids], axis=1).max() + 1e-12


def test_tsv_round_trip(tmp_path, rng):
    v = vocab_for(["x y z"])
    table = EmbeddingTable(v, rng.normal(size=(len(v), 4)), np.zeros((len(v), 4)))
    table.save_tsv(tmp_path / "e.tsv")
    header = (tmp_path / "e.tsv").read_text().splitlines()[0]
    assert header == "token\tv1\tv2\tv3\tv4"
    back = load_pretrained(tmp_path / "e.tsv", v)
    np.testing.assert_array_equal(back.vectors, table.vectors)
