"""Skip-gram word vectors with negative sampling, and review averaging."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import SPECIALS, Vocabulary

log = logging.getLogger(__name__)

EMB_DIM = 128
WINDOW = 5
NEGATIVES = 5


@dataclass
class EmbeddingTable:
    vocab: Vocabulary
    vectors: np.ndarray  # |V| x dim, the input vectors used downstream
    context: np.ndarray  # |V| x dim, output vectors used only while training
    losses: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def save_tsv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write("token\t" + "\t".join(f"v{i + 1}" for i in range(self.dim)) + "\n")
            for tok, row in zip(self.vocab.itos, self.vectors):
                fh.write(tok + "\t" + "\t".join(repr(float(x)) for x in row) + "\n")


def init_table(vocab: Vocabulary, dim: int = EMB_DIM, seed: int = 0) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    vecs = (rng.random((len(vocab), dim)) - 0.5) / dim
    return EmbeddingTable(vocab, vecs, np.zeros((len(vocab), dim)))


def load_pretrained(path, vocab: Vocabulary, seed: int = 0) -> EmbeddingTable:
    """Read a ``token<TAB>v1..vK`` file; vocabulary tokens absent from it keep random init."""
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[0] != "token":
            raise ValueError(f"{path}: expected header starting with 'token'")
        dim = len(header) - 1
        table = init_table(vocab, dim, seed)
        hits = 0
        for lineno, line in enumerate(fh, start=2):
            cols = line.rstrip("\n").split("\t")
            if len(cols) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim + 1} columns, got {len(cols)}")
            idx = vocab.stoi.get(cols[0])
            if idx is not None:
                table.vectors[idx] = np.array(cols[1:], dtype=np.float64)
                hits += 1
    log.info("loaded %d/%d vectors from %s", hits, len(vocab), path)
    return table


def _skipgram_pairs(corpus: Sequence[Sequence[int]], window: int) -> np.ndarray:
    pairs = []
    for sent in corpus:
        n = len(sent)
        for i, center in enumerate(sent):
            for j in range(max(0, i - window), min(n, i + window + 1)):
                if j != i:
                    pairs.append((center, sent[j]))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def train_skipgram(
    corpus: Sequence[Sequence[int]],
    vocab: Vocabulary,
    dim: int = EMB_DIM,
    window: int = WINDOW,
    negatives: int = NEGATIVES,
    epochs: int = 5,
    lr: float = 0.025,
    batch_size: int = 64,
    seed: int = 0,
    track_objective: bool = False,
) -> EmbeddingTable:
    """Skip-gram with negative sampling over encoded sentences.

    Negatives are drawn from the unigram distribution raised to 0.75;
    subsampling of frequent words is off. The learning rate decays linearly
    to 1e-4 of its start value over all epochs. ``table.losses`` holds the
    mean per-pair sampled loss of each epoch; with ``track_objective`` the
    exact expected loss (see :func:`skipgram_objective`) is also recorded
    after every epoch in ``table.objective``.
    """
    if not corpus or not any(len(s) for s in corpus):
        raise ValueError("empty corpus")
    table = init_table(vocab, dim, seed)
    if epochs == 0:
        return table
    if sum(len(s) for s in corpus) <= window:
        warnings.warn(f"corpus has fewer tokens than the window size {window}; training on what exists")
    rng = np.random.default_rng(seed + 1)

    noise = _noise_distribution(corpus, len(vocab))
    noise_cdf = np.cumsum(noise)

    pairs = _skipgram_pairs(corpus, window)
    if len(pairs) == 0:
        warnings.warn("no (center, context) pairs; every sentence has a single token")
        return table
    W, C = table.vectors, table.context
    total = epochs * int(np.ceil(len(pairs) / batch_size))
    step = 0
    for _ in range(epochs):
        order = rng.permutation(len(pairs))
        epoch_loss = 0.0
        for start in range(0, len(pairs), batch_size):
            batch = pairs[order[start : start + batch_size]]
            alpha = lr * max(1e-4, 1.0 - step / total)
            step += 1
            centers, ctx = batch[:, 0], batch[:, 1]
            negs = np.searchsorted(noise_cdf, rng.random((len(batch), negatives)))
            negs = np.minimum(negs, len(vocab) - 1)
            targets = np.concatenate([ctx[:, None], negs], axis=1)  # (b, 1+k)
            labels = np.zeros(targets.shape)
            labels[:, 0] = 1.0
            v = W[centers]  # (b, d)
            u = C[targets]  # (b, 1+k, d)
            scores = np.einsum("bd,bkd->bk", v, u)
            signs = 2.0 * labels - 1.0
            epoch_loss += -_log_sigmoid(signs * scores).sum()
            # d(-log sigma(s*x))/dx = -(s)(1 - sigma(s*x)) = sigma(x) - label
            g = 1.0 / (1.0 + np.exp(-scores)) - labels
            grad_v = np.einsum("bk,bkd->bd", g, u)
            grad_u = g[:, :, None] * v[:, None, :]
            np.add.at(W, centers, -alpha * grad_v)
            np.add.at(C, targets.reshape(-1), -alpha * grad_u.reshape(-1, W.shape[1]))
        table.losses.append(epoch_loss / len(pairs))
        if track_objective:
            table.objective.append(_expected_loss(W, C, pairs, noise, negatives))
        log.debug("skipgram epoch %d loss %.5f", len(table.losses), table.losses[-1])
    return table


def _noise_distribution(corpus: Sequence[Sequence[int]], size: int) -> np.ndarray:
    counts = np.zeros(size)
    for sent in corpus:
        np.add.at(counts, np.asarray(sent, dtype=np.int64), 1)
    counts[: len(SPECIALS)] = 0
    if counts.sum() == 0:
        counts[:] = 1
    noise = counts**0.75
    return noise / noise.sum()


def _expected_loss(W, C, pairs, noise, negatives) -> float:
    # mean over pairs of -log s(v.u_o) - k * E_noise[log s(-v.u_w)]
    pos = -_log_sigmoid(np.einsum("bd,bd->b", W[pairs[:, 0]], C[pairs[:, 1]]))
    centers, freq = np.unique(pairs[:, 0], return_counts=True)
    neg = -(_log_sigmoid(-(W[centers] @ C.T)) @ noise)
    return float((pos.sum() + negatives * (freq * neg).sum()) / len(pairs))


def skipgram_objective(table: EmbeddingTable, corpus: Sequence[Sequence[int]], window: int = WINDOW,
                       negatives: int = NEGATIVES) -> float:
    """Expected negative-sampling loss per (center, context) pair; no sampling noise."""
    pairs = _skipgram_pairs(corpus, window)
    noise = _noise_distribution(corpus, len(table.vectors))
    return _expected_loss(table.vectors, table.context, pairs, noise, negatives)


def embed_review(token_ids: Sequence[int], table: EmbeddingTable | np.ndarray) -> np.ndarray:
    """Arithmetic mean of the token vectors; an empty review maps to zeros."""
    vecs = table.vectors if isinstance(table, EmbeddingTable) else table
    if len(token_ids) == 0:
        log.warning("embed_review: empty review, returning zero vector")
        return np.zeros(vecs.shape[1])
    return vecs[np.asarray(token_ids, dtype=np.int64)].mean(axis=0)
