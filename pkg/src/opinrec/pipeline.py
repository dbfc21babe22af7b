"""Glue that turns raw reviews plus a pairs list into model-ready data."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import (
    DatasetSplit,
    RecommendationInstance,
    Review,
    Vocabulary,
    build_split,
    build_vocabulary,
    ingest_jsonl,
    load_instances,
    most_recent,
    read_pairs,
    save_instances,
    tokenize,
    write_pairs,
    write_reviews_jsonl,
)
from .embeddings import EmbeddingTable, load_pretrained, train_skipgram
from .neighbors import (
    DEFAULT_ETA,
    DEFAULT_TOPICS,
    TriFactorization,
    attach_neighbors,
    build_matrix,
    factorize,
    neighbor_table,
)
from .nn import save_checkpoint

log = logging.getLogger(__name__)


@dataclass
class PrepConfig:
    min_count: int = 2
    emb_dim: int = 128
    emb_epochs: int = 5
    window: int = 5
    negatives: int = 5
    topics: int = DEFAULT_TOPICS
    eta: float = DEFAULT_ETA
    sweeps: int = 200
    seq_cap: int = 30
    seed: int = 0


@dataclass
class PreparedData:
    split: DatasetSplit
    vocab: Vocabulary
    embeddings: EmbeddingTable | None
    factorization: TriFactorization
    neighbors: dict[str, list[str]] = field(default_factory=dict)
    config: PrepConfig = field(default_factory=PrepConfig)

    @property
    def context_reviews(self) -> list[Review]:
        return self.split.context_reviews()


def encode_corpus(reviews: Sequence[Review], vocab: Vocabulary) -> list[list[int]]:
    return [vocab.encode(tokenize(r.text)) for r in reviews]


def find_user_neighbors(context: Sequence[Review], cfg: PrepConfig) -> tuple[TriFactorization, dict[str, list[str]]]:
    fact = factorize(build_matrix(context), cfg.topics, cfg.sweeps, cfg.seed)
    return fact, neighbor_table(fact, cfg.eta)


def prepare(reviews: Sequence[Review], pairs: Sequence[tuple[str, str, str]], cfg: PrepConfig | None = None,
            embeddings: bool = True) -> PreparedData:
    cfg = cfg or PrepConfig()
    split = build_split(reviews, pairs, cfg.seq_cap)
    context = split.context_reviews()
    vocab = build_vocabulary(context, cfg.min_count)
    table = None
    if embeddings:
        table = train_skipgram(encode_corpus(context, vocab), vocab, cfg.emb_dim, cfg.window, cfg.negatives,
                               cfg.emb_epochs, seed=cfg.seed)
    fact, table_n = find_user_neighbors(context, cfg)
    hidden = split.held_out_review_ids
    for name in ("train", "dev", "test"):
        setattr(split, name, attach_neighbors(split.split(name), reviews, table_n, cfg.seq_cap, hidden))
    log.info("prepared %d/%d/%d instances, |V|=%d", len(split.train), len(split.dev), len(split.test), len(vocab))
    return PreparedData(split, vocab, table, fact, table_n, cfg)


# ------------------------------------------------------------------ data directory
#
# Each CLI stage reads and writes a plain directory:
#   reviews.jsonl, pairs.tsv, vocab.tsv, instances_{train,dev,test}.jsonl   (prepare)
#   embeddings.tsv                                                           (train-embeddings)
#   nmf.ckpt, neighbors.tsv, instances rewritten with neighbour sequences    (neighbors)

SPLITS = ("train", "dev", "test")


@dataclass
class DataDir:
    root: Path
    reviews: list[Review]
    pairs: list[tuple[str, str, str]]
    vocab: Vocabulary
    instances: dict[str, list]

    @property
    def split(self) -> DatasetSplit:
        return DatasetSplit(self.instances["train"], self.instances["dev"], self.instances["test"], self.reviews)

    def context_reviews(self) -> list[Review]:
        return self.split.context_reviews()

    def embeddings(self, dim: int | None = None, seed: int = 0) -> np.ndarray | None:
        path = self.root / "embeddings.tsv"
        if not path.exists():
            return None
        vecs = load_pretrained(path, self.vocab, seed).vectors
        if dim is not None and vecs.shape[1] != dim:
            raise ValueError(f"{path} has dimension {vecs.shape[1]}, model expects {dim}")
        return vecs


def load_data_dir(root) -> DataDir:
    root = Path(root)
    reviews = ingest_jsonl(root / "reviews.jsonl").records
    by_id = {r.review_id: r for r in reviews}
    instances = {s: load_instances(root / f"instances_{s}.jsonl", by_id) for s in SPLITS}
    return DataDir(root, reviews, read_pairs(root / "pairs.tsv"), Vocabulary.load_tsv(root / "vocab.tsv"), instances)


def write_split(root, split: DatasetSplit) -> None:
    for s in SPLITS:
        save_instances(Path(root) / f"instances_{s}.jsonl", split.split(s))


def stage_prepare(reviews: Sequence[Review], pairs: Sequence[tuple[str, str, str]], out,
                  min_count: int = 2, seq_cap: int = 30) -> DataDir:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    split = build_split(reviews, pairs, seq_cap)
    vocab = build_vocabulary(split.context_reviews(), min_count)
    write_reviews_jsonl(out / "reviews.jsonl", reviews)
    write_pairs(out / "pairs.tsv", pairs)
    vocab.save_tsv(out / "vocab.tsv")
    write_split(out, split)
    log.info("prepared %d/%d/%d instances, |V|=%d in %s", len(split.train), len(split.dev), len(split.test),
             len(vocab), out)
    return load_data_dir(out)


def stage_embeddings(root, dim: int = 128, epochs: int = 5, window: int = 5, negatives: int = 5,
                     seed: int = 0) -> EmbeddingTable:
    data = load_data_dir(root)
    table = train_skipgram(encode_corpus(data.context_reviews(), data.vocab), data.vocab, dim, window, negatives,
                           epochs, seed=seed)
    table.save_tsv(Path(root) / "embeddings.tsv")
    return table


def stage_neighbors(root, eta: float = DEFAULT_ETA, topics: int = DEFAULT_TOPICS, sweeps: int = 200,
                    seed: int = 0, seq_cap: int = 30) -> dict[str, list[str]]:
    root = Path(root)
    data = load_data_dir(root)
    split = data.split
    fact, table = find_user_neighbors(split.context_reviews(), PrepConfig(topics=topics, eta=eta, sweeps=sweeps,
                                                                          seed=seed))
    save_checkpoint(root / "nmf.ckpt", fact.arrays(), {"users": fact.users, "products": fact.products,
                                                       "eta": eta, "topics": topics, "sweeps": sweeps})
    with (root / "neighbors.tsv").open("w", encoding="utf-8") as fh:
        for u in sorted(table):
            fh.write(u + "\t" + ",".join(table[u]) + "\n")
    hidden = split.held_out_review_ids
    for s in SPLITS:
        setattr(split, s, attach_neighbors(split.split(s), data.reviews, table, seq_cap, hidden))
    write_split(root, split)
    return table


def write_prepared(data: PreparedData, out) -> DataDir:
    """Persist an in-memory :class:`PreparedData` in the data-directory layout."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_reviews_jsonl(out / "reviews.jsonl", data.split.reviews)
    write_pairs(out / "pairs.tsv", [(i.user_id, i.product_id, s) for s in SPLITS for i in data.split.split(s)])
    data.vocab.save_tsv(out / "vocab.tsv")
    if data.embeddings is not None:
        data.embeddings.save_tsv(out / "embeddings.tsv")
    write_split(out, data.split)
    return load_data_dir(out)


def read_neighbors(root) -> dict[str, list[str]]:
    path = Path(root) / "neighbors.tsv"
    if not path.exists():
        return {}
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        user, _, rest = line.partition("\t")
        out[user] = [n for n in rest.split(",") if n]
    return out


def query_instance(data: DataDir, user: str, product: str, cap: int = 30) -> RecommendationInstance:
    """The instance for (user, product): an existing one from any split, otherwise built from the corpus.

    A freshly built query has no gold review; a placeholder stands in for it and
    is never read on the inference path.
    """
    for s in SPLITS:
        for inst in data.instances[s]:
            if inst.key == (user, product):
                return inst
    hidden = data.split.held_out_review_ids
    visible = [r for r in data.reviews if r.review_id not in hidden]
    history = [r for r in visible if r.user_id == user and r.product_id != product]
    targets = [r for r in visible if r.product_id == product and r.user_id != user]
    if not history:
        raise ValueError(f"user {user!r} has no reviews to build a profile from")
    if not targets:
        raise ValueError(f"product {product!r} has no existing reviews")
    placeholder = Review(f"query:{user}:{product}", user, product, "(unwritten)", 0.0, 0)
    inst = RecommendationInstance(user, product, placeholder, most_recent(targets, cap), most_recent(history, cap))
    table = read_neighbors(data.root)
    if table:
        inst = attach_neighbors([inst], data.reviews, table, cap, hidden)[0]
    return inst
