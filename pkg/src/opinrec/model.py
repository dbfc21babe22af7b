"""The joint opinion-recommendation network and its configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import nn
from .corpus import BOS_ID, EOS_ID, MAX_REVIEW_TOKENS, RecommendationInstance, Review, Vocabulary, tokenize
from .encoders import AttentionEncoderParams, ProductEncoderParams, encode_attentive, encode_sequence, inactive_vector
from .generator import (
    MAX_LEN,
    DecoderParams,
    RatingHeadParams,
    clamp_rating,
    decode_greedy,
    decode_teacher_forced,
    predict_rating,
)
from .memory import MemoryHopParams, customize
from .nn import ParamStore, Tensor


@dataclass
class ModelConfig:
    emb_dim: int = 128
    hidden: int = 128
    hops: int = 3
    dropout: float = 0.2
    max_len: int = MAX_LEN
    mu: float = 1.0
    train_mu: bool = True
    stack_source: str = "greedy"
    use_user: bool = True
    use_neighbor: bool = True
    use_rating: bool = True
    use_generation: bool = True
    seed: int = 0

    def __post_init__(self):
        if not (self.use_rating or self.use_generation):
            raise ValueError("at least one of rating/generation must stay enabled")
        if not 0 <= self.hops:
            raise ValueError("hops must be >= 0")
        if self.stack_source not in ("greedy", "teacher"):
            raise ValueError(f"stack_source must be 'greedy' or 'teacher', got {self.stack_source!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Forward:
    """Everything one pass over an instance produces."""

    rating: Tensor | None
    probs: Tensor | None
    targets: np.ndarray | None
    v_C: Tensor
    beta: Tensor
    v_U: Tensor
    v_N: Tensor
    h_T: Tensor
    h_Rn: Tensor | None = None
    extras: dict = field(default_factory=dict)


class OpinionModel:
    def __init__(self, vocab: Vocabulary, config: ModelConfig | None = None, embeddings: np.ndarray | None = None):
        self.vocab = vocab
        self.config = cfg = config or ModelConfig()
        rng = np.random.default_rng(cfg.seed)
        self.params = store = ParamStore()
        if embeddings is not None:
            if embeddings.shape != (len(vocab), cfg.emb_dim):
                raise nn.ShapeError(f"embeddings {embeddings.shape} != ({len(vocab)}, {cfg.emb_dim})")
            self.embedding = store.add(Tensor(np.array(embeddings, dtype=float), requires_grad=True, name="embedding"))
        else:
            self.embedding = store.add(nn.uniform_param(rng, (len(vocab), cfg.emb_dim), "embedding"))
        d = cfg.hidden
        self.user_enc = AttentionEncoderParams.init(rng, cfg.emb_dim, d, "user", store)
        self.neighbor_enc = AttentionEncoderParams.init(rng, cfg.emb_dim, d, "neighbor", store)
        self.product_enc = ProductEncoderParams.init(rng, cfg.emb_dim, d, "product", store)
        self.memory = MemoryHopParams.init(rng, d, store)
        self.decoder = DecoderParams.init(rng, cfg.emb_dim, d, len(vocab), store)
        self.head = RatingHeadParams.init(rng, d, store, mu=cfg.mu)
        self._token_cache: dict[str, np.ndarray] = {}
        self.frozen = self._frozen_names()
        self.set_trainable_flags()

    # ------------------------------------------------------------ plumbing

    def _frozen_names(self) -> set[str]:
        cfg = self.config
        frozen: list[Tensor] = []
        if not cfg.use_user:
            frozen += self.user_enc.tensors() + [self.memory.w_U]
        if not cfg.use_neighbor:
            frozen += self.neighbor_enc.tensors() + [self.memory.w_N]
        if not cfg.use_rating:
            frozen += self.head.tensors()
        if not cfg.use_generation:
            frozen += self.decoder.tensors()
        if not cfg.train_mu:
            frozen.append(self.head.mu)
        return {t.name for t in frozen}

    def trainable(self) -> list[Tensor]:
        return [t for name, t in self.params.items() if name not in self.frozen]

    def set_trainable_flags(self) -> None:
        for name, t in self.params.items():
            t.requires_grad = name not in self.frozen

    def token_ids(self, review: Review) -> np.ndarray:
        ids = self._token_cache.get(review.review_id)
        if ids is None:
            ids = np.asarray(self.vocab.encode(tokenize(review.text)[:MAX_REVIEW_TOKENS]), dtype=np.int64)
            self._token_cache[review.review_id] = ids
        return ids

    def gold_ids(self, inst: RecommendationInstance) -> np.ndarray:
        body = self.vocab.encode(inst.gold_tokens[: self.config.max_len])
        return np.asarray([BOS_ID, *body, EOS_ID], dtype=np.int64)

    def review_vectors(self, reviews, train: bool = False, rng=None) -> Tensor:
        """Mean token embedding of each review, as one n x K tensor."""
        id_lists = [self.token_ids(r) for r in reviews]
        lengths = [len(x) for x in id_lists]
        flat = np.concatenate(id_lists) if id_lists else np.zeros(0, dtype=np.int64)
        avg = np.zeros((len(id_lists), len(flat)))
        pos = 0
        for i, n in enumerate(lengths):
            if n:
                avg[i, pos : pos + n] = 1.0 / n
            pos += n
        if len(flat) == 0:
            return Tensor(np.zeros((len(id_lists), self.config.emb_dim)))
        tok = nn.dropout(nn.embedding_lookup(self.embedding, flat), self.config.dropout, train, rng)
        return Tensor(avg) @ tok

    # ------------------------------------------------------------ encoders

    def encode_user(self, inst: RecommendationInstance, train=False, rng=None) -> tuple[Tensor, Tensor | None]:
        if not self.config.use_user:
            return inactive_vector(self.config.hidden), None
        if not inst.user_reviews:
            raise ValueError(f"instance {inst.key} has no user history")
        return encode_attentive(self.user_enc, self.review_vectors(inst.user_reviews, train, rng))

    def encode_neighborhood(self, inst: RecommendationInstance, train=False, rng=None) -> tuple[Tensor, Tensor | None]:
        if not self.config.use_neighbor or not inst.neighbor_reviews:
            return inactive_vector(self.config.hidden), None
        return encode_attentive(self.neighbor_enc, self.review_vectors(inst.neighbor_reviews, train, rng))

    def encode_product(self, inst: RecommendationInstance, train=False, rng=None) -> Tensor:
        if not inst.target_reviews:
            raise ValueError(f"instance {inst.key} has no target-product reviews")
        return encode_sequence(self.product_enc, self.review_vectors(inst.target_reviews, train, rng))

    def customize(self, inst: RecommendationInstance, train=False, rng=None):
        v_U, alpha = self.encode_user(inst, train, rng)
        v_N, alpha_n = self.encode_neighborhood(inst, train, rng)
        h_T = self.encode_product(inst, train, rng)
        v_C, beta = customize(self.memory, h_T, v_U, v_N, self.config.hops)
        return v_C, beta, v_U, v_N, h_T, {"alpha_user": alpha, "alpha_neighbor": alpha_n}

    # ------------------------------------------------------------ passes

    def forward(self, inst: RecommendationInstance, train: bool = False, rng=None) -> Forward:
        """Teacher-forced pass used for training and for loss evaluation."""
        cfg = self.config
        v_C, beta, v_U, v_N, h_T, extras = self.customize(inst, train, rng)
        probs = targets = None
        h_Rn = Tensor(np.zeros(cfg.hidden))
        if cfg.use_generation:
            gold = self.gold_ids(inst)
            probs, h_tf = decode_teacher_forced(self.decoder, self.embedding, v_C, gold, cfg.dropout, train, rng)
            targets = gold[1:]
            if cfg.use_rating:
                if cfg.stack_source == "teacher":
                    h_Rn = h_tf
                else:
                    h_Rn = decode_greedy(self.decoder, self.embedding, v_C, cfg.max_len, track_grad=True).h_last
        rating = None
        if cfg.use_rating:
            scores = [r.score for r in inst.target_reviews]
            rating = predict_rating(scores, beta, v_C, h_Rn, self.head)
        return Forward(rating, probs, targets, v_C, beta, v_U, v_N, h_T, h_Rn, extras)

    def recommend(self, inst: RecommendationInstance, max_len: int | None = None) -> dict:
        """Inference: greedy review, then a rating stacked on the generated review's last state."""
        cfg = self.config
        with nn.no_grad():
            v_C, beta, *_ = self.customize(inst)
            out = None
            h_Rn = Tensor(np.zeros(cfg.hidden))
            if cfg.use_generation:
                out = decode_greedy(self.decoder, self.embedding, v_C, max_len or cfg.max_len)
                h_Rn = out.h_last
            raw = None
            if cfg.use_rating:
                raw = predict_rating([r.score for r in inst.target_reviews], beta, v_C, h_Rn, self.head).item()
        return {
            "user_id": inst.user_id,
            "product_id": inst.product_id,
            "score": None if raw is None else clamp_rating(raw),
            "raw_score": raw,
            "tokens": [] if out is None else self.vocab.decode(out.token_ids),
            "beta": beta.data.tolist(),
            "target_review_ids": [r.review_id for r in inst.target_reviews],
            "top5": []
            if out is None
            else [[(self.vocab.itos[i], p) for i, p in step] for step in out.top5],
        }

    # ------------------------------------------------------------ persistence

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {"config": self.config.to_dict(), "vocab": self.vocab.itos, "vocab_min_count": self.vocab.min_count}
        meta.update(extra_meta or {})
        nn.save_checkpoint(path, self.params.snapshot(), meta)

    @classmethod
    def load(cls, path) -> "OpinionModel":
        arrays, meta = nn.load_checkpoint(path)
        vocab = Vocabulary(meta["vocab"][4:], min_count=meta.get("vocab_min_count", 1))
        model = cls(vocab, ModelConfig.from_dict(meta["config"]))
        model.params.load(arrays)
        model.meta = meta
        return model


def load_config_file(path) -> dict:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        try:
            import tomllib
        except ImportError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)
