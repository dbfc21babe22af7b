"""Review decoder and the stacked rating head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .corpus import BOS_ID, EOS_ID
from .nn import LSTMCellParams, ParamStore, Tensor

MAX_LEN = 60


@dataclass
class DecoderParams:
    cell: LSTMCellParams  # input = emb_dim + hidden
    out_w: Tensor  # (|V|, hidden)
    out_b: Tensor  # (|V|,)

    @classmethod
    def init(cls, rng, emb_dim: int, hidden: int, vocab_size: int, store: ParamStore, prefix="decoder"):
        cell = LSTMCellParams.init(rng, emb_dim + hidden, hidden, f"{prefix}.lstm", store)
        w = store.add(nn.uniform_param(rng, (vocab_size, hidden), f"{prefix}.out.w"))
        b = store.add(nn.zeros_param((vocab_size,), f"{prefix}.out.b"))
        return cls(cell, w, b)

    @property
    def hidden(self) -> int:
        return self.cell.hidden

    def tensors(self) -> list[Tensor]:
        return self.cell.tensors() + [self.out_w, self.out_b]


@dataclass
class RatingHeadParams:
    mu: Tensor  # ()
    w_S: Tensor  # (2 * hidden,) over v_C ++ h_Rn
    b_S: Tensor  # ()

    @classmethod
    def init(cls, rng, hidden: int, store: ParamStore, mu: float = 1.0, prefix="rating"):
        m = store.add(nn.Tensor(np.array(mu), requires_grad=True, name=f"{prefix}.mu"))
        w = store.add(nn.uniform_param(rng, (2 * hidden,), f"{prefix}.w_S"))
        b = store.add(nn.zeros_param((), f"{prefix}.b_S"))
        return cls(m, w, b)

    def tensors(self) -> list[Tensor]:
        return [self.mu, self.w_S, self.b_S]


def _zero_state(d: int) -> tuple[Tensor, Tensor]:
    return Tensor(np.zeros(d)), Tensor(np.zeros(d))


def decode_teacher_forced(
    params: DecoderParams,
    embedding: Tensor,
    v_C: Tensor,
    gold_ids,
    drop: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Score a gold sequence [BOS, w_1 .. w_m, EOS].

    Step j consumes embedding(gold[j-1]) ++ v_C and emits a distribution over
    the vocabulary for gold[j]. Returns the (m+1) x |V| distributions and the
    final decoder hidden state.
    """
    gold_ids = np.asarray(gold_ids, dtype=np.int64)
    if len(gold_ids) < 2 or gold_ids[0] != BOS_ID or gold_ids[-1] != EOS_ID:
        raise ValueError("gold sequence must be wrapped in BOS ... EOS")
    inputs = nn.dropout(nn.embedding_lookup(embedding, gold_ids[:-1]), drop, train, rng)
    h, c = _zero_state(params.hidden)
    states = []
    for j in range(len(gold_ids) - 1):
        h, c = nn.lstm_step(params.cell, nn.concat([inputs[j], v_C]), (h, c))
        states.append(h)
    logits = nn.stack(states) @ nn.transpose(params.out_w) + params.out_b
    return nn.softmax(logits, axis=-1), h


@dataclass
class GreedyOutput:
    token_ids: list[int]
    h_last: Tensor
    top5: list[list[tuple[int, float]]]


def decode_greedy(
    params: DecoderParams,
    embedding: Tensor,
    v_C: Tensor,
    max_len: int = MAX_LEN,
    suppress: tuple[int, ...] = (),
    track_grad: bool = False,
) -> GreedyOutput:
    """Argmax decoding until EOS or ``max_len`` emitted tokens (EOS is not emitted).

    ``suppress`` lists token ids that may never be chosen (the top-5 record
    still shows the unmodified distribution). With ``track_grad`` the hidden
    states stay on the tape, so a loss on ``h_last`` reaches the decoder
    weights and ``v_C``; token choices themselves are not differentiated.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if not track_grad:
        with nn.no_grad():
            return _greedy(params, embedding, v_C, max_len, suppress)
    return _greedy(params, embedding, v_C, max_len, suppress)


def _greedy(params, embedding, v_C, max_len, suppress):
    h, c = _zero_state(params.hidden)
    prev = BOS_ID
    out, top = [], []
    W, b = params.out_w.data, params.out_b.data
    for _ in range(max_len):
        x = nn.concat([embedding[prev], v_C])
        h, c = nn.lstm_step(params.cell, x, (h, c))
        logits = W @ h.data + b
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        order = np.argsort(-probs, kind="stable")[:5]
        top.append([(int(i), float(probs[i])) for i in order])
        if suppress:
            logits = logits.copy()
            logits[list(suppress)] = -np.inf
        tok = int(np.argmax(logits))
        if tok == EOS_ID:
            break
        out.append(tok)
        prev = tok
    return GreedyOutput(out, h, top)


def predict_rating(scores, beta: Tensor, v_C: Tensor, h_Rn: Tensor, head: RatingHeadParams) -> Tensor:
    """sum_i beta_i s_i + mu * tanh(w_S . (v_C ++ h_Rn) + b_S), unclamped."""
    s = Tensor(np.asarray(scores, dtype=np.float64))
    if s.shape != beta.shape:
        raise ValueError(f"predict_rating: {s.shape[0]} scores vs {beta.shape} weights")
    shift = nn.tanh(head.w_S @ nn.concat([v_C, h_Rn]) + head.b_S)
    return beta @ s + head.mu * shift


def clamp_rating(y: float) -> float:
    return float(min(5.0, max(0.0, y)))
