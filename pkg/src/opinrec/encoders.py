"""Review-sequence encoders: attention LSTMs for users/neighbours, a plain LSTM for products."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import LSTMCellParams, ParamStore, Tensor


@dataclass
class ProductEncoderParams:
    cell: LSTMCellParams
    h0: Tensor
    c0: Tensor

    @classmethod
    def init(cls, rng, input_dim: int, hidden: int, prefix: str, store: ParamStore):
        cell = LSTMCellParams.init(rng, input_dim, hidden, f"{prefix}.lstm", store)
        h0 = store.add(nn.uniform_param(rng, (hidden,), f"{prefix}.h0"))
        c0 = store.add(nn.uniform_param(rng, (hidden,), f"{prefix}.c0"))
        return cls(cell, h0, c0)

    def tensors(self) -> list[Tensor]:
        return self.cell.tensors() + [self.h0, self.c0]


@dataclass
class AttentionEncoderParams(ProductEncoderParams):
    w_att: Tensor = None  # (hidden,): one scalar score per hidden state
    b_att: Tensor = None  # ()

    @classmethod
    def init(cls, rng, input_dim: int, hidden: int, prefix: str, store: ParamStore):
        base = ProductEncoderParams.init(rng, input_dim, hidden, prefix, store)
        w = store.add(nn.uniform_param(rng, (hidden,), f"{prefix}.att.w"))
        b = store.add(nn.zeros_param((), f"{prefix}.att.b"))
        return cls(base.cell, base.h0, base.c0, w, b)

    def tensors(self) -> list[Tensor]:
        return super().tensors() + [self.w_att, self.b_att]


def encode_sequence(params: ProductEncoderParams, review_vectors: Tensor) -> Tensor:
    """Run the LSTM over review vectors (n x K) from the learned initial state; returns n x d."""
    n = review_vectors.shape[0]
    if n == 0:
        raise ValueError("encode_sequence: empty review sequence")
    h, c = params.h0, params.c0
    states = []
    for i in range(n):
        h, c = nn.lstm_step(params.cell, review_vectors[i], (h, c))
        states.append(h)
    return nn.stack(states)


def attend(w_att: Tensor, b_att: Tensor, hidden_states: Tensor) -> tuple[Tensor, Tensor]:
    """u_i = tanh(w . h_i + b); alpha = softmax(u); v = sum_i alpha_i h_i."""
    if hidden_states.shape[0] == 0:
        raise ValueError("attend: no hidden states")
    u = nn.tanh(hidden_states @ w_att + b_att)
    alpha = nn.softmax(u)
    return alpha @ hidden_states, alpha


def encode_attentive(params: AttentionEncoderParams, review_vectors: Tensor) -> tuple[Tensor, Tensor]:
    return attend(params.w_att, params.b_att, encode_sequence(params, review_vectors))


def inactive_vector(hidden: int) -> Tensor:
    """Stand-in for an ablated or empty user/neighbourhood representation."""
    return Tensor(np.zeros(hidden))
