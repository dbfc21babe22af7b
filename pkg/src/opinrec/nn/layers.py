"""LSTM cell, parameter containers and initialisers."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .autograd import DTYPE, ShapeError, Tensor, _make, _sigmoid

INIT_SCALE = 0.08


def uniform_param(rng: np.random.Generator, shape, name: str, scale: float = INIT_SCALE) -> Tensor:
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True, name=name)


def zeros_param(shape, name: str) -> Tensor:
    return Tensor(np.zeros(shape, dtype=DTYPE), requires_grad=True, name=name)


class ParamStore(OrderedDict):
    """Named trainable tensors, insertion-ordered for stable checkpoints."""

    def add(self, tensor: Tensor) -> Tensor:
        if tensor.name in self:
            raise KeyError(f"duplicate parameter name {tensor.name!r}")
        self[tensor.name] = tensor
        return tensor

    def zero_grad(self) -> None:
        for t in self.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.items()}

    def load(self, arrays: dict[str, np.ndarray]) -> None:
        for k, v in self.items():
            if arrays[k].shape != v.shape:
                raise ShapeError(f"{k}: checkpoint shape {arrays[k].shape} != {v.shape}")
            v.data = np.array(arrays[k], dtype=DTYPE)


@dataclass
class LSTMCellParams:
    """Gate weights stacked as rows [input, forget, output, candidate]."""

    weight: Tensor  # (4*hidden, input_dim + hidden)
    bias: Tensor  # (4*hidden,)

    @property
    def hidden(self) -> int:
        return self.weight.shape[0] // 4

    @property
    def input_dim(self) -> int:
        return self.weight.shape[1] - self.hidden

    @classmethod
    def init(cls, rng, input_dim: int, hidden: int, prefix: str, store: ParamStore | None = None):
        w = uniform_param(rng, (4 * hidden, input_dim + hidden), f"{prefix}.weight")
        b = uniform_param(rng, (4 * hidden,), f"{prefix}.bias")
        if store is not None:
            store.add(w)
            store.add(b)
        return cls(w, b)

    def tensors(self) -> list[Tensor]:
        return [self.weight, self.bias]


def lstm_step(params: LSTMCellParams, x: Tensor, state: tuple[Tensor, Tensor]) -> tuple[Tensor, Tensor]:
    """One step of an uncoupled-gate LSTM without peepholes.

    i, f, o = sigmoid(.), g = tanh(.), c' = f*c + i*g, h' = o*tanh(c').
    Implemented as a single fused tape node emitting a (2, hidden) block,
    which is then split into h' and c'.
    """
    h, c = state
    d = params.hidden
    if x.shape != (params.input_dim,):
        raise ShapeError(f"lstm_step: input shape {x.shape}, cell expects ({params.input_dim},)")
    if h.shape != (d,) or c.shape != (d,):
        raise ShapeError(f"lstm_step: state shapes {h.shape}/{c.shape}, cell expects ({d},)")
    W, b = params.weight.data, params.bias.data
    xh = np.concatenate([x.data, h.data])
    z = W @ xh + b
    i = _sigmoid(z[:d])
    f = _sigmoid(z[d : 2 * d])
    o = _sigmoid(z[2 * d : 3 * d])
    g = np.tanh(z[3 * d :])
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    in_dim = x.shape[0]
    c_old = c.data

    def bw(grad):
        dh, dc = grad[0], grad[1]
        dc = dc + dh * o * (1.0 - tc * tc)
        do = dh * tc
        di = dc * g
        df = dc * c_old
        dg = dc * i
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g * g)])
        dxh = W.T @ dz
        return dxh[:in_dim], dxh[in_dim:], dc * f, np.outer(dz, xh), dz

    out = _make(np.stack([h_new, c_new]), (x, h, c, params.weight, params.bias), bw)
    return out[0], out[1]
