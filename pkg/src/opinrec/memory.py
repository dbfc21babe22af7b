"""Multi-hop memory attention that customises the product states for one user."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import ParamStore, Tensor

MAX_HOPS = 5


@dataclass
class MemoryHopParams:
    """One parameter set shared by every hop.

    Each weight is a (d,) row, so a hop scores product state i as
    tanh(w_T.h_i + w_C.v_C + w_U.v_U + w_N.v_N + b), a scalar.
    """

    w_T: Tensor
    w_C: Tensor
    w_U: Tensor
    w_N: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng, hidden: int, store: ParamStore, prefix="memory"):
        ws = [store.add(nn.uniform_param(rng, (hidden,), f"{prefix}.{k}")) for k in ("w_T", "w_C", "w_U", "w_N")]
        b = store.add(nn.zeros_param((), f"{prefix}.b"))
        return cls(*ws, b)

    def tensors(self) -> list[Tensor]:
        return [self.w_T, self.w_C, self.w_U, self.w_N, self.b]


def hop_scores(params: MemoryHopParams, h_T: Tensor, v_C: Tensor, v_U: Tensor, v_N: Tensor) -> Tensor:
    # the query terms are shared by every state; only w_T . h_i varies with i
    query = params.w_C @ v_C + params.w_U @ v_U + params.w_N @ v_N + params.b
    return nn.tanh(h_T @ params.w_T + query)


def customize(
    params: MemoryHopParams, h_T: Tensor, v_U: Tensor, v_N: Tensor, hops: int
) -> tuple[Tensor, Tensor]:
    """Return the customised product vector v_C and the final-hop weights beta.

    v_C starts as the mean of the product states; each hop rescores every
    state against (v_C, v_U, v_N) and replaces v_C by the beta-weighted sum.
    With zero hops the mean and uniform weights are returned unchanged.
    """
    n = h_T.shape[0]
    if n == 0:
        raise ValueError("customize: empty product memory")
    if hops < 0:
        raise ValueError("hops must be >= 0")
    v_C = nn.mean(h_T, axis=0)
    beta = Tensor(np.full(n, 1.0 / n))
    for _ in range(hops):
        beta = nn.softmax(hop_scores(params, h_T, v_C, v_U, v_N))
        v_C = beta @ h_T
    return v_C, beta
