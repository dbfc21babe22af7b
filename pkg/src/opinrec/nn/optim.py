from __future__ import annotations

from typing import Iterable

import numpy as np

from .autograd import Tensor


class Adagrad:
    """Per-coordinate Adagrad: acc += g**2; p -= lr * g / (sqrt(acc) + eps).

    Parameters without a ``.grad`` are skipped, so frozen tensors stay put.
    """

    def __init__(self, params: Iterable[Tensor], lr: float = 0.1, eps: float = 1e-6):
        self.params = list(params)
        self.lr = lr
        self.eps = eps
        self.accumulators = {id(p): np.zeros_like(p.data) for p in self.params}

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                continue
            adagrad_update(p, p.grad, self.accumulators[id(p)], self.lr, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def adagrad_update(param: Tensor, grad: np.ndarray, acc: np.ndarray, lr: float, eps: float) -> None:
    acc += grad * grad
    denom = np.sqrt(acc) + eps
    # g == 0 with acc == 0 and eps == 0 would be 0/0; leave those coordinates alone
    step = np.divide(grad, denom, out=np.zeros_like(grad), where=denom > 0)
    param.data -= lr * step
