import numpy as np
import pytest

from opinrec import nn


def numeric_grad(f, tensor, step=1e-4):
    """Central differences of scalar f() w.r.t. every entry of tensor.data."""
    g = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gflat = g.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + step
        up = f()
        flat[k] = old - step
        down = f()
        flat[k] = old
        gflat[k] = (up - down) / (2 * step)
    return g


def rel_error(a, b):
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


def check_grads(loss_fn, tensors, step=1e-4, tol=1e-4, atol=1e-7):
    """Compare tape gradients with central differences; returns the worst relative error.

    Entries whose analytic and numeric values are both below ``atol`` count as equal.
    """
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    nn.backward(loss)
    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)

        def value():
            with nn.no_grad():
                return loss_fn().item()

        numeric = numeric_grad(value, t, step)
        err = rel_error(analytic, numeric)
        analytic, numeric = np.atleast_1d(analytic), np.atleast_1d(numeric)
        err[(np.abs(analytic) < atol) & (np.abs(numeric) < atol)] = 0.0
        worst = max(worst, float(err.max()) if err.size else 0.0)
        assert err.max() < tol if err.size else True, (t.name, analytic, numeric)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
