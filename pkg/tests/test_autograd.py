import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from opinrec import nn
from opinrec.nn import Tensor

from .conftest import check_grads


def param(a, name="p"):
    return Tensor(np.array(a, dtype=float), requires_grad=True, name=name)


def test_softmax_of_zeros_is_uniform():
    out = nn.op_apply("softmax", Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1 / 3] * 3, rtol=0, atol=1e-15)


def test_tanh_of_zero_tensor():
    assert np.all(nn.op_apply("tanh", Tensor(np.zeros((2, 3)))).data == 0.0)


def test_matmul_matches_triple_loop(rng):
    A, x = rng.normal(size=(2, 3)), rng.normal(size=(3, 1))
    expected = [[sum(A[i, k] * x[k, j] for k in range(3)) for j in range(1)] for i in range(2)]
    np.testing.assert_allclose(nn.matmul(Tensor(A), Tensor(x)).data, expected, rtol=1e-14)


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(nn.ShapeError, match=r"\(2, 3\).*\(2, 1\)"):
        nn.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 1))))
    with pytest.raises(nn.ShapeError, match="incompatible"):
        nn.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


def test_backward_sum_gives_ones():
    w = param([0.3, -1.0, 2.0])
    nn.backward(nn.sum(w))
    np.testing.assert_array_equal(w.grad, [1.0, 1.0, 1.0])


def test_backward_squared_dot_by_hand():
    w = param([1.0, 2.0])
    x = Tensor([3.0, 4.0])
    loss = nn.squared_error(w @ x, 0.0)
    nn.backward(loss)
    np.testing.assert_allclose(w.grad, [66.0, 88.0])


def test_backward_rejects_non_scalar():
    w = param([1.0, 2.0])
    with pytest.raises(nn.ShapeError, match="scalar"):
        nn.backward(w * 2.0)
    nn.get_tape().clear()


def test_backward_clears_tape():
    w = param([1.0, 2.0])
    nn.backward(nn.sum(nn.tanh(w)))
    assert len(nn.get_tape()) == 0


def test_backward_accumulates_shared_inputs():
    w = param([1.5])
    loss = nn.sum(w * w + w)  # d/dw = 2w + 1
    nn.backward(loss)
    np.testing.assert_allclose(w.grad, [4.0])


def test_no_grad_records_nothing():
    w = param([1.0])
    with nn.no_grad():
        y = nn.tanh(w)
    assert not y.requires_grad and len(nn.get_tape()) == 0


def test_composite_graph_matches_finite_differences(rng):
    W = param(rng.normal(size=(4, 3)), "W")
    b = param(rng.normal(size=4), "b")
    E = param(rng.normal(size=(6, 3)), "E")
    ids = [0, 2, 2, 5]

    def loss():
        x = nn.mean(nn.embedding_lookup(E, ids), axis=0)
        h = nn.tanh(W @ x + b)
        p = nn.softmax(nn.concat([h, nn.sigmoid(h)]))
        return nn.nll(nn.stack([p, p * 0.5 + 0.0625]), [1, 6]) + nn.squared_error(nn.sum(h), 0.7)

    check_grads(loss, [W, b, E])


UNARY = {
    "tanh": nn.tanh,
    "sigmoid": nn.sigmoid,
    "softmax": nn.softmax,
    "log_softmax": nn.log_softmax,
    "mean": lambda x: nn.mean(x, axis=0),
    "sum": nn.sum,
    "transpose": nn.transpose,
}


@pytest.mark.parametrize("kind", sorted(UNARY))
@settings(max_examples=15, deadline=None)
@given(data=arrays(np.float64, (3, 4), elements=st.floats(-3, 3)))
def test_unary_ops_gradcheck(kind, data):
    x = param(data, "x")
    weights = Tensor(np.linspace(-1, 1, 12).reshape(3, 4))
    fn = UNARY[kind]

    def loss():
        y = fn(x)
        w = weights if y.shape == (3, 4) else Tensor(np.linspace(-1, 1, y.size).reshape(y.shape))
        return nn.sum(y * w)

    check_grads(loss, [x])


@settings(max_examples=20, deadline=None)
@given(
    a=arrays(np.float64, (2, 3), elements=st.floats(-2, 2)),
    b=arrays(np.float64, (3,), elements=st.floats(-2, 2)),
)
def test_binary_ops_gradcheck_with_broadcasting(a, b):
    A, B = param(a, "A"), param(b, "B")
    M = Tensor(np.arange(6.0).reshape(2, 3) / 6)

    def loss():
        return nn.sum((A + B) * M) + nn.sum((A - B) * (A * B)) + nn.sum(A @ B)

    check_grads(loss, [A, B])


def test_near_saturation_uses_looser_tolerance():
    x = param([4.5, -5.0, 6.0])
    check_grads(lambda: nn.sum(nn.tanh(x) * Tensor([1.0, 2.0, 3.0])), [x], tol=1e-2)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50)))
def test_softmax_is_a_distribution(z):
    p = nn.softmax(Tensor(z)).data
    assert abs(p.sum() - 1.0) < 1e-9
    assert np.all(p >= 0) and np.all(p <= 1)


def test_softmax_is_stable_for_huge_logits():
    p = nn.softmax(Tensor([1000.0, 1000.0])).data
    np.testing.assert_allclose(p, [0.5, 0.5])


def test_dropout_eval_is_identity(rng):
    x = Tensor(rng.normal(size=(5, 4)))
    assert nn.dropout(x, 0.2, train=False) is x


def test_dropout_expectation_is_identity():
    x = Tensor(np.full(200_000, 2.0))
    y = nn.dropout(x, 0.2, train=True, rng=np.random.default_rng(0)).data
    assert set(np.unique(y)) <= {0.0, 2.5}
    assert abs(y.mean() - 2.0) < 0.01


def test_dropout_gradient_uses_same_mask():
    x = param(np.ones(10), "x")

    def loss():
        return nn.sum(nn.dropout(x, 0.5, True, np.random.default_rng(3)) * Tensor(np.arange(10.0)))

    check_grads(loss, [x])


def test_nll_floors_zero_probability():
    p = Tensor([[1.0, 0.0], [0.5, 0.5]])
    out = nn.nll(p, [1, 0])
    assert out.item() == pytest.approx((-math.log(1e-12) - math.log(0.5)) / 2)
    assert "floored=1" in out.name


def test_embedding_lookup_accumulates_repeats():
    E = param(np.zeros((3, 2)), "E")
    nn.backward(nn.sum(nn.embedding_lookup(E, [1, 1, 2])))
    np.testing.assert_array_equal(E.grad, [[0, 0], [2, 2], [1, 1]])


def test_embedding_lookup_rejects_out_of_range():
    with pytest.raises(nn.ShapeError):
        nn.embedding_lookup(Tensor(np.zeros((3, 2))), [3])
