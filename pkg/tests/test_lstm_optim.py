import math

import numpy as np
import pytest

from opinrec import nn
from opinrec.nn import LSTMCellParams, Tensor

from .conftest import check_grads


def cell(weight, bias):
    return LSTMCellParams(
        Tensor(np.array(weight, dtype=float), requires_grad=True, name="w"),
        Tensor(np.array(bias, dtype=float), requires_grad=True, name="b"),
    )


def test_zero_weights_give_zero_hidden():
    p = cell(np.zeros((8, 5)), np.zeros(8))
    h, c = nn.lstm_step(p, Tensor([0.3, -2.0, 1.0]), (Tensor(np.zeros(2)), Tensor(np.zeros(2))))
    np.testing.assert_array_equal(h.data, 0.0)
    np.testing.assert_array_equal(c.data, 0.0)


def test_two_unit_cell_matches_hand_evaluation():
    # input dim 1, hidden 2; rows: i0 i1 f0 f1 o0 o1 g0 g1; cols: x h0 h1
    W = [
        [0.5, 0.1, -0.2],
        [-0.3, 0.0, 0.4],
        [0.2, 0.3, 0.1],
        [0.1, -0.1, 0.2],
        [0.7, 0.2, 0.0],
        [-0.4, 0.5, 0.3],
        [1.0, -0.5, 0.2],
        [0.3, 0.3, -0.3],
    ]
    b = [0.1, 0.0, 0.5, -0.5, 0.0, 0.2, -0.1, 0.0]
    x, h0, c0 = [0.8], [0.2, -0.1], [0.5, -0.3]

    sig = lambda z: 1 / (1 + math.exp(-z))  # noqa: E731
    inp = x + h0
    pre = [sum(W[r][k] * inp[k] for k in range(3)) + b[r] for r in range(8)]
    exp_h, exp_c = [], []
    for u in range(2):
        i, f, o, g = sig(pre[u]), sig(pre[2 + u]), sig(pre[4 + u]), math.tanh(pre[6 + u])
        cu = f * c0[u] + i * g
        exp_c.append(cu)
        exp_h.append(o * math.tanh(cu))

    h, c = nn.lstm_step(cell(W, b), Tensor(x), (Tensor(h0), Tensor(c0)))
    np.testing.assert_allclose(h.data, exp_h, rtol=1e-13)
    np.testing.assert_allclose(c.data, exp_c, rtol=1e-13)


def test_lstm_rejects_wrong_input_dim(rng):
    p = nn.LSTMCellParams.init(rng, 3, 4, "l")
    with pytest.raises(nn.ShapeError, match="input shape"):
        nn.lstm_step(p, Tensor(np.zeros(2)), (Tensor(np.zeros(4)), Tensor(np.zeros(4))))


def test_init_range_and_shapes(rng):
    p = nn.LSTMCellParams.init(rng, 5, 7, "l")
    assert p.weight.shape == (28, 12) and p.bias.shape == (28,)
    assert np.abs(p.weight.data).max() <= 0.08


def test_gradient_through_five_steps(rng):
    W =Tensor(rng.uniform(-0.5, 0.5, (16, 7)), requires_grad=True, name="W")
    b = Tensor(rng.uniform(-0.5, 0.5, 16), requires_grad=True, name="b")
    p = LSTMCellParams(W, b)
    xs = Tensor(rng.normal(size=(5, 3)), requires_grad=True, name="xs")
    h0 = Tensor(rng.normal(size=4) * 0.3, requires_grad=True, name="h0")
    c0 = Tensor(rng.normal(size=4) * 0.3, requires_grad=True, name="c0")
    target = Tensor(rng.normal(size=4))

    def loss():
        h, c = h0, c0
        for t in range(5):
            h, c = nn.lstm_step(p, xs[t], (h, c))
        return nn.squared_error(h, target) + nn.sum(c) * 0.1

    check_grads(loss, [W, b, xs, h0, c0])


# ---------------------------------------------------------------- Adagrad


def scalar_param(v):
    return Tensor(np.array([v], dtype=float), requires_grad=True, name="p")


def test_adagrad_first_step():
    p = scalar_param(1.0)
    opt = nn.Adagrad([p], lr=0.1, eps=0.0)
    p.grad = np.array([3.0])
    opt.step()
    assert p.data[0] == pytest.approx(1.0 - 0.1)


def test_adagrad_zero_gradient_is_noop():
    p = scalar_param(1.0)
    opt = nn.Adagrad([p], lr=0.1, eps=0.0)
    p.grad = np.array([0.0])
    opt.step()
    assert p.data[0] == 1.0
    assert opt.accumulators[id(p)][0] == 0.0


def test_adagrad_second_step_scales_by_root_two():
    p = scalar_param(0.0)
    opt = nn.Adagrad([p], lr=0.1, eps=0.0)
    p.grad = np.array([1.0])
    opt.step()
    before = p.data[0]
    p.grad = np.array([1.0])
    opt.step()
    assert p.data[0] - before == pytest.approx(-0.1 / math.sqrt(2), rel=1e-12)


def test_adagrad_accumulators_never_decrease(rng):
    p = Tensor(rng.normal(size=6), requires_grad=True, name="p")
    opt = nn.Adagrad([p])
    prev = opt.accumulators[id(p)].copy()
    for _ in range(30):
        p.grad = rng.normal(size=6) * rng.integers(0, 2)
        opt.step()
        acc = opt.accumulators[id(p)]
        assert np.all(acc >= prev) and np.all(acc >= 0)
        prev = acc.copy()


def test_adagrad_skips_params_without_grad():
    p = scalar_param(2.0)
    opt = nn.Adagrad([p])
    opt.step()
    assert p.data[0] == 2.0


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip(tmp_path, rng):
    arrays = {"a": rng.normal(size=(3, 4)), "b.c": rng.normal(size=5), "scalar": np.array(1.25)}
    nn.save_checkpoint(tmp_path / "x.ckpt", arrays, {"k": [1, 2]})
    back, meta = nn.load_checkpoint(tmp_path / "x.ckpt")
    assert meta == {"k": [1, 2]}
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].shape == arrays[k].shape
        np.testing.assert_array_equal(back[k], arrays[k])


def test_checkpoint_layout_is_little_endian_float64(tmp_path):
    nn.save_checkpoint(tmp_path / "x.ckpt", {"w": np.array([1.0, -2.0])})
    raw = (tmp_path / "x.ckpt").read_bytes()
    assert raw[:8] == b"OPRECKPT"
    assert raw.endswith(np.array([1.0, -2.0], dtype="<f8").tobytes())


def test_checkpoint_rejects_bad_magic(tmp_path):
    (tmp_path / "bad").write_bytes(b"NOTACKPT" + b"\0" * 12)
    with pytest.raises(nn.CheckpointError):
        nn.load_checkpoint(tmp_path / "bad")
