"""Autodiff engine: per-layer gradient checks and forward oracles.

Every layer kind gets a central finite-difference check in float64
(h=1e-3, rtol 1e-4, atol 1e-6, five probes per leaf); forwards are
pinned against independent loop/closed-form oracles.
"""

import struct

import numpy as np
import pytest
from numpy.lib.stride_tricks import sliding_window_view

from gestigo.errors import (
    ArgumentError, GraphError, NumericError, ParseError, ShapeError,
)
from gestigo.model import homoscedastic_loss
from gestigo.nn import (
    Adam, AdaptiveAvgPool, AdaptiveMaxPool, BatchNorm1d, BatchNorm2d,
    Conv2d, Dropout, Flatten, Linear, MaxPool2d, ReLU, Tensor, cell_edges,
    concat, cosine_lr, cross_entropy, expand_cells, parameter,
    read_checkpoint, softmax, stack, write_checkpoint,
)
from helpers import distinct_leaf, fd_gradcheck, leaf, offzero_leaf, weighted


# -- gradient checks, one per layer kind --------------------------------------

def test_grad_conv2d():
    rng = np.random.default_rng(100)
    x = leaf(rng, (2, 5, 5, 3))
    layer = Conv2d(3, 4, kernel=3, stride=1, padding=1, rng=rng, dtype=np.float64)
    w = rng.normal(size=(2, 5, 5, 4))
    fd_gradcheck(lambda: weighted(layer(x), w), [x, layer.weight], seed=1)


def test_grad_conv2d_strided_unpadded():
    rng = np.random.default_rng(101)
    x = leaf(rng, (2, 7, 7, 2))
    layer = Conv2d(2, 3, kernel=3, stride=2, padding=0, rng=rng, dtype=np.float64)
    w = rng.normal(size=(2, 3, 3, 3))
    fd_gradcheck(lambda: weighted(layer(x), w), [x, layer.weight], seed=2)


def test_grad_maxpool_tiled():
    rng = np.random.default_rng(102)
    x = distinct_leaf(rng, (2, 6, 6, 2))
    layer = MaxPool2d(2)
    w = rng.normal(size=(2, 3, 3, 2))
    fd_gradcheck(lambda: weighted(layer(x), w), [x], seed=3)


def test_grad_maxpool_generic():
    rng = np.random.default_rng(103)
    x = distinct_leaf(rng, (1, 7, 7, 2))
    layer = MaxPool2d(3, stride=2)
    w = rng.normal(size=(1, 3, 3, 2))
    fd_gradcheck(lambda: weighted(layer(x), w), [x], seed=4)


def test_grad_adaptive_pools():
    rng = np.random.default_rng(104)
    x = distinct_leaf(rng, (2, 5, 5, 3))
    w = rng.normal(size=(2, 1, 1, 3))
    fd_gradcheck(lambda: weighted(AdaptiveMaxPool()(x), w), [x], seed=5)
    y = leaf(rng, (2, 5, 5, 3))
    fd_gradcheck(lambda: weighted(AdaptiveAvgPool()(y), w), [y], seed=6)


def test_grad_batchnorm2d():
    rng = np.random.default_rng(105)
    x = leaf(rng, (3, 4, 4, 2))
    layer = BatchNorm2d(2, dtype=np.float64)
    layer.gamma.data = rng.uniform(0.5, 1.5, 2)
    layer.beta.data = rng.normal(size=2)
    w = rng.normal(size=(3, 4, 4, 2))
    fd_gradcheck(lambda: weighted(layer(x), w),
                 [x, layer.gamma, layer.beta], seed=7)


def test_grad_batchnorm1d():
    rng = np.random.default_rng(106)
    x = leaf(rng, (8, 5))
    layer = BatchNorm1d(5, dtype=np.float64)
    layer.gamma.data = rng.uniform(0.5, 1.5, 5)
    layer.beta.data = rng.normal(size=5)
    w = rng.normal(size=(8, 5))
    fd_gradcheck(lambda: weighted(layer(x), w),
                 [x, layer.gamma, layer.beta], seed=8)


def test_grad_dropout():
    rng = np.random.default_rng(107)
    x = leaf(rng, (4, 6))
    layer = Dropout(p=0.4, seed=11)
    w = rng.normal(size=(4, 6))

    def reset():
        layer.rng = np.random.default_rng(layer.seed)

    fd_gradcheck(lambda: weighted(layer(x), w), [x], seed=9, reset=reset)


def test_grad_relu():
    rng = np.random.default_rng(108)
    x = offzero_leaf(rng, (3, 7))
    w = rng.normal(size=(3, 7))
    fd_gradcheck(lambda: weighted(ReLU()(x), w), [x], seed=10)


def test_grad_flatten_linear():
    rng = np.random.default_rng(109)
    x = leaf(rng, (3, 2, 2, 2))
    layer = Linear(8, 4, rng=rng, dtype=np.float64)
    w = rng.normal(size=(3, 4))
    fd_gradcheck(lambda: weighted(layer(Flatten()(x)), w),
                 [x, layer.weight, layer.bias], seed=11)


def test_grad_concat():
    rng = np.random.default_rng(110)
    a, b = leaf(rng, (2, 3)), leaf(rng, (2, 5))
    w = rng.normal(size=(2, 8))
    fd_gradcheck(lambda: weighted(concat([a, b], axis=1), w), [a, b], seed=12)


def test_grad_softmax():
    rng = np.random.default_rng(111)
    x = leaf(rng, (3, 5))
    w = rng.normal(size=(3, 5))
    fd_gradcheck(lambda: weighted(softmax(x), w), [x], seed=13)


def test_grad_cross_entropy():
    rng = np.random.default_rng(112)
    x = leaf(rng, (4, 6))
    labels = np.array([0, 3, 5, 2])
    fd_gradcheck(lambda: cross_entropy(x, labels), [x], seed=14)


def test_grad_expand_cells():
    rng = np.random.default_rng(113)
    p1, p2 = leaf(rng, (2, 3)), leaf(rng, (2, 3))
    w = rng.normal(size=(2, 8, 8, 3))
    fd_gradcheck(lambda: weighted(expand_cells([p1, p2], 8), w),
                 [p1, p2], seed=15)


def test_grad_homoscedastic_loss():
    rng = np.random.default_rng(114)
    losses = [Tensor(rng.uniform(0.5, 2.0, ()), requires_grad=True,
                     dtype=np.float64) for _ in range(3)]
    s = parameter(rng.normal(size=3), dtype=np.float64)
    fd_gradcheck(lambda: homoscedastic_loss(losses, s), [*losses, s], seed=16)


# -- forward oracles ----------------------------------------------------------

def conv_loop_oracle(x, w, stride, pad):
    b, h, wd, c = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((b, ho, wo, o))
    for bi in range(b):
        for oi in range(o):
            for yi in range(ho):
                for xi in range(wo):
                    patch = xp[bi, yi * stride:yi * stride + k,
                               xi * stride:xi * stride + k, :]
                    out[bi, yi, xi, oi] = (patch * w[oi].transpose(1, 2, 0)).sum()
    return out


def test_conv_matches_loop_oracle():
    rng = np.random.default_rng(20)
    for stride, pad in [(1, 1), (1, 0), (2, 1)]:
        x = rng.normal(size=(2, 5, 6, 3))
        layer = Conv2d(3, 4, kernel=3, stride=stride, padding=pad,
                       rng=rng, dtype=np.float64)
        got = layer(Tensor(x, dtype=np.float64)).data
        want = conv_loop_oracle(x, layer.weight.data, stride, pad)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_identity_conv_1x1():
    rng = np.random.default_rng(21)
    layer = Conv2d(2, 2, kernel=1, stride=1, padding=0, dtype=np.float64)
    layer.weight.data = np.eye(2).reshape(2, 2, 1, 1)
    x = rng.normal(size=(3, 4, 4, 2))
    assert np.array_equal(layer(Tensor(x, dtype=np.float64)).data, x)


def test_maxpool_outputs_match_window_oracle():
    rng = np.random.default_rng(22)
    x = rng.normal(size=(2, 8, 8, 3))
    tiled = MaxPool2d(2)(Tensor(x, dtype=np.float64)).data
    win = sliding_window_view(x, (2, 2), axis=(1, 2))[:, ::2, ::2]
    np.testing.assert_array_equal(tiled, win.max(axis=(4, 5)))
    generic = MaxPool2d(3, stride=2)(Tensor(x, dtype=np.float64)).data
    win3 = sliding_window_view(x, (3, 3), axis=(1, 2))[:, ::2, ::2]
    np.testing.assert_array_equal(generic, win3.max(axis=(4, 5)))


def test_maxpool_tie_routes_to_first_cell():
    ones = np.ones((1, 2, 2, 1))
    for layer in (MaxPool2d(2), MaxPool2d(2, stride=1)):
        x = Tensor(ones, requires_grad=True, dtype=np.float64)
        layer(x).sum().backward()
        assert x.grad[0, 0, 0, 0] == 1.0
        assert x.grad.sum() == 1.0          # single winner despite the tie


def test_conv_skips_backward_into_plain_input():
    rng = np.random.default_rng(23)
    layer = Conv2d(2, 2, rng=rng, dtype=np.float64)
    x = Tensor(rng.normal(size=(1, 4, 4, 2)), dtype=np.float64)  # not a leaf
    out = weighted(layer(x), rng.normal(size=(1, 4, 4, 2)))
    out.backward()
    assert layer.weight.grad is not None
    assert x.grad is None


def test_relu_forward():
    x = Tensor([[-2.0, 0.0, 3.5]], dtype=np.float64)
    assert np.array_equal(ReLU()(x).data, [[0.0, 0.0, 3.5]])


def test_adaptive_pools_forward():
    x = np.arange(16, dtype=np.float64).reshape(1, 4, 4, 1)
    assert AdaptiveAvgPool()(Tensor(x, dtype=np.float64)).data[0, 0, 0, 0] == 7.5
    assert AdaptiveMaxPool()(Tensor(x, dtype=np.float64)).data[0, 0, 0, 0] == 15.0
    with pytest.raises(ArgumentError):
        AdaptiveAvgPool(output=2)
    with pytest.raises(ArgumentError):
        AdaptiveMaxPool(output=3)


def test_batchnorm_train_statistics():
    rng = np.random.default_rng(24)
    x = rng.normal(loc=3.0, scale=2.0, size=(256, 4))
    layer = BatchNorm1d(4, dtype=np.float64)
    out = layer(Tensor(x, dtype=np.float64), mode="train").data
    assert np.abs(out.mean(axis=0)).max() < 1e-5
    assert np.abs(out.var(axis=0) - 1.0).max() < 1e-4
    # running stats took one momentum step toward the batch stats
    np.testing.assert_allclose(layer.running_mean, 0.1 * x.mean(axis=0), atol=1e-9)
    np.testing.assert_allclose(layer.running_var,
                               0.9 * 1.0 + 0.1 * x.var(axis=0), atol=1e-9)


def test_batchnorm_eval_uses_running_stats():
    rng = np.random.default_rng(25)
    x = rng.normal(size=(32, 3))
    layer = BatchNorm1d(3, dtype=np.float64)
    train_out = layer(Tensor(x, dtype=np.float64), mode="train").data
    layer.running_mean[...] = x.mean(axis=0)
    layer.running_var[...] = x.var(axis=0)
    eval_out = layer(Tensor(x, dtype=np.float64), mode="eval").data
    np.testing.assert_allclose(eval_out, train_out, atol=1e-9)


def test_batchnorm_shape_validation():
    with pytest.raises(ShapeError):
        BatchNorm1d(4)(Tensor(np.zeros((2, 5)), dtype=np.float64))
    with pytest.raises(ShapeError):
        BatchNorm2d(4)(Tensor(np.zeros((2, 5)), dtype=np.float64))


def test_dropout_eval_is_identity():
    x = Tensor(np.ones((3, 3)), dtype=np.float64)
    assert Dropout(p=0.5)(x, mode="eval") is x
    assert Dropout(p=0.0)(x, mode="train") is x
    with pytest.raises(ArgumentError):
        Dropout(p=1.0)


def test_dropout_train_preserves_mean():
    x = Tensor(np.ones(10_000), dtype=np.float64)
    out = Dropout(p=0.5, seed=2)(x, mode="train").data
    assert abs(out.mean() - 1.0) < 0.02
    kept = out != 0
    assert np.allclose(out[kept], 2.0)       # inverted scaling by 1/keep


def test_softmax_rows_normalized():
    rng = np.random.default_rng(26)
    probs = softmax(Tensor(rng.normal(scale=5, size=(8, 9)))).data
    assert (probs >= 0).all()
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_cross_entropy_uniform_and_saturated():
    z = Tensor(np.zeros((3, 4)), dtype=np.float64)
    assert cross_entropy(z, [0, 1, 2]).item() == pytest.approx(np.log(4.0), abs=1e-12)
    hot = np.zeros((1, 4))
    hot[0, 2] = 1000.0
    assert cross_entropy(Tensor(hot, dtype=np.float64), [2]).item() < 1e-6
    cold = np.zeros((1, 4))
    cold[0, 2] = -1000.0
    loss = cross_entropy(Tensor(cold, dtype=np.float64), [2]).item()
    assert loss == pytest.approx(1000.0 + np.log(3.0), rel=1e-9)
    assert np.isfinite(loss)


def test_cross_entropy_against_lse_oracle():
    rng = np.random.default_rng(27)
    logits = rng.normal(scale=3, size=(16, 14))
    labels = rng.integers(0, 14, 16)
    got = cross_entropy(Tensor(logits, dtype=np.float64), labels).item()
    m = logits.max(axis=1, keepdims=True)
    lse = (np.log(np.exp(logits - m).sum(axis=1, keepdims=True)) + m)[:, 0]
    want = (lse - logits[np.arange(16), labels]).mean()
    assert got == pytest.approx(want, rel=1e-12)
    assert got >= 0.0


def test_cross_entropy_label_validation():
    z = Tensor(np.zeros((2, 3)))
    with pytest.raises(ArgumentError):
        cross_entropy(z, [0, 3])
    with pytest.raises(ArgumentError):
        cross_entropy(z, [-1, 0])
    with pytest.raises(ArgumentError):
        cross_entropy(z, [0])


def test_homoscedastic_zero_weights_reduce_to_sum():
    losses = [Tensor(v) for v in (1.5, 2.5, 0.25)]
    s = parameter(np.zeros(3))
    total = homoscedastic_loss(losses, s).item()
    assert total == pytest.approx(4.25, abs=1e-7)
    with pytest.raises(ShapeError):
        homoscedastic_loss(losses[:2], s)


def test_cell_edges_and_expand_forward():
    assert cell_edges(4, 10) == [0, 2, 4, 6, 10]
    assert cell_edges(1, 7) == [0, 7]
    with pytest.raises(ArgumentError):
        cell_edges(3, 2)
    probs = Tensor(np.array([[0.25, 1.0]]), dtype=np.float64)
    img = expand_cells([probs], 4).data
    assert img.shape == (1, 4, 4, 3)
    assert (img[0, :, :2, :] == 0.25).all()
    assert (img[0, :, 2:, :] == 1.0).all()
    with pytest.raises(ShapeError):
        expand_cells([probs, Tensor(np.zeros((2, 2)))], 4)
    with pytest.raises(ArgumentError):
        expand_cells([], 4)


# -- tensor graph mechanics ---------------------------------------------------

def test_quadratic_gradient_exact():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True, dtype=np.float64)
    (x * x).sum().backward()
    assert np.array_equal(x.grad, [2.0, -4.0, 6.0])


def test_elementwise_op_gradients():
    rng = np.random.default_rng(28)
    x = Tensor(rng.uniform(0.5, 2.0, 5), requires_grad=True, dtype=np.float64)
    x.exp().sum().backward()
    np.testing.assert_allclose(x.grad, np.exp(x.data), rtol=1e-15)
    x.grad = None
    x.log().sum().backward()
    np.testing.assert_allclose(x.grad, 1.0 / x.data, rtol=1e-15)
    x.grad = None
    x.mean().backward()
    np.testing.assert_allclose(x.grad, np.full(5, 0.2), rtol=1e-15)
    x.grad = None
    x.reshape(5, 1).sum().backward()
    assert x.grad.shape == (5,)


def test_broadcast_backward_reduces():
    rng = np.random.default_rng(29)
    a = Tensor(rng.normal(size=(3, 1)), requires_grad=True, dtype=np.float64)
    b = Tensor(rng.normal(size=(4,)), requires_grad=True, dtype=np.float64)
    w = rng.normal(size=(3, 4))
    weighted(a + b, w).backward()
    np.testing.assert_allclose(a.grad, w.sum(axis=1, keepdims=True), rtol=1e-14)
    np.testing.assert_allclose(b.grad, w.sum(axis=0), rtol=1e-14)


def test_leaf_grads_accumulate_across_passes():
    x = Tensor(np.array([2.0]), requires_grad=True, dtype=np.float64)
    (x * x).sum().backward()
    (x * x).sum().backward()
    assert x.grad[0] == 8.0                 # 4.0 accumulated twice


def test_backward_validation():
    x = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(GraphError):
        (x * 2).backward()                  # non-scalar
    with pytest.raises(GraphError):
        Tensor(np.array(1.0)).backward()    # detached from any graph
    bad = Tensor(np.array([np.inf]), requires_grad=True)
    with pytest.raises(NumericError):
        bad.sum().backward()


def test_stack_gradients_and_validation():
    parts = [Tensor(np.array(float(i)), requires_grad=True, dtype=np.float64)
             for i in range(3)]
    w = np.array([1.0, 10.0, 100.0])
    (stack(parts) * w).sum().backward()
    assert [p.grad.item() for p in parts] == [1.0, 10.0, 100.0]
    with pytest.raises(ArgumentError):
        stack([])


def test_layer_state_round_trip_and_validation():
    rng = np.random.default_rng(30)
    layer = Linear(3, 2, rng=rng)
    state = [a.copy() for a in layer.state()]
    other = Linear(3, 2, rng=np.random.default_rng(99))
    other.load_state(state)
    assert np.array_equal(other.weight.data, layer.weight.data)
    assert np.array_equal(other.bias.data, layer.bias.data)
    with pytest.raises(ShapeError):
        other.load_state(state[:1])
    with pytest.raises(ShapeError):
        other.load_state([state[0].T, state[1]])


# -- optimizer and schedule ---------------------------------------------------

def test_adam_no_grad_is_fixed_point():
    p = parameter(np.array([1.0, 2.0]))
    opt = Adam([p], lr=0.1)
    before = p.data.copy()
    opt.step()                              # grad is None: untouched
    p.grad = np.zeros(2, dtype=np.float32)
    opt.step()                              # zero grad: update is exactly 0
    assert np.array_equal(p.data, before)


def test_adam_first_step_magnitude_is_lr():
    p = parameter(np.array([0.0]))
    opt = Adam([p], lr=0.01)
    p.grad = np.array([3.0], dtype=np.float32)
    opt.step()
    # bias-corrected first step: lr * g / (|g| + eps) ~= lr
    assert abs(p.data[0]) == pytest.approx(0.01, rel=1e-3)
    assert p.data[0] < 0                    # descends against the gradient


def test_adam_minimizes_quadratic():
    rng = np.random.default_rng(31)
    p = parameter(rng.normal(size=5))
    opt = Adam([p], lr=0.05)
    history = []
    for _ in range(300):
        x = Tensor(p.data.astype(np.float64), requires_grad=True, dtype=np.float64)
        loss = (x * x).sum()
        loss.backward()
        history.append(loss.item())
        p.grad = x.grad.astype(np.float32)
        opt.step()
        opt.zero_grad()
    assert history[-1] < 0.05 * history[0]
    assert np.mean(history[-50:]) < np.mean(history[:50])


def test_adam_step_override_lr():
    p = parameter(np.array([0.0]))
    opt = Adam([p], lr=1.0)
    p.grad = np.array([1.0], dtype=np.float32)
    opt.step(lr=0.001)
    assert abs(p.data[0]) == pytest.approx(0.001, rel=1e-3)


def test_cosine_schedule_endpoints():
    assert cosine_lr(0.4, 0, 100) == pytest.approx(0.4)
    assert cosine_lr(0.4, 50, 100) == pytest.approx(0.2)
    assert cosine_lr(0.4, 100, 100) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ArgumentError):
        cosine_lr(0.4, 1, 0)
    with pytest.raises(ArgumentError):
        cosine_lr(0.4, -1, 10)
    with pytest.raises(ArgumentError):
        cosine_lr(0.4, 11, 10)


# -- checkpoint container -----------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(32)
    config = {"classes": 7, "vos": ["custom"]}
    specs = [{"kind": "conv2d", "in_ch": 3}, {"kind": "linear"}]
    tensors = [rng.normal(size=(3, 4)).astype(np.float32),
               np.array([2.5], dtype=np.float32),
               rng.normal(size=(2, 2, 3, 3)).astype(np.float32)]
    path = tmp_path / "m.ckpt"
    write_checkpoint(path, config, specs, tensors)
    rc, rs, rt = read_checkpoint(path)
    assert rc == config and rs == specs
    assert len(rt) == 3
    for got, want in zip(rt, tensors):
        assert got.dtype == np.float32
        assert np.array_equal(got, np.asarray(want))


def test_checkpoint_corruption_detected(tmp_path):
    path = tmp_path / "m.ckpt"
    write_checkpoint(path, {"a": 1}, [{"kind": "linear"}],
                     [np.zeros(4, dtype=np.float32)])
    blob = path.read_bytes()

    def expect_error(mutated):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(mutated)
        with pytest.raises(ParseError):
            read_checkpoint(bad)

    expect_error(b"XXXX" + blob[4:])                       # magic
    expect_error(blob[:4] + struct.pack("<I", 9) + blob[8:])  # version
    expect_error(blob[:-3])                                # truncated
    expect_error(blob + b"\x00")                           # trailing bytes
    expect_error(blob[:12] + b"X" + blob[13:])             # config JSON
