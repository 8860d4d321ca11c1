"""Convolution ops and batch norm against naive oracles."""

import itertools

import numpy as np
import pytest

from vesselgan import nnops
from vesselgan.autodiff import Tensor
from vesselgan.gradcheck import check_gradients


def naive_conv2d(x, w, b, stride, pad):
    """Quadruple-loop cross-correlation reference."""
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, co, ho, wo))
    for bi in range(n):
        for oc in range(co):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[bi, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    out[bi, oc, i, j] = np.sum(patch * w[oc])
            if b is not None:
                out[bi, oc] += b[oc]
    return out


def conv_case(rng, stride, pad, kern):
    n = int(rng.integers(1, 3))
    ci = int(rng.integers(1, 4))
    co = int(rng.integers(1, 4))
    h = int(rng.integers(kern, kern + 5))
    w = int(rng.integers(kern, kern + 5))
    x = rng.standard_normal((n, ci, h, w))
    wt = rng.standard_normal((co, ci, kern, kern))
    b = rng.standard_normal(co)
    return x, wt, b, stride, pad


GRID = list(itertools.product((1, 2), (0, 1, 2), (1, 2, 3, 4)))  # stride x pad x kernel


def test_conv2d_matches_naive_oracle_over_grid():
    rng = np.random.default_rng(42)
    for case in range(50):
        stride, pad, kern = GRID[case % len(GRID)]
        x, w, b, stride, pad = conv_case(rng, stride, pad, kern)
        got = nnops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, pad).data
        want = naive_conv2d(x, w, b, stride, pad)
        assert got.shape == want.shape
        assert np.max(np.abs(got - want)) <= 1e-10


def test_conv_transpose2d_matches_gradient_of_conv():
    # convT(x, w) is by definition the input-VJP of conv2d at cotangent x
    rng = np.random.default_rng(7)
    for case in range(50):
        stride, pad, kern = GRID[case % len(GRID)]
        pad = min(pad, kern - 1)  # convT requires pad < kernel
        n = int(rng.integers(1, 3))
        ci = int(rng.integers(1, 4))
        co = int(rng.integers(1, 4))
        h = int(rng.integers(3, 7))  # >= 3 keeps every grid point's output non-empty
        wd = int(rng.integers(3, 7))
        x = rng.standard_normal((n, ci, h, wd))
        w = rng.standard_normal((ci, co, kern, kern))

        got = nnops.conv_transpose2d(Tensor(x), Tensor(w), None, stride, pad)

        dual_in = Tensor(np.zeros((n, co, got.shape[2], got.shape[3])), requires_grad=True)
        loss = (nnops.conv2d(dual_in, Tensor(w), None, stride, pad) * Tensor(x)).sum()
        loss.backward()
        assert np.max(np.abs(got.data - dual_in.grad)) <= 1e-10


def test_conv_output_size_formulas():
    assert nnops.conv_output_size(64, 4, 2, 1) == 32
    assert nnops.conv_output_size(7, 3, 1, 0) == 5
    assert nnops.conv_transpose_output_size(32, 4, 2, 1) == 64
    assert nnops.conv_transpose_output_size(1, 3, 2, 0) == 3


def test_conv_transpose_single_pixel_expansion():
    # one input pixel paints one kernel copy scaled by the pixel value
    x = np.zeros((1, 1, 1, 1))
    x[0, 0, 0, 0] = 2.5
    w = np.arange(9.0).reshape(1, 1, 3, 3)
    out = nnops.conv_transpose2d(Tensor(x), Tensor(w), None, 2, 0).data
    assert out.shape == (1, 1, 3, 3)
    assert np.array_equal(out[0, 0], 2.5 * w[0, 0])


def test_conv2d_bias_broadcast():
    x = np.zeros((1, 1, 3, 3))
    w = np.zeros((2, 1, 1, 1))
    b = np.array([1.5, -2.0])
    out = nnops.conv2d(Tensor(x), Tensor(w), Tensor(b)).data
    assert np.array_equal(out[0, 0], np.full((3, 3), 1.5))
    assert np.array_equal(out[0, 1], np.full((3, 3), -2.0))


def test_conv2d_validation_errors():
    x = Tensor(np.zeros((1, 3, 8, 8)))
    w = Tensor(np.zeros((4, 3, 3, 3)))
    with pytest.raises(ValueError, match="channels"):
        nnops.conv2d(Tensor(np.zeros((1, 2, 8, 8))), w)
    with pytest.raises(ValueError, match="bias"):
        nnops.conv2d(x, w, Tensor(np.zeros(5)))
    with pytest.raises(ValueError, match="stride"):
        nnops.conv2d(x, w, stride=0)
    with pytest.raises(ValueError, match="pad"):
        nnops.conv2d(x, w, pad=-1)
    with pytest.raises(ValueError, match="4-D"):
        nnops.conv2d(Tensor(np.zeros((3, 8, 8))), w)
    with pytest.raises(ValueError, match="larger than"):
        nnops.conv2d(Tensor(np.zeros((1, 3, 2, 2))), w)


def test_conv_transpose2d_validation_errors():
    x = Tensor(np.zeros((1, 3, 4, 4)))
    w = Tensor(np.zeros((3, 2, 4, 4)))
    with pytest.raises(ValueError, match="pad 4 must be smaller"):
        nnops.conv_transpose2d(x, w, pad=4)
    with pytest.raises(ValueError, match="channels"):
        nnops.conv_transpose2d(Tensor(np.zeros((1, 2, 4, 4))), w)
    with pytest.raises(ValueError, match="bias"):
        nnops.conv_transpose2d(x, w, Tensor(np.zeros(3)))


def test_conv_gradients_spot_check():
    rng = np.random.default_rng(3)
    x = Tensor(rng.standard_normal((2, 2, 5, 5)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 2, 3, 3)) * 0.5, requires_grad=True)
    b = Tensor(rng.standard_normal(3) * 0.1, requires_grad=True)
    err = check_gradients(lambda: nnops.conv2d(x, w, b, 2, 1).abs().mean(), [x, w, b])
    assert err <= 1e-6

    xt = Tensor(rng.standard_normal((1, 3, 3, 3)), requires_grad=True)
    wt = Tensor(rng.standard_normal((3, 2, 4, 4)) * 0.5, requires_grad=True)
    bt = Tensor(rng.standard_normal(2) * 0.1, requires_grad=True)
    err = check_gradients(lambda: nnops.conv_transpose2d(xt, wt, bt, 2, 1).abs().mean(), [xt, wt, bt])
    assert err <= 1e-6


# -- batch norm ----------------------------------------------------------------


def naive_batch_norm(x, gamma, beta, eps):
    out = np.empty_like(x)
    for c in range(x.shape[1]):
        chan = x[:, c]
        mu = chan.mean()
        var = chan.var()  # biased
        out[:, c] = gamma[c] * (chan - mu) / np.sqrt(var + eps) + beta[c]
    return out


def test_batch_norm_matches_scalar_oracle():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((4, 3, 5, 6)) * 2.0 + 1.0
    gamma = 1.0 + 0.3 * rng.standard_normal(3)
    beta = 0.2 * rng.standard_normal(3)
    got = nnops.batch_norm(Tensor(x), Tensor(gamma), Tensor(beta), training=True).data
    want = naive_batch_norm(x, gamma, beta, 1e-5)
    assert np.max(np.abs(got - want)) <= 1e-12


def test_batch_norm_output_statistics():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((8, 4, 6, 6)) * 3.0 - 2.0
    gamma = np.array([1.0, 0.5, 2.0, 1.5])
    beta = np.array([0.0, 1.0, -1.0, 0.25])
    out = nnops.batch_norm(Tensor(x), Tensor(gamma), Tensor(beta), training=True).data
    mean = out.mean(axis=(0, 2, 3))
    var = out.var(axis=(0, 2, 3))
    assert np.all(np.abs(mean - beta) <= 1e-6 * np.abs(beta) + 1e-6)
    assert np.all(np.abs(var - gamma**2) <= 1e-3)


def test_batch_norm_single_sample_standardizes_per_image():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((1, 2, 8, 8)) * 5.0 + 3.0
    out = nnops.batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), training=True).data
    assert np.all(np.abs(out.mean(axis=(0, 2, 3))) <= 1e-10)
    assert np.all(np.abs(out.var(axis=(0, 2, 3)) - 1.0) <= 1e-3)


def test_batch_norm_running_stats_update():
    rng = np.random.default_rng(14)
    x = rng.standard_normal((4, 2, 3, 3)) + 1.0
    rm = np.zeros(2)
    rv = np.ones(2)
    nnops.batch_norm(
        Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)),
        training=True, running_mean=rm, running_var=rv, momentum=0.9,
    )
    mu = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    assert np.allclose(rm, 0.1 * mu)
    assert np.allclose(rv, 0.9 + 0.1 * var)


def test_batch_norm_eval_uses_running_stats():
    x = np.full((1, 1, 2, 2), 3.0)
    rm = np.array([1.0])
    rv = np.array([4.0])
    out = nnops.batch_norm(
        Tensor(x), Tensor(np.array([2.0])), Tensor(np.array([0.5])),
        training=False, running_mean=rm, running_var=rv, eps=1e-5,
    ).data
    want = 2.0 * (3.0 - 1.0) / np.sqrt(4.0 + 1e-5) + 0.5
    assert np.allclose(out, want)


def test_batch_norm_eval_requires_running_stats():
    x = Tensor(np.zeros((1, 1, 2, 2)))
    with pytest.raises(ValueError, match="running statistics"):
        nnops.batch_norm(x, Tensor(np.ones(1)), Tensor(np.zeros(1)), training=False)


def test_batch_norm_validation_errors():
    x = Tensor(np.zeros((1, 2, 2, 2)))
    with pytest.raises(ValueError, match="gamma"):
        nnops.batch_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(2)), training=True)
    with pytest.raises(ValueError, match="eps"):
        nnops.batch_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), training=True, eps=0.0)
    with pytest.raises(ValueError, match="4-D"):
        nnops.batch_norm(Tensor(np.zeros((2, 2))), Tensor(np.ones(2)), Tensor(np.zeros(2)), training=True)


def test_batch_norm_train_gradient():
    rng = np.random.default_rng(15)
    x = Tensor(rng.standard_normal((3, 2, 4, 4)), requires_grad=True)
    gamma = Tensor(1.0 + 0.2 * rng.standard_normal(2), requires_grad=True)
    beta = Tensor(0.1 * rng.standard_normal(2), requires_grad=True)
    mix = Tensor(rng.standard_normal((3, 2, 4, 4)))
    err = check_gradients(
        lambda: (nnops.batch_norm(x, gamma, beta, training=True) * mix).sum(), [x, gamma, beta]
    )
    assert err <= 1e-6


def test_ops_are_deterministic():
    rng = np.random.default_rng(16)
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 4, 4))
    a = nnops.conv2d(Tensor(x), Tensor(w), stride=2, pad=1).data
    b = nnops.conv2d(Tensor(x.copy()), Tensor(w.copy()), stride=2, pad=1).data
    assert a.tobytes() == b.tobytes()
