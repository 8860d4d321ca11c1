"""Convolution, transposed convolution, and batch normalization.

Each is a single autodiff node with a hand-derived backward pass built on
im2col / col2im (strided views plus one matmul); the naive loop references
they are checked against live in the test suite. conv2d is plain
cross-correlation -- kernels are never flipped. conv_transpose2d is defined
as the gradient of conv2d with respect to its input, which the two share
machinery with below.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from vesselgan.autodiff import Tensor, _make

__all__ = ["conv2d", "conv_transpose2d", "batch_norm", "conv_output_size", "conv_transpose_output_size"]


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv_transpose_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size - 1) * stride - 2 * pad + kernel


def _check_conv_args(stride: int, pad: int, op: str) -> None:
    if not isinstance(stride, (int, np.integer)) or stride < 1:
        raise ValueError(f"{op}: stride must be a positive integer, got {stride!r}")
    if not isinstance(pad, (int, np.integer)) or pad < 0:
        raise ValueError(f"{op}: pad must be a non-negative integer, got {pad!r}")


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """(N, C, H, W) -> (N, C*kh*kw, Ho*Wo) patch matrix."""
    n, c, h, w = x.shape
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    sn, sc, sh, sw = x.strides
    patches = as_strided(
        x,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, stride * sh, stride * sw),
    )
    return patches.reshape(n, c * kh * kw, ho * wo)


def _col2im(cols, n, c, h, w, kh, kw, stride, pad):
    """Scatter-add the inverse of _im2col: (N, C*kh*kw, Ho*Wo) -> (N, C, H, W)."""
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)
    c6 = cols.reshape(n, c, kh, kw, ho, wo)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += c6[:, :, i, j]
    return out[:, :, pad : pad + h, pad : pad + w]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Strided 2-D cross-correlation.

    x       -- (N, Cin, H, W)
    weight  -- (Cout, Cin, kh, kw)
    bias    -- (Cout,) or None
    returns -- (N, Cout, Ho, Wo) with Ho = (H + 2*pad - kh)//stride + 1
    """
    _check_conv_args(stride, pad, "conv2d")
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d: need 4-D input and weight, got {x.shape} and {weight.shape}")
    n, ci, h, w = x.shape
    co, wci, kh, kw = weight.shape
    if ci != wci:
        raise ValueError(
            f"conv2d: input has {ci} channels but weight expects {wci} (input {x.shape}, weight {weight.shape})"
        )
    if bias is not None and bias.shape != (co,):
        raise ValueError(f"conv2d: bias shape {bias.shape} does not match {co} output channels")
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ValueError(
            f"conv2d: kernel ({kh}, {kw}) larger than padded input ({h + 2 * pad}, {w + 2 * pad})"
        )
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)

    cols = _im2col(x.data, kh, kw, stride, pad)
    out = np.matmul(weight.data.reshape(co, -1), cols).reshape(n, co, ho, wo)
    if bias is not None:
        out = out + bias.data.reshape(1, co, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        go = g.reshape(n, co, ho * wo)
        gx = gw = gb = None
        if x.requires_grad:
            cols_g = np.matmul(weight.data.reshape(co, -1).T, go)
            gx = _col2im(cols_g, n, ci, h, w, kh, kw, stride, pad)
        if weight.requires_grad:
            gw = np.matmul(go, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if bias is None else (gx, gw, gb)

    return _make(out, parents, vjp, "conv2d")


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Transposed 2-D convolution (the gradient of conv2d w.r.t. its input).

    x       -- (N, Cin, H, W)
    weight  -- (Cin, Cout, kh, kw)
    bias    -- (Cout,) or None
    returns -- (N, Cout, Ho, Wo) with Ho = (H - 1)*stride - 2*pad + kh
    """
    _check_conv_args(stride, pad, "conv_transpose2d")
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv_transpose2d: need 4-D input and weight, got {x.shape} and {weight.shape}")
    n, ci, h, w = x.shape
    wci, co, kh, kw = weight.shape
    if ci != wci:
        raise ValueError(
            f"conv_transpose2d: input has {ci} channels but weight expects {wci} "
            f"(input {x.shape}, weight {weight.shape})"
        )
    if bias is not None and bias.shape != (co,):
        raise ValueError(f"conv_transpose2d: bias shape {bias.shape} does not match {co} output channels")
    if pad >= kh or pad >= kw:
        raise ValueError(f"conv_transpose2d: pad {pad} must be smaller than kernel ({kh}, {kw})")
    ho = conv_transpose_output_size(h, kh, stride, pad)
    wo = conv_transpose_output_size(w, kw, stride, pad)

    cols = np.matmul(weight.data.reshape(ci, -1).T, x.data.reshape(n, ci, h * w))
    out = _col2im(cols, n, co, ho, wo, kh, kw, stride, pad)
    if bias is not None:
        out = out + bias.data.reshape(1, co, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        gx = gw = gb = None
        cols_g = None
        if x.requires_grad or weight.requires_grad:
            cols_g = _im2col(g, kh, kw, stride, pad)
        if x.requires_grad:
            gx = np.matmul(weight.data.reshape(ci, -1), cols_g).reshape(n, ci, h, w)
        if weight.requires_grad:
            gw = (
                np.matmul(x.data.reshape(n, ci, h * w), cols_g.transpose(0, 2, 1))
                .sum(axis=0)
                .reshape(weight.shape)
            )
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if bias is None else (gx, gw, gb)

    return _make(out, parents, vjp, "conv_transpose2d")


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    *,
    training: bool,
    eps: float = 1e-5,
    running_mean: np.ndarray | None = None,
    running_var: np.ndarray | None = None,
    momentum: float = 0.9,
) -> Tensor:
    """Per-channel standardization with a learned affine.

    Train mode standardizes with the batch statistics over (N, H, W) --
    which at batch size 1 degenerates to per-image (H, W) stats -- and, when
    running buffers are supplied, folds the batch stats into them with
    ``running = momentum*running + (1-momentum)*batch`` (momentum is the
    retention factor of the old value). Eval mode standardizes with the
    running buffers and refuses to run without them. Population (biased)
    variance everywhere.
    """
    if x.ndim != 4:
        raise ValueError(f"batch_norm: need a 4-D input, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(
            f"batch_norm: gamma {gamma.shape} / beta {beta.shape} must both be ({c},) for {c} channels"
        )
    if eps <= 0:
        raise ValueError(f"batch_norm: eps must be positive, got {eps}")
    axes = (0, 2, 3)
    chan = (1, c, 1, 1)

    if training:
        m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running_mean is not None:
            running_mean[:] = momentum * running_mean + (1.0 - momentum) * mu
        if running_var is not None:
            running_var[:] = momentum * running_var + (1.0 - momentum) * var
        rstd = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu.reshape(chan)) * rstd.reshape(chan)
        out = gamma.data.reshape(chan) * xhat + beta.data.reshape(chan)

        def vjp(g):
            gbeta = g.sum(axis=axes)
            ggamma = (g * xhat).sum(axis=axes)
            gx = None
            if x.requires_grad:
                gx = (gamma.data * rstd).reshape(chan) / m * (
                    m * g - gbeta.reshape(chan) - xhat * ggamma.reshape(chan)
                )
            return (
                gx,
                ggamma if gamma.requires_grad else None,
                gbeta if beta.requires_grad else None,
            )

        return _make(out, (x, gamma, beta), vjp, "batch_norm")

    if running_mean is None or running_var is None:
        raise ValueError("batch_norm: eval mode needs populated running statistics")
    rstd = 1.0 / np.sqrt(running_var + eps)
    xhat = (x.data - running_mean.reshape(chan)) * rstd.reshape(chan)
    out = gamma.data.reshape(chan) * xhat + beta.data.reshape(chan)

    def vjp(g):
        gx = (gamma.data * rstd).reshape(chan) * g if x.requires_grad else None
        return (
            gx,
            (g * xhat).sum(axis=axes) if gamma.requires_grad else None,
            g.sum(axis=axes) if beta.requires_grad else None,
        )

    return _make(out, (x, gamma, beta), vjp, "batch_norm")
