"""Central finite-difference gradient checking.

Used by the test suite and the ``vesselgan gradcheck`` subcommand. Errors
are reported as |analytic - numeric| / max(|analytic|, |numeric|, 1): plain
relative error for large gradients, absolute for small ones, so a dead-zero
entry can't blow the ratio up.
"""

from __future__ import annotations

import numpy as np

from vesselgan import autodiff as ad
from vesselgan import losses, nnops
from vesselgan.autodiff import Tensor
from vesselgan.models import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
)

__all__ = ["fd_gradient", "max_rel_error", "check_gradients", "run_suite"]


def fd_gradient(loss_fn, arr: np.ndarray, h: float = 1e-5, entries=None) -> dict[tuple, float]:
    """Central differences of a scalar-valued loss_fn w.r.t. entries of arr.

    arr is perturbed in place and restored. entries is an iterable of index
    tuples; None means every entry.
    """
    if entries is None:
        entries = list(np.ndindex(arr.shape))
    out = {}
    for idx in entries:
        keep = arr[idx]
        arr[idx] = keep + h
        hi = loss_fn()
        arr[idx] = keep - h
        lo = loss_fn()
        arr[idx] = keep
        out[idx] = (hi - lo) / (2.0 * h)
    return out


def max_rel_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1.0)


def check_gradients(loss_fn, tensors, h: float = 1e-5, max_entries: int | None = None, rng=None) -> float:
    """Worst relative error between backward() and finite differences.

    loss_fn builds a fresh scalar loss from the current tensor values. For
    each tensor, up to max_entries randomly chosen entries are probed (all
    of them when None).
    """
    tensors = list(tensors)
    for t in tensors:
        t.grad = None
    loss_fn().backward()
    grads = [
        np.zeros_like(t.data) if t.grad is None else np.array(t.grad, copy=True)
        for t in tensors
    ]

    def value():
        return loss_fn().item()

    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for t, g in zip(tensors, grads):
        if max_entries is None or t.size <= max_entries:
            entries = list(np.ndindex(t.data.shape))
        else:
            flat = rng.choice(t.size, size=max_entries, replace=False)
            entries = [np.unravel_index(i, t.data.shape) for i in flat]
        numeric = fd_gradient(value, t.data, h=h, entries=entries)
        for idx, fd in numeric.items():
            worst = max(worst, max_rel_error(g[idx], fd))
    return worst


# -- the named suite the CLI and the acceptance test run --------------------


def _rand(rng, *shape):
    return rng.standard_normal(shape)


def run_suite(seed: int = 0) -> list[tuple[str, float, float]]:
    """Run every primitive plus composed-network check.

    Returns (name, worst_rel_error, tolerance) triples; a check passes when
    error <= tolerance.
    """
    rng = np.random.default_rng(seed)
    results = []

    def add(name, err, tol):
        results.append((name, float(err), tol))

    # conv2d wrt input, weight, bias
    x = Tensor(_rand(rng, 2, 3, 6, 7), requires_grad=True)
    w = Tensor(_rand(rng, 4, 3, 3, 3) * 0.5, requires_grad=True)
    b = Tensor(_rand(rng, 4) * 0.1, requires_grad=True)
    add("conv2d", check_gradients(lambda: nnops.conv2d(x, w, b, stride=2, pad=1).sum(), [x, w, b]), 1e-4)

    # conv_transpose2d
    xt = Tensor(_rand(rng, 2, 3, 4, 5), requires_grad=True)
    wt = Tensor(_rand(rng, 3, 4, 4, 4) * 0.5, requires_grad=True)
    bt = Tensor(_rand(rng, 4) * 0.1, requires_grad=True)
    add(
        "conv_transpose2d",
        check_gradients(lambda: nnops.conv_transpose2d(xt, wt, bt, stride=2, pad=1).sum(), [xt, wt, bt]),
        1e-4,
    )

    # batch_norm, train and eval
    xb = Tensor(_rand(rng, 3, 4, 5, 5), requires_grad=True)
    gam = Tensor(1.0 + 0.2 * _rand(rng, 4), requires_grad=True)
    bet = Tensor(0.2 * _rand(rng, 4), requires_grad=True)
    mix = Tensor(_rand(rng, 3, 4, 5, 5))

    def bn_train_loss():
        out = nnops.batch_norm(xb, gam, bet, training=True)
        return (out * mix).sum()  # break the symmetry a plain sum would keep

    add("batch_norm train", check_gradients(bn_train_loss, [xb, gam, bet]), 1e-4)

    rm = _rand(rng, 4) * 0.3
    rv = 1.0 + 0.5 * np.abs(_rand(rng, 4))
    add(
        "batch_norm eval",
        check_gradients(
            lambda: (nnops.batch_norm(xb, gam, bet, training=False, running_mean=rm, running_var=rv) * mix).sum(),
            [xb, gam, bet],
        ),
        1e-4,
    )

    # activations, tight tolerance
    for kind in ("relu", "leaky_relu", "tanh", "sigmoid"):
        xa = Tensor(_rand(rng, 5, 7) + 0.05, requires_grad=True)  # nudge off the relu kink
        wmix = Tensor(_rand(rng, 5, 7))
        add(
            f"activation {kind}",
            check_gradients(lambda: (ad.activation(xa, kind, 0.2) * wmix).sum(), [xa]),
            1e-6,
        )

    # losses on raw probability vectors
    pr = Tensor(0.2 + 0.6 * rng.random(6), requires_grad=True)
    pf = Tensor(0.2 + 0.6 * rng.random(6), requires_grad=True)
    add("adversarial_loss_d", check_gradients(lambda: losses.adversarial_loss_d(pr, pf), [pr, pf]), 1e-4)
    add("adversarial_loss_g", check_gradients(lambda: losses.adversarial_loss_g(pf), [pf]), 1e-4)
    add(
        "adversarial_loss_g saturating",
        check_gradients(lambda: losses.adversarial_loss_g(pf, saturating=True), [pf]),
        1e-4,
    )
    ta = Tensor(_rand(rng, 2, 1, 4, 4), requires_grad=True)
    tb = Tensor(_rand(rng, 2, 1, 4, 4), requires_grad=True)
    add("l1_loss", check_gradients(lambda: losses.l1_loss(ta, tb), [ta, tb]), 1e-4)

    # composed 16x16 generator and discriminator
    gcfg = GeneratorConfig(depth=2, base_channels=4, image_side=16)
    gen = Generator(gcfg, seed=seed)
    gx = Tensor(rng.uniform(-1, 1, (1, 3, 16, 16)))
    gmix = Tensor(_rand(rng, 1, 1, 16, 16))
    gparams = gen.parameters()
    add(
        "generator 16x16",
        check_gradients(lambda: (gen.forward(gx) * gmix).sum(), gparams, max_entries=4, rng=rng),
        1e-4,
    )

    dcfg = DiscriminatorConfig(depth=2, base_channels=4, image_side=16)
    disc = Discriminator(dcfg, seed=seed + 1)
    dx = Tensor(rng.uniform(-1, 1, (1, 3, 16, 16)))
    dy = Tensor(rng.uniform(-1, 1, (1, 1, 16, 16)))
    add(
        "discriminator 16x16",
        check_gradients(lambda: losses.adversarial_loss_g(disc.forward(dx, dy)), disc.parameters(), max_entries=4, rng=rng),
        1e-4,
    )

    # generator objective end to end: grads reach the generator through D
    ytgt = Tensor(rng.uniform(-1, 1, (1, 1, 16, 16)))

    def objective():
        g_out = gen.forward(gx)
        total, _, _ = losses.generator_objective(disc.forward(dx, g_out), ytgt, g_out, lam=10.0)
        return total

    add(
        "generator_objective through D",
        check_gradients(objective, gparams, max_entries=2, rng=rng),
        1e-4,
    )

    return results


def suite_passed(results) -> bool:
    return all(err <= tol for _, err, tol in results)
