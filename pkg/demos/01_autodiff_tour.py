"""A walking tour of the autodiff engine.

Everything downstream (convolutions, batch norm, the GAN objective) is built
from the handful of differentiable primitives shown here. Run it from the
repository root:

    python3 demos/01_autodiff_tour.py
"""

import numpy as np

from vesselgan import Tensor, conv2d, sigmoid, tanh
from vesselgan.gradcheck import check_gradients, run_suite


def section(title: str) -> None:
    print(f"\n== {title} ==")


section("scalars and the chain rule")
# f(a, b) = tanh(a * b + a); df/da and df/db by hand for comparison
a = Tensor(np.array([0.7]), requires_grad=True, name="a")
b = Tensor(np.array([-1.3]), requires_grad=True, name="b")
f = tanh(a * b + a)
f.sum().backward()

sech2 = 1.0 - np.tanh(0.7 * -1.3 + 0.7) ** 2
print(f"f           = {f.data[0]:+.6f}")
print(f"df/da       = {a.grad[0]:+.6f}   by hand: {(sech2 * (-1.3 + 1.0)):+.6f}")
print(f"df/db       = {b.grad[0]:+.6f}   by hand: {(sech2 * 0.7):+.6f}")

section("gradients accumulate across uses")
x = Tensor(np.array([2.0]), requires_grad=True)
y = x * x + x * 3.0  # x appears three times; d/dx = 2x + 3
y.sum().backward()
print(f"d(x^2 + 3x)/dx at x=2: {x.grad[0]} (expected 7.0)")

section("a convolution is differentiable end to end")
rng = np.random.default_rng(0)
img = Tensor(rng.standard_normal((1, 3, 8, 8)), requires_grad=True)
kern = Tensor(rng.standard_normal((4, 3, 3, 3)) * 0.1, requires_grad=True)
out = sigmoid(conv2d(img, kern, stride=2, pad=1))
out.mean().backward()
print(f"conv output shape: {out.shape}")
print(f"input grad shape:  {img.grad.shape}, kernel grad shape: {kern.grad.shape}")

worst = check_gradients(lambda: sigmoid(conv2d(img, kern, stride=2, pad=1)).mean(),
                        [img, kern], max_entries=20, rng=rng)
print(f"worst relative error vs central differences: {worst:.2e}")

section("the full finite-difference suite")
results = run_suite(seed=0)
for name, err, tol in results:
    print(f"  {'PASS' if err <= tol else 'FAIL'}  {name:<28} {err:.3e} (tol {tol:.0e})")
