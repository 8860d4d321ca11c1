"""Parameterized layers: thin named wrappers over the tensor primitives.

Weight init is fan-in-scaled Gaussian (std = sqrt(2 / fan_in)) with zero
biases; batch norm starts at gamma=1, beta=0. Every parameter and buffer
carries a dotted name so networks can expose a flat, unique parameter store.
"""

from __future__ import annotations

import numpy as np

from vesselgan import nnops
from vesselgan.autodiff import Tensor

__all__ = ["Conv2d", "ConvTranspose2d", "BatchNorm2d"]


class Conv2d:
    def __init__(self, name, in_channels, out_channels, kernel, stride=1, pad=0, *, rng, dtype=np.float64):
        std = np.sqrt(2.0 / (in_channels * kernel * kernel))
        w = rng.normal(0.0, std, size=(out_channels, in_channels, kernel, kernel))
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self.weight = Tensor(w.astype(dtype), requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return nnops.conv2d(x, self.weight, self.bias, self.stride, self.pad)

    def named_params(self):
        yield self.weight.name, self.weight
        yield self.bias.name, self.bias

    def named_buffers(self):
        return ()

    def out_size(self, size: int) -> int:
        return nnops.conv_output_size(size, self.kernel, self.stride, self.pad)

    @property
    def n_params(self) -> int:
        return self.weight.size + self.bias.size


class ConvTranspose2d:
    def __init__(self, name, in_channels, out_channels, kernel, stride=1, pad=0, *, rng, dtype=np.float64):
        std = np.sqrt(2.0 / (in_channels * kernel * kernel))
        w = rng.normal(0.0, std, size=(in_channels, out_channels, kernel, kernel))
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self.weight = Tensor(w.astype(dtype), requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return nnops.conv_transpose2d(x, self.weight, self.bias, self.stride, self.pad)

    def named_params(self):
        yield self.weight.name, self.weight
        yield self.bias.name, self.bias

    def named_buffers(self):
        return ()

    def out_size(self, size: int) -> int:
        return nnops.conv_transpose_output_size(size, self.kernel, self.stride, self.pad)

    @property
    def n_params(self) -> int:
        return self.weight.size + self.bias.size


class BatchNorm2d:
    """Batch norm layer owning its running statistics.

    Running buffers start at mean 0 / var 1 but are considered unpopulated
    until the first train-mode forward (or a checkpoint load) bumps the
    batch counter; eval mode refuses to run before that.
    """

    def __init__(self, name, channels, *, eps=1e-5, momentum=0.9, dtype=np.float64):
        self.name = name
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True, name=f"{name}.gamma")
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True, name=f"{name}.beta")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.num_batches = np.zeros((), dtype=dtype)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if training:
            out = nnops.batch_norm(
                x,
                self.gamma,
                self.beta,
                training=True,
                eps=self.eps,
                running_mean=self.running_mean,
                running_var=self.running_var,
                momentum=self.momentum,
            )
            self.num_batches += 1
            return out
        if self.num_batches == 0:
            raise ValueError(
                f"{self.name}: eval-mode batch norm before any train step or checkpoint load"
            )
        return nnops.batch_norm(
            x,
            self.gamma,
            self.beta,
            training=False,
            eps=self.eps,
            running_mean=self.running_mean,
            running_var=self.running_var,
        )

    def named_params(self):
        yield self.gamma.name, self.gamma
        yield self.beta.name, self.beta

    def named_buffers(self):
        yield f"{self.name}.running_mean", self.running_mean
        yield f"{self.name}.running_var", self.running_var
        yield f"{self.name}.num_batches", self.num_batches

    @property
    def n_params(self) -> int:
        return self.gamma.size + self.beta.size
