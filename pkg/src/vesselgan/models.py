"""Residual U-shaped generator and strided-conv discriminator.

The generator halves the spatial extent at every encoder stage with a
stride-2 conv (doubling channels up to an 8x cap), runs one residual
bottleneck unit per encoder stage, then mirrors back up with stride-2
transposed convs whose inputs are concatenated with the matching encoder
outputs. LeakyReLU on the way down, ReLU on the way up, batch norm on every
stage, and a 1x1 conv + tanh head mapping to [-1, 1].

The discriminator stacks the conditioning image with the (real or generated)
vessel map on the channel axis, runs `depth` stride-2 convs (batch norm on
all but the first), and collapses a 1x1-conv score map through a sigmoid and
spatial mean into one probability per sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vesselgan import autodiff as ad
from vesselgan.autodiff import Tensor
from vesselgan.layers import BatchNorm2d, Conv2d, ConvTranspose2d

__all__ = [
    "GeneratorConfig",
    "DiscriminatorConfig",
    "Generator",
    "Discriminator",
    "ResidualBottleneck",
    "Network",
    "LayerRow",
    "build_generator",
    "build_discriminator",
    "format_layer_table",
]

STRIDED_KERNEL = 4  # stride-2 stages: kernel 4, pad 1 halves/doubles exactly


@dataclass(frozen=True)
class GeneratorConfig:
    input_channels: int = 3
    output_channels: int = 1
    depth: int = 4
    base_channels: int = 32
    image_side: int = 512
    leak_slope: float = 0.2

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 2 or self.base_channels % 2:
            raise ValueError(
                f"base_channels must be even and >= 2 for the bottleneck halving, got {self.base_channels}"
            )
        if self.input_channels < 1 or self.output_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.image_side % (1 << self.depth):
            raise ValueError(
                f"image_side {self.image_side} is not divisible by 2^depth = {1 << self.depth}"
            )
        if not 0.0 < self.leak_slope < 1.0:
            raise ValueError(f"leak_slope must be in (0, 1), got {self.leak_slope}")


@dataclass(frozen=True)
class DiscriminatorConfig:
    x_channels: int = 3
    y_channels: int = 1
    depth: int = 4
    base_channels: int = 32
    image_side: int = 512
    leak_slope: float = 0.2

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be positive, got {self.base_channels}")
        if self.x_channels < 1 or self.y_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.image_side % (1 << self.depth):
            raise ValueError(
                f"image_side {self.image_side} is not divisible by 2^depth = {1 << self.depth}"
            )
        if not 0.0 < self.leak_slope < 1.0:
            raise ValueError(f"leak_slope must be in (0, 1), got {self.leak_slope}")


def encoder_channels(depth: int, base: int) -> list[int]:
    """Doubling schedule capped at 8x base: base * 2^min(i, 3)."""
    return [base * (1 << min(i, 3)) for i in range(depth)]


def decoder_channels(depth: int, base: int) -> list[int]:
    """Mirror of the encoder; the last stage lands back at base channels."""
    enc = encoder_channels(depth, base)
    return [enc[depth - 2 - j] if j <= depth - 2 else base for j in range(depth)]


@dataclass(frozen=True)
class LayerRow:
    name: str
    kind: str
    in_shape: tuple
    out_shape: tuple
    n_params: int


def format_layer_table(rows, total: int | None = None) -> str:
    heads = ("layer", "kind", "in", "out", "params")
    table = [heads] + [
        (r.name, r.kind, _fmt_shape(r.in_shape), _fmt_shape(r.out_shape), str(r.n_params))
        for r in rows
    ]
    widths = [max(len(row[i]) for row in table) for i in range(5)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in table]
    if total is not None:
        lines.append(f"total parameters: {total}")
    return "\n".join(lines)


def _fmt_shape(s) -> str:
    if s and isinstance(s[0], tuple):
        return "+".join(_fmt_shape(t) for t in s)
    return "(" + ",".join(str(d) for d in s) + ")"


class Network:
    """Ordered module collection with a flat, unique-named parameter store."""

    def __init__(self):
        self._modules = []
        self._rows: list[LayerRow] = []
        self._mode = "train"

    def _register(self, module):
        self._modules.append(module)
        return module

    def _row(self, name, kind, in_shape, out_shape, n_params=0):
        self._rows.append(LayerRow(name, kind, in_shape, out_shape, n_params))

    def named_parameters(self):
        seen = set()
        for mod in self._modules:
            for name, t in mod.named_params():
                if name in seen:
                    raise ValueError(f"duplicate parameter name {name!r}")
                seen.add(name)
                yield name, t

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def named_buffers(self):
        for mod in self._modules:
            yield from mod.named_buffers()

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: t.data for name, t in self.named_parameters()}
        for name, arr in self.named_buffers():
            state[name] = arr
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """Copy values in place; every parameter and buffer must be present."""
        own = self.state_dict()
        missing = sorted(set(own) - set(state))
        if missing:
            raise ValueError(f"state dict is missing entries: {missing[:5]}{'...' if len(missing) > 5 else ''}")
        for name, arr in own.items():
            src = np.asarray(state[name])
            if src.shape != arr.shape:
                raise ValueError(f"state entry {name!r} has shape {src.shape}, expected {arr.shape}")
            arr[...] = src

    def train(self):
        self._mode = "train"
        return self

    def eval(self):
        self._mode = "eval"
        return self

    @property
    def training(self) -> bool:
        return self._mode == "train"

    def layer_table(self) -> list[LayerRow]:
        return list(self._rows)

    def n_parameters(self) -> int:
        return sum(t.size for t in self.parameters())

    def describe(self) -> str:
        return format_layer_table(self._rows, self.n_parameters())

    def zero_grad(self):
        for t in self.parameters():
            t.zero_grad()


class ResidualBottleneck:
    """x + f(x) where f squeezes to half the channels and back.

    f = 1x1 conv (C -> C/2) -> BN -> activation -> 3x3 conv pad 1 (C/2 -> C) -> BN.
    With the restore conv and its BN shift zeroed, f vanishes and the unit is
    an exact (bitwise) pass-through.
    """

    def __init__(self, name, channels, *, act="leaky_relu", slope=0.2, rng, dtype=np.float64):
        if channels % 2:
            raise ValueError(f"{name}: residual bottleneck needs an even channel count, got {channels}")
        half = channels // 2
        self.name = name
        self.channels = channels
        self.act = act
        self.slope = slope
        self.reduce = Conv2d(f"{name}.reduce", channels, half, 1, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm2d(f"{name}.bn1", half, dtype=dtype)
        self.restore = Conv2d(f"{name}.restore", half, channels, 3, pad=1, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2d(f"{name}.bn2", channels, dtype=dtype)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        h = self.reduce(x)
        h = self.bn1(h, training)
        h = ad.activation(h, self.act, self.slope)
        h = self.restore(h)
        h = self.bn2(h, training)
        return x + h

    def named_params(self):
        for mod in (self.reduce, self.bn1, self.restore, self.bn2):
            yield from mod.named_params()

    def named_buffers(self):
        for mod in (self.bn1, self.bn2):
            yield from mod.named_buffers()

    @property
    def n_params(self) -> int:
        return sum(m.n_params for m in (self.reduce, self.bn1, self.restore, self.bn2))


class Generator(Network):
    def __init__(self, cfg: GeneratorConfig, seed: int = 0, dtype=np.float64):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        d, b, s = cfg.depth, cfg.base_channels, cfg.image_side
        enc_ch = encoder_channels(d, b)
        dec_ch = decoder_channels(d, b)

        self.enc_convs, self.enc_bns, self.enc_res = [], [], []
        in_ch, side = cfg.input_channels, s
        for i, out_ch in enumerate(enc_ch):
            conv = self._register(Conv2d(f"enc{i}.conv", in_ch, out_ch, STRIDED_KERNEL, 2, 1, rng=rng, dtype=dtype))
            bn = self._register(BatchNorm2d(f"enc{i}.bn", out_ch, dtype=dtype))
            res = self._register(ResidualBottleneck(f"enc{i}.res", out_ch, act="leaky_relu", slope=cfg.leak_slope, rng=rng, dtype=dtype))
            self.enc_convs.append(conv)
            self.enc_bns.append(bn)
            self.enc_res.append(res)
            half = side // 2
            self._row(conv.name, "conv s2", (in_ch, side, side), (out_ch, half, half), conv.n_params)
            self._row(bn.name, "batchnorm", (out_ch, half, half), (out_ch, half, half), bn.n_params)
            self._row(f"enc{i}.lrelu", "leaky_relu", (out_ch, half, half), (out_ch, half, half))
            self._row(res.name, "residual", (out_ch, half, half), (out_ch, half, half), res.n_params)
            in_ch, side = out_ch, half

        self.dec_convs, self.dec_bns = [], []
        for j, out_ch in enumerate(dec_ch):
            if j == 0:
                in_ch = enc_ch[d - 1]
                in_shape = (in_ch, side, side)
            else:
                skip_ch = enc_ch[d - 1 - j]
                in_ch = dec_ch[j - 1] + skip_ch
                in_shape = ((dec_ch[j - 1], side, side), (skip_ch, side, side))
                self._row(f"dec{j}.concat", "concat", in_shape, (in_ch, side, side))
                in_shape = (in_ch, side, side)
            convt = self._register(ConvTranspose2d(f"dec{j}.convt", in_ch, out_ch, STRIDED_KERNEL, 2, 1, rng=rng, dtype=dtype))
            bn = self._register(BatchNorm2d(f"dec{j}.bn", out_ch, dtype=dtype))
            self.dec_convs.append(convt)
            self.dec_bns.append(bn)
            double = side * 2
            self._row(convt.name, "convT s2", in_shape, (out_ch, double, double), convt.n_params)
            self._row(bn.name, "batchnorm", (out_ch, double, double), (out_ch, double, double), bn.n_params)
            self._row(f"dec{j}.relu", "relu", (out_ch, double, double), (out_ch, double, double))
            side = double

        self.head = self._register(Conv2d("head.conv", b, cfg.output_channels, 1, rng=rng, dtype=dtype))
        self._row("head.conv", "conv 1x1", (b, side, side), (cfg.output_channels, side, side), self.head.n_params)
        self._row("head.tanh", "tanh", (cfg.output_channels, side, side), (cfg.output_channels, side, side))

    def forward(self, x: Tensor, skip_scales=None) -> Tensor:
        """Map an image batch to vessel maps in [-1, 1].

        skip_scales, when given, holds one multiplier per skip connection
        (encoder stages 0 .. depth-2) applied where that encoder output
        enters its decoder concat -- a probe for wiring tests, 1.0 elsewhere.
        """
        cfg = self.cfg
        d = cfg.depth
        if x.ndim != 4:
            raise ValueError(f"generator: need a 4-D input batch, got shape {x.shape}")
        n, c, h, w = x.shape
        if c != cfg.input_channels:
            raise ValueError(f"generator: expected {cfg.input_channels} input channels, got {c}")
        if h % (1 << d) or w % (1 << d):
            raise ValueError(
                f"generator: spatial size ({h}, {w}) must be divisible by 2^depth = {1 << d}"
            )
        if skip_scales is not None and len(skip_scales) != max(d - 1, 0):
            raise ValueError(f"generator: skip_scales needs {d - 1} entries, got {len(skip_scales)}")
        training = self.training

        skips = []
        h_t = x
        for conv, bn, res in zip(self.enc_convs, self.enc_bns, self.enc_res):
            h_t = conv(h_t)
            h_t = bn(h_t, training)
            h_t = ad.leaky_relu(h_t, cfg.leak_slope)
            h_t = res(h_t, training)
            skips.append(h_t)

        h_t = skips[-1]
        for j, (convt, bn) in enumerate(zip(self.dec_convs, self.dec_bns)):
            if j > 0:
                skip = skips[d - 1 - j]
                if skip_scales is not None:
                    skip = skip * float(skip_scales[d - 1 - j])
                h_t = ad.concat([h_t, skip], axis=1)
            h_t = convt(h_t)
            h_t = bn(h_t, training)
            h_t = ad.relu(h_t)

        return ad.tanh(self.head(h_t))

    __call__ = forward


class Discriminator(Network):
    def __init__(self, cfg: DiscriminatorConfig, seed: int = 0, dtype=np.float64):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        d, b, s = cfg.depth, cfg.base_channels, cfg.image_side
        chans = encoder_channels(d, b)

        in_ch = cfg.x_channels + cfg.y_channels
        self._row("stack", "concat", ((cfg.x_channels, s, s), (cfg.y_channels, s, s)), (in_ch, s, s))
        self.convs, self.bns = [], []
        side = s
        for i, out_ch in enumerate(chans):
            conv = self._register(Conv2d(f"disc{i}.conv", in_ch, out_ch, STRIDED_KERNEL, 2, 1, rng=rng, dtype=dtype))
            bn = self._register(BatchNorm2d(f"disc{i}.bn", out_ch, dtype=dtype)) if i > 0 else None
            self.convs.append(conv)
            self.bns.append(bn)
            half = side // 2
            self._row(conv.name, "conv s2", (in_ch, side, side), (out_ch, half, half), conv.n_params)
            if bn is not None:
                self._row(bn.name, "batchnorm", (out_ch, half, half), (out_ch, half, half), bn.n_params)
            self._row(f"disc{i}.lrelu", "leaky_relu", (out_ch, half, half), (out_ch, half, half))
            in_ch, side = out_ch, half

        self.head = self._register(Conv2d("score.conv", in_ch, 1, 1, rng=rng, dtype=dtype))
        self._row("score.conv", "conv 1x1", (in_ch, side, side), (1, side, side), self.head.n_params)
        self._row("score.sigmoid", "sigmoid", (1, side, side), (1, side, side))
        self._row("score.mean", "mean", (1, side, side), (1,))

    def forward(self, x: Tensor, y: Tensor) -> Tensor:
        """Probability per sample that (x, y) is a real pair; shape (N,)."""
        cfg = self.cfg
        if x.ndim != 4 or y.ndim != 4:
            raise ValueError(f"discriminator: need 4-D batches, got {x.shape} and {y.shape}")
        if x.shape[0] != y.shape[0] or x.shape[2:] != y.shape[2:]:
            raise ValueError(
                f"discriminator: image batch {x.shape} and map batch {y.shape} must agree on batch and spatial dims"
            )
        if x.shape[1] != cfg.x_channels or y.shape[1] != cfg.y_channels:
            raise ValueError(
                f"discriminator: expected {cfg.x_channels}+{cfg.y_channels} channels, got {x.shape[1]}+{y.shape[1]}"
            )
        training = self.training
        h = ad.concat([x, y], axis=1)
        for conv, bn in zip(self.convs, self.bns):
            h = conv(h)
            if bn is not None:
                h = bn(h, training)
            h = ad.leaky_relu(h, cfg.leak_slope)
        score = ad.sigmoid(self.head(h))
        return score.mean(axis=(1, 2, 3))

    __call__ = forward


def build_generator(cfg: GeneratorConfig, seed: int = 0, dtype=np.float64) -> Generator:
    return Generator(cfg, seed=seed, dtype=dtype)


def build_discriminator(cfg: DiscriminatorConfig, seed: int = 0, dtype=np.float64) -> Discriminator:
    return Discriminator(cfg, seed=seed, dtype=dtype)
