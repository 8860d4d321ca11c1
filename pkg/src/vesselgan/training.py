"""Alternating adversarial training, checkpointing, and inference.

Each step takes one (possibly augmented) sample: first the discriminator
descends on real-vs-generated with the generator output detached, then the
generator descends on its adversarial + lambda * L1 objective through the
discriminator. Two optimizers own disjoint parameter sets, so neither step
can move the other network. Everything is deterministic in the config seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

import numpy as np

from vesselgan import losses
from vesselgan.autodiff import Tensor
from vesselgan.checkpoint import load_checkpoint, save_checkpoint
from vesselgan.data import AugmentPolicy, SamplePair, augment, from_model_range, to_model_range
from vesselgan.losses import LossReport
from vesselgan.models import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
)
from vesselgan.optim import Adam

__all__ = [
    "TrainConfig",
    "TrainResult",
    "NonFiniteLossError",
    "load_config",
    "parse_config_text",
    "format_config",
    "build_nets",
    "train_step",
    "train",
    "segment",
    "load_generator",
]

CHECKPOINT_FINAL = "checkpoint_final.vgckpt"
LOSS_CSV = "loss.csv"


class NonFiniteLossError(RuntimeError):
    """A loss term left the reals; training aborted."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 800
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 1
    lambda_l1: float = 100.0
    leak_slope: float = 0.2
    seed: int = 0
    image_side: int = 512
    depth: int = 4
    base_channels: int = 32
    d_steps: int = 1
    g_steps: int = 1
    saturating_g_loss: bool = False
    checkpoint_cadence: int = 100
    out_dir: str = "runs/train"
    augment: bool = True
    augment_rotate_deg: float = 30.0
    augment_flip_h: bool = True
    augment_flip_v: bool = True
    augment_translate_frac: float = 0.1
    augment_intensity_lo: float = 0.8
    augment_intensity_hi: float = 1.2
    augment_shift_lo: float = -0.1
    augment_shift_hi: float = 0.1

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1 or self.d_steps < 1 or self.g_steps < 1:
            raise ValueError("epochs, batch, d_steps, and g_steps must all be >= 1")
        if self.lambda_l1 < 0:
            raise ValueError(f"lambda_l1 must be non-negative, got {self.lambda_l1}")
        if self.checkpoint_cadence < 1:
            raise ValueError(f"checkpoint_cadence must be >= 1, got {self.checkpoint_cadence}")

    def augment_policy(self) -> AugmentPolicy:
        if not self.augment:
            return AugmentPolicy.disabled()
        return AugmentPolicy(
            rotate=self.augment_rotate_deg > 0,
            rotate_deg=self.augment_rotate_deg,
            flip_h=self.augment_flip_h,
            flip_v=self.augment_flip_v,
            translate=self.augment_translate_frac > 0,
            translate_px=int(round(self.augment_translate_frac * self.image_side)),
            intensity=True,
            intensity_scale=(self.augment_intensity_lo, self.augment_intensity_hi),
            intensity_shift=(self.augment_shift_lo, self.augment_shift_hi),
        )


def _coerce(raw: str, target_type):
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    return target_type(raw)


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Flat key=value lines; keys are TrainConfig field names. # comments allowed."""
    defaults = TrainConfig()
    types = {f.name: type(getattr(defaults, f.name)) for f in fields(TrainConfig)}
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in types:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            overrides[key] = _coerce(raw, types[key])
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: bad value for {key}: {exc}") from exc
    return replace(base or TrainConfig(), **overrides)


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ValueError(f"cannot read config file {path}: {exc}") from exc
    try:
        return parse_config_text(text, base)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def format_config(cfg: TrainConfig) -> str:
    return "\n".join(f"{f.name}={getattr(cfg, f.name)}" for f in fields(TrainConfig))


# -- nets and steps ----------------------------------------------------------


def build_nets(cfg: TrainConfig) -> tuple[Generator, Discriminator]:
    gcfg = GeneratorConfig(
        depth=cfg.depth,
        base_channels=cfg.base_channels,
        image_side=cfg.image_side,
        leak_slope=cfg.leak_slope,
    )
    dcfg = DiscriminatorConfig(
        depth=cfg.depth,
        base_channels=cfg.base_channels,
        image_side=cfg.image_side,
        leak_slope=cfg.leak_slope,
    )
    return Generator(gcfg, seed=cfg.seed), Discriminator(dcfg, seed=cfg.seed + 1)


def _pair_tensors(pairs: list[SamplePair]) -> tuple[Tensor, Tensor]:
    xs = np.stack([to_model_range(p.image).transpose(2, 0, 1) for p in pairs])
    ys = np.stack([to_model_range(p.label).transpose(2, 0, 1) for p in pairs])
    return Tensor(xs), Tensor(ys)


def _finite_or_abort(**terms: float) -> None:
    for name, value in terms.items():
        if not np.isfinite(value):
            raise NonFiniteLossError(f"{name} became non-finite ({value}); aborting")


def train_step(
    batch: SamplePair | list[SamplePair],
    gen: Generator,
    disc: Discriminator,
    opt_g: Adam,
    opt_d: Adam,
    lam: float = 100.0,
    *,
    saturating: bool = False,
    d_steps: int = 1,
    g_steps: int = 1,
) -> LossReport:
    """One alternating update on one sample (or stacked batch)."""
    if not (gen.training and disc.training):
        raise ValueError("train_step: both networks must be in train mode")
    pairs = [batch] if isinstance(batch, SamplePair) else list(batch)
    x, y = _pair_tensors(pairs)

    d_loss_val = 0.0
    for _ in range(d_steps):
        fake = gen.forward(x).detach()
        d_real = disc.forward(x, y)
        d_fake = disc.forward(x, fake)
        d_loss = losses.adversarial_loss_d(d_real, d_fake)
        d_loss_val = d_loss.item()
        _finite_or_abort(d_loss=d_loss_val)
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()

    adv_val = l1_val = total_val = 0.0
    for _ in range(g_steps):
        fake = gen.forward(x)
        d_fake = disc.forward(x, fake)
        total, adv, l1 = losses.generator_objective(d_fake, y, fake, lam, saturating=saturating)
        adv_val, l1_val, total_val = adv.item(), l1.item(), total.item()
        _finite_or_abort(g_adv=adv_val, g_l1=l1_val, g_total=total_val)
        opt_g.zero_grad()
        total.backward()
        opt_g.step()

    return LossReport(d_loss=d_loss_val, g_adv=adv_val, g_l1=l1_val, g_total=total_val)


@dataclass(frozen=True)
class TrainResult:
    checkpoint_path: str
    loss_csv_path: str
    steps: int
    final: LossReport


def _checkpoint_state(cfg: TrainConfig, gen: Generator, disc: Discriminator) -> dict:
    state = {
        "meta.image_side": np.array(float(cfg.image_side)),
        "meta.depth": np.array(float(cfg.depth)),
        "meta.base_channels": np.array(float(cfg.base_channels)),
        "meta.input_channels": np.array(float(gen.cfg.input_channels)),
        "meta.output_channels": np.array(float(gen.cfg.output_channels)),
        "meta.leak_slope": np.array(float(cfg.leak_slope)),
    }
    for name, arr in gen.state_dict().items():
        state[f"generator.{name}"] = arr
    for name, arr in disc.state_dict().items():
        state[f"discriminator.{name}"] = arr
    return state


def train(cfg: TrainConfig, dataset: list[SamplePair], *, log=None) -> TrainResult:
    """Run the full loop: epochs x |dataset| steps, CSV log, checkpoints.

    Deterministic in cfg.seed: shuffling, augmentation draws, and weight
    init all derive from it. Aborts (keeping the last checkpoint and the
    CSV so far) if any loss leaves the reals.
    """
    if not dataset:
        raise ValueError("train: dataset is empty")
    for pair in dataset:
        pair.validate()
        if pair.image.shape[:2] != (cfg.image_side, cfg.image_side):
            raise ValueError(
                f"train: sample {pair.id} is {pair.image.shape[:2]}, config wants "
                f"({cfg.image_side}, {cfg.image_side})"
            )

    os.makedirs(cfg.out_dir, exist_ok=True)
    gen, disc = build_nets(cfg)
    opt_g = Adam(gen.parameters(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    opt_d = Adam(disc.parameters(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    policy = cfg.augment_policy()

    csv_path = os.path.join(cfg.out_dir, LOSS_CSV)
    ckpt_path = os.path.join(cfg.out_dir, CHECKPOINT_FINAL)
    step = 0
    report = LossReport(0.0, 0.0, 0.0, 0.0)
    with open(csv_path, "w", newline="") as csv_fh:
        csv_fh.write(losses.LOSS_CSV_HEADER + "\n")
        try:
            for epoch in range(1, cfg.epochs + 1):
                order = rng.permutation(len(dataset))
                for lo in range(0, len(order), cfg.batch):
                    chunk = [dataset[i] for i in order[lo : lo + cfg.batch]]
                    if cfg.augment:
                        chunk = [augment(p, policy, rng) for p in chunk]
                    step += 1
                    report = train_step(
                        chunk,
                        gen,
                        disc,
                        opt_g,
                        opt_d,
                        cfg.lambda_l1,
                        saturating=cfg.saturating_g_loss,
                        d_steps=cfg.d_steps,
                        g_steps=cfg.g_steps,
                    )
                    csv_fh.write(report.csv_row(step) + "\n")
                if log is not None:
                    log(
                        f"epoch {epoch}/{cfg.epochs}  d={report.d_loss:.4f}  "
                        f"adv={report.g_adv:.4f}  l1={report.g_l1:.4f}"
                    )
                if epoch % cfg.checkpoint_cadence == 0 and epoch != cfg.epochs:
                    save_checkpoint(
                        os.path.join(cfg.out_dir, f"checkpoint_epoch{epoch:05d}.vgckpt"),
                        _checkpoint_state(cfg, gen, disc),
                    )
        finally:
            save_checkpoint(ckpt_path, _checkpoint_state(cfg, gen, disc))
    return TrainResult(ckpt_path, csv_path, step, report)


# -- inference ----------------------------------------------------------------


def load_generator(path) -> Generator:
    """Rebuild the generator a checkpoint describes and load its weights."""
    state = load_checkpoint(path)
    needed = ("meta.image_side", "meta.depth", "meta.base_channels",
              "meta.input_channels", "meta.output_channels", "meta.leak_slope")
    missing = [k for k in needed if k not in state]
    if missing:
        raise ValueError(f"{path}: not a generator checkpoint (missing {missing})")
    cfg = GeneratorConfig(
        input_channels=int(state["meta.input_channels"]),
        output_channels=int(state["meta.output_channels"]),
        depth=int(state["meta.depth"]),
        base_channels=int(state["meta.base_channels"]),
        image_side=int(state["meta.image_side"]),
        leak_slope=float(state["meta.leak_slope"]),
    )
    gen = Generator(cfg, seed=0)
    prefix = "generator."
    gen.load_state_dict({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)})
    return gen.eval()


def segment(source: Generator | str, image: np.ndarray) -> np.ndarray:
    """Probability map for one (H, W, 3) image in [0, 1].

    Reflect-pads each side up to the next multiple of 2^depth, runs an
    eval-mode forward, crops back, and maps tanh output to [0, 1].
    """
    gen = source if isinstance(source, Generator) else load_generator(source)
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != gen.cfg.input_channels:
        raise ValueError(f"segment: need an (H, W, {gen.cfg.input_channels}) image, got {image.shape}")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("segment: image values must lie in [0, 1]")
    h, w = image.shape[:2]
    unit = 1 << gen.cfg.depth
    ph = (-h) % unit
    pw = (-w) % unit
    if ph >= h or pw >= w:
        raise ValueError(f"segment: image {image.shape[:2]} too small to reflect-pad to a multiple of {unit}")
    padded = np.pad(image, ((0, ph), (0, pw), (0, 0)), mode="reflect") if (ph or pw) else image

    was_training = gen.training
    gen.eval()
    try:
        x = Tensor(to_model_range(padded).transpose(2, 0, 1)[None])
        out = gen.forward(x)
    finally:
        if was_training:
            gen.train()
    prob = from_model_range(out.data[0].transpose(1, 2, 0))
    return np.ascontiguousarray(prob[:h, :w])
