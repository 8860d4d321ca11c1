"""Adversarial and L1 training objectives.

The discriminator minimizes the mean over the batch of
``-(log D(x, y) + log(1 - D(x, G(x)))) / 2``; the generator minimizes the
non-saturating ``-log D(x, G(x))`` (or, behind a flag, the saturating
``+log(1 - D(x, G(x)))``) plus ``lambda * mean |y - G(x)|``. Probabilities
are clamped away from {0, 1} before any log.
"""

from __future__ import annotations

from dataclasses import dataclass

from vesselgan.autodiff import Tensor

__all__ = [
    "PROB_EPS",
    "LOSS_CSV_HEADER",
    "adversarial_loss_d",
    "adversarial_loss_g",
    "l1_loss",
    "generator_objective",
    "LossReport",
]

PROB_EPS = 1e-7

LOSS_CSV_HEADER = "iter,d_loss,g_adv,g_l1,g_total"


def _check_probs(t: Tensor, name: str) -> None:
    if t.ndim != 1:
        raise ValueError(f"{name}: expected per-sample probabilities of shape (N,), got {t.shape}")
    if t.data.min() < 0.0 or t.data.max() > 1.0:
        raise ValueError(f"{name}: probabilities must lie in [0, 1], got range "
                         f"[{t.data.min()}, {t.data.max()}]")


def adversarial_loss_d(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """Mean over samples of -(log d_real + log(1 - d_fake)) / 2."""
    _check_probs(d_real, "adversarial_loss_d(d_real)")
    _check_probs(d_fake, "adversarial_loss_d(d_fake)")
    if d_real.shape != d_fake.shape:
        raise ValueError(f"adversarial_loss_d: batch mismatch {d_real.shape} vs {d_fake.shape}")
    dr = d_real.clip(PROB_EPS, 1.0 - PROB_EPS)
    df = d_fake.clip(PROB_EPS, 1.0 - PROB_EPS)
    return (-(dr.log() + (1.0 - df).log())).mean() * 0.5


def adversarial_loss_g(d_fake: Tensor, saturating: bool = False) -> Tensor:
    """Generator's adversarial term: -log d_fake, or log(1 - d_fake) when saturating."""
    _check_probs(d_fake, "adversarial_loss_g(d_fake)")
    df = d_fake.clip(PROB_EPS, 1.0 - PROB_EPS)
    if saturating:
        return (1.0 - df).log().mean()
    return (-df.log()).mean()


def l1_loss(target: Tensor, generated: Tensor) -> Tensor:
    """Mean absolute deviation, elementwise over identically shaped maps."""
    if target.shape != generated.shape:
        raise ValueError(f"l1_loss: shape mismatch {target.shape} vs {generated.shape}")
    return (target - generated).abs().mean()


def generator_objective(
    d_fake: Tensor,
    target: Tensor,
    generated: Tensor,
    lam: float = 100.0,
    saturating: bool = False,
) -> tuple[Tensor, Tensor, Tensor]:
    """Return (total, adversarial, l1) with total = adversarial + lam * l1."""
    if lam < 0:
        raise ValueError(f"generator_objective: lam must be non-negative, got {lam}")
    adv = adversarial_loss_g(d_fake, saturating=saturating)
    l1 = l1_loss(target, generated)
    return adv + lam * l1, adv, l1


@dataclass(frozen=True)
class LossReport:
    """Scalars logged once per training step."""

    d_loss: float
    g_adv: float
    g_l1: float
    g_total: float

    def csv_row(self, step: int) -> str:
        return f"{step},{self.d_loss!r},{self.g_adv!r},{self.g_l1!r},{self.g_total!r}"
