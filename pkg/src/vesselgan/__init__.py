"""Conditional-GAN retinal vessel segmentation on a minimal numpy autodiff core.

The pieces, bottom to top: an autodiff tensor engine (`autodiff`, `nnops`,
`optim`), a residual U-shaped generator and patch-style discriminator
(`models`), the adversarial + L1 objective (`losses`), data loading /
augmentation / synthetic phantoms (`data`, `phantom`, `imgio`), the training
loop and inference (`training`, `checkpoint`), evaluation (`metrics`), and a
CLI (`cli`).
"""

from vesselgan.autodiff import NonFiniteError, Tensor, activation, concat, leaky_relu, relu, sigmoid, tanh
from vesselgan.checkpoint import load_checkpoint, save_checkpoint
from vesselgan.data import (
    AugmentPolicy,
    SamplePair,
    augment,
    from_model_range,
    load_manifest,
    to_model_range,
)
from vesselgan.losses import (
    LossReport,
    adversarial_loss_d,
    adversarial_loss_g,
    generator_objective,
    l1_loss,
)
from vesselgan.metrics import binarize, confusion, evaluate_set, scores
from vesselgan.models import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    build_discriminator,
    build_generator,
)
from vesselgan.nnops import batch_norm, conv2d, conv_transpose2d
from vesselgan.optim import Adam
from vesselgan.phantom import PhantomConfig, gen_phantom
from vesselgan.training import TrainConfig, load_generator, segment, train, train_step

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "NonFiniteError",
    "activation",
    "concat",
    "relu",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "conv2d",
    "conv_transpose2d",
    "batch_norm",
    "Adam",
    "Generator",
    "GeneratorConfig",
    "Discriminator",
    "DiscriminatorConfig",
    "build_generator",
    "build_discriminator",
    "LossReport",
    "adversarial_loss_d",
    "adversarial_loss_g",
    "l1_loss",
    "generator_objective",
    "SamplePair",
    "AugmentPolicy",
    "augment",
    "load_manifest",
    "to_model_range",
    "from_model_range",
    "PhantomConfig",
    "gen_phantom",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "train",
    "train_step",
    "segment",
    "load_generator",
    "binarize",
    "confusion",
    "scores",
    "evaluate_set",
    "__version__",
]
