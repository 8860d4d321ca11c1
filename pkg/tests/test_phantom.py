"""Procedural phantom generator contracts."""

import numpy as np
import pytest
from scipy import ndimage

from vesselgan.phantom import PhantomConfig, gen_phantom


def test_determinism():
    a = gen_phantom(5, 64)
    b = gen_phantom(5, 64)
    assert a.image.tobytes() == b.image.tobytes()
    assert a.label.tobytes() == b.label.tobytes()
    assert a.mask.tobytes() == b.mask.tobytes()


def test_seeds_differ():
    a = gen_phantom(0, 64)
    b = gen_phantom(1, 64)
    assert a.image.tobytes() != b.image.tobytes()


def test_sample_contract():
    pair = gen_phantom(9, 64)
    pair.validate()
    assert pair.id == "ph000009"
    assert pair.image.shape == (64, 64, 3)
    assert pair.label.shape == (64, 64, 1)
    assert np.isin(pair.label, (0.0, 1.0)).all()


def test_mask_is_a_majority_disc():
    pair = gen_phantom(0, 64)
    frac = pair.mask.mean()
    assert frac >= 0.5
    # label never leaks outside the field of view
    assert np.all(pair.label[pair.mask == 0.0] == 0.0)


def test_vessel_fraction_band():
    # in-mask vessel density stays in a band wide enough to learn from
    for seed in range(100):
        pair = gen_phantom(seed, 64)
        frac = pair.label.sum() / pair.mask.sum()
        assert 0.03 <= frac <= 0.25, f"seed {seed}: fraction {frac:.4f}"


def test_vessel_tree_is_connected():
    structure = np.ones((3, 3))
    for seed in range(25):
        lab = gen_phantom(seed, 64).label[:, :, 0] > 0
        labeled, n = ndimage.label(lab, structure=structure)
        sizes = ndimage.sum_labels(lab, labeled, index=range(1, n + 1))
        assert sizes.max() / lab.sum() >= 0.9, f"seed {seed}: fragmented tree"


def test_vessels_are_darker_than_background():
    pair = gen_phantom(3, 64)
    green = pair.image[:, :, 1]
    vessel = pair.label[:, :, 0] > 0
    in_mask_bg = (pair.mask[:, :, 0] > 0) & ~vessel
    assert green[vessel].mean() < green[in_mask_bg].mean()


def test_larger_side_works():
    pair = gen_phantom(0, 128)
    assert pair.image.shape == (128, 128, 3)
    frac = pair.label.sum() / pair.mask.sum()
    assert 0.03 <= frac <= 0.25


def test_side_validation():
    with pytest.raises(ValueError, match="side"):
        gen_phantom(0, 16)


def test_config_validation():
    with pytest.raises(ValueError, match="levels"):
        PhantomConfig(min_levels=2)
    with pytest.raises(ValueError, match="levels"):
        PhantomConfig(min_levels=4, max_levels=3)
    with pytest.raises(ValueError, match="trunk"):
        PhantomConfig(trunk_count=0)
