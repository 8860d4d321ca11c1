"""Generator and discriminator architecture contracts."""

import numpy as np
import pytest

from vesselgan.autodiff import Tensor
from vesselgan.models import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    ResidualBottleneck,
    decoder_channels,
    encoder_channels,
    format_layer_table,
)


def small_gen(depth=3, base=8, side=32, seed=0):
    return Generator(GeneratorConfig(depth=depth, base_channels=base, image_side=side), seed=seed)


def small_disc(depth=3, base=8, side=32, seed=1):
    return Discriminator(DiscriminatorConfig(depth=depth, base_channels=base, image_side=side), seed=seed)


# -- channel schedules ---------------------------------------------------------


def test_channel_schedules():
    assert encoder_channels(4, 32) == [32, 64, 128, 256]
    assert encoder_channels(5, 32) == [32, 64, 128, 256, 256]  # 8x cap
    assert decoder_channels(4, 32) == [128, 64, 32, 32]
    assert decoder_channels(5, 32) == [256, 128, 64, 32, 32]
    assert decoder_channels(1, 16) == [16]


# -- config validation ----------------------------------------------------------


def test_generator_config_validation():
    with pytest.raises(ValueError, match="depth"):
        GeneratorConfig(depth=0, image_side=32)
    with pytest.raises(ValueError, match="even"):
        GeneratorConfig(base_channels=7, image_side=32)
    with pytest.raises(ValueError, match="divisible"):
        GeneratorConfig(depth=4, image_side=24)
    with pytest.raises(ValueError, match="leak_slope"):
        GeneratorConfig(image_side=32, depth=3, leak_slope=1.0)
    with pytest.raises(ValueError, match="positive"):
        GeneratorConfig(image_side=32, depth=3, input_channels=0)


def test_discriminator_config_validation():
    with pytest.raises(ValueError, match="depth"):
        DiscriminatorConfig(depth=0, image_side=32)
    with pytest.raises(ValueError, match="divisible"):
        DiscriminatorConfig(depth=5, image_side=48)


# -- generator forward ------------------------------------------------------------


def test_generator_shape_and_range():
    gen = small_gen()
    rng = np.random.default_rng(0)
    x = Tensor(rng.uniform(-1.0, 1.0, (2, 3, 32, 32)))
    out = gen.forward(x)
    assert out.shape == (2, 1, 32, 32)
    assert out.data.min() >= -1.0 and out.data.max() <= 1.0


def test_generator_accepts_any_divisible_size():
    gen = small_gen(depth=3)
    x = Tensor(np.zeros((1, 3, 40, 56)))  # both divisible by 8
    assert gen.forward(x).shape == (1, 1, 40, 56)


def test_generator_input_validation():
    gen = small_gen(depth=3)
    with pytest.raises(ValueError, match="4-D"):
        gen.forward(Tensor(np.zeros((3, 32, 32))))
    with pytest.raises(ValueError, match="input channels"):
        gen.forward(Tensor(np.zeros((1, 4, 32, 32))))
    with pytest.raises(ValueError, match="divisible"):
        gen.forward(Tensor(np.zeros((1, 3, 30, 32))))
    with pytest.raises(ValueError, match="skip_scales"):
        gen.forward(Tensor(np.zeros((1, 3, 32, 32))), skip_scales=[1.0])


def test_skip_scales_of_one_is_identity():
    gen = small_gen()
    x = Tensor(np.random.default_rng(1).uniform(-1, 1, (1, 3, 32, 32)))
    a = gen.forward(x).data
    b = gen.forward(x, skip_scales=[1.0, 1.0]).data
    assert a.tobytes() == b.tobytes()


def test_every_skip_connection_is_live():
    gen = small_gen()
    x = Tensor(np.random.default_rng(2).uniform(-1, 1, (1, 3, 32, 32)))
    base = gen.forward(x).data
    for i in range(gen.cfg.depth - 1):
        scales = [1.0] * (gen.cfg.depth - 1)
        scales[i] = 0.0
        perturbed = gen.forward(x, skip_scales=scales).data
        assert np.max(np.abs(perturbed - base)) > 0.0, f"skip {i} has no effect"


def test_generator_is_deterministic_in_seed():
    a = small_gen(seed=5)
    b = small_gen(seed=5)
    c = small_gen(seed=6)
    names_a = dict(a.named_parameters())
    names_b = dict(b.named_parameters())
    names_c = dict(c.named_parameters())
    assert all(names_a[k].data.tobytes() == names_b[k].data.tobytes() for k in names_a)
    assert any(names_a[k].data.tobytes() != names_c[k].data.tobytes() for k in names_a)


def test_eval_mode_before_training_is_refused():
    gen = small_gen()
    gen.eval()
    with pytest.raises(ValueError, match="eval-mode batch norm"):
        gen.forward(Tensor(np.zeros((1, 3, 32, 32))))


def test_eval_mode_output_is_batch_independent():
    gen = small_gen()
    rng = np.random.default_rng(3)
    x1 = rng.uniform(-1, 1, (1, 3, 32, 32))
    x2 = rng.uniform(-1, 1, (1, 3, 32, 32))
    gen.forward(Tensor(np.concatenate([x1, x2])))  # populate running stats
    gen.eval()
    together = gen.forward(Tensor(np.concatenate([x1, x2]))).data
    alone = gen.forward(Tensor(x1)).data
    assert np.allclose(together[:1], alone, atol=1e-12)


# -- residual bottleneck -----------------------------------------------------------


def test_residual_zeroed_branch_is_bitwise_passthrough():
    rng = np.random.default_rng(4)
    unit = ResidualBottleneck("res", 8, rng=rng)
    unit.restore.weight.data[...] = 0.0  # bias, bn2 beta already zero-initialized
    x = Tensor(rng.standard_normal((2, 8, 6, 6)))
    out = unit(x, training=True)
    assert out.data.tobytes() == x.data.tobytes()


def test_residual_default_branch_is_active():
    rng = np.random.default_rng(5)
    unit = ResidualBottleneck("res", 8, rng=rng)
    x = Tensor(rng.standard_normal((1, 8, 6, 6)))
    assert np.max(np.abs(unit(x, training=True).data - x.data)) > 0.0


def test_residual_rejects_odd_channels():
    with pytest.raises(ValueError, match="even"):
        ResidualBottleneck("res", 7, rng=np.random.default_rng(0))


# -- discriminator -----------------------------------------------------------------


def test_discriminator_shape_and_range():
    disc = small_disc()
    rng = np.random.default_rng(6)
    x = Tensor(rng.uniform(-1, 1, (3, 3, 32, 32)))
    y = Tensor(rng.uniform(-1, 1, (3, 1, 32, 32)))
    out = disc.forward(x, y)
    assert out.shape == (3,)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


def test_discriminator_input_validation():
    disc = small_disc()
    x = Tensor(np.zeros((1, 3, 32, 32)))
    with pytest.raises(ValueError, match="agree"):
        disc.forward(x, Tensor(np.zeros((2, 1, 32, 32))))
    with pytest.raises(ValueError, match="agree"):
        disc.forward(x, Tensor(np.zeros((1, 1, 16, 16))))
    with pytest.raises(ValueError, match="channels"):
        disc.forward(x, Tensor(np.zeros((1, 2, 32, 32))))
    with pytest.raises(ValueError, match="4-D"):
        disc.forward(Tensor(np.zeros((3, 32, 32))), Tensor(np.zeros((1, 1, 32, 32))))


# -- layer table and parameter store --------------------------------------------------


def test_layer_table_concat_arithmetic():
    gen = small_gen(depth=4, base=8, side=32)
    for row in gen.layer_table():
        if row.kind == "concat":
            in_total = sum(shape[0] for shape in row.in_shape)
            assert in_total == row.out_shape[0]
            assert all(shape[1:] == row.out_shape[1:] for shape in row.in_shape)


def test_layer_table_param_sum_matches_store():
    for net in (small_gen(), small_disc()):
        table_sum = sum(r.n_params for r in net.layer_table())
        assert table_sum == net.n_parameters()
        assert net.n_parameters() == sum(p.size for p in net.parameters())


def test_describe_renders_every_row():
    gen = small_gen(depth=2)
    text = gen.describe()
    assert "enc0.conv" in text and "head.tanh" in text
    assert text.splitlines()[-1] == f"total parameters: {gen.n_parameters()}"
    assert format_layer_table([]) .startswith("layer")


def test_parameter_names_unique_and_stable():
    gen = small_gen()
    names = [n for n, _ in gen.named_parameters()]
    assert len(names) == len(set(names))
    assert "enc0.conv.weight" in names and "head.conv.bias" in names


def test_state_dict_round_trip_in_place():
    gen = small_gen(seed=7)
    state = {k: v.copy() for k, v in gen.state_dict().items()}
    holders = [p.data for p in gen.parameters()]
    for p in gen.parameters():
        p.data += 1.0
    gen.load_state_dict(state)
    for k, v in gen.state_dict().items():
        assert np.array_equal(v, state[k]), k
    # load copies into the existing arrays, so optimizer references stay live
    assert all(h is p.data for h, p in zip(holders, gen.parameters()))


def test_load_state_dict_errors():
    gen = small_gen()
    state = gen.state_dict()
    partial = dict(list(state.items())[:-1])
    with pytest.raises(ValueError, match="missing"):
        gen.load_state_dict(partial)
    bad = dict(state)
    bad["head.conv.bias"] = np.zeros(5)
    with pytest.raises(ValueError, match="shape"):
        gen.load_state_dict(bad)


def test_state_dict_covers_buffers():
    gen = small_gen()
    keys = gen.state_dict().keys()
    assert "enc0.bn.running_mean" in keys
    assert "enc0.bn.num_batches" in keys


def test_mode_switch():
    gen = small_gen()
    assert gen.training
    assert not gen.eval().training
    assert gen.train().training
