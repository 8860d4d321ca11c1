"""Training loop, config parsing, checkpoints, and inference."""

import os

import numpy as np
import pytest

import vesselgan.training
from vesselgan import losses
from vesselgan.autodiff import NonFiniteError, Tensor
from vesselgan.checkpoint import save_checkpoint
from vesselgan.data import from_model_range, to_model_range
from vesselgan.optim import Adam
from vesselgan.phantom import gen_phantom
from vesselgan.training import (
    CHECKPOINT_FINAL,
    LOSS_CSV,
    NonFiniteLossError,
    TrainConfig,
    _finite_or_abort,
    build_nets,
    format_config,
    load_config,
    load_generator,
    parse_config_text,
    segment,
    train,
    train_step,
)


def tiny_config(out_dir, **overrides):
    base = dict(
        epochs=2, image_side=32, depth=3, base_channels=8,
        seed=0, out_dir=str(out_dir), augment=False, checkpoint_cadence=1000,
    )
    base.update(overrides)
    return TrainConfig(**base)


def tiny_dataset(n=4, side=32, first_seed=0):
    return [gen_phantom(first_seed + k, side) for k in range(n)]


# -- config files -------------------------------------------------------------


def test_parse_config_overrides_and_comments():
    text = "\n".join([
        "# training setup",
        "epochs = 3",
        "",
        "lr=0.001",
        "augment=false",
        "out_dir=runs/exp1  ",
    ])
    cfg = parse_config_text(text)
    assert cfg.epochs == 3 and cfg.lr == 0.001
    assert cfg.augment is False and cfg.out_dir == "runs/exp1"
    assert cfg.lambda_l1 == 100.0  # untouched default


def test_parse_config_bool_spellings():
    assert parse_config_text("augment=true").augment is True
    assert parse_config_text("augment=0").augment is False
    assert parse_config_text("augment=YES").augment is True
    with pytest.raises(ValueError, match="line 1.*boolean"):
        parse_config_text("augment=maybe")


def test_parse_config_errors_name_the_line():
    with pytest.raises(ValueError, match="line 2: unknown key 'momentum'"):
        parse_config_text("epochs=1\nmomentum=0.9")
    with pytest.raises(ValueError, match="line 1: expected key=value"):
        parse_config_text("epochs")
    with pytest.raises(ValueError, match="line 3: bad value for epochs"):
        parse_config_text("# c\nlr=0.1\nepochs=two")


def test_parse_config_respects_base():
    base = TrainConfig(epochs=7, lr=0.5)
    cfg = parse_config_text("lr=0.25", base)
    assert cfg.epochs == 7 and cfg.lr == 0.25


def test_format_config_round_trips():
    cfg = TrainConfig(epochs=3, lr=0.0005, augment_rotate_deg=12.5, out_dir="x/y")
    assert parse_config_text(format_config(cfg)) == cfg


def test_load_config_missing_file(tmp_path):
    missing = tmp_path / "nope.cfg"
    with pytest.raises(ValueError, match=str(missing)):
        load_config(missing)


def test_train_config_validation():
    with pytest.raises(ValueError, match="epochs"):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError, match="lambda_l1"):
        TrainConfig(lambda_l1=-1.0)
    with pytest.raises(ValueError, match="cadence"):
        TrainConfig(checkpoint_cadence=0)


def test_augment_policy_from_config():
    cfg = TrainConfig(image_side=64, augment_rotate_deg=0.0, augment_translate_frac=0.1)
    policy = cfg.augment_policy()
    assert policy.rotate is False
    assert policy.translate_px == 6
    off = TrainConfig(augment=False).augment_policy()
    assert not (off.rotate or off.flip_h or off.flip_v or off.translate or off.intensity)


# -- single steps ----------------------------------------------------------------


def make_rig(tmp_path, **overrides):
    cfg = tiny_config(tmp_path, **overrides)
    gen, disc = build_nets(cfg)
    opt_g = Adam(gen.parameters(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    opt_d = Adam(disc.parameters(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    return cfg, gen, disc, opt_g, opt_d


def params_bytes(net):
    return b"".join(p.data.tobytes() for p in net.parameters())


def test_train_step_requires_train_mode(tmp_path):
    _, gen, disc, opt_g, opt_d = make_rig(tmp_path)
    gen.eval()
    with pytest.raises(ValueError, match="train mode"):
        train_step(gen_phantom(0, 32), gen, disc, opt_g, opt_d)


def test_train_step_moves_both_nets_and_reports(tmp_path):
    _, gen, disc, opt_g, opt_d = make_rig(tmp_path)
    g_before, d_before = params_bytes(gen), params_bytes(disc)
    report = train_step(gen_phantom(0, 32), gen, disc, opt_g, opt_d, 100.0)
    assert params_bytes(gen) != g_before
    assert params_bytes(disc) != d_before
    for v in (report.d_loss, report.g_adv, report.g_l1, report.g_total):
        assert np.isfinite(v)
    assert abs(report.g_total - (report.g_adv + 100.0 * report.g_l1)) <= 1e-9


def test_zero_lr_step_is_a_no_op(tmp_path):
    _, gen, disc, opt_g, opt_d = make_rig(tmp_path, lr=0.0)
    g_before, d_before = params_bytes(gen), params_bytes(disc)
    train_step(gen_phantom(0, 32), gen, disc, opt_g, opt_d)
    assert params_bytes(gen) == g_before
    assert params_bytes(disc) == d_before


def test_update_phases_never_cross_parameter_sets(tmp_path):
    # the D phase may touch G's batch-norm buffers but never its parameters,
    # and vice versa; mirrors the phases inside train_step
    _, gen, disc, opt_g, opt_d = make_rig(tmp_path)
    pair = gen_phantom(1, 32)
    x = Tensor(to_model_range(pair.image).transpose(2, 0, 1)[None])
    y = Tensor(to_model_range(pair.label).transpose(2, 0, 1)[None])
    for step in range(20):
        g_frozen = params_bytes(gen)
        fake = gen.forward(x).detach()
        d_loss = losses.adversarial_loss_d(disc.forward(x, y), disc.forward(x, fake))
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()
        assert params_bytes(gen) == g_frozen, f"D update moved G at step {step}"

        d_frozen = params_bytes(disc)
        fake = gen.forward(x)
        total, _, _ = losses.generator_objective(disc.forward(x, fake), y, fake, 100.0)
        opt_g.zero_grad()
        total.backward()
        opt_g.step()
        assert params_bytes(disc) == d_frozen, f"G update moved D at step {step}"


def test_l1_descends_on_a_single_sample(tmp_path):
    _, gen, disc, opt_g, opt_d = make_rig(tmp_path, lr=1e-3)
    pair = gen_phantom(3, 32)
    l1 = [train_step(pair, gen, disc, opt_g, opt_d, 100.0).g_l1 for _ in range(100)]
    assert np.mean(l1[-5:]) < 0.7 * np.mean(l1[:5])


def test_finite_or_abort_names_the_term():
    _finite_or_abort(d_loss=1.0, g_adv=2.0)  # fine
    with pytest.raises(NonFiniteLossError, match="g_adv"):
        _finite_or_abort(d_loss=1.0, g_adv=float("nan"))
    with pytest.raises(NonFiniteLossError, match="d_loss"):
        _finite_or_abort(d_loss=float("inf"))


# -- full loop ---------------------------------------------------------------------


def test_train_accounting_and_artifacts(tmp_path):
    cfg = tiny_config(tmp_path / "run", epochs=3, batch=2)
    dataset = tiny_dataset(5)
    seen = []
    result = train(cfg, dataset, log=seen.append)
    assert result.steps == 3 * 3  # ceil(5/2) chunks per epoch
    assert len(seen) == 3

    lines = open(result.loss_csv_path).read().splitlines()
    assert lines[0] == losses.LOSS_CSV_HEADER
    assert len(lines) == result.steps + 1
    assert [row.split(",")[0] for row in lines[1:]] == [str(k) for k in range(1, result.steps + 1)]
    last = lines[-1].split(",")
    assert float(last[1]) == result.final.d_loss
    assert float(last[4]) == result.final.g_total

    assert os.path.basename(result.checkpoint_path) == CHECKPOINT_FINAL
    assert os.path.basename(result.loss_csv_path) == LOSS_CSV
    assert os.path.exists(result.checkpoint_path)


def test_train_validation_errors(tmp_path):
    cfg = tiny_config(tmp_path)
    with pytest.raises(ValueError, match="empty"):
        train(cfg, [])
    wrong = gen_phantom(0, 64)
    with pytest.raises(ValueError, match="ph000000.*\\(64, 64\\)"):
        train(cfg, [wrong])


def test_checkpoint_cadence(tmp_path):
    cfg = tiny_config(tmp_path / "run", epochs=4, checkpoint_cadence=2)
    train(cfg, tiny_dataset(2))
    out = tmp_path / "run"
    assert (out / "checkpoint_epoch00002.vgckpt").exists()
    assert not (out / "checkpoint_epoch00004.vgckpt").exists()  # that one is the final
    assert (out / CHECKPOINT_FINAL).exists()


def test_two_identical_runs_are_byte_identical(tmp_path):
    dataset = tiny_dataset(4)
    outputs = []
    for name in ("a", "b"):
        cfg = tiny_config(tmp_path / name, augment=True, seed=11)
        result = train(cfg, dataset)
        outputs.append((open(result.loss_csv_path, "rb").read(),
                        open(result.checkpoint_path, "rb").read()))
    assert outputs[0][0] == outputs[1][0]
    assert outputs[0][1] == outputs[1][1]


def test_seed_changes_the_run(tmp_path):
    dataset = tiny_dataset(2)
    csvs = []
    for seed in (0, 1):
        cfg = tiny_config(tmp_path / f"s{seed}", epochs=1, seed=seed)
        csvs.append(open(train(cfg, dataset).loss_csv_path, "rb").read())
    assert csvs[0] != csvs[1]


def test_abort_keeps_checkpoint_and_partial_csv(tmp_path, monkeypatch):
    # poison a generator weight after epoch 1; the next forward must abort
    # while the final checkpoint and the rows so far survive
    holder = {}
    real_build = vesselgan.training.build_nets

    def capture(cfg):
        gen, disc = real_build(cfg)
        holder["gen"] = gen
        return gen, disc

    monkeypatch.setattr(vesselgan.training, "build_nets", capture)
    cfg = tiny_config(tmp_path / "run", epochs=5)
    dataset = tiny_dataset(2)

    def sabotage(msg):
        holder["gen"].parameters()[0].data[0, 0, 0, 0] = np.nan

    with pytest.raises(NonFiniteError):
        train(cfg, dataset, log=sabotage)
    assert (tmp_path / "run" / CHECKPOINT_FINAL).exists()
    lines = open(tmp_path / "run" / LOSS_CSV).read().splitlines()
    assert len(lines) == 1 + 2  # header plus the two epoch-1 steps


# -- checkpoint load and inference ----------------------------------------------------


def trained_generator(tmp_path):
    cfg = tiny_config(tmp_path / "run", epochs=1)
    result = train(cfg, tiny_dataset(2))
    return result.checkpoint_path


def test_load_generator_round_trip(tmp_path):
    ckpt = trained_generator(tmp_path)
    gen = load_generator(ckpt)
    assert not gen.training  # comes back in eval mode
    assert gen.cfg.depth == 3 and gen.cfg.base_channels == 8
    out = gen.forward(Tensor(np.zeros((1, 3, 32, 32))))
    assert out.shape == (1, 1, 32, 32)


def test_load_generator_rejects_foreign_checkpoint(tmp_path):
    path = tmp_path / "foreign.vgckpt"
    save_checkpoint(path, {"weights": np.zeros(3)})
    with pytest.raises(ValueError, match="not a generator checkpoint"):
        load_generator(path)


def test_segment_equals_direct_eval_forward(tmp_path):
    gen = load_generator(trained_generator(tmp_path))
    rng = np.random.default_rng(0)
    image = rng.random((32, 32, 3))
    direct_in = Tensor(to_model_range(image).transpose(2, 0, 1)[None])
    want = from_model_range(gen.forward(direct_in).data[0].transpose(1, 2, 0))
    got = segment(gen, image)
    assert got.shape == (32, 32, 1)
    assert got.tobytes() == want.tobytes()


def test_segment_pads_and_crops_odd_sizes(tmp_path):
    gen = load_generator(trained_generator(tmp_path))
    image = np.random.default_rng(1).random((35, 40, 3))  # 35 is not a multiple of 8
    out = segment(gen, image)
    assert out.shape == (35, 40, 1)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_segment_accepts_checkpoint_path(tmp_path):
    ckpt = trained_generator(tmp_path)
    out = segment(ckpt, np.zeros((32, 32, 3)))
    assert out.shape == (32, 32, 1)


def test_segment_restores_train_mode(tmp_path):
    gen = load_generator(trained_generator(tmp_path))
    gen.train()
    segment(gen, np.zeros((32, 32, 3)))
    assert gen.training


def test_segment_validation(tmp_path):
    gen = load_generator(trained_generator(tmp_path))
    with pytest.raises(ValueError, match="\\(H, W, 3\\)"):
        segment(gen, np.zeros((32, 32, 1)))
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        segment(gen, np.full((32, 32, 3), 1.5))
    with pytest.raises(ValueError, match="too small"):
        segment(gen, np.zeros((4, 4, 3)))
