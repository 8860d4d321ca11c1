"""Command-line entry points.

Subcommands: phantom (write a synthetic dataset), train, segment, eval,
gradcheck. Every run prints its resolved configuration before doing work.
Exit codes: 0 success, 1 runtime/data failure, 2 usage error (argparse's
own convention). Data-prep parallelism is capped by VESSELGAN_THREADS.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from vesselgan import gradcheck as gc
from vesselgan import imgio, metrics
from vesselgan.data import load_manifest, write_manifest
from vesselgan.phantom import gen_phantom
from vesselgan.training import TrainConfig, load_config, format_config, load_generator, segment, train

__all__ = ["main", "run"]

PROB_SIDECAR_SUFFIX = ".f32"


def _print_config(args: argparse.Namespace, skip=("func",)) -> None:
    print("resolved config:")
    for key in sorted(vars(args)):
        if key in skip:
            continue
        print(f"  {key}={getattr(args, key)}")


def _to_u8(a: np.ndarray) -> np.ndarray:
    return np.round(255.0 * np.clip(a, 0.0, 1.0)).astype(np.uint8)


def _cmd_phantom(args) -> int:
    _print_config(args)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for k in range(args.count):
        pair = gen_phantom(args.seed + k, args.side)
        image_name = f"{pair.id}_image.ppm"
        label_name = f"{pair.id}_label.pgm"
        mask_name = f"{pair.id}_mask.pgm"
        imgio.write_ppm(os.path.join(args.out, image_name), _to_u8(pair.image))
        imgio.write_pgm(os.path.join(args.out, label_name), _to_u8(pair.label[:, :, 0]))
        imgio.write_pgm(os.path.join(args.out, mask_name), _to_u8(pair.mask[:, :, 0]))
        rows.append((pair.id, image_name, label_name, mask_name))
    manifest = os.path.join(args.out, "manifest.csv")
    write_manifest(manifest, rows)
    print(f"wrote {args.count} phantom triples and {manifest}")
    return 0


def _cmd_train(args) -> int:
    cfg = TrainConfig()
    if args.config is not None:
        cfg = load_config(args.config, cfg)
    if args.out is not None:
        from dataclasses import replace

        cfg = replace(cfg, out_dir=args.out)
    print("resolved config:")
    for line in format_config(cfg).splitlines():
        print(f"  {line}")
    print(f"  manifest={args.manifest}")
    dataset = load_manifest(args.manifest)
    result = train(cfg, dataset, log=print)
    print(f"finished {result.steps} steps; checkpoint at {result.checkpoint_path}")
    return 0


def _cmd_segment(args) -> int:
    _print_config(args)
    gen = load_generator(args.ckpt)
    os.makedirs(args.out, exist_ok=True)
    if args.image is not None:
        items = [(os.path.splitext(os.path.basename(args.image))[0],
                  imgio.read_image(args.image).astype(np.float64) / 255.0)]
    else:
        items = [(p.id, p.image) for p in load_manifest(args.manifest)]
    for sample_id, image in items:
        if image.ndim == 2:
            image = np.repeat(image[:, :, None], 3, axis=2)
        prob = segment(gen, image)[:, :, 0]
        imgio.write_pgm(os.path.join(args.out, f"{sample_id}.pgm"), _to_u8(prob))
        prob.astype("<f4").tofile(os.path.join(args.out, f"{sample_id}{PROB_SIDECAR_SUFFIX}"))
        print(f"segmented {sample_id}")
    return 0


def _load_probability(pred_dir: str, sample_id: str) -> np.ndarray:
    """Prefer the lossless float sidecar; fall back to the 8-bit PGM."""
    pgm_path = os.path.join(pred_dir, f"{sample_id}.pgm")
    raw_path = os.path.join(pred_dir, f"{sample_id}{PROB_SIDECAR_SUFFIX}")
    if not os.path.exists(pgm_path):
        raise FileNotFoundError(f"no prediction for {sample_id!r} in {pred_dir}")
    quantized = imgio.read_pnm(pgm_path).astype(np.float64) / 255.0
    if os.path.exists(raw_path):
        flat = np.fromfile(raw_path, dtype="<f4")
        if flat.size != quantized.size:
            raise ValueError(
                f"{raw_path}: {flat.size} values do not match {pgm_path} ({quantized.size} pixels)"
            )
        return flat.astype(np.float64).reshape(quantized.shape)
    return quantized


def _cmd_eval(args) -> int:
    _print_config(args)
    dataset = load_manifest(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    items = [
        (p.id, _load_probability(args.pred, p.id), p.label[:, :, 0], None if p.mask is None else p.mask[:, :, 0])
        for p in dataset
    ]
    result = metrics.evaluate_set(items, args.threshold)
    scores_path = os.path.join(args.out, "scores.csv")
    fcurve_path = os.path.join(args.out, "fcurve.csv")
    metrics.write_scores_csv(scores_path, result)
    metrics.write_fcurve_csv(fcurve_path, result)

    def show(name, value):
        print(f"  {name}: " + ("undefined" if value is None else f"{value:.4f}"))

    print(f"micro scores at threshold {args.threshold}:")
    show("accuracy", result.micro.accuracy)
    show("sensitivity", result.micro.sensitivity)
    show("specificity", result.micro.specificity)
    show("precision", result.micro.precision)
    show("f_measure", result.micro.f_measure)

    if args.sweep:
        sweep_path = os.path.join(args.out, "sweep.csv")
        with open(sweep_path, "w", newline="") as fh:
            fh.write("threshold,accuracy,sensitivity,specificity,precision,f_measure\n")
            for res in metrics.threshold_sweep(items):
                m = res.micro
                cells = [repr(res.threshold)] + [
                    "" if v is None else repr(v)
                    for v in (m.accuracy, m.sensitivity, m.specificity, m.precision, m.f_measure)
                ]
                fh.write(",".join(cells) + "\n")
        print(f"wrote {sweep_path}")
    print(f"wrote {scores_path} and {fcurve_path}")
    return 0


def _cmd_gradcheck(args) -> int:
    _print_config(args)
    results = gc.run_suite(args.seed)
    failed = 0
    for name, err, tol in results:
        ok = err <= tol
        failed += 0 if ok else 1
        print(f"  {'PASS' if ok else 'FAIL'}  {name}: max rel err {err:.3e} (tol {tol:.0e})")
    if failed:
        print(f"{failed} gradient check(s) failed")
        return 1
    print("all gradient checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vesselgan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write a synthetic phantom dataset plus manifest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--side", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("train", help="train from a manifest")
    p.add_argument("--config", default=None, help="flat key=value file of TrainConfig fields")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None, help="override out_dir from the config")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("segment", help="run a checkpoint over images")
    p.add_argument("--ckpt", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--image", default=None)
    group.add_argument("--manifest", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("eval", help="score predictions against a manifest")
    p.add_argument("--pred", required=True, help="directory of <id>.pgm / <id>.f32 maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--sweep", action="store_true", help="also sweep thresholds 0.05..0.95")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 -- the CLI boundary reports and exits
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
