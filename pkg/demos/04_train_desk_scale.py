"""Train the conditional GAN at desk scale and segment held-out phantoms.

A deliberately small run (50 training phantoms at 64x64, 150 steps, about
half a minute) so the full loop is quick to watch: alternating discriminator
and generator updates, per-epoch loss logging, a final checkpoint, then
inference through the saved weights. Artifacts land in demos/out/train/.

    python3 demos/04_train_desk_scale.py
"""

import os

import numpy as np

from vesselgan import TrainConfig, evaluate_set, gen_phantom, load_generator, segment, train
from vesselgan import imgio

OUT = os.path.join(os.path.dirname(__file__), "out", "train")

print("== data ==")
train_set = [gen_phantom(seed, 64) for seed in range(50)]
held_out = [gen_phantom(seed, 64) for seed in range(500, 505)]
print(f"{len(train_set)} training phantoms, {len(held_out)} held out")

print("\n== training ==")
cfg = TrainConfig(
    epochs=3, image_side=64, depth=4, base_channels=32,
    lambda_l1=100.0, seed=0,
    augment=True, augment_rotate_deg=0.0,  # rotation-free: thin labels resample badly at 64px
    checkpoint_cadence=1000, out_dir=OUT,
)
result = train(cfg, train_set, log=print)
print(f"ran {result.steps} steps; final d_loss {result.final.d_loss:.3f}, "
      f"g_l1 {result.final.g_l1:.3f}")

print("\n== loss trajectory ==")
rows = open(result.loss_csv_path).read().splitlines()[1:]
for row in rows[:: max(1, len(rows) // 6)]:
    it, d_loss, g_adv, g_l1, _ = row.split(",")
    print(f"  step {int(it):>4}: d_loss {float(d_loss):.3f}  g_adv {float(g_adv):.3f}  g_l1 {float(g_l1):.3f}")

print("\n== held-out segmentation ==")
gen = load_generator(result.checkpoint_path)
items = []
for pair in held_out:
    prob = segment(gen, pair.image)[:, :, 0]
    items.append((pair.id, prob, pair.label[:, :, 0], pair.mask[:, :, 0]))
    imgio.write_pgm(os.path.join(OUT, f"{pair.id}_prob.pgm"),
                    np.round(255.0 * prob).astype(np.uint8))

micro = evaluate_set(items, threshold=0.5).micro
print(f"micro scores at 0.5: accuracy {micro.accuracy:.3f}, sensitivity {micro.sensitivity:.3f}, "
      f"F {micro.f_measure:.3f}")
print("(the acceptance run trains 2000 steps on 200 phantoms and lands above F 0.90)")
print(f"\nprobability maps written to {OUT}")
