"""
Training the multi-stream network on the swipe gestures
=======================================================

End to end: dataset tree -> condensed image arrays -> a three-stream
CNN whose per-stream class probabilities are re-rendered as a "pseudo
image" and judged by a small tuner network, trained jointly under a
homoscedastic multi-loss.

This demo keeps the schedule short (a few minutes of CPU). The tuned
recipe that reaches ~0.93 validation accuracy on this subset is 25
epochs at batch 8 -- see EPOCHS below and give it the time if you want
the full curve.

Run:  python3 demos/02_train_swipes.py
Artifacts land in demos/out/swipes/.
"""

import tempfile
from pathlib import Path

from gestigo import (GestureNet, TrainSettings, confusion_heatmap,
                     encode_for_training, evaluate, generate_dataset_tree,
                     parse_dataset, subset_manifest, swipe_subset_config,
                     train, write_report)
from gestigo.datasets import SWIPE_CLASSES

EPOCHS = 6          # 25 for the full-quality run
STREAMS = ("custom", "top-down", "front-away")

out_dir = Path(__file__).parent / "out" / "swipes"
out_dir.mkdir(parents=True, exist_ok=True)

# 1. A dataset tree. size="swipes" generates only the seven Swipe
#    classes (392 sequences) in the native DHG on-disk layout; point
#    parse_dataset at a real tree instead if you have one.
tree = generate_dataset_tree("DHG1428_14G", Path(tempfile.mkdtemp()), size="swipes")
manifest = subset_manifest(parse_dataset("DHG1428_14G", tree), SWIPE_CLASSES)
print(f"manifest: {len(manifest.entries)} gestures, "
      f"{len(SWIPE_CLASSES)} classes, streams {STREAMS}")

# 2. Condense every gesture once per stream. Rendering happens at a
#    960 px master resolution and is averaged down to each training
#    size, so a multi-stage schedule reuses one render pass.
print("encoding (renders 3 views per gesture, ~30 s) ...")
data = encode_for_training(manifest, STREAMS, stage_sizes=(160,))

# 3. The model. swipe_subset_config wires class count, streams and the
#    16 px pseudo image that this small tuner needs; everything else
#    (encoder widths, heads) is the library default.
net = GestureNet(swipe_subset_config(stage_sizes=(160,), pseudo_px=16))

# 4. Train. Loss = homoscedastically weighted sum of one cross-entropy
#    per stream plus one for the tuner; the checkpoint keeps whichever
#    epoch had the best tuner validation accuracy.
settings = TrainSettings(epochs_per_stage=EPOCHS, batch_size=8,
                         base_lr=1e-3, lr_grid=(), seed=17)
report = train(net, data, settings,
               checkpoint_path=out_dir / "swipes.ckpt",
               log_path=out_dir / "train.log",
               summary_path=out_dir / "summary.tsv")

best = report.best_record
print(f"best epoch {best.epoch}: tuner val {best.accuracies[-1]:.3f}, "
      f"streams {[round(a, 3) for a in best.accuracies[:-1]]}")

# 5. Evaluate the best checkpoint and write the standard reports.
net = GestureNet.load(out_dir / "swipes.ckpt")
result = evaluate(net, data)
write_report(result, out_dir / "report.txt")
confusion_heatmap(result, out_dir / "confusion.png")
print(f"val accuracy {result.accuracy:.3f} over {result.sample_count} gestures")
print(f"artifacts in {out_dir}")

# CLI equivalent:
#   python3 -m gestigo.cli train --dataset DHG1428_14G --root <tree> \
#       --subset swipe --streams custom,top-down,front-away \
#       --stage-sizes 160 --epochs 25 --batch-size 8 --out runs/swipes
