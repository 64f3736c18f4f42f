"""
Searching for the best camera triple
====================================

Which three of the six virtual cameras should feed the network? The
exhaustive answer means training 120 ordered triples. The pyramid
search trains all 6 singles, keeps the top few, expands those to
ordered pairs, keeps the top few again, and only then tries triples --
15 trainings at the default widths instead of 156.

Every candidate here is a real (but deliberately tiny) training run, so
expect a few minutes of CPU.

Run:  python3 demos/04_view_search.py
"""

import tempfile
import time
from pathlib import Path

from gestigo import (GestureNet, ModelConfig, TrainSettings,
                     encode_for_training, generate_dataset_tree,
                     parse_dataset, train, vo_search, vo_table,
                     write_search_report)
from gestigo.raster import RenderConfig

SIZE = 48  # ranking heuristic, not a quality run

tree = generate_dataset_tree("DHG1428_14G", Path(tempfile.mkdtemp()), size="swipes")
manifest = parse_dataset("DHG1428_14G", tree)
print(f"{len(manifest.entries)} gestures; rendering all 6 views once ...")

# Render each gesture once per view up front; every candidate training
# just picks its streams out of this cache (arrays are shared, nothing
# is re-rendered or copied per candidate).
all_views = [vo.name for vo in vo_table("DHG1428_14G")]
data = encode_for_training(manifest, all_views, (SIZE,),
                           render_cfg=RenderConfig(image_px=SIZE * 4))


def quick_trainer(vo_names):
    """Train a small net briefly on the given streams, return tuner val acc."""
    config = ModelConfig(
        dataset_id="DHG1428_14G", class_count=14, vo_names=tuple(vo_names),
        encoder_widths=(8, 16), tuner_widths=(4,), head_hidden=32,
        tuner_head_hidden=16, stage_sizes=(SIZE,), pseudo_px=16, seed=17)
    report = train(GestureNet(config), data.streams(vo_names),
                   TrainSettings(epochs_per_stage=3, batch_size=8,
                                 base_lr=3e-3, lr_grid=(), seed=17))
    return report.best_val_accuracy


t0 = time.monotonic()
best, state = vo_search("DHG1428_14G", quick_trainer,
                        top_k_singles=3, top_k_pairs=2)
print(f"\nbest triple {best} after {state.budget} trainings "
      f"({time.monotonic() - t0:.0f} s)")
print("single-camera ranking:")
for name, acc in sorted(state.singles.items(), key=lambda kv: -kv[1]):
    print(f"  {acc:.3f}  {name}")
print("best triples tried:")
for names, acc in sorted(state.triples.items(), key=lambda kv: -kv[1])[:3]:
    print(f"  {acc:.3f}  {' + '.join(names)}")

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
write_search_report(best, state, out / "vo_search.tsv")
print(f"full table in {out / 'vo_search.tsv'}")

# CLI equivalent (same pyramid, its own quick-trainer defaults):
#   python3 -m gestigo.cli vo-search --dataset DHG1428_14G --root <tree> \
#       --out runs/search
