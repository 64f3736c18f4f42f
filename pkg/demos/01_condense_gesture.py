"""
Condensing a hand gesture into six static images
================================================

A gesture arrives as a (T, joints, 3) skeleton sequence. Condensation
turns the whole movement into one RGB image per virtual camera: the last
frame's skeleton drawn in full, plus fading fingertip trails that encode
where the hand has been. A CNN can then classify the gesture from the
still image alone.

Run:  python3 demos/01_condense_gesture.py
Output lands in demos/out/condense/.
"""

from pathlib import Path

import numpy as np

from gestigo import (RenderConfig, condense, fit_sequence, project,
                     resample_sequence, synthetic_sequence, vo_table)
from gestigo.raster import write_png

out_dir = Path(__file__).parent / "out" / "condense"
out_dir.mkdir(parents=True, exist_ok=True)

# No dataset on disk? Synthesize one gesture. Label 10 is "Swipe Left"
# in the 14-class numbering; any (T, 22, 3) float array in metres works
# the same way via SkeletonSequence(frames=..., schema=dataset_schema(...)).
seq = synthetic_sequence("DHG1428_14G", label=10, seed=3)
print(f"raw sequence: {seq.frames.shape[0]} frames x {seq.frames.shape[1]} joints")

# Every gesture is first resampled to a fixed 250 frames (linear
# interpolation in time, endpoints preserved bit-for-bit) so fast and
# slow performances of the same gesture condense to comparable trails.
seq = resample_sequence(seq, 250)

# fit_sequence computes the framing shared by all six cameras: the
# trajectory centroid becomes the look-at point and the zoom is the
# largest per-axis extent plus a small margin, so no joint of any frame
# can leave the canvas in any view.
fit = fit_sequence(seq)
print(f"camera target {np.round(fit.camera_target, 3)}  zoom {fit.zoom:.3f}")

# Each dataset family has six named view orientations. Render them all.
for vo in vo_table("DHG1428_14G"):
    image = condense(seq, vo, RenderConfig(image_px=480))
    write_png(image, out_dir / f"{vo.name}.png")

    # project() exposes the underlying geometry: pixel coordinates of
    # every joint of every frame under this camera.
    px = project(fit.centered.frames, fit, vo, 480)
    print(f"  {vo.name:<12} joints span "
          f"x [{px[..., 0].min():6.1f}, {px[..., 0].max():6.1f}]  "
          f"y [{px[..., 1].min():6.1f}, {px[..., 1].max():6.1f}] px")

print(f"wrote 6 views to {out_dir}")

# The same six renders, one call:
#   images = condense_views(seq, vo_table("DHG1428_14G"))
# and the CLI equivalent over a whole dataset tree:
#   python3 -m gestigo.cli encode --dataset DHG1428_14G --root <tree> \
#       --out encoded/ --vos custom,top-down
