"""Temporal condensation: a dynamic 3D gesture becomes one static image.

The pipeline per view orientation:

1. resample the sequence to a fixed temporal window (linear, endpoints
   exact);
2. centre it so the sequence centroid sits at the camera target
   ``P = (L/2, L/2, L/2)`` and estimate the zoom
   ``Z = max per-axis extent + gamma``;
3. project orthographically through a named virtual-camera pose;
4. draw the temporal channel (fingertip trail markers for frames
   1..T-1, opacity ramping linearly from ``alpha_min`` for the oldest
   up to ``alpha_max``) and then the spatial channel (the final frame's
   skeleton bones) on top.

The rendered square always spans ``Z`` world units, so the gesture fills
the canvas regardless of its physical units, with a ``gamma``-wide margin
guaranteeing that no joint is clipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import JointSchema, SkeletonSequence
from .errors import ArgumentError, ShapeError
from .raster import Canvas, RenderConfig, snap_subpixel

GAMMA = 0.125
CANONICAL_LENGTH = 1.0


@dataclass(frozen=True)
class ViewOrientation:
    """A named virtual-camera pose (degrees)."""

    name: str
    elevation: float
    azimuth: float

    def __post_init__(self):
        if not (np.isfinite(self.elevation) and np.isfinite(self.azimuth)):
            raise ArgumentError("view orientation angles must be finite")


def camera_basis(vo: ViewOrientation) -> np.ndarray:
    """World->camera rotation: azimuth about the vertical axis, then
    elevation about the camera-right axis. Rows are camera right/up/forward."""
    e = np.deg2rad(vo.elevation)
    a = np.deg2rad(vo.azimuth)
    ce, se = np.cos(e), np.sin(e)
    ca, sa = np.cos(a), np.sin(a)
    rx = np.array([[1, 0, 0], [0, ce, -se], [0, se, ce]], dtype=np.float64)
    ry = np.array([[ca, 0, sa], [0, 1, 0], [-sa, 0, ca]], dtype=np.float64)
    return rx @ ry


def _vo_six(angles):
    names = ("top-down", "front-to", "front-away", "side-right", "side-left", "custom")
    return tuple(ViewOrientation(n, e, a) for n, (e, a) in zip(names, angles))


#: Six virtual-camera poses per dataset family, tuned per capture rig so
#: the informative views land on consistent names.
_VO_TABLES = {
    "DHG1428": _vo_six([(0, 0), (90, 180), (-90, 0), (0, -90), (0, 90), (30, -132.5)]),
    "SHREC2017": _vo_six([(0, 0), (90, 180), (-90, 0), (0, -90), (0, 90), (30, -132.5)]),
    "FPHA": _vo_six([(90, 0), (0, 180), (0, 0), (0, 90), (0, -90), (25, 115)]),
    "LMDHG": _vo_six([(0, 0), (-90, -180), (90, 0), (0, 90), (0, -90), (-15, -135)]),
}

VO_NAMES = ("top-down", "front-to", "front-away", "side-right", "side-left", "custom")


def vo_table(dataset_id: str):
    """The six view orientations of a dataset (id or family name)."""
    family = dataset_id.split("_")[0]
    if family not in _VO_TABLES:
        raise ArgumentError(f"no view orientations for {dataset_id!r}")
    return _VO_TABLES[family]


def find_orientation(dataset_id: str, name: str) -> ViewOrientation:
    for vo in vo_table(dataset_id):
        if vo.name == name:
            return vo
    raise ArgumentError(f"unknown view orientation {name!r} for {dataset_id}")


def resample_sequence(seq: SkeletonSequence, count: int) -> SkeletonSequence:
    """Uniformly resample a gesture to exactly ``count`` frames.

    Sample u sits at fractional frame index ``u*(T-1)/(count-1)``: the
    first and last frames are preserved exactly, interior samples are
    convex combinations of their two neighbours (so extents never grow).
    """
    if count < 2:
        raise ArgumentError(f"resample count must be >= 2, got {count}")
    return SkeletonSequence(
        frames=resample_frames(seq.frames, count),
        schema=seq.schema,
        label=seq.label,
        subject=seq.subject,
        source_path=seq.source_path,
    )


def resample_frames(frames: np.ndarray, count: int) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3:
        raise ShapeError(f"expected (T, J, 3) frames, got {frames.shape}")
    t = frames.shape[0]
    if t == count:
        return frames.copy()
    pos = np.linspace(0.0, t - 1.0, count)
    idx = np.minimum(pos.astype(np.int64), t - 2)
    frac = pos - idx
    lo = frames[idx]
    hi = frames[idx + 1]
    out = lo + frac[:, None, None] * (hi - lo)
    # endpoints are copied, not interpolated: a + 1.0*(b - a) need not
    # round back to b exactly
    out[0] = frames[0]
    out[-1] = frames[-1]
    return out


@dataclass(frozen=True)
class FitResult:
    """A centred gesture plus the virtual-camera framing that contains it."""

    centered: SkeletonSequence
    camera_target: np.ndarray  # (3,) == (L/2, L/2, L/2)
    zoom: float
    gamma: float
    length: float

    @property
    def extents(self):
        flat = self.centered.frames.reshape(-1, 3)
        return flat.max(axis=0) - flat.min(axis=0)


def fit_sequence(seq: SkeletonSequence, length: float = CANONICAL_LENGTH,
                 gamma: float = GAMMA) -> FitResult:
    """Centre a gesture on the camera target and estimate the zoom.

    The centroid (mean over all frames and joints) is translated to
    ``P = (length/2,)*3`` — the fixed look-at point — and the zoom is the
    largest per-axis extent plus ``gamma``. Gestures differing only by a
    rigid translation therefore produce identical centred coordinates.
    """
    frames = seq.frames
    flat = frames.reshape(-1, 3)
    extents = flat.max(axis=0) - flat.min(axis=0)
    largest = float(extents.max())
    if largest == 0.0 and gamma <= 0.0:
        raise ArgumentError("cannot frame a degenerate point gesture with gamma=0")
    zoom = largest + gamma
    target = np.full(3, length / 2.0)
    centered = SkeletonSequence(
        frames=frames - flat.mean(axis=0) + target,
        schema=seq.schema,
        label=seq.label,
        subject=seq.subject,
        source_path=seq.source_path,
    )
    return FitResult(centered=centered, camera_target=target, zoom=zoom,
                     gamma=gamma, length=length)


def project(points: np.ndarray, fit: FitResult, vo: ViewOrientation,
            image_px: int) -> np.ndarray:
    """Orthographically project world points to pixel coordinates.

    Translate by -P, rotate into the camera basis, drop depth, scale by
    ``image_px / zoom`` and shift to the canvas centre. Screen y grows
    downward. Outputs are fractional pixels (no snapping here; the
    renderer snaps).
    """
    points = np.asarray(points, dtype=np.float64)
    if not np.isfinite(points).all():
        raise ArgumentError("cannot project non-finite points")
    rel = points.reshape(-1, 3) - fit.camera_target
    cam = rel @ camera_basis(vo).T
    scale = image_px / fit.zoom
    half = image_px / 2.0
    px = cam[:, 0] * scale + half
    py = half - cam[:, 1] * scale
    return np.stack([px, py], axis=1).reshape(points.shape[:-1] + (2,))


def trail_alphas(count: int, alpha_min: float, alpha_max: float) -> np.ndarray:
    """Opacity ramp for ``count`` trail markers: earliest most transparent.

    With a single trail frame the ramp degenerates to ``alpha_min``.
    """
    if count < 1:
        raise ArgumentError("trail needs at least one frame")
    if count == 1:
        return np.array([alpha_min])
    return alpha_min + (alpha_max - alpha_min) * np.arange(count) / (count - 1)


def render_temporal(frames: np.ndarray, schema: JointSchema, fit: FitResult,
                    vo: ViewOrientation, cfg: RenderConfig, canvas: Canvas) -> None:
    """Draw fingertip trail markers for the pre-final frames, oldest first."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[0] == 0:
        return
    alphas = trail_alphas(frames.shape[0], cfg.alpha_min, cfg.alpha_max)
    tips = frames[:, schema.fingertip_indices, :]               # (T-1, F, 3)
    tips_px = snap_subpixel(project(tips, fit, vo, cfg.image_px))
    for f, color in enumerate(schema.finger_colors):
        canvas.composite_disks(tips_px[:, f, :], cfg.marker_radius_px, color, alphas)


def render_spatial(final_frame: np.ndarray, schema: JointSchema, fit: FitResult,
                   vo: ViewOrientation, cfg: RenderConfig, canvas: Canvas) -> None:
    """Draw the final frame's skeleton bones, fully opaque, on top."""
    if not schema.bones:
        return
    joints_px = snap_subpixel(project(final_frame, fit, vo, cfg.image_px))
    bones = np.asarray(schema.bones, dtype=np.int64)
    canvas.composite_segments(
        joints_px[bones[:, 0]], joints_px[bones[:, 1]],
        cfg.bone_width_px, schema.bone_color,
    )


def condense(seq: SkeletonSequence, vo: ViewOrientation,
             cfg: RenderConfig | None = None, gamma: float = GAMMA,
             length: float = CANONICAL_LENGTH) -> np.ndarray:
    """Full condensation for one view orientation; returns (H, W, 3) uint8."""
    return condense_views(seq, (vo,), cfg, gamma, length)[0]


def condense_views(seq: SkeletonSequence, vos, cfg: RenderConfig | None = None,
                   gamma: float = GAMMA,
                   length: float = CANONICAL_LENGTH) -> list[np.ndarray]:
    """Condense one gesture through several view orientations.

    Resampling and fitting are shared across views: all virtual cameras
    target the same centred gesture.
    """
    cfg = cfg or RenderConfig()
    resampled = resample_sequence(seq, cfg.temporal_window)
    fit = fit_sequence(resampled, length, gamma)
    images = []
    for vo in vos:
        canvas = Canvas(cfg.image_px, cfg.background)
        render_temporal(fit.centered.frames[:-1], seq.schema, fit, vo, cfg, canvas)
        render_spatial(fit.centered.frames[-1], seq.schema, fit, vo, cfg, canvas)
        images.append(canvas.to_image())
    return images
