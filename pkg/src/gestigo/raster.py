"""Software rasterizer for condensed gesture images.

Primitives are drawn with analytic coverage over a ~1px feathered edge
(no supersampling): coverage at a pixel centre is
``clamp(radius + 0.5 - distance, 0, 1)``. Compositing happens in float64
for a whole render and is quantized to uint8 exactly once, which keeps
repeated renders byte-identical.

Projected coordinates are snapped to a 1/64 px grid before any coverage
math. Centering a sequence leaves ~1e-12 of floating-point residue; the
snap collapses that residue so translated copies of a gesture rasterize
to the same bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ArgumentError, ShapeError

SUBPIXEL = 64  # snap denominator for projected pixel coordinates

RGB = tuple[int, int, int]


@dataclass(frozen=True)
class RenderConfig:
    """Stroke geometry and canvas parameters for condensed images.

    ``bone_width`` and ``marker_radius`` are given in pixels at a
    ``reference_px`` canvas and scale linearly with ``image_px``.
    """

    image_px: int = 960
    background: RGB = (16, 16, 16)
    bone_width: float = 3.0
    marker_radius: float = 4.0
    reference_px: int = 960
    alpha_min: float = 0.10
    alpha_max: float = 1.00
    temporal_window: int = 250

    def __post_init__(self):
        if self.image_px < 8:
            raise ArgumentError(f"image_px too small: {self.image_px}")
        if not 0.0 <= self.alpha_min < self.alpha_max <= 1.0:
            raise ArgumentError("need 0 <= alpha_min < alpha_max <= 1")
        if self.temporal_window < 2:
            raise ArgumentError("temporal_window must be >= 2")

    @property
    def scale(self) -> float:
        return self.image_px / self.reference_px

    @property
    def bone_width_px(self) -> float:
        return max(1.0, self.bone_width * self.scale)

    @property
    def marker_radius_px(self) -> float:
        return max(0.75, self.marker_radius * self.scale)


class Canvas:
    """Float64 RGB canvas with source-over compositing primitives."""

    def __init__(self, image_px: int, background: RGB):
        self.image_px = image_px
        self._img = np.empty((image_px, image_px, 3), dtype=np.float64)
        self._img[:] = np.asarray(background, dtype=np.float64)

    def composite_disks(self, centers, radius, color, alphas):
        """Source-over a run of same-colored disks.

        Consecutive same-colored disks commute under source-over, so the
        run folds into one per-pixel coverage
        ``A = 1 - prod_i(1 - a_i * cov_i)`` applied in a single mix —
        numerically the product is accumulated as a sum of ``log1p``
        terms, which matches per-disk drawing to ~1e-12.
        """
        centers = np.asarray(centers, dtype=np.float64)
        if centers.size == 0:
            return
        if centers.ndim != 2 or centers.shape[1] != 2:
            raise ShapeError(f"disk centers must be (N, 2), got {centers.shape}")
        alphas = np.broadcast_to(
            np.asarray(alphas, dtype=np.float64), centers.shape[:1]
        )

        n = self.image_px
        pad = int(np.ceil(radius + 1.5))
        side = min(n, 2 * pad + 1)
        hi = max(0, n - side)
        x0 = np.clip(np.floor(centers[:, 0]).astype(np.int64) - pad, 0, hi)
        y0 = np.clip(np.floor(centers[:, 1]).astype(np.int64) - pad, 0, hi)

        # Region of interest covering every patch.
        rx0 = int(x0.min())
        ry0 = int(y0.min())
        rw = int(x0.max()) + side - rx0
        rh = int(y0.max()) + side - ry0

        offs = np.arange(side, dtype=np.float64)
        dx = x0[:, None] + offs[None, :] - centers[:, 0, None]   # (N, side)
        dy = y0[:, None] + offs[None, :] - centers[:, 1, None]
        dist = np.sqrt(dx[:, None, :] ** 2 + dy[:, :, None] ** 2)  # (N, y, x)
        cov = np.clip(radius + 0.5 - dist, 0.0, 1.0)
        with np.errstate(divide="ignore"):
            terms = np.log1p(-alphas[:, None, None] * cov)

        iy = (y0 - ry0)[:, None, None] + np.arange(side)[None, :, None]
        ix = (x0 - rx0)[:, None, None] + np.arange(side)[None, None, :]
        flat_idx = (iy * rw + ix).ravel()
        acc = np.bincount(flat_idx, weights=terms.ravel(), minlength=rh * rw)
        alpha = -np.expm1(acc.reshape(rh, rw))
        self._mix_region(alpha, color, ry0, rx0)

    def composite_segments(self, p0, p1, width, color, alpha=1.0):
        """Source-over same-colored capsule strokes (bounding-box patches)."""
        p0 = np.asarray(p0, dtype=np.float64)
        p1 = np.asarray(p1, dtype=np.float64)
        if p0.shape != p1.shape or p0.ndim != 2 or p0.shape[1] != 2:
            raise ShapeError("segment endpoints must both be (N, 2)")
        if p0.size == 0:
            return
        n = self.image_px
        r = width / 2.0
        pad = r + 1.5

        lo = np.minimum(p0, p1).min(axis=0) - pad
        hi = np.maximum(p0, p1).max(axis=0) + pad
        rx0 = max(0, int(np.floor(lo[0])))
        ry0 = max(0, int(np.floor(lo[1])))
        rx1 = min(n - 1, int(np.ceil(hi[0])))
        ry1 = min(n - 1, int(np.ceil(hi[1])))
        if rx1 < rx0 or ry1 < ry0:
            return
        keep = np.ones((ry1 - ry0 + 1, rx1 - rx0 + 1), dtype=np.float64)
        for a, b in zip(p0, p1):
            x0 = max(rx0, int(np.floor(min(a[0], b[0]) - pad)))
            x1 = min(rx1, int(np.ceil(max(a[0], b[0]) + pad)))
            y0 = max(ry0, int(np.floor(min(a[1], b[1]) - pad)))
            y1 = min(ry1, int(np.ceil(max(a[1], b[1]) + pad)))
            if x1 < x0 or y1 < y0:
                continue
            xs = np.arange(x0, x1 + 1, dtype=np.float64)
            ys = np.arange(y0, y1 + 1, dtype=np.float64)
            dist = _segment_distance(xs[None, :], ys[:, None], a, b)
            cov = np.clip(r + 0.5 - dist, 0.0, 1.0)
            keep[y0 - ry0:y1 + 1 - ry0, x0 - rx0:x1 + 1 - rx0] *= 1.0 - alpha * cov
        self._mix_region(1.0 - keep, color, ry0, rx0)

    def _mix_region(self, alpha, color, y0, x0):
        h, w = alpha.shape
        color = np.asarray(color, dtype=np.float64)
        view = self._img[y0:y0 + h, x0:x0 + w]
        view *= (1.0 - alpha)[:, :, None]
        view += alpha[:, :, None] * color

    def float_image(self) -> np.ndarray:
        """The raw float canvas (for numeric cross-checks in tests)."""
        return self._img.copy()

    def to_image(self) -> np.ndarray:
        """Quantize the float canvas to uint8 (the one rounding step)."""
        return np.rint(np.clip(self._img, 0.0, 255.0)).astype(np.uint8)


def _segment_distance(x, y, a, b):
    """Distance from grid points to segment ab (broadcasting x row, y col)."""
    ab = b - a
    denom = float(ab @ ab)
    dxa = x - a[0]
    dya = y - a[1]
    if denom == 0.0:
        return np.sqrt(dxa * dxa + dya * dya)
    t = np.clip((dxa * ab[0] + dya * ab[1]) / denom, 0.0, 1.0)
    ex = dxa - t * ab[0]
    ey = dya - t * ab[1]
    return np.sqrt(ex * ex + ey * ey)


def snap_subpixel(coords: np.ndarray) -> np.ndarray:
    """Round pixel coordinates to the 1/64 px grid."""
    return np.rint(np.asarray(coords, dtype=np.float64) * SUBPIXEL) / SUBPIXEL


def write_png(image: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 array as a PNG with fixed encoder settings."""
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) uint8 image, got {image.dtype} {image.shape}")
    Image.fromarray(image, mode="RGB").save(str(path), format="PNG", compress_level=6)


def read_png(path) -> np.ndarray:
    with Image.open(str(path)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)
