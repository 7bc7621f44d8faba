"""Deterministic orthographic preview rasterizer.

Splats render as solid screen-space ellipses (the projected 2-sigma extent)
composited back-to-front with a stable depth sort. This serves UI thumbnails
and external-scorer crops; faithful rendering belongs to real splat viewers.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .splat_model import Aabb, GaussianScene, SH_C0, rotation_matrices

_AXIS_FRAMES = {
    # up axis -> (a1, a2, up): azimuth sweeps the a1/a2 plane
    "z": (np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0])),
    "y": (np.array([1.0, 0, 0]), np.array([0, 0, 1.0]), np.array([0, 1.0, 0])),
}


@dataclass
class PreviewImage:
    width: int
    height: int
    rgba: np.ndarray                      # (H, W, 4) uint8
    view: dict = field(default_factory=dict)

    def to_png(self) -> bytes:
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(self.rgba, mode="RGBA").save(buf, format="PNG")
        return buf.getvalue()


def _camera_basis(azimuth_deg: float, elevation_deg: float, up_axis: str):
    a1, a2, up = _AXIS_FRAMES[up_axis]
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    to_cam = math.cos(el) * math.cos(az) * a1 + math.cos(el) * math.sin(az) * a2 + math.sin(el) * up
    forward = -to_cam
    right = np.cross(forward, up)
    nr = np.linalg.norm(right)
    right = a1 if nr < 1e-9 else right / nr
    screen_up = np.cross(right, forward)
    return forward, right, screen_up


def render_preview(
    scene: GaussianScene,
    azimuth: float = 45.0,
    elevation: float = 30.0,
    width: int = 512,
    height: int = 512,
    up_axis: str = "z",
    crop: Aabb | None = None,
    highlight: np.ndarray | None = None,
    highlight_tint: tuple[float, float, float] = (1.0, 0.3, 0.1),
) -> PreviewImage:
    """Rasterize the scene; ``crop`` narrows the orthographic window to the
    given box (plus 10% padding). ``highlight`` tints the listed splats."""
    buf = np.zeros((height, width, 4), dtype=np.float64)
    n = len(scene)
    view_info = {
        "azimuth": azimuth, "elevation": elevation, "up_axis": up_axis,
        "width": width, "height": height,
    }
    if n == 0:
        return PreviewImage(width, height, buf.astype(np.uint8), view_info)

    forward, right, screen_up = _camera_basis(azimuth, elevation, up_axis)
    center = scene.bounds.center
    basis = np.stack([right, screen_up, forward])      # rows: sx, sy, depth

    pos = scene.positions.astype(np.float64)
    s = (pos - center) @ basis.T
    sx, sy, depth = s[:, 0], s[:, 1], s[:, 2]

    window_box = crop if crop is not None else scene.bounds
    wc = (window_box.corners() - center) @ basis.T
    pad = 0.10 if crop is not None else 0.05
    half_w = (wc[:, 0].max() - wc[:, 0].min()) / 2
    half_h = (wc[:, 1].max() - wc[:, 1].min()) / 2
    cx = (wc[:, 0].max() + wc[:, 0].min()) / 2
    cy = (wc[:, 1].max() + wc[:, 1].min()) / 2
    half_w = max(half_w * (1 + pad), 1e-6)
    half_h = max(half_h * (1 + pad), 1e-6)
    # equalize pixel aspect
    if half_w / width > half_h / height:
        half_h = half_w * height / width
    else:
        half_w = half_h * width / height
    px = width / (2 * half_w)                           # pixels per world unit

    colors = np.clip(scene.sh_dc.astype(np.float64) * SH_C0 + 0.5, 0.0, 1.0)
    if highlight is not None and len(highlight):
        tint = np.asarray(highlight_tint)
        colors[highlight] = 0.45 * colors[highlight] + 0.55 * tint
    alphas = 1.0 / (1.0 + np.exp(-scene.logit_opacities.astype(np.float64)))

    # projected 2x2 covariances
    rot = rotation_matrices(scene.rotations.astype(np.float64))
    scale = np.exp(scene.log_scales.astype(np.float64))
    proj = basis[:2]                                    # (2, 3)
    a = np.einsum("ij,njk,nk->nik", proj, rot, scale)   # (n, 2, 3)
    cov2 = np.einsum("nik,njk->nij", a, a)              # (n, 2, 2)
    rx = 2.0 * np.sqrt(np.maximum(cov2[:, 0, 0], 0.0))
    ry = 2.0 * np.sqrt(np.maximum(cov2[:, 1, 1], 0.0))

    # pixel-space centers (row 0 = top of the window)
    cxs = (sx - cx + half_w) * px
    cys = (half_h - (sy - cy)) * px

    dets = cov2[:, 0, 0] * cov2[:, 1, 1] - cov2[:, 0, 1] ** 2

    order = np.lexsort((np.arange(n), -depth))          # far to near, ties by index
    min_px = 0.5
    for i in order:
        aval = alphas[i]
        if aval < 1.0 / 255.0:
            continue
        ex = max(rx[i] * px, min_px)
        ey = max(ry[i] * px, min_px)
        x0 = int(math.floor(cxs[i] - ex))
        x1 = int(math.ceil(cxs[i] + ex)) + 1
        y0 = int(math.floor(cys[i] - ey))
        y1 = int(math.ceil(cys[i] + ey)) + 1
        x0, x1 = max(x0, 0), min(x1, width)
        y0, y1 = max(y0, 0), min(y1, height)
        if x0 >= x1 or y0 >= y1:
            continue
        dx = (np.arange(x0, x1) + 0.5 - cxs[i]) / px    # world units
        dy = (cys[i] - (np.arange(y0, y1) + 0.5)) / px
        det = dets[i]
        if det > 1e-24:
            ia = cov2[i, 1, 1] / det
            ib = -cov2[i, 0, 1] / det
            ic = cov2[i, 0, 0] / det
            q = (
                ia * dx[np.newaxis, :] ** 2
                + 2.0 * ib * dx[np.newaxis, :] * dy[:, np.newaxis]
                + ic * dy[:, np.newaxis] ** 2
            )
            mask = q <= 4.0                              # inside the 2-sigma ellipse
        else:
            # degenerate covariance: fall back to a point sprite
            ux = dx * px / min_px
            uy = dy * px / min_px
            mask = (ux[np.newaxis, :] ** 2 + uy[:, np.newaxis] ** 2) <= 1.0
        if not mask.any():
            # sub-pixel splat: still mark its center pixel
            cxi, cyi = int(cxs[i]), int(cys[i])
            if 0 <= cxi < width and 0 <= cyi < height:
                mask = np.zeros((y1 - y0, x1 - x0), dtype=bool)
                if y0 <= cyi < y1 and x0 <= cxi < x1:
                    mask[cyi - y0, cxi - x0] = True
            if not mask.any():
                continue
        tile = buf[y0:y1, x0:x1]
        blend = aval * mask[:, :, np.newaxis]
        tile[:, :, :3] = blend * colors[i] + (1.0 - blend) * tile[:, :, :3]
        tile[:, :, 3:] = blend + (1.0 - blend) * tile[:, :, 3:]

    rgba = np.rint(buf * 255.0).astype(np.uint8)
    return PreviewImage(width, height, rgba, view_info)
