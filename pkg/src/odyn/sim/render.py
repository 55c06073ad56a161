"""Top-down rasterizer for world states.

Pixel centers are sampled on a regular grid over the container; row 0
is the y=0 edge. Objects are painted in ascending (height, -id) order so
the tallest body owns a contested pixel and ties go to the lower id.
The pusher is drawn into the color and depth images only; the per-object
masks describe the objects as if the pusher were not there, so they
depend on object state alone.

Depth encodes body height directly (background 0, pusher 1).
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from . import shapes as shp
from .world import WorldState


def pixel_centers(width: int, height: int, bounds) -> tuple[np.ndarray, np.ndarray]:
    """World coordinates of every pixel center, as (X, Y) grids of
    shape (height, width)."""
    bw, bh = bounds
    xs = (np.arange(width) + 0.5) * (bw / width)
    ys = (np.arange(height) + 0.5) * (bh / height)
    return np.meshgrid(xs, ys)


def polygon_mask(X: np.ndarray, Y: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Boolean inside-test of pixel centers against a convex CCW polygon."""
    inside = np.ones(X.shape, dtype=bool)
    k = len(verts)
    for i in range(k):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % k]
        # cross(edge, p - v1) >= 0 keeps the CCW interior
        inside &= (x2 - x1) * (Y - y1) - (y2 - y1) * (X - x1) >= 0.0
    return inside


def render(
    w: WorldState, width: int = 32, height: int = 24
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rasterize a state into (rgb (H,W,3), depth (H,W), masks (N,H,W))."""
    if width < 2 or height < 2:
        raise DomainError(f"frame size {width}x{height} too small")
    n = len(w.objects)
    X, Y = pixel_centers(width, height, w.params.bounds)
    owner = np.full((height, width), -1, dtype=np.int32)
    order = sorted(range(n), key=lambda i: (w.objects[i].height, -i))
    for i in order:
        m = polygon_mask(X, Y, w.objects[i].world_verts())
        owner[m] = i

    rgb = np.zeros((height, width, 3), dtype=np.float32)
    depth = np.zeros((height, width), dtype=np.float32)
    masks = np.zeros((n, height, width), dtype=np.uint8)
    for i, o in enumerate(w.objects):
        sel = owner == i
        masks[i][sel] = 1
        rgb[sel] = shp.PALETTE[o.shape_id]
        depth[sel] = o.height

    pr = w.params.pusher_radius
    pm = (X - w.pusher_pos[0]) ** 2 + (Y - w.pusher_pos[1]) ** 2 <= pr * pr
    rgb[pm] = np.asarray(shp.PUSHER_COLOR, dtype=np.float32)
    depth[pm] = shp.PUSHER_HEIGHT
    return rgb, depth, masks
