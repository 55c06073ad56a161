"""Fixed library of eight convex push objects.

Vertices are counter-clockwise, centered at each polygon's area centroid,
in world units. Shapes 0-2 are the "known" training pool; 3-7 only appear
in the novel-object evaluation sets. All shapes are asymmetric so no two
orientations or reflections look alike.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError

KNOWN_IDS = (0, 1, 2)
NOVEL_IDS = (3, 4, 5, 6, 7)

_VERTS = [
    [(-0.4970, +0.3053), (-0.0060, -0.5077), (+0.2988, -0.4361), (+0.3417, -0.0938), (+0.3443, +0.2138), (-0.0864, +0.4338)],
    [(+0.5358, +0.0513), (-0.1020, +0.4963), (-0.3406, +0.1079), (-0.4320, -0.1460), (-0.0519, -0.4864)],
    [(-0.0964, +0.4019), (-0.4525, -0.0145), (-0.2223, -0.2593), (+0.0885, -0.4892), (+0.2929, -0.1026), (+0.4279, +0.1994), (+0.1506, +0.3338)],
    [(-0.1888, -0.4017), (+0.2453, -0.2025), (+0.2122, +0.1160), (-0.1397, +0.4969)],
    [(+0.5265, -0.0195), (+0.0681, +0.4601), (-0.1660, +0.3727), (-0.3876, +0.0236), (-0.3975, -0.2955), (-0.0418, -0.4266)],
    [(+0.3860, -0.4941), (+0.1303, +0.5326), (-0.2482, +0.5177), (-0.3365, -0.0172), (-0.1377, -0.4625)],
    [(+0.0065, -0.5290), (+0.3463, -0.3219), (+0.2551, +0.2049), (+0.0210, +0.4930), (-0.2905, +0.4695), (-0.2763, -0.2121)],
    [(-0.5101, +0.1984), (+0.1183, -0.4585), (+0.2560, -0.1851), (+0.3905, +0.1752), (+0.0119, +0.2786)],
]

# distinct physical heights, used for depth rendering and occlusion order
_HEIGHTS = (0.40, 0.55, 0.35, 0.70, 0.45, 0.60, 0.30, 0.50)

# flat display colors, one per shape id
PALETTE = np.array(
    [
        (0.89, 0.10, 0.11),
        (0.22, 0.49, 0.72),
        (0.30, 0.69, 0.29),
        (0.60, 0.31, 0.64),
        (1.00, 0.50, 0.00),
        (0.97, 0.90, 0.12),
        (0.65, 0.34, 0.16),
        (0.97, 0.51, 0.75),
    ],
    dtype=np.float32,
)

PUSHER_HEIGHT = 1.0
PUSHER_COLOR = np.array((0.85, 0.85, 0.85), dtype=np.float32)


def shape_vertices(shape_id: int) -> np.ndarray:
    """Local CCW vertices (k, 2) for a shape id."""
    if not 0 <= shape_id < len(_VERTS):
        raise DomainError(f"shape id {shape_id} outside library of {len(_VERTS)}")
    return np.array(_VERTS[shape_id], dtype=np.float64)


def shape_height(shape_id: int) -> float:
    if not 0 <= shape_id < len(_HEIGHTS):
        raise DomainError(f"shape id {shape_id} outside library of {len(_HEIGHTS)}")
    return _HEIGHTS[shape_id]


def polygon_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return float(abs((x * yn - xn * y).sum()) / 2.0)


def bounding_radius(verts: np.ndarray) -> float:
    return float(np.linalg.norm(verts, axis=1).max())
