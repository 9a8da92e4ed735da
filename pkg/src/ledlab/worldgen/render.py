"""Orthographic top-down rendering of floor plans."""
from __future__ import annotations

import hashlib

import numpy as np

from .catalog import load_catalog

WALL_RGB = (40, 40, 40)
DOOR_RGB = (120, 70, 30)


def glyph_mask(object_type: str) -> np.ndarray:
    """5x5 stamp for an object type; the centre cell is always set.

    The pattern is derived from a stable hash so each type gets its own shape.
    """
    bits = int.from_bytes(hashlib.sha256(object_type.encode()).digest()[:4], "big")
    mask = np.array([(bits >> i) & 1 for i in range(25)], dtype=bool).reshape(5, 5)
    mask |= mask[:, ::-1]  # mirror for a more compact blob
    mask[1:4, 1:4] = True
    return mask


def render_floor(floor) -> np.ndarray:
    """RGB uint8 raster [H, W, 3] of one :class:`FloorPlan`."""
    cat = load_catalog()
    img = np.empty((floor.height, floor.width, 3), dtype=np.uint8)
    img[:] = WALL_RGB
    for room in floor.rooms:
        r0, c0, r1, c1 = room.interior
        img[r0:r1 + 1, c0:c1 + 1] = cat.room(room.label).rgb
    for door in floor.doors:
        img[door.row0:door.row1 + 1, door.col0:door.col1 + 1] = DOOR_RGB
    for obj in floor.objects:
        mask = glyph_mask(obj.object_type)
        rows, cols = np.nonzero(mask)
        img[obj.row + rows - 2, obj.col + cols - 2] = cat.colors[obj.color]
    return img


def render_topdown(env, floor_index: int) -> np.ndarray:
    if not 0 <= floor_index < len(env.floors):
        raise ValueError(f"environment {env.env_id} has no floor {floor_index}")
    return render_floor(env.floors[floor_index])
