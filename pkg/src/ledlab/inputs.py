"""Model-ready inputs: normalized floor rasters and encoded dialogs."""
from __future__ import annotations

import numpy as np

from .text import TokenSeq, Vocabulary, encode_dialog
from .worldgen import Environment, Episode, render_topdown


def floor_raster(env: Environment, floor_index: int) -> np.ndarray:
    """Rendered floor as float64 [3, H, W] in [0, 1], cached on the environment.

    The returned array is shared; callers must copy before modifying it.
    """
    cache = env.__dict__.setdefault("_raster_cache", {})
    if floor_index not in cache:
        img = render_topdown(env, floor_index)
        arr = img.transpose(2, 0, 1).astype(np.float64) / 255.0
        arr.setflags(write=False)
        cache[floor_index] = arr
    return cache[floor_index]


def grid_shape(env: Environment, floor_index: int, downsample: int = 8) -> tuple[int, int]:
    f = env.floors[floor_index]
    return f.height // downsample, f.width // downsample


def episode_tokens(ep: Episode, vocab: Vocabulary, variant: str = "full", seed: int | None = None) -> TokenSeq:
    return encode_dialog(ep.dialog, vocab, variant, seed)


def build_vocab(episodes) -> Vocabulary:
    return Vocabulary.build(m.text for ep in sorted(episodes, key=lambda e: e.episode_id) for m in ep.dialog)
