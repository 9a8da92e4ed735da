"""Predictors map a stripped episode and its environment to ``(floor, x, y)``.

``evaluate`` is the only place that sees true positions: it strips each
episode before handing it to the predictor and scores afterwards.
"""
from __future__ import annotations

import math
import zlib

import numpy as np

from ..inputs import floor_raster, grid_shape
from ..model import LingUNet, PredictionGrid, cell_center, predict
from ..text import Vocabulary, encode_dialog
from .metrics import PredictionRecord, make_record


class ModelPredictor:
    def __init__(self, model: LingUNet, vocab: Vocabulary, variant: str = "full", variant_seed: int = 0):
        self.model = model
        self.vocab = vocab
        self.variant = variant
        self.variant_seed = variant_seed

    def grid(self, episode, env) -> PredictionGrid:
        floor = episode.floor
        if not 0 <= floor < len(env.floors):
            raise ValueError(f"episode {episode.episode_id} refers to missing floor {floor}")
        seq = encode_dialog(episode.dialog, self.vocab, self.variant, self._seed(episode))
        return predict(self.model, floor_raster(env, floor), seq, floor, env.meters_per_pixel)

    def _seed(self, episode) -> list[int]:
        # per-episode shuffle seed that does not depend on evaluation order
        return [self.variant_seed, zlib.crc32(episode.episode_id.encode())]

    def __call__(self, episode, env) -> tuple[int, float, float]:
        x, y = self.grid(episode, env).position
        return episode.floor, x, y


def evaluate(predictor, episodes, envs: dict) -> list[PredictionRecord]:
    """Score ``predictor`` on ``episodes`` (ordered by id)."""
    records = []
    for ep in sorted(episodes, key=lambda e: e.episode_id):
        pred = predictor(ep.without_answer(), envs[ep.env_id])
        if any(math.isnan(v) for v in pred[1:]):
            raise ValueError(f"predictor returned NaN for {ep.episode_id}")
        records.append(make_record(ep.episode_id, pred, ep.final_position))
    return records


def cell_position(env, floor: int, row: int, col: int) -> tuple[int, float, float]:
    x, y = cell_center(row, col, 8 * env.meters_per_pixel)
    return floor, x, y


def grid_cells(env, floor: int) -> tuple[int, int]:
    return grid_shape(env, floor)


def seeded_rng(seed: int, episode_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(episode_id.encode())])
