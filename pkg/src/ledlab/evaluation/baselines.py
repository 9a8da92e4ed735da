"""Non-learned baselines. Every one of them predicts on the episode's ground-truth floor."""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..text import bleu, dialog_tokens
from ..worldgen import render_topdown
from .predictors import cell_position, grid_cells, seeded_rng

SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2


class RandomBaseline:
    """Uniformly random cell of the floor grid."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def __call__(self, episode, env):
        h, w = grid_cells(env, episode.floor)
        k = int(seeded_rng(self.seed, episode.episode_id).integers(h * w))
        return cell_position(env, episode.floor, k // w, k % w)


class CenterBaseline:
    """Center cell; on even grids the midpoint is floored, so a 4x4 grid gives (2, 2)."""

    def __call__(self, episode, env):
        h, w = grid_cells(env, episode.floor)
        return cell_position(env, episode.floor, h // 2, w // 2)


class RandomNodeBaseline:
    """Uniformly random navigation node on the floor (uses privileged graph access)."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def __call__(self, episode, env):
        nodes = env.nodes_on(episode.floor)
        if not nodes:
            raise ValueError(f"floor {episode.floor} of {env.env_id} has no navigation nodes")
        node = nodes[int(seeded_rng(self.seed, episode.episode_id).integers(len(nodes)))]
        return episode.floor, node.position[0], node.position[1]


def ssim_map(image: np.ndarray, patch: np.ndarray) -> np.ndarray:
    """SSIM of ``patch`` against every same-sized window of ``image``.

    Both are [H, W, C] arrays on a 0-255 scale. The window is the whole patch
    with uniform weights; the score is averaged over channels. Output shape is
    [H - ph + 1, W - pw + 1].
    """
    img = np.asarray(image, dtype=np.float64)
    pat = np.asarray(patch, dtype=np.float64)
    ph, pw, _ = pat.shape
    win = sliding_window_view(img, (ph, pw), axis=(0, 1))  # [R, S, C, ph, pw]
    n = ph * pw
    mu_x = win.mean(axis=(3, 4))
    var_x = (win ** 2).mean(axis=(3, 4)) - mu_x ** 2
    p = pat.transpose(2, 0, 1)  # [C, ph, pw]
    mu_p = p.mean(axis=(1, 2))
    var_p = p.var(axis=(1, 2))
    cov = np.einsum("rscij,cij->rsc", win, p - mu_p[:, None, None]) / n
    num = (2 * mu_x * mu_p + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x ** 2 + mu_p ** 2 + SSIM_C1) * (np.maximum(var_x, 0.0) + var_p + SSIM_C2)
    return (num / den).mean(axis=2)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError("ssim needs equally shaped inputs")
    return float(ssim_map(a, b)[0, 0])


def extract_patch(image: np.ndarray, center_rc: tuple[int, int], size: int) -> tuple[np.ndarray, int, int]:
    """Square patch of side ``size`` around ``center_rc``, shifted to stay inside the image."""
    H, W = image.shape[:2]
    size = min(size, H, W)
    r0 = min(max(center_rc[0] - size // 2, 0), H - size)
    c0 = min(max(center_rc[1] - size // 2, 0), W - size)
    return image[r0:r0 + size, c0:c0 + size], r0, c0


class HeuristicBaseline:
    """Nearest training dialog by BLEU, then SSIM template search for its location patch."""

    def __init__(self, train_episodes, envs: dict, patch_m: float = 3.0):
        if not train_episodes:
            raise ValueError("the heuristic baseline needs training episodes")
        self.train = sorted(train_episodes, key=lambda e: e.episode_id)
        self.train_tokens = [dialog_tokens(ep.dialog) for ep in self.train]
        self.envs = envs
        self.patch_m = patch_m

    def nearest(self, episode):
        query = dialog_tokens(episode.dialog)
        best, best_score = None, -1.0
        for ep, toks in zip(self.train, self.train_tokens):
            if not toks:
                continue
            score = bleu(query, toks)
            if score > best_score:
                best, best_score = ep, score
        return best

    def __call__(self, episode, env):
        source = self.nearest(episode)
        src_env = self.envs[source.env_id]
        mpp = src_env.meters_per_pixel
        size = math.ceil(self.patch_m / mpp - 1e-9)
        x, y = source.xy
        src_img = render_topdown(src_env, source.floor)
        patch, _, _ = extract_patch(src_img, (int(y / mpp), int(x / mpp)), size)
        scores = ssim_map(render_topdown(env, episode.floor), patch)
        r, c = np.unravel_index(int(np.argmax(scores)), scores.shape)
        ps = patch.shape[0]
        return (episode.floor, (c + ps / 2) * env.meters_per_pixel, (r + ps / 2) * env.meters_per_pixel)


BASELINES = ("random", "center", "random_node", "heuristic")


def make_baseline(name: str, seed: int = 0, train_episodes=None, envs=None):
    if name == "random":
        return RandomBaseline(seed)
    if name == "center":
        return CenterBaseline()
    if name == "random_node":
        return RandomNodeBaseline(seed)
    if name == "heuristic":
        return HeuristicBaseline(train_episodes or [], envs or {})
    raise KeyError(f"unknown baseline {name!r}; valid names: {', '.join(BASELINES)}")
