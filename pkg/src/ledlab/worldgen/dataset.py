"""Split construction, corpus statistics and end-to-end dataset generation."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .environment import Environment, WorldParams, generate_environment
from .episodes import Episode, PolicyParams, sample_start_locations, script_episode


def build_splits(envs: list[Environment], episodes: list[Episode], ratios=(6, 2, 2),
                 val_seen_per_env: int = 1, seed: int = 0) -> dict[str, str]:
    """Assign every episode to train / val_seen / val_unseen / test.

    Environments are partitioned by ``ratios`` (train, val_unseen, test). For
    each train environment ``val_seen_per_env`` episodes are held out as
    val_seen; since start nodes within an environment are distinct, val_seen
    starts never coincide with train starts.
    """
    if len(envs) < 4:
        raise ConfigError("need at least 4 environments to build splits")
    if len(ratios) != 3 or min(ratios) <= 0:
        raise ConfigError("ratios must be three positive numbers (train, val_unseen, test)")
    ids = sorted(e.env_id for e in envs)
    rng = np.random.default_rng(seed)
    ids = [ids[i] for i in rng.permutation(len(ids))]
    n_train, n_val, n_test = expected_split_envs(len(ids), ratios)
    if n_train < 1:
        raise ConfigError("split ratios leave no training environment")
    env_split = {e: "train" for e in ids[:n_train]}
    env_split.update({e: "val_unseen" for e in ids[n_train:n_train + n_val]})
    env_split.update({e: "test" for e in ids[n_train + n_val:]})

    by_env: dict[str, list[Episode]] = {}
    for ep in sorted(episodes, key=lambda e: e.episode_id):
        by_env.setdefault(ep.env_id, []).append(ep)
    assignment = {}
    for env_id in sorted(by_env):
        eps = by_env[env_id]
        split = env_split[env_id]
        if split == "train":
            held = set(rng.permutation(len(eps))[:min(val_seen_per_env, len(eps) - 1)].tolist())
            for i, ep in enumerate(eps):
                assignment[ep.episode_id] = "val_seen" if i in held else "train"
        else:
            for ep in eps:
                assignment[ep.episode_id] = split
    return assignment


def dataset_stats(episodes: list[Episode]) -> dict:
    """Average messages / words per dialog and the navigation-step histogram.

    Words are whitespace-separated chunks of the raw message text.
    """
    if not episodes:
        raise ValueError("dataset_stats needs at least one episode")
    n = len(episodes)
    messages = sum(len(ep.dialog) for ep in episodes)
    words = sum(len(m.text.split()) for ep in episodes for m in ep.dialog)
    hist = Counter(ep.nav_steps for ep in episodes)
    moved = [ep.nav_steps for ep in episodes if ep.nav_steps > 0]
    return {
        "episodes": n,
        "avg_messages": messages / n,
        "avg_words": words / n,
        "nav_fraction": len(moved) / n,
        "avg_nav_steps": sum(moved) / len(moved) if moved else 0.0,
        "nav_histogram": dict(sorted(hist.items())),
    }


@dataclass
class DatasetConfig:
    num_envs: int = 10
    split_ratios: tuple[int, int, int] = (6, 2, 2)
    train_per_env: int = 8
    val_seen_per_env: int = 1
    eval_per_env: int = 12
    min_sep_m: float = 5.0
    world: WorldParams = field(default_factory=WorldParams)
    policy: PolicyParams = field(default_factory=PolicyParams)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown dataset keys: {sorted(unknown)}")
        if "world" in d:
            d["world"] = WorldParams.from_dict(d["world"])
        if "policy" in d:
            bad = set(d["policy"]) - set(PolicyParams.__dataclass_fields__)
            if bad:
                raise ConfigError(f"unknown policy keys: {sorted(bad)}")
            d["policy"] = PolicyParams(**d["policy"])
        if "split_ratios" in d:
            d["split_ratios"] = tuple(d["split_ratios"])
        return cls(**d)


def _episode_rng(seed: int, env_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, env_index, 1])


def generate_dataset(cfg: DatasetConfig, seed: int):
    """Generate environments and split-tagged episodes.

    Every environment owns an independent random stream derived from
    ``(seed, env_index)`` so the result does not depend on generation order.
    Returns ``(envs, episodes)`` with episodes sorted by id.
    """
    envs = [generate_environment(int(np.random.default_rng([seed, i, 0]).integers(2 ** 31)),
                                 cfg.world, env_id=f"env{i:04d}")
            for i in range(cfg.num_envs)]
    cap = max(cfg.train_per_env + cfg.val_seen_per_env, cfg.eval_per_env)
    episodes = []
    for i, env in enumerate(envs):
        rng = _episode_rng(seed, i)
        starts = sample_start_locations(env, cfg.min_sep_m, rng)[:cap]
        episodes += [script_episode(env, s, rng, cfg.policy) for s in starts]
    assignment = build_splits(envs, episodes, cfg.split_ratios, cfg.val_seen_per_env, seed)
    kept, per_env = [], Counter()
    for ep in sorted(episodes, key=lambda e: e.episode_id):
        ep.split = assignment[ep.episode_id]
        limit = {"train": cfg.train_per_env, "val_seen": cfg.val_seen_per_env}.get(ep.split, cfg.eval_per_env)
        if per_env[(ep.env_id, ep.split)] < limit:
            per_env[(ep.env_id, ep.split)] += 1
            kept.append(ep)
    return envs, kept


def split_counts(episodes: list[Episode]) -> dict[str, int]:
    c = Counter(ep.split for ep in episodes)
    return {k: c.get(k, 0) for k in ("train", "val_seen", "val_unseen", "test")}


def expected_split_envs(n_envs: int, ratios) -> tuple[int, int, int]:
    total = sum(ratios)
    n_val = max(1, round(n_envs * ratios[1] / total))
    n_test = max(1, round(n_envs * ratios[2] / total))
    return n_envs - n_val - n_test, n_val, n_test

