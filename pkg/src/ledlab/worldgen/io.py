"""On-disk formats: PNG rasters with JSON sidecars, environment JSON, episode JSON-lines."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .environment import Environment
from .episodes import Episode


def save_environment(env: Environment, root: Path) -> Path:
    d = Path(root) / env.env_id
    d.mkdir(parents=True, exist_ok=True)
    (d / "env.json").write_text(json.dumps(env.to_dict(), sort_keys=True))
    for floor in env.floors:
        stem = f"floor{floor.floor_index}"
        Image.fromarray(floor.raster).save(d / f"{stem}.png")
        sidecar = {"env_id": env.env_id, "floor_index": floor.floor_index,
                   "meters_per_pixel": env.meters_per_pixel, "height": floor.height, "width": floor.width}
        (d / f"{stem}.json").write_text(json.dumps(sidecar, sort_keys=True))
    return d


def load_environment(path: Path) -> Environment:
    """Load ``env.json`` and attach the stored rasters."""
    path = Path(path)
    env = Environment.from_dict(json.loads((path / "env.json").read_text()))
    for floor in env.floors:
        png = path / f"floor{floor.floor_index}.png"
        if png.exists():
            raster = np.asarray(Image.open(png).convert("RGB"))
            if raster.shape[:2] != (floor.height, floor.width):
                raise ValueError(f"{png} does not match floor dimensions")
            floor._raster = raster
    return env


def load_environments(root: Path) -> dict[str, Environment]:
    return {p.name: load_environment(p) for p in sorted(Path(root).iterdir()) if (p / "env.json").exists()}


def write_episodes(path: Path, episodes) -> None:
    with open(path, "w") as fh:
        for ep in episodes:
            fh.write(json.dumps(ep.to_dict(), sort_keys=True) + "\n")


def read_episodes(path: Path) -> list[Episode]:
    with open(path) as fh:
        return [Episode.from_dict(json.loads(line)) for line in fh if line.strip()]
