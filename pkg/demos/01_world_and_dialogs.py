"""Build one synthetic building, script a few Observer episodes and look at them.

    python demos/01_world_and_dialogs.py [out_dir]

Writes the floor renders as PNG next to a text dump of each dialog.
"""
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from ledlab.worldgen import (PolicyParams, WorldParams, dataset_stats, generate_environment, render_topdown,
                             sample_start_locations, script_episode, validate_episode)

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_world")
out.mkdir(parents=True, exist_ok=True)

env = generate_environment(42, WorldParams(floors_range=(2, 2)), env_id="demo")
for f in range(len(env.floors)):
    img = render_topdown(env, f)
    # upscale so the glyphs are visible in an image viewer
    Image.fromarray(np.kron(img, np.ones((4, 4, 1), dtype=np.uint8))).save(out / f"floor{f}.png")
    rooms = sorted(r.label for r in env.floors[f].rooms)
    print(f"floor {f}: {len(rooms)} rooms ({', '.join(rooms)}), {len(env.nodes_on(f))} nav nodes")

rng = np.random.default_rng(0)
starts = sample_start_locations(env, 5.0, rng)
episodes = [script_episode(env, s, rng, PolicyParams()) for s in starts[:4]]
lines = []
for ep in episodes:
    validate_episode(env, ep)
    lines.append(f"== {ep.episode_id}: floor {ep.floor}, {ep.nav_steps} steps, ends at "
                 f"({ep.xy[0]:.1f} m, {ep.xy[1]:.1f} m)")
    lines += [f"  {m.role:>8}: {m.text}" for m in ep.dialog]
print("\n".join(lines))
(out / "dialogs.txt").write_text("\n".join(lines) + "\n")

stats = dataset_stats(episodes)
print(f"\n{stats['avg_messages']:.1f} messages and {stats['avg_words']:.1f} words per dialog; "
      f"{100 * stats['nav_fraction']:.0f}% of Observers moved")
