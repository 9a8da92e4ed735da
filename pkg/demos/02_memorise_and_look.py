"""Train LingUNet on a handful of episodes until it memorises them, then draw where it looks.

    python demos/02_memorise_and_look.py [out_dir]

Takes about half a minute on one core. The heatmaps show the predicted
distribution (blue), the true spot (green) and the 3 m circle (red).
"""
import sys
from pathlib import Path

from ledlab.evaluation import ModelPredictor, accuracy_at, evaluate, heatmap_svg, mean_error
from ledlab.inputs import build_vocab, floor_raster
from ledlab.model import LingUNet, ModelConfig
from ledlab.train import TrainConfig, train_loop
from ledlab.worldgen import DatasetConfig, generate_dataset

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_memorise")
out.mkdir(parents=True, exist_ok=True)

envs, episodes = generate_dataset(DatasetConfig(num_envs=4, split_ratios=(2, 1, 1), train_per_env=8), seed=21)
envs = {e.env_id: e for e in envs}
train = sorted((ep for ep in episodes if ep.split == "train"), key=lambda e: e.episode_id)[:16]
vocab = build_vocab(train)
print(f"{len(train)} episodes, vocabulary of {len(vocab)} tokens")

model = LingUNet(ModelConfig(vocab_size=len(vocab)), seed=0)
# no augmentation or dropout, and a target sharp enough to separate neighbouring cells
cfg = TrainConfig(max_epochs=200, batch_size=2, dropout_p=0.0, sigma_meters=1.5, color_jitter=False,
                  rot180=False, crop_frac=0.0, seed=0)


def progress(rows):
    if rows[0]["epoch"] % 25 == 0:
        print(f"epoch {rows[0]['epoch']:3d}  loss {rows[0]['loss']:.4f}")


train_loop(train, envs, vocab, model, cfg, log=progress)
predictor = ModelPredictor(model.eval(), vocab)
records = evaluate(predictor, train, envs)
print(f"train Acc@3m {accuracy_at(records, 3.0)[0]:.2f}, mean LE {mean_error(records)[0]:.2f} m")

for ep in train[:3]:
    env = envs[ep.env_id]
    grid = predictor.grid(ep.without_answer(), env)
    svg = heatmap_svg(floor_raster(env, ep.floor), grid.probs, ep.xy, env.meters_per_pixel)
    (out / f"{ep.episode_id}.svg").write_text(svg)
    print(f"wrote {out / ep.episode_id}.svg")
