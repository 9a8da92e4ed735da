"""Desk-scale benchmark: train the full model and its ablations on one seeded dataset."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .evaluation import MetricsReport, ModelPredictor, evaluate, make_baseline
from .inputs import build_vocab
from .model import LingUNet, ModelConfig
from .train import TrainConfig, train_loop
from .worldgen import DatasetConfig, generate_dataset

# config overrides that turn the default recipe into a trained ablation variant
TRAIN_VARIANTS = {
    "full": ({}, {}),
    "no_dialog": ({"use_dialog": False}, {}),
    "no_vision": ({"use_vision": False}, {}),
    "no_residual": ({"residual": False}, {}),
    "no_aug": ({}, {"color_jitter": False, "rot180": False, "crop_frac": 0.0}),
}


def variant_configs(variant: str, vocab_size: int, model: dict | None = None, train: dict | None = None,
                    seed: int = 0) -> tuple[ModelConfig, TrainConfig]:
    if variant not in TRAIN_VARIANTS:
        raise KeyError(f"unknown variant {variant!r}; valid names: {', '.join(TRAIN_VARIANTS)}")
    m_over, t_over = TRAIN_VARIANTS[variant]
    mcfg = ModelConfig.from_dict({**(model or {}), **m_over, "vocab_size": vocab_size})
    tcfg = TrainConfig.from_dict({**(train or {}), **t_over, "seed": seed})
    return mcfg, tcfg


@dataclass
class BenchmarkResult:
    split: str
    rows: dict = field(default_factory=dict)  # name -> MetricsReport
    best_epochs: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)  # name -> per-epoch Acc@3m on ``split``
    seconds: float = 0.0

    def acc3(self, name: str) -> float:
        return self.rows[name].acc3


def run_benchmark(seed: int = 1, dataset: DatasetConfig | None = None,
                  variants=("full", "no_dialog", "no_vision"), baselines=("random", "center"),
                  train: dict | None = None, model: dict | None = None, split: str = "val_unseen",
                  log=None) -> BenchmarkResult:
    """Generate the dataset, train every variant with the default recipe and score it on ``split``.

    Each model is scored with its best epoch on ``split``, the same rule the
    training command uses to pick its checkpoint.
    """
    start = time.perf_counter()
    dataset = dataset or DatasetConfig(num_envs=80, split_ratios=(64, 8, 8))
    envs, episodes = generate_dataset(dataset, seed)
    envs = {e.env_id: e for e in envs}
    train_eps = [ep for ep in episodes if ep.split == "train"]
    eval_eps = [ep for ep in episodes if ep.split == split]
    vocab = build_vocab(train_eps)
    result = BenchmarkResult(split)
    for name in baselines:
        predictor = make_baseline(name, seed, train_eps, envs)
        result.rows[name] = MetricsReport.from_records(split, evaluate(predictor, eval_eps, envs))
    for name in variants:
        mcfg, tcfg = variant_configs(name, len(vocab), model, train, seed)
        net = LingUNet(mcfg, seed=seed)
        progress = None
        if log is not None:
            def progress(rows, name=name):
                row = next(r for r in rows if r["split"] == split)
                log(f"{name:>10} epoch {row['epoch']:3d}  loss {rows[0]['loss']:.3f}  "
                    f"{split} acc3 {row['acc3']:.3f}  ({time.perf_counter() - start:.0f}s)")
        res = train_loop(train_eps, envs, vocab, net, tcfg, {split: eval_eps}, log=progress)
        net.load_state_dict(res.best_state)
        result.rows[name] = MetricsReport.from_records(split, evaluate(ModelPredictor(net.eval(), vocab),
                                                                       eval_eps, envs))
        result.best_epochs[name] = res.best_epoch
        result.curves[name] = [r["acc3"] for r in res.rows if r["split"] == split]
    result.seconds = time.perf_counter() - start
    return result
