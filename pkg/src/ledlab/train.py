"""Targets, augmentation, the optimization loop and checkpoint selection."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DivergenceError
from .evaluation.metrics import MetricsReport
from .evaluation.predictors import ModelPredictor, evaluate
from .inputs import floor_raster
from .model import LingUNet, save_checkpoint
from .text import Vocabulary, encode_dialog, rotate_compass

METRIC_FIELDS = ("epoch", "split", "le", "acc3", "acc5", "loss")


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 10
    dropout_p: float = 0.5
    sigma_meters: float = 3.0
    max_epochs: int = 30
    color_jitter: bool = True
    rot180: bool = True
    rot_prob: float = 0.5
    crop_frac: float = 0.05
    penalize_other_floors: bool = False
    eval_splits: tuple[str, ...] = ("val_seen", "val_unseen")
    seed: int = 0

    def validate(self) -> None:
        if not self.sigma_meters > 0:
            raise ConfigError("sigma_meters must be positive")
        if not 0.0 <= self.crop_frac <= 0.2:
            raise ConfigError("crop_frac must lie in [0, 0.2]")
        if self.batch_size < 1 or self.max_epochs < 0 or self.lr < 0:
            raise ConfigError("batch_size >= 1, max_epochs >= 0 and lr >= 0 are required")
        if not 0.0 <= self.rot_prob <= 1.0:
            raise ConfigError("rot_prob must lie in [0, 1]")

    @property
    def augmenting(self) -> bool:
        return self.color_jitter or (self.rot180 and self.rot_prob > 0) or self.crop_frac > 0

    def without_augmentation(self) -> "TrainConfig":
        d = asdict(self)
        d.update(color_jitter=False, rot180=False, crop_frac=0.0)
        return TrainConfig(**d)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train keys: {sorted(unknown)}")
        d = dict(d)
        if "eval_splits" in d:
            d["eval_splits"] = tuple(d["eval_splits"])
        cfg = cls(**d)
        cfg.validate()
        return cfg


def gaussian_target(final_xy: tuple[float, float], grid_hw: tuple[int, int], meters_per_cell: float,
                    sigma_meters: float = 3.0, normalize: bool = True) -> np.ndarray:
    """Isotropic Gaussian around ``final_xy`` sampled at cell centers (meters), summing to 1."""
    h, w = grid_hw
    x, y = final_xy
    if not (0.0 <= x < w * meters_per_cell and 0.0 <= y < h * meters_per_cell):
        raise ValueError(f"position ({x:.2f}, {y:.2f}) m lies outside the {h}x{w} grid")
    cy = (np.arange(h) + 0.5) * meters_per_cell
    cx = (np.arange(w) + 0.5) * meters_per_cell
    d2 = (cy[:, None] - y) ** 2 + (cx[None, :] - x) ** 2
    field_ = np.exp(-0.5 * d2 / sigma_meters ** 2)
    return field_ / field_.sum() if normalize else field_


def augment(raster: np.ndarray, final_xy: tuple[float, float], rng: np.random.Generator,
            config: TrainConfig, meters_per_pixel: float, max_retries: int = 10):
    """Color jitter, 180-degree rotation and border cropping of a [3, H, W] raster.

    The output keeps the input size: a crop moves the kept region to the
    top-left corner and zero-pads the rest, so dimensions stay divisible by 8.
    """
    out, xy, _ = _augment(raster, final_xy, rng, config, meters_per_pixel, max_retries)
    return out, xy


def _augment(raster, final_xy, rng, config, meters_per_pixel, max_retries=10):
    rotated = False
    out = np.array(raster, dtype=np.float64, copy=True)
    C, H, W = out.shape
    x, y = final_xy
    if config.color_jitter:
        gain = rng.uniform(0.8, 1.2, size=(C, 1, 1))
        shift = rng.uniform(-0.1, 0.1, size=(C, 1, 1))
        out = np.clip(out * gain + shift, 0.0, 1.0)
    if config.rot180 and rng.random() < config.rot_prob:
        out = out[:, ::-1, ::-1].copy()
        x, y = W * meters_per_pixel - x, H * meters_per_pixel - y
        rotated = True
    if config.crop_frac > 0:
        my, mx = int(config.crop_frac * H), int(config.crop_frac * W)
        for _ in range(max_retries):
            top, bottom = rng.integers(0, my + 1, size=2)
            left, right = rng.integers(0, mx + 1, size=2)
            nx, ny = x - left * meters_per_pixel, y - top * meters_per_pixel
            kw, kh = W - left - right, H - top - bottom
            if 0.0 <= nx < kw * meters_per_pixel and 0.0 <= ny < kh * meters_per_pixel:
                cropped = np.zeros_like(out)
                cropped[:, :kh, :kw] = out[:, top:top + kh, left:left + kw]
                out, x, y = cropped, nx, ny
                break
    return out, (x, y), rotated


def rotate180(raster: np.ndarray, final_xy, meters_per_pixel: float):
    _, H, W = raster.shape
    return raster[:, ::-1, ::-1].copy(), (W * meters_per_pixel - final_xy[0], H * meters_per_pixel - final_xy[1])


def episode_loss(model: LingUNet, raster: np.ndarray, xy, seq, config: TrainConfig, mpp: float,
                 rng=None, other_rasters=()) -> ad.Tensor:
    """KL between the smoothed target and the predicted distribution on one floor.

    With ``penalize_other_floors`` the softmax spans the ground-truth floor and
    ``other_rasters`` jointly, and the target puts no mass on the other floors.
    """
    acts = model.forward(raster, seq, rng)
    cell = mpp * model.config.downsample_factor
    target = gaussian_target(xy, acts.logits.shape, cell, config.sigma_meters)
    if not (config.penalize_other_floors and other_rasters):
        return ad.kl_div(target, acts.log_probs)
    flat = [ad.reshape(acts.logits, (-1,))]
    zeros = []
    for r in other_rasters:
        lg = model.forward(r, seq, rng).logits
        flat.append(ad.reshape(lg, (-1,)))
        zeros.append(np.zeros(lg.size))
    joint = ad.log_softmax_flat(ad.concat(flat, axis=0))
    return ad.kl_div(np.concatenate([target.ravel(), *zeros]), joint)


@dataclass
class TrainResult:
    rows: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_state: dict | None = None
    final_state: dict | None = None


def select_checkpoint(rows, split: str = "val_unseen") -> int:
    """Epoch with the highest Acc@3m on ``split``; the earliest wins ties."""
    best_epoch, best = None, -math.inf
    for row in rows:
        if row["split"] == split and row["epoch"] >= 1 and float(row["acc3"]) > best:
            best_epoch, best = int(row["epoch"]), float(row["acc3"])
    if best_epoch is None:
        raise ValueError(f"no evaluated epoch for split {split!r}")
    return best_epoch


def select_from_accuracies(accs) -> int:
    """1-based index of the best value; earliest on ties."""
    return select_checkpoint([{"epoch": i + 1, "split": "val_unseen", "acc3": a} for i, a in enumerate(accs)])


def write_metrics(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{row[k]:.10g}" if isinstance(row[k], float) else row[k]) for k in METRIC_FIELDS})


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["epoch"] = int(r["epoch"])
        for k in ("le", "acc3", "acc5", "loss"):
            r[k] = float(r[k]) if r[k] != "" else math.nan
    return rows


def _eval_loss(model, episodes, envs, vocab, config) -> float:
    total = 0.0
    for ep in episodes:
        env = envs[ep.env_id]
        loss = episode_loss(model, floor_raster(env, ep.floor), ep.xy, encode_dialog(ep.dialog, vocab),
                            config, env.meters_per_pixel)
        total += loss.item()
    return total / len(episodes)


def evaluate_splits(model, vocab, splits: dict, envs: dict, config: TrainConfig, epoch: int) -> list[dict]:
    model.eval()
    rows = []
    predictor = ModelPredictor(model, vocab)
    for name in sorted(splits):
        eps = splits[name]
        if not eps:
            continue
        report = MetricsReport.from_records(name, evaluate(predictor, eps, envs))
        rows.append({"epoch": epoch, "split": name, "le": report.le, "acc3": report.acc3,
                     "acc5": report.acc5, "loss": _eval_loss(model, eps, envs, vocab, config)})
    return rows


def train_loop(train_episodes, envs: dict, vocab: Vocabulary, model: LingUNet, config: TrainConfig,
               eval_sets: dict | None = None, checkpoint_dir=None, log=None,
               lineage: dict | None = None) -> TrainResult:
    """Optimize ``model`` in place and evaluate ``eval_sets`` after every epoch.

    The returned rows hold one ``train`` row per epoch (mean minibatch
    objective; LE/Acc filled in only when ``train`` is also an eval split)
    followed by one row per evaluated split. The model's dropout rate is taken
    from ``config``. ``lineage`` is stored in every checkpoint header.
    """
    config.validate()
    if not train_episodes:
        raise ValueError("training needs at least one episode")
    model.config.dropout_p = config.dropout_p
    eval_sets = eval_sets or {}
    rng = np.random.default_rng(config.seed)
    state = ad.AdamState(lr=config.lr)
    train_eps = sorted(train_episodes, key=lambda e: e.episode_id)
    seqs = {ep.episode_id: encode_dialog(ep.dialog, vocab) for ep in train_eps}
    params = model.params
    result = TrainResult()
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, checkpoint_dir / "epoch0000.ckpt",
                        {**(lineage or {}), "train_seed": config.seed, "epoch": 0})
    best_acc = -math.inf
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = rng.permutation(len(train_eps))
        objective, batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_eps[i] for i in order[start:start + config.batch_size]]
            losses = []
            for ep in batch:
                env = envs[ep.env_id]
                mpp = env.meters_per_pixel
                raster, xy, seq = floor_raster(env, ep.floor), ep.xy, seqs[ep.episode_id]
                if config.augmenting:
                    raster, xy, rotated = _augment(raster, xy, rng, config, mpp)
                    if rotated:
                        # absolute directions in the dialog turn with the map
                        seq = rotate_compass(seq, vocab)
                others = [floor_raster(env, f) for f in range(len(env.floors)) if f != ep.floor] \
                    if config.penalize_other_floors else ()
                losses.append(episode_loss(model, raster, xy, seq, config, mpp, rng, others))
            loss = ad.scale(_sum(losses), 1.0 / len(batch))
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(f"loss became {value} at epoch {epoch}, batch {batches + 1}")
            model.zero_grad()
            ad.backward(loss)
            ad.adam_step(params, {k: p.grad for k, p in params.items()}, state)
            objective += value
            batches += 1
        train_row = {"epoch": epoch, "split": "train", "le": math.nan, "acc3": math.nan,
                     "acc5": math.nan, "loss": objective / batches}
        rows = evaluate_splits(model, vocab, eval_sets, envs, config, epoch)
        for r in rows:
            if r["split"] == "train":
                train_row.update(le=r["le"], acc3=r["acc3"], acc5=r["acc5"])
        rows = [train_row] + [r for r in rows if r["split"] != "train"]
        result.rows += rows
        val = next((r["acc3"] for r in rows if r["split"] == "val_unseen"), None)
        if val is not None and val > best_acc:
            best_acc, result.best_epoch, result.best_state = val, epoch, model.state_dict()
        if checkpoint_dir is not None:
            save_checkpoint(model, checkpoint_dir / f"epoch{epoch:04d}.ckpt",
                            {**(lineage or {}), "train_seed": config.seed, "epoch": epoch})
        if log is not None:
            log(rows)
    model.eval()
    result.final_state = model.state_dict()
    if result.best_state is None:
        result.best_state = result.final_state
        result.best_epoch = config.max_epochs
    return result


def _sum(tensors):
    total = tensors[0]
    for t in tensors[1:]:
        total = ad.add(total, t)
    return total
