"""``ledlab`` command line: gen-data, train, evaluate, ablate.

Every command writes the resolved experiment config (``config.json``) and a
``manifest.json`` with the seed, the config hash and SHA-256 digests of the
files it produced, so two runs can be compared by manifest alone.
"""
from __future__ import annotations

import os

_threads = os.environ.get("LED_LAB_THREADS")
if _threads and _threads.isdigit() and int(_threads) > 0:
    # must happen before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import hashlib  # noqa: E402
import json  # noqa: E402
import shutil  # noqa: E402
import sys  # noqa: E402
from dataclasses import asdict, dataclass, field  # noqa: E402
from pathlib import Path  # noqa: E402

from .errors import ConfigError, DataError, DivergenceError, GenerationError  # noqa: E402

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
SPLITS = ("train", "val_seen", "val_unseen", "test")
SECTIONS = ("worldgen", "model", "train", "eval", "paths", "seed")
EVAL_KEYS = {"splits", "ablations", "variant_checkpoints", "svg", "heatmaps"}
PATH_KEYS = {"data", "checkpoint"}
VARIANTS = ("full", "no_aug", "no_dialog", "no_residual", "no_vision")

@dataclass
class ExperimentConfig:
    worldgen: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def load(cls, path: str | None, seed: int | None = None) -> "ExperimentConfig":
        raw = {}
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file not found: {p}")
            try:
                raw = json.loads(p.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{p} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("the config must be a JSON object")
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}; expected {list(SECTIONS)}")
        cfg = cls(**raw)
        if seed is not None:
            cfg.seed = seed
        cfg.resolve()
        return cfg

    def resolve(self) -> None:
        """Validate every section, filling defaults so the archived copy is complete."""
        from .model import ModelConfig
        from .train import TrainConfig
        from .worldgen import DatasetConfig

        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        self.worldgen = json.loads(json.dumps(asdict(DatasetConfig.from_dict(self.worldgen))))
        model = dict(self.model)
        model.pop("vocab_size", None)  # always taken from the dataset vocabulary
        mcfg = ModelConfig.from_dict({**model, "vocab_size": 8})
        mcfg.validate()
        self.model = {k: v for k, v in mcfg.to_dict().items() if k != "vocab_size"}
        if "seed" in self.train:
            raise ConfigError("set the seed at the top level, not inside the train section")
        self.train = json.loads(json.dumps(asdict(TrainConfig.from_dict(self.train))))
        self.train.pop("seed")
        bad = set(self.eval) - EVAL_KEYS
        if bad:
            raise ConfigError(f"unknown eval keys: {sorted(bad)}")
        splits = self.eval.get("splits", ["val_seen", "val_unseen"])
        if not splits or any(s not in SPLITS for s in splits):
            raise ConfigError(f"eval.splits must be a non-empty subset of {list(SPLITS)}")
        self.eval = {"splits": list(splits), "ablations": self.eval.get("ablations", "all"),
                     "variant_checkpoints": dict(self.eval.get("variant_checkpoints", {})),
                     "svg": bool(self.eval.get("svg", False)), "heatmaps": int(self.eval.get("heatmaps", 0))}
        bad = set(self.paths) - PATH_KEYS
        if bad:
            raise ConfigError(f"unknown paths keys: {sorted(bad)}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in SECTIONS}

    def digest(self) -> str:
        return hashlib.sha256(_canonical(self.to_dict())).hexdigest()


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _prepare_out(out: str | None, force: bool) -> Path:
    if out is None:
        raise ConfigError("--out is required")
    p = Path(out)
    if p.exists() and not p.is_dir():
        raise ConfigError(f"{p} exists and is not a directory")
    if p.is_dir() and any(p.iterdir()):
        if not force:
            raise ConfigError(f"{p} is not empty; pass --force to overwrite")
        shutil.rmtree(p)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_manifest(out: Path, cfg: ExperimentConfig, extra: dict) -> dict:
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    files = {str(p.relative_to(out)): _sha256(p) for p in sorted(out.rglob("*"))
             if p.is_file() and p.name != "manifest.json"}
    manifest = {"seed": cfg.seed, "config_hash": cfg.digest(), **extra, "files": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# -- dataset ---------------------------------------------------------------

def cmd_gen_data(cfg: ExperimentConfig, out: Path, log=print) -> dict:
    from .inputs import build_vocab
    from .worldgen import DatasetConfig, dataset_stats, generate_dataset, save_environment, write_episodes

    dcfg = DatasetConfig.from_dict(cfg.worldgen)
    envs, episodes = generate_dataset(dcfg, cfg.seed)
    for env in envs:
        save_environment(env, out / "envs")
    counts, split_envs = {}, {}
    for split in SPLITS:
        eps = [ep for ep in episodes if ep.split == split]
        write_episodes(out / f"{split}.jsonl", eps)
        counts[split] = len(eps)
        split_envs[split] = sorted({ep.env_id for ep in eps})
    build_vocab([ep for ep in episodes if ep.split == "train"]).save(out / "vocab.txt")
    stats = dataset_stats(episodes)
    stats["nav_histogram"] = {str(k): v for k, v in stats["nav_histogram"].items()}
    manifest = _write_manifest(out, cfg, {"kind": "dataset", "counts": counts, "split_envs": split_envs,
                                          "num_envs": len(envs), "stats": stats})
    log(f"wrote {len(envs)} environments and {len(episodes)} episodes to {out} "
        f"(train {counts['train']}, val_seen {counts['val_seen']}, val_unseen {counts['val_unseen']}, "
        f"test {counts['test']})")
    return manifest


@dataclass
class Dataset:
    root: Path
    envs: dict
    splits: dict
    vocab: object
    manifest: dict


def load_dataset(root) -> Dataset:
    from .text import Vocabulary
    from .worldgen import load_environments, read_episodes

    if root is None:
        raise ConfigError("no dataset given; pass --data or set paths.data")
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DataError(f"no dataset at {root} (missing manifest.json); run `ledlab gen-data` first")
    try:
        manifest = json.loads(manifest_path.read_text())
        envs = load_environments(root / "envs")
        splits = {s: read_episodes(root / f"{s}.jsonl") for s in SPLITS}
        vocab = Vocabulary.load(root / "vocab.txt")
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"dataset at {root} is unreadable: {exc}") from None
    for s, eps in splits.items():
        if len(eps) != manifest["counts"][s]:
            raise DataError(f"{s}.jsonl holds {len(eps)} episodes but the manifest says {manifest['counts'][s]}")
        missing = {ep.env_id for ep in eps} - set(envs)
        if missing:
            raise DataError(f"{s} episodes refer to missing environments {sorted(missing)[:3]}")
    return Dataset(root, envs, splits, vocab, manifest)


# -- training --------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, data: Dataset, out: Path, variant: str = "full",
              epochs: int | None = None, log=print) -> dict:
    from .benchmark import variant_configs
    from .model import LingUNet
    from .train import train_loop, write_metrics

    train = dict(cfg.train) if epochs is None else {**cfg.train, "max_epochs": epochs}
    mcfg, tcfg = variant_configs(variant, len(data.vocab), cfg.model, train, cfg.seed)
    model = LingUNet(mcfg, seed=cfg.seed)
    eval_sets = {s: data.splits[s] for s in tcfg.eval_splits}
    lineage = {"config_hash": cfg.digest(), "variant": variant, "dataset": _sha256(data.root / "manifest.json")}

    def progress(rows):
        log("  ".join(f"{r['split']} loss {r['loss']:.3f}" + ("" if r["acc3"] != r["acc3"] else
                      f" acc3 {r['acc3']:.3f}") for r in rows) + f"  (epoch {rows[0]['epoch']})")

    result = train_loop(data.splits["train"], data.envs, data.vocab, model, tcfg, eval_sets,
                        checkpoint_dir=out / "checkpoints", log=progress, lineage=lineage)
    write_metrics(out / "metrics.csv", result.rows)
    best = result.best_epoch if tcfg.max_epochs > 0 else 0
    shutil.copyfile(out / "checkpoints" / f"epoch{best:04d}.ckpt", out / "best.ckpt")
    manifest = _write_manifest(out, cfg, {"kind": "run", "variant": variant, "best_epoch": best,
                                          "epochs": tcfg.max_epochs, "dataset": lineage["dataset"]})
    log(f"best epoch {best}; checkpoint copied to {out / 'best.ckpt'}")
    return manifest


# -- evaluation ------------------------------------------------------------

def _predictor(data: Dataset, checkpoint, baseline, seed: int):
    from .evaluation import ModelPredictor, make_baseline
    from .model import load_checkpoint

    if (checkpoint is None) == (baseline is None):
        raise ConfigError("pass exactly one of --checkpoint or --baseline")
    if baseline is not None:
        try:
            return make_baseline(baseline, seed, data.splits["train"], data.envs), None
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
    path = Path(checkpoint)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    model, _ = load_checkpoint(path)
    if model.config.vocab_size != len(data.vocab):
        raise DataError(f"{path} expects a vocabulary of {model.config.vocab_size} but the dataset has "
                        f"{len(data.vocab)}")
    return ModelPredictor(model, data.vocab), model


def cmd_evaluate(cfg: ExperimentConfig, data: Dataset, out: Path, checkpoint=None, baseline=None,
                 log=print) -> dict:
    from .evaluation import evaluate, format_table, heatmap_svg, write_report_bundle
    from .inputs import floor_raster

    predictor, model = _predictor(data, checkpoint, baseline, cfg.seed)
    name = baseline or "model"
    records = {s: evaluate(predictor, data.splits[s], data.envs) for s in cfg.eval["splits"]}
    rows = write_report_bundle(out, name, records, svg=cfg.eval["svg"])
    if model is not None and cfg.eval["heatmaps"] > 0:
        for s in cfg.eval["splits"]:
            for ep in sorted(data.splits[s], key=lambda e: e.episode_id)[:cfg.eval["heatmaps"]]:
                env = data.envs[ep.env_id]
                grid = predictor.grid(ep.without_answer(), env)
                svg = heatmap_svg(floor_raster(env, ep.floor), grid.probs, ep.xy, env.meters_per_pixel)
                (out / f"heatmap_{ep.episode_id}.svg").write_text(svg)
    source = {"baseline": baseline} if baseline else {"checkpoint": _sha256(Path(checkpoint))}
    manifest = _write_manifest(out, cfg, {"kind": "evaluation", **source,
                                          "dataset": _sha256(data.root / "manifest.json")})
    log(format_table(rows, cfg.eval["splits"]), end="")
    return manifest


def cmd_ablate(cfg: ExperimentConfig, data: Dataset, out: Path, checkpoint, ablations=None,
               log=print) -> dict:
    from .evaluation import format_table, parse_ablations, run_ablations, write_reports_csv
    from .evaluation.ablations import ROW_LABELS

    if checkpoint is None:
        raise ConfigError("ablate needs the full model's --checkpoint")
    if not Path(checkpoint).is_file():
        raise DataError(f"checkpoint not found: {checkpoint}")
    try:
        rows = parse_ablations(ablations if ablations is not None else _ablation_list(cfg.eval["ablations"]))
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    splits = {s: data.splits[s] for s in cfg.eval["splits"]}
    result = run_ablations(Path(checkpoint), data.vocab, splits, data.envs,
                           cfg.eval["variant_checkpoints"], rows, seed=cfg.seed)
    table_rows = [(r.name, r.reports) for r in result]
    write_reports_csv(out / "ablations.csv", table_rows)
    table = format_table(table_rows, cfg.eval["splits"], ROW_LABELS)
    (out / "table.txt").write_text(table)
    absent = {r.name: r.missing for r in result if not r.present}
    manifest = _write_manifest(out, cfg, {"kind": "ablation", "rows": list(rows), "absent": absent,
                                          "checkpoint": _sha256(Path(checkpoint))})
    log(table, end="")
    for name, why in absent.items():
        log(f"absent row {name}: {why}")
    return manifest


def _ablation_list(value) -> str:
    return ",".join(value) if isinstance(value, list) else value


# -- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ledlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="experiment config (JSON with worldgen/model/train/eval/paths/seed)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--force", action="store_true", help="replace a non-empty output directory")
        if data:
            p.add_argument("--data", help="dataset directory (default: paths.data)")

    common(sub.add_parser("gen-data", help="generate environments, episodes and vocabulary"), data=False)
    p = sub.add_parser("train", help="train a model and keep the best checkpoint")
    common(p)
    p.add_argument("--epochs", type=int, help="overrides train.max_epochs")
    p.add_argument("--variant", choices=VARIANTS, default="full",
                   help="train an ablation variant instead of the full model")
    p = sub.add_parser("evaluate", help="score a checkpoint or a baseline")
    common(p)
    p.add_argument("--checkpoint", help="model checkpoint (default: paths.checkpoint)")
    p.add_argument("--baseline", help="random, center, random_node or heuristic")
    p = sub.add_parser("ablate", help="ablation table for a trained model")
    common(p)
    p.add_argument("--checkpoint", help="full model checkpoint (default: paths.checkpoint)")
    p.add_argument("--ablations", help="comma separated rows (default: eval.ablations)")
    return parser


def _print(*args, **kw):
    print(*args, **kw, flush=True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = os.environ.get("LED_LAB_THREADS")
        if threads is not None and not (threads.isdigit() and int(threads) > 0):
            raise ConfigError("LED_LAB_THREADS must be a positive integer")
        cfg = ExperimentConfig.load(args.config, args.seed)
        if args.command == "gen-data":
            cmd_gen_data(cfg, _prepare_out(args.out, args.force), _print)
            return EXIT_OK
        data = load_dataset(args.data or cfg.paths.get("data"))
        out = _prepare_out(args.out, args.force)
        if args.command == "train":
            cmd_train(cfg, data, out, args.variant, args.epochs, _print)
        elif args.command == "evaluate":
            ckpt = args.checkpoint or (None if args.baseline else cfg.paths.get("checkpoint"))
            cmd_evaluate(cfg, data, out, ckpt, args.baseline, _print)
        else:
            cmd_ablate(cfg, data, out, args.checkpoint or cfg.paths.get("checkpoint"), args.ablations, _print)
    except ConfigError as exc:
        print(f"ledlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GenerationError as exc:
        print(f"ledlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"ledlab: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"ledlab: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
