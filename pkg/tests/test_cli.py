import json
import shutil

import pytest

from conftest import SMALL_MODEL
from ledlab.cli import main
from ledlab.worldgen.dataset import expected_split_envs

CONFIG = {
    "worldgen": {"num_envs": 6, "split_ratios": [4, 1, 1], "train_per_env": 3, "eval_per_env": 3},
    "model": {k: list(v) if isinstance(v, tuple) else v for k, v in SMALL_MODEL.items()},
    "train": {"max_epochs": 2},
    "eval": {"splits": ["val_seen", "val_unseen"]},
    "seed": 7,
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(CONFIG))
    assert main(["gen-data", "--config", str(cfg), "--out", str(root / "data")]) == 0
    assert main(["train", "--config", str(cfg), "--data", str(root / "data"), "--out", str(root / "run")]) == 0
    return root, cfg


def _read(path):
    return path.read_bytes()


def test_gen_data_manifest_matches_files(workspace):
    root, _ = workspace
    manifest = json.loads((root / "data" / "manifest.json").read_text())
    for split, n in manifest["counts"].items():
        assert len((root / "data" / f"{split}.jsonl").read_text().splitlines()) == n
    expected = expected_split_envs(6, (4, 1, 1))
    got = [len(manifest["split_envs"][s]) for s in ("train", "val_unseen", "test")]
    assert all(abs(a - b) <= 1 for a, b in zip(got, expected))
    assert manifest["seed"] == 7
    assert json.loads((root / "data" / "config.json").read_text())["worldgen"]["num_envs"] == 6


def test_gen_data_is_deterministic_and_refuses_overwrite(workspace, tmp_path):
    root, cfg = workspace
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "again")]) == 0
    assert _read(tmp_path / "again" / "manifest.json") == _read(root / "data" / "manifest.json")
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "again")]) == 2
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "again"), "--force",
                 "--seed", "8"]) == 0
    assert json.loads((tmp_path / "again" / "manifest.json").read_text())["seed"] == 8


def test_train_outputs_and_determinism(workspace, tmp_path):
    root, cfg = workspace
    run = root / "run"
    assert (run / "best.ckpt").is_file() and (run / "checkpoints" / "epoch0002.ckpt").is_file()
    assert main(["train", "--config", str(cfg), "--data", str(root / "data"), "--out", str(tmp_path / "r")]) == 0
    assert _read(tmp_path / "r" / "metrics.csv") == _read(run / "metrics.csv")
    assert _read(tmp_path / "r" / "best.ckpt") == _read(run / "best.ckpt")


def test_zero_epochs_writes_initial_checkpoint_only(workspace, tmp_path):
    root, cfg = workspace
    out = tmp_path / "r0"
    assert main(["train", "--config", str(cfg), "--data", str(root / "data"), "--out", str(out),
                 "--epochs", "0"]) == 0
    assert (out / "metrics.csv").read_text() == "epoch,split,le,acc3,acc5,loss\n"
    assert sorted(p.name for p in (out / "checkpoints").iterdir()) == ["epoch0000.ckpt"]
    assert (out / "best.ckpt").is_file()


def test_evaluate_baseline_is_byte_identical(workspace, tmp_path):
    root, cfg = workspace
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["evaluate", "--config", str(cfg), "--data", str(root / "data"),
                     "--baseline", "center", "--out", str(out)]) == 0
    names = sorted(p.name for p in outs[0].iterdir())
    assert "records_val_unseen.jsonl" in names and "cdf_val_unseen.csv" in names
    for name in names:
        assert _read(outs[0] / name) == _read(outs[1] / name)
    header = (outs[0] / "table.txt").read_text().splitlines()[1]
    assert [c.split() for c in header.split("|")[1:]] == [["LE", "Acc@3m", "Acc@5m"]] * 2


def test_evaluate_errors(workspace, tmp_path, capsys):
    root, cfg = workspace
    assert main(["evaluate", "--config", str(cfg), "--data", str(root / "data"), "--baseline", "oracle",
                 "--out", str(tmp_path / "x")]) == 2
    assert "random, center, random_node, heuristic" in capsys.readouterr().err
    assert main(["evaluate", "--config", str(cfg), "--data", str(tmp_path / "nowhere"), "--baseline",
                 "center", "--out", str(tmp_path / "y")]) == 3
    assert main(["evaluate", "--config", str(cfg), "--data", str(root / "data"), "--checkpoint",
                 str(tmp_path / "none.ckpt"), "--out", str(tmp_path / "z")]) == 3


def test_ablate_rows_and_consistency(workspace, tmp_path):
    root, cfg = workspace
    data, ckpt = str(root / "data"), str(root / "run" / "best.ckpt")
    assert main(["evaluate", "--config", str(cfg), "--data", data, "--checkpoint", ckpt,
                 "--out", str(tmp_path / "ev")]) == 0
    assert main(["ablate", "--config", str(cfg), "--data", data, "--checkpoint", ckpt,
                 "--ablations", "full,no_dialog,first_half", "--out", str(tmp_path / "ab")]) == 0
    rows = (tmp_path / "ab" / "ablations.csv").read_text().splitlines()[1:]
    assert sorted({r.split(",")[0] for r in rows}) == ["first_half", "full", "no_dialog"]
    full = [r.split(",", 1)[1] for r in rows if r.startswith("full,")]
    evaluated = [r.split(",", 1)[1] for r in (tmp_path / "ev" / "reports.csv").read_text().splitlines()[1:]]
    assert full == evaluated
    manifest = json.loads((tmp_path / "ab" / "manifest.json").read_text())
    assert "no_dialog" in manifest["absent"]


def test_no_dialog_row_ignores_the_dialog_corpus(workspace, tmp_path):
    root, cfg = workspace
    assert main(["train", "--config", str(cfg), "--data", str(root / "data"), "--out", str(tmp_path / "nd"),
                 "--variant", "no_dialog", "--epochs", "1"]) == 0
    other = tmp_path / "other"
    shutil.copytree(root / "data", other)
    for split in ("val_seen", "val_unseen"):
        path = other / f"{split}.jsonl"
        lines = []
        for line in path.read_text().splitlines():
            ep = json.loads(line)
            for m in ep["dialog"]:
                m["text"] = "the red lamp is next to the blue chair"
            lines.append(json.dumps(ep, sort_keys=True))
        path.write_text("\n".join(lines) + "\n")
    cfg_nd = json.loads(cfg.read_text())
    cfg_nd["eval"]["variant_checkpoints"] = {"no_dialog": str(tmp_path / "nd" / "best.ckpt")}
    cpath = tmp_path / "nd.json"
    cpath.write_text(json.dumps(cfg_nd))
    tables = []
    for i, data in enumerate((root / "data", other)):
        out = tmp_path / f"ab{i}"
        assert main(["ablate", "--config", str(cpath), "--data", str(data), "--checkpoint",
                     str(root / "run" / "best.ckpt"), "--ablations", "no_dialog", "--out", str(out)]) == 0
        tables.append((out / "ablations.csv").read_text())
    assert tables[0] == tables[1]


@pytest.mark.parametrize("patch", [{"bogus": {}}, {"train": {"sigma_meters": -1}}, {"model": {"depth": 3}},
                                   {"train": {"seed": 3}}, {"eval": {"splits": ["dev"]}}])
def test_bad_config_exits_2(workspace, tmp_path, patch):
    root, _ = workspace
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({**CONFIG, **patch}))
    assert main(["train", "--config", str(cfg), "--data", str(root / "data"), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exits_4(workspace, tmp_path):
    root, _ = workspace
    cfg = tmp_path / "hot.json"
    cfg.write_text(json.dumps({**CONFIG, "train": {"max_epochs": 3, "lr": 1e300}}))
    assert main(["train", "--config", str(cfg), "--data", str(root / "data"), "--out", str(tmp_path / "o")]) == 4


def test_thread_cap_must_be_positive(workspace, tmp_path, monkeypatch):
    root, cfg = workspace
    monkeypatch.setenv("LED_LAB_THREADS", "zero")
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 2
