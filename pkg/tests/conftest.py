import pytest

from ledlab.inputs import build_vocab
from ledlab.model import LingUNet, ModelConfig
from ledlab.worldgen.dataset import DatasetConfig, generate_dataset

SMALL_MODEL = dict(embed_dim=8, lstm_hidden=6, map_channels=8, layer_channels=(8, 8, 8),
                   deconv_channels=(8, 8, 8), encoder_channels=(4, 8), mlp_hidden=8)


@pytest.fixture(scope="session")
def tiny_data():
    envs, eps = generate_dataset(DatasetConfig(num_envs=4, split_ratios=(2, 1, 1), train_per_env=3,
                                               eval_per_env=2), seed=11)
    envs = {e.env_id: e for e in envs}
    splits = {}
    for ep in eps:
        splits.setdefault(ep.split, []).append(ep)
    vocab = build_vocab(splits["train"])
    return envs, splits, vocab


def small_model(vocab, seed=0, **kw):
    return LingUNet(ModelConfig(vocab_size=len(vocab), **{**SMALL_MODEL, **kw}), seed=seed)
