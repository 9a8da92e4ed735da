import numpy as np
import pytest

from ledlab import autodiff as ad
from ledlab.errors import ConfigError, DataError
from ledlab.model import (LingUNet, ModelConfig, PredictionGrid, cell_center, load_checkpoint,
                          load_embeddings, save_checkpoint)
from ledlab.text import Vocabulary

TOY = dict(vocab_size=12, embed_dim=3, lstm_hidden=3, map_channels=2, layer_channels=(2, 2, 2),
           deconv_channels=(2, 2, 2), encoder_channels=(2, 2), mlp_hidden=3, dropout_p=0.0)


def toy_model(seed=3, **kw):
    m = LingUNet(ModelConfig(**{**TOY, **kw}), seed=seed)
    rng = np.random.default_rng(seed + 100)
    # nonzero biases keep ReLU inputs away from the kink at exactly zero
    for name, p in m.params.items():
        if name.endswith("_b"):
            p.values[...] = rng.normal(0, 0.3, p.shape)
    return m.eval()


@pytest.fixture(scope="module")
def small():
    return LingUNet(ModelConfig(vocab_size=30), seed=0).eval()


def test_default_config_is_consistent():
    ModelConfig().validate()
    with pytest.raises(ConfigError):
        ModelConfig(lstm_hidden=64).validate()  # 128 does not split into 3 slices
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"hidden": 3})


def test_zero_lstm_weights_give_zero_summary(small):
    m = LingUNet(ModelConfig(vocab_size=30), seed=0).eval()
    for name, p in m.params.items():
        if name.startswith("lstm"):
            p.values[...] = 0.0
    assert np.all(m.encode_dialog_vec([2, 5, 6, 3]).values == 0.0)


def test_dialog_encoding_deterministic_in_eval(small):
    a = small.encode_dialog_vec([2, 7, 8, 3]).values
    b = small.encode_dialog_vec([2, 7, 8, 3]).values
    assert np.array_equal(a, b) and a.shape == (96,)
    with pytest.raises(ValueError):
        small.encode_dialog_vec([])


def test_dialog_dropout_only_in_training():
    m = LingUNet(ModelConfig(vocab_size=30, dropout_p=0.5), seed=0).train()
    rng = np.random.default_rng(0)
    v = m.encode_dialog_vec([2, 7, 8, 3], rng).values
    assert np.mean(v == 0.0) > 0.2


def test_embedding_gradient_three_tokens():
    m = toy_model()
    w = np.random.default_rng(0).normal(size=6)

    def f():
        return ad.sum_all(ad.mul(m.encode_dialog_vec([4, 5, 4]), w))

    assert ad.check_gradients(f, [m.params["embed"]]) < 1e-4


def test_map_encoder_shapes(small):
    raster = np.random.default_rng(0).random((1, 3, 128, 128))
    assert small.encode_map(raster).shape == (1, 32, 16, 16)
    with pytest.raises(ValueError):
        small.encode_map(np.zeros((1, 3, 60, 64)))


def test_zero_raster_zero_features(small):
    assert np.all(small.encode_map(np.zeros((1, 3, 64, 64))).values == 0.0)


def test_map_encoder_batch_independence(small):
    rng = np.random.default_rng(1)
    a, b = rng.random((2, 3, 64, 64))
    out = small.encode_map(np.stack([a, b])).values
    swapped = small.encode_map(np.stack([b, a])).values
    assert np.allclose(out[0], swapped[1], atol=1e-12) and np.allclose(out[1], swapped[0], atol=1e-12)


def test_zero_dialog_zero_kernels(small):
    ks = small.predict_kernels(ad.Tensor(np.zeros(96)))
    assert all(np.all(k.values == 0.0) for k in ks)
    F0 = small.encode_map(np.random.default_rng(2).random((1, 3, 64, 64)))
    acts = small.lingunet(F0, ad.Tensor(np.zeros(96)))
    assert all(np.all(g.values == 0.0) for g in acts.G)


def test_kernel_slices_are_local(small):
    v1 = np.random.default_rng(3).normal(size=96)
    v2 = v1.copy()
    v2[64:] = np.random.default_rng(4).normal(size=32)
    k1 = small.predict_kernels(ad.Tensor(v1))
    k2 = small.predict_kernels(ad.Tensor(v2))
    assert np.array_equal(k1[0].values, k2[0].values) and np.array_equal(k1[1].values, k2[1].values)
    assert not np.array_equal(k1[2].values, k2[2].values)


def test_kernel_predictor_receives_gradient():
    m = toy_model()
    raster = np.random.default_rng(5).random((3, 64, 64))
    target = np.full((8, 8), 1 / 64)

    def f():
        return ad.kl_div(target, m.forward(raster, [2, 5, 6, 3]).log_probs)

    ad.backward(f())
    assert np.abs(m.params["kern2_w"].grad).max() > 0
    assert ad.check_gradients(f, [m.params["kern2_w"]]) < 1e-4


@pytest.mark.parametrize("size", [16, 64])
def test_full_model_gradcheck(size):
    m = toy_model()
    raster = np.random.default_rng(0).random((3, size, size))
    tgt = np.random.default_rng(1).random((size // 8, size // 8))
    tgt /= tgt.sum()

    def f():
        return ad.kl_div(tgt, m.forward(raster, [2, 5, 6, 3]).log_probs)

    err = ad.check_gradients(f, list(m.params.values()), max_entries=12, rng=np.random.default_rng(2))
    assert err < 1e-3


def test_distribution_sums_to_one(small):
    rng = np.random.default_rng(6)
    for _ in range(5):
        p = small.distribution(rng.random((3, 128, 96)), rng.integers(0, 30, size=12).tolist())
        assert p.shape == (16, 12)
        assert abs(p.sum() - 1.0) < 1e-5 and p.min() >= 0


def test_no_dialog_path_ignores_dialog():
    m = LingUNet(ModelConfig(vocab_size=30, use_dialog=False), seed=0).eval()
    r = np.random.default_rng(7).random((3, 64, 64))
    assert np.array_equal(m.distribution(r, [2, 4, 5, 3]), m.distribution(r, [2, 9, 9, 9, 9, 3]))


def test_no_vision_path_ignores_map():
    m = LingUNet(ModelConfig(vocab_size=30, use_vision=False), seed=0).eval()
    rng = np.random.default_rng(8)
    assert np.array_equal(m.distribution(rng.random((3, 64, 64)), [2, 4, 3]),
                          m.distribution(rng.random((3, 64, 64)), [2, 4, 3]))


def test_zero_kernels_without_residual_ignore_dialog():
    m = LingUNet(ModelConfig(vocab_size=30, residual=False), seed=0).eval()
    for l in (1, 2, 3):
        m.params[f"kern{l}_w"].values[...] = 0.0
    r = np.random.default_rng(9).random((3, 64, 64))
    assert np.array_equal(m.distribution(r, [2, 4, 5, 3]), m.distribution(r, [2, 11, 3]))


def test_residual_flag_changes_output():
    a = LingUNet(ModelConfig(vocab_size=30), seed=0).eval()
    b = LingUNet(ModelConfig(vocab_size=30, residual=False), seed=0).eval()
    r = np.random.default_rng(10).random((3, 64, 64))
    assert not np.allclose(a.distribution(r, [2, 4, 3]), b.distribution(r, [2, 4, 3]))


def test_uniform_grid_argmax_is_first_cell():
    g = PredictionGrid(0, np.full((4, 5), 0.05), 2.0)
    assert g.argmax_cell == (0, 0)
    assert g.position == (1.0, 1.0)


def test_untrained_zero_head_ties_to_origin(small):
    m = LingUNet(ModelConfig(vocab_size=30), seed=0).eval()
    m.params["mlp2_w"].values[...] = 0.0
    from ledlab.model import predict
    g = predict(m, np.random.default_rng(0).random((3, 64, 64)), [2, 3], 0, 0.25)
    assert g.argmax_cell == (0, 0)


def test_delta_grid_position():
    probs = np.zeros((6, 7))
    probs[4, 2] = 1.0
    g = PredictionGrid(1, probs, 2.0)
    assert g.position == cell_center(4, 2, 2.0) == (5.0, 9.0)


def test_argmax_matches_exhaustive_scan():
    rng = np.random.default_rng(11)
    for _ in range(50):
        probs = rng.integers(0, 4, size=(5, 6)).astype(float)
        probs /= probs.sum()
        best, best_v = None, -1.0
        for r in range(5):
            for c in range(6):
                if probs[r, c] > best_v:
                    best, best_v = (r, c), probs[r, c]
        assert PredictionGrid(0, probs, 2.0).argmax_cell == best


def test_argmax_invariant_to_logit_scaling(small):
    r = np.random.default_rng(12).random((3, 64, 64))
    before = np.argmax(small.distribution(r, [2, 5, 3]))
    m = LingUNet(ModelConfig(vocab_size=30), seed=0).eval()
    m.params["mlp2_w"].values *= 3.7
    m.params["mlp2_b"].values *= 3.7
    assert np.argmax(m.distribution(r, [2, 5, 3])) == before


def test_checkpoint_roundtrip(tmp_path, small):
    path = tmp_path / "m.ckpt"
    save_checkpoint(small, path, {"data_seed": 4})
    loaded, lineage = load_checkpoint(path)
    assert lineage == {"data_seed": 4}
    assert loaded.config == small.config
    r = np.random.default_rng(13).random((3, 64, 64))
    assert np.array_equal(loaded.distribution(r, [2, 6, 3]), small.distribution(r, [2, 6, 3]))
    save_checkpoint(loaded, tmp_path / "again.ckpt", {"data_seed": 4})
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_other_files(tmp_path):
    bad = tmp_path / "x.ckpt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(DataError):
        load_checkpoint(bad)


def test_embedding_file_loader(tmp_path):
    vocab = Vocabulary(["kitchen", "red"])
    m = LingUNet(ModelConfig(vocab_size=len(vocab), embed_dim=2, lstm_hidden=3), seed=0)
    (tmp_path / "vec.txt").write_text("kitchen 0.5 -1\nzebra 1 1\nred 1 2 3\n")
    assert load_embeddings(m, vocab, tmp_path / "vec.txt") == 1
    assert m.params["embed"].values[vocab.stoi["kitchen"]].tolist() == [0.5, -1.0]
