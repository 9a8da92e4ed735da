"""LingUNet-Skip: dialog encoder, map encoder and language-conditioned encoder-decoder.

Shapes for a 128x128 floor with the default config::

    raster [1,3,128,128] --map encoder (x8)--> F0 [1,C,16,16]
    F1 [1,C,8,8]   F2 [1,C,4,4]   F3 [1,C,2,2]        (stride-2 convs)
    G_l = K_l * F_l                                   (1x1, K_l from dialog slice l)
    H3 = deconv(G3 + F3)                 -> [1,D,4,4]
    H2 = deconv([H3; G2 + F2])           -> [1,D,8,8]
    H1 = deconv([H2; G1 + F1])           -> [1,D,16,16]
    logits = mlp(H1) -> softmax over the 16x16 cells
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DataError
from .text import TokenSeq

CHECKPOINT_MAGIC = b"LEDLABCK"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    vocab_size: int = 64
    embed_dim: int = 32
    lstm_hidden: int = 48
    map_channels: int = 32
    num_layers: int = 3
    layer_channels: tuple[int, ...] = (32, 32, 32)
    deconv_channels: tuple[int, ...] = (32, 32, 32)
    encoder_channels: tuple[int, ...] = (16, 32)
    conv_kernel: int = 3
    deconv_kernel: int = 4
    mlp_hidden: int = 32
    downsample_factor: int = 8
    dropout_p: float = 0.5
    use_dialog: bool = True
    use_vision: bool = True
    residual: bool = True

    def validate(self) -> None:
        if (2 * self.lstm_hidden) % self.num_layers:
            raise ConfigError("2 * lstm_hidden must be divisible by num_layers")
        if self.downsample_factor != 8:
            raise ConfigError("the map encoder implements a x8 downsample only")
        if len(self.layer_channels) != self.num_layers or len(self.deconv_channels) != self.num_layers:
            raise ConfigError("layer_channels / deconv_channels need one entry per layer")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must lie in [0, 1)")
        if self.deconv_kernel != 4:
            raise ConfigError("deconv_kernel must be 4 so each decoder stage exactly doubles resolution")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class PredictionGrid:
    floor_index: int
    probs: np.ndarray  # [h, w], sums to 1
    meters_per_cell: float

    @property
    def argmax_cell(self) -> tuple[int, int]:
        # np.argmax returns the first maximum in row-major order
        r, c = np.unravel_index(int(np.argmax(self.probs)), self.probs.shape)
        return int(r), int(c)

    @property
    def position(self) -> tuple[float, float]:
        r, c = self.argmax_cell
        return cell_center(r, c, self.meters_per_cell)


def cell_center(row: int, col: int, meters_per_cell: float) -> tuple[float, float]:
    return (col + 0.5) * meters_per_cell, (row + 0.5) * meters_per_cell


@dataclass
class Activations:
    F: list = field(default_factory=list)
    K: list = field(default_factory=list)
    G: list = field(default_factory=list)
    H: dict = field(default_factory=dict)
    logits: Tensor | None = None
    log_probs: Tensor | None = None


def _he(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class LingUNet:
    """Parameters plus the forward pass. ``params`` maps names to leaf tensors."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.seed = seed
        self.training = False
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        c = config
        self._add("embed", rng.standard_normal((c.vocab_size, c.embed_dim)) * 0.3)
        bound = 1.0 / np.sqrt(c.lstm_hidden)
        for d in ("fwd", "bwd"):
            self._add(f"lstm_{d}_w_ih", rng.uniform(-bound, bound, (4 * c.lstm_hidden, c.embed_dim)))
            self._add(f"lstm_{d}_w_hh", rng.uniform(-bound, bound, (4 * c.lstm_hidden, c.lstm_hidden)))
            b = np.zeros(4 * c.lstm_hidden)
            b[c.lstm_hidden:2 * c.lstm_hidden] = 1.0  # forget-gate bias
            self._add(f"lstm_{d}_b", b)
        chans = [3, *c.encoder_channels, c.map_channels, c.map_channels]
        for i in range(4):
            cin, cout = chans[i], chans[i + 1]
            self._add(f"enc{i}_w", _he(rng, (cout, cin, 3, 3), cin * 9))
            self._add(f"enc{i}_b", np.zeros(cout))
        slice_len = 2 * c.lstm_hidden // c.num_layers
        prev = c.map_channels
        for l in range(1, c.num_layers + 1):
            cl = c.layer_channels[l - 1]
            k = c.conv_kernel
            self._add(f"conv{l}_w", _he(rng, (cl, prev, k, k), prev * k * k))
            self._add(f"conv{l}_b", np.zeros(cl))
            self._add(f"kern{l}_w", rng.standard_normal((cl * cl, slice_len)) / np.sqrt(slice_len * cl))
            self._add(f"kern{l}_b", np.zeros(cl * cl))
            prev = cl
        for l in range(c.num_layers, 0, -1):
            cin = c.layer_channels[l - 1] + (c.deconv_channels[l] if l < c.num_layers else 0)
            cout = c.deconv_channels[l - 1]
            k = c.deconv_kernel
            self._add(f"deconv{l}_w", _he(rng, (cin, cout, k, k), cin * k * k / 4))
            self._add(f"deconv{l}_b", np.zeros(cout))
        self._add("mlp1_w", _he(rng, (c.mlp_hidden, c.deconv_channels[0]), c.deconv_channels[0]))
        self._add("mlp1_b", np.zeros(c.mlp_hidden))
        self._add("mlp2_w", rng.standard_normal((1, c.mlp_hidden)) * 0.1)
        self._add("mlp2_b", np.zeros(1))

    def _add(self, name, values):
        self.params[name] = Tensor(values, requires_grad=True, name=name)

    def train(self, mode: bool = True) -> "LingUNet":
        self.training = mode
        return self

    def eval(self) -> "LingUNet":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- dialog ----------------------------------------------------------------

    def encode_dialog_vec(self, seq: TokenSeq | list[int], rng=None) -> Tensor:
        ids = seq.ids if isinstance(seq, TokenSeq) else list(seq)
        if not ids:
            raise ValueError("cannot encode an empty token sequence")
        p = self.params
        emb = ad.embedding_lookup(p["embed"], ids)
        fw = (p["lstm_fwd_w_ih"], p["lstm_fwd_w_hh"], p["lstm_fwd_b"])
        bw = (p["lstm_bwd_w_ih"], p["lstm_bwd_w_hh"], p["lstm_bwd_b"])
        _, summary = ad.bilstm_encode(emb, fw, bw)
        return ad.dropout(summary, self.config.dropout_p, self.training, rng)

    def predict_kernels(self, dialog_vec: Tensor) -> list[Tensor]:
        c = self.config
        n = dialog_vec.shape[0]
        if n % c.num_layers:
            raise ConfigError(f"dialog vector of length {n} cannot be split into {c.num_layers} slices")
        step = n // c.num_layers
        kernels = []
        for l in range(1, c.num_layers + 1):
            part = ad.index(dialog_vec, slice((l - 1) * step, l * step))
            k = ad.linear(part, self.params[f"kern{l}_w"], self.params[f"kern{l}_b"])
            cl = c.layer_channels[l - 1]
            kernels.append(ad.reshape(k, (1, cl, cl)))
        return kernels

    # -- map ---------------------------------------------------------------------

    def encode_map(self, raster) -> Tensor:
        """[B,3,H,W] intensities in [0, 1] -> [B,C,H/8,W/8]."""
        x = ad.as_tensor(raster)
        H, W = x.shape[2:]
        if H % 8 or W % 8:
            raise ValueError(f"raster dimensions {H}x{W} must be divisible by 8")
        p = self.params
        for i, stride in enumerate((2, 2, 2, 1)):
            x = ad.relu(ad.conv2d(x, p[f"enc{i}_w"], p[f"enc{i}_b"], stride=stride, pad=1))
        return x

    # -- LingUNet-Skip --------------------------------------------------------------

    def lingunet(self, F0: Tensor, dialog_vec: Tensor, rng=None, out_hw=None) -> Activations:
        c, p = self.config, self.params
        acts = Activations()
        acts.F.append(F0)
        acts.K = self.predict_kernels(dialog_vec)
        x = F0
        for l in range(1, c.num_layers + 1):
            x = ad.relu(ad.conv2d(x, p[f"conv{l}_w"], p[f"conv{l}_b"], stride=2, pad=1))
            acts.F.append(x)
            acts.G.append(ad.dynamic_conv1x1(x, acts.K[l - 1]))
        h = None
        for l in range(c.num_layers, 0, -1):
            skip = ad.add(acts.G[l - 1], acts.F[l]) if c.residual else acts.G[l - 1]
            inp = skip if h is None else ad.concat([h, skip], axis=1)
            h = ad.deconv2d(inp, p[f"deconv{l}_w"], p[f"deconv{l}_b"], stride=2, pad=1)
            if l > 1:
                h = ad.relu(h)
            acts.H[l] = h
        # per-cell MLP head
        B, D, hh, ww = h.shape
        cells = ad.reshape(ad.transpose(h, (0, 2, 3, 1)), (B * hh * ww, D))
        z = ad.relu(ad.linear(cells, p["mlp1_w"], p["mlp1_b"]))
        z = ad.dropout(z, c.dropout_p, self.training, rng)
        logits = ad.reshape(ad.linear(z, p["mlp2_w"], p["mlp2_b"]), (hh, ww))
        if out_hw is not None and out_hw != (hh, ww):
            logits = ad.index(logits, (slice(0, out_hw[0]), slice(0, out_hw[1])))
        acts.logits = logits
        acts.log_probs = ad.log_softmax_flat(logits)
        return acts

    def forward(self, raster, seq, rng=None) -> Activations:
        """Full pass for one example. ``raster``: [3,H,W] or [1,3,H,W] float in [0, 1]."""
        r = np.asarray(raster, dtype=np.float64)
        if r.ndim == 3:
            r = r[None]
        if r.shape[2] % 8 or r.shape[3] % 8:
            raise ValueError(f"raster dimensions {r.shape[2]}x{r.shape[3]} must be divisible by 8")
        out_hw = (r.shape[2] // 8, r.shape[3] // 8)
        # the U-Net needs F0 divisible by 2**num_layers; pad with zeros and crop the logits back
        unit = 8 * 2 ** self.config.num_layers
        ph, pw = -r.shape[2] % unit, -r.shape[3] % unit
        if ph or pw:
            r = np.pad(r, ((0, 0), (0, 0), (0, ph), (0, pw)))
        if self.config.use_vision:
            F0 = self.encode_map(r)
        else:
            h, w = r.shape[2] // 8, r.shape[3] // 8
            F0 = Tensor(np.zeros((1, self.config.map_channels, h, w)))
        if self.config.use_dialog:
            vec = self.encode_dialog_vec(seq, rng)
        else:
            vec = Tensor(np.zeros(2 * self.config.lstm_hidden))
        return self.lingunet(F0, vec, rng, out_hw)

    def distribution(self, raster, seq) -> np.ndarray:
        was = self.training
        self.training = False
        try:
            return np.exp(self.forward(raster, seq).log_probs.values)
        finally:
            self.training = was

    # -- persistence --------------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise DataError(f"state is missing parameters: {sorted(missing)}")
        for k, v in state.items():
            if k not in self.params or self.params[k].shape != v.shape:
                raise DataError(f"parameter {k} does not match the model")
            self.params[k].values[...] = v


def predict(model: LingUNet, raster, seq, floor_index: int, meters_per_pixel: float) -> PredictionGrid:
    probs = model.distribution(raster, seq)
    return PredictionGrid(floor_index, probs, meters_per_pixel * model.config.downsample_factor)


def load_embeddings(model: LingUNet, vocab, path) -> int:
    """Copy vectors from a ``word v1 v2 ...`` text file into the embedding table.

    Returns the number of vocabulary entries that were found.
    """
    table = model.params["embed"].values
    found = 0
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if len(parts) != table.shape[1] + 1 or parts[0] not in vocab:
            continue
        table[vocab.stoi[parts[0]]] = [float(v) for v in parts[1:]]
        found += 1
    return found


# -- checkpoint format ------------------------------------------------------------------
# magic | u32 version | u32 len + JSON header (config, seed lineage) | u32 count |
# per tensor: u16 name len, name, u8 ndim, u32 dims..., little-endian float64 data

def save_checkpoint(model: LingUNet, path, lineage: dict | None = None) -> None:
    header = json.dumps({"config": model.config.to_dict(), "seed": model.seed, "lineage": lineage or {}},
                        sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
    buf.write(header)
    buf.write(struct.pack("<I", len(model.params)))
    for name in sorted(model.params):
        arr = model.params[name].values
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.astype("<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> tuple[LingUNet, dict]:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise DataError(f"{path} is not a ledlab checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    version, hlen = struct.unpack_from("<II", data, pos)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    pos += 8
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        state[name] = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    model = LingUNet(ModelConfig.from_dict(header["config"]), seed=header["seed"])
    model.load_state_dict(state)
    return model, header.get("lineage", {})
