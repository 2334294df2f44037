"""Dense autoencoder with an attention-pooled bottleneck.

Encoder: flatten -> dense+relu layers -> last activation cut into ``L``
tokens of width ``D``.  Each token gets an additive score
``e_i = v . tanh(W_a t_i + b_a)``; ``alpha = softmax(e)`` and the latent is
``z = sum_i alpha_i t_i`` (a global average of the tokens rescaled by
``L * alpha_i``).  Decoder: dense+relu layers, then a sigmoid output layer
reshaped to the input shape.  Loss is the mean squared error over every
element of the batch.

Parameters live in a plain ``dict[str, ndarray]``.  Everything is computed
in the dtype of the parameters, so the gradient check passes float64 copies.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelFormatError
from .numerics import AdamState, Rng, adam_update_, glorot_init, softmax

log = logging.getLogger(__name__)

MAGIC = b"KFAE"
FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    input_shape: tuple = (3, 64, 64)
    encoder_widths: list = field(default_factory=lambda: [2048, 1024])
    token_count: int = 16
    token_dim: int = 64
    decoder_widths: list = field(default_factory=lambda: [1024, 2048])

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self.encoder_widths = [int(w) for w in self.encoder_widths]
        self.decoder_widths = [int(w) for w in self.decoder_widths]
        widths = list(self.input_shape) + self.encoder_widths + self.decoder_widths
        if len(self.input_shape) != 3 or min(widths) < 1 or not self.encoder_widths:
            raise ValueError(f"invalid model config {self}")
        if self.token_count < 1 or self.token_dim < 1:
            raise ValueError("token_count and token_dim must be >= 1")
        if self.token_count * self.token_dim != self.encoder_widths[-1]:
            raise ValueError(
                f"token_count*token_dim = {self.token_count * self.token_dim} "
                f"must equal last encoder width {self.encoder_widths[-1]}")

    @property
    def latent_dim(self) -> int:
        return self.token_dim

    @property
    def input_size(self) -> int:
        return math.prod(self.input_shape)

    def to_json(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return d


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    validation_stride: int = 10
    early_stop_patience: int = 5
    lr: float = 1e-3

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.validation_stride == 1 or self.validation_stride < 0:
            raise ValueError("validation_stride must be 0 or >= 2")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    """Ordered name -> shape map; this order is also the file order."""
    shapes = {}
    fan_in = cfg.input_size
    for i, w in enumerate(cfg.encoder_widths):
        shapes[f"enc{i}.W"] = (fan_in, w)
        shapes[f"enc{i}.b"] = (w,)
        fan_in = w
    d = cfg.token_dim
    shapes["att.W"] = (d, d)
    shapes["att.b"] = (d,)
    shapes["att.v"] = (d,)
    fan_in = d
    for i, w in enumerate(cfg.decoder_widths):
        shapes[f"dec{i}.W"] = (fan_in, w)
        shapes[f"dec{i}.b"] = (w,)
        fan_in = w
    shapes["out.W"] = (fan_in, cfg.input_size)
    shapes["out.b"] = (cfg.input_size,)
    return shapes


def init_params(cfg: ModelConfig, rng: Rng) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, drawn in ``param_shapes`` order."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name == "att.v":
            params[name] = glorot_init(shape[0], 1, rng).reshape(shape)
        elif name.endswith(".W"):
            params[name] = glorot_init(*shape, rng)
        else:
            params[name] = np.zeros(shape, dtype=np.float32)
    return params


def zero_params(cfg: ModelConfig, dtype=np.float32) -> dict[str, np.ndarray]:
    return {k: np.zeros(s, dtype=dtype) for k, s in param_shapes(cfg).items()}


def _relu(a):
    return np.maximum(a, 0)


def _sigmoid(a):
    # split form avoids overflow in exp for large |a|
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _as_batch(cfg: ModelConfig, frames, dtype) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        x = frames
    else:
        x = np.stack([getattr(f, "data", f) for f in frames])
    if x.shape[1:] == cfg.input_shape:
        x = x.reshape(len(x), -1)
    if x.ndim != 2 or x.shape[1] != cfg.input_size or len(x) == 0:
        raise ValueError(f"batch shape {x.shape} does not match input {cfg.input_shape}")
    return x.astype(dtype, copy=False)


def _encode_batch(params, cfg: ModelConfig, x, cache=None):
    act = x
    n_enc = len(cfg.encoder_widths)
    for i in range(n_enc):
        act = _relu(act @ params[f"enc{i}.W"] + params[f"enc{i}.b"])
        if cache is not None:
            cache[f"enc{i}"] = act
    tokens = act.reshape(len(x), cfg.token_count, cfg.token_dim)
    u = np.tanh(tokens @ params["att.W"].T + params["att.b"])
    scores = u @ params["att.v"]
    alpha = softmax(scores, axis=1)
    z = np.einsum("bl,bld->bd", alpha, tokens)
    if cache is not None:
        cache.update(tokens=tokens, u=u, alpha=alpha, z=z)
    return z, alpha


def _decode_batch(params, cfg: ModelConfig, z, cache=None):
    act = z
    for i in range(len(cfg.decoder_widths)):
        act = _relu(act @ params[f"dec{i}.W"] + params[f"dec{i}.b"])
        if cache is not None:
            cache[f"dec{i}"] = act
    return _sigmoid(act @ params["out.W"] + params["out.b"])


def encode(params, cfg: ModelConfig, frame) -> tuple[np.ndarray, np.ndarray]:
    """Latent vector and attention weights for one frame."""
    dtype = params["att.W"].dtype
    z, alpha = _encode_batch(params, cfg, _as_batch(cfg, [frame], dtype))
    return z[0], alpha[0]


def encode_batch(params, cfg: ModelConfig, frames, chunk: int = 64) -> np.ndarray:
    dtype = params["att.W"].dtype
    x = _as_batch(cfg, frames, dtype)
    return np.concatenate([_encode_batch(params, cfg, x[i:i + chunk])[0]
                           for i in range(0, len(x), chunk)])


def forward(params, cfg: ModelConfig, frames):
    """Returns ``(reconstructions shaped like the input, latents, mse)``."""
    dtype = params["att.W"].dtype
    x = _as_batch(cfg, frames, dtype)
    z, _ = _encode_batch(params, cfg, x)
    y = _decode_batch(params, cfg, z)
    loss = float(np.mean((np.asarray(x, np.float64) - y) ** 2))
    return y.reshape((len(x),) + cfg.input_shape), z, loss


def loss_and_grads(params, cfg: ModelConfig, frames):
    """MSE loss and its gradient with respect to every parameter."""
    dtype = params["att.W"].dtype
    x = _as_batch(cfg, frames, dtype)
    n = len(x)
    cache = {}
    z, alpha = _encode_batch(params, cfg, x, cache)
    y = _decode_batch(params, cfg, z, cache)
    diff = y - x
    loss = float(np.mean(np.asarray(diff, np.float64) ** 2))
    grads = {}

    # decoder
    delta = (2.0 / diff.size) * diff * y * (1 - y)
    n_dec = len(cfg.decoder_widths)
    prev = cache[f"dec{n_dec - 1}"] if n_dec else z
    grads["out.W"] = prev.T @ delta
    grads["out.b"] = delta.sum(axis=0)
    upstream = delta @ params["out.W"].T
    for i in reversed(range(n_dec)):
        upstream = upstream * (cache[f"dec{i}"] > 0)
        prev = cache[f"dec{i - 1}"] if i > 0 else z
        grads[f"dec{i}.W"] = prev.T @ upstream
        grads[f"dec{i}.b"] = upstream.sum(axis=0)
        upstream = upstream @ params[f"dec{i}.W"].T
    dz = upstream

    # attention pooling
    tokens, u = cache["tokens"], cache["u"]
    d_tokens = alpha[:, :, None] * dz[:, None, :]
    d_alpha = np.einsum("bld,bd->bl", tokens, dz)
    d_scores = alpha * (d_alpha - np.sum(alpha * d_alpha, axis=1, keepdims=True))
    grads["att.v"] = np.einsum("bl,bld->d", d_scores, u)
    d_pre = d_scores[:, :, None] * params["att.v"] * (1 - u * u)
    grads["att.W"] = np.einsum("blj,blk->jk", d_pre, tokens)
    grads["att.b"] = d_pre.sum(axis=(0, 1))
    d_tokens = d_tokens + d_pre @ params["att.W"]

    # encoder
    upstream = d_tokens.reshape(n, -1)
    for i in reversed(range(len(cfg.encoder_widths))):
        upstream = upstream * (cache[f"enc{i}"] > 0)
        prev = cache[f"enc{i - 1}"] if i > 0 else x
        grads[f"enc{i}.W"] = prev.T @ upstream
        grads[f"enc{i}.b"] = upstream.sum(axis=0)
        if i > 0:
            upstream = upstream @ params[f"enc{i}.W"].T

    return loss, {k: grads[k].astype(params[k].dtype, copy=False) for k in params}


def dataset_loss(params, cfg: ModelConfig, x: np.ndarray, chunk: int = 64) -> float:
    """Mean squared error over a whole dataset, evaluated in chunks."""
    total = 0.0
    for i in range(0, len(x), chunk):
        _, _, loss = forward(params, cfg, x[i:i + chunk])
        total += loss * len(x[i:i + chunk])
    return total / len(x)


def split_validation(n: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Every ``stride``-th frame (indices stride-1, 2*stride-1, ...) is held out."""
    idx = np.arange(n)
    if stride == 0:
        return idx, idx[:0]
    held = (idx % stride) == stride - 1
    return idx[~held], idx[held]


def train(frames, mcfg: ModelConfig, tcfg: TrainConfig):
    """Fit the autoencoder with Adam; returns ``(best_params, log)``.

    The log is a dict with ``initial_train_loss``, ``initial_val_loss`` and
    one ``epochs`` entry per epoch (``train_loss`` is the mean of that
    epoch's batch losses).  Early stopping watches validation loss, or
    training loss when no frames are held out.
    """
    if len(frames) == 0:
        raise ValueError("cannot train on an empty frame list")
    x = _as_batch(mcfg, frames, np.float32)
    train_idx, val_idx = split_validation(len(x), tcfg.validation_stride)
    if len(train_idx) == 0:
        raise ValueError("no training frames left after the validation split")
    x_train, x_val = x[train_idx], x[val_idx]

    rng = Rng(tcfg.seed)
    params = init_params(mcfg, rng)
    states = {k: AdamState.zeros_like(p, lr=tcfg.lr) for k, p in params.items()}

    history = {
        "initial_train_loss": dataset_loss(params, mcfg, x_train),
        "initial_val_loss": dataset_loss(params, mcfg, x_val) if len(x_val) else None,
        "epochs": [],
    }
    best_loss = math.inf
    best = {k: p.copy() for k, p in params.items()}
    best_epoch = 0
    stale = 0
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(len(x_train))
        batch_losses = []
        for start in range(0, len(order), tcfg.batch_size):
            batch = x_train[order[start:start + tcfg.batch_size]]
            loss, grads = loss_and_grads(params, mcfg, batch)
            for name in params:
                adam_update_(params[name], grads[name], states[name])
            batch_losses.append(loss)
        train_loss = float(np.mean(batch_losses))
        val_loss = dataset_loss(params, mcfg, x_val) if len(x_val) else None
        history["epochs"].append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        log.info("epoch %d train %.6f val %s", epoch, train_loss,
                 "-" if val_loss is None else f"{val_loss:.6f}")
        watched = val_loss if val_loss is not None else train_loss
        if watched < best_loss:
            best_loss, best_epoch, stale = watched, epoch, 0
            best = {k: p.copy() for k, p in params.items()}
        else:
            stale += 1
            if stale >= tcfg.early_stop_patience:
                log.info("early stop after epoch %d", epoch)
                break
    history["best_epoch"] = best_epoch
    return best, history


def save_model(params, cfg: ModelConfig, path) -> None:
    """Write the binary model file (see README for the layout); atomic rename."""
    path = Path(path)
    blob = json.dumps(cfg.to_json(), sort_keys=True).encode()
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(blob)), blob,
              struct.pack("<I", len(params))]
    for name, arr in params.items():
        raw = name.encode()
        arr = np.ascontiguousarray(arr, dtype="<f4")
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        for c in chunks:
            fh.write(c)
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(f"truncated model file while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_model(path):
    """Read a model file; returns ``(params, config)``."""
    r = _Reader(Path(path).read_bytes())
    if r.data[:4] != MAGIC:
        raise ModelFormatError("bad magic")
    r.pos = 4
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    (blob_len,) = r.unpack("<I", "config length")
    try:
        cfg = ModelConfig(**json.loads(r.take(blob_len, "config").decode()))
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"bad config blob: {exc}") from exc
    (count,) = r.unpack("<I", "tensor count")
    params = {}
    for i in range(count):
        (name_len,) = r.unpack("<H", f"name of tensor #{i}")
        name = r.take(name_len, f"name of tensor #{i}").decode()
        (rank,) = r.unpack("<B", f"tensor '{name}'")
        dims = r.unpack(f"<{rank}I", f"tensor '{name}'")
        nbytes = 4 * math.prod(dims)
        if r.pos + nbytes > len(r.data):
            raise ModelFormatError(f"truncated tensor '{name}'")
        params[name] = np.frombuffer(r.take(nbytes, name), dtype="<f4").reshape(dims).astype(np.float32)
    expected = param_shapes(cfg)
    for name, shape in expected.items():
        if name not in params:
            raise ModelFormatError(f"missing tensor '{name}'")
        if params[name].shape != shape:
            raise ModelFormatError(f"tensor '{name}' has shape {params[name].shape}, expected {shape}")
    return params, cfg
