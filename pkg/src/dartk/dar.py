"""The channel-wise 1D convolutional denoising autoencoder.

Each EEG channel of a segment is an independent sample: a batch of ``B``
segments with ``C`` channels is fed as a ``(B * C, 1, T)`` tensor.
Architecture (Baseline)::

    conv(1->128)  ReLU  BN
    conv(128->64) ReLU  BN        encoder
    conv(64->64)  ReLU  BN
    conv(64->128) ReLU  BN        decoder
    conv(128->1)  Tanh            output

All convolutions are length preserving (padding = (kernel - 1) / 2).
"""
from __future__ import annotations

import dataclasses
import enum
import json
import logging
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import (
    CorruptFile,
    EmptySplit,
    InvalidConfig,
    NonFiniteLoss,
    ShapeMismatch,
    VersionMismatch,
)
from .preprocess import Segment, SegmentPair

logger = logging.getLogger(__name__)

WEIGHT_MAGIC = b"DARW1"


class Variant(str, enum.Enum):
    BASELINE = "Baseline"
    SMALL_KERNEL = "SmallKernel"
    HALF_CHANNELS = "HalfChannels"
    NO_TANH = "NoTanh"


@dataclass(frozen=True)
class DarConfig:
    enc_channels: tuple = (128, 64)
    dec_channels: tuple = (64, 128)
    kernel: int = 5
    padding: int = 2
    output_activation: str = "tanh"  # "tanh" | "none"
    variant: Variant = Variant.BASELINE

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 != 1:
            raise InvalidConfig(f"kernel must be odd and positive, got {self.kernel}")
        if self.padding != (self.kernel - 1) // 2:
            raise InvalidConfig(f"padding {self.padding} is not length preserving for kernel {self.kernel}")
        if self.output_activation not in ("tanh", "none"):
            raise InvalidConfig(f"output_activation must be tanh|none, got {self.output_activation!r}")
        if len(self.enc_channels) != 2 or len(self.dec_channels) != 2:
            raise InvalidConfig("need exactly two encoder and two decoder widths")
        if min(self.enc_channels + self.dec_channels) < 1:
            raise InvalidConfig("channel widths must be positive")

    @classmethod
    def for_variant(cls, variant) -> "DarConfig":
        variant = Variant(variant)
        if variant is Variant.SMALL_KERNEL:
            return cls(kernel=3, padding=1, variant=variant)
        if variant is Variant.HALF_CHANNELS:
            return cls(enc_channels=(64, 32), dec_channels=(32, 64), variant=variant)
        if variant is Variant.NO_TANH:
            return cls(output_activation="none", variant=variant)
        return cls()

    @property
    def widths(self) -> list[int]:
        return [1, *self.enc_channels, *self.dec_channels, 1]

    def to_dict(self) -> dict:
        return {"enc_channels": list(self.enc_channels), "dec_channels": list(self.dec_channels),
                "kernel": self.kernel, "padding": self.padding,
                "output_activation": self.output_activation, "variant": self.variant.value}

    @classmethod
    def from_dict(cls, d: dict) -> "DarConfig":
        return cls(tuple(d["enc_channels"]), tuple(d["dec_channels"]), int(d["kernel"]),
                   int(d["padding"]), d["output_activation"], Variant(d["variant"]))


def parameter_count(cfg: DarConfig) -> int:
    """Learnable scalars: conv weights and biases plus BN gamma/beta."""
    w = cfg.widths
    conv = sum(w[i] * w[i + 1] * cfg.kernel + w[i + 1] for i in range(len(w) - 1))
    bn = 2 * sum(w[1:-1])
    return conv + bn


@dataclass
class ConvLayer:
    weight: ad.Tensor
    bias: ad.Tensor


@dataclass
class NormLayer:
    gamma: ad.Tensor
    beta: ad.Tensor
    state: ad.BatchNormState


@dataclass
class ModelParameters:
    convs: list[ConvLayer]
    norms: list[NormLayer]

    def trainable(self) -> list[ad.Tensor]:
        out = []
        for i, c in enumerate(self.convs):
            out += [c.weight, c.bias]
            if i < len(self.norms):
                out += [self.norms[i].gamma, self.norms[i].beta]
        return out

    def count(self) -> int:
        return int(sum(p.value.size for p in self.trainable()))

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, c in enumerate(self.convs):
            out += [(f"conv{i}.weight", c.weight.value), (f"conv{i}.bias", c.bias.value)]
        for i, n in enumerate(self.norms):
            out += [(f"bn{i}.gamma", n.gamma.value), (f"bn{i}.beta", n.beta.value),
                    (f"bn{i}.running_mean", n.state.running_mean),
                    (f"bn{i}.running_var", n.state.running_var)]
        return out

    def copy(self) -> "ModelParameters":
        convs = [ConvLayer(ad.Tensor(c.weight.value.copy(), True), ad.Tensor(c.bias.value.copy(), True))
                 for c in self.convs]
        norms = [NormLayer(ad.Tensor(n.gamma.value.copy(), True), ad.Tensor(n.beta.value.copy(), True),
                           dataclasses.replace(n.state, running_mean=n.state.running_mean.copy(),
                                               running_var=n.state.running_var.copy()))
                 for n in self.norms]
        return ModelParameters(convs, norms)

    def astype(self, dtype) -> "ModelParameters":
        m = self.copy()
        for c in m.convs:
            c.weight.value = c.weight.value.astype(dtype)
            c.bias.value = c.bias.value.astype(dtype)
        for n in m.norms:
            n.gamma.value = n.gamma.value.astype(dtype)
            n.beta.value = n.beta.value.astype(dtype)
            n.state.running_mean = n.state.running_mean.astype(dtype)
            n.state.running_var = n.state.running_var.astype(dtype)
        return m


def build(cfg: DarConfig, seed: int = 42) -> ModelParameters:
    """Kaiming-uniform (fan-in) conv weights, zero biases, gamma=1, beta=0."""
    rng = np.random.default_rng(seed)
    w = cfg.widths
    convs, norms = [], []
    for i in range(len(w) - 1):
        cin, cout = w[i], w[i + 1]
        bound = np.sqrt(6.0 / (cin * cfg.kernel))
        weight = rng.uniform(-bound, bound, size=(cout, cin, cfg.kernel)).astype(np.float32)
        convs.append(ConvLayer(ad.Tensor(weight, True, name=f"conv{i}.weight"),
                               ad.Tensor(np.zeros(cout, np.float32), True, name=f"conv{i}.bias")))
        if i < len(w) - 2:
            norms.append(NormLayer(ad.Tensor(np.ones(cout, np.float32), True, name=f"bn{i}.gamma"),
                                   ad.Tensor(np.zeros(cout, np.float32), True, name=f"bn{i}.beta"),
                                   ad.BatchNormState.fresh(cout)))
    return ModelParameters(convs, norms)


def forward(params: ModelParameters, cfg: DarConfig, x: ad.Tensor, training: bool = False) -> ad.Tensor:
    if x.value.ndim != 3 or x.shape[1] != 1:
        raise ShapeMismatch(f"expected (B*C, 1, T) input, got {x.shape}")
    if params.convs[0].weight.shape[2] != cfg.kernel or len(params.convs) != len(cfg.widths) - 1:
        raise ShapeMismatch("parameters do not match configuration")
    h = x
    for conv, norm in zip(params.convs[:-1], params.norms):
        h = ad.conv1d(h, conv.weight, conv.bias, cfg.padding)
        h = ad.relu(h)
        h = ad.batchnorm1d(h, norm.gamma, norm.beta, norm.state, training)
    last = params.convs[-1]
    h = ad.conv1d(h, last.weight, last.bias, cfg.padding)
    if cfg.output_activation == "tanh":
        h = ad.tanh(h)
    return h


def predict(params: ModelParameters, cfg: DarConfig, rows: np.ndarray, batch_rows: int = 1024) -> np.ndarray:
    """Eval-mode forward over ``(N, T)`` rows, chunked; returns ``(N, T)``."""
    rows = np.asarray(rows, dtype=np.float32)
    out = np.empty_like(rows)
    for s in range(0, len(rows), batch_rows):
        chunk = rows[s:s + batch_rows]
        out[s:s + len(chunk)] = forward(params, cfg, ad.Tensor(chunk[:, None, :]), False).value[:, 0, :]
    return out


def denoise(params: ModelParameters, cfg: DarConfig, seg: Segment) -> Segment:
    if seg.data.ndim != 2:
        raise ShapeMismatch(f"segment must be (channels, T), got {seg.data.shape}")
    y = predict(params, cfg, seg.data)
    return Segment(y.astype(np.float64), seg.subject_id, seg.source_offset, seg.norm_scale)


def denoise_many(params, cfg, segments: Sequence[Segment], batch_rows: int = 1024) -> list[Segment]:
    if not segments:
        return []
    c = segments[0].data.shape[0]
    rows = np.concatenate([s.data for s in segments]).astype(np.float32)
    y = predict(params, cfg, rows, batch_rows).astype(np.float64)
    return [Segment(y[i * c:(i + 1) * c], s.subject_id, s.source_offset, s.norm_scale)
            for i, s in enumerate(segments)]


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    min_delta: float = 1e-5
    seed: int = 42
    early_stopping: bool = True

    def __post_init__(self):
        if self.lr <= 0 or self.eps <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise InvalidConfig("lr, eps, batch_size and max_epochs must be positive")
        if self.patience < 0 or self.min_delta < 0:
            raise InvalidConfig("patience and min_delta must be >= 0")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        bad = set(d) - names
        if bad:
            raise InvalidConfig(f"unknown train key(s): {sorted(bad)}")
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _rows(pairs: Sequence[SegmentPair]):
    x = np.concatenate([p.noisy.data for p in pairs]).astype(np.float32)
    y = np.concatenate([p.clean.data for p in pairs]).astype(np.float32)
    return x, y


def validation_loss(params, cfg, x: np.ndarray, y: np.ndarray, batch_rows: int = 1024) -> float:
    total = 0.0
    for s in range(0, len(x), batch_rows):
        pred = predict(params, cfg, x[s:s + batch_rows], batch_rows)
        total += float(np.abs(pred - y[s:s + batch_rows]).sum(dtype=np.float64))
    return total / x.size


def train_step(params, cfg, optimizer: ad.Adam, xb: np.ndarray, yb: np.ndarray) -> float:
    with ad.Tape() as tape:
        pred = forward(params, cfg, ad.Tensor(xb[:, None, :]), training=True)
        loss = ad.l1_loss(pred, ad.Tensor(yb[:, None, :]))
        optimizer.zero_grad()
        tape.backward(loss)
    value = float(loss.value)
    if not np.isfinite(value):
        raise NonFiniteLoss(f"training loss became {value}")
    optimizer.step()
    return value


def train(train_pairs: Sequence[SegmentPair], val_pairs: Sequence[SegmentPair],
          tcfg: TrainConfig = TrainConfig(), cfg: DarConfig = DarConfig(),
          params: ModelParameters | None = None, log_every: int = 1):
    """Minimise the L1 objective with Adam; returns (best parameters, report).

    One epoch is a seeded shuffled pass over whole segments, ``batch_size``
    segments per step. Patience counts epochs whose validation loss fails
    to improve on the best so far by more than ``min_delta``; the returned
    parameters come from the epoch with the lowest validation loss.
    """
    if not train_pairs:
        raise EmptySplit("no training pairs")
    if not val_pairs:
        raise EmptySplit("no validation pairs")
    c = train_pairs[0].noisy.data.shape[0]
    x, y = _rows(train_pairs)
    vx, vy = _rows(val_pairs)
    params = params if params is not None else build(cfg, tcfg.seed)
    opt = ad.Adam(params.trainable(), tcfg.lr, tcfg.betas, tcfg.eps)
    rng = np.random.default_rng(tcfg.seed)
    report = TrainReport()
    best_val, best_params = np.inf, params.copy()
    ref_val, wait = np.inf, 0
    t0 = time.perf_counter()
    n_seg = len(train_pairs)
    for epoch in range(tcfg.max_epochs):
        order = rng.permutation(n_seg)
        total, count = 0.0, 0
        for s in range(0, n_seg, tcfg.batch_size):
            idx = order[s:s + tcfg.batch_size]
            rows = (idx[:, None] * c + np.arange(c)[None, :]).ravel()
            total += train_step(params, cfg, opt, x[rows], y[rows]) * len(rows)
            count += len(rows)
        report.train_loss.append(total / count)
        val = validation_loss(params, cfg, vx, vy)
        report.val_loss.append(val)
        report.stopped_epoch = epoch + 1
        if val < best_val:
            best_val, best_params, report.best_epoch = val, params.copy(), epoch + 1
        if log_every and (epoch + 1) % log_every == 0:
            logger.info("epoch %d train %.5f val %.5f", epoch + 1, report.train_loss[-1], val)
        if val < ref_val - tcfg.min_delta:
            ref_val, wait = val, 0
        else:
            wait += 1
            if tcfg.early_stopping and wait >= tcfg.patience:
                break
    report.wall_time_s = time.perf_counter() - t0
    return best_params, report


# --------------------------------------------------------------------------
# DARW1 weight files
#
#   "DARW1" | u32 len | config JSON | u32 n_tensors
#   per tensor: u16 len | name | u8 ndim | ndim * u32 dims | float32 LE data
#   u32 CRC32 of everything before it


def save(params: ModelParameters, cfg: DarConfig, path) -> None:
    parts = [WEIGHT_MAGIC]
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    parts.append(struct.pack("<I", len(blob)) + blob)
    arrays = params.named_arrays()
    parts.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim)
                     + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(body + struct.pack("<I", zlib.crc32(body)))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptFile("weight file truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load(path, expected: DarConfig | None = None) -> tuple[ModelParameters, DarConfig]:
    buf = Path(path).read_bytes()
    if len(buf) < len(WEIGHT_MAGIC) + 4:
        raise CorruptFile(f"{path}: file too short")
    if buf[:4] == WEIGHT_MAGIC[:4] and buf[:5] != WEIGHT_MAGIC:
        raise VersionMismatch(f"{path}: format {buf[:5]!r}, this build reads {WEIGHT_MAGIC!r}")
    if buf[:5] != WEIGHT_MAGIC:
        raise CorruptFile(f"{path}: not a DAR weight file")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptFile(f"{path}: checksum mismatch (truncated or damaged)")
    r = _Reader(body)
    r.take(5)
    (n,) = r.unpack("<I")
    try:
        cfg = DarConfig.from_dict(json.loads(r.take(n)))
    except (ValueError, KeyError) as exc:
        raise CorruptFile(f"{path}: bad config block: {exc}") from exc
    if expected is not None and expected != cfg:
        diff = {k: (v, expected.to_dict()[k]) for k, v in cfg.to_dict().items() if expected.to_dict()[k] != v}
        raise VersionMismatch(f"{path}: config differs from expected (file, expected): {diff}")
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(body):
        raise CorruptFile(f"{path}: trailing bytes")
    params = build(cfg, 0)
    for name, arr in params.named_arrays():
        if name not in arrays:
            raise CorruptFile(f"{path}: missing tensor {name}")
        if arr.shape != arrays[name].shape:
            raise CorruptFile(f"{path}: tensor {name} has shape {arrays[name].shape}, expected {arr.shape}")
    try:
        for i, c in enumerate(params.convs):
            c.weight.value = arrays[f"conv{i}.weight"]
            c.bias.value = arrays[f"conv{i}.bias"]
        for i, nl in enumerate(params.norms):
            nl.gamma.value = arrays[f"bn{i}.gamma"]
            nl.beta.value = arrays[f"bn{i}.beta"]
            nl.state.running_mean = arrays[f"bn{i}.running_mean"]
            nl.state.running_var = arrays[f"bn{i}.running_var"]
    except KeyError as exc:
        raise CorruptFile(f"{path}: missing tensor {exc}") from exc
    return params, cfg
