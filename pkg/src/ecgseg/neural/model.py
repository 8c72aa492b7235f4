"""The three-conv + BiLSTM per-timestep segmenter.

Architecture (default sizes):

    conv(1->64, k=5) -> BN -> ReLU
    conv(64->128, k=3) -> BN -> ReLU
    conv(128->256, k=3) -> BN -> ReLU
    BiLSTM(256 -> 2x128)
    linear(256 -> 2)

which has 520,322 learnable scalars. The network is length-agnostic; the
pipeline feeds it 3500-sample windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from . import layers

WINDOW = 3500
TOTAL_PARAMS = 520_322
LAYER_PARAMS = (384, 128, 24_704, 256, 98_560, 512, 395_264, 514)


@dataclass(frozen=True)
class ModelSpec:
    in_channels: int = 1
    channels: tuple[int, int, int] = (64, 128, 256)
    kernels: tuple[int, int, int] = (5, 3, 3)
    hidden: int = 128
    n_classes: int = 2

    @classmethod
    def tiny(cls) -> "ModelSpec":
        return cls(channels=(2, 3, 4), hidden=4)

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "channels": list(self.channels),
            "kernels": list(self.kernels),
            "hidden": self.hidden,
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            in_channels=int(d["in_channels"]),
            channels=tuple(int(c) for c in d["channels"]),
            kernels=tuple(int(k) for k in d["kernels"]),
            hidden=int(d["hidden"]),
            n_classes=int(d["n_classes"]),
        )

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Learnable tensor shapes, in layer order."""
        out = {}
        c_in = self.in_channels
        for n, (c, k) in enumerate(zip(self.channels, self.kernels), start=1):
            out[f"conv{n}.weight"] = (c, c_in, k)
            out[f"conv{n}.bias"] = (c,)
            out[f"bn{n}.gamma"] = (c,)
            out[f"bn{n}.beta"] = (c,)
            c_in = c
        H = self.hidden
        for d in ("fwd", "bwd"):
            out[f"lstm.{d}.w_ih"] = (4 * H, c_in)
            out[f"lstm.{d}.w_hh"] = (4 * H, H)
            out[f"lstm.{d}.b_ih"] = (4 * H,)
            out[f"lstm.{d}.b_hh"] = (4 * H,)
        out["head.weight"] = (self.n_classes, 2 * H)
        out["head.bias"] = (self.n_classes,)
        return out

    def buffer_shapes(self) -> dict[str, tuple[int, ...]]:
        out = {}
        for n, c in enumerate(self.channels, start=1):
            out[f"bn{n}.running_mean"] = (c,)
            out[f"bn{n}.running_var"] = (c,)
        return out


LAYER_GROUPS = ("conv1", "bn1", "conv2", "bn2", "conv3", "bn3", "lstm", "head")


@dataclass
class ModelParams:
    spec: ModelSpec
    weights: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros(cls, spec: ModelSpec | None = None, dtype=np.float64) -> "ModelParams":
        spec = spec or ModelSpec()
        weights = {k: np.zeros(s, dtype=dtype) for k, s in spec.shapes().items()}
        buffers = {
            k: (np.ones(s, dtype=dtype) if k.endswith("var") else np.zeros(s, dtype=dtype))
            for k, s in spec.buffer_shapes().items()
        }
        return cls(spec, weights, buffers)

    @classmethod
    def initialize(cls, spec: ModelSpec | None = None, seed: int = 0, dtype=np.float64) -> "ModelParams":
        """Uniform(+-1/sqrt(fan_in)) weights, unit BN scale, zero biases, forget bias 1."""
        p = cls.zeros(spec, dtype)
        spec = p.spec
        rng = np.random.default_rng(seed)
        H = spec.hidden
        for name, shape in spec.shapes().items():
            if name.startswith("conv") and name.endswith("weight"):
                fan_in = shape[1] * shape[2]
            elif name.startswith("lstm") and (name.endswith("w_ih") or name.endswith("w_hh")):
                fan_in = spec.channels[-1] + H
            elif name == "head.weight":
                fan_in = shape[1]
            else:
                continue
            bound = 1.0 / np.sqrt(fan_in)
            p.weights[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        for n in range(1, 4):
            p.weights[f"bn{n}.gamma"][:] = 1.0
        for d in ("fwd", "bwd"):
            p.weights[f"lstm.{d}.b_ih"][H : 2 * H] = 1.0
        return p

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.spec,
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            self.spec,
            {k: v.astype(dtype) for k, v in self.weights.items()},
            {k: v.astype(dtype) for k, v in self.buffers.items()},
        )

    @property
    def dtype(self):
        return self.weights["head.weight"].dtype

    def count(self) -> int:
        return int(sum(v.size for v in self.weights.values()))

    def layer_counts(self) -> list[tuple[str, int]]:
        out = []
        for group in LAYER_GROUPS:
            n = sum(v.size for k, v in self.weights.items() if k.split(".")[0] == group)
            out.append((group, int(n)))
        return out


def _lstm_dir(w, d):
    return (w[f"lstm.{d}.w_ih"], w[f"lstm.{d}.w_hh"], w[f"lstm.{d}.b_ih"], w[f"lstm.{d}.b_hh"])


def _as_batch(x, spec: ModelSpec, dtype):
    """Accept (T,), (C, T) or (B, C, T) and return channels-last (B, T, C)."""
    x = np.asarray(x, dtype=dtype)
    if x.ndim == 1:
        x = x[None, None, :]
    elif x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != spec.in_channels:
        raise ShapeMismatch(f"expected input with {spec.in_channels} channel(s), got shape {x.shape}")
    if x.shape[2] < 1:
        raise ShapeMismatch("input must have at least one timestep")
    return np.ascontiguousarray(x.transpose(0, 2, 1))


def forward(params: ModelParams, x, mode="eval", keep_cache=False):
    """Channels-last forward pass; returns ``(logits (B, T, K), cache)``."""
    w, buf = params.weights, params.buffers
    caches = []
    h = x
    for n in range(1, 4):
        y, xp = layers.conv1d_forward(h, w[f"conv{n}.weight"], w[f"conv{n}.bias"])
        y, bn_cache = layers.batchnorm_forward(
            y,
            w[f"bn{n}.gamma"],
            w[f"bn{n}.beta"],
            buf[f"bn{n}.running_mean"],
            buf[f"bn{n}.running_var"],
            mode,
        )
        h = layers.relu(y)
        if keep_cache:
            caches.append((xp, bn_cache, h))
    seq, lstm_cache = layers.bilstm_forward(h, _lstm_dir(w, "fwd"), _lstm_dir(w, "bwd"))
    logits = layers.linear_forward(seq, w["head.weight"], w["head.bias"])
    cache = (caches, lstm_cache, seq) if keep_cache else None
    return logits, cache


def backward(params: ModelParams, cache, dlogits) -> dict[str, np.ndarray]:
    w = params.weights
    caches, lstm_cache, seq = cache
    g = {}
    dseq, g["head.weight"], g["head.bias"] = layers.linear_backward(dlogits, seq, w["head.weight"])
    dh, lstm_grads = layers.bilstm_backward(dseq, lstm_cache)
    for d, (dw_ih, dw_hh, db) in zip(("fwd", "bwd"), lstm_grads):
        g[f"lstm.{d}.w_ih"] = dw_ih
        g[f"lstm.{d}.w_hh"] = dw_hh
        g[f"lstm.{d}.b_ih"] = db
        g[f"lstm.{d}.b_hh"] = db.copy()
    for n in range(3, 0, -1):
        xp, bn_cache, h = caches[n - 1]
        dy = layers.relu_backward(dh, h)
        dy, g[f"bn{n}.gamma"], g[f"bn{n}.beta"] = layers.batchnorm_backward(dy, bn_cache)
        dh, g[f"conv{n}.weight"], g[f"conv{n}.bias"] = layers.conv1d_backward(dy, xp, w[f"conv{n}.weight"])
    return g


def model_forward(params: ModelParams, signal, mode="eval") -> np.ndarray:
    """Per-timestep logits for one signal (``(T, K)``) or a batch (``(B, T, K)``).

    Eval mode leaves the running statistics untouched; train mode updates them.
    """
    x = np.asarray(signal)
    batched = x.ndim == 3
    logits, _ = forward(params, _as_batch(x, params.spec, params.dtype), mode)
    return logits if batched else logits[0]


def collate(batch, dtype=np.float64):
    """Stack ``(signal, labels)`` pairs of possibly different lengths.

    Returns channels-last inputs ``(B, T, 1)``, integer labels ``(B, T)`` and a
    0/1 validity mask marking the real (unpadded) timesteps.
    """
    if not batch:
        raise ShapeMismatch("empty batch")
    T = max(len(np.asarray(s)) for s, _ in batch)
    B = len(batch)
    x = np.zeros((B, T, 1), dtype=dtype)
    y = np.zeros((B, T), dtype=np.int64)
    valid = np.zeros((B, T), dtype=dtype)
    for b, (s, lab) in enumerate(batch):
        s = np.asarray(s, dtype=dtype)
        lab = np.asarray(lab)
        if s.ndim != 1 or lab.shape != s.shape:
            raise ShapeMismatch("each batch item needs a 1-D signal and equal-length labels")
        x[b, : s.size, 0] = s
        y[b, : s.size] = lab
        valid[b, : s.size] = 1
    return x, y, valid


def _train_inputs(params: ModelParams, batch, pad_to):
    x, y, valid = collate(batch, params.dtype)
    if pad_to is not None and x.shape[1] < pad_to:
        extra = pad_to - x.shape[1]
        x = np.pad(x, ((0, 0), (0, extra), (0, 0)))
        y = np.pad(y, ((0, 0), (0, extra)))
        valid = np.pad(valid, ((0, 0), (0, extra)))
    return x, y, valid


def batch_loss(params: ModelParams, batch, pad_to: int | None = None) -> float:
    """Train-mode loss alone (running statistics are left untouched)."""
    x, y, valid = _train_inputs(params, batch, pad_to)
    scratch = ModelParams(params.spec, params.weights, {k: v.copy() for k, v in params.buffers.items()})
    logits, _ = forward(scratch, x, "train")
    loss, _ = layers.softmax_xent(logits, y, valid)
    return float(loss)


def loss_and_grad(params: ModelParams, batch, pad_to: int | None = None):
    """Mean per-timestep cross-entropy and its gradient for every weight.

    ``batch`` is a sequence of ``(signal, binary_labels)``. Padding added to
    equalize lengths (or to reach ``pad_to``) is excluded from the loss. Runs
    in train mode, so batch-norm running statistics are updated.
    """
    x, y, valid = _train_inputs(params, batch, pad_to)
    logits, cache = forward(params, x, "train", keep_cache=True)
    loss, dlogits = layers.softmax_xent(logits, y, valid)
    return loss, backward(params, cache, dlogits)


def predict(params: ModelParams, signal) -> np.ndarray:
    """Binary per-timestep prediction (argmax over logits) in eval mode."""
    return np.argmax(model_forward(params, signal, "eval"), axis=-1).astype(np.int8)
