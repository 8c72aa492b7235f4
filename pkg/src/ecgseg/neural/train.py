"""Seeded Adam training of the segmenter on binary wave masks."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import EmptyDataset
from ..pipeline import METHODS
from ..signal import WaveClass
from .model import WINDOW, ModelParams, ModelSpec, loss_and_grad

log = logging.getLogger(__name__)

DTYPES = {"float64": np.float64, "float32": np.float32}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 1
    seed: int = 0
    target_wave: str = "QRS"
    preprocessing: str = "raw"
    window: int = WINDOW
    dtype: str = "float64"
    # stop once an epoch's mean loss falls below this value
    target_loss: float | None = None
    spec: ModelSpec = field(default_factory=ModelSpec)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.window < 1:
            raise ValueError("epochs, batch_size and window must be positive")
        WaveClass.parse(self.target_wave)
        if self.preprocessing not in METHODS:
            raise ValueError(f"preprocessing must be one of {METHODS}, got {self.preprocessing!r}")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}")

    @property
    def wave(self) -> WaveClass:
        return WaveClass.parse(self.target_wave)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spec"] = self.spec.to_dict()
        return d


class Adam:
    def __init__(self, params: ModelParams, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.weights.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.weights.items()}
        self.t = 0

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, w in params.weights.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            w -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


def windows(samples: np.ndarray, labels: np.ndarray, window: int):
    """Cut a record into consecutive chunks of at most ``window`` samples."""
    for start in range(0, len(samples), window):
        yield samples[start : start + window], labels[start : start + window]


def train(cfg: TrainConfig, dataset, on_epoch=None):
    """Fit a fresh model; returns ``(params, per-epoch mean loss list)``.

    ``dataset`` is a sequence of ``(input_samples, binary_labels)`` already
    preprocessed. Records longer than ``cfg.window`` are chunked; shorter
    chunks are zero-padded to the window and the padding is excluded from the
    loss. Given the same seed and data the result is bit-identical.
    """
    items = [c for s, y in dataset for c in windows(np.asarray(s), np.asarray(y), cfg.window)]
    if not items:
        raise EmptyDataset("training set is empty")
    dtype = DTYPES[cfg.dtype]
    params = ModelParams.initialize(cfg.spec, cfg.seed, dtype=dtype)
    opt = Adam(params, cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 1])
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(items))
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [items[i] for i in order[start : start + cfg.batch_size]]
            loss, grads = loss_and_grad(params, batch, pad_to=cfg.window)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            opt.step(params, grads)
            total += loss * len(batch)
            count += len(batch)
        curve.append(total / count)
        log.debug("epoch %d loss %.6f", epoch, curve[-1])
        if on_epoch is not None:
            on_epoch(epoch, curve[-1])
        if cfg.target_loss is not None and curve[-1] < cfg.target_loss:
            break
    return params, curve
