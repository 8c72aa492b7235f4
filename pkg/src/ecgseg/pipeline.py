"""Signal conditioning plus one of the four preprocessing methods, as model input."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .signal import SampledSignal, bandpass, downsample, normalize
from .transforms import (
    DEFAULT_DT,
    DEFAULT_GL_NODES,
    DEFAULT_GL_WINDOW,
    effective_dt,
    euler_diff,
    gl_smooth,
    hilbert,
)

METHODS = ("raw", "euler", "hilbert", "gauss-legendre")


@dataclass(frozen=True)
class PreprocessConfig:
    method: str = "raw"
    band_lo: float = 0.5
    band_hi: float = 50.0
    target_fs: float = 250.0
    dt: float = DEFAULT_DT
    gl_nodes: int = DEFAULT_GL_NODES
    gl_window: float = DEFAULT_GL_WINDOW

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown preprocessing method {self.method!r}; choose from {METHODS}")

    def main_parameter(self, fs: float | None = None) -> str:
        """Human-readable summary of the method's key setting, as actually applied."""
        fs = fs or self.target_fs
        if self.method == "euler":
            return f"dt={effective_dt(self.dt, fs):g} s (requested {self.dt:g} s)"
        if self.method == "hilbert":
            return "envelope of analytic signal (one-sided FFT)"
        if self.method == "gauss-legendre":
            return f"n={self.gl_nodes} nodes, window={self.gl_window:g} s"
        return "-"

    def to_dict(self) -> dict:
        return asdict(self)


def apply_method(signal: SampledSignal, cfg: PreprocessConfig) -> SampledSignal:
    """Apply only the selected transform (no conditioning)."""
    if cfg.method == "raw":
        return signal
    if cfg.method == "euler":
        return euler_diff(signal, cfg.dt)
    if cfg.method == "hilbert":
        return signal.with_samples(hilbert(signal).envelope)
    return gl_smooth(signal, cfg.gl_window, cfg.gl_nodes)


def prepare(signal: SampledSignal, cfg: PreprocessConfig) -> SampledSignal:
    """Band-pass -> normalize -> decimate -> transform -> normalize.

    The final z-score puts every method on the same input scale, which the
    first batch-norm layer would otherwise have to absorb.
    """
    x = bandpass(signal, cfg.band_lo, cfg.band_hi)
    x = downsample(normalize(x), cfg.target_fs)
    return normalize(apply_method(x, cfg))


def prepare_samples(signal: SampledSignal, cfg: PreprocessConfig) -> np.ndarray:
    return prepare(signal, cfg).samples
