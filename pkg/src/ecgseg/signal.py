"""Sampled-signal type, label masks, and the conditioning chain.

The conditioning chain is band-pass -> z-normalization -> decimation. All
operations are pure: they return new objects and never mutate their inputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BandOutOfRange,
    ConstantSignal,
    InvalidSignal,
    IoFailure,
    LengthMismatch,
    NonIntegerFactor,
    ParseError,
)

# Raised-cosine transition width of the band-pass mask, centred on each edge.
TRANSITION_HZ = 0.25


class WaveClass(enum.IntEnum):
    BACKGROUND = 0
    P = 1
    QRS = 2
    T = 3

    @classmethod
    def waves(cls) -> tuple["WaveClass", ...]:
        return (cls.P, cls.QRS, cls.T)

    @classmethod
    def parse(cls, name: str) -> "WaveClass":
        try:
            return cls[name]
        except KeyError:
            raise ValueError(f"unknown wave class {name!r}") from None


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Uniformly sampled real trace (millivolts) with its sampling rate in Hz."""

    samples: np.ndarray
    fs: float

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if x.size < 1:
            raise InvalidSignal("signal must contain at least one sample")
        if not np.all(np.isfinite(x)):
            raise InvalidSignal("signal contains NaN or Inf samples")
        fs = float(self.fs)
        if not (np.isfinite(fs) and fs > 0):
            raise InvalidSignal(f"sampling rate must be positive, got {self.fs!r}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "fs", fs)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.fs

    def with_samples(self, samples) -> "SampledSignal":
        return SampledSignal(samples, self.fs)


@dataclass(frozen=True, eq=False)
class LabelMask:
    """One wave class per sample, on the grid of a companion signal."""

    classes: np.ndarray

    def __post_init__(self):
        c = np.array(self.classes, dtype=np.int8, copy=True).reshape(-1)
        valid = {int(v) for v in WaveClass}
        if c.size and not set(np.unique(c).tolist()) <= valid:
            raise ValueError("label mask contains unknown class ids")
        c.setflags(write=False)
        object.__setattr__(self, "classes", c)

    def __len__(self) -> int:
        return self.classes.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelMask):
            return NotImplemented
        return np.array_equal(self.classes, other.classes)

    def binary(self, wave: WaveClass) -> np.ndarray:
        """0/1 indicator of ``wave`` per sample."""
        return (self.classes == int(wave)).astype(np.int8)

    def check_companion(self, signal: SampledSignal) -> None:
        if len(self) != len(signal):
            raise LengthMismatch(
                f"mask has {len(self)} samples, signal has {len(signal)}"
            )


def normalize(signal: SampledSignal) -> SampledSignal:
    """Z-score with the population standard deviation."""
    x = signal.samples
    if x.size < 2:
        raise InvalidSignal("normalize needs at least two samples")
    mu = x.mean()
    centered = x - mu
    sd = np.sqrt(np.mean(centered * centered))
    if sd == 0 or sd <= np.finfo(float).tiny:
        raise ConstantSignal("cannot normalize a signal with zero variance")
    return signal.with_samples(centered / sd)


def bandpass_mask(freqs: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Gain in [0, 1] per frequency: flat passband, raised-cosine edges."""
    half = TRANSITION_HZ / 2
    f = np.abs(np.asarray(freqs, dtype=float))
    gain = np.ones_like(f)

    def rise(edge):
        # 0 below edge-half, 1 above edge+half
        u = np.clip((f - (edge - half)) / TRANSITION_HZ, 0.0, 1.0)
        return 0.5 * (1.0 - np.cos(np.pi * u))

    if lo > 0:
        gain *= rise(lo)
    gain *= 1.0 - rise(hi)
    return gain


def bandpass(signal: SampledSignal, lo: float = 0.5, hi: float = 50.0) -> SampledSignal:
    """Zero-phase band-pass by masking the DFT.

    The one-sided spectrum is multiplied by :func:`bandpass_mask` and inverted
    with a Hermitian-symmetric inverse transform, so the output is exactly real.
    """
    nyq = signal.fs / 2
    if not (0 <= lo < hi):
        raise BandOutOfRange(f"band requires 0 <= lo < hi, got [{lo}, {hi}]")
    if hi >= nyq:
        raise BandOutOfRange(f"hi={hi} Hz must be below Nyquist ({nyq} Hz)")
    n = len(signal)
    spec = np.fft.rfft(signal.samples)
    freqs = np.fft.rfftfreq(n, d=1.0 / signal.fs)
    out = np.fft.irfft(spec * bandpass_mask(freqs, lo, hi), n=n)
    return signal.with_samples(out)


def decimation_factor(fs: float, target_fs: float) -> int:
    if target_fs <= 0:
        raise NonIntegerFactor(f"target rate must be positive, got {target_fs}")
    ratio = fs / target_fs
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
        raise NonIntegerFactor(
            f"fs={fs:g} Hz is not an integer multiple of target {target_fs:g} Hz"
        )
    return k


def downsample(signal: SampledSignal, target_fs: float = 250.0) -> SampledSignal:
    """Keep every k-th sample, k = fs / target_fs. No anti-alias filtering."""
    k = decimation_factor(signal.fs, target_fs)
    if k == 1:
        return signal
    return SampledSignal(signal.samples[::k], signal.fs / k)


def condition(
    signal: SampledSignal,
    lo: float = 0.5,
    hi: float = 50.0,
    target_fs: float = 250.0,
) -> SampledSignal:
    """Band-pass, then normalize, then decimate to ``target_fs``."""
    filtered = bandpass(signal, lo, hi)
    return downsample(normalize(filtered), target_fs)


# --- signal CSV -------------------------------------------------------------


def format_number(value: float) -> str:
    """Shortest decimal text that round-trips through a 64-bit float."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e16 and math.copysign(1.0, value) > 0:
        return str(int(value))
    return repr(value)


def write_signal_csv(signal: SampledSignal, path) -> None:
    lines = [f"fs,{format_number(signal.fs)}"]
    lines.extend(format_number(v) for v in signal.samples)
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def parse_signal_csv(text: str, path=None) -> SampledSignal:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file, expected 'fs,<rate>' header", path, 1)
    head = lines[0].split(",")
    if len(head) != 2 or head[0] != "fs":
        raise ParseError("header must be 'fs,<rate>'", path, 1, "fs")
    try:
        fs = float(head[1])
    except ValueError:
        raise ParseError(f"bad sampling rate {head[1]!r}", path, 1, "fs") from None
    if not (np.isfinite(fs) and fs > 0):
        raise ParseError(f"sampling rate must be positive, got {head[1]!r}", path, 1, "fs")
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            v = float(line)
        except ValueError:
            raise ParseError(f"bad sample {line!r}", path, lineno, "sample") from None
        if not np.isfinite(v):
            raise ParseError(f"non-finite sample {line!r}", path, lineno, "sample")
        values.append(v)
    if not values:
        raise ParseError("no samples after header", path, 2, "sample")
    return SampledSignal(np.array(values), fs)


def read_signal_csv(path) -> SampledSignal:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8: {exc}", path) from exc
    return parse_signal_csv(text, path)
