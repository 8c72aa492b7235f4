"""One-sided DFT magnitude spectra, dominant frequencies, spectral similarity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ClassAbsent,
    EmptyBand,
    EmptySignal,
    ResolutionMismatch,
    ZeroSpectrum,
)
from .signal import LabelMask, SampledSignal, WaveClass, format_number

DEFAULT_NFFT = 512


@dataclass(frozen=True, eq=False)
class Spectrum:
    freqs: np.ndarray
    mags: np.ndarray
    fs: float
    n_fft: int

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        mags = np.asarray(self.mags, dtype=float)
        if freqs.shape != mags.shape or freqs.size != self.n_fft // 2 + 1:
            raise ValueError("spectrum grid does not match n_fft")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("spectrum frequencies must be strictly increasing")
        if not np.all(np.isfinite(mags)) or np.any(mags < 0):
            raise ValueError("spectrum magnitudes must be finite and non-negative")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "mags", mags)

    def same_grid(self, other: "Spectrum") -> bool:
        return (
            self.n_fft == other.n_fft
            and self.fs == other.fs
            and np.array_equal(self.freqs, other.freqs)
        )


def dft(signal: SampledSignal, n_fft: int = DEFAULT_NFFT) -> Spectrum:
    """Magnitude of the length-``n_fft`` DFT on the bins 0..fs/2.

    Shorter signals are zero-padded; longer ones are truncated to their prefix.
    No window function is applied.
    """
    if len(signal) == 0:
        raise EmptySignal("cannot transform an empty signal")
    n_fft = int(n_fft)
    if n_fft < 2:
        raise ValueError(f"n_fft must be >= 2, got {n_fft}")
    X = np.fft.rfft(signal.samples[:n_fft], n=n_fft)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / signal.fs)
    return Spectrum(freqs, np.abs(X), signal.fs, n_fft)


def dominant_frequency(spec: Spectrum, band=(0.0, None)) -> float:
    """Frequency of the largest in-band bin; ties go to the lower frequency."""
    lo, hi = band
    if hi is None:
        hi = spec.fs / 2
    if lo < 0:
        raise ValueError("band lower edge must be >= 0")
    inside = np.flatnonzero((spec.freqs >= lo) & (spec.freqs <= hi))
    if inside.size == 0:
        raise EmptyBand(f"no spectral bins in [{lo}, {hi}] Hz")
    # np.argmax returns the first maximum, i.e. the lowest frequency
    return float(spec.freqs[inside[np.argmax(spec.mags[inside])]])


def spectral_similarity(a: Spectrum, b: Spectrum) -> float:
    """Cosine similarity of two magnitude vectors on the same grid."""
    if not a.same_grid(b):
        raise ResolutionMismatch(
            f"grids differ: (fs={a.fs}, n_fft={a.n_fft}) vs (fs={b.fs}, n_fft={b.n_fft})"
        )
    na = np.linalg.norm(a.mags)
    nb = np.linalg.norm(b.mags)
    if na == 0 or nb == 0:
        raise ZeroSpectrum("similarity is undefined for an all-zero spectrum")
    score = float(np.dot(a.mags / na, b.mags / nb))
    return min(1.0, max(-1.0, score))


def occurrences(mask: LabelMask, wave: WaveClass) -> list[tuple[int, int]]:
    """Half-open index runs ``[start, stop)`` where ``mask`` equals ``wave``."""
    hit = np.concatenate(([0], (mask.classes == int(wave)).astype(np.int8), [0]))
    edges = np.flatnonzero(np.diff(hit))
    return list(zip(edges[0::2].tolist(), edges[1::2].tolist()))


def segment_spectra(
    signal: SampledSignal,
    mask: LabelMask,
    n_fft: int = DEFAULT_NFFT,
    waves=WaveClass.waves(),
) -> dict[WaveClass, Spectrum]:
    """Average spectrum of every contiguous occurrence of each wave class.

    Each occurrence is cut out on its own and zero-padded to ``n_fft`` (longer
    runs are truncated), so beats are never stitched together.
    """
    mask.check_companion(signal)
    out = {}
    for wave in waves:
        runs = occurrences(mask, wave)
        if not runs:
            raise ClassAbsent(f"no samples labelled {wave.name}")
        mags = [
            dft(SampledSignal(signal.samples[a:b], signal.fs), n_fft).mags
            for a, b in runs
        ]
        freqs = np.fft.rfftfreq(n_fft, d=1.0 / signal.fs)
        out[wave] = Spectrum(freqs, np.mean(mags, axis=0), signal.fs, n_fft)
    return out


def write_spectrum_csv(spec: Spectrum, path) -> None:
    rows = ["freq_hz,magnitude"]
    rows.extend(
        f"{format_number(f)},{format_number(m)}" for f, m in zip(spec.freqs, spec.mags)
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
