"""Gaussian-sum synthetic ECG with ground-truth wave masks.

Each beat is the sum of five Gaussian lobes (P, Q, R, S, T). The Q, R and S
lobes together form the QRS complex. A sample is labelled with a wave when it
lies within three standard deviations of one of that wave's lobe centres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigInvalid, NotConverged, ResolutionMismatch
from .signal import LabelMask, SampledSignal, WaveClass
from .spectral import Spectrum, dft, spectral_similarity

LOBES = ("p", "q", "r", "s", "t")
LOBE_CLASS = {
    "p": WaveClass.P,
    "q": WaveClass.QRS,
    "r": WaveClass.QRS,
    "s": WaveClass.QRS,
    "t": WaveClass.T,
}
# Later entries overwrite earlier ones: QRS > P > T.
PAINT_ORDER = (WaveClass.T, WaveClass.P, WaveClass.QRS)
MASK_WIDTH_SIGMAS = 3.0
_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class GaussianComponent:
    amplitude: float  # mV, negative for Q and S
    center: float  # seconds from beat onset
    sigma: float  # seconds

    def __post_init__(self):
        vals = (self.amplitude, self.center, self.sigma)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigInvalid(f"non-finite component {self}")
        if self.sigma <= 0:
            raise ConfigInvalid(f"sigma must be positive, got {self.sigma}")

    def support(self) -> tuple[float, float]:
        half = MASK_WIDTH_SIGMAS * self.sigma
        return self.center - half, self.center + half


@dataclass(frozen=True)
class GaussianBeatConfig:
    p: GaussianComponent = field(default_factory=lambda: GaussianComponent(0.15, 0.10, 0.020))
    q: GaussianComponent = field(default_factory=lambda: GaussianComponent(-0.10, 0.19, 0.008))
    r: GaussianComponent = field(default_factory=lambda: GaussianComponent(1.00, 0.21, 0.010))
    s: GaussianComponent = field(default_factory=lambda: GaussianComponent(-0.20, 0.23, 0.008))
    t: GaussianComponent = field(default_factory=lambda: GaussianComponent(0.30, 0.40, 0.035))
    beat_period: float = 0.8
    n_beats: int = 1
    fs: float = 250.0
    noise_std: float = 0.0
    seed: int = 0

    def lobes(self) -> dict[str, GaussianComponent]:
        return {name: getattr(self, name) for name in LOBES}

    def validate(self) -> None:
        centers = [getattr(self, name).center for name in LOBES]
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ConfigInvalid(f"lobe centres must satisfy tP < tQ < tR < tS < tT, got {centers}")
        if not self.beat_period > self.t.center + MASK_WIDTH_SIGMAS * self.t.sigma:
            raise ConfigInvalid(
                f"beat_period {self.beat_period} s does not clear the T-wave support "
                f"(ends at {self.t.support()[1]:.4f} s)"
            )
        if int(self.n_beats) != self.n_beats or self.n_beats < 1:
            raise ConfigInvalid(f"n_beats must be a positive integer, got {self.n_beats}")
        if not self.fs > 0:
            raise ConfigInvalid(f"fs must be positive, got {self.fs}")
        if not self.noise_std >= 0:
            raise ConfigInvalid(f"noise_std must be >= 0, got {self.noise_std}")

    def to_dict(self) -> dict:
        d = {
            name: {"amplitude": c.amplitude, "center": c.center, "sigma": c.sigma}
            for name, c in self.lobes().items()
        }
        d.update(
            beat_period=self.beat_period,
            n_beats=self.n_beats,
            fs=self.fs,
            noise_std=self.noise_std,
            seed=self.seed,
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianBeatConfig":
        kw = {k: v for k, v in d.items() if k not in LOBES}
        for name in LOBES:
            if name in d:
                kw[name] = GaussianComponent(**d[name])
        return cls(**kw)


def gaussian_wave(c: GaussianComponent, grid) -> np.ndarray:
    t = np.asarray(grid, dtype=float)
    return c.amplitude * np.exp(-((t - c.center) ** 2) / (2.0 * c.sigma**2))


def n_samples(cfg: GaussianBeatConfig) -> int:
    return int(round(cfg.n_beats * cfg.beat_period * cfg.fs))


def synth_beat(cfg: GaussianBeatConfig) -> tuple[SampledSignal, LabelMask]:
    """Tile ``cfg.n_beats`` beats, add seeded white noise, and label the lobes.

    Sample ``i`` belongs to beat ``floor(i / (beat_period * fs))`` and takes the
    five Gaussian lobes of that beat. The mask marks every sample within
    3 sigma of a lobe centre, painted T, then P, then QRS.
    """
    cfg.validate()
    n = n_samples(cfg)
    t = np.arange(n) / cfg.fs
    x = np.zeros(n)
    labels = np.zeros(n, dtype=np.int8)
    windows = {w: np.zeros(n, dtype=bool) for w in PAINT_ORDER}
    # each sample carries the lobes of its own beat only, so the tiling is
    # exactly periodic (the neighbouring beats' far tails are dropped)
    period = cfg.beat_period * cfg.fs
    beat = np.minimum(np.floor(np.arange(n) / period + 1e-9), cfg.n_beats - 1)
    local = (np.arange(n) - beat * period) / cfg.fs
    for comp in cfg.lobes().values():
        x += gaussian_wave(comp, local)
    for k in range(cfg.n_beats):
        onset = k * cfg.beat_period
        for name, comp in cfg.lobes().items():
            shifted = replace(comp, center=comp.center + onset)
            half = MASK_WIDTH_SIGMAS * comp.sigma
            windows[LOBE_CLASS[name]] |= np.abs(t - shifted.center) <= half + _EDGE_EPS
    for wave in PAINT_ORDER:
        labels[windows[wave]] = int(wave)
    if cfg.noise_std > 0:
        rng = np.random.default_rng(cfg.seed)
        x = x + rng.normal(0.0, cfg.noise_std, size=n)
    return SampledSignal(x, cfg.fs), LabelMask(labels)


def wave_prototypes(cfg: GaussianBeatConfig | None = None) -> dict[WaveClass, np.ndarray]:
    """Noise-free template of each wave, sampled over its labelled support."""
    cfg = cfg or GaussianBeatConfig()
    groups = {
        WaveClass.P: ("p",),
        WaveClass.QRS: ("q", "r", "s"),
        WaveClass.T: ("t",),
    }
    out = {}
    for wave, names in groups.items():
        comps = [getattr(cfg, name) for name in names]
        lo = min(c.support()[0] for c in comps)
        hi = max(c.support()[1] for c in comps)
        t = np.arange(math.ceil(lo * cfg.fs - _EDGE_EPS), math.floor(hi * cfg.fs + _EDGE_EPS) + 1) / cfg.fs
        out[wave] = sum(gaussian_wave(c, t) for c in comps)
    return out


# --- spectral validation ----------------------------------------------------


def validate_spectrum(
    signal: SampledSignal, reference: Spectrum, threshold: float
) -> tuple[bool, float]:
    """Return ``(accepted, score)`` for ``signal`` against ``reference``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    score = spectral_similarity(dft(signal, reference.n_fft), reference)
    return score >= threshold, score


def _candidates(cfg: GaussianBeatConfig):
    for name in LOBES:
        comp = getattr(cfg, name)
        for k in (0.9, 1.1):
            yield replace(cfg, **{name: replace(comp, sigma=comp.sigma * k)})
        for k in (0.95, 1.05):
            yield replace(cfg, **{name: replace(comp, amplitude=comp.amplitude * k)})


def _score(cfg: GaussianBeatConfig, reference: Spectrum) -> float:
    signal, _ = synth_beat(cfg)
    return spectral_similarity(dft(signal, reference.n_fft), reference)


def adjust_until_valid(
    cfg: GaussianBeatConfig,
    reference: Spectrum,
    threshold: float,
    max_iters: int = 50,
) -> tuple[GaussianBeatConfig, float]:
    """Greedy coordinate search on lobe widths and amplitudes.

    Each iteration tries every single-lobe move (sigma x0.9 / x1.1,
    amplitude x0.95 / x1.05) and keeps the one that raises the similarity
    score the most. Returns ``(config, score)`` once the score reaches
    ``threshold``; raises :class:`NotConverged` when ``max_iters`` is spent or
    no move improves the score.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    cfg.validate()
    if reference.fs != cfg.fs:
        raise ResolutionMismatch(f"reference fs {reference.fs} != synth fs {cfg.fs}")
    best, best_score = cfg, _score(cfg, reference)
    if best_score >= threshold:
        return best, best_score
    for it in range(1, max_iters + 1):
        step, step_score = None, best_score
        for cand in _candidates(best):
            try:
                cand.validate()
            except ConfigInvalid:
                continue
            s = _score(cand, reference)
            if s > step_score:
                step, step_score = cand, s
        if step is None:
            raise NotConverged(best_score, best, it)
        best, best_score = step, step_score
        if best_score >= threshold:
            return best, best_score
    raise NotConverged(best_score, best, max_iters)


# --- corpus -----------------------------------------------------------------


@dataclass(frozen=True)
class Record:
    name: str
    signal: SampledSignal
    mask: LabelMask


def jittered_config(base: GaussianBeatConfig, rng: np.random.Generator, jitter: float) -> GaussianBeatConfig:
    """Scale every amplitude and width by ``1 + U(-jitter, jitter)``."""
    if jitter == 0:
        return base
    lobes = {}
    for name, c in base.lobes().items():
        a, s = rng.uniform(1 - jitter, 1 + jitter, size=2)
        lobes[name] = replace(c, amplitude=c.amplitude * a, sigma=c.sigma * s)
    period = base.beat_period * rng.uniform(1 - jitter, 1 + jitter)
    out = replace(base, beat_period=period, **lobes)
    min_period = out.t.support()[1] * 1.05
    if out.beat_period <= min_period:
        out = replace(out, beat_period=min_period)
    return out


def synth_corpus(
    total_beats: int = 200,
    window: int = 3500,
    noise_std: float = 0.05,
    seed: int = 0,
    jitter: float = 0.1,
    base: GaussianBeatConfig | None = None,
) -> list[Record]:
    """Records of whole beats, each at most ``window`` samples long.

    Every record draws its own jittered morphology and noise stream from a
    generator seeded by ``seed``; the corpus is a pure function of its
    arguments.
    """
    base = base or GaussianBeatConfig()
    rng = np.random.default_rng(seed)
    records = []
    remaining = int(total_beats)
    while remaining > 0:
        cfg = jittered_config(base, rng, jitter)
        fit = max(1, int(window // (cfg.beat_period * cfg.fs)))
        n = min(fit, remaining)
        cfg = replace(
            cfg,
            n_beats=n,
            noise_std=noise_std,
            seed=int(rng.integers(0, 2**31 - 1)),
        )
        signal, mask = synth_beat(cfg)
        records.append(Record(f"synth{len(records):04d}", signal, mask))
        remaining -= n
    return records
