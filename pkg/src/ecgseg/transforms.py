"""Preprocessing operators: analytic signal, forward difference, quadrature smoothing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EmptySignal, OrderOutOfRange, StepTooLarge, WindowTooSmall
from .signal import SampledSignal

DEFAULT_DT = 0.005
DEFAULT_GL_NODES = 5
DEFAULT_GL_WINDOW = 0.04
MAX_GL_ORDER = 64


@dataclass(frozen=True, eq=False)
class AnalyticSignal:
    envelope: np.ndarray
    phase: np.ndarray  # radians in (-pi, pi]
    fs: float
    analytic: np.ndarray  # complex, real part is the input

    def __len__(self):
        return self.envelope.size

    @property
    def imag(self) -> np.ndarray:
        return self.analytic.imag


def hilbert(signal: SampledSignal) -> AnalyticSignal:
    """Analytic signal by one-sided spectrum construction.

    The DFT is kept at DC (and Nyquist for even lengths), doubled on the
    positive bins and zeroed on the negative bins before inversion.
    """
    x = signal.samples
    n = x.size
    if n == 0:
        raise EmptySignal("cannot take the Hilbert transform of an empty signal")
    if n < 4:
        raise EmptySignal(f"Hilbert transform needs at least 4 samples, got {n}")
    h = np.zeros(n)
    h[0] = 1.0
    if n % 2 == 0:
        h[n // 2] = 1.0
        h[1 : n // 2] = 2.0
    else:
        h[1 : (n + 1) // 2] = 2.0
    z = np.fft.ifft(np.fft.fft(x) * h)
    phase = np.angle(z)
    phase[phase <= -np.pi] = np.pi
    return AnalyticSignal(np.abs(z), phase, signal.fs, z)


def euler_step(dt: float, fs: float) -> int:
    """Nearest whole-sample step for a requested ``dt`` (halves round up)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return max(1, int(math.floor(dt * fs + 0.5)))


def effective_dt(dt: float, fs: float) -> float:
    return euler_step(dt, fs) / fs


def euler_diff(signal: SampledSignal, dt: float = DEFAULT_DT) -> SampledSignal:
    """Forward difference ``(x[i+k] - x[i]) / (k/fs)`` with ``k = round(dt*fs)``.

    The last ``k`` samples repeat the final computed difference. The step is
    realized in whole samples, so use :func:`effective_dt` to report the
    spacing actually used.
    """
    k = euler_step(dt, signal.fs)
    x = signal.samples
    if k >= x.size:
        raise StepTooLarge(f"step of {k} samples does not fit a {x.size}-sample signal")
    d = (x[k:] - x[:-k]) * (signal.fs / k)
    return signal.with_samples(np.concatenate([d, np.full(k, d[-1])]))


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return self.nodes.size

    def integrate(self, f, a: float = -1.0, b: float = 1.0) -> float:
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        return half * float(np.dot(self.weights, f(mid + half * self.nodes)))


def _legendre(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """P_n(x) and P_{n-1}(x) by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    if n == 0:
        return p_prev, np.zeros_like(x)
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    return p, p_prev


@lru_cache(maxsize=None)
def _rule_arrays(n: int) -> tuple[tuple, tuple]:
    i = np.arange(1, n + 1)
    # Tricomi's initial guess, descending roots
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        p, p_prev = _legendre(n, x)
        dp = n * (x * p - p_prev) / (x * x - 1.0)
        step = p / dp
        x = x - step
        if np.max(np.abs(step)) < 1e-14:
            break
    p, p_prev = _legendre(n, x)
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    # the roots come in +/- pairs; average each pair to remove rounding asymmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return tuple(x.tolist()), tuple(w.tolist())


def gauss_legendre_rule(n: int) -> QuadratureRule:
    """Nodes and weights of the ``n``-point Gauss-Legendre rule on [-1, 1]."""
    if int(n) != n or not 1 <= n <= MAX_GL_ORDER:
        raise OrderOutOfRange(f"quadrature order must be in 1..{MAX_GL_ORDER}, got {n}")
    nodes, weights = _rule_arrays(int(n))
    x = np.array(nodes)
    w = np.array(weights)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w)


def gl_smooth(
    signal: SampledSignal,
    window: float = DEFAULT_GL_WINDOW,
    n: int = DEFAULT_GL_NODES,
) -> SampledSignal:
    """Sliding quadrature mean over a ``window``-second span centred on each sample.

    The span is mapped onto [-1, 1]; the signal is linearly interpolated at the
    rule's nodes (positions beyond either end clamp to the edge sample) and
    ``out[i] = 0.5 * sum(w_k * f(x_k))``.
    """
    if not window >= 2.0 / signal.fs:
        raise WindowTooSmall(
            f"window {window} s is shorter than two samples at {signal.fs} Hz"
        )
    rule = gauss_legendre_rule(n)
    x = signal.samples
    idx = np.arange(x.size, dtype=float)
    offsets = rule.nodes * (0.5 * window * signal.fs)
    out = np.zeros(x.size)
    for w_k, off in zip(rule.weights, offsets):
        out += w_k * np.interp(idx + off, idx, x)
    return signal.with_samples(0.5 * out)
