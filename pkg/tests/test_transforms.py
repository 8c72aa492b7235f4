import numpy as np
import pytest
import scipy.signal
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ecgseg.errors import EmptySignal, OrderOutOfRange, StepTooLarge, WindowTooSmall
from ecgseg.signal import SampledSignal
from ecgseg.transforms import (
    effective_dt,
    euler_diff,
    euler_step,
    gauss_legendre_rule,
    gl_smooth,
    hilbert,
)

from conftest import tone


def interior(x, frac=0.05):
    m = int(len(x) * frac)
    return x[m : len(x) - m]


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


class TestHilbert:
    @pytest.mark.parametrize("f", [2.0, 5.0, 10.0, 25.0])
    def test_pair_identity(self, f):
        a = hilbert(tone(f))
        assert rms(interior(a.envelope) - 1.0) < 1e-3
        assert rms(interior(a.imag) - interior(tone(f, fn=np.sin).samples)) < 1e-3

    def test_half_amplitude(self):
        a = hilbert(tone(5.0, amplitude=0.5))
        np.testing.assert_allclose(interior(a.envelope), 0.5, atol=1e-3)

    @pytest.mark.parametrize("amp", [-3.0, -0.2, 0.7, 12.0])
    def test_envelope_is_abs_amplitude(self, amp):
        a = hilbert(tone(7.0, amplitude=amp))
        assert np.max(np.abs(interior(a.envelope) - abs(amp))) < 1e-3

    @pytest.mark.parametrize("n", [4, 5, 100, 257])
    def test_matches_scipy(self, n):
        x = np.random.default_rng(n).normal(size=n)
        ours = hilbert(SampledSignal(x, 250))
        ref = scipy.signal.hilbert(x)
        np.testing.assert_allclose(ours.analytic, ref, atol=1e-12)
        np.testing.assert_allclose(ours.analytic.real, x, atol=1e-12)

    def test_invariants(self):
        x = SampledSignal(np.random.default_rng(0).normal(size=333), 250)
        a = hilbert(x)
        assert len(a) == len(x)
        assert np.all(a.envelope >= 0)
        assert np.all(a.phase > -np.pi) and np.all(a.phase <= np.pi)
        np.testing.assert_allclose(a.envelope * np.cos(a.phase), x.samples, atol=1e-12)

    def test_too_short(self):
        with pytest.raises(EmptySignal):
            hilbert(SampledSignal([1.0, 2.0, 3.0], 250))


class TestEuler:
    def test_ramp(self):
        fs = 250.0
        x = SampledSignal(2 * np.arange(100) / fs, fs)
        np.testing.assert_allclose(euler_diff(x).samples, 2.0, rtol=1e-12)

    def test_constant(self):
        assert np.all(euler_diff(SampledSignal(np.full(50, 3.3), 250)).samples == 0)

    def test_sine_against_analytic_derivative(self):
        f, fs = 2.0, 250.0
        t = np.arange(1000) / fs
        out = euler_diff(SampledSignal(np.sin(2 * np.pi * f * t), fs), dt=1 / fs).samples
        exact = 2 * np.pi * f * np.cos(2 * np.pi * f * t)
        assert np.max(np.abs(out[:-1] - exact[:-1])) <= 0.05 * 2 * np.pi * f

    def test_default_step_rounds_to_one_sample(self):
        assert euler_step(0.005, 250) == 1
        assert effective_dt(0.005, 250) == 0.004
        assert euler_step(0.006, 250) == 2  # 1.5 rounds up
        assert euler_step(0.005, 1000) == 5

    def test_tail_is_constant_extension(self):
        x = SampledSignal([0.0, 1.0, 4.0, 9.0, 16.0], 1.0)
        out = euler_diff(x, dt=2.0).samples
        np.testing.assert_array_equal(out, [2.0, 4.0, 6.0, 6.0, 6.0])

    def test_step_too_large(self):
        with pytest.raises(StepTooLarge):
            euler_diff(SampledSignal(np.zeros(3), 250), dt=3 / 250)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            euler_diff(SampledSignal(np.zeros(3), 250), dt=0)

    @settings(max_examples=100, deadline=None)
    @given(
        arrays(np.float64, 64, elements=st.floats(-100, 100)),
        arrays(np.float64, 64, elements=st.floats(-100, 100)),
        st.floats(-10, 10),
        st.floats(-10, 10),
    )
    def test_linear(self, x, y, a, b):
        lhs = euler_diff(SampledSignal(a * x + b * y, 250)).samples
        rhs = a * euler_diff(SampledSignal(x, 250)).samples + b * euler_diff(SampledSignal(y, 250)).samples
        scale = 250 * (np.abs(a * x).max() + np.abs(b * y).max() + 1)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


class TestGaussLegendre:
    def test_midpoint(self):
        r = gauss_legendre_rule(1)
        assert r.nodes.tolist() == [0.0] and r.weights.tolist() == [2.0]

    def test_two_point(self):
        r = gauss_legendre_rule(2)
        np.testing.assert_allclose(r.nodes, [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
        assert r.nodes[1] == pytest.approx(0.5773502692, abs=1e-10)
        np.testing.assert_allclose(r.weights, [1.0, 1.0], atol=1e-15)

    def test_five_point_degree_eight(self):
        r = gauss_legendre_rule(5)
        assert abs(r.integrate(lambda x: x**8) - 2 / 9) <= 1e-12

    @pytest.mark.parametrize("n", range(1, 11))
    def test_exactness(self, n):
        r = gauss_legendre_rule(n)
        for d in range(2 * n):
            exact = 0.0 if d % 2 else 2.0 / (d + 1)
            assert abs(r.integrate(lambda x: x**d) - exact) <= 1e-12, (n, d)

    def test_not_exact_beyond_degree(self):
        r = gauss_legendre_rule(3)
        assert abs(r.integrate(lambda x: x**6) - 2 / 7) > 1e-3

    @pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 17, 40, 64])
    def test_matches_numpy_leggauss(self, n):
        r = gauss_legendre_rule(n)
        x, w = np.polynomial.legendre.leggauss(n)
        np.testing.assert_allclose(r.nodes, x, atol=1e-14)
        np.testing.assert_allclose(r.weights, w, atol=1e-14)

    @pytest.mark.parametrize("n", range(1, 65))
    def test_rule_invariants(self, n):
        r = gauss_legendre_rule(n)
        assert r.order == n
        assert abs(r.weights.sum() - 2) <= 1e-12
        assert np.all(r.weights > 0)
        assert np.all(np.diff(r.nodes) > 0)
        assert np.all(np.abs(r.nodes) < 1)
        np.testing.assert_allclose(r.nodes, -r.nodes[::-1], atol=1e-12)

    @pytest.mark.parametrize("n", [0, 65, -1, 2.5])
    def test_out_of_range(self, n):
        with pytest.raises(OrderOutOfRange):
            gauss_legendre_rule(n)

    def test_interval_mapping(self):
        r = gauss_legendre_rule(4)
        assert r.integrate(np.exp, 0.0, 1.0) == pytest.approx(np.e - 1, abs=1e-9)


class TestGlSmooth:
    def test_constant(self):
        out = gl_smooth(SampledSignal(np.full(200, -2.5), 250), 0.04, 5).samples
        assert np.max(np.abs(out + 2.5)) <= 1e-12

    def test_interior_ramp(self):
        x = 0.3 * np.arange(300) - 7
        out = gl_smooth(SampledSignal(x, 250), 0.04, 5).samples
        half = int(np.ceil(0.02 * 250))
        assert np.max(np.abs(out[half:-half] - x[half:-half])) <= 1e-9

    def test_variance_reduction_monte_carlo(self):
        ratios = []
        for seed in range(100):
            x = np.random.default_rng(seed).normal(size=1000)
            out = gl_smooth(SampledSignal(x, 250), 0.04, 5).samples
            assert out.var() < x.var()
            ratios.append(out.var() / x.var())
        assert np.mean(ratios) < 0.5

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, 120, elements=st.floats(-10, 10)), st.integers(1, 20))
    def test_shift_equivariant(self, x, shift):
        y = np.concatenate([np.zeros(shift), x])[: x.size]
        a = gl_smooth(SampledSignal(x, 250)).samples
        b = gl_smooth(SampledSignal(y, 250)).samples
        margin = int(np.ceil(0.02 * 250)) + 1
        lo, hi = margin + shift, x.size - margin
        np.testing.assert_allclose(b[lo:hi], a[lo - shift : hi - shift], atol=1e-9)

    def test_window_too_small(self):
        with pytest.raises(WindowTooSmall):
            gl_smooth(SampledSignal(np.zeros(10), 250), 1 / 250, 5)

    def test_matches_direct_quadrature(self):
        # out[i] = 0.5 * sum_k w_k * x(t_i + x_k * w/2), linear interpolation
        x = np.random.default_rng(3).normal(size=50)
        fs, win, n = 100.0, 0.07, 4
        out = gl_smooth(SampledSignal(x, fs), win, n).samples
        nodes, weights = np.polynomial.legendre.leggauss(n)
        for i in range(x.size):
            acc = 0.0
            for xk, wk in zip(nodes, weights):
                pos = min(max(i + xk * win / 2 * fs, 0), x.size - 1)
                j = min(int(np.floor(pos)), x.size - 2)
                frac = pos - j
                acc += wk * ((1 - frac) * x[j] + frac * x[j + 1])
            assert out[i] == pytest.approx(0.5 * acc, abs=1e-12)
