import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ecgseg.errors import ClassAbsent, EmptyBand, ResolutionMismatch, ZeroSpectrum
from ecgseg.signal import LabelMask, SampledSignal, WaveClass
from ecgseg.spectral import (
    Spectrum,
    dft,
    dominant_frequency,
    occurrences,
    segment_spectra,
    spectral_similarity,
    write_spectrum_csv,
)
from ecgseg.synth import GaussianBeatConfig, synth_beat

from conftest import tone


def dft_matrix_mags(x, n_fft):
    """Independent one-sided DFT magnitudes via the explicit sum."""
    x = np.zeros(n_fft) if len(x) == 0 else np.pad(np.asarray(x, float)[:n_fft], (0, max(0, n_fft - len(x))))
    n = np.arange(n_fft)
    k = np.arange(n_fft // 2 + 1)[:, None]
    return np.abs(np.exp(-2j * np.pi * k * n / n_fft) @ x)


def two_sided_energy(spec):
    m = spec.mags
    inner = m[1:-1] if spec.n_fft % 2 == 0 else m[1:]
    edge = m[0] ** 2 + (m[-1] ** 2 if spec.n_fft % 2 == 0 else 0.0)
    return edge + 2 * np.sum(inner**2)


class TestDft:
    def test_dc_impulse(self):
        s = dft(SampledSignal(np.ones(512), 250), 512)
        assert s.mags[0] == pytest.approx(512, abs=1e-9)
        assert np.all(s.mags[1:] < 1e-9)

    def test_on_bin_cosine(self):
        f0 = 20 * 250 / 512
        s = dft(tone(f0, seconds=512 / 250), 512)
        k = int(np.argmax(s.mags))
        assert s.freqs[k] == f0
        assert s.mags[k] == pytest.approx(256, abs=1e-6)
        others = np.delete(s.mags, k)
        assert np.all(others < 1e-6)

    def test_grid(self):
        s = dft(SampledSignal(np.arange(10.0), 250), 512)
        assert s.freqs.size == 257
        assert s.freqs[0] == 0 and s.freqs[-1] == 125
        assert np.all(np.diff(s.freqs) > 0)

    def test_matches_explicit_sum(self):
        x = np.random.default_rng(7).normal(size=300)
        s = dft(SampledSignal(x, 250), 128)  # truncation to the prefix
        np.testing.assert_allclose(s.mags, dft_matrix_mags(x[:128], 128), atol=1e-9)
        s = dft(SampledSignal(x, 250), 512)  # zero padding
        np.testing.assert_allclose(s.mags, dft_matrix_mags(x, 512), atol=1e-9)

    def test_parseval_100_signals(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            x = rng.normal(size=512) * rng.uniform(0.01, 100)
            s = dft(SampledSignal(x, 250), 512)
            energy = np.sum(x**2)
            assert abs(energy - two_sided_energy(s) / 512) <= 1e-9 * energy

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(np.float64, st.integers(2, 400), elements=st.floats(-1e3, 1e3)),
        st.sampled_from([16, 64, 257, 512]),
    )
    def test_parseval_property(self, x, n_fft):
        s = dft(SampledSignal(x, 250), n_fft)
        seg = x[:n_fft]
        energy = np.sum(seg**2)
        assert abs(energy - two_sided_energy(s) / n_fft) <= 1e-9 * max(energy, 1e-300) + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, 200, elements=st.floats(-10, 10)), st.floats(-100, 100))
    def test_magnitude_scaling(self, x, a):
        base = dft(SampledSignal(x, 250)).mags
        scaled = dft(SampledSignal(a * x, 250)).mags
        np.testing.assert_allclose(scaled, abs(a) * base, atol=1e-9 * (1 + abs(a) * base.max()))

    def test_bad_nfft(self):
        with pytest.raises(ValueError):
            dft(SampledSignal([1.0], 250), 1)


class TestDominantFrequency:
    def test_single_peak(self):
        s = dft(tone(10.0, seconds=2.0), 500)
        assert dominant_frequency(s, (0, 125)) == 10.0

    def test_tie_goes_low(self):
        s = Spectrum(np.linspace(0, 125, 257), np.ones(257), 250, 512)
        assert dominant_frequency(s, (0, 125)) == 0.0
        assert dominant_frequency(s, (10, 125)) == pytest.approx(10.25390625)

    def test_empty_band(self):
        s = dft(tone(10.0), 512)
        with pytest.raises(EmptyBand):
            dominant_frequency(s, (10.0, 10.1))

    def test_qrs_dominates_default_beat(self, default_beat):
        sig, mask = default_beat
        spectra = segment_spectra(sig, mask)
        f = {w: dominant_frequency(s) for w, s in spectra.items()}
        assert f[WaveClass.QRS] > f[WaveClass.P]
        assert f[WaveClass.QRS] > f[WaveClass.T]

    def test_dominant_frequencies_against_explicit_dft(self, default_beat):
        sig, mask = default_beat
        spectra = segment_spectra(sig, mask)
        freqs = np.arange(257) * 250 / 512
        for wave in WaveClass.waves():
            idx = np.flatnonzero(mask.classes == int(wave))
            mags = dft_matrix_mags(sig.samples[idx], 512)
            assert dominant_frequency(spectra[wave]) == freqs[int(np.argmax(mags))]
        # frozen from the explicit-sum oracle above
        assert dominant_frequency(spectra[WaveClass.QRS]) == pytest.approx(6.34765625)
        assert dominant_frequency(spectra[WaveClass.P]) == 0.0
        assert dominant_frequency(spectra[WaveClass.T]) == 0.0


class TestSimilarity:
    @pytest.fixture
    def spec(self, rng):
        return dft(SampledSignal(rng.normal(size=512), 250))

    def test_self(self, spec):
        assert abs(spectral_similarity(spec, spec) - 1) <= 1e-12

    def test_scale(self, spec):
        doubled = Spectrum(spec.freqs, 2 * spec.mags, spec.fs, spec.n_fft)
        assert abs(spectral_similarity(spec, doubled) - 1) <= 1e-12

    def test_orthogonal(self):
        f = np.linspace(0, 125, 257)
        a = np.zeros(257)
        b = np.zeros(257)
        a[3] = 1
        b[40] = 5
        assert spectral_similarity(Spectrum(f, a, 250, 512), Spectrum(f, b, 250, 512)) == 0.0

    def test_zero(self, spec):
        z = Spectrum(spec.freqs, np.zeros_like(spec.mags), 250, 512)
        with pytest.raises(ZeroSpectrum):
            spectral_similarity(spec, z)

    def test_mismatch(self, spec):
        other = dft(SampledSignal(np.ones(10), 250), 256)
        with pytest.raises(ResolutionMismatch):
            spectral_similarity(spec, other)


class TestSegmentSpectra:
    def test_all_background(self):
        sig = SampledSignal(np.ones(100), 250)
        mask = LabelMask(np.zeros(100))
        for wave in WaveClass.waves():
            with pytest.raises(ClassAbsent):
                segment_spectra(sig, mask, waves=(wave,))

    def test_single_beat_three_nonzero(self, default_beat):
        spectra = segment_spectra(*default_beat)
        assert set(spectra) == set(WaveClass.waves())
        assert all(np.any(s.mags > 0) for s in spectra.values())

    def test_identical_beats_average(self, default_beat):
        one = segment_spectra(*default_beat)
        two = segment_spectra(*synth_beat(GaussianBeatConfig(n_beats=2)))
        for w in WaveClass.waves():
            np.testing.assert_allclose(two[w].mags, one[w].mags, atol=1e-9)

    def test_occurrences_half_open(self):
        m = LabelMask([0, 1, 1, 0, 1, 2, 2, 1])
        assert occurrences(m, WaveClass.P) == [(1, 3), (4, 5), (7, 8)]
        assert occurrences(m, WaveClass.QRS) == [(5, 7)]
        assert occurrences(m, WaveClass.T) == []

    def test_csv(self, tmp_path):
        s = dft(SampledSignal(np.ones(8), 250), 4)
        path = tmp_path / "s.csv"
        write_spectrum_csv(s, path)
        assert path.read_text().splitlines() == ["freq_hz,magnitude", "0,4", "62.5,0", "125,0"]
