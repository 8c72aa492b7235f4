import numpy as np
import pytest

from ecgseg.pipeline import METHODS, PreprocessConfig, apply_method, prepare
from ecgseg.signal import SampledSignal
from ecgseg.synth import GaussianBeatConfig, synth_beat
from ecgseg.transforms import hilbert


@pytest.fixture
def record():
    return synth_beat(GaussianBeatConfig(n_beats=4, noise_std=0.02, seed=1))[0]


@pytest.mark.parametrize("method", METHODS)
def test_prepare_is_normalized(record, method):
    out = prepare(record, PreprocessConfig(method=method))
    assert len(out) == len(record) and out.fs == 250
    assert abs(out.samples.mean()) < 1e-9 and abs(out.samples.std() - 1) < 1e-9


def test_prepare_decimates():
    sig, _ = synth_beat(GaussianBeatConfig(n_beats=2, fs=500))
    assert len(prepare(sig, PreprocessConfig())) == len(sig) // 2


def test_hilbert_feeds_envelope(record):
    out = apply_method(record, PreprocessConfig(method="hilbert"))
    np.testing.assert_array_equal(out.samples, hilbert(record).envelope)


def test_raw_is_identity(record):
    assert apply_method(record, PreprocessConfig()) is record


def test_gl_constant_identity():
    x = SampledSignal(np.full(100, 0.7), 250)
    out = apply_method(x, PreprocessConfig(method="gauss-legendre", gl_nodes=5, gl_window=0.04))
    assert np.max(np.abs(out.samples - 0.7)) <= 1e-12


def test_unknown_method():
    with pytest.raises(ValueError):
        PreprocessConfig(method="wavelet")


@pytest.mark.parametrize(
    "method,text",
    [
        ("raw", "-"),
        ("euler", "dt=0.004 s (requested 0.005 s)"),
        ("gauss-legendre", "n=5 nodes, window=0.04 s"),
    ],
)
def test_main_parameter(method, text):
    assert PreprocessConfig(method=method).main_parameter(250) == text
