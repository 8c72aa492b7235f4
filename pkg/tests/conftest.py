import numpy as np
import pytest

from ecgseg.signal import SampledSignal
from ecgseg.synth import GaussianBeatConfig, synth_beat


def tone(freq, seconds=4.0, fs=250.0, amplitude=1.0, fn=np.cos):
    t = np.arange(int(round(seconds * fs))) / fs
    return SampledSignal(amplitude * fn(2 * np.pi * freq * t), fs)


@pytest.fixture
def default_beat():
    """One noise-free beat with the default morphology."""
    return synth_beat(GaussianBeatConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_VERDICTS = pytest.StashKey[list]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = marker.args
    details = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    line = f"{'PASS' if report.passed else 'FAIL'} criterion {number}: {title}" + (f" [{details}]" if details else "")
    item.config.stash.setdefault(_VERDICTS, []).append((number, line))
    reporter = item.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is not None:
        reporter.write_line("")
        reporter.write_line(line)


def pytest_terminal_summary(terminalreporter, config):
    verdicts = config.stash.get(_VERDICTS, [])
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(verdicts):
            terminalreporter.write_line(line)
