import struct

import numpy as np
import pytest

from ecgseg.errors import CheckpointError, IoFailure
from ecgseg.neural import checkpoint
from ecgseg.neural.model import ModelParams, ModelSpec, model_forward


@pytest.fixture(scope="module")
def full():
    return ModelParams.initialize(seed=3)


@pytest.fixture
def tiny():
    p = ModelParams.initialize(ModelSpec.tiny(), seed=1)
    p.buffers["bn2.running_var"][:] = [0.5, 2.0, 3.0]
    return p


def test_round_trip_is_bit_exact(full, tmp_path):
    checkpoint.save(full, tmp_path / "m.ckpt")
    back = checkpoint.load(tmp_path / "m.ckpt")
    assert back.spec == full.spec
    assert back.count() == 520_322
    for k in full.weights:
        assert back.weights[k].tobytes() == full.weights[k].tobytes()
    for k in full.buffers:
        assert back.buffers[k].tobytes() == full.buffers[k].tobytes()


def test_same_predictions(tiny):
    back = checkpoint.loads(checkpoint.dumps(tiny), expect_total=None)
    x = np.random.default_rng(0).normal(size=25)
    assert np.array_equal(model_forward(back, x), model_forward(tiny, x))


def test_header_layout(tiny):
    data = checkpoint.dumps(tiny)
    assert data[:8] == b"ECGSEGCK"
    version, spec_len = struct.unpack("<II", data[8:16])
    assert version == 1
    assert b'"hidden": 4' in data[16 : 16 + spec_len]
    (n,) = struct.unpack("<I", data[16 + spec_len : 20 + spec_len])
    assert n == len(tiny.weights) + len(tiny.buffers)
    pos = 20 + spec_len
    (name_len,) = struct.unpack("<I", data[pos : pos + 4])
    assert data[pos + 4 : pos + 4 + name_len] == b"conv1.weight"
    pos += 4 + name_len
    (rank,) = struct.unpack("<I", data[pos : pos + 4])
    dims = struct.unpack("<3Q", data[pos + 4 : pos + 28])
    assert rank == 3 and dims == (2, 1, 5)
    first = np.frombuffer(data[pos + 28 : pos + 28 + 80], dtype="<f8")
    np.testing.assert_array_equal(first, tiny.weights["conv1.weight"].reshape(-1))


def test_total_is_validated(tiny):
    with pytest.raises(CheckpointError, match="520322"):
        checkpoint.loads(checkpoint.dumps(tiny))


def test_bad_magic(tiny):
    data = checkpoint.dumps(tiny)
    with pytest.raises(CheckpointError, match="magic"):
        checkpoint.loads(b"X" + data[1:], expect_total=None)


def test_bad_version(tiny):
    data = bytearray(checkpoint.dumps(tiny))
    data[8:12] = struct.pack("<I", 2)
    with pytest.raises(CheckpointError, match="version"):
        checkpoint.loads(bytes(data), expect_total=None)


@pytest.mark.parametrize("cut", [4, 20, 200, -1])
def test_truncated(tiny, cut):
    data = checkpoint.dumps(tiny)
    with pytest.raises(CheckpointError):
        checkpoint.loads(data[:cut], expect_total=None)


def test_trailing_bytes(tiny):
    with pytest.raises(CheckpointError, match="trailing"):
        checkpoint.loads(checkpoint.dumps(tiny) + b"\0", expect_total=None)


def test_missing_tensor(tiny):
    del tiny.weights["head.bias"]
    with pytest.raises(CheckpointError, match="head.bias"):
        checkpoint.loads(checkpoint.dumps(tiny), expect_total=None)


def test_extra_tensor(tiny):
    tiny.weights["extra"] = np.zeros(3)
    with pytest.raises(CheckpointError, match="unexpected"):
        checkpoint.loads(checkpoint.dumps(tiny), expect_total=None)


def test_wrong_shape(tiny):
    tiny.weights["head.weight"] = np.zeros((2, 9))
    with pytest.raises(CheckpointError, match="shape"):
        checkpoint.loads(checkpoint.dumps(tiny), expect_total=None)


def test_nonpositive_running_var(tiny):
    tiny.buffers["bn1.running_var"][0] = 0.0
    with pytest.raises(CheckpointError, match="running"):
        checkpoint.loads(checkpoint.dumps(tiny), expect_total=None)


def test_float32_params_saved_as_float64(tiny):
    back = checkpoint.loads(checkpoint.dumps(tiny.astype(np.float32)), expect_total=None)
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back.weights["conv2.weight"], tiny.weights["conv2.weight"].astype(np.float32))


def test_io_errors(tiny, tmp_path):
    with pytest.raises(IoFailure):
        checkpoint.load(tmp_path / "absent.ckpt")
    with pytest.raises(IoFailure):
        checkpoint.save(tiny, tmp_path / "no" / "dir" / "m.ckpt")
