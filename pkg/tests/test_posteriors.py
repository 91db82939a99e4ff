import io

import numpy as np
import pytest

from graphtransducer import (
    PosteriorTensor,
    load_posterior_tensor,
    read_tensor,
    write_tensor,
)


def test_logprob_rows_are_normalized():
    rng = np.random.default_rng(0)
    post = PosteriorTensor(rng.normal(0, 3, (5, 2, 4)))
    totals = np.exp(post.logprobs).sum(axis=-1)
    assert np.abs(totals - 1.0).max() < 1e-9


def test_normalizing_logprobs_is_idempotent():
    rng = np.random.default_rng(1)
    post = PosteriorTensor(rng.normal(0, 1, (3, 2, 3)))
    again = PosteriorTensor(post.logprobs)
    assert np.allclose(again.logprobs, post.logprobs, atol=1e-12)


@pytest.mark.parametrize("shape", [(2,), (3, 3), (1, 1, 1, 1)])
def test_rejects_wrong_rank(shape):
    with pytest.raises(ValueError, match="shape"):
        PosteriorTensor(np.zeros(shape))


def test_rejects_nonfinite_logits():
    bad = np.zeros((2, 1, 2))
    bad[0, 0, 0] = np.inf
    with pytest.raises(ValueError, match="finite"):
        PosteriorTensor(bad)


@pytest.mark.parametrize("shape", [(4,), (3, 2), (2, 3, 4)])
def test_tensor_file_round_trip(tmp_path, shape):
    rng = np.random.default_rng(2)
    arr = rng.normal(0, 1, shape)
    path = tmp_path / "t.bin"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.shape == arr.shape
    assert np.array_equal(back, arr)


def test_tensor_round_trip_through_stream():
    buf = io.BytesIO()
    a = np.arange(6, dtype=float).reshape(2, 3)
    b = np.arange(4, dtype=float)
    write_tensor(buf, a)
    write_tensor(buf, b)
    buf.seek(0)
    assert np.array_equal(read_tensor(buf), a)
    assert np.array_equal(read_tensor(buf), b)


def test_read_rejects_bad_magic():
    with pytest.raises(ValueError, match="magic"):
        read_tensor(io.BytesIO(b"NOPE" + b"\x00" * 20))


def test_read_rejects_truncated_payload():
    buf = io.BytesIO()
    write_tensor(buf, np.ones((2, 2)))
    data = buf.getvalue()[:-8]
    with pytest.raises(ValueError, match="truncated"):
        read_tensor(io.BytesIO(data))


def test_load_posterior_tensor_checks_rank(tmp_path):
    path = tmp_path / "t.bin"
    write_tensor(path, np.zeros((2, 2)))
    with pytest.raises(ValueError, match="rank 3"):
        load_posterior_tensor(path)
    write_tensor(path, np.zeros((2, 2, 2)))
    assert load_posterior_tensor(path).num_frames == 2


def test_format_layout_is_exactly_as_documented(tmp_path):
    path = tmp_path / "t.bin"
    write_tensor(path, np.array([[1.0, 2.0], [3.0, 4.0]]))
    raw = path.read_bytes()
    assert raw[:4] == b"GTCT"
    assert int.from_bytes(raw[4:8], "little") == 1  # version
    assert int.from_bytes(raw[8:12], "little") == 2  # rank
    assert int.from_bytes(raw[12:16], "little") == 2
    assert int.from_bytes(raw[16:20], "little") == 2
    assert np.frombuffer(raw[20:], dtype="<f8").tolist() == [1.0, 2.0, 3.0, 4.0]
