import numpy as np
import pytest

from provsentry import nn


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    entries = {
        "pretrain/layer0/wq": rng.normal(size=(16, 4)),
        "intent/in_proj/w": rng.normal(size=(8, 8)),
        "detect/theta": np.array([[1.5]]),
        "unicode/имя": rng.normal(size=(2, 3)),
    }
    path = tmp_path / "model.sntn"
    nn.save_checkpoint(path, entries)
    loaded = nn.load_checkpoint(path)
    assert list(loaded) == list(entries)
    for name, arr in entries.items():
        assert loaded[name].shape == arr.shape
        assert loaded[name].tobytes() == arr.tobytes()


def test_one_dim_saved_as_row(tmp_path):
    path = tmp_path / "v.sntn"
    nn.save_checkpoint(path, {"v": np.arange(5.0)})
    assert nn.load_checkpoint(path)["v"].shape == (1, 5)


def test_header(tmp_path):
    path = tmp_path / "m.sntn"
    nn.save_checkpoint(path, {"a": np.zeros((1, 1))})
    raw = path.read_bytes()
    assert raw[:4] == b"SNTN"


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.sntn"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(nn.CheckpointError, match="magic"):
        nn.load_checkpoint(path)


def test_truncated_rejected(tmp_path):
    path = tmp_path / "m.sntn"
    nn.save_checkpoint(path, {"a": np.ones((2, 2))})
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(nn.CheckpointError, match="trailing"):
        nn.load_checkpoint(path)
