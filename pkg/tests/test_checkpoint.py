import struct

import numpy as np
import pytest

from spikestereo.checkpoint import (
    CheckpointError,
    load_checkpoint,
    load_config,
    read_checkpoint,
    save_checkpoint,
    save_config,
)
from spikestereo.network import NetworkConfig, StereoRestorer
from spikestereo.training import AdamW

TINY = dict(channels=(8, 16, 24, 32, 40), T=2, refine_channels=16)


def test_roundtrip_restores_weights_and_outputs(tmp_path):
    model = StereoRestorer(NetworkConfig(**TINY, seed=3))
    path = tmp_path / "m.snir"
    save_checkpoint(path, model, step=7, meta={"note": "x"})
    loaded, info = load_checkpoint(path)
    assert info["step"] == 7 and info["meta"] == {"note": "x"} and info["optimizer"] is None
    assert loaded.cfg == model.cfg
    for (na, a), (nb, b) in zip(model.state_dict().items(), loaded.state_dict().items()):
        assert na == nb
        np.testing.assert_array_equal(a, b)
    x = np.random.default_rng(0).uniform(size=(3, 16, 16)).astype(np.float32)
    model.eval()
    loaded.eval()
    np.testing.assert_array_equal(model(x, x).refined.both.data, loaded(x, x).refined.both.data)


def test_optimizer_state_roundtrip(tmp_path):
    model = StereoRestorer(NetworkConfig(**TINY))
    names, params = zip(*model.named_parameters())
    opt = AdamW(params, names=names)
    for p in params:
        p.grad = np.ones_like(p.data)
    opt.step()
    save_checkpoint(tmp_path / "m.snir", model, 1, opt)
    _, info = load_checkpoint(tmp_path / "m.snir")
    state = opt.state_dict()
    assert set(info["optimizer"]) == set(state)
    np.testing.assert_array_equal(info["optimizer"][f"m.{names[0]}"], state[f"m.{names[0]}"])


def test_save_is_byte_deterministic(tmp_path):
    for name in ("a", "b"):
        save_checkpoint(tmp_path / name, StereoRestorer(NetworkConfig(**TINY)), 0)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert not list(tmp_path.glob("*.tmp"))


def test_layout_header(tmp_path):
    save_checkpoint(tmp_path / "m", StereoRestorer(NetworkConfig(**TINY)), 2)
    raw = (tmp_path / "m").read_bytes()
    assert raw[:4] == b"SNIR"
    version, hlen = struct.unpack("<II", raw[4:12])
    assert version == 1
    header, blobs = read_checkpoint(tmp_path / "m")
    assert header["step"] == 2
    assert all(v.dtype == np.float32 for v in blobs.values())


def test_corrupt_files_raise(tmp_path):
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "missing.snir")
    (tmp_path / "bad").write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(CheckpointError, match="magic"):
        read_checkpoint(tmp_path / "bad")
    save_checkpoint(tmp_path / "m", StereoRestorer(NetworkConfig(**TINY)), 0)
    raw = (tmp_path / "m").read_bytes()
    (tmp_path / "trunc").write_bytes(raw[:-10])
    with pytest.raises(CheckpointError, match="truncated"):
        read_checkpoint(tmp_path / "trunc")
    (tmp_path / "extra").write_bytes(raw + b"\0")
    with pytest.raises(CheckpointError, match="trailing"):
        read_checkpoint(tmp_path / "extra")


def test_config_mismatch_is_reported(tmp_path):
    # weights of a wider model saved under the tiny config no longer fit
    other = StereoRestorer(NetworkConfig(channels=(8, 16, 24, 32, 48), T=2, refine_channels=16))
    other.cfg = NetworkConfig(**TINY)
    save_checkpoint(tmp_path / "n", other, 0)
    with pytest.raises(CheckpointError, match="does not match"):
        load_checkpoint(tmp_path / "n")


def test_config_files(tmp_path):
    save_config(tmp_path / "c.json", {"b": 1, "a": [1, 2]})
    assert load_config(tmp_path / "c.json") == {"a": [1, 2], "b": 1}
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ValueError):
        load_config(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[1]")
    with pytest.raises(ValueError):
        load_config(tmp_path / "list.json")
