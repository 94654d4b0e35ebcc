import struct

import numpy as np
import pytest

from distnewton.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from distnewton.errors import ConfigurationError
from distnewton.network import NetConfig


def test_round_trip(tmp_path):
    net = NetConfig([3, 4, 2])
    theta = np.random.default_rng(0).normal(size=net.n_params)
    p = tmp_path / "m.ckpt"
    save_checkpoint(p, Checkpoint(net, theta, iteration=7, lam=0.25, meta={"split": "1-2-1"}))
    ck = load_checkpoint(p)
    assert ck.net == net and ck.iteration == 7 and ck.lam == 0.25 and ck.meta == {"split": "1-2-1"}
    np.testing.assert_array_equal(ck.theta, theta)


def test_layout_is_little_endian_after_header(tmp_path):
    net = NetConfig([1, 1])
    p = tmp_path / "m.ckpt"
    save_checkpoint(p, Checkpoint(net, np.array([1.5, -2.0])))
    data = p.read_bytes()
    assert data[:4] == b"DNCK"
    (n,) = struct.unpack_from("<Q", data, 4)
    assert np.frombuffer(data[12 + n:], dtype="<f8").tolist() == [1.5, -2.0]


def test_mismatches_are_rejected(tmp_path):
    net = NetConfig([2, 2])
    with pytest.raises(ConfigurationError):
        save_checkpoint(tmp_path / "a", Checkpoint(net, np.zeros(3)))
    p = tmp_path / "b"
    save_checkpoint(p, Checkpoint(net, np.zeros(net.n_params)))
    p.write_bytes(p.read_bytes() + b"\0" * 8)
    with pytest.raises(ConfigurationError):
        load_checkpoint(p)
    (tmp_path / "c").write_bytes(b"nope")
    with pytest.raises(ConfigurationError):
        load_checkpoint(tmp_path / "c")
