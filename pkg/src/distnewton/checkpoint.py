"""Model files: a JSON header followed by the flat parameter vector.

Layout: the 4-byte magic ``DNCK``, the header length as ``<Q``, the UTF-8
JSON header, then the parameters as little-endian float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .network import NetConfig

MAGIC = b"DNCK"
_LEN = struct.Struct("<Q")


@dataclass
class Checkpoint:
    net: NetConfig
    theta: np.ndarray
    iteration: int = 0
    lam: float = float("nan")
    meta: dict = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint):
    theta = np.asarray(ckpt.theta, dtype="<f8")
    if theta.shape != (ckpt.net.n_params,):
        raise ConfigurationError(f"parameter vector of shape {theta.shape} does not fit net {ckpt.net}")
    header = {
        "layer_sizes": list(ckpt.net.layer_sizes),
        "n_params": ckpt.net.n_params,
        "iteration": int(ckpt.iteration),
        "lambda": float(ckpt.lam),
        "meta": ckpt.meta,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_LEN.pack(len(blob)))
        fh.write(blob)
        fh.write(theta.tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ConfigurationError(f"{path} is not a checkpoint file")
    (n,) = _LEN.unpack_from(data, 4)
    start = 4 + _LEN.size
    header = json.loads(data[start:start + n].decode("utf-8"))
    net = NetConfig(header["layer_sizes"])
    theta = np.frombuffer(data[start + n:], dtype="<f8").astype(np.float64)
    if theta.size != net.n_params or header.get("n_params") != net.n_params:
        raise ConfigurationError(
            f"checkpoint holds {theta.size} parameters but net {net} needs {net.n_params}")
    return Checkpoint(net, theta, header.get("iteration", 0), header.get("lambda", float("nan")),
                      header.get("meta", {}))
