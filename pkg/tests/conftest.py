import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from distnewton.dist import Topology, run_spmd
from distnewton.dist.newton import NewtonHyper, build_worker
from distnewton.network import Batch, NetConfig
from distnewton.partition import SplitStructure, global_indices

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_problem(sizes, l, seed, scale=0.7, binary=False):
    """Random net, parameter vector and labelled batch."""
    rs = np.random.default_rng(seed)
    net = NetConfig(sizes)
    theta = rs.normal(size=net.n_params) * scale
    X = rs.normal(size=(l, sizes[0]))
    if binary or sizes[-1] == 1:
        Y = np.where(rs.random(l) < 0.5, -1.0, 1.0)[:, None]
    else:
        Y = np.eye(sizes[-1])[rs.integers(0, sizes[-1], l)]
    return net, theta, Batch(X, Y)


def run_workers(net, split, batch, theta, body, C=1.0, chunks=1, mode="inproc", test_features=None):
    """Run ``body(worker)`` on every partition; returns (topology, results)."""
    if isinstance(split, str):
        split = SplitStructure.parse(split)
    topo = Topology(net, split)
    hyper = NewtonHyper(C=C, chunks=chunks)

    def program(rank, comm):
        spec = topo.partitions[rank]
        w = build_worker(topo, spec, comm, batch, hyper, theta[global_indices(net, spec)], test_features)
        return body(w)

    return topo, run_spmd(topo.size, program, mode)


def assemble(net, topo, pieces):
    full = np.zeros(net.n_params)
    for spec, piece in zip(topo.partitions, pieces):
        full[global_indices(net, spec)] = piece
    return full


# (layer sizes, split) pairs exercised by the distributed equivalence tests
CONFIGS = [
    ((4, 3, 2), "1-1-1"),
    ((4, 3, 2), "2-3-2"),
    ((6, 5, 5, 3), "1-1-1-1"),
    ((6, 5, 5, 3), "2-2-3-2"),
    ((6, 5, 5, 3), "3-1-2-3"),
    ((5, 7, 1), "2-3-1"),
    ((3, 4, 4, 4, 2), "1-2-2-2-1"),
    ((8, 6, 4), "4-3-2"),
    ((2, 3), "2-3"),
    ((7, 9, 5, 4), "3-4-2-2"),
    ((16, 20, 20, 10), "2-2-2-1"),
]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
