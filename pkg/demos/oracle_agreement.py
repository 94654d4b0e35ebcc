"""Check the distributed passes against the single-node reference code.

A small random network is split four ways. For each split the workers
compute f and the gradient, then Gauss-Newton products from their stored
Jacobian factors. Everything is compared with dense single-node results.

Run: python demos/oracle_agreement.py
"""

import numpy as np

from distnewton.dist import NewtonHyper, Topology, gnv_full, run_spmd
from distnewton.dist.newton import build_worker
from distnewton.network import Batch, NetConfig, Theta, gauss_newton_ref, gradient_ref, objective_ref
from distnewton.partition import SplitStructure, global_indices

rs = np.random.default_rng(0)
net = NetConfig([6, 7, 5, 3])
theta = rs.normal(size=net.n_params)
data = Batch(rs.normal(size=(40, 6)), np.eye(3)[rs.integers(0, 3, 40)])
C = 40.0
v = rs.normal(size=net.n_params)
T = Theta.unflatten(net, theta)
G = gauss_newton_ref(T, data.features, C)

for text in ("1-1-1-1", "2-2-2-1", "3-3-2-3", "6-7-5-3"):
    topo = Topology(net, SplitStructure.parse(text))
    hyper = NewtonHyper(C=C)

    def program(rank, comm):
        spec = topo.partitions[rank]
        w = build_worker(topo, spec, comm, data, hyper, theta[global_indices(net, spec)])
        g, f = w.gradient()
        factors = w.jacobian_factors(np.arange(len(data)))
        return f, g, gnv_full(comm, topo.world, v[w.idx], factors, C)

    out = run_spmd(topo.size, program)
    g = np.zeros(net.n_params)
    Gv = np.zeros(net.n_params)
    for spec, (_, gp, gvp) in zip(topo.partitions, out):
        g[global_indices(net, spec)] = gp
        Gv[global_indices(net, spec)] = gvp
    f = out[topo.notifier][0]
    print(f"split {text:8s} P={topo.size:3d}  "
          f"|f-f_ref|={abs(f - objective_ref(T, data, C)):.1e}  "
          f"max|g-g_ref|={np.abs(g - gradient_ref(T, data, C)).max():.1e}  "
          f"max|Gv-Gv_ref|={np.abs(Gv - G @ v).max():.1e}")
