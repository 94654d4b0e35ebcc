"""One-iteration comparison of the distributed solver with dense oracles.

Used by the ``gn-check`` subcommand. Everything dense is built with the
single-node reference code, so the net must be small enough for the dense
Gauss-Newton matrix.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .dist.cg import cg_diag, cg_full
from .dist.gauss_newton import gnv_diag, gnv_full
from .dist.launch import run_spmd
from .dist.newton import build_worker, draw_sample, initial_theta
from .dist.topology import Topology
from .network import Theta, gauss_newton_ref, gradient_ref, jacobian_ref, objective_ref
from .partition import global_indices
from . import rng


def _dense_pieces(train, net, split, hyper, seed, theta):
    """Distributed f, g, Jacobian factors, matvecs and first directions."""
    topo = Topology(net, split)
    S = draw_sample(seed, 1, len(train), hyper.sample_rate)
    modes = {
        "full": replace(hyper, gn_mode="full", r_percent=100.0),
        "diag": replace(hyper, gn_mode="diag", r_percent=100.0),
        "diag_sync": replace(hyper, gn_mode="diag"),
    }

    def program(rank, comm):
        spec = topo.partitions[rank]
        w = build_worker(topo, spec, comm, train, hyper, theta[global_indices(net, spec)])
        f = w.function_value()
        g, _ = w.gradient()
        factors = w.jacobian_factors(S)
        v = rng.stream(seed, "gn-check", rank).standard_normal(w.n_vars)
        out = {
            "idx": w.idx, "f": f, "g": g, "J": factors.dense_block(), "v": v,
            "diag": gnv_diag(v, factors, hyper.lambda1, hyper.C),
            "full": gnv_full(comm, topo.world, v, factors, hyper.C, hyper.lambda1),
        }
        for name, h in modes.items():
            solver = cg_full if h.gn_mode == "full" else cg_diag
            res = solver(comm, topo.world, g, factors, hyper.lambda1, h)
            out["dir_" + name] = res.direction
            out["iters_" + name] = res.iterations
        return out

    return topo, S, run_spmd(topo.size, program)


def gn_check_report(train, net, split, hyper, seed=0, init="sparse"):
    hyper = hyper.resolved(len(train))
    theta = initial_theta(net, seed, init)
    T = Theta.unflatten(net, theta)
    topo, S, parts = _dense_pieces(train, net, split, hyper, seed, theta)
    n = net.n_params
    lam, C = hyper.lambda1, hyper.C

    def assemble(key):
        full = np.zeros(n)
        for p in parts:
            full[p["idx"]] = p[key]
        return full

    f_ref = objective_ref(T, train, C)
    g_ref = gradient_ref(T, train, C)
    J_ref = jacobian_ref(T, train.features[S])
    G = gauss_newton_ref(T, train.features[S], C)
    g = assemble("g")
    v = assemble("v")
    J = np.zeros_like(J_ref)
    for p in parts:
        J[:, :, p["idx"]] = p["J"]
    block = np.zeros(n)
    for p in parts:
        idx = p["idx"]
        block[idx] = (G[np.ix_(idx, idx)] + lam * np.eye(idx.size)) @ v[idx]
    A = G + lam * np.eye(n)
    exact = np.linalg.solve(A, -g)

    def model(d):
        return 0.5 * d @ (A @ d) + g @ d

    rows = [
        ("partitions", topo.size),
        ("sample_size", int(S.size)),
        ("f_abs_dev", float(abs(parts[topo.notifier]["f"] - f_ref))),
        ("gradient_max_dev", float(np.max(np.abs(g - g_ref)))),
        ("jacobian_max_dev", float(np.max(np.abs(J - J_ref)))),
        ("gnv_diag_max_dev", float(np.max(np.abs(assemble("diag") - block)))),
        ("gnv_full_max_dev", float(np.max(np.abs(assemble("full") - A @ v)))),
        ("model_at_exact_solution", float(model(exact))),
    ]
    for name in ("full", "diag", "diag_sync"):
        d = assemble("dir_" + name)
        rows.append((f"{name}_cg_iterations_total", sum(p["iters_" + name] for p in parts)))
        rows.append((f"{name}_model_value", float(model(d))))
        rows.append((f"{name}_dev_from_exact", float(np.max(np.abs(d - exact)))))
    return rows
