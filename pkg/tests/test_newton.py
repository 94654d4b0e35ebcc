import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import assemble, make_problem, run_workers
from distnewton.dist import (
    NewtonHyper,
    combine_directions,
    draw_sample,
    line_search,
    lm_update,
    model_value,
    newton_train,
    solve_combination,
)
from distnewton.dist.newton import armijo_ok, sample_size
from distnewton.errors import ConfigurationError, DirectionError
from distnewton.network import Batch, NetConfig, Theta, gauss_newton_ref, gradient_ref, objective_ref
from distnewton.partition import SplitStructure


def test_lm_update_examples():
    assert lm_update(0.8, 1.0) == 2.0 / 3.0
    assert lm_update(0.5, 1.0) == 1.0
    assert lm_update(0.1, 1.0) == 1.5
    assert lm_update(0.75, 2.0) == 2.0
    assert lm_update(0.25, 2.0) == 2.0
    assert lm_update(-math.inf, 2.0) == 3.0


def test_hyper_validation():
    for bad in (dict(C=0), dict(sigma=1), dict(cg_min=5, cg_max=4), dict(r_percent=0),
                dict(drop=1.0), dict(eta=1.0), dict(sample_rate=0), dict(gn_mode="x"), dict(chunks=0)):
        with pytest.raises(ConfigurationError):
            NewtonHyper(**bad)
    assert NewtonHyper().resolved(77).C == 77.0
    assert NewtonHyper(C=3.0).resolved(77).C == 3.0


def test_armijo():
    assert armijo_ok(0.0, 1.0, 1.0, -2.0, 0.5)
    assert not armijo_ok(0.99, 1.0, 1.0, -2.0, 0.5)
    assert not armijo_ok(float("nan"), 1.0, 1.0, -2.0, 1e-4)


def test_sampling():
    assert sample_size(7494, 0.2) == 1499
    assert sample_size(3, 0.01) == 1
    S = draw_sample(5, 3, 100, 0.2)
    assert S.size == 20 and np.all(np.diff(S) > 0)
    np.testing.assert_array_equal(S, draw_sample(5, 3, 100, 0.2))
    assert not np.array_equal(S, draw_sample(5, 4, 100, 0.2))


def test_combination_fallbacks():
    assert solve_combination(2.0, 0.0, 0.0, -1.0, 0.0, 1e-5) == (1.0, 0.0, True)
    assert solve_combination(2.0, 2.0, 2.0, -1.0, -1.0, 1e-5) == (1.0, 0.0, True)


@given(st.integers(0, 2**32 - 1))
def test_combination_beats_grid(seed):
    rs = np.random.default_rng(seed)
    A = rs.normal(size=(2, 2))
    M = A @ A.T + 0.1 * np.eye(2)
    gd, gp = rs.normal(size=2)
    b1, b2, fb = solve_combination(M[0, 0], M[0, 1], M[1, 1], gd, gp, 1e-5)
    if fb:
        return
    best = model_value((b1, b2), M[0, 0], M[0, 1], M[1, 1], gd, gp)
    grid = np.linspace(-2, 2, 201)
    B1, B2 = np.meshgrid(grid, grid)
    vals = 0.5 * (B1 ** 2 * M[0, 0] + 2 * B1 * B2 * M[0, 1] + B2 ** 2 * M[1, 1]) + B1 * gd + B2 * gp
    assert best <= vals.min() + 1e-12
    assert best <= model_value((1.0, 0.0), M[0, 0], M[0, 1], M[1, 1], gd, gp) + 1e-12


def _combine(net, split, batch, theta, d, d_prev, S, C):
    def body(w):
        g, _ = w.gradient()
        fac = w.jacobian_factors(S)
        return combine_directions(w.comm, w.topo.world, d[w.idx], d_prev[w.idx], g, fac, C, 1e-5)

    return run_workers(net, split, batch, theta, body, C=C)


def test_combine_first_iteration_falls_back():
    net, theta, batch = make_problem((5, 4, 3), 10, 0)
    d = np.random.default_rng(1).normal(size=net.n_params)
    _, out = _combine(net, "2-2-2", batch, theta, d, np.zeros_like(d), np.arange(10), 10.0)
    for new, info in out:
        assert info["fallback"] and info["beta"] == (1.0, 0.0)
    _, out = _combine(net, "2-2-2", batch, theta, d, d.copy(), np.arange(10), 10.0)
    assert all(info["fallback"] for _, info in out)


def test_combine_matches_dense_model_and_grid():
    net, theta, batch = make_problem((5, 4, 3), 10, 2)
    C = 10.0
    S = np.array([1, 3, 4, 8])
    rs = np.random.default_rng(3)
    d, d_prev = rs.normal(size=(2, net.n_params))
    T = Theta.unflatten(net, theta)
    G = gauss_newton_ref(T, batch.features[S], C)
    g = gradient_ref(T, batch, C)
    topo, out = _combine(net, "2-2-3", batch, theta, d, d_prev, S, C)
    new = assemble(net, topo, [n for n, _ in out])
    info = out[0][1]
    b1, b2 = info["beta"]
    assert not info["fallback"]
    np.testing.assert_allclose(new, b1 * d + b2 * d_prev, rtol=1e-12)
    assert info["dGd"] == pytest.approx(new @ G @ new, rel=1e-10)
    assert info["gd"] == pytest.approx(g @ new, rel=1e-10)

    def q(x):
        return 0.5 * x @ G @ x + g @ x

    grid = np.linspace(-2, 2, 201)
    best = q(new)
    for x1 in grid:
        for x2 in grid[::10]:
            assert best <= q(x1 * d + x2 * d_prev) + 1e-9
    assert best <= q(d) + 1e-12


def _line_search(net, split, batch, theta, d, hyper, gd):
    f0 = objective_ref(Theta.unflatten(net, theta), batch, hyper.C)
    return run_workers(net, split, batch, theta,
                       lambda w: line_search(w, d[w.idx], f0, gd, hyper), C=hyper.C)


def test_line_search_exact_quadratic():
    # one bias, zero input and target, negligible regularisation: f(b) = b^2
    net = NetConfig([1, 1])
    batch = Batch(np.zeros((1, 1)), np.zeros((1, 1)))
    theta = np.array([0.0, 1.0])
    d = np.array([0.0, -1.0])
    hyper = NewtonHyper(C=1e300, eta=0.5)
    _, out = _line_search(net, "1-1", batch, theta, d, hyper, gd=-2.0)
    assert out[0][:2] == (1.0, 0.0)


@pytest.mark.parametrize("seed", range(6))
def test_line_search_matches_ladder_scan(seed):
    net, theta, batch = make_problem((4, 5, 3), 9, seed)
    C = 9.0
    T = Theta.unflatten(net, theta)
    g = gradient_ref(T, batch, C)
    d = -20.0 * g
    gd = float(g @ d)
    f0 = objective_ref(T, batch, C)
    hyper = NewtonHyper(C=C)
    expected = None
    for k in range(hyper.max_halvings + 1):
        a = 0.5 ** k
        if objective_ref(Theta.unflatten(net, theta + a * d), batch, C) <= f0 + hyper.eta * a * gd:
            expected = a
            break
    _, out = _line_search(net, "2-2-3", batch, theta, d, hyper, gd)
    alphas = {o[0] for o in out}
    assert alphas == {expected}


def test_line_search_eta_monotonicity():
    net, theta, batch = make_problem((4, 5, 3), 9, 11)
    C = 9.0
    T = Theta.unflatten(net, theta)
    g = gradient_ref(T, batch, C)
    d = -5.0 * g
    gd = float(g @ d)
    a_small = _line_search(net, "1-1-1", batch, theta, d, NewtonHyper(C=C, eta=1e-4), gd)[1][0][0]
    a_large = _line_search(net, "1-1-1", batch, theta, d, NewtonHyper(C=C, eta=0.999), gd)[1][0][0]
    assert a_large is not None and a_large < a_small


def test_line_search_rejects_ascent():
    net, theta, batch = make_problem((3, 2), 4, 0)
    with pytest.raises(DirectionError):
        _line_search(net, "1-1", batch, theta, np.ones(net.n_params), NewtonHyper(C=1.0), 0.5)


def _small_run(**kw):
    net, _, batch = make_problem((6, 8, 8, 3), 60, 21)
    _, _, test = make_problem((6, 8, 8, 3), 30, 22)
    args = dict(hyper=NewtonHyper(), seed=3, max_iter=12, test=test, timing=False)
    args.update(kw)
    return net, batch, newton_train(batch, net, SplitStructure.parse(kw.pop("split", "2-2-3-2")), **args)


def check_trajectory(history, hyper):
    """Levenberg-Marquardt, sufficient-decrease and CG-exit invariants."""
    lam = hyper.lambda1
    for prev, rec in zip(history, history[1:]):
        assert rec.lam == lam
        assert rec.lam_next == lm_update(rec.rho, rec.lam, hyper.drop, hyper.boost)
        if rec.accepted:
            assert rec.f <= rec.f_prev + hyper.eta * rec.alpha * rec.gd
            pred = rec.alpha * rec.gd + 0.5 * rec.alpha ** 2 * rec.dGd
            assert rec.rho == (rec.f - rec.f_prev) / pred
        else:
            assert rec.rho == -math.inf and rec.f == rec.f_prev
        assert rec.f_prev == prev.f
        P = len(rec.cg_iters)
        n_conv = sum(rec.cg_converged)
        running = [it for it, c in zip(rec.cg_iters, rec.cg_converged) if not c]
        if rec.cg_exit == "sync":
            assert n_conv * 100 >= hyper.r_percent * P
            assert all(it >= hyper.cg_min for it in running)
        elif rec.cg_exit == "cg_max":
            assert max(rec.cg_iters) == hyper.cg_max
        else:
            assert rec.cg_exit == "all_converged" and n_conv == P
        lam = rec.lam_next


@pytest.mark.parametrize("mode", ["diag", "full"])
def test_trajectory_invariants(mode):
    hyper = NewtonHyper(gn_mode=mode)
    net, batch, res = _small_run(hyper=hyper)
    check_trajectory(res.history, hyper.resolved(len(batch)))
    fs = [r.f for r in res.history]
    assert all(b <= a for a, b in zip(fs, fs[1:]))
    assert res.history[-1].f < res.history[0].f
    assert res.history[-1].f == pytest.approx(objective_ref(Theta.unflatten(net, res.theta), batch, len(batch)),
                                              rel=1e-12)


def test_rejected_steps_keep_parameters():
    hyper = NewtonHyper(eta=0.999999, max_halvings=0, lambda1=1e-6)
    net, batch, res = _small_run(hyper=hyper, max_iter=4, record_directions=True)
    rejected = [r for r in res.history[1:] if not r.accepted]
    assert rejected
    for r in rejected:
        assert r.probes == 1 and r.lam_next == r.lam * 1.5
    check_trajectory(res.history, hyper.resolved(len(batch)))


def test_determinism_and_timing_off():
    a = _small_run()[2]
    b = _small_run()[2]
    assert [r.f for r in a.history] == [r.f for r in b.history]
    assert [r.metric for r in a.history] == [r.metric for r in b.history]
    assert all(r.elapsed_sec == 0.0 for r in a.history)
    np.testing.assert_array_equal(a.theta, b.theta)


def test_zero_iterations_reports_initial_value():
    net, batch, res = _small_run(max_iter=0)
    assert len(res.history) == 1
    assert res.history[0].iter == 0
    assert res.history[0].f == pytest.approx(
        objective_ref(Theta.unflatten(net, res.theta), batch, len(batch)), rel=1e-13)


def test_directions_are_descent():
    net, batch, res = _small_run(record_directions=True, max_iter=5)
    for r in res.history[1:]:
        assert r.gd < 0
        assert r.direction.shape == (net.n_params,)


def test_memory_counts_reported():
    net, batch, res = _small_run(max_iter=1)
    S = sample_size(len(batch), 0.2)
    topo_parts = SplitStructure.parse("2-2-3-2")
    from distnewton.partition import build_partitions
    for spec, count in zip(build_partitions(net, topo_parts), res.peak_factor_floats):
        extra = spec.n_in if spec.layer > 1 else 0
        assert count == S * net.n_out * (spec.n_out + extra)


def test_bad_setup_is_rejected():
    net, _, batch = make_problem((6, 8, 3), 10, 0)
    with pytest.raises(ConfigurationError):
        newton_train(batch, NetConfig([5, 8, 3]), SplitStructure.parse("1-1-1"), max_iter=1)
    with pytest.raises(ConfigurationError):
        newton_train(batch, net, SplitStructure.parse("1-1-1"), theta0=np.zeros(3), max_iter=1)
