import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import make_problem
from distnewton.errors import ConfigurationError
from distnewton.network import Batch, NetConfig, Theta, gradient_ref
from distnewton.sgd import (
    EarlyStop,
    SgdHyper,
    epoch_batches,
    learning_rate,
    minibatch_gradient,
    momentum,
    sgd_train,
)


def test_defaults():
    h = SgdHyper()
    assert (h.eta, h.eta_min, h.min_epochs, h.X, h.N, h.batch_size) == (0.002, 1e-6, 200, 1e-5, 10, 100)
    assert (h.m0, h.mf, h.gamma_decay) == (0.9, 0.99, 1.0000002)


def test_validation():
    for bad in (dict(eta=0), dict(m0=0.99, mf=0.9), dict(mf=1.0), dict(N=0), dict(C=-1)):
        with pytest.raises(ConfigurationError):
            SgdHyper(**bad)


def test_full_batch_gradient_equals_reference():
    net, theta, batch = make_problem((4, 3, 2), 7, 0)
    T = Theta.unflatten(net, theta)
    np.testing.assert_array_equal(minibatch_gradient(T, batch, np.arange(7), 2.0), gradient_ref(T, batch, 2.0))


def test_zero_residual_subset_gives_reg_gradient():
    net, theta, batch = make_problem((4, 3, 2), 7, 1)
    from distnewton.network import forward_ref
    T = Theta.unflatten(net, theta)
    exact = Batch(batch.features, forward_ref(T, batch.features).output)
    np.testing.assert_array_equal(minibatch_gradient(T, exact, [1, 4], 5.0), theta / 5.0)


def test_subset_gradient_finite_differences():
    from distnewton.network import objective_ref
    net, theta, batch = make_problem((4, 3, 2), 9, 2)
    sub = [0, 3, 5]
    g = minibatch_gradient(Theta.unflatten(net, theta), batch, sub, 1.5)
    h = 1e-6
    for k in range(net.n_params):
        e = np.zeros_like(theta)
        e[k] = h
        fd = (objective_ref(Theta.unflatten(net, theta + e), batch.subset(sub), 1.5)
              - objective_ref(Theta.unflatten(net, theta - e), batch.subset(sub), 1.5)) / (2 * h)
        assert abs(g[k] - fd) <= 1e-5 * max(abs(fd), 1e-3)


def test_learning_rate_floor():
    h = SgdHyper()
    assert learning_rate(h, 0) == 0.002
    assert learning_rate(h, 1) == 0.002 / 1.0000002
    assert learning_rate(h, 10 ** 8) == 1e-6


def test_momentum_ramp():
    h = SgdHyper(min_epochs=4)
    assert momentum(h, 0) == 0.9
    assert momentum(h, 2) == pytest.approx(0.945, abs=1e-15)
    assert momentum(h, 4) == 0.99
    assert momentum(h, 400) == 0.99


def _one_instance(x, y):
    return Batch(np.array([[x]]), np.array([[y]]))


def test_first_step_is_plain_gradient_step():
    net = NetConfig([1, 1])
    train = _one_instance(0.5, 1.0)
    h = SgdHyper(eta=0.1, batch_size=1, max_epochs=1, min_epochs=10, C=2.0)
    theta0 = np.array([0.3, -0.2])
    res = sgd_train(train, net, h, theta0=theta0, validation=train, timing=False)
    g = gradient_ref(Theta.unflatten(net, theta0), train, 2.0)
    np.testing.assert_array_equal(res.theta, theta0 - 0.1 * g)


def test_two_step_trajectory_by_hand():
    # one affine unit z = w x + b, one instance per epoch, batch size 1
    x, y, C = 0.5, 1.0, 2.0
    eta, gamma, m0, mf, E = 0.1, 1.25, 0.5, 0.9, 4
    w, b = 0.3, -0.2

    def grad(w, b):
        res = w * x + b - y
        return w / C + 2 * res * x, b / C + 2 * res

    gw, gb = grad(w, b)
    vw, vb = -eta * gw, -eta * gb
    w, b = w + vw, b + vb
    m1 = (1 - 1 / E) * m0 + (1 / E) * mf
    gw, gb = grad(w, b)
    vw, vb = m1 * vw - eta / gamma * gw, m1 * vb - eta / gamma * gb
    w, b = w + vw, b + vb

    h = SgdHyper(eta=eta, gamma_decay=gamma, m0=m0, mf=mf, min_epochs=E, batch_size=1, max_epochs=2, C=C)
    train = _one_instance(x, y)
    res = sgd_train(train, NetConfig([1, 1]), h, theta0=np.array([0.3, -0.2]), validation=train, timing=False)
    np.testing.assert_allclose(res.theta, [w, b], rtol=0, atol=1e-12)
    assert [r.momentum for r in res.history] == [m0, m1]


def test_plain_sg_when_momentum_and_decay_are_off():
    net, theta, batch = make_problem((4, 3, 2), 23, 3)
    h = SgdHyper(eta=0.05, gamma_decay=1.0, m0=0.0, mf=0.0, batch_size=5, max_epochs=3, C=7.0)
    res = sgd_train(batch, net, h, seed=9, theta0=theta, validation=batch, timing=False)
    ref = theta.copy()
    for epoch in range(3):
        for sub in epoch_batches(9, epoch, 23, 5):
            ref = ref - 0.05 * minibatch_gradient(Theta.unflatten(net, ref), batch, sub, 7.0)
    np.testing.assert_allclose(res.theta, ref, rtol=0, atol=1e-14)


@given(st.integers(1, 300), st.integers(1, 50), st.integers(0, 100))
def test_shuffle_covers_training_set(n, b, epoch):
    batches = epoch_batches(1, epoch, n, b)
    assert len(batches) == math.ceil(n / b)
    assert sorted(np.concatenate(batches).tolist()) == list(range(n))


def test_shuffles_differ_across_epochs():
    a = np.concatenate(epoch_batches(1, 0, 50, 10))
    b = np.concatenate(epoch_batches(1, 1, 50, 10))
    assert not np.array_equal(a, b)


@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=60), st.integers(1, 6))
def test_early_stop_counter_bounds(hs, N):
    stop = EarlyStop(N, 1e-3)
    best = math.inf
    for h in hs:
        c = stop.update(h)
        assert c <= N
        if h < (1 - 1e-3) * best:
            assert c == N
        best = min(best, h)


def test_early_stop_counts_down_on_plateau():
    stop = EarlyStop(3, 0.1)
    assert [stop.update(v) for v in (1.0, 0.95, 0.95, 0.5, 0.5, 0.5, 0.5)] == [3, 2, 1, 3, 2, 1, 0]


def test_training_respects_min_epochs_and_stops():
    net, theta, batch = make_problem((4, 3, 2), 40, 4)
    h = SgdHyper(eta=1e-9, eta_min=1e-9, min_epochs=6, N=2, batch_size=10)
    res = sgd_train(batch, net, h, seed=0, theta0=theta * 0.1, timing=False)
    assert res.epochs >= 6
    assert res.early_stopped
    assert res.history[-1].counter == 0
    assert all(r.counter <= 2 for r in res.history)


def test_ninety_ten_split_and_determinism():
    net, theta, batch = make_problem((4, 3, 2), 50, 5)
    h = SgdHyper(min_epochs=2, max_epochs=2, batch_size=8)
    a = sgd_train(batch, net, h, seed=4, theta0=theta, timing=False)
    b = sgd_train(batch, net, h, seed=4, theta0=theta, timing=False)
    np.testing.assert_array_equal(a.theta, b.theta)
    assert [r.f for r in a.history] == [r.f for r in b.history]
    assert all(r.elapsed_sec == 0.0 for r in a.history)
