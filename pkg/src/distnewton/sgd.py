"""Mini-batch stochastic gradient with momentum, the comparison baseline.

Single node. The momentum coefficient ramps linearly from ``m0`` to ``mf``
over ``min_epochs``; the step size decays geometrically per update down to a
floor. Training stops once ``min_epochs`` have run and the validation
objective has not improved by a relative ``X`` for ``N`` epochs in a row.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import rng
from .data import ratio_split
from .errors import ConfigurationError
from .network import Batch, NetConfig, Theta, gradient_ref, objective_ref


@dataclass(frozen=True)
class SgdHyper:
    eta: float = 0.002
    eta_min: float = 1e-6
    min_epochs: int = 200
    X: float = 1e-5
    N: int = 10
    batch_size: int = 100
    m0: float = 0.9
    mf: float = 0.99
    gamma_decay: float = 1.0000002
    C: Optional[float] = None  # None means the number of training instances
    max_epochs: Optional[int] = None  # hard cap, not part of the stopping rule

    def __post_init__(self):
        if not (self.eta > 0 and self.eta_min > 0 and self.X > 0 and self.gamma_decay > 0):
            raise ConfigurationError("eta, eta_min, X and gamma_decay must be positive")
        if self.N < 1 or self.batch_size < 1 or self.min_epochs < 0:
            raise ConfigurationError("N and batch_size must be at least 1, min_epochs non-negative")
        if not 0 <= self.m0 <= self.mf < 1:
            raise ConfigurationError("need 0 <= m0 <= mf < 1")
        if self.C is not None and self.C <= 0:
            raise ConfigurationError("C must be positive")


def minibatch_gradient(theta: Theta, batch: Batch, subset, C: float) -> np.ndarray:
    return gradient_ref(theta, batch.subset(np.asarray(subset)), C)


def learning_rate(hyper: SgdHyper, r: int) -> float:
    return max(hyper.eta / hyper.gamma_decay ** r, hyper.eta_min)


def momentum(hyper: SgdHyper, epoch: int) -> float:
    a = min(epoch / hyper.min_epochs, 1.0) if hyper.min_epochs > 0 else 1.0
    return (1.0 - a) * hyper.m0 + a * hyper.mf


def epoch_batches(seed, epoch, n, batch_size):
    perm = rng.stream(seed, rng.SHUFFLE, 0, counter=epoch).permutation(n)
    return [perm[k:k + batch_size] for k in range(0, n, batch_size)]


class EarlyStop:
    """Counter logic for the validation-based stopping rule."""

    def __init__(self, N, X):
        self.N = N
        self.X = X
        self.counter = N
        self.lowest = math.inf

    def update(self, h):
        if h < (1.0 - self.X) * self.lowest:
            self.counter = self.N
        else:
            self.counter = max(self.counter - 1, 0)
        self.lowest = min(self.lowest, h)
        return self.counter


@dataclass
class EpochRecord:
    iter: int
    elapsed_sec: float
    f: float  # validation objective
    metric: float = float("nan")
    counter: int = 0
    momentum: float = float("nan")
    step_size: float = float("nan")


@dataclass
class SgdResult:
    theta: np.ndarray
    history: list = field(default_factory=list)
    epochs: int = 0
    early_stopped: bool = False


def sgd_train(train: Batch, net: NetConfig, hyper: SgdHyper, seed: int = 0, theta0=None,
              validation: Optional[Batch] = None, evaluator: Optional[Callable] = None,
              test: Optional[Batch] = None, timing=True, on_record=None) -> SgdResult:
    """Run the baseline. Without ``validation`` the training data is split
    90/10 first. ``evaluator(outputs)`` on ``test`` gives the metric column."""
    from .network import forward_ref

    if validation is None:
        tr, va = ratio_split(len(train), 0.9, seed)
        train, validation = train.subset(tr), train.subset(va)
    if hyper.C is None:
        hyper = replace(hyper, C=float(len(train)))
    theta = np.asarray(theta0, dtype=np.float64).copy()
    if theta.size != net.n_params:
        raise ConfigurationError(f"initial vector has {theta.size} entries, net needs {net.n_params}")
    v = np.zeros_like(theta)
    stop = EarlyStop(hyper.N, hyper.X)
    result = SgdResult(theta)
    r = 0
    epoch = 0
    elapsed = 0.0

    def metric_now():
        if test is None or evaluator is None:
            return float("nan")
        return evaluator(forward_ref(Theta.unflatten(net, theta), test.features).output)

    while epoch < hyper.min_epochs or stop.counter > 0:
        if hyper.max_epochs is not None and epoch >= hyper.max_epochs:
            break
        t0 = time.perf_counter()
        m = momentum(hyper, epoch)
        for subset in epoch_batches(seed, epoch, len(train), hyper.batch_size):
            g = minibatch_gradient(Theta.unflatten(net, theta), train, subset, hyper.C)
            step = learning_rate(hyper, r)
            v = m * v - step * g
            theta += v
            r += 1
        epoch += 1
        h = objective_ref(Theta.unflatten(net, theta), validation, hyper.C)
        stop.update(h)
        if timing:
            elapsed += time.perf_counter() - t0
        rec = EpochRecord(epoch, elapsed, h, metric_now(), stop.counter, m, learning_rate(hyper, r))
        result.history.append(rec)
        if on_record is not None:
            on_record(rec)
    result.epochs = epoch
    result.early_stopped = stop.counter <= 0 and epoch >= hyper.min_epochs
    result.theta = theta
    return result
