"""Single-node feedforward network: forward pass, objective, gradient,
Jacobian and the dense Gauss-Newton matrix.

Hidden layers use the sigmoid, the output layer is linear and the loss is the
squared error. Everything here is dense and meant as the reference the
distributed code is checked against.

Parameter layout: for each layer ``m`` the weight matrix ``W^m`` (shape
``n_{m-1} x n_m``) is flattened column by column, followed by the bias
``b^m``; layers are concatenated in order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng as _rng
from .errors import ConfigurationError

GN_ORACLE_CAP = 5000


@dataclass(frozen=True)
class NetConfig:
    layer_sizes: tuple

    def __init__(self, layer_sizes: Sequence[int]):
        sizes = tuple(int(n) for n in layer_sizes)
        if len(sizes) < 2:
            raise ConfigurationError("a network needs at least an input and an output layer")
        if any(n < 1 for n in sizes):
            raise ConfigurationError(f"layer sizes must be positive, got {sizes}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def L(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(s[m - 1] * s[m] + s[m] for m in range(1, len(s)))

    def offsets(self):
        """(weight_start, bias_start) of every layer 1..L in the flat vector."""
        out = []
        pos = 0
        s = self.layer_sizes
        for m in range(1, len(s)):
            out.append((pos, pos + s[m - 1] * s[m]))
            pos += s[m - 1] * s[m] + s[m]
        return out

    def __str__(self):
        return "-".join(str(n) for n in self.layer_sizes)


@dataclass
class Theta:
    """Per-layer weights and biases; index 0 holds layer 1."""

    weights: list
    biases: list

    @classmethod
    def zeros(cls, config: NetConfig) -> "Theta":
        s = config.layer_sizes
        return cls([np.zeros((s[m - 1], s[m])) for m in range(1, len(s))],
                   [np.zeros(s[m]) for m in range(1, len(s))])

    @classmethod
    def unflatten(cls, config: NetConfig, vec) -> "Theta":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (config.n_params,):
            raise ConfigurationError(f"expected {config.n_params} parameters, got shape {vec.shape}")
        s = config.layer_sizes
        weights, biases = [], []
        for m, (w0, b0) in enumerate(config.offsets(), start=1):
            weights.append(vec[w0:b0].reshape((s[m - 1], s[m]), order="F").copy())
            biases.append(vec[b0:b0 + s[m]].copy())
        return cls(weights, biases)

    def flatten(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel(order="F"))
            parts.append(b)
        return np.concatenate(parts)

    @property
    def config(self) -> NetConfig:
        return NetConfig([self.weights[0].shape[0]] + [W.shape[1] for W in self.weights])


@dataclass
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.float64)
        if labels.ndim == 1:
            labels = labels[:, None]
        self.labels = labels
        if self.features.shape[0] != self.labels.shape[0] or self.features.shape[0] < 1:
            raise ConfigurationError("features and labels must have the same positive number of rows")

    def __len__(self):
        return self.features.shape[0]

    def subset(self, idx) -> "Batch":
        return Batch(self.features[idx], self.labels[idx])


@dataclass
class ForwardCache:
    s: list  # s[m], m = 0..L; s[0] is the input
    z: list

    @property
    def output(self) -> np.ndarray:
        return self.z[-1]


def sigmoid(s):
    s = np.asarray(s, dtype=np.float64)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def activation(s, is_output=False):
    if is_output:
        return np.asarray(s, dtype=np.float64).copy() if np.ndim(s) else float(s)
    out = sigmoid(s)
    return out if np.ndim(s) else float(out)


def activation_deriv(s, is_output=False):
    """Derivative of the activation at pre-activation ``s``."""
    if is_output:
        return np.ones_like(np.asarray(s, dtype=np.float64)) if np.ndim(s) else 1.0
    z = sigmoid(s)
    d = z * (1.0 - z)
    return d if np.ndim(s) else float(d)


def deriv_from_output(z, is_output):
    """sigma'(s) expressed through z = sigma(s)."""
    if is_output:
        return np.ones_like(z)
    return z * (1.0 - z)


def _check(theta: Theta, batch: Batch):
    cfg = theta.config
    if batch.features.shape[1] != cfg.layer_sizes[0]:
        raise ConfigurationError(
            f"batch has {batch.features.shape[1]} features, network expects {cfg.layer_sizes[0]}")
    if batch.labels.shape[1] != cfg.n_out:
        raise ConfigurationError(f"labels have {batch.labels.shape[1]} columns, network outputs {cfg.n_out}")


def forward_ref(theta: Theta, features) -> ForwardCache:
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != theta.weights[0].shape[0]:
        raise ConfigurationError(
            f"input has {x.shape[1]} features, network expects {theta.weights[0].shape[0]}")
    L = len(theta.weights)
    s_list, z_list = [x], [x]
    for m, (W, b) in enumerate(zip(theta.weights, theta.biases), start=1):
        s = z_list[-1] @ W + b
        s_list.append(s)
        z_list.append(activation(s, is_output=(m == L)))
    return ForwardCache(s_list, z_list)


def objective_ref(theta: Theta, batch: Batch, C: float) -> float:
    if C <= 0:
        raise ConfigurationError("C must be positive")
    _check(theta, batch)
    out = forward_ref(theta, batch.features).output
    flat = theta.flatten()
    loss = np.sum((out - batch.labels) ** 2) / len(batch)
    return float(flat @ flat / (2.0 * C) + loss)


def _backward(theta: Theta, cache: ForwardCache, seed):
    """Back-propagate ``seed`` (d/dz^L, shape (..., l, n_L) broadcastable) and
    return the per-layer d/ds^m arrays, m = 1..L (index 0 holds layer 1)."""
    L = len(theta.weights)
    dz = seed
    out = [None] * L
    for m in range(L, 0, -1):
        deriv = deriv_from_output(cache.z[m], m == L)
        if dz.ndim == 3:
            deriv = deriv[:, None, :]
        ds = dz * deriv
        out[m - 1] = ds
        if m > 1:
            dz = ds @ theta.weights[m - 1].T
    return out


def gradient_ref(theta: Theta, batch: Batch, C: float) -> np.ndarray:
    if C <= 0:
        raise ConfigurationError("C must be positive")
    _check(theta, batch)
    cache = forward_ref(theta, batch.features)
    l = len(batch)
    ds = _backward(theta, cache, 2.0 * (cache.output - batch.labels))
    parts = []
    for m in range(1, len(theta.weights) + 1):
        gW = cache.z[m - 1].T @ ds[m - 1] / l
        gb = ds[m - 1].sum(axis=0) / l
        parts.append(gW.ravel(order="F"))
        parts.append(gb)
    return theta.flatten() / C + np.concatenate(parts)


def jacobian_ref(theta: Theta, features) -> np.ndarray:
    """Dense Jacobians of the network output, shape (l, n_L, n)."""
    cache = forward_ref(theta, features)
    cfg = theta.config
    l = cache.z[0].shape[0]
    nL = cfg.n_out
    eye = np.broadcast_to(np.eye(nL), (l, nL, nL))
    # dz^L/dz^m has shape (l, n_L, n_m); seed is the identity.
    ds = _backward(theta, cache, eye)
    J = np.empty((l, nL, cfg.n_params))
    for m, (w0, b0) in enumerate(cfg.offsets(), start=1):
        zp = cache.z[m - 1]  # (l, n_{m-1})
        d = ds[m - 1]  # (l, n_L, n_m)
        # column-major flatten: index t + j * n_{m-1}
        block = d[:, :, :, None] * zp[:, None, None, :]  # (l, n_L, n_m, n_{m-1})
        J[:, :, w0:b0] = block.reshape(l, nL, -1)
        J[:, :, b0:b0 + d.shape[2]] = d
    return J


def gauss_newton_ref(theta: Theta, features, C: float, cap: int = GN_ORACLE_CAP) -> np.ndarray:
    """Dense G = I/C + (2/l) sum_i J_i^T J_i."""
    n = theta.config.n_params
    if n > cap:
        raise ConfigurationError(f"dense Gauss-Newton oracle refuses n={n} > {cap}")
    J = jacobian_ref(theta, features)
    l = J.shape[0]
    G = np.eye(n) / C
    G += 2.0 / l * np.einsum("iun,ium->nm", J, J)
    return G


def init_sparse(config: NetConfig, seed: int) -> Theta:
    """ceil(sqrt(fan_in)) N(0,1) incoming weights per neuron, zero biases."""
    theta = Theta.zeros(config)
    s = config.layer_sizes
    for m in range(1, len(s)):
        g = _rng.stream(seed, _rng.INIT, partition=m)
        fan_in = s[m - 1]
        k = math.ceil(math.sqrt(fan_in))
        W = theta.weights[m - 1]
        for j in range(s[m]):
            rows = g.permutation(fan_in)[:k]
            W[np.sort(rows), j] = _rng.box_muller(g, k)
    return theta


def init_dense(config: NetConfig, seed: int) -> Theta:
    """N(0, 0.1^2) first layer, N(0, 0.001^2) output layer, N(0, 0.05^2) otherwise."""
    theta = Theta.zeros(config)
    L = config.L
    for m in range(1, L + 1):
        g = _rng.stream(seed, _rng.INIT, partition=m)
        if m == 1:
            std = 0.1
        elif m == L:
            std = 0.001
        else:
            std = 0.05
        W = theta.weights[m - 1]
        W[:] = std * _rng.box_muller(g, W.size).reshape(W.shape, order="F")
    return theta
