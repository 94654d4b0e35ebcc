"""Variable partition grid and its analytical cost model.

Neurons of layer ``m`` are split into ``g_m`` contiguous, near-equal groups.
Weights connecting one group of layer ``m-1`` to one group of layer ``m``
form a partition; the bias ``b^m`` restricted to the output group is stored
by the partition whose input group is the first group of layer ``m-1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidSplitError
from .network import NetConfig


@dataclass(frozen=True)
class SplitStructure:
    groups_per_layer: tuple

    def __init__(self, groups: Sequence[int]):
        object.__setattr__(self, "groups_per_layer", tuple(int(g) for g in groups))

    @classmethod
    def parse(cls, text: str) -> "SplitStructure":
        return cls(int(t) for t in str(text).split("-"))

    def __str__(self):
        return "-".join(map(str, self.groups_per_layer))

    def validate(self, net: NetConfig):
        g = self.groups_per_layer
        if len(g) != len(net.layer_sizes):
            raise InvalidSplitError(f"split {self} has {len(g)} entries, network {net} has {len(net.layer_sizes)} layers")
        for m, (gm, nm) in enumerate(zip(g, net.layer_sizes)):
            if gm < 1:
                raise InvalidSplitError(f"layer {m}: group count must be positive")
            if gm > nm:
                raise InvalidSplitError(f"layer {m}: {gm} groups for {nm} neurons")


def neuron_groups(n: int, g: int):
    """Contiguous ranges [start, stop) of ``n`` neurons in ``g`` groups; sizes differ by <= 1."""
    base, extra = divmod(n, g)
    out, pos = [], 0
    for k in range(g):
        size = base + (1 if k < extra else 0)
        out.append((pos, pos + size))
        pos += size
    return out


@dataclass(frozen=True)
class PartitionSpec:
    index: int
    layer: int  # m, 1..L
    in_group: int  # index of T_{m-1} within layer m-1
    out_group: int  # index of T_m within layer m
    in_range: tuple
    out_range: tuple

    @property
    def owns_bias(self) -> bool:
        return self.in_group == 0

    @property
    def n_in(self) -> int:
        return self.in_range[1] - self.in_range[0]

    @property
    def n_out(self) -> int:
        return self.out_range[1] - self.out_range[0]

    @property
    def n_weights(self) -> int:
        return self.n_in * self.n_out

    @property
    def n_vars(self) -> int:
        return self.n_weights + (self.n_out if self.owns_bias else 0)


def build_partitions(net: NetConfig, split: SplitStructure) -> list:
    split.validate(net)
    sizes, g = net.layer_sizes, split.groups_per_layer
    ranges = [neuron_groups(n, k) for n, k in zip(sizes, g)]
    specs = []
    for m in range(1, len(sizes)):
        for a, rin in enumerate(ranges[m - 1]):
            for j, rout in enumerate(ranges[m]):
                specs.append(PartitionSpec(len(specs), m, a, j, rin, rout))
    return specs


def global_indices(net: NetConfig, spec: PartitionSpec) -> np.ndarray:
    """Flat-vector positions of the partition's variables, in local order
    (weight block column by column, then owned biases)."""
    n_prev = net.layer_sizes[spec.layer - 1]
    w0, b0 = net.offsets()[spec.layer - 1]
    t = np.arange(*spec.in_range)
    j = np.arange(*spec.out_range)
    idx = (w0 + t[:, None] + j[None, :] * n_prev).ravel(order="F")
    if spec.owns_bias:
        idx = np.concatenate([idx, b0 + j])
    return idx


def balance_report(partitions) -> dict:
    if not partitions:
        raise ValueError("empty partition list")
    counts = [p.n_weights for p in partitions]
    return {"max_vars": max(counts), "min_vars": min(counts), "ratio": max(counts) / min(counts)}


@dataclass(frozen=True)
class CostModelParams:
    alpha: float = 1e-4  # start-up cost per transfer
    beta: float = 1e-9  # per-element transfer time
    gamma: float = 1e-10  # per-element addition time

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("cost model parameters must be non-negative")


def ceil_log2_ratio(n: int, size: int) -> int:
    """ceil(log2(n / size)) in exact integer arithmetic (0 when n <= size)."""
    k = 0
    while size * (1 << k) < n:
        k += 1
    return k


def cost_estimate(partitions, net: NetConfig, l: int, sample: int, params: CostModelParams = CostModelParams()):
    """Per-partition memory, compute and communication estimates.

    ``l`` is the training-set size and ``sample`` the subsampled-Hessian size
    |S|; Jacobian and matrix-vector terms use ``sample``.
    """
    if l < 1 or sample < 1:
        raise ValueError("l and sample must be >= 1")
    nL = net.n_out
    sizes = net.layer_sizes
    # group size lookup for the broadcast term: groups of layer m-2
    group_sizes = {}
    for p in partitions:
        group_sizes.setdefault(p.layer - 1, p.n_in)
        group_sizes.setdefault(p.layer, p.n_out)
    rows = []
    for p in partitions:
        a, b = p.n_in, p.n_out
        memory = p.n_vars + l * (a + b) + sample * nL * (a + b)
        reduce_comm = bcast_comm = 0.0
        if p.layer > 1:
            hops = ceil_log2_ratio(sizes[p.layer], b)
            reduce_comm = hops * (params.alpha + (params.beta + params.gamma) * sample * nL * a)
            hops = ceil_log2_ratio(sizes[p.layer - 2], group_sizes[p.layer - 2])
            bcast_comm = hops * (params.alpha + params.beta * sample * nL * a)
        rows.append({
            "partition": p.index,
            "layer": p.layer,
            "memory": memory,
            "function": l * a * b,
            "gradient": l * a * b,
            "jacobian": nL * sample * a * b,
            "matvec": sample * (a * b + nL * b),
            "reduce_comm": reduce_comm,
            "bcast_comm": bcast_comm,
        })
    return rows
