"""Group collectives over a point-to-point transport.

Sums always follow the same tree: a left-leaning pairwise reduction over the
group's member order, rooted at the first member. ``reduce_sum`` to another
root forwards that result, and ``allreduce_sum`` broadcasts it, so all three
give bit-identical values for the same inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CollectiveError

# sub-phases of one collective call, folded into the sequence number
_REDUCE, _FORWARD, _BCAST, _NOTIFY = range(4)
_PHASES = 4


@dataclass(frozen=True)
class Group:
    gid: int
    members: tuple

    def __post_init__(self):
        if len(set(self.members)) != len(self.members):
            raise ValueError(f"duplicate members in group {self.gid}: {self.members}")

    def __len__(self):
        return len(self.members)

    def __contains__(self, rank):
        return rank in self.members


class Communicator:
    def __init__(self, transport):
        self.transport = transport
        self.rank = transport.rank
        self._seq = {}
        self.messages_sent = 0
        self.floats_sent = 0

    def _next(self, group: Group) -> int:
        if self.rank not in group:
            raise CollectiveError(f"worker {self.rank} is not a member of group {group.gid} {group.members}")
        k = self._seq.get(group.gid, 0)
        self._seq[group.gid] = k + 1
        return k * _PHASES

    def _send(self, dst, tag, seq, vec):
        self.messages_sent += 1
        self.floats_sent += vec.size
        self.transport.send(dst, tag, seq, vec)

    def _tree_reduce(self, group, base, vec):
        """Pairwise sum towards members[0]; returns the total there, None elsewhere."""
        members = group.members
        k = len(members)
        idx = members.index(self.rank)
        acc = np.array(vec, dtype=np.float64, copy=True).ravel()
        step = 1
        while step < k:
            if idx % (2 * step) == 0:
                if idx + step < k:
                    other = self.transport.recv(members[idx + step], group.gid, base + _REDUCE)
                    if other.shape != acc.shape:
                        raise CollectiveError(
                            f"length mismatch in group {group.gid}: {acc.size} vs {other.size}",
                            worker=members[idx + step])
                    acc = acc + other
            else:
                self._send(members[idx - step], group.gid, base + _REDUCE, acc)
                return None
            step *= 2
        return acc

    def _tree_bcast(self, group, base, root, vec):
        order = [root] + [r for r in group.members if r != root]
        k = len(order)
        idx = order.index(self.rank)
        if idx == 0:
            data = np.array(vec, dtype=np.float64, copy=True).ravel()
            low = 1
            while low < k:
                low *= 2
        else:
            low = idx & -idx
            data = self.transport.recv(order[idx - low], group.gid, base + _BCAST)
        step = low // 2
        while step >= 1:
            if idx + step < k:
                self._send(order[idx + step], group.gid, base + _BCAST, data)
            step //= 2
        return data

    def reduce_sum(self, group: Group, root: int, vec):
        """Sum of every member's ``vec`` at ``root``; other members get None."""
        if root not in group:
            raise CollectiveError(f"root {root} not in group {group.gid}")
        base = self._next(group)
        shape = np.shape(vec)
        total = self._tree_reduce(group, base, vec)
        first = group.members[0]
        if root != first:
            if self.rank == first:
                self._send(root, group.gid, base + _FORWARD, total)
                total = None
            elif self.rank == root:
                total = self.transport.recv(first, group.gid, base + _FORWARD)
        return None if total is None else total.reshape(shape)

    def allreduce_sum(self, group: Group, vec):
        base = self._next(group)
        shape = np.shape(vec)
        total = self._tree_reduce(group, base, vec)
        out = self._tree_bcast(group, base, group.members[0], total)
        return out.reshape(shape)

    def broadcast(self, group: Group, root: int, vec=None, shape=None):
        """Copy ``vec`` from ``root`` to every member. Non-roots may pass
        ``shape`` to get the result reshaped."""
        if root not in group:
            raise CollectiveError(f"root {root} not in group {group.gid}")
        base = self._next(group)
        if self.rank == root:
            shape = np.shape(vec)
        out = self._tree_bcast(group, base, root, vec)
        return out.reshape(shape) if shape is not None else out

    def barrier(self, group: Group):
        self.allreduce_sum(group, np.zeros(1))

    def notify(self, group: Group, payload):
        """Direct message from the caller to every other member."""
        base = self._next(group)
        vec = np.asarray(payload, dtype=np.float64).ravel()
        for r in group.members:
            if r != self.rank:
                self._send(r, group.gid, base + _NOTIFY, vec)
        return vec

    def wait_notification(self, group: Group, notifier: int):
        base = self._next(group)
        return self.transport.recv(notifier, group.gid, base + _NOTIFY)

    def poll_notification(self, group: Group, notifier: int) -> bool:
        """True if the next notification from ``notifier`` has already arrived."""
        k = self._seq.get(group.gid, 0)
        return self.transport.has_message(notifier, group.gid, k * _PHASES + _NOTIFY)
