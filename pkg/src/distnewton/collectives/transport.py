"""Point-to-point transports.

Messages are float64 vectors addressed by ``(src, tag, seq)``. A receiver can
ask for any key; out-of-order arrivals wait in a per-worker mailbox. Between
one ordered pair of workers delivery is FIFO on both transports.

TCP framing: after connecting, the client sends its worker id as ``<I``. Each
frame is a ``<IQQ`` header (collective tag, sequence number, payload length
in bytes) followed by the payload as little-endian float64.
"""

from __future__ import annotations

import os
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import CollectiveError

HEADER = struct.Struct("<IQQ")
HELLO = struct.Struct("<I")
BIND_ENV = "DISTNEWTON_BIND_ADDR"
DEFAULT_TIMEOUT = 120.0


@dataclass
class TransportConfig:
    mode: str = "inproc"  # "inproc" | "tcp"
    endpoints: list = field(default_factory=list)  # "host:port" per worker, tcp mode
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        if self.mode not in ("inproc", "tcp"):
            raise ValueError(f"unknown transport mode {self.mode!r}")
        if self.mode == "tcp" and len(set(self.endpoints)) != len(self.endpoints):
            raise ValueError("tcp endpoints must be distinct")


class Mailbox:
    def __init__(self):
        self._items = {}
        self._cond = threading.Condition()
        self._closed = None
        self._gone = {}  # source -> reason, for peers whose connection ended

    def put(self, key, payload):
        with self._cond:
            self._items.setdefault(key, []).append(payload)
            self._cond.notify_all()

    def fail(self, reason):
        with self._cond:
            self._closed = reason
            self._cond.notify_all()

    def source_gone(self, src, reason):
        """No more messages will come from ``src``; only waits on it fail."""
        with self._cond:
            self._gone[src] = reason
            self._cond.notify_all()

    def take(self, key, timeout):
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                q = self._items.get(key)
                if q:
                    out = q.pop(0)
                    if not q:
                        del self._items[key]
                    return out
                reason = self._closed or self._gone.get(key[0])
                if reason is not None:
                    raise CollectiveError(f"transport closed while waiting for worker {key[0]}: {reason}",
                                          worker=key[0])
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise CollectiveError(
                        f"timed out after {timeout:.1f}s waiting for worker {key[0]} (tag {key[1]}, seq {key[2]})",
                        worker=key[0])
                self._cond.wait(remaining)

    def peek(self, key) -> bool:
        with self._cond:
            return bool(self._items.get(key))


class Transport:
    rank: int
    size: int
    timeout: float

    def send(self, dst, tag, seq, payload):
        raise NotImplementedError

    def recv(self, src, tag, seq, timeout=None) -> np.ndarray:
        return self.mailbox.take((src, tag, seq), self.timeout if timeout is None else timeout)

    def has_message(self, src, tag, seq) -> bool:
        return self.mailbox.peek((src, tag, seq))

    def close(self):
        pass


class InProcessHub:
    """Shared mailboxes for ``size`` workers living in one process."""

    def __init__(self, size, timeout=DEFAULT_TIMEOUT):
        self.size = size
        self.timeout = timeout
        self.mailboxes = [Mailbox() for _ in range(size)]

    def endpoint(self, rank) -> "InProcessTransport":
        return InProcessTransport(self, rank)

    def abort(self, reason):
        for mb in self.mailboxes:
            mb.fail(reason)


class InProcessTransport(Transport):
    def __init__(self, hub: InProcessHub, rank: int):
        self.hub = hub
        self.rank = rank
        self.size = hub.size
        self.timeout = hub.timeout
        self.mailbox = hub.mailboxes[rank]

    def send(self, dst, tag, seq, payload):
        data = np.array(payload, dtype="<f8", copy=True).ravel()
        self.hub.mailboxes[dst].put((self.rank, tag, seq), data)


def _recv_exact(sock, n):
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:], n - got)
        if k == 0:
            raise ConnectionError("peer closed connection")
        got += k
    return bytes(buf)


def parse_endpoint(text):
    host, _, port = str(text).rpartition(":")
    return host or "127.0.0.1", int(port)


def encode_frame(tag, seq, payload) -> bytes:
    data = np.ascontiguousarray(payload, dtype="<f8").tobytes()
    return HEADER.pack(tag, seq, len(data)) + data


def decode_header(raw):
    return HEADER.unpack(raw)


class TcpTransport(Transport):
    """One listening socket per worker; one outgoing connection per peer."""

    def __init__(self, rank, endpoints, timeout=DEFAULT_TIMEOUT, listener=None):
        self.rank = rank
        self.size = len(endpoints)
        self.timeout = timeout
        self.endpoints = [parse_endpoint(e) for e in endpoints]
        self.mailbox = Mailbox()
        self._out = {}
        self._out_lock = threading.Lock()
        self._closing = False
        self._threads = []
        if listener is None:
            host, port = self.endpoints[rank]
            listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind((os.environ.get(BIND_ENV, host), port))
            listener.listen(max(8, self.size))
        self._listener = listener
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)

    def _accept_loop(self):
        while not self._closing:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            t = threading.Thread(target=self._read_loop, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _read_loop(self, conn):
        src = None
        try:
            (src,) = HELLO.unpack(_recv_exact(conn, HELLO.size))
            while True:
                tag, seq, nbytes = decode_header(_recv_exact(conn, HEADER.size))
                payload = np.frombuffer(_recv_exact(conn, nbytes), dtype="<f8").copy()
                self.mailbox.put((src, tag, seq), payload)
        except (ConnectionError, OSError):
            if not self._closing and src is not None:
                self.mailbox.source_gone(src, f"connection from worker {src} lost")
        finally:
            conn.close()

    def _connection(self, dst):
        with self._out_lock:
            sock = self._out.get(dst)
            if sock is not None:
                return sock
            deadline = time.monotonic() + self.timeout
            while True:
                try:
                    sock = socket.create_connection(self.endpoints[dst], timeout=self.timeout)
                    break
                except OSError:
                    if time.monotonic() > deadline:
                        raise CollectiveError(f"cannot connect to worker {dst} at {self.endpoints[dst]}", worker=dst)
                    time.sleep(0.05)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            sock.sendall(HELLO.pack(self.rank))
            self._out[dst] = sock
            return sock

    def send(self, dst, tag, seq, payload):
        if dst == self.rank:
            self.mailbox.put((self.rank, tag, seq), np.array(payload, dtype="<f8", copy=True).ravel())
            return
        frame = encode_frame(tag, seq, payload)
        sock = self._connection(dst)
        try:
            sock.sendall(frame)
        except OSError as exc:
            raise CollectiveError(f"send to worker {dst} failed: {exc}", worker=dst) from exc

    def close(self):
        self._closing = True
        try:
            self._listener.close()
        except OSError:
            pass
        with self._out_lock:
            for sock in self._out.values():
                try:
                    sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                sock.close()
            self._out.clear()


def free_listeners(n, host="127.0.0.1"):
    """Bind ``n`` listening sockets on ephemeral ports; returns (sockets, endpoints)."""
    socks, eps = [], []
    for _ in range(n):
        s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.bind((host, 0))
        s.listen(max(8, n))
        socks.append(s)
        eps.append(f"{host}:{s.getsockname()[1]}")
    return socks, eps
