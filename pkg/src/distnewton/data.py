"""Reading and preparing datasets.

Input files use the sparse ``label index:value`` text format with 1-based,
strictly increasing feature indices. After loading, everything is dense.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .errors import ConfigurationError, LabelError, ParseError, StratificationError

SCALING_MODES = ("none", "per-feature", "divide-255", "global-min-max")


@dataclass
class RawDataset:
    labels: np.ndarray  # raw label per row
    rows: list  # (indices, values) per row, indices 1-based
    n_features: int

    def __len__(self):
        return len(self.rows)

    def dense(self, n_features=None) -> np.ndarray:
        n = self.n_features if n_features is None else int(n_features)
        X = np.zeros((len(self.rows), n))
        for i, (idx, val) in enumerate(self.rows):
            if idx.size and idx[-1] > n:
                raise ConfigurationError(f"row {i + 1} has feature {idx[-1]} beyond {n}")
            X[i, idx - 1] = val
        return X


def _parse_label(tok, lineno):
    try:
        value = float(tok)
    except ValueError:
        raise ParseError(f"bad label {tok!r}", line=lineno) from None
    if not np.isfinite(value):
        raise ParseError(f"bad label {tok!r}", line=lineno)
    return value


def parse_sparse_lines(lines, n_features=None) -> RawDataset:
    labels, rows = [], []
    max_index = 0
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        tokens = text.split()
        labels.append(_parse_label(tokens[0], lineno))
        idx = np.empty(len(tokens) - 1, dtype=np.int64)
        val = np.empty(len(tokens) - 1)
        prev = 0
        for k, tok in enumerate(tokens[1:]):
            key, sep, raw = tok.partition(":")
            if not sep:
                raise ParseError(f"expected index:value, got {tok!r}", line=lineno)
            try:
                index = int(key)
                value = float(raw)
            except ValueError:
                raise ParseError(f"bad feature {tok!r}", line=lineno) from None
            if index < 1:
                raise ParseError(f"feature index {index} is not positive", line=lineno)
            if index <= prev:
                raise ParseError(f"feature indices not increasing at {index}", line=lineno)
            prev = index
            idx[k] = index
            val[k] = value
        rows.append((idx, val))
        max_index = max(max_index, prev)
    if n_features is not None and max_index > n_features:
        raise ConfigurationError(f"file uses feature {max_index} but {n_features} were declared")
    return RawDataset(np.array(labels), rows, max_index if n_features is None else int(n_features))


def load_sparse_text(path, n_features=None) -> RawDataset:
    with open(path, encoding="ascii") as fh:
        return parse_sparse_lines(fh, n_features)


def _format_number(v):
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def write_sparse_text(path, labels, features):
    """Write dense rows in sparse text form; zero entries are omitted and
    values use a round-trip exact representation."""
    features = np.asarray(features, dtype=np.float64)
    with open(path, "w", encoding="ascii") as fh:
        for y, row in zip(labels, features):
            nz = np.flatnonzero(row)
            parts = [_format_number(y)] + [f"{j + 1}:{_format_number(row[j])}" for j in nz]
            fh.write(" ".join(parts) + "\n")


# -- scaling -----------------------------------------------------------------

@dataclass
class Scaler:
    mode: str = "none"
    params: dict = field(default_factory=dict)

    @classmethod
    def fit(cls, X, mode="none"):
        if mode not in SCALING_MODES:
            raise ConfigurationError(f"unknown scaling mode {mode!r}; choose from {SCALING_MODES}")
        X = np.asarray(X, dtype=np.float64)
        if mode == "per-feature":
            return cls(mode, {"low": X.min(axis=0), "high": X.max(axis=0)})
        if mode == "global-min-max":
            lo, hi = float(X.min()), float(X.max())
            if hi == lo:
                raise ConfigurationError(f"degenerate range: every value equals {lo}")
            return cls(mode, {"low": lo, "high": hi})
        return cls(mode)

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if self.mode == "none":
            return X.copy()
        if self.mode == "divide-255":
            return X / 255.0
        lo, hi = self.params["low"], self.params["high"]
        if self.mode == "global-min-max":
            return (X - lo) / (hi - lo)
        span = hi - lo
        # constant features carry no information; send them to 0
        safe = np.where(span > 0, span, 1.0)
        out = 2.0 * (X - lo) / safe - 1.0
        return np.where(span > 0, out, 0.0)


def scale(X, mode="none", fit_on=None):
    """Fit a scaler on ``fit_on`` (default ``X``) and apply it to ``X``."""
    return Scaler.fit(X if fit_on is None else fit_on, mode).transform(X)


# -- labels ------------------------------------------------------------------

class LabelMap:
    """Sorted raw labels mapped to classes 0..K-1 (shown to users as 1..K).

    With ``binary`` the target is a single column of +-1: labels already in
    {-1, +1} are kept, otherwise the larger label becomes +1.
    """

    def __init__(self, classes, binary=False):
        self.classes = np.unique(np.asarray(classes, dtype=np.float64))
        self.binary = bool(binary)
        if self.binary and self.classes.size != 2:
            raise ConfigurationError(f"binary mode needs exactly 2 labels, found {self.classes.size}")

    @classmethod
    def from_labels(cls, labels, binary=False):
        return cls(labels, binary)

    @property
    def K(self):
        return self.classes.size

    @property
    def n_outputs(self):
        return 1 if self.binary else self.K

    def index(self, labels):
        labels = np.asarray(labels, dtype=np.float64)
        pos = np.searchsorted(self.classes, labels)
        pos = np.clip(pos, 0, self.K - 1)
        bad = self.classes[pos] != labels
        if np.any(bad):
            raise LabelError(f"label {labels[bad][0]!r} not among the known labels {self.classes.tolist()}")
        return pos

    def encode(self, labels):
        pos = self.index(labels)
        if self.binary:
            return np.where(pos == 1, 1.0, -1.0)[:, None]
        return one_hot(pos, self.K)

    def decode(self, outputs):
        """Raw labels predicted from network outputs."""
        outputs = np.asarray(outputs)
        if self.binary:
            return np.where(outputs.reshape(-1) >= 0, self.classes[1], self.classes[0])
        return self.classes[np.argmax(outputs, axis=1)]


def one_hot(class_index, K):
    class_index = np.asarray(class_index, dtype=np.int64)
    if class_index.size and (class_index.min() < 0 or class_index.max() >= K):
        raise LabelError(f"class index outside 0..{K - 1}")
    out = np.zeros((class_index.size, K))
    out[np.arange(class_index.size), class_index] = 1.0
    return out


# -- splits ------------------------------------------------------------------

def stratified_split(labels, test_count, seed):
    """Indices (train, test) with per-class test counts as close to
    proportional as possible (largest-remainder rounding)."""
    labels = np.asarray(labels)
    n = labels.size
    if not 0 < test_count < n:
        raise ConfigurationError(f"test_count must lie in (0, {n})")
    classes, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    exact = counts * test_count / n
    quota = np.floor(exact).astype(int)
    short = test_count - quota.sum()
    order = np.lexsort((np.arange(classes.size), -(exact - quota)))
    quota[order[:short]] += 1
    if np.any(counts - quota == 0):
        bad = classes[np.flatnonzero(counts - quota == 0)[0]]
        raise StratificationError(f"class {bad!r} would have no training instances")
    gen = rng.stream(seed, rng.SPLIT, 0, counter=0)
    test = []
    for c in range(classes.size):
        members = np.flatnonzero(inverse == c)
        test.append(gen.choice(members, size=quota[c], replace=False))
    test = np.sort(np.concatenate(test))
    train = np.setdiff1d(np.arange(n), test)
    return train, test


def ratio_split(n, fraction, seed):
    """Random (first, second) index split with round(fraction * n) in the first part."""
    if not 0 < fraction < 1:
        raise ConfigurationError("fraction must lie in (0, 1)")
    k = int(round(fraction * n))
    if not 0 < k < n:
        raise ConfigurationError(f"split of {n} instances at {fraction} leaves an empty side")
    perm = rng.stream(seed, rng.SPLIT, 0, counter=1).permutation(n)
    return np.sort(perm[:k]), np.sort(perm[k:])


# -- convenience ---------------------------------------------------------------

@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray  # raw labels


def load_dataset(path, n_features=None) -> Dataset:
    raw = load_sparse_text(path, n_features)
    return Dataset(raw.dense(), raw.labels)


def resolve_path(path, base=None):
    p = Path(path)
    if not p.is_absolute() and base is not None:
        p = Path(base) / p
    return p
