"""Deterministic random streams.

Every random draw in the package goes through :func:`stream`, which derives a
Philox (counter-based) generator from ``(global_seed, purpose, partition)``.
Normals use Box-Muller on the stream's uniform doubles so the sequence is
fixed by the generator algorithm alone.
"""

from __future__ import annotations

import zlib

import numpy as np

# Purpose tags. Values are arbitrary but frozen.
INIT = "init"
SAMPLE = "sample"
SHUFFLE = "shuffle"
SPLIT = "split"


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, partition: int = 0, counter: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, purpose, partition, counter) tuple."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, _tag(purpose), int(partition), int(counter)])
    return np.random.Generator(np.random.Philox(ss))


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normal draws via Box-Muller from ``rng.random``."""
    half = (size + 1) // 2
    u = rng.random(2 * half)
    u1 = 1.0 - u[:half]  # (0, 1], keeps log finite
    u2 = u[half:]
    rad = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * half)
    out[0::2] = rad * np.cos(2.0 * np.pi * u2)
    out[1::2] = rad * np.sin(2.0 * np.pi * u2)
    return out[:size]
