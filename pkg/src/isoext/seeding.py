"""Counter-based seed streams.

Every random draw comes from ``stream(master, label, index)``: a Philox
generator keyed by SeedSequence(master, spawn_key=(crc32(label), index)).
Monte Carlo work is cut into fixed blocks of BLOCK samples and block i
uses index i, so results do not depend on how blocks are scheduled.
"""
from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 8192


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def stream(master: int, label: str, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master), spawn_key=(label_key(label), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n: int, block: int = BLOCK) -> list[tuple[int, int]]:
    """[(start, stop), ...] covering range(n) in fixed-size blocks."""
    return [(i, min(i + block, n)) for i in range(0, n, block)]


def map_blocks(fn, n: int, workers: int = 1, block: int = BLOCK) -> list:
    """fn(block_index, start, stop) over all blocks, results in block order."""
    spans = blocks(n, block)
    if workers <= 1 or len(spans) <= 1:
        return [fn(i, a, b) for i, (a, b) in enumerate(spans)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(fn, i, a, b) for i, (a, b) in enumerate(spans)]
        return [f.result() for f in futs]
