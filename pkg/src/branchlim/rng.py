"""Seeded random streams and the block scheme used for parallel Monte Carlo.

Every random draw in the package comes from a ``numpy.random.Generator``
built from ``(seed, stream)``. ``SeedSequence`` hashes the pair, so distinct
stream indices give independent substreams. Work is cut into fixed-size
blocks whose stream index is the block number; the result therefore never
depends on how many worker threads executed the blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

BLOCK_SIZE = 4096
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngSeed:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64 and 0 <= self.stream <= _MASK64):
            raise ValueError("seed and stream must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, index: int) -> "RngSeed":
        """Child seed for strand ``index`` of this stream."""
        return RngSeed(self.seed, (self.stream * 1_000_003 + index + 1) & _MASK64)


def make_rng(seed: int | RngSeed | np.random.Generator | None = None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, RngSeed):
        return seed.generator()
    return RngSeed(0 if seed is None else int(seed)).generator()


def blocks(n: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    """Split ``n`` items into ``(block_index, size)`` chunks."""
    out = []
    start, idx = 0, 0
    while start < n:
        size = min(block_size, n - start)
        out.append((idx, size))
        start += size
        idx += 1
    return out


def map_blocks(
    fn: Callable[[int, int], T],
    n: int,
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
) -> list[T]:
    """Run ``fn(block_index, size)`` over all blocks, results in block order."""
    chunks = blocks(n, block_size)
    if threads <= 1 or len(chunks) <= 1:
        return [fn(i, s) for i, s in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))


def concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate(parts) if parts else np.empty(0)
