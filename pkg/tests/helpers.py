"""Oracles shared by the unit and acceptance tests.

Nothing here reads shadow memory: every expected value is derived from the
chunk table or from the allocation sizes directly.
"""

from __future__ import annotations

import numpy as np

from sbir.runtime import LOW_MASK, RegionConfig, ShadowRuntime

RESERVES = (0, 8, 16, 64)


def table_interval(rt: ShadowRuntime, addr: int) -> tuple[int, int]:
    """[beg, end) the checker must use for a heap address, from the chunk table.

    Freed or never-allocated heap granules describe an empty interval at the
    granule itself.
    """
    c = rt.live_chunk_at(addr)
    if c is None:
        g = addr & ~7
        return g, g
    return c.begin, c.begin + c.usable


def oracle_verdict(rt: ShadowRuntime, old: int, res: int) -> str:
    if not rt.config.is_heap(old):
        return "notHeap"
    beg, end = table_interval(rt, old)
    if res < beg:
        return "oobUnderflow"
    if res >= end:
        return "oobOverflow"
    return "inBounds"


def decode_all(rt: ShadowRuntime, begin: int, usable: int) -> tuple[np.ndarray, np.ndarray]:
    """Decode every granule of [begin, begin+usable) with the two-line formula."""
    g = np.arange(begin, begin + usable, 8, dtype=np.uint64)
    w = rt.shadow.read_range(begin, usable >> 3).astype(np.uint64)
    beg = g - ((w & np.uint64(LOW_MASK)) << np.uint64(3))
    end = g + ((w >> np.uint64(32)) << np.uint64(3))
    return beg, end


def expected_usable(size: int, reserve: int) -> int:
    return ((max(size, 1) + 7) // 8) * 8 + reserve


def random_sequence_check(rng: np.random.Generator, reserve: int, allocator: str, ops: int) -> int:
    """Run one random alloc/free sequence; return the number of granules verified.

    Raises AssertionError on the first granule whose decoded bounds differ
    from its chunk's [begin, begin + usable).
    """
    rt = ShadowRuntime(RegionConfig(reserved_bytes=reserve), allocator)
    live: list[tuple[int, int]] = []
    for _ in range(ops):
        if live and rng.random() < 0.3:
            begin, _size = live.pop(int(rng.integers(len(live))))
            rt.free(begin)
        else:
            # log-uniform sizes over 1..2**20
            size = int(np.exp(rng.uniform(0, np.log(2 ** 20 + 1))))
            size = min(max(size, 1), 2 ** 20)
            live.append((rt.alloc(size), size))
    checked = 0
    for begin, size in live:
        usable = expected_usable(size, reserve)
        beg, end = decode_all(rt, begin, usable)
        assert np.all(beg == begin), (begin, size, reserve)
        assert np.all(end == begin + usable), (begin, size, reserve)
        checked += len(beg)
    return checked
