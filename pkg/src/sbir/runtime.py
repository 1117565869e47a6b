"""Simulated heap with per-granule shadow bounds and the boundary check.

Every 8-byte heap granule owns one 64-bit shadow word stored at
``granule + shadow_offset``.  The low 32 bits hold the distance (in
granules) back to the chunk's first byte, the high 32 bits the distance
forward to its end.  The recorded end includes ``reserved_bytes`` of
zero-filled slack after the rounded request.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from .types import round_up8

GIB = 1 << 30
DEFAULT_RESERVE = 16
LOW_MASK = 0xFFFFFFFF
PAGE_BITS = 16  # shadow words per numpy page = 2**PAGE_BITS


class RuntimeFault(Exception):
    pass


class SizeTooLarge(RuntimeFault):
    pass


class OutOfMemory(RuntimeFault):
    pass


class InvalidFree(RuntimeFault):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RegionConfig:
    heap_base: int = 0x5000_0000_0000
    heap_size: int = GIB
    shadow_offset: int = 0x0400_0000_0000
    reserved_bytes: int = DEFAULT_RESERVE
    max_alloc: int = 8 * GIB
    stack_base: int = 0x7FF0_0000_0000
    global_base: int = 0x0000_1000_0000

    def __post_init__(self) -> None:
        for name in ("heap_base", "heap_size", "shadow_offset", "reserved_bytes"):
            if getattr(self, name) % 8:
                raise ConfigError(f"{name} must be a multiple of 8")
        if self.reserved_bytes < 0:
            raise ConfigError("reserved_bytes must be >= 0")
        if self.max_alloc > 8 * GIB:
            raise ConfigError("max_alloc is limited to 8 GiB")
        if self.shadow_offset < self.heap_size:
            raise ConfigError("shadow region overlaps the heap")
        shadow_lo = self.heap_base + self.shadow_offset
        shadow_hi = shadow_lo + self.heap_size
        for name in ("stack_base", "global_base"):
            base = getattr(self, name)
            if shadow_lo <= base < shadow_hi or self.heap_base <= base < self.heap_end:
                raise ConfigError(f"{name} collides with heap or shadow")

    @property
    def heap_end(self) -> int:
        return self.heap_base + self.heap_size

    def is_heap(self, addr: int) -> bool:
        return self.heap_base <= addr < self.heap_base + self.heap_size

    def usable_size(self, size: int) -> int:
        return round_up8(max(size, 1)) + self.reserved_bytes


@dataclass
class Chunk:
    begin: int
    requested: int
    usable: int
    state: str = "live"  # live | freed
    seq: int = 0

    @property
    def end(self) -> int:
        return self.begin + self.usable

    @property
    def data_end(self) -> int:
        """End of the rounded request; reserved slack starts here."""
        return self.begin + round_up8(max(self.requested, 1))

    @property
    def live(self) -> bool:
        return self.state == "live"


@dataclass(frozen=True)
class CheckVerdict:
    kind: str  # inBounds | oobUnderflow | oobOverflow | notHeap
    res: int = 0
    bound: int = 0

    @property
    def ok(self) -> bool:
        return self.kind in ("inBounds", "notHeap")


IN_BOUNDS = CheckVerdict("inBounds")
NOT_HEAP = CheckVerdict("notHeap")


def encode_word(granule: int, begin: int, end: int) -> int:
    return ((granule - begin) >> 3) | (((end - granule) >> 3) << 32)


def decode_word(granule: int, word: int) -> tuple[int, int]:
    beg = granule - ((word & LOW_MASK) << 3)
    end = granule + ((word >> 32) << 3)
    return beg, end


class ShadowMemory:
    """Sparse shadow store: numpy pages of uint64 words keyed by page index."""

    def __init__(self, config: RegionConfig):
        self.config = config
        self.pages: dict[int, np.ndarray] = {}
        self.bytes_touched = 0

    def _index(self, granule: int) -> int:
        return (granule + self.config.shadow_offset - self.config.heap_base) >> 3

    def read(self, granule: int) -> int:
        idx = self._index(granule)
        page = self.pages.get(idx >> PAGE_BITS)
        self.bytes_touched += 8
        if page is None:
            return 0
        return int(page[idx & ((1 << PAGE_BITS) - 1)])

    def _spans(self, granule: int, count: int):
        idx = self._index(granule)
        done = 0
        while done < count:
            p, off = divmod(idx + done, 1 << PAGE_BITS)
            n = min(count - done, (1 << PAGE_BITS) - off)
            yield p, off, done, n
            done += n

    def write_range(self, granule: int, words: np.ndarray) -> None:
        for p, off, done, n in self._spans(granule, len(words)):
            page = self.pages.get(p)
            if page is None:
                page = self.pages[p] = np.zeros(1 << PAGE_BITS, dtype=np.uint64)
            page[off:off + n] = words[done:done + n]
        self.bytes_touched += 8 * len(words)

    def read_range(self, granule: int, count: int) -> np.ndarray:
        out = np.zeros(count, dtype=np.uint64)
        for p, off, done, n in self._spans(granule, count):
            page = self.pages.get(p)
            if page is not None:
                out[done:done + n] = page[off:off + n]
        return out

    def clear_range(self, granule: int, count: int) -> None:
        for p, off, _, n in self._spans(granule, count):
            page = self.pages.get(p)
            if page is not None:
                page[off:off + n] = 0
        self.bytes_touched += 8 * count


def chunk_words(usable: int) -> np.ndarray:
    g = np.uint64(usable >> 3)
    ks = np.arange(usable >> 3, dtype=np.uint64)
    return ks | ((g - ks) << np.uint64(32))


class Allocator(Protocol):
    """Placement policy: the shadow layer never depends on which one is used."""

    name: str

    def place(self, usable: int) -> int: ...

    def release(self, begin: int, usable: int) -> None: ...


class BumpAllocator:
    """Bump pointer from the heap base plus exact-size free lists."""

    name = "bump"

    def __init__(self, config: RegionConfig):
        self.top = config.heap_base
        self.limit = config.heap_end
        self.free_lists: dict[int, list[int]] = {}

    def place(self, usable: int) -> int:
        fl = self.free_lists.get(usable)
        if fl:
            return fl.pop()
        if self.top + usable > self.limit:
            raise OutOfMemory(f"heap exhausted allocating {usable} bytes")
        begin = self.top
        self.top += usable
        return begin

    def release(self, begin: int, usable: int) -> None:
        self.free_lists.setdefault(usable, []).append(begin)


class TopDownAllocator:
    """Places chunks downward from the heap end and never reuses memory."""

    name = "topdown"

    def __init__(self, config: RegionConfig):
        self.bottom = config.heap_end
        self.floor = config.heap_base

    def place(self, usable: int) -> int:
        if self.bottom - usable < self.floor:
            raise OutOfMemory(f"heap exhausted allocating {usable} bytes")
        self.bottom -= usable
        return self.bottom

    def release(self, begin: int, usable: int) -> None:
        pass


ALLOCATORS = {"bump": BumpAllocator, "topdown": TopDownAllocator}


@dataclass
class RuntimeStats:
    allocs: int = 0
    frees: int = 0
    bytes_allocated: int = 0


class ShadowRuntime:
    def __init__(self, config: Optional[RegionConfig] = None, allocator: str | Allocator = "bump"):
        self.config = config or RegionConfig()
        if isinstance(allocator, str):
            allocator = ALLOCATORS[allocator](self.config)
        self.allocator = allocator
        self.shadow = ShadowMemory(self.config)
        self.chunks: dict[int, Chunk] = {}
        self._begins: list[int] = []
        self.stats = RuntimeStats()
        self._seq = 0

    # -- allocation -------------------------------------------------------

    def alloc(self, size: int) -> int:
        cfg = self.config
        if size < 0 or size > cfg.max_alloc:
            raise SizeTooLarge(f"allocation of {size} bytes exceeds {cfg.max_alloc}")
        usable = cfg.usable_size(size)
        if usable >= 1 << 33:
            # both distances must stay below 2**30 granules
            raise SizeTooLarge(f"allocation of {size} bytes plus reserve exceeds the encodable range")
        begin = self.allocator.place(usable)
        self._seq += 1
        chunk = Chunk(begin, size, usable, "live", self._seq)
        self._insert(chunk)
        self.shadow.write_range(begin, chunk_words(usable))
        self.stats.allocs += 1
        self.stats.bytes_allocated += size
        return begin

    def _insert(self, chunk: Chunk) -> None:
        # freed records overlapped by the new chunk are forgotten
        i = max(bisect.bisect_right(self._begins, chunk.begin) - 1, 0)
        drop = []
        while i < len(self._begins) and self._begins[i] < chunk.end:
            old = self.chunks[self._begins[i]]
            if old.end > chunk.begin:
                if old.live:
                    raise RuntimeFault(f"allocator returned overlapping chunk at {chunk.begin:#x}")
                drop.append(old.begin)
            i += 1
        for b in drop:
            del self.chunks[b]
            self._begins.remove(b)
        bisect.insort(self._begins, chunk.begin)
        self.chunks[chunk.begin] = chunk

    def free(self, begin: int) -> None:
        chunk = self.chunks.get(begin)
        if chunk is None or not chunk.live:
            raise InvalidFree(f"free of {begin:#x}, which is not a live chunk")
        chunk.state = "freed"
        self.shadow.clear_range(begin, chunk.usable >> 3)
        self.allocator.release(begin, chunk.usable)
        self.stats.frees += 1

    # -- chunk table (never consults shadow) -------------------------------

    def chunk_at(self, addr: int) -> Optional[Chunk]:
        """Most recent chunk whose [begin, end) holds ``addr``, live or freed."""
        i = bisect.bisect_right(self._begins, addr) - 1
        if i < 0:
            return None
        chunk = self.chunks[self._begins[i]]
        return chunk if addr < chunk.end else None

    def live_chunk_at(self, addr: int) -> Optional[Chunk]:
        c = self.chunk_at(addr)
        return c if c is not None and c.live else None

    def live_chunks(self) -> list[Chunk]:
        return [self.chunks[b] for b in self._begins if self.chunks[b].live]

    # -- boundary checking ------------------------------------------------

    def extract(self, old: int) -> Optional[tuple[int, int]]:
        """Extraction stage: (beg, end) for old's granule, None if not heap."""
        if not self.config.is_heap(old):
            return None
        align = old & ~7
        return decode_word(align, self.shadow.read(align))

    def bound_check(self, old: int, res: int) -> CheckVerdict:
        bounds = self.extract(old)
        if bounds is None:
            return NOT_HEAP
        beg, end = bounds
        if res < beg:
            return CheckVerdict("oobUnderflow", res, beg)
        if res >= end:
            return CheckVerdict("oobOverflow", res, end)
        return IN_BOUNDS

    def check_range(self, ptr: int, length: int) -> CheckVerdict:
        """Intrinsic argument check: requires [ptr, ptr + length) inside the chunk."""
        if length <= 0:
            return IN_BOUNDS if self.config.is_heap(ptr) else NOT_HEAP
        bounds = self.extract(ptr)
        if bounds is None:
            return NOT_HEAP
        beg, end = bounds
        if ptr < beg:
            return CheckVerdict("oobUnderflow", ptr, beg)
        if ptr + length - 1 >= end:
            return CheckVerdict("oobOverflow", ptr + length - 1, end)
        return IN_BOUNDS

    # -- dumps ------------------------------------------------------------

    def dump_shadow(self) -> list[dict]:
        out = []
        for c in self.live_chunks():
            words = self.shadow.read_range(c.begin, c.usable >> 3)
            for k, w in enumerate(words):
                w = int(w)
                out.append({"granule": c.begin + 8 * k, "low": w & LOW_MASK, "high": w >> 32})
        return sorted(out, key=lambda d: d["granule"])

    def dump_chunks(self) -> list[dict]:
        return [
            {"begin": c.begin, "requested": c.requested, "usable": c.usable, "state": c.state}
            for c in (self.chunks[b] for b in self._begins)
        ]
