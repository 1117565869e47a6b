import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import RESERVES, decode_all, expected_usable, oracle_verdict, random_sequence_check
from sbir.runtime import (
    ConfigError,
    InvalidFree,
    RegionConfig,
    ShadowRuntime,
    SizeTooLarge,
    decode_word,
    encode_word,
)

sizes = st.integers(min_value=0, max_value=1 << 20)
reserves = st.sampled_from(RESERVES)
allocators = st.sampled_from(("bump", "topdown"))


@given(begin=st.integers(0, 1 << 40).map(lambda x: x * 8), granules=st.integers(1, 1 << 17), data=st.data())
def test_word_roundtrip(begin, granules, data):
    k = data.draw(st.integers(0, granules - 1))
    g = begin + 8 * k
    end = begin + 8 * granules
    assert decode_word(g, encode_word(g, begin, end)) == (begin, end)


@given(size=sizes, n=reserves, alloc=allocators)
def test_usable_size_and_alignment(size, n, alloc):
    rt = ShadowRuntime(RegionConfig(reserved_bytes=n), alloc)
    p = rt.alloc(size)
    c = rt.chunk_at(p)
    assert p % 8 == 0
    assert c.usable == expected_usable(size, n)
    beg, end = decode_all(rt, p, c.usable)
    assert set(beg.tolist()) == {p} and set(end.tolist()) == {p + c.usable}


@settings(max_examples=50)
@given(seed=st.integers(0, 2 ** 32), n=reserves, alloc=allocators)
def test_random_sequences_decode_exactly(seed, n, alloc):
    random_sequence_check(np.random.default_rng(seed), n, alloc, ops=8)


def test_free_zeroes_shadow():
    rt = ShadowRuntime()
    p = rt.alloc(40)
    usable = rt.chunk_at(p).usable
    rt.free(p)
    assert not rt.shadow.read_range(p, usable >> 3).any()
    assert rt.bound_check(p, p).kind == "oobOverflow"
    assert rt.bound_check(p + 8, p).kind == "oobUnderflow"


def test_freed_memory_reused_gets_new_shadow():
    rt = ShadowRuntime(allocator="bump")
    p = rt.alloc(24)
    rt.free(p)
    q = rt.alloc(24)
    assert q == p
    assert rt.bound_check(q, q + 23).ok


@settings(max_examples=300)
@given(size=st.integers(0, 4096), n=reserves, d_old=st.integers(-64, 4200), d_res=st.integers(-64, 4200),
       freed=st.booleans())
def test_bound_check_matches_chunk_table(size, n, d_old, d_res, freed):
    rt = ShadowRuntime(RegionConfig(reserved_bytes=n))
    left = rt.alloc(16)
    p = rt.alloc(size)
    rt.alloc(8)
    if freed:
        rt.free(p)
    old, res = p + d_old, p + d_res
    assert rt.bound_check(old, res).kind == oracle_verdict(rt, old, res)
    assert left < p


def test_boundary_bytes():
    rt = ShadowRuntime(RegionConfig(reserved_bytes=16))
    p = rt.alloc(10)  # usable = 16 + 16
    assert rt.bound_check(p, p + 31).ok
    assert rt.bound_check(p, p + 32).kind == "oobOverflow"
    assert rt.bound_check(p + 31, p).ok
    assert rt.bound_check(p, p - 1).kind == "oobUnderflow"


def test_non_heap_passes():
    rt = ShadowRuntime()
    g = rt.config.global_base
    assert rt.bound_check(g, g + 10 ** 6).kind == "notHeap"
    assert rt.check_range(g, 100).kind == "notHeap"


def test_check_range_extent():
    rt = ShadowRuntime(RegionConfig(reserved_bytes=0))
    p = rt.alloc(16)
    assert rt.check_range(p, 16).ok
    assert rt.check_range(p + 8, 9).kind == "oobOverflow"
    assert rt.check_range(p, 0).ok


@pytest.mark.parametrize("kw", [
    {"reserved_bytes": 4}, {"reserved_bytes": -8}, {"heap_base": 12},
    {"shadow_offset": 1 << 20}, {"max_alloc": 16 << 30},
    {"heap_base": 0x10000},  # heap would cover global_base
])
def test_config_rejected(kw):
    with pytest.raises(ConfigError):
        RegionConfig(**kw)


def test_alloc_limits_and_invalid_free():
    rt = ShadowRuntime()
    with pytest.raises(SizeTooLarge):
        rt.alloc(9 << 30)
    with pytest.raises(SizeTooLarge):
        rt.alloc(-1)
    p = rt.alloc(8)
    rt.free(p)
    with pytest.raises(InvalidFree):
        rt.free(p)
    with pytest.raises(InvalidFree):
        rt.free(p + 8)


def test_allocators_place_differently():
    a, b = ShadowRuntime(allocator="bump"), ShadowRuntime(allocator="topdown")
    pa, qa = a.alloc(8), a.alloc(8)
    pb, qb = b.alloc(8), b.alloc(8)
    assert qa > pa and qb < pb
