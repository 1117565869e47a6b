import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbir.corpus import build, runtime_config
from sbir.instrument import instrument
from sbir.parser import parse_program
from sbir.types import wrap_int
from sbir.vm import Machine, RunConfig


def run(text, inputs=(), opt="none", reserve=16, checks=True, **kw):
    ip = instrument(parse_program(text))
    prog = build(ip, opt, reserve, checks)
    cfg = runtime_config(reserve, kw.pop("allocator", "bump"), trace=kw.pop("trace", False))
    if kw:
        cfg = RunConfig(region=cfg.region, allocator=cfg.allocator, trace=cfg.trace, **kw)
    return Machine(prog).run(list(inputs), cfg)


WRITE_AT = """fn main() {
entry:
  %k = call input(0)
  %p = alloc 12
  %r = alloc 12
  %q = gep %p, i8, %k
  store i8 7, %q
  %v = load i8 %q
  call output(%v)
  ret
}
"""


@pytest.mark.parametrize("k,expect", [(0, "ok"), (11, "ok"), (12, "BR"), (15, "BR"), (31, "BR"),
                                      (32, "OD"), (-1, "OD"), (10 ** 6, "OD")])
def test_checked_outcomes(k, expect):
    # usable = 16 + 16: bytes 12..15 are rounding slack, 16..31 the reserve
    rep = run(WRITE_AT, [k])
    assert rep.outcome == expect
    if expect == "ok":
        assert rep.output == [7]
    if expect == "BR":
        kind = "slack" if k < 16 else "reserved"
        assert rep.eventCounts.get(kind, 0) >= 1
        assert rep.consequence == "S2"


def test_unchecked_overlap_is_s3():
    rep = run(WRITE_AT, [40], checks=False)
    assert rep.outcome == "ok"
    assert rep.eventCounts.get("overlap")
    assert rep.consequence == "S3"


def test_unchecked_unmapped_faults():
    rep = run(WRITE_AT, [1 << 24], checks=False)
    assert rep.outcome == "fault" and rep.consequence == "S1"
    assert rep.exit_code == 4


def test_exit_codes():
    assert run(WRITE_AT, [0]).exit_code == 0
    assert run(WRITE_AT, [12]).exit_code == 0
    assert run(WRITE_AT, [-1]).exit_code == 3


def test_step_budget():
    text = """fn main() {
entry:
  br loop
loop:
  br loop
}
"""
    rep = run(text, step_budget=1000)
    assert rep.outcome == "budget" and rep.exit_code == 5


def test_call_depth_limit():
    text = """fn f(%x: i64) {
entry:
  call f(%x)
  ret
}

fn main() {
entry:
  call f(1)
  ret
}
"""
    assert run(text, max_depth=50).outcome == "fault"


def test_phis_read_simultaneously():
    text = """fn main() {
entry:
  br head
head:
  %a = phi i64 [1, entry], [%b, head2]
  %b = phi i64 [2, entry], [%a, head2]
  %i = phi i64 [0, entry], [%i2, head2]
  %c = slt i64 %i, 3
  brif %c, head2, exit
head2:
  %i2 = add i64 %i, 1
  br head
exit:
  call output(%a)
  call output(%b)
  ret
}
"""
    assert run(text).output == [2, 1]


ARITH = {
    "add": lambda a, b: a + b, "sub": lambda a, b: a - b, "mul": lambda a, b: a * b,
    "and": lambda a, b: a & b, "or": lambda a, b: a | b, "xor": lambda a, b: a ^ b,
}


@settings(max_examples=100, deadline=None)
@given(op=st.sampled_from(sorted(ARITH)), ty=st.sampled_from([8, 16, 32, 64]),
       a=st.integers(-2 ** 70, 2 ** 70), b=st.integers(-2 ** 70, 2 ** 70))
def test_arith_wraps_like_twos_complement(op, ty, a, b):
    text = f"""fn main() {{
entry:
  %a = call input(0)
  %b = call input(1)
  %r = {op} i{ty} %a, %b
  call output(%r)
  ret
}}
"""
    wa, wb = wrap_int(a, 64), wrap_int(b, 64)
    rep = run(text, [wa, wb])
    assert rep.output == [wrap_int(ARITH[op](wrap_int(wa, ty), wrap_int(wb, ty)), ty)]


def test_division_by_zero_faults():
    text = "fn main() {\nentry:\n  %z = call input(0)\n  %q = sdiv i64 5, %z\n  ret\n}\n"
    assert run(text, [0]).outcome == "fault"


def test_intrinsics_checked_by_extent():
    text = """fn main() {
entry:
  %n = call input(0)
  %p = alloc 16
  call memset(%p, 1, %n)
  %v = load i8 %p
  call output(%v)
  ret
}
"""
    assert run(text, [16]).output == [1]
    assert run(text, [32]).outcome == "BR"
    assert run(text, [33]).outcome == "OD"
    # unchecked, byte 32 lies past the only chunk: unmapped
    assert run(text, [33], checks=False).outcome == "fault"


def test_null_from_reserve_is_transformed_fault():
    text = """struct node { next: node*, v: i64 }
fn main() {
entry:
  %raw = alloc 16
  %ns = cast %raw to node*
  %n1 = gep %ns, node, 1
  %np = fieldgep %n1, node, 0
  %nx = load node* %np
  %vp = fieldgep %nx, node, 1
  %v = load i64 %vp
  ret
}
"""
    rep = run(text, trace=True)
    assert rep.outcome == "TF"
    assert rep.eventCounts.get("reservedZeroLoad") == 1
    assert rep.detail["loadedFrom"] == rep.events[0]["addr"]
    assert rep.trace and all("verdict" in t for t in rep.trace)
    assert run(text, reserve=0).outcome == "OD"


def test_gep_wrap_is_detected():
    text = """fn main() {
entry:
  %p = alloc 8
  %q = gep %p, i8, -9223372036854775807
  %r = gep %q, i8, -9223372036854775807
  store i8 1, %r
  ret
}
"""
    assert run(text).outcome in ("OD", "fault")
    assert run(text, checks=False).outcome == "fault"


def test_allocators_same_outcomes():
    for k in (0, 12, 31, 32, -3):
        assert run(WRITE_AT, [k]).outcome == run(WRITE_AT, [k], allocator="topdown").outcome


def test_stats_count_checks():
    rep = run(WRITE_AT, [1])
    assert rep.stats.extractionsExecuted == 1
    assert rep.stats.halfChecksExecuted == 2
    assert rep.stats.dynamic_checks == 3
    full = run(WRITE_AT, [1], opt="all")
    assert full.stats.dynamic_checks <= rep.stats.dynamic_checks


def test_report_json_roundtrip():
    import json

    rep = run(WRITE_AT, [12])
    d = json.loads(rep.dumps())
    assert d["outcome"] == "BR" and d["consequence"] == "S2"
    assert set(d) >= {"outcome", "detail", "output", "stats", "events", "eventCounts", "returnValue"}
