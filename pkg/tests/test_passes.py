import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CORPUS
from helpers import RESERVES
from sbir.corpus import category, runtime_config
from sbir.instrument import count_static_checks, instrument
from sbir.optimizer.pipeline import (
    ORDER,
    ConfigMismatch,
    PassConfig,
    dump_log,
    load_log,
    optimize,
    replay,
)
from sbir.parser import parse_program
from sbir.printer import print_program
from sbir.vm import Machine

SIZES = {"i8": 1, "i16": 2, "i32": 4, "i64": 8}


def run_passes(text, passes, reserve=16):
    ip = instrument(parse_program(text))
    return optimize(ip, PassConfig(frozenset(passes), reserve))


def by_site(log):
    out = {}
    for e in log:
        out.setdefault(e["site"], []).append((e["pass"], e["action"]))
    return out


def removed(log):
    return {e["site"]: e["pass"] for e in log if e["action"] == "removeSite"}


def load_case(name):
    return (CORPUS / f"{name}.sbir").read_text()


# -- rt-elim -------------------------------------------------------------------


ONE_ACCESS = """fn main() {{
entry:
  %n = call input(0)
  %p = alloc %n
  %q = gep %p, i8, {c}
  store {t} 1, %q
  ret
}}
"""


@settings(max_examples=200)
@given(c=st.integers(-16, 80), t=st.sampled_from(sorted(SIZES)), n=st.sampled_from(RESERVES))
def test_rt_elim_removes_exactly_within_reserve(c, t, n):
    res = run_passes(ONE_ACCESS.format(c=c, t=t), ["rt-elim"], n)
    expect = 0 <= c and c + SIZES[t] <= n
    assert ("main:%q" in removed(res.log)) == expect


def test_rt_elim_keeps_escaping_pointer():
    for n in (8, 16, 64):
        res = run_passes(load_case("reserve_escape"), ["rt-elim"], n)
        assert "bar:%e" not in removed(res.log)


def test_rt_elim_depends_on_reserve():
    r0 = removed(run_passes(load_case("reserve_escape"), ["rt-elim"], 0).log)
    assert not {"bar:%c0", "bar:%c1", "bar:%c2"} & set(r0)
    r8 = removed(run_passes(load_case("reserve_escape"), ["rt-elim"], 8).log)
    assert {"bar:%c0", "bar:%c1", "bar:%c2"} <= set(r8)


def test_rt_elim_unanchored_base_kept():
    text = """fn main() {
entry:
  %p = alloc 64
  %k = call input(0)
  %b = gep %p, i8, %k
  %q = gep %b, i8, 2
  store i8 1, %q
  ret
}
"""
    assert "main:%q" not in removed(run_passes(text, ["rt-elim"], 64).log)


# -- rdt-elim ------------------------------------------------------------------


@settings(max_examples=200)
@given(size=st.integers(1, 64), c=st.integers(-8, 72), t=st.sampled_from(sorted(SIZES)))
def test_rdt_alloc_size_technique(size, c, t):
    text = f"""fn main() {{
entry:
  %p = alloc {size}
  %q = gep %p, i8, {c}
  store {t} 1, %q
  ret
}}
"""
    res = run_passes(text, ["rdt-elim"])
    assert ("main:%q" in removed(res.log)) == (0 <= c <= size - SIZES[t])


def test_rdt_dominance_sequential_offsets():
    res = run_passes(load_case("dominated_offsets"), ["rdt-elim"])
    acts = by_site(res.log)
    assert acts["touch:%y"] == [("rdt-elim", "dropOverflow")]
    assert acts["touch:%z"] == [("rdt-elim", "removeSite")]
    assert "touch:%x" not in acts


def test_rdt_needs_dominance():
    text = """fn main() {
entry:
  %n = call input(0)
  %p = alloc %n
  %c = slt i64 %n, 4
  brif %c, a, b
a:
  %x = gep %p, i8, 2
  store i8 1, %x
  br b
b:
  %y = gep %p, i8, 2
  store i8 1, %y
  ret
}
"""
    assert "main:%y" not in removed(run_passes(text, ["rdt-elim"]).log)


# -- pattern --------------------------------------------------------------------


def test_pattern_constant_array_arg():
    res = run_passes(load_case("constant_array_arg"), ["pattern"])
    assert removed(res.log).get("clear:%e") == "pattern"
    assert [f.to_json() for f in res.facts if f.to_json()["kind"] == "constantArrayArg"] == [
        {"kind": "constantArrayArg", "function": "clear", "param": "buf", "bound": 64}]


def test_pattern_constant_array_arg_needs_known_callers():
    res = run_passes(load_case("constant_array_arg_loaded"), ["pattern"])
    assert "clear:%e" not in removed(res.log)


def test_pattern_length_ptr_assoc():
    res = run_passes(load_case("length_ptr_assoc"), ["pattern"])
    r = removed(res.log)
    assert r.get("fill:%e") == "pattern" and r.get("total:%e") == "pattern"
    facts = [f.to_json() for f in res.facts]
    assert {"kind": "lengthPtrAssoc", "struct": "vec", "ptrField": 0, "lenField": 1, "elemSize": 4} in facts


@pytest.mark.parametrize("name", ["pattern_le_guard", "pattern_field_rewrite"])
def test_pattern_negatives_keep_fill(name):
    res = run_passes(load_case(name), ["pattern"])
    assert "fill:%e" not in removed(res.log)


def test_length_guard_must_be_strict():
    # i <= len reaches one past the array; the guard must not be trusted
    res = run_passes(load_case("oob_lenguard_i32"), ORDER)
    assert "fill:%g" not in removed(res.log)


# -- dir ------------------------------------------------------------------------


def test_dir_forward_loop_keeps_overflow_half():
    res = run_passes(load_case("dir_forward_loop"), ORDER)
    site = res.ip.sites["fill:%e"]
    assert site.active and site.halves == "o"


def test_dir_countdown_keeps_underflow_half():
    res = run_passes(load_case("oob_countdown_i32_10"), ORDER)
    site = res.ip.sites["main:%g"]
    assert site.active and site.halves == "u"


# -- merge ----------------------------------------------------------------------


def test_merge_shares_one_extraction():
    res = run_passes(load_case("merge_backtrace"), ORDER)
    b = res.ip.bindings["walk:sb.m0"]
    assert len(b.consumers) >= 4
    for sid in b.consumers:
        assert res.ip.sites[sid].binding == "walk:sb.m0"


def test_merge_split_by_freeing_call():
    res = run_passes(load_case("merge_barrier"), ["merge"])
    groups = sorted(sorted(b.consumers) for b in res.ip.bindings.values() if b.merged)
    assert groups == [["work:%a", "work:%b"], ["work:%c", "work:%d"]]


# -- pipeline -------------------------------------------------------------------


def test_earliest_pass_gets_credit():
    text = """fn main() {
entry:
  %p = alloc 16
  %q = gep %p, i8, 4
  store i8 1, %q
  ret
}
"""
    assert removed(run_passes(text, ORDER).log) == {"main:%q": "rt-elim"}
    assert removed(run_passes(text, ["rdt-elim", "dir"]).log) == {"main:%q": "rdt-elim"}


def test_config_mismatch():
    ip = instrument(parse_program(load_case("reserve_escape")))
    with pytest.raises(ConfigMismatch):
        optimize(ip, PassConfig(reserve=16), runtime_reserve=8)
    res = optimize(ip, PassConfig(reserve=8), runtime_reserve=8)
    with pytest.raises(ConfigMismatch):
        optimize(res.ip, PassConfig(reserve=16))


def test_pass_config_parse():
    assert PassConfig.parse("all").enabled == frozenset(ORDER)
    assert PassConfig.parse("none").enabled == frozenset()
    assert PassConfig.parse("dir, merge").label() == "dir,merge"
    with pytest.raises(ValueError):
        PassConfig.parse("dir,bogus")


CORPUS_NAMES = sorted(p.stem for p in CORPUS.glob("*.sbir"))


@pytest.mark.parametrize("name", CORPUS_NAMES)
def test_log_replay_and_idempotence(name):
    ip = instrument(parse_program(load_case(name)))
    res = optimize(ip, PassConfig())
    for e in res.log:
        assert set(e) == {"site", "pass", "action", "why"}
        assert e["pass"] in ORDER
    log = load_log(dump_log(res.log))
    assert log == json.loads(json.dumps(res.log))
    again = replay(ip, log, reserve=res.ip.reserve)
    assert print_program(again.materialize()) == print_program(res.ip.materialize())
    second = optimize(res.ip, PassConfig())
    assert second.log == []
    assert count_static_checks(second.ip) == count_static_checks(res.ip)


@pytest.mark.parametrize("name", CORPUS_NAMES[::3])
def test_static_counts_shrink_along_pipeline(name):
    res = optimize(instrument(parse_program(load_case(name))), PassConfig())
    stages = list(res.stats.values())
    for a, b in zip(stages, stages[1:]):
        assert b["activeSites"] <= a["activeSites"]
        assert b["activeHalves"] <= a["activeHalves"]
        assert b["extractions"] <= a["extractions"]


# -- generative soundness -------------------------------------------------------------


@st.composite
def access_program(draw):
    sized_by_input = draw(st.booleans())
    size = draw(st.integers(1, 40))
    lines = ["  %k0 = call input(0)", "  %k1 = call input(1)"]
    lines.append("  %p = alloc %k1" if sized_by_input else f"  %p = alloc {size}")
    ptrs = ["p"]
    for j in range(draw(st.integers(1, 6))):
        t = draw(st.sampled_from(sorted(SIZES)))
        base = draw(st.sampled_from(ptrs))
        idx = draw(st.one_of(st.integers(-3, 12).map(str), st.just("%k0")))
        lines.append(f"  %g{j} = gep %{base}, {t}, {idx}")
        if draw(st.booleans()):
            lines.append(f"  store {t} {j}, %g{j}")
        else:
            lines.append(f"  %v{j} = load {t} %g{j}")
            lines.append(f"  call output(%v{j})")
        ptrs.append(f"g{j}")
    text = "fn main() {\nentry:\n" + "\n".join(lines) + "\n  ret\n}\n"
    inputs = draw(st.lists(st.tuples(st.integers(-4, 20), st.integers(0, 48)), min_size=3, max_size=6))
    return text, [list(v) for v in inputs]


@settings(max_examples=80, deadline=None)
@given(access_program(), st.sampled_from(RESERVES), st.sampled_from(["bump", "topdown"]))
def test_optimized_agrees_with_baseline(case, n, alloc):
    text, inputs = case
    ip = instrument(parse_program(text))
    cfg = runtime_config(n, alloc)
    base = Machine(optimize(ip, PassConfig(frozenset(), n)).ip.materialize())
    for subset in [ORDER] + [(p,) for p in ORDER]:
        opt = Machine(optimize(ip, PassConfig(frozenset(subset), n)).ip.materialize())
        for v in inputs:
            rb, ro = base.run(v, cfg), opt.run(v, cfg)
            assert category(rb) == category(ro), (subset, v, rb.outcome, ro.outcome)
            if category(rb) == "clean":
                assert rb.visible() == ro.visible()


@st.composite
def loop_program(draw):
    """A helper walks a buffer in a loop; callers pass fresh or offset buffers."""
    t = draw(st.sampled_from(sorted(SIZES)))
    size = draw(st.integers(1, 48))
    start = draw(st.integers(-2, 3))
    cmp = draw(st.sampled_from(["slt", "sle"]))
    bound = draw(st.one_of(st.integers(0, 16).map(str), st.just("%m")))
    step = draw(st.integers(1, 2))
    arg_off = draw(st.integers(0, 6))
    free_mid = draw(st.booleans())
    helper = f"""fn walk(%b: i8*, %m: i64) {{
entry:
  %h = gep %b, {t}, 0
  store {t} 1, %h
  br head
head:
  %i = phi i64 [{start}, entry], [%i2, body]
  %c = {cmp} i64 %i, {bound}
  brif %c, body, exit
body:
  %e = gep %b, {t}, %i
  %v = load {t} %e
  store {t} %i, %e
  %i2 = add i64 %i, {step}
  br head
exit:
  %t = gep %b, {t}, 1
  %w = load {t} %t
  call output(%w)
  ret
}}

"""
    main = f"""fn main() {{
entry:
  %m = call input(0)
  %p = alloc {size}
  call walk(%p, %m)
  %q = alloc %m
  %r = gep %q, i8, {arg_off}
  call walk(%r, %m)
{"  free %p" if free_mid else "  %z = load i8 %p"}
  %s = alloc 8
  call walk(%s, 1)
  ret
}}
"""
    inputs = draw(st.lists(st.integers(-2, 24), min_size=3, max_size=5))
    return helper + main, [[v] for v in inputs]


@settings(max_examples=60, deadline=None)
@given(loop_program(), st.sampled_from(RESERVES), st.sampled_from(["bump", "topdown"]))
def test_optimized_loops_agree_with_baseline(case, n, alloc):
    text, inputs = case
    ip = instrument(parse_program(text))
    cfg = runtime_config(n, alloc)
    base = Machine(optimize(ip, PassConfig(frozenset(), n)).ip.materialize())
    for subset in [ORDER] + [(p,) for p in ORDER]:
        opt = Machine(optimize(ip, PassConfig(frozenset(subset), n)).ip.materialize())
        for v in inputs:
            rb, ro = base.run(v, cfg), opt.run(v, cfg)
            assert category(rb) == category(ro), (subset, v, rb.outcome, ro.outcome)
            if category(rb) == "clean":
                assert rb.visible() == ro.visible()
