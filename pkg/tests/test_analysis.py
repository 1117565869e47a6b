"""Analysis soundness checked against concrete executions on the VM."""

from hypothesis import given, settings
from hypothesis import strategies as st

from sbir.analysis.cfg import compute_dom
from sbir.analysis.paths import between
from sbir.analysis.ranges import compute_ranges
from sbir.instrument import instrument
from sbir.parser import parse_program
from sbir.types import wrap_int
from sbir.vm import Machine, RunConfig

BIN = ["add", "sub", "mul", "and", "or", "xor", "shl", "lshr", "ashr"]
DIV = ["sdiv", "srem", "udiv", "urem"]
CMPS = ["eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge"]
WIDTHS = {"i8": 8, "i16": 16, "i32": 32, "i64": 64}


@st.composite
def straight_line(draw):
    ty = draw(st.sampled_from(sorted(WIDTHS)))
    n_inputs = draw(st.integers(1, 3))
    lines = [f"  %x{k} = call input({k})" for k in range(n_inputs)]
    names = [f"x{k}" for k in range(n_inputs)]
    for k in range(draw(st.integers(1, 10))):
        op = draw(st.sampled_from(BIN + DIV))
        a = draw(st.sampled_from(names))
        if op in DIV:
            b = str(draw(st.integers(1, 50)))
        elif draw(st.booleans()):
            b = "%" + draw(st.sampled_from(names))
        else:
            b = str(draw(st.integers(-300, 300)))
        lines.append(f"  %v{k} = {op} {ty} %{a}, {b}")
        names.append(f"v{k}")
    guard = draw(st.integers(-100, 100))
    cmp = draw(st.sampled_from(CMPS))
    subject = draw(st.sampled_from(names))
    body = "\n".join(lines)
    outs = "\n".join(f"  call output(%{n})" for n in names)
    text = (f"fn main() {{\nentry:\n{body}\n  %c = {cmp} {ty} %{subject}, {guard}\n"
            f"  brif %c, yes, no\nyes:\n{outs}\n  call output(1)\n  ret\nno:\n{outs}\n  call output(0)\n  ret\n}}\n")
    inputs = draw(st.lists(st.integers(-2 ** 20, 2 ** 20), min_size=n_inputs, max_size=n_inputs))
    return text, ty, names, inputs


@settings(max_examples=150, deadline=None)
@given(straight_line())
def test_ranges_contain_observed_values(case):
    text, ty, names, inputs = case
    prog = parse_program(text)
    fn = prog.functions["main"]
    info = compute_ranges(prog, fn)
    rep = Machine(prog).run(inputs, RunConfig())
    assert rep.outcome == "ok", rep.detail
    w = WIDTHS[ty]
    *values, marker = rep.output
    block = "yes" if marker == 1 else "no"
    assert len(values) == len(names)
    for name, value in zip(names, values):
        v = wrap_int(value, w)
        assert v in info.of(name), (name, v, info.of(name))
        assert v in info.at(name, block), (name, block, v, info.at(name, block))


@settings(max_examples=60, deadline=None)
@given(start=st.integers(-20, 20), bound=st.integers(-20, 60), step=st.integers(1, 5))
def test_loop_counter_range(start, bound, step):
    text = f"""fn main() {{
entry:
  br head
head:
  %i = phi i64 [{start}, entry], [%i2, body]
  %c = slt i64 %i, {bound}
  brif %c, body, exit
body:
  call output(%i)
  %i2 = add i64 %i, {step}
  br head
exit:
  ret
}}
"""
    prog = parse_program(text)
    info = compute_ranges(prog, prog.functions["main"])
    seen = Machine(prog).run([], RunConfig()).output
    r = info.at("i", "body")
    assert all(v in r for v in seen)
    if seen:
        # the header phi starts at start and the guard caps the body side
        assert r.lo == start and r.hi == bound - 1


DIAMOND = """fn main() {
entry:
  %k = call input(0)
  %c = slt i64 %k, 3
  brif %c, a, b
a:
  br join
b:
  br join
join:
  ret
}
"""


def test_dominators_diamond():
    prog = parse_program(DIAMOND)
    d = compute_dom(prog.functions["main"])
    assert d.dominates("entry", "join")
    assert not d.dominates("a", "join")
    assert d.post_dominates("join", "entry")
    assert d.inst_dominates(("entry", 0), ("entry", 1))
    assert not d.inst_dominates(("entry", 1), ("entry", 0))


LOOP = """fn main() {
entry:
  %p = alloc 8
  br head
head:
  %i = phi i64 [0, entry], [%i2, body]
  %c = slt i64 %i, 4
  brif %c, body, exit
body:
  store i8 1, %p
  free %p
  %i2 = add i64 %i, 1
  br head
exit:
  ret
}
"""


def test_between_sees_loop_carried_instructions():
    prog = parse_program(LOOP)
    fn = prog.functions["main"]
    d = compute_dom(fn)
    # from the store to the next iteration's store, the free is on the path
    seen = [type(x).__name__ for x in between(fn, d, ("entry", 0), ("body", 0))]
    assert "Free" in seen
    straight = [type(x).__name__ for x in between(fn, d, ("entry", 0), ("entry", 1))]
    assert straight == ["Alloc"]


def test_instrument_finds_every_pointer_creation():
    text = """struct s { a: i64, b: i64 }
fn main() {
entry:
  %p = alloc 32
  %q = gep %p, i64, 2
  store i64 1, %q
  %o = cast %p to s*
  %f = fieldgep %o, s, 1
  %v = load i64 %f
  call output(%v)
  ret
}
"""
    ip = instrument(parse_program(text))
    assert set(ip.sites) == {"main:%q", "main:%o", "main:%f"}
    assert ip.sites["main:%q"].extent == 8
