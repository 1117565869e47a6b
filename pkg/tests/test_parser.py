import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import CORPUS
from sbir.instrument import instrument
from sbir.optimizer.pipeline import PassConfig, optimize
from sbir.parser import ParseError, ValidationError, parse_program
from sbir.printer import print_program

CORPUS_FILES = sorted(CORPUS.glob("*.sbir"))


@pytest.mark.parametrize("path", CORPUS_FILES, ids=lambda p: p.stem)
def test_corpus_roundtrip(path):
    once = print_program(parse_program(path.read_text()))
    assert print_program(parse_program(once)) == once


@pytest.mark.parametrize("path", CORPUS_FILES[::4], ids=lambda p: p.stem)
def test_instrumented_roundtrip(path):
    prog = optimize(instrument(parse_program(path.read_text())), PassConfig()).ip.materialize()
    text = print_program(prog)
    again = parse_program(text)
    assert again.is_instrumented() == prog.is_instrumented()
    assert print_program(again) == text


OPS = ["add", "sub", "mul", "and", "or", "xor", "shl", "lshr", "ashr"]


@given(st.lists(st.tuples(st.sampled_from(OPS), st.integers(-2 ** 40, 2 ** 40)), min_size=1, max_size=12),
       st.sampled_from(["i8", "i16", "i32", "i64"]))
def test_generated_arith_roundtrip(ops, ty):
    lines = ["fn main() {", "entry:", f"  %v0 = add {ty} 0, 1"]
    for k, (op, c) in enumerate(ops):
        lines.append(f"  %v{k + 1} = {op} {ty} %v{k}, {c}")
    lines += [f"  call output(%v{len(ops)})", "  ret", "}"]
    text = "\n".join(lines) + "\n"
    once = print_program(parse_program(text))
    assert print_program(parse_program(once)) == once


BAD = {
    "undefined": "fn main() {\nentry:\n  %x = add i64 %y, 1\n  ret\n}\n",
    "no-terminator": "fn main() {\nentry:\n  %x = add i64 1, 1\n}\n",
    "bad-branch": "fn main() {\nentry:\n  br nowhere\n}\n",
    "redefined": "fn main() {\nentry:\n  %x = add i64 1, 1\n  %x = add i64 1, 2\n  ret\n}\n",
    "int-as-pointer": "fn main() {\nentry:\n  %x = add i64 1, 1\n  %y = load i8 %x\n  ret\n}\n",
    "unknown-op": "fn main() {\nentry:\n  %x = frob i64 1\n  ret\n}\n",
    "bad-type": "fn main() {\nentry:\n  %x = add i7 1, 1\n  ret\n}\n",
    "garbage": "hello world\n",
}


@pytest.mark.parametrize("name", sorted(BAD))
def test_invalid_programs_rejected(name):
    with pytest.raises((ParseError, ValidationError)):
        parse_program(BAD[name])


def test_error_carries_location():
    with pytest.raises((ParseError, ValidationError)) as ei:
        parse_program(BAD["unknown-op"])
    assert "3" in str(ei.value) or "entry" in str(ei.value)


def test_headers_kept_as_metadata():
    prog = parse_program(";!expect: OD\n;!tags: a, b\nfn main() {\nentry:\n  ret\n}\n")
    assert prog.meta_value("expect") == "OD"
    assert prog.meta_value("tags") == "a, b"
