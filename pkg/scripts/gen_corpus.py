#!/usr/bin/env python3
"""Generate the injected-bug families of the corpus.

Every generated program first fills and sums a constant-size array (work the
optimizer can remove entirely) and then performs one bug-prone access whose
index, length or count comes from the input vector.  ``;!inputs:`` triggers
the bug; ``;!clean-inputs:`` stays in bounds and drives the ablation.

Usage: python scripts/gen_corpus.py [corpus-dir]
"""

from __future__ import annotations

import sys
from pathlib import Path

SIZES = {"i8": 1, "i16": 2, "i32": 4, "i64": 8}


def round8(n: int) -> int:
    return (max(n, 1) + 7) & ~7


def header(expect, tags, inputs, clean=None, fuzz=None, extra=()):
    lines = [f";!expect: {expect}", f";!tags: {', '.join(tags)}", f";!inputs: {inputs}"]
    if clean:
        lines.append(f";!clean-inputs: {clean}")
    if fuzz:
        lines.append(f";!fuzz: {fuzz[0]} {fuzz[1]}")
    lines.extend(extra)
    return "\n".join(lines) + "\n"


def setup(t: str, count: int, name: str = "p") -> tuple[str, str]:
    """Allocate ``count`` elements of ``t``, fill them and sum them."""
    b = count * SIZES[t]
    pre = f"""  %{name} = alloc {b}
  br fill_h
fill_h:
  %i = phi i64 [0, entry], [%i2, fill_b]
  %ci = slt i64 %i, {count}
  brif %ci, fill_b, sum_pre
fill_b:
  %e = gep %{name}, {t}, %i
  store {t} %i, %e
  %i2 = add i64 %i, 1
  br fill_h
sum_pre:
  br sum_h
sum_h:
  %j = phi i64 [0, sum_pre], [%j2, sum_b]
  %s = phi i64 [0, sum_pre], [%s2, sum_b]
  %cj = slt i64 %j, {count}
  brif %cj, sum_b, work
sum_b:
  %f = gep %{name}, {t}, %j
  %v = load {t} %f
  %s2 = add i64 %s, %v
  %j2 = add i64 %j, 1
  br sum_h
work:
  call output(%s)
"""
    return pre, b


def program(body: str, funcs: str = "", structs: str = "", globals_: str = "") -> str:
    return f"{structs}{globals_}{funcs}fn main() {{\nentry:\n{body}}}\n"


# -- families ---------------------------------------------------------------


def heap_index(t, count, bad, kind, expect, reserve=None):
    pre, b = setup(t, count)
    op = (f"  store {t} 7, %q\n" if kind == "write"
          else f"  %x = load {t} %q\n  call output(%x)\n")
    body = pre + f"  %k = call input(0)\n  %q = gep %p, {t}, %k\n{op}  free %p\n  ret\n"
    tags = ["injected-oob", "underflow" if bad < 0 else "overflow", kind]
    extra = [f";!reserve: {reserve}"] if reserve is not None else []
    return header(expect, tags, str(bad), f"0 | {count - 1}", (-4, count + 8), extra) + program(body)


def inter_chunk(t, count, kind, freed):
    pre, b = setup(t, count)
    usable = round8(b) + 16
    bad = (usable + 8) // SIZES[t]
    body = pre + f"  %r = alloc {b}\n  store i8 1, %r\n"
    if freed:
        body += "  free %r\n"
    op = (f"  store {t} 9, %q\n" if kind == "write" else f"  %x = load {t} %q\n  call output(%x)\n")
    body += f"  %k = call input(0)\n  %q = gep %p, {t}, %k\n{op}  free %p\n"
    if not freed:
        body += "  free %r\n"
    body += "  ret\n"
    tags = ["injected-oob", "freed-region" if freed else "inter-chunk", kind]
    return header("OD", tags, str(bad), f"1 | {count - 1}", (0, bad + 4)) + program(body)


def off_by_one(t, count, expect, reserve=None):
    pre, b = setup(t, count)
    body = pre + f"""  %n = call input(0)
  %m = and i64 %n, 63
  %sz = mul i64 %m, {SIZES[t]}
  %q = alloc %sz
  %d = call input(1)
  %lim = sub i64 %m, %d
  br obo_h
obo_h:
  %k = phi i64 [0, work], [%k2, obo_b]
  %ck = sle i64 %k, %lim
  brif %ck, obo_b, done
obo_b:
  %g = gep %q, {t}, %k
  store {t} %k, %g
  %k2 = add i64 %k, 1
  br obo_h
done:
  free %q
  free %p
  ret
"""
    extra = [f";!reserve: {reserve}"] if reserve is not None else []
    return header(expect, ["injected-oob", "off-by-one", "overflow"], "5 0", "5 1 | 2 1", (0, 20), extra) + program(body)


def intrinsic_len(t, count, which):
    pre, b = setup(t, count)
    usable = round8(b) + 16
    if which == "memset":
        op = "  call memset(%p, 0, %len)\n"
    else:
        op = f"  %r = alloc {b}\n  call memcpy(%r, %p, %len)\n  free %r\n"
    body = pre + f"  %len = call input(0)\n{op}  free %p\n  ret\n"
    return header("OD", ["injected-oob", "overflow", which], str(usable + 4), f"{b} | 1",
                  (0, usable + 16)) + program(body)


def strcpy_case(count, extra_chars):
    pre, b = setup("i8", count)
    text = [65 + (k % 26) for k in range(count + extra_chars)] + [0]
    short = [97 + (k % 26) for k in range(count - 1)] + [0]
    glob = (f"global msg: [{len(text)} x i8] = [{', '.join(map(str, text))}]\n"
            f"global ok: [{len(short)} x i8] = [{', '.join(map(str, short))}]\n")
    body = pre + f"""  %r = alloc {count}
  %sel = call input(0)
  %long = ne i64 %sel, 0
  brif %long, use_long, use_short
use_long:
  br copy
use_short:
  br copy
copy:
  %src = phi i8* [@msg, use_long], [@ok, use_short]
  call strcpy(%r, %src)
  %z = load i8 %r
  call output(%z)
  free %r
  free %p
  ret
"""
    expect = "OD" if count + extra_chars + 1 > round8(count) + 16 else "BR"
    return header(expect, ["injected-oob", "overflow", "strcpy"], "1", "0", (0, 1)) + program(body, globals_=glob)


def pointer_walk(t, count):
    pre, b = setup(t, count)
    usable = round8(b) + 16
    body = pre + f"""  %m = call input(0)
  br walk_h
walk_h:
  %d = phi {t}* [%p0, work2], [%d2, walk_b]
  %w = phi i64 [0, work2], [%w2, walk_b]
  %cw = slt i64 %w, %m
  brif %cw, walk_b, done
walk_b:
  store {t} 0, %d
  %d2 = gep %d, {t}, 1
  %w2 = add i64 %w, 1
  br walk_h
done:
  free %p
  ret
"""
    body = body.replace("  %m = call input(0)\n  br walk_h\n",
                        f"  %m = call input(0)\n  %p0 = cast %p to {t}*\n  br work2\nwork2:\n  br walk_h\n")
    bad = usable // SIZES[t] + 2
    return header("OD", ["injected-oob", "overflow", "pointer-walk"], str(bad), f"{count} | 1",
                  (0, bad + 4)) + program(body)


def countdown(t, count):
    pre, b = setup(t, count)
    body = pre + f"""  %n = call input(0)
  %m = and i64 %n, 63
  %last = gep %p, {t}, {count - 1}
  br cd_h
cd_h:
  %j3 = phi i64 [0, work], [%j4, cd_b]
  %cc = sle i64 %j3, %m
  brif %cc, cd_b, done
cd_b:
  %neg = mul i64 %j3, -1
  %g = gep %last, {t}, %neg
  store {t} 1, %g
  %j4 = add i64 %j3, 1
  br cd_h
done:
  free %p
  ret
"""
    return header("OD", ["injected-oob", "underflow", "countdown"], str(count + 1), f"{count - 1} | 0",
                  (0, count + 4)) + program(body)


def param_index(count, bad):
    pre, b = setup("i8", count)
    funcs = """fn put(%buf: i8*, %k: i64) {
entry:
  %q = gep %buf, i8, %k
  store i8 5, %q
  ret
}

"""
    body = pre + f"  %r = alloc {count}\n  %k = call input(0)\n  call put(%r, 1)\n  call put(%p, %k)\n  free %r\n  free %p\n  ret\n"
    return header("OD", ["injected-oob", "underflow" if bad < 0 else "overflow", "call-arg"], str(bad),
                  f"0 | {count - 1}", (-4, count + 24)) + program(body, funcs)


def record_array(nrec, bad):
    structs = "struct rec { id: i64, vals: [4 x i64] }\n"
    body = f"""  %raw = alloc {nrec * 40}
  %rs = cast %raw to rec*
  br fill_h
fill_h:
  %i = phi i64 [0, entry], [%i2, fill_b]
  %ci = slt i64 %i, {nrec}
  brif %ci, fill_b, work
fill_b:
  %r = gep %rs, rec, %i
  %idp = fieldgep %r, rec, 0
  store i64 %i, %idp
  %i2 = add i64 %i, 1
  br fill_h
work:
  %k = call input(0)
  %rk = gep %rs, rec, %k
  %vp = fieldgep %rk, rec, 1
  %v0 = gep %vp, i64, 0
  store i64 3, %v0
  %id = load i64 %idp0
  call output(%id)
  free %raw
  ret
"""
    body = body.replace("work:\n", f"work:\n  %r0 = gep %rs, rec, 0\n  %idp0 = fieldgep %r0, rec, 0\n", 1)
    lo, hi = 40 * bad + 8, 40 * bad + 16
    expect = "OD" if lo < 0 or hi > round8(nrec * 40) + 16 else "BR"
    return header(expect, ["injected-oob", "underflow" if bad < 0 else "overflow", "struct"], str(bad),
                  f"0 | {nrec - 1}", (-2, nrec + 3)) + program(body, structs=structs)


def length_le(expect, reserve=None, es_type="i32"):
    es = SIZES[es_type]
    structs = f"struct vec {{ a: {es_type}*, len: i64 }}\n"
    funcs = f"""fn init(%o: vec*, %n: i64) {{
entry:
  %m = and i64 %n, 255
  %sz = mul i64 %m, {es}
  %buf = alloc %sz
  %arr = cast %buf to {es_type}*
  %pa = fieldgep %o, vec, 0
  store {es_type}* %arr, %pa
  %pl = fieldgep %o, vec, 1
  store i64 %m, %pl
  ret
}}

fn fill(%o: vec*) {{
entry:
  %pa = fieldgep %o, vec, 0
  %a = load {es_type}* %pa
  %pl = fieldgep %o, vec, 1
  %len = load i64 %pl
  br head
head:
  %i = phi i64 [0, entry], [%i2, body]
  %c = slt i64 %i, %len
  brif %c, body, tail
body:
  %e = gep %a, {es_type}, %i
  store {es_type} %i, %e
  %i2 = add i64 %i, 1
  br head
tail:
  %lim = call input(1)
  %c2 = sle i64 %lim, %len
  brif %c2, poke, exit
poke:
  %g = gep %a, {es_type}, %lim
  store {es_type} 1, %g
  br exit
exit:
  ret
}}

"""
    body = """  %raw = alloc 16
  %o = cast %raw to vec*
  %n = call input(0)
  call init(%o, %n)
  call fill(%o)
  %pa = fieldgep %o, vec, 0
  %a = load i8* %pa
  free %a
  free %raw
  ret
"""
    extra = [f";!reserve: {reserve}"] if reserve is not None else []
    return header(expect, ["injected-oob", "off-by-one", "length-guard"], "6 6", "6 2 | 3 0",
                  (0, 10), extra) + program(body, funcs, structs)


def tf_nodes(count, reserve=None):
    structs = "struct node { next: node*, val: i64 }\n"
    body = f"""  %raw = alloc {count * 16}
  %ns = cast %raw to node*
  br link_h
link_h:
  %i = phi i64 [0, entry], [%i2, link_b]
  %ci = slt i64 %i, {count - 1}
  brif %ci, link_b, last
link_b:
  %cur = gep %ns, node, %i
  %i2 = add i64 %i, 1
  %nxt = gep %ns, node, %i2
  %np = fieldgep %cur, node, 0
  store node* %nxt, %np
  %vp = fieldgep %cur, node, 1
  store i64 %i, %vp
  br link_h
last:
  %tail = gep %ns, node, {count - 1}
  %tp = fieldgep %tail, node, 0
  store node* 0, %tp
  %k = call input(0)
  %nk = gep %ns, node, %k
  %nkp = fieldgep %nk, node, 0
  %succ = load node* %nkp
  %sv = fieldgep %succ, node, 1
  %v = load i64 %sv
  call output(%v)
  free %raw
  ret
"""
    extra = [f";!reserve: {reserve}"] if reserve is not None else []
    return header("TF", ["tf", "overflow"], str(count), f"0 | {count - 2}", (0, count - 2), extra) \
        + program(body, structs=structs)


def cases() -> dict[str, str]:
    out: dict[str, str] = {}
    # direct indexed overflow/underflow through an input-controlled index
    for t, count, bad, kind in [("i32", 10, 14, "write"), ("i8", 24, 60, "write"), ("i64", 6, 9, "read"),
                                ("i16", 12, 40, "read"), ("i32", 16, 1000, "write")]:
        out[f"oob_index_{t}_{count}_{kind}"] = heap_index(t, count, bad, kind, "OD")
    for t, count, bad in [("i32", 10, -1), ("i8", 20, -3), ("i64", 8, -2), ("i16", 9, -100)]:
        out[f"oob_under_{t}_{count}"] = heap_index(t, count, bad, "write", "OD")
    # small overflows that land in the chunk's slack: benign running
    for t, count, bad in [("i32", 8, 8), ("i8", 16, 20), ("i64", 4, 5), ("i16", 12, 13)]:
        out[f"oob_slack_{t}_{count}"] = heap_index(t, count, bad, "write", "BR")
    # the same small overflows are detected when there is no reserve
    for t, count, bad in [("i32", 8, 8), ("i64", 4, 4)]:
        out[f"oob_noreserve_{t}_{count}"] = heap_index(t, count, bad, "write", "OD", reserve=0)
    for t, count, kind, freed in [("i32", 8, "write", False), ("i8", 32, "read", False),
                                  ("i64", 4, "write", True), ("i32", 6, "read", True)]:
        out[f"oob_{'freed' if freed else 'neighbor'}_{t}_{count}_{kind}"] = inter_chunk(t, count, kind, freed)
    for t, count, expect, reserve in [("i32", 8, "BR", None), ("i8", 12, "BR", None), ("i64", 6, "BR", None),
                                      ("i64", 6, "OD", 0)]:
        suffix = "_n0" if reserve == 0 else ""
        out[f"oob_offbyone_{t}_{count}{suffix}"] = off_by_one(t, count, expect, reserve)
    for t, count, which in [("i32", 8, "memset"), ("i8", 20, "memset"), ("i64", 5, "memcpy"), ("i16", 10, "memcpy")]:
        out[f"oob_{which}_{t}_{count}"] = intrinsic_len(t, count, which)
    for count, extra in [(8, 30), (16, 40), (12, 2)]:
        out[f"oob_strcpy_{count}_{extra}"] = strcpy_case(count, extra)
    for t, count in [("i32", 8), ("i8", 24), ("i64", 4)]:
        out[f"oob_walk_{t}_{count}"] = pointer_walk(t, count)
    for t, count in [("i32", 10), ("i8", 16), ("i64", 6)]:
        out[f"oob_countdown_{t}_{count}"] = countdown(t, count)
    for count, bad in [(16, 40), (24, -5), (8, 100)]:
        out[f"oob_param_{count}_{'m' if bad < 0 else ''}{abs(bad)}"] = param_index(count, bad)
    for nrec, bad in [(3, 3), (5, 9), (4, -1)]:
        out[f"oob_record_{nrec}_{'m' if bad < 0 else ''}{abs(bad)}"] = record_array(nrec, bad)
    out["oob_lenguard_i32"] = length_le("BR")
    out["oob_lenguard_i64_n0"] = length_le("OD", reserve=0, es_type="i64")
    for count in (4, 7, 10):
        out[f"tf_nodes_{count}"] = tf_nodes(count)
    return out


def main(argv: list[str]) -> int:
    target = Path(argv[1] if len(argv) > 1 else Path(__file__).resolve().parent.parent / "corpus")
    target.mkdir(parents=True, exist_ok=True)
    for name, text in cases().items():
        (target / f"{name}.sbir").write_text(text)
    print(f"wrote {len(cases())} cases to {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
