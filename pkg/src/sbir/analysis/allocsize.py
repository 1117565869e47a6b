"""Allocation-size facts, anchoring, and available-bytes bounds for pointers.

``avail`` is a lower bound on ``end - ptr`` (bytes from the pointer to its
chunk's recorded end) that holds at every use of the pointer, assuming the
program never dereferences freed memory.  It comes from constant-size
allocations and from the extent each check site validates.  Parameters get
the minimum over all call sites of non-address-taken functions; that system
is solved as a greatest fixpoint, which is an inductive invariant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from ..ir import (
    Alloc,
    Cast,
    Const,
    FieldGep,
    Function,
    Gep,
    GlobalRef,
    Operand,
    Phi,
    Program,
    StackAlloc,
    Var,
)
from ..types import ArrayType, size_of
from .callgraph import CallFacts, compute_call_facts

LOCAL_HEAP = "local-heap-alloc"
STACK = "stack-alloc"
GLOBAL = "global-array"
CHECKED_CAST = "checked-cast"
STRUCT_FIELD = "struct-array-field"

INF = float("inf")
FREEZE_AFTER = 64


@dataclass(frozen=True)
class AllocSizeFact:
    size: Optional[int]  # None when unknown
    provenance: str
    exact: bool = True  # False: size is a lower bound

    def __str__(self) -> str:
        if self.size is None:
            return "unknown"
        return f"{'' if self.exact else '>='}{self.size} ({self.provenance})"


UNKNOWN = AllocSizeFact(None, "unknown", False)


def global_fact(prog: Program, name: str) -> AllocSizeFact:
    g = prog.globals.get(name)
    if g is None:
        return UNKNOWN
    return AllocSizeFact(size_of(g.type, prog.structs), GLOBAL)


def local_alloc_sizes(prog: Program, fn: Function) -> dict[str, AllocSizeFact]:
    out: dict[str, AllocSizeFact] = {}
    for _, _, ins in fn.positions():
        if isinstance(ins, Alloc):
            if isinstance(ins.size, Const):
                out[ins.result] = AllocSizeFact(ins.size.value, LOCAL_HEAP)
            else:
                out[ins.result] = AllocSizeFact(None, LOCAL_HEAP, False)
        elif isinstance(ins, StackAlloc):
            out[ins.result] = AllocSizeFact(size_of(ins.type, prog.structs), STACK)
        elif isinstance(ins, Cast):
            base = operand_fact(prog, out, ins.base)
            if base.exact and base.size is not None:
                out[ins.result] = base
            else:
                out[ins.result] = AllocSizeFact(size_of(ins.target, prog.structs), CHECKED_CAST, False)
        elif isinstance(ins, FieldGep):
            sd = prog.structs.get(ins.struct)
            base = operand_fact(prog, out, ins.base)
            if sd is not None and base.size is not None and base.size >= sd.size:
                ft = sd.fields[ins.field][1]
                if isinstance(ft, ArrayType):
                    out[ins.result] = AllocSizeFact(size_of(ft, prog.structs), STRUCT_FIELD)
    return out


def operand_fact(prog: Program, facts: Mapping[str, AllocSizeFact], op: Operand) -> AllocSizeFact:
    if isinstance(op, GlobalRef):
        return global_fact(prog, op.name)
    if isinstance(op, Var):
        return facts.get(op.name, UNKNOWN)
    return UNKNOWN


def compute_alloc_sizes(prog: Program) -> dict[str, dict[str, AllocSizeFact]]:
    return {name: local_alloc_sizes(prog, fn) for name, fn in prog.functions.items()}


def _param_feeds(prog: Program, calls: CallFacts) -> dict[tuple[str, str], list[tuple[str, Operand]]]:
    """(fn, param) -> [(caller, arg operand)], only for fully known callers."""
    feeds: dict[tuple[str, str], list[tuple[str, Operand]]] = {}
    for name, fn in prog.functions.items():
        sites = calls.call_sites.get(name, [])
        known = name not in calls.address_taken and bool(sites)
        for k, (p, _) in enumerate(fn.params):
            feeds[(name, p)] = [(s.caller, s.call.args[k]) for s in sites] if known else []
    return feeds


def compute_avail(
    prog: Program,
    site_extents: Mapping[tuple[str, str], int],
    calls: Optional[CallFacts] = None,
    cast_only: bool = False,
    foreign: frozenset = frozenset(),
) -> dict[tuple[str, str], int]:
    """Lower bound on bytes available from each pointer value to its chunk end.

    ``site_extents`` maps (fn, result) of every check site to the extent its
    check validates.  With ``cast_only`` only cast-validated sizes count.
    Keys listed in ``foreign`` get 0.
    """
    calls = calls or compute_call_facts(prog)
    val: dict[tuple[str, str], float] = {}
    feeds = _param_feeds(prog, calls)

    def operand_avail(fname: str, op: Operand) -> float:
        if isinstance(op, Var):
            return val.get((fname, op.name), 0)
        if isinstance(op, GlobalRef) and not cast_only:
            f = global_fact(prog, op.name)
            return f.size or 0
        return 0

    for fname, fn in prog.functions.items():
        for p, _ in fn.params:
            val[(fname, p)] = INF if feeds[(fname, p)] else 0
        for _, _, ins in fn.positions():
            if isinstance(ins, (Alloc, StackAlloc, Cast, Gep, FieldGep, Phi)):
                val[(fname, ins.result)] = INF  # descend from top

    frozen: set[tuple[str, str]] = set()
    rounds = 0
    changed = True
    while changed:
        changed = False
        rounds += 1
        new: dict[tuple[str, str], float] = {}
        for fname, fn in prog.functions.items():
            for _, _, ins in fn.positions():
                key = (fname, getattr(ins, "result", None))
                if isinstance(ins, Alloc):
                    a = max(ins.size.value, 0) if isinstance(ins.size, Const) and not cast_only else 0
                elif isinstance(ins, StackAlloc):
                    a = 0 if cast_only else size_of(ins.type, prog.structs)
                elif isinstance(ins, Cast):
                    a = max(operand_avail(fname, ins.base), site_extents.get(key, 0))
                elif isinstance(ins, (Gep, FieldGep)):
                    a = 0 if cast_only else max(site_extents.get(key, 0), _inner_avail(prog, fname, ins, operand_avail))
                elif isinstance(ins, Phi):
                    vals = [operand_avail(fname, v) for v, _ in ins.incoming]
                    a = min(vals) if vals else 0
                else:
                    continue
                new[key] = a
            for p, _ in fn.params:
                srcs = feeds[(fname, p)]
                new[(fname, p)] = min((operand_avail(c, a) for c, a in srcs), default=0)
        for key, a in new.items():
            if key in foreign:
                a = 0
            if key in frozen or val.get(key) == a:
                continue
            if rounds > FREEZE_AFTER:
                # a long descending chain (pointer walks): pin the value at a
                # floor the equations never go below, which keeps the
                # assignment a post-fixpoint and hence sound
                a = 0 if cast_only else site_extents.get(key, 0)
                frozen.add(key)
            val[key] = a
            changed = True
    return {k: (0 if v == INF else int(v)) for k, v in val.items()}


def _inner_avail(prog: Program, fname: str, ins, operand_avail) -> float:
    """base + c with a constant 0 <= c < avail(base) stays in base's chunk."""
    if isinstance(ins, FieldGep):
        c = prog.structs[ins.struct].offsets[ins.field]
    elif isinstance(ins.index, Const):
        c = ins.index.value * size_of(ins.elem, prog.structs)
    else:
        return 0
    rest = operand_avail(fname, ins.base) - c
    return rest if c >= 0 and rest > 0 else 0


def compute_anchored(prog: Program, calls: Optional[CallFacts] = None) -> set[tuple[str, str]]:
    """Pointer values that always equal the first byte of their object."""
    calls = calls or compute_call_facts(prog)
    feeds = _param_feeds(prog, calls)
    cand: set[tuple[str, str]] = set()
    rules: dict[tuple[str, str], list[tuple[str, Operand]]] = {}
    for fname, fn in prog.functions.items():
        for p, _ in fn.params:
            if feeds[(fname, p)]:
                cand.add((fname, p))
                rules[(fname, p)] = feeds[(fname, p)]
        for _, _, ins in fn.positions():
            if isinstance(ins, (Alloc, StackAlloc)):
                cand.add((fname, ins.result))
                rules[(fname, ins.result)] = []
            elif isinstance(ins, Cast):
                cand.add((fname, ins.result))
                rules[(fname, ins.result)] = [(fname, ins.base)]
            elif isinstance(ins, Phi):
                cand.add((fname, ins.result))
                rules[(fname, ins.result)] = [(fname, v) for v, _ in ins.incoming]

    def ok(fname: str, op: Operand) -> bool:
        if isinstance(op, GlobalRef):
            return op.name in prog.globals
        if isinstance(op, Var):
            return (fname, op.name) in cand
        return False

    changed = True
    while changed:
        changed = False
        for key in list(cand):
            if not all(ok(f, o) for f, o in rules[key]):
                cand.discard(key)
                changed = True
    return cand
