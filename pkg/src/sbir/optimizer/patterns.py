"""Whole-program pattern facts and the pass that uses them.

``constantArrayArg``: every call site of a non-address-taken function passes
a constant-size object for some pointer parameter, so accesses through that
parameter are bounded by the smallest such size.

``lengthPtrAssoc``: a struct keeps an array pointer and its element count
side by side, written only in matched pairs (fresh allocation of
``len * elemSize`` bytes, or null with zero).  An indexed access through a
loaded pointer field, guarded by ``i < len`` read from the same object with
no intervening writes that could change either field, is in bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..analysis.paths import between
from ..instrument import CheckSite, InstrumentedProgram
from ..ir import (
    CHECKED_INTRINSICS,
    INTERCEPT_PREFIX,
    Alloc,
    BinOp,
    Call,
    Cast,
    Const,
    FieldGep,
    Free,
    Gep,
    GlobalRef,
    IntToPtr,
    Load,
    Operand,
    Phi,
    PtrToInt,
    StackAlloc,
    Store,
    Var,
    operands,
    value_types,
)
from ..types import ArrayType, IntType, PtrType, StructType, size_of
from .common import checkable, offset_range

NAME = "pattern"


@dataclass(frozen=True)
class ConstantArrayArg:
    function: str
    param: str
    bound: int

    def to_json(self) -> dict:
        return {"kind": "constantArrayArg", "function": self.function, "param": self.param, "bound": self.bound}


@dataclass(frozen=True)
class LengthPtrAssoc:
    struct: str
    ptr_field: int
    len_field: int
    elem_size: int

    def to_json(self) -> dict:
        return {"kind": "lengthPtrAssoc", "struct": self.struct, "ptrField": self.ptr_field,
                "lenField": self.len_field, "elemSize": self.elem_size}


# -- mining -----------------------------------------------------------------


def _object_size(ip: InstrumentedProgram, fname: str, op: Operand) -> Optional[int]:
    prog = ip.program
    if isinstance(op, GlobalRef):
        g = prog.globals.get(op.name)
        return size_of(g.type, prog.structs) if g is not None else None
    if not isinstance(op, Var):
        return None
    d = ip.analyses.defs[fname].get(op.name)
    if isinstance(d, Cast):
        d = ip.analyses.defs[fname].get(d.base.name) if isinstance(d.base, Var) else None
        if isinstance(d, Cast):
            return None
    if isinstance(d, Alloc) and isinstance(d.size, Const):
        return d.size.value
    if isinstance(d, StackAlloc):
        return size_of(d.type, prog.structs)
    return None


def mine_constant_array_args(ip: InstrumentedProgram) -> list[ConstantArrayArg]:
    calls = ip.analyses.calls
    out = []
    for fname, fn in ip.program.functions.items():
        sites = calls.call_sites.get(fname, [])
        if fname in calls.address_taken or not sites:
            continue
        for k, (p, t) in enumerate(fn.params):
            if not isinstance(t, PtrType):
                continue
            sizes = [_object_size(ip, cs.caller, cs.call.args[k]) for cs in sites]
            if all(sz is not None for sz in sizes):
                out.append(ConstantArrayArg(fname, p, min(sizes)))
    return out


def _mentions(t, struct: str) -> bool:
    if isinstance(t, StructType):
        return t.name == struct
    if isinstance(t, ArrayType):
        return _mentions(t.elem, struct)
    return False


def _is_sptr(t, struct: str) -> bool:
    return isinstance(t, PtrType) and isinstance(t.pointee, StructType) and t.pointee.name == struct


def _struct_ok(ip: InstrumentedProgram, struct: str) -> bool:
    """No way to write the struct's fields except through its field pointers."""
    prog = ip.program
    for other, sd in prog.structs.items():
        if other != struct and any(_mentions(ft, struct) for _, ft in sd.fields):
            return False
    for g in prog.globals.values():
        if _mentions(g.type, struct):
            return False
    for fname, fn in prog.functions.items():
        types = value_types(prog, fn)
        uses: dict[str, int] = {}
        for _, _, ins in fn.positions():
            for o in operands(ins):
                if isinstance(o, Var):
                    uses[o.name] = uses.get(o.name, 0) + 1

        def sptr(op: Operand) -> bool:
            return isinstance(op, Var) and _is_sptr(types.get(op.name), struct)

        for _, _, ins in fn.positions():
            if isinstance(ins, Cast):
                if sptr(ins.base):
                    return False
                if isinstance(ins.target, StructType) and ins.target.name == struct:
                    src = ip.analyses.defs[fname].get(ins.base.name) if isinstance(ins.base, Var) else None
                    if not isinstance(src, (Alloc, StackAlloc)) or uses.get(ins.base.name) != 1:
                        return False
            elif isinstance(ins, (Load, Store)) and _mentions(ins.type, struct):
                return False
            elif isinstance(ins, Gep) and sptr(ins.base) and not (
                    isinstance(ins.elem, StructType) and ins.elem.name == struct):
                return False
            elif isinstance(ins, Call):
                name = ins.callee if isinstance(ins.callee, str) else ""
                raw = name[len(INTERCEPT_PREFIX):] if name.startswith(INTERCEPT_PREFIX) else name
                if (raw in CHECKED_INTRINSICS or isinstance(ins.callee, Var)) and any(sptr(a) for a in ins.args):
                    return False
            elif isinstance(ins, PtrToInt) and sptr(ins.ptr):
                return False
            elif isinstance(ins, IntToPtr) and isinstance(ins.target, StructType) and ins.target.name == struct:
                return False
            elif isinstance(ins, StackAlloc) and isinstance(ins.type, ArrayType) and _mentions(ins.type, struct):
                return False
    return True


def _field_stores(ip: InstrumentedProgram, struct: str, fld: int):
    """Stores through fieldgep(struct, fld); None if such a pointer is used otherwise."""
    out = []
    for fname, fn in ip.program.functions.items():
        fgeps = {ins.result: ins for _, _, ins in fn.positions()
                 if isinstance(ins, FieldGep) and ins.struct == struct and ins.field == fld}
        for label, i, ins in fn.positions():
            for o in operands(ins):
                if isinstance(o, Var) and o.name in fgeps:
                    if isinstance(ins, Load) and ins.ptr == o:
                        continue
                    if isinstance(ins, Store) and ins.ptr == o and ins.value != o:
                        out.append((fname, label, i, ins, fgeps[o.name]))
                        continue
                    return None
    return out


def _pair_values(ip, fname, ptr_val: Operand, len_val: Operand, elem_size: int) -> Optional[str]:
    if isinstance(ptr_val, Const) and ptr_val.value == 0:
        return "null" if isinstance(len_val, Const) and len_val.value == 0 else None
    if not isinstance(ptr_val, Var):
        return None
    defs = ip.analyses.defs[fname]
    a = defs.get(ptr_val.name)
    while isinstance(a, Cast) and isinstance(a.base, Var):
        a = defs.get(a.base.name)
    if not isinstance(a, Alloc):
        return None
    sz = a.size
    if isinstance(sz, Const):
        return "alloc" if isinstance(len_val, Const) and len_val.value * elem_size == sz.value else None
    m = defs.get(sz.name) if isinstance(sz, Var) else None
    if not isinstance(m, BinOp) or m.op != "mul" or sz.name in ip.analyses.ranges(fname).may_wrap:
        return None
    if {m.a, m.b} == {len_val, Const(elem_size)}:
        return "alloc"
    return None


def _quiet_between(block_instrs, i: int, j: int) -> bool:
    lo, hi = sorted((i, j))
    return not any(isinstance(x, (Load, Store, Call, Free, Alloc)) for x in block_instrs[lo + 1:hi])


def mine_length_ptr_assocs(ip: InstrumentedProgram) -> list[LengthPtrAssoc]:
    prog = ip.program
    out = []
    for sname, sd in prog.structs.items():
        ptr_fields = [k for k, (_, t) in enumerate(sd.fields)
                      if isinstance(t, PtrType) and not isinstance(t.pointee, StructType)]
        len_fields = [k for k, (_, t) in enumerate(sd.fields) if isinstance(t, IntType)]
        if not ptr_fields or not len_fields or not _struct_ok(ip, sname):
            continue
        for pf in ptr_fields:
            try:
                es = size_of(sd.fields[pf][1].pointee, prog.structs)
            except Exception:
                continue
            if es <= 0:
                continue
            pstores = _field_stores(ip, sname, pf)
            if not pstores:
                continue
            for lf in len_fields:
                lstores = _field_stores(ip, sname, lf)
                if lstores is None or len(lstores) != len(pstores):
                    continue
                if _all_paired(ip, pstores, lstores, es):
                    out.append(LengthPtrAssoc(sname, pf, lf, es))
    return out


def _all_paired(ip, pstores, lstores, es) -> bool:
    remaining = list(lstores)
    saw_alloc = False
    for fname, label, i, st, fg in pstores:
        block = ip.program.functions[fname].block(label).instrs
        match = None
        for cand in remaining:
            f2, l2, j, st2, fg2 = cand
            if (f2, l2) == (fname, label) and fg2.base == fg.base and _quiet_between(block, i, j):
                kind = _pair_values(ip, fname, st.value, st2.value, es)
                if kind is not None:
                    match = cand
                    saw_alloc |= kind == "alloc"
                    break
        if match is None:
            return False
        remaining.remove(match)
    return saw_alloc


def mine(ip: InstrumentedProgram) -> list:
    return [*mine_constant_array_args(ip), *mine_length_ptr_assocs(ip)]


# -- elimination --------------------------------------------------------------


def run(ip: InstrumentedProgram, facts: Optional[list] = None) -> list:
    facts = mine(ip) if facts is None else facts
    by_param = {(f.function, f.param): f for f in facts if isinstance(f, ConstantArrayArg)}
    assocs = {(f.struct, f.ptr_field): f for f in facts if isinstance(f, LengthPtrAssoc)}
    for s in list(ip.sites.values()):
        if not checkable(s) or not isinstance(s.base, Var):
            continue
        fact = by_param.get((s.function, s.base.name))
        if fact is not None:
            iv = offset_range(ip, s)
            if iv is not None and iv.lo >= 0 and iv.hi + s.extent <= fact.bound:
                ip.remove_site(s.id, NAME, {"fact": fact.to_json(), "offset": str(iv)})
                continue
        why = _length_guarded(ip, s, assocs)
        if why is not None:
            ip.remove_site(s.id, NAME, why)
    return facts


# (op, truth, index side): forms of a signed ``index < limit`` guard
_LESS = {("slt", True, 0), ("sgt", True, 1), ("sge", False, 0), ("sle", False, 1)}


def _field_load(defs, op: Operand, struct: str, fld: int) -> Optional[tuple[Load, FieldGep]]:
    ld = defs.get(op.name) if isinstance(op, Var) else None
    if not isinstance(ld, Load) or not isinstance(ld.ptr, Var):
        return None
    fg = defs.get(ld.ptr.name)
    if isinstance(fg, FieldGep) and fg.struct == struct and fg.field == fld:
        return ld, fg
    return None


def _length_guarded(ip: InstrumentedProgram, s: CheckSite, assocs) -> Optional[dict]:
    if s.kind != "gep" or s.offset.var is None:
        return None
    an = ip.analyses
    defs = an.defs[s.function]
    ld = defs.get(s.base.name)
    if not isinstance(ld, Load) or not isinstance(ld.ptr, Var):
        return None
    fg = defs.get(ld.ptr.name)
    if not isinstance(fg, FieldGep):
        return None
    fact = assocs.get((fg.struct, fg.field))
    if fact is None or s.offset.scale != fact.elem_size or s.offset.const != 0 or s.extent > fact.elem_size:
        return None
    ranges = an.ranges(s.function)
    i = s.offset.var
    if i in ranges.may_wrap or ranges.at(i, s.block).lo < 0:
        return None
    for cmp, truth in ranges.facts.get(s.block, ()):
        for op, t, side in _LESS:
            if cmp.op != op or truth != t:
                continue
            idx, lim = (cmp.a, cmp.b) if side == 0 else (cmp.b, cmp.a)
            if idx != Var(i):
                continue
            hit = _field_load(defs, lim, fact.struct, fact.len_field)
            if hit is None or hit[1].base != fg.base:
                continue
            if _untouched(ip, s, [ld, hit[0]], s.base.name):
                return {"fact": fact.to_json(), "guard": f"{op} %{i}, {lim}" if truth else f"not {op}",
                        "index": i}
    return None


def _untouched(ip: InstrumentedProgram, s: CheckSite, loads: list[Load], arr: str) -> bool:
    """No write that could change the struct's fields between each load and the site."""
    an = ip.analyses
    fn = ip.program.functions[s.function]
    dom = an.dom(s.function)
    pos = an.positions[s.function]
    derived = _derived_from(an.defs[s.function], arr)
    for ld in loads:
        if not dom.inst_dominates(pos[ld.result], s.pos):
            return False
        for ins in between(fn, dom, pos[ld.result], s.pos):
            if isinstance(ins, (Free, Call)):
                if isinstance(ins, Call) and ins.callee in ("input", "output"):
                    continue
                return False
            if isinstance(ins, Store) and not (isinstance(ins.ptr, Var) and ins.ptr.name in derived):
                return False
    return True


def _derived_from(defs, root: str) -> set[str]:
    out = {root}
    changed = True
    while changed:
        changed = False
        for name, ins in defs.items():
            if name in out:
                continue
            if isinstance(ins, (Gep, FieldGep, Cast)) and isinstance(ins.base, Var) and ins.base.name in out:
                out.add(name)
                changed = True
            elif isinstance(ins, Phi) and ins.incoming and all(
                    isinstance(v, Var) and v.name in out for v, _ in ins.incoming):
                out.add(name)
                changed = True
    return out
