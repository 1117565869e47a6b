"""Structural validation of Programs; violations are returned as strings."""

from __future__ import annotations

from .analysis.cfg import compute_dom
from .ir import (
    BUILTINS,
    TERMINATORS,
    Alloc,
    Call,
    Cast,
    Check,
    Extract,
    FieldGep,
    Free,
    Function,
    Gep,
    GlobalRef,
    IntToPtr,
    Load,
    Phi,
    Program,
    PtrToInt,
    Store,
    Var,
    operands,
    result_of,
    value_types,
)
from .types import BoundsType, IntType, PtrType, StructType, VoidType

RESERVED_PREFIX = "sb."


def validate(prog: Program) -> list[str]:
    out: list[str] = []
    for sd in prog.structs.values():
        if any(off % 8 for off in sd.offsets) or sd.size % 8:
            out.append(f"struct {sd.name} layout not 8-byte aligned")
        for _, ft in sd.fields:
            if isinstance(ft, StructType) and ft.name not in prog.structs:
                out.append(f"struct {sd.name}: unknown field type {ft}")
            if isinstance(ft, VoidType):
                out.append(f"struct {sd.name}: void field")
    for fn in prog.functions.values():
        out.extend(_validate_function(prog, fn))
    return out


def _validate_function(prog: Program, fn: Function) -> list[str]:
    out: list[str] = []
    where = fn.name
    if not fn.blocks:
        return [f"function {where} has no blocks"]
    labels = [b.label for b in fn.blocks]
    if len(set(labels)) != len(labels):
        out.append(f"duplicate block label in {where}")
    label_set = set(labels)

    defined: dict[str, int] = {}
    for p, _ in fn.params:
        defined[p] = defined.get(p, 0) + 1
    for _, _, ins in fn.positions():
        r = result_of(ins)
        if r is not None:
            defined[r] = defined.get(r, 0) + 1
    for name, count in defined.items():
        if count > 1:
            out.append(f"{where}: %{name} defined more than once")

    for b in fn.blocks:
        if not b.instrs or not isinstance(b.instrs[-1], TERMINATORS):
            out.append(f"missing terminator in {where}/{b.label}")
        for i, ins in enumerate(b.instrs[:-1]):
            if isinstance(ins, TERMINATORS):
                out.append(f"terminator before end of {where}/{b.label} at {i}")
        seen_non_phi = False
        for ins in b.instrs:
            if isinstance(ins, Phi):
                if seen_non_phi:
                    out.append(f"phi after non-phi in {where}/{b.label}")
            else:
                seen_non_phi = True
        for s in b.succs():
            if s not in label_set:
                out.append(f"{where}/{b.label}: branch to unknown label {s}")
    if out:
        return out

    dom = compute_dom(fn)
    if not dom.reducible:
        out.append(f"irreducible control flow in {where}")
    preds = fn.preds()
    types = value_types(prog, fn)
    defs = fn.def_sites()

    for label, i, ins in fn.positions():
        pos = f"{where}/{label}:{i}"
        r = result_of(ins)
        if r is not None and r.startswith(RESERVED_PREFIX) and not isinstance(ins, Extract):
            out.append(f"{pos}: name %{r} uses the reserved sb. prefix")
        if isinstance(ins, Phi):
            inc_labels = [lab for _, lab in ins.incoming]
            if sorted(inc_labels) != sorted(preds[label]):
                out.append(f"{pos}: phi incoming labels {inc_labels} do not match predecessors {preds[label]}")
            for v, lab in ins.incoming:
                if isinstance(v, Var):
                    if v.name not in defs:
                        out.append(f"{pos}: use before def of %{v.name}")
                    elif label in dom.reachable and lab in dom.reachable:
                        db, di = defs[v.name]
                        if db and not dom.dominates(db, lab):
                            out.append(f"{pos}: use before def of %{v.name} (phi edge from {lab})")
        else:
            for o in operands(ins):
                if isinstance(o, Var):
                    if o.name not in defs:
                        out.append(f"{pos}: use before def of %{o.name}")
                        continue
                    db, di = defs[o.name]
                    if db and label in dom.reachable and not dom.inst_dominates((db, di), (label, i - 1 if db == label else i)):
                        out.append(f"{pos}: use before def of %{o.name}")
                    elif db == label and di >= i:
                        out.append(f"{pos}: use before def of %{o.name}")
        for o in operands(ins):
            if isinstance(o, GlobalRef) and o.name not in prog.globals and o.name not in prog.functions:
                out.append(f"{pos}: unknown global @{o.name}")
        out.extend(_type_rules(prog, fn, ins, types, pos))
    return out


def _is_ptr_operand(o, types, prog) -> bool:
    if isinstance(o, GlobalRef):
        return o.name in prog.globals
    if isinstance(o, Var):
        return isinstance(types.get(o.name), PtrType)
    return o.value == 0  # null literal


def _type_rules(prog: Program, fn: Function, ins, types, pos: str) -> list[str]:
    out: list[str] = []
    if isinstance(ins, (Gep, FieldGep, Cast, Load, Free, PtrToInt)):
        base = ins.base if isinstance(ins, (Gep, FieldGep, Cast)) else ins.ptr
        if not _is_ptr_operand(base, types, prog):
            out.append(f"{pos}: pointer operand expected")
    if isinstance(ins, Store) and not _is_ptr_operand(ins.ptr, types, prog):
        out.append(f"{pos}: store address must be a pointer")
    if isinstance(ins, Gep) and isinstance(ins.index, Var):
        if not isinstance(types.get(ins.index.name), IntType):
            out.append(f"{pos}: gep index must be an integer")
    if isinstance(ins, FieldGep):
        sd = prog.structs.get(ins.struct)
        if sd is None:
            out.append(f"{pos}: unknown struct {ins.struct}")
        elif not 0 <= ins.field < len(sd.fields):
            out.append(f"{pos}: struct {ins.struct} has no field {ins.field}")
    if isinstance(ins, Alloc) and isinstance(ins.size, Var):
        if not isinstance(types.get(ins.size.name), IntType):
            out.append(f"{pos}: alloc size must be an integer")
    if isinstance(ins, IntToPtr) and isinstance(ins.value, Var):
        if not isinstance(types.get(ins.value.name), IntType):
            out.append(f"{pos}: inttoptr operand must be an integer")
    if isinstance(ins, Call) and not isinstance(ins.callee, Var):
        if ins.callee in BUILTINS:
            arity = BUILTINS[ins.callee][0]
        elif ins.callee in prog.functions:
            arity = len(prog.functions[ins.callee].params)
        else:
            out.append(f"{pos}: call to unknown function {ins.callee}")
            return out
        if len(ins.args) != arity:
            out.append(f"{pos}: {ins.callee} expects {arity} arguments, got {len(ins.args)}")
    if isinstance(ins, Check):
        if not isinstance(types.get(ins.bounds), BoundsType):
            out.append(f"{pos}: sb.check needs a bounds value from sb.extract")
    return out
