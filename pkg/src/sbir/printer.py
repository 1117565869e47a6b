"""Canonical text form of a Program; ``parse_program`` inverts it."""

from __future__ import annotations

from .ir import (
    Alloc,
    BinOp,
    Br,
    Call,
    Cast,
    Check,
    CondBr,
    Extract,
    FieldGep,
    Free,
    Function,
    Gep,
    Instr,
    IntToPtr,
    Load,
    Phi,
    Program,
    PtrToInt,
    Ret,
    StackAlloc,
    Store,
    Var,
)


def format_instr(ins: Instr) -> str:
    if isinstance(ins, Alloc):
        return f"%{ins.result} = alloc {ins.size}"
    if isinstance(ins, Free):
        return f"free {ins.ptr}"
    if isinstance(ins, StackAlloc):
        return f"%{ins.result} = stackalloc {ins.type}"
    if isinstance(ins, Gep):
        return f"%{ins.result} = gep {ins.base}, {ins.elem}, {ins.index}"
    if isinstance(ins, FieldGep):
        return f"%{ins.result} = fieldgep {ins.base}, {ins.struct}, {ins.field}"
    if isinstance(ins, Cast):
        return f"%{ins.result} = cast {ins.base} to {ins.target}*"
    if isinstance(ins, Load):
        return f"%{ins.result} = load {ins.type} {ins.ptr}"
    if isinstance(ins, Store):
        return f"store {ins.type} {ins.value}, {ins.ptr}"
    if isinstance(ins, BinOp):
        return f"%{ins.result} = {ins.op} {ins.type} {ins.a}, {ins.b}"
    if isinstance(ins, Call):
        callee = str(ins.callee) if isinstance(ins.callee, Var) else ins.callee
        text = f"call {callee}({', '.join(str(a) for a in ins.args)})"
        return text if ins.result is None else f"%{ins.result} = {text}"
    if isinstance(ins, Br):
        return f"br {ins.target}"
    if isinstance(ins, CondBr):
        return f"brif {ins.cond}, {ins.if_true}, {ins.if_false}"
    if isinstance(ins, Phi):
        inc = ", ".join(f"[{v}, {lab}]" for v, lab in ins.incoming)
        return f"%{ins.result} = phi {ins.type} {inc}"
    if isinstance(ins, Ret):
        return "ret" if ins.value is None else f"ret {ins.value}"
    if isinstance(ins, PtrToInt):
        return f"%{ins.result} = ptrtoint {ins.ptr}"
    if isinstance(ins, IntToPtr):
        return f"%{ins.result} = inttoptr {ins.value} to {ins.target}*"
    if isinstance(ins, Extract):
        return f"sb.extract %{ins.result} = bounds {ins.src}"
    if isinstance(ins, Check):
        halves = ("u" if ins.underflow else "") + ("o" if ins.overflow else "")
        tail = f", {ins.extent}" if ins.extent != 1 else ""
        return f"sb.check %{ins.bounds}, {ins.res}, {halves}{tail}"
    raise TypeError(f"cannot print {ins!r}")


def format_function(fn: Function) -> str:
    params = ", ".join(f"%{p}: {t}" for p, t in fn.params)
    head = f"fn {fn.name}({params})"
    if str(fn.ret) != "void":
        head += f" -> {fn.ret}"
    out = [head + " {"]
    for b in fn.blocks:
        out.append(f"{b.label}:")
        out.extend("  " + format_instr(ins) for ins in b.instrs)
    out.append("}")
    return "\n".join(out)


def print_program(prog: Program) -> str:
    parts: list[str] = []
    for k, v in prog.meta:
        parts.append(f";!{k}: {v}")
    for sd in prog.structs.values():
        fields = ", ".join(f"{n}: {t}" for n, t in sd.fields)
        parts.append(f"struct {sd.name} {{ {fields} }}")
    for g in prog.globals.values():
        line = f"global {g.name}: {g.type}"
        if g.init is not None:
            line += " = [" + ", ".join(str(v) for v in g.init) + "]"
        parts.append(line)
    for fn in prog.functions.values():
        parts.append(format_function(fn))
    return "\n".join(parts) + ("\n" if parts else "")
