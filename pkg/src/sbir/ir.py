"""SSA mini-IR: operands, instructions, blocks, functions, programs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .types import (
    BOUNDS,
    FNPTR,
    I1,
    I8PTR,
    I64,
    VOID,
    ArrayType,
    IntType,
    IrType,
    PtrType,
    StructDef,
    StructType,
)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return f"%{self.name}"


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class GlobalRef:
    """``@name``: a global array or a function used as a value."""

    name: str

    def __str__(self) -> str:
        return f"@{self.name}"


Operand = Union[Var, Const, GlobalRef]

ARITH_OPS = ("add", "sub", "mul", "sdiv", "udiv", "srem", "urem", "and", "or", "xor", "shl", "lshr", "ashr")
CMP_OPS = ("eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge")

# name -> (arity, return type)
BUILTINS: dict[str, tuple[int, IrType]] = {
    "input": (1, I64),
    "output": (1, VOID),
    "memset": (3, VOID),
    "memcpy": (3, VOID),
    "strcpy": (2, VOID),
}
CHECKED_INTRINSICS = ("memset", "memcpy", "strcpy")
INTERCEPT_PREFIX = "sb."
for _name in CHECKED_INTRINSICS:
    BUILTINS[INTERCEPT_PREFIX + _name] = BUILTINS[_name]


@dataclass
class Alloc:
    result: str
    size: Operand


@dataclass
class Free:
    ptr: Operand


@dataclass
class StackAlloc:
    result: str
    type: IrType


@dataclass
class Gep:
    result: str
    base: Operand
    elem: IrType
    index: Operand


@dataclass
class FieldGep:
    result: str
    base: Operand
    struct: str
    field: int


@dataclass
class Cast:
    result: str
    base: Operand
    target: IrType  # pointee of the result


@dataclass
class Load:
    result: str
    type: IrType
    ptr: Operand


@dataclass
class Store:
    type: IrType
    value: Operand
    ptr: Operand


@dataclass
class BinOp:
    result: str
    op: str
    type: IntType
    a: Operand
    b: Operand


@dataclass
class Call:
    result: Optional[str]
    callee: Union[str, Var]
    args: list[Operand]


@dataclass
class Br:
    target: str


@dataclass
class CondBr:
    cond: Operand
    if_true: str
    if_false: str


@dataclass
class Phi:
    result: str
    type: IrType
    incoming: list[tuple[Operand, str]]


@dataclass
class Ret:
    value: Optional[Operand] = None


@dataclass
class PtrToInt:
    result: str
    ptr: Operand


@dataclass
class IntToPtr:
    result: str
    value: Operand
    target: IrType


@dataclass
class Extract:
    """``sb.extract %b = bounds %src``: load (beg, end) of src's chunk."""

    result: str
    src: Operand


@dataclass
class Check:
    """``sb.check %b, %res, <halves>[, extent]``.

    Validates [res, res + extent) against the bound pair; only the enabled
    halves are compared.
    """

    bounds: str
    res: Operand
    underflow: bool = True
    overflow: bool = True
    extent: int = 1


Instr = Union[
    Alloc, Free, StackAlloc, Gep, FieldGep, Cast, Load, Store, BinOp, Call,
    Br, CondBr, Phi, Ret, PtrToInt, IntToPtr, Extract, Check,
]
TERMINATORS = (Br, CondBr, Ret)
POINTER_ARITH = (Gep, FieldGep, Cast)


def result_of(ins: Instr) -> Optional[str]:
    return getattr(ins, "result", None)


def operands(ins: Instr) -> list[Operand]:
    """Value operands read by ``ins`` (labels and types excluded)."""
    if isinstance(ins, Alloc):
        return [ins.size]
    if isinstance(ins, Free):
        return [ins.ptr]
    if isinstance(ins, (Gep,)):
        return [ins.base, ins.index]
    if isinstance(ins, (FieldGep, Cast)):
        return [ins.base]
    if isinstance(ins, Load):
        return [ins.ptr]
    if isinstance(ins, Store):
        return [ins.value, ins.ptr]
    if isinstance(ins, BinOp):
        return [ins.a, ins.b]
    if isinstance(ins, Call):
        head = [ins.callee] if isinstance(ins.callee, Var) else []
        return head + list(ins.args)
    if isinstance(ins, CondBr):
        return [ins.cond]
    if isinstance(ins, Phi):
        return [v for v, _ in ins.incoming]
    if isinstance(ins, Ret):
        return [] if ins.value is None else [ins.value]
    if isinstance(ins, PtrToInt):
        return [ins.ptr]
    if isinstance(ins, IntToPtr):
        return [ins.value]
    if isinstance(ins, Extract):
        return [ins.src]
    if isinstance(ins, Check):
        return [Var(ins.bounds), ins.res]
    return []


def var_uses(ins: Instr) -> list[str]:
    return [o.name for o in operands(ins) if isinstance(o, Var)]


def successors(ins: Instr) -> list[str]:
    if isinstance(ins, Br):
        return [ins.target]
    if isinstance(ins, CondBr):
        if ins.if_true == ins.if_false:
            return [ins.if_true]
        return [ins.if_true, ins.if_false]
    return []


@dataclass
class Block:
    label: str
    instrs: list[Instr] = field(default_factory=list)

    @property
    def terminator(self) -> Optional[Instr]:
        if self.instrs and isinstance(self.instrs[-1], TERMINATORS):
            return self.instrs[-1]
        return None

    def succs(self) -> list[str]:
        t = self.terminator
        return successors(t) if t is not None else []


@dataclass
class Function:
    name: str
    params: list[tuple[str, IrType]]
    ret: IrType
    blocks: list[Block]

    @property
    def entry(self) -> Block:
        return self.blocks[0]

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def block_map(self) -> dict[str, Block]:
        return {b.label: b for b in self.blocks}

    def positions(self) -> Iterator[tuple[str, int, Instr]]:
        for b in self.blocks:
            for i, ins in enumerate(b.instrs):
                yield b.label, i, ins

    def def_sites(self) -> dict[str, tuple[str, int]]:
        """SSA name -> (block, index); parameters map to ("", -1)."""
        out = {p: ("", -1) for p, _ in self.params}
        for label, i, ins in self.positions():
            r = result_of(ins)
            if r is not None:
                out[r] = (label, i)
        return out

    def def_instrs(self) -> dict[str, Instr]:
        return {r: ins for _, _, ins in self.positions() if (r := result_of(ins)) is not None}

    def preds(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {b.label: [] for b in self.blocks}
        for b in self.blocks:
            for s in b.succs():
                if s in out and b.label not in out[s]:
                    out[s].append(b.label)
        return out


@dataclass
class GlobalDef:
    name: str
    type: ArrayType
    init: Optional[list[int]] = None


@dataclass
class Program:
    structs: dict[str, StructDef] = field(default_factory=dict)
    globals: dict[str, GlobalDef] = field(default_factory=dict)
    functions: dict[str, Function] = field(default_factory=dict)
    # ";!key: value" header lines, in order
    meta: list[tuple[str, str]] = field(default_factory=list)

    def meta_values(self, key: str) -> list[str]:
        return [v for k, v in self.meta if k == key]

    def meta_value(self, key: str, default: Optional[str] = None) -> Optional[str]:
        vals = self.meta_values(key)
        return vals[0] if vals else default

    def set_meta(self, key: str, value: str) -> None:
        self.meta = [(k, v) for k, v in self.meta if k != key] + [(key, value)]

    def is_instrumented(self) -> bool:
        return any(isinstance(ins, (Extract, Check))
                   or (isinstance(ins, Call) and isinstance(ins.callee, str) and ins.callee.startswith("sb."))
                   for f in self.functions.values() for _, _, ins in f.positions())

    def address_taken(self, fname: str) -> bool:
        """True iff ``@fname`` appears anywhere other than a direct callee."""
        ref = GlobalRef(fname)
        for f in self.functions.values():
            for _, _, ins in f.positions():
                if ref in operands(ins):
                    return True
        return False


def value_types(prog: Program, fn: Function) -> dict[str, IrType]:
    """Static type of every SSA name defined in ``fn``."""
    types: dict[str, IrType] = dict(fn.params)
    for _, _, ins in fn.positions():
        r = result_of(ins)
        if r is None:
            continue
        types[r] = instr_type(prog, ins, types)
    return types


def instr_type(prog: Program, ins: Instr, env: dict[str, IrType]) -> IrType:
    if isinstance(ins, Alloc):
        return I8PTR
    if isinstance(ins, StackAlloc):
        return PtrType(ins.type)
    if isinstance(ins, Gep):
        return PtrType(ins.elem)
    if isinstance(ins, FieldGep):
        sd = prog.structs.get(ins.struct)
        if sd is None or not 0 <= ins.field < len(sd.fields):
            return I8PTR
        return PtrType(sd.fields[ins.field][1])
    if isinstance(ins, Cast):
        return PtrType(ins.target)
    if isinstance(ins, Load):
        return ins.type
    if isinstance(ins, BinOp):
        return I1 if ins.op in CMP_OPS else ins.type
    if isinstance(ins, Call):
        if isinstance(ins.callee, Var):
            return I64
        if ins.callee in BUILTINS:
            return BUILTINS[ins.callee][1]
        callee = prog.functions.get(ins.callee)
        return callee.ret if callee is not None else I64
    if isinstance(ins, Phi):
        return ins.type
    if isinstance(ins, PtrToInt):
        return I64
    if isinstance(ins, IntToPtr):
        return PtrType(ins.target)
    if isinstance(ins, Extract):
        return BOUNDS
    return VOID


def operand_type(op: Operand, env: dict[str, IrType], prog: Program) -> Optional[IrType]:
    if isinstance(op, Var):
        return env.get(op.name)
    if isinstance(op, GlobalRef):
        if op.name in prog.globals:
            return PtrType(prog.globals[op.name].type)
        return FNPTR
    return None


def global_elem_type(prog: Program, name: str) -> Optional[IrType]:
    g = prog.globals.get(name)
    return g.type.elem if g is not None else None


__all__ = [
    "Var", "Const", "GlobalRef", "Operand", "Alloc", "Free", "StackAlloc", "Gep", "FieldGep",
    "Cast", "Load", "Store", "BinOp", "Call", "Br", "CondBr", "Phi", "Ret", "PtrToInt",
    "IntToPtr", "Extract", "Check", "Instr", "Block", "Function", "GlobalDef", "Program",
    "ARITH_OPS", "CMP_OPS", "BUILTINS", "CHECKED_INTRINSICS", "INTERCEPT_PREFIX", "TERMINATORS",
    "POINTER_ARITH", "result_of", "operands", "var_uses", "successors", "value_types",
    "instr_type", "operand_type", "StructType",
]
