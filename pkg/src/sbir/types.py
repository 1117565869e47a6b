"""Type system for the mini-IR and its 8-byte padded layout rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

GRANULE = 8
INT_WIDTHS = (1, 8, 16, 32, 64)


def round_up8(n: int) -> int:
    return (n + 7) & ~7


@dataclass(frozen=True)
class IntType:
    width: int

    def __str__(self) -> str:
        return f"i{self.width}"


@dataclass(frozen=True)
class PtrType:
    pointee: "IrType"

    def __str__(self) -> str:
        return f"{self.pointee}*"


@dataclass(frozen=True)
class StructType:
    """Named reference; layout lives in the program's struct table."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ArrayType:
    elem: "IrType"
    length: int

    def __str__(self) -> str:
        return f"[{self.length} x {self.elem}]"


@dataclass(frozen=True)
class VoidType:
    def __str__(self) -> str:
        return "void"


@dataclass(frozen=True)
class FnPtrType:
    """Opaque code pointer (the value of ``@function``)."""

    def __str__(self) -> str:
        return "fnptr"


@dataclass(frozen=True)
class BoundsType:
    """Type of the (beg, end) pair bound by ``sb.extract``."""

    def __str__(self) -> str:
        return "bounds"


IrType = Union[IntType, PtrType, StructType, ArrayType, VoidType, FnPtrType, BoundsType]

I1, I8, I16, I32, I64 = (IntType(w) for w in INT_WIDTHS)
VOID = VoidType()
FNPTR = FnPtrType()
BOUNDS = BoundsType()
I8PTR = PtrType(I8)


class LayoutError(Exception):
    pass


@dataclass
class StructDef:
    name: str
    fields: list[tuple[str, IrType]]
    offsets: list[int] = field(default_factory=list)
    size: int = 0

    def field_index(self, name: str) -> int:
        for i, (fname, _) in enumerate(self.fields):
            if fname == name:
                return i
        raise KeyError(name)


def size_of(t: IrType, structs: dict[str, StructDef]) -> int:
    if isinstance(t, IntType):
        return max(1, t.width // 8)
    if isinstance(t, (PtrType, FnPtrType)):
        return 8
    if isinstance(t, ArrayType):
        return t.length * size_of(t.elem, structs)
    if isinstance(t, StructType):
        sd = structs.get(t.name)
        if sd is None:
            raise LayoutError(f"unknown struct {t.name}")
        return sd.size
    raise LayoutError(f"type {t} has no size")


def layout_structs(structs: dict[str, StructDef]) -> None:
    """Fill offsets/size for every struct, padding each field to 8 bytes.

    Raises LayoutError on by-value cycles or unknown struct references.
    """
    state: dict[str, int] = {}  # 1 = in progress, 2 = done

    def visit(name: str) -> None:
        if state.get(name) == 2:
            return
        if state.get(name) == 1:
            raise LayoutError(f"struct {name} contains itself by value")
        sd = structs.get(name)
        if sd is None:
            raise LayoutError(f"unknown struct {name}")
        state[name] = 1
        off = 0
        offsets = []
        for _, ft in sd.fields:
            for dep in _by_value_structs(ft):
                visit(dep)
            offsets.append(off)
            off += round_up8(size_of(ft, structs))
        sd.offsets = offsets
        sd.size = off
        state[name] = 2

    for name in structs:
        visit(name)


def _by_value_structs(t: IrType) -> list[str]:
    if isinstance(t, StructType):
        return [t.name]
    if isinstance(t, ArrayType):
        return _by_value_structs(t.elem)
    return []


def is_ptr(t: IrType) -> bool:
    return isinstance(t, PtrType)


def is_int(t: IrType) -> bool:
    return isinstance(t, IntType)


def int_bounds(width: int) -> tuple[int, int]:
    if width == 1:
        return 0, 1
    return -(1 << (width - 1)), (1 << (width - 1)) - 1


def wrap_int(value: int, width: int) -> int:
    """Two's-complement wrap into a signed ``width``-bit integer (i1 is 0/1)."""
    if width == 1:
        return value & 1
    mask = (1 << width) - 1
    value &= mask
    if value >> (width - 1):
        value -= 1 << width
    return value
