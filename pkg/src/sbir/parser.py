"""Line-oriented parser for ``.sbir`` text."""

from __future__ import annotations

import re
from typing import Optional

from .ir import (
    ARITH_OPS,
    CMP_OPS,
    Alloc,
    BinOp,
    Block,
    Br,
    Call,
    Cast,
    Check,
    CondBr,
    Const,
    Extract,
    FieldGep,
    Free,
    Function,
    Gep,
    GlobalDef,
    GlobalRef,
    Instr,
    IntToPtr,
    Load,
    Operand,
    Phi,
    Program,
    PtrToInt,
    Ret,
    StackAlloc,
    Store,
    Var,
)
from .types import (
    FNPTR,
    INT_WIDTHS,
    VOID,
    ArrayType,
    IntType,
    IrType,
    LayoutError,
    PtrType,
    StructDef,
    StructType,
    layout_structs,
)


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


class ValidationError(Exception):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<var>%[A-Za-z0-9_.]+)"
    r"|(?P<glob>@[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<int>-?\d+)"
    r"|(?P<arrow>->)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<punct>[\[\](){},:=*+])"
    r")"
)
_HEADER = re.compile(r"^\s*;!\s*([A-Za-z0-9_.-]+)\s*:\s*(.*?)\s*$")
_LABEL = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_.]*)\s*:\s*$")


class _Tokens:
    def __init__(self, text: str, lineno: int, col0: int = 0):
        self.toks: list[tuple[str, str, int]] = []
        self.lineno = lineno
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                raise ParseError(f"unexpected character {text[pos:].lstrip()[:1]!r}", lineno, col0 + pos + 1)
            kind = m.lastgroup
            assert kind is not None
            self.toks.append((kind, m.group(kind), col0 + m.start(kind) + 1))
            pos = m.end()
        self.i = 0
        self.end_col = col0 + len(text) + 1

    def peek(self, k: int = 0) -> Optional[tuple[str, str, int]]:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def col(self) -> int:
        t = self.peek()
        return t[2] if t else self.end_col

    def error(self, msg: str) -> ParseError:
        return ParseError(msg, self.lineno, self.col())

    def next(self) -> tuple[str, str, int]:
        t = self.peek()
        if t is None:
            raise self.error("unexpected end of line")
        self.i += 1
        return t

    def expect(self, text: str) -> None:
        t = self.peek()
        if t is None or t[1] != text:
            got = t[1] if t else "end of line"
            raise self.error(f"expected {text!r}, got {got!r}")
        self.i += 1

    def accept(self, text: str) -> bool:
        t = self.peek()
        if t is not None and t[1] == text:
            self.i += 1
            return True
        return False

    def ident(self) -> str:
        kind, val, _ = self.next()
        if kind != "ident":
            self.i -= 1
            raise self.error(f"expected identifier, got {val!r}")
        return val

    def var(self) -> str:
        kind, val, _ = self.next()
        if kind != "var":
            self.i -= 1
            raise self.error(f"expected %name, got {val!r}")
        return val[1:]

    def integer(self) -> int:
        kind, val, _ = self.next()
        if kind != "int":
            self.i -= 1
            raise self.error(f"expected integer, got {val!r}")
        return int(val)

    def done(self) -> bool:
        return self.i >= len(self.toks)

    def finish(self) -> None:
        if not self.done():
            raise self.error(f"unexpected trailing {self.peek()[1]!r}")  # type: ignore[index]


def _strip_comment(line: str) -> str:
    idx = line.find(";")
    return line if idx < 0 else line[:idx]


def parse_type(ts: _Tokens) -> IrType:
    kind, val, _ = ts.next()
    t: IrType
    if val == "[":
        n = ts.integer()
        if n < 0:
            raise ts.error("array length must be >= 0")
        x = ts.ident()
        if x != "x":
            raise ts.error("expected 'x' in array type")
        elem = parse_type(ts)
        ts.expect("]")
        t = ArrayType(elem, n)
    elif kind == "ident":
        m = re.fullmatch(r"i(\d+)", val)
        if m:
            w = int(m.group(1))
            if w not in INT_WIDTHS:
                ts.i -= 1
                raise ts.error(f"unsupported integer width {w}")
            t = IntType(w)
        elif val == "void":
            t = VOID
        elif val == "fnptr":
            t = FNPTR
        else:
            t = StructType(val)
    else:
        ts.i -= 1
        raise ts.error(f"expected type, got {val!r}")
    while ts.accept("*"):
        t = PtrType(t)
    return t


def parse_operand(ts: _Tokens) -> Operand:
    kind, val, _ = ts.next()
    if kind == "var":
        return Var(val[1:])
    if kind == "glob":
        return GlobalRef(val[1:])
    if kind == "int":
        return Const(int(val))
    if kind == "ident" and val == "null":
        return Const(0)
    ts.i -= 1
    raise ts.error(f"expected operand, got {val!r}")


def _operand_list(ts: _Tokens, close: str) -> list[Operand]:
    out: list[Operand] = []
    if ts.accept(close):
        return out
    while True:
        out.append(parse_operand(ts))
        if ts.accept(close):
            return out
        ts.expect(",")


def _ptr_target(ts: _Tokens) -> IrType:
    t = parse_type(ts)
    if not isinstance(t, PtrType):
        raise ts.error("cast target must be a pointer type")
    return t.pointee


def parse_instr(ts: _Tokens) -> Instr:
    first = ts.peek()
    assert first is not None
    if first[0] == "var":
        res = ts.var()
        ts.expect("=")
        op = ts.ident()
        return _parse_valued(ts, res, op)
    word = ts.ident()
    if word == "free":
        return Free(parse_operand(ts))
    if word == "store":
        t = parse_type(ts)
        v = parse_operand(ts)
        ts.expect(",")
        return Store(t, v, parse_operand(ts))
    if word == "call":
        return _parse_call(ts, None)
    if word == "br":
        return Br(ts.ident())
    if word == "brif":
        c = parse_operand(ts)
        ts.expect(",")
        l1 = ts.ident()
        ts.expect(",")
        return CondBr(c, l1, ts.ident())
    if word == "ret":
        return Ret(None if ts.done() else parse_operand(ts))
    if word == "sb.extract":
        res = ts.var()
        ts.expect("=")
        if ts.ident() != "bounds":
            raise ts.error("expected 'bounds'")
        return Extract(res, parse_operand(ts))
    if word == "sb.check":
        b = ts.var()
        ts.expect(",")
        r = parse_operand(ts)
        ts.expect(",")
        halves = ts.ident()
        if halves not in ("uo", "u", "o"):
            raise ts.error(f"bad check halves {halves!r}")
        extent = 1
        if ts.accept(","):
            extent = ts.integer()
            if extent < 1:
                raise ts.error("check extent must be >= 1")
        return Check(b, r, "u" in halves, "o" in halves, extent)
    ts.i -= 1
    raise ts.error(f"unknown instruction {word!r}")


def _parse_call(ts: _Tokens, res: Optional[str]) -> Call:
    t = ts.next()
    callee: object
    if t[0] == "var":
        callee = Var(t[1][1:])
    elif t[0] in ("ident", "glob"):
        callee = t[1].lstrip("@")
    else:
        ts.i -= 1
        raise ts.error("expected callee")
    ts.expect("(")
    args = _operand_list(ts, ")")
    return Call(res, callee, args)  # type: ignore[arg-type]


def _parse_valued(ts: _Tokens, res: str, op: str) -> Instr:
    if op == "alloc":
        return Alloc(res, parse_operand(ts))
    if op == "stackalloc":
        return StackAlloc(res, parse_type(ts))
    if op == "gep":
        base = parse_operand(ts)
        ts.expect(",")
        elem = parse_type(ts)
        ts.expect(",")
        return Gep(res, base, elem, parse_operand(ts))
    if op == "fieldgep":
        base = parse_operand(ts)
        ts.expect(",")
        sname = ts.ident()
        ts.expect(",")
        t = ts.peek()
        if t is not None and t[0] == "ident":
            # field given by name; resolved after struct layout
            ts.next()
            return FieldGep(res, base, sname, _FieldName(t[1]))  # type: ignore[arg-type]
        return FieldGep(res, base, sname, ts.integer())
    if op == "cast":
        base = parse_operand(ts)
        if ts.ident() != "to":
            raise ts.error("expected 'to'")
        return Cast(res, base, _ptr_target(ts))
    if op == "load":
        t = parse_type(ts)
        return Load(res, t, parse_operand(ts))
    if op in ARITH_OPS or op in CMP_OPS:
        t = parse_type(ts)
        if not isinstance(t, IntType):
            raise ts.error(f"{op} needs an integer type")
        a = parse_operand(ts)
        ts.expect(",")
        return BinOp(res, op, t, a, parse_operand(ts))
    if op == "call":
        return _parse_call(ts, res)
    if op == "phi":
        t = parse_type(ts)
        inc: list[tuple[Operand, str]] = []
        while True:
            ts.expect("[")
            v = parse_operand(ts)
            ts.expect(",")
            lab = ts.ident()
            ts.expect("]")
            inc.append((v, lab))
            if not ts.accept(","):
                break
        return Phi(res, t, inc)
    if op == "ptrtoint":
        return PtrToInt(res, parse_operand(ts))
    if op == "inttoptr":
        v = parse_operand(ts)
        if ts.ident() != "to":
            raise ts.error("expected 'to'")
        return IntToPtr(res, v, _ptr_target(ts))
    ts.i -= 2
    raise ts.error(f"unknown instruction {op!r}")


class _FieldName(str):
    pass


def parse_program(text: str, validate: bool = True) -> Program:
    """Parse IR text; by default also validate and raise ValidationError."""
    prog = Program()
    lines = text.splitlines()
    i = 0
    pending_fields: list[tuple[FieldGep, int]] = []
    while i < len(lines):
        raw = lines[i]
        lineno = i + 1
        i += 1
        hm = _HEADER.match(raw)
        if hm:
            prog.meta.append((hm.group(1), hm.group(2)))
            continue
        line = _strip_comment(raw)
        if not line.strip():
            continue
        ts = _Tokens(line, lineno)
        head = ts.ident()
        if head == "struct":
            while "}" not in line and i < len(lines):
                line = line + " " + _strip_comment(lines[i])
                i += 1
            ts = _Tokens(line, lineno)
            ts.ident()
            _parse_struct(ts, prog)
        elif head == "global":
            _parse_global(ts, prog)
        elif head == "fn":
            i = _parse_function(ts, prog, lines, i, pending_fields)
        else:
            ts.i -= 1
            raise ts.error(f"expected struct, global or fn, got {head!r}")
    try:
        layout_structs(prog.structs)
    except LayoutError as e:
        raise ValidationError([str(e)]) from None
    for fg, lineno in pending_fields:
        if isinstance(fg.field, _FieldName):
            sd = prog.structs.get(fg.struct)
            try:
                fg.field = sd.field_index(str(fg.field)) if sd else -1
            except KeyError:
                raise ParseError(f"struct {fg.struct} has no field {fg.field}", lineno, 1) from None
    if validate:
        from .validate import validate as _validate

        problems = _validate(prog)
        if problems:
            raise ValidationError(problems)
    return prog


def _parse_struct(ts: _Tokens, prog: Program) -> None:
    name = ts.ident()
    ts.accept("packed")  # layout is always normalized to 8-byte padding
    ts.expect("{")
    fields: list[tuple[str, IrType]] = []
    if not ts.accept("}"):
        while True:
            fname = ts.ident()
            ts.expect(":")
            fields.append((fname, parse_type(ts)))
            if ts.accept("}"):
                break
            ts.expect(",")
    ts.finish()
    if name in prog.structs:
        raise ts.error(f"duplicate struct {name}")
    prog.structs[name] = StructDef(name, fields)


def _parse_global(ts: _Tokens, prog: Program) -> None:
    name = ts.ident()
    ts.expect(":")
    t = parse_type(ts)
    if not isinstance(t, ArrayType):
        raise ts.error("globals must have array type")
    init = None
    if ts.accept("="):
        ts.expect("[")
        init = [o.value for o in _operand_list(ts, "]") if isinstance(o, Const)]
    ts.finish()
    prog.globals[name] = GlobalDef(name, t, init)


def _parse_function(ts: _Tokens, prog: Program, lines: list[str], i: int,
                    pending_fields: list[tuple[FieldGep, int]]) -> int:
    name = ts.ident()
    ts.expect("(")
    params: list[tuple[str, IrType]] = []
    if not ts.accept(")"):
        while True:
            t = ts.next()
            if t[0] not in ("var", "ident"):
                ts.i -= 1
                raise ts.error("expected parameter name")
            ts.expect(":")
            params.append((t[1].lstrip("%"), parse_type(ts)))
            if ts.accept(")"):
                break
            ts.expect(",")
    ret: IrType = VOID
    if ts.accept("->"):
        ret = parse_type(ts)
    ts.expect("{")
    ts.finish()
    if name in prog.functions:
        raise ParseError(f"duplicate function {name}", ts.lineno, 1)
    blocks: list[Block] = []
    cur: Optional[Block] = None
    while i < len(lines):
        lineno = i + 1
        line = _strip_comment(lines[i])
        i += 1
        if not line.strip():
            continue
        if line.strip() == "}":
            prog.functions[name] = Function(name, params, ret, blocks)
            return i
        lm = _LABEL.match(line)
        if lm:
            cur = Block(lm.group(1))
            blocks.append(cur)
            continue
        if cur is None:
            cur = Block("entry")
            blocks.append(cur)
        its = _Tokens(line, lineno)
        ins = parse_instr(its)
        its.finish()
        if isinstance(ins, FieldGep):
            pending_fields.append((ins, lineno))
        cur.instrs.append(ins)
    raise ParseError(f"unterminated function {name}", len(lines), 1)
