"""Integer interval analysis.

One interval per SSA integer value, computed flow-insensitively but with
operands refined by the branch conditions that dominate the block in which
they are used.  Loop-header phis are widened to the type bounds after a few
rounds and then narrowed by plain re-evaluation.  Intervals are always
finite: "unbounded" means clamped to the bounds of the value's type.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from ..ir import (
    CMP_OPS,
    BinOp,
    Call,
    CondBr,
    Const,
    Function,
    GlobalRef,
    Load,
    Operand,
    Phi,
    Program,
    PtrToInt,
    Var,
    value_types,
)
from ..types import IntType, int_bounds, wrap_int
from .cfg import DomInfo, compute_dom

WIDEN_AFTER = 2
NARROW_PASSES = 3


@dataclass(frozen=True)
class Interval:
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @staticmethod
    def const(c: int) -> "Interval":
        return Interval(c, c)

    @staticmethod
    def of_width(width: int) -> "Interval":
        return Interval(*int_bounds(width))

    def __contains__(self, v: int) -> bool:
        return self.lo <= v <= self.hi

    def union(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def meet(self, other: "Interval") -> Optional["Interval"]:
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else None

    def subset_of(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def scale(self, k: int) -> "Interval":
        a, b = self.lo * k, self.hi * k
        return Interval(min(a, b), max(a, b))

    def shift(self, c: int) -> "Interval":
        return Interval(self.lo + c, self.hi + c)

    @property
    def is_const(self) -> bool:
        return self.lo == self.hi

    def __str__(self) -> str:
        return f"[{self.lo}, {self.hi}]"


TOP64 = Interval.of_width(64)
BOOL = Interval(0, 1)


def _exact(op: str, a: Interval, b: Interval) -> Optional[Interval]:
    """Unbounded-math result of a wrapping-capable op, or None if not modelled."""
    if op == "add":
        return Interval(a.lo + b.lo, a.hi + b.hi)
    if op == "sub":
        return Interval(a.lo - b.hi, a.hi - b.lo)
    if op == "mul":
        cands = [a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi]
        return Interval(min(cands), max(cands))
    if op == "shl" and b.is_const and 0 <= b.lo < 64:
        return a.scale(1 << b.lo)
    return None


def _non_wrapping(op: str, a: Interval, b: Interval, width: int) -> Optional[Interval]:
    """Ops whose result always fits the type; None when we can't say more than top."""
    full = Interval.of_width(width)
    if op in ("sdiv", "udiv") and b.is_const and b.lo > 0 and (op == "sdiv" or a.lo >= 0):
        c = b.lo
        q = [int(a.lo / c), int(a.hi / c)]
        return Interval(min(q), max(q))
    if op in ("srem", "urem") and b.is_const and b.lo > 0:
        c = b.lo
        if a.lo >= 0:
            return Interval(0, min(a.hi, c - 1))
        if op == "srem":
            return Interval(-(c - 1), c - 1)
        return Interval(0, c - 1)
    if op == "and":
        if a.lo >= 0 and b.lo >= 0:
            return Interval(0, min(a.hi, b.hi))
        if a.lo >= 0:
            return Interval(0, a.hi)
        if b.lo >= 0:
            return Interval(0, b.hi)
        return full
    if op in ("lshr", "ashr") and b.is_const and 0 <= b.lo < width:
        k = b.lo
        if a.lo >= 0 or op == "ashr" or k == 0:
            return Interval(a.lo >> k, a.hi >> k)
        return Interval(0, (1 << (width - k)) - 1)
    if op == "or" and a.lo >= 0 and b.lo >= 0:
        hi = (1 << max(a.hi, b.hi).bit_length()) - 1
        return Interval(0, min(hi, full.hi))
    return None


def _refine_cmp(op: str, val: Interval, other: Interval, val_is_lhs: bool, truth: bool) -> Optional[Interval]:
    """Narrow ``val`` given that ``lhs op rhs`` evaluated to ``truth``."""
    # normalize to "val REL other"
    if not val_is_lhs:
        op = {"slt": "sgt", "sle": "sge", "sgt": "slt", "sge": "sle", "ult": "ugt", "ule": "uge",
              "ugt": "ult", "uge": "ule"}.get(op, op)
    if not truth:
        op = {"slt": "sge", "sle": "sgt", "sgt": "sle", "sge": "slt", "eq": "ne", "ne": "eq",
              "ult": "uge", "ule": "ugt", "ugt": "ule", "uge": "ult"}[op]
    if op.startswith("u"):
        if other.lo < 0:
            return val
        if op in ("ult", "ule"):
            # unsigned val below a non-negative bound is itself non-negative
            hi = other.hi - 1 if op == "ult" else other.hi
            return val.meet(Interval(0, max(hi, 0))) if hi >= 0 else None
        if val.lo < 0:
            return val
        op = "s" + op[1:]
    if op == "slt":
        return val.meet(Interval(val.lo, other.hi - 1)) if other.hi - 1 >= val.lo else None
    if op == "sle":
        return val.meet(Interval(val.lo, other.hi)) if other.hi >= val.lo else None
    if op == "sgt":
        return val.meet(Interval(other.lo + 1, val.hi)) if other.lo + 1 <= val.hi else None
    if op == "sge":
        return val.meet(Interval(other.lo, val.hi)) if other.lo <= val.hi else None
    if op == "eq":
        return val.meet(other)
    if op == "ne" and other.is_const:
        c = other.lo
        if c == val.lo and val.lo < val.hi:
            return Interval(val.lo + 1, val.hi)
        if c == val.hi and val.lo < val.hi:
            return Interval(val.lo, val.hi - 1)
    return val


@dataclass
class RangeInfo:
    fn: Function
    dom: DomInfo
    values: dict[str, Interval]
    widths: dict[str, int]
    may_wrap: set[str] = field(default_factory=set)
    # block -> conditions known on entry: (cmp instruction, truth)
    facts: dict[str, list[tuple[BinOp, bool]]] = field(default_factory=dict)
    cmps: dict[str, BinOp] = field(default_factory=dict)

    def of(self, name: str) -> Interval:
        v = self.values.get(name)
        if v is None:
            return Interval.of_width(self.widths.get(name, 64))
        return v

    def operand(self, op: Operand, block: Optional[str] = None, width: int = 64) -> Interval:
        if isinstance(op, Const):
            return Interval.const(wrap_int(op.value, width))
        if isinstance(op, GlobalRef):
            return TOP64
        if block is None:
            return self.of(op.name)
        return self.at(op.name, block)

    def at(self, name: str, block: str) -> Interval:
        """Range of ``name`` for uses inside ``block``."""
        return _refined(self, name, self.facts.get(block, ()), self.of)

    def on_edge(self, name: str, pred: str, succ: str) -> Interval:
        facts = list(self.facts.get(pred, ()))
        facts.extend(_edge_fact(self, pred, succ))
        return _refined(self, name, facts, self.of)


def _refined(info: RangeInfo, name: str, facts, lookup: Callable[[str], Optional[Interval]]) -> Interval:
    cur = lookup(name)
    if cur is None:
        return None  # type: ignore[return-value]
    for cmp, truth in facts:
        for side, other_op in ((cmp.a, cmp.b), (cmp.b, cmp.a)):
            if isinstance(side, Var) and side.name == name:
                if isinstance(other_op, Var):
                    other = lookup(other_op.name)
                    if other is None:
                        continue
                elif isinstance(other_op, Const):
                    other = Interval.const(wrap_int(other_op.value, cmp.type.width))
                else:
                    continue
                nxt = _refine_cmp(cmp.op, cur, other, side is cmp.a, truth)
                if nxt is None:
                    # contradictory guard: the use is unreachable; keep a sound value
                    return cur
                cur = nxt
    return cur


def _edge_fact(info: RangeInfo, pred: str, succ: str) -> list[tuple[BinOp, bool]]:
    term = info.fn.block(pred).terminator
    if isinstance(term, CondBr) and term.if_true != term.if_false and isinstance(term.cond, Var):
        cmp = info.cmps.get(term.cond.name)
        if cmp is not None:
            return [(cmp, succ == term.if_true)]
    return []


def _block_facts(info: RangeInfo) -> None:
    preds = info.dom.preds
    for label in info.dom.reachable:
        facts: list[tuple[BinOp, bool]] = []
        x = label
        while True:
            ps = preds.get(x, [])
            if len(ps) == 1 and ps[0] != x:
                facts.extend(_edge_fact(info, ps[0], x))
            parent = info.dom.idom[x]
            if parent == x:
                break
            x = parent
        info.facts[label] = facts


def compute_ranges(prog: Program, fn: Function, dom: Optional[DomInfo] = None) -> RangeInfo:
    dom = dom or compute_dom(fn)
    types = value_types(prog, fn)
    widths = {n: t.width for n, t in types.items() if isinstance(t, IntType)}
    info = RangeInfo(fn, dom, {}, widths)
    for _, _, ins in fn.positions():
        if isinstance(ins, BinOp) and ins.op in CMP_OPS:
            info.cmps[ins.result] = ins
    _block_facts(info)

    values = info.values
    for p, t in fn.params:
        if isinstance(t, IntType):
            values[p] = Interval.of_width(t.width)

    blocks = fn.block_map()
    order = [(label, ins) for label in dom.rpo for ins in blocks[label].instrs]
    headers = dom.loop_headers()

    def lookup(name: str) -> Optional[Interval]:
        return values.get(name)

    def opnd(op: Operand, block: str, width: int) -> Optional[Interval]:
        if isinstance(op, Const):
            return Interval.const(wrap_int(op.value, width))
        if isinstance(op, GlobalRef):
            return TOP64
        if op.name not in widths:
            return Interval.of_width(width)
        return _refined(info, op.name, info.facts.get(block, ()), lookup)

    def evaluate(label: str, ins) -> Optional[Interval]:
        if isinstance(ins, BinOp):
            w = ins.type.width
            if ins.op in CMP_OPS:
                return BOOL
            a, b = opnd(ins.a, label, w), opnd(ins.b, label, w)
            if a is None or b is None:
                return None
            full = Interval.of_width(w)
            ex = _exact(ins.op, a, b)
            if ex is not None:
                return ex if ex.subset_of(full) else full
            r = _non_wrapping(ins.op, a, b, w)
            return r.meet(full) if r is not None else full
        if isinstance(ins, Phi):
            w = widths.get(ins.result, 64)
            acc: Optional[Interval] = None
            for v, pred in ins.incoming:
                if pred not in dom.reachable:
                    continue
                if isinstance(v, Var):
                    if v.name not in widths:
                        r = Interval.of_width(w)
                    else:
                        facts = list(info.facts.get(pred, ()))
                        facts.extend(_edge_fact(info, pred, label))
                        r = _refined(info, v.name, facts, lookup)
                else:
                    r = opnd(v, pred, w)
                if r is None:
                    continue
                acc = r if acc is None else acc.union(r)
            return acc
        if isinstance(ins, (Load, Call, PtrToInt)):
            return Interval.of_width(widths.get(ins.result, 64))
        return None

    int_results = [(label, ins) for label, ins in order
                   if getattr(ins, "result", None) in widths]
    updates: dict[str, int] = {}
    # ascending phase with widening at loop-header phis
    changed = True
    rounds = 0
    while changed:
        changed = False
        rounds += 1
        for label, ins in int_results:
            new = evaluate(label, ins)
            if new is None:
                continue
            old = values.get(ins.result)
            if old is not None:
                new = new.union(old)
            if new == old:
                continue
            if old is not None and isinstance(ins, Phi) and label in headers:
                updates[ins.result] = updates.get(ins.result, 0) + 1
                if updates[ins.result] > WIDEN_AFTER:
                    full = Interval.of_width(widths[ins.result])
                    new = Interval(full.lo if new.lo < old.lo else old.lo,
                                   full.hi if new.hi > old.hi else old.hi)
            values[ins.result] = new
            changed = True
        if rounds > 3 * max(len(int_results), 1) + 10:
            # safety net; widening should have converged long before this
            for label, ins in int_results:
                values[ins.result] = Interval.of_width(widths[ins.result])
            break
    # descending phase
    for _ in range(NARROW_PASSES):
        for label, ins in int_results:
            new = evaluate(label, ins)
            if new is not None:
                old = values.get(ins.result)
                values[ins.result] = new if old is None else (new.meet(old) or old)
    # wrap detection against final operand ranges
    for label, ins in int_results:
        if isinstance(ins, BinOp) and ins.op not in CMP_OPS:
            w = ins.type.width
            a, b = opnd(ins.a, label, w), opnd(ins.b, label, w)
            if a is None or b is None:
                continue
            ex = _exact(ins.op, a, b)
            if ex is not None and not ex.subset_of(Interval.of_width(w)):
                info.may_wrap.add(ins.result)
    return info
