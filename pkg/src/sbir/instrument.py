"""Check-site instrumentation.

``instrument`` records one CheckSite per gep/fieldgep/cast and gives each a
private extraction binding.  The original Program is never modified;
optimizer passes only edit site and binding metadata, and ``materialize``
renders the result as a Program containing ``sb.extract``/``sb.check``
pseudo-instructions plus checked intrinsic calls.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .analysis.cache import Analyses
from .analysis.ranges import Interval, RangeInfo
from .ir import (
    CHECKED_INTRINSICS,
    INTERCEPT_PREFIX,
    BinOp,
    Block,
    Call,
    Cast,
    Check,
    Const,
    Extract,
    FieldGep,
    Function,
    Gep,
    Load,
    Operand,
    Program,
    Store,
    Var,
)
from .types import LayoutError, size_of

HALF_NAMES = {"u": "underflow", "o": "overflow"}


@dataclass(frozen=True)
class Offset:
    """Byte offset from base to result: ``scale * var + const``."""

    scale: int
    var: Optional[str]
    const: int

    def interval(self, ranges: RangeInfo, block: str) -> Interval:
        if self.var is None or self.scale == 0:
            return Interval.const(self.const)
        return ranges.at(self.var, block).scale(self.scale).shift(self.const)

    def __str__(self) -> str:
        if self.var is None or self.scale == 0:
            return str(self.const)
        return f"{self.scale}*%{self.var}{self.const:+d}"


@dataclass
class CheckSite:
    id: str
    function: str
    block: str
    index: int
    kind: str  # gep | fieldgep | cast
    base: Operand
    result: str
    offset: Offset
    extent: int
    underflow: bool = True
    overflow: bool = True
    binding: str = ""
    status: str = "active"
    eliminated_by: Optional[str] = None
    reason: Optional[dict] = None
    foreign: bool = False

    @property
    def active(self) -> bool:
        return self.status == "active"

    @property
    def pos(self) -> tuple[str, int]:
        return (self.block, self.index)

    @property
    def halves(self) -> str:
        return ("u" if self.underflow else "") + ("o" if self.overflow else "")


@dataclass
class ExtractionBinding:
    id: str
    function: str
    source: Operand
    block: str
    index: int  # extraction goes immediately before this instruction
    consumers: list[str] = field(default_factory=list)
    merged: bool = False

    @property
    def bounds_name(self) -> str:
        return self.id.split(":", 1)[1]


@dataclass
class InstrumentedProgram:
    program: Program
    sites: dict[str, CheckSite] = field(default_factory=dict)
    bindings: dict[str, ExtractionBinding] = field(default_factory=dict)
    log: list[dict] = field(default_factory=list)
    reserve: Optional[int] = None
    _analyses: Optional[Analyses] = field(default=None, repr=False, compare=False)

    @property
    def analyses(self) -> Analyses:
        if self._analyses is None:
            self._analyses = Analyses(self.program)
        return self._analyses

    def copy(self) -> "InstrumentedProgram":
        # the program and its analyses are shared read-only
        return InstrumentedProgram(
            self.program,
            copy.deepcopy(self.sites),
            copy.deepcopy(self.bindings),
            list(self.log),
            self.reserve,
            self._analyses,
        )

    def sites_in(self, fname: str) -> list[CheckSite]:
        return [s for s in self.sites.values() if s.function == fname]

    def active_sites(self, fname: Optional[str] = None) -> Iterator[CheckSite]:
        for s in self.sites.values():
            if s.active and (fname is None or s.function == fname):
                yield s

    # -- status changes; each logs exactly one entry ------------------------

    def remove_site(self, site_id: str, pass_name: str, why: dict) -> None:
        s = self.sites[site_id]
        if not s.active:
            return
        s.status = "eliminated"
        s.eliminated_by = pass_name
        s.reason = why
        self.log.append({"site": site_id, "pass": pass_name, "action": "removeSite", "why": why})

    def drop_halves(self, site_id: str, halves: str, pass_name: str, why: dict) -> None:
        """Clear the given halves ("u", "o" or "uo"); clearing every remaining
        half removes the site with a single log entry."""
        s = self.sites[site_id]
        if not s.active:
            return
        todo = [h for h in halves if h in s.halves]
        if not todo:
            return
        if set(todo) == set(s.halves):
            self.remove_site(site_id, pass_name, why)
            return
        for h in todo:
            setattr(s, HALF_NAMES[h], False)
            action = "dropUnderflow" if h == "u" else "dropOverflow"
            self.log.append({"site": site_id, "pass": pass_name, "action": action, "why": why})

    def merge_into(self, binding: ExtractionBinding, pass_name: str, why: dict) -> None:
        self.bindings[binding.id] = binding
        for sid in binding.consumers:
            self.sites[sid].binding = binding.id
            self.log.append({"site": sid, "pass": pass_name, "action": "mergeExtraction",
                             "why": dict(why, into=binding.id)})

    # -- rendering --------------------------------------------------------

    def materialize(self, checks: bool = True) -> Program:
        """Program with pseudo-instructions for every active site.

        With ``checks=False`` the original program is returned unchanged
        (no extractions, no checks, unchecked intrinsics).
        """
        prog = self.program
        out = Program(prog.structs, prog.globals, {}, list(prog.meta))
        if self.reserve is not None and checks:
            out.set_meta("reserve", str(self.reserve))
        for fname, fn in prog.functions.items():
            out.functions[fname] = self._materialize_fn(fn, checks)
        return out

    def _materialize_fn(self, fn: Function, checks: bool) -> Function:
        if not checks:
            return fn
        at: dict[tuple[str, int], CheckSite] = {}
        for s in self.sites_in(fn.name):
            if s.active:
                at[s.pos] = s
        merged_at: dict[tuple[str, int], list[ExtractionBinding]] = {}
        for b in self.bindings.values():
            if b.function == fn.name and b.merged and any(self.sites[c].active for c in b.consumers):
                merged_at.setdefault((b.block, b.index), []).append(b)
        blocks = []
        for blk in fn.blocks:
            instrs = []
            for i, ins in enumerate(blk.instrs):
                for b in merged_at.get((blk.label, i), ()):
                    instrs.append(Extract(b.bounds_name, b.source))
                site = at.get((blk.label, i))
                if site is not None and not self.bindings[site.binding].merged:
                    instrs.append(Extract(self.bindings[site.binding].bounds_name, site.base))
                instrs.append(_intercept(ins))
                if site is not None:
                    instrs.append(Check(self.bindings[site.binding].bounds_name, Var(site.result),
                                        site.underflow, site.overflow, site.extent))
            blocks.append(Block(blk.label, instrs))
        return Function(fn.name, fn.params, fn.ret, blocks)


def _intercept(ins):
    if isinstance(ins, Call) and isinstance(ins.callee, str) and ins.callee in CHECKED_INTRINSICS:
        return Call(ins.result, INTERCEPT_PREFIX + ins.callee, list(ins.args))
    return ins


def _access_size(prog: Program, fn: Function, name: str) -> int:
    best = 0
    for _, _, ins in fn.positions():
        if isinstance(ins, Load) and ins.ptr == Var(name):
            best = max(best, _size(prog, ins.type))
        elif isinstance(ins, Store) and ins.ptr == Var(name):
            best = max(best, _size(prog, ins.type))
    return best


def _size(prog: Program, t) -> int:
    try:
        return size_of(t, prog.structs)
    except LayoutError:
        return 0


def linearize(an: Analyses, fname: str, index: Operand, elem_size: int) -> Offset:
    """Express ``index * elem_size`` as ``scale * var + const`` through
    non-wrapping add/sub/mul with constants."""
    if isinstance(index, Const):
        return Offset(0, None, index.value * elem_size)
    if not isinstance(index, Var):
        return Offset(elem_size, None, 0)
    ranges = an.ranges(fname)
    defs = an.defs[fname]
    scale, var, const = 1, index.name, 0
    while True:
        d = defs.get(var)
        if not isinstance(d, BinOp) or var in ranges.may_wrap:
            break
        if d.op in ("add", "sub") and isinstance(d.b, Const) and isinstance(d.a, Var):
            k = d.b.value if d.op == "add" else -d.b.value
            const += scale * k
            var = d.a.name
        elif d.op == "add" and isinstance(d.a, Const) and isinstance(d.b, Var):
            const += scale * d.a.value
            var = d.b.name
        elif d.op == "mul" and isinstance(d.b, Const) and isinstance(d.a, Var):
            scale *= d.b.value
            var = d.a.name
        elif d.op == "mul" and isinstance(d.a, Const) and isinstance(d.b, Var):
            scale *= d.a.value
            var = d.b.name
        else:
            break
    return Offset(scale * elem_size, var, const * elem_size)


def instrument(prog: Program, analyses: Optional[Analyses] = None) -> InstrumentedProgram:
    an = analyses or Analyses(prog)
    ip = InstrumentedProgram(prog, _analyses=an)
    for fname, fn in prog.functions.items():
        for label, i, ins in fn.positions():
            if isinstance(ins, Gep):
                es = _size(prog, ins.elem)
                off = linearize(an, fname, ins.index, es)
                ext = _access_size(prog, fn, ins.result) or 1
                kind = "gep"
            elif isinstance(ins, FieldGep):
                sd = prog.structs[ins.struct]
                off = Offset(0, None, sd.offsets[ins.field])
                ext = _access_size(prog, fn, ins.result) or 1
                kind = "fieldgep"
            elif isinstance(ins, Cast):
                tsize = _size(prog, ins.target)
                if tsize <= 0:
                    continue
                off = Offset(0, None, 0)
                ext = max(tsize, _access_size(prog, fn, ins.result))
                kind = "cast"
            else:
                continue
            sid = f"{fname}:%{ins.result}"
            base = ins.base
            foreign = isinstance(base, Var) and an.is_foreign(fname, base.name)
            bid = f"{fname}:sb.{ins.result}"
            ip.sites[sid] = CheckSite(sid, fname, label, i, kind, base, ins.result, off, ext,
                                      binding=bid, foreign=foreign)
            ip.bindings[bid] = ExtractionBinding(bid, fname, base, label, i, [sid])
    return ip


def count_static_checks(ip: InstrumentedProgram, fname: Optional[str] = None) -> dict[str, int]:
    sites = [s for s in ip.sites.values() if fname is None or s.function == fname]
    active = [s for s in sites if s.active]
    used = {s.binding for s in active}
    return {
        "sites": len(sites),
        "activeSites": len(active),
        "activeHalves": sum(len(s.halves) for s in active),
        "extractions": len(used),
    }


def strip_instrumentation(prog: Program) -> Program:
    """Remove pseudo-instructions and restore plain intrinsic calls."""
    out = Program(prog.structs, prog.globals, {}, [(k, v) for k, v in prog.meta if k not in ("reserve",)])
    for fname, fn in prog.functions.items():
        blocks = []
        for b in fn.blocks:
            instrs = []
            for ins in b.instrs:
                if isinstance(ins, (Extract, Check)):
                    continue
                if isinstance(ins, Call) and isinstance(ins.callee, str) and ins.callee.startswith(INTERCEPT_PREFIX):
                    ins = Call(ins.result, ins.callee[len(INTERCEPT_PREFIX):], list(ins.args))
                instrs.append(ins)
            blocks.append(Block(b.label, instrs))
        out.functions[fname] = Function(fn.name, fn.params, fn.ret, blocks)
    return out


def from_program(prog: Program) -> InstrumentedProgram:
    """Rebuild site metadata from a materialized (parsed) program."""
    base = strip_instrumentation(prog)
    ip = instrument(base)
    r = prog.meta_value("reserve")
    ip.reserve = int(r) if r is not None else None
    for fname, fn in prog.functions.items():
        checks: dict[str, Check] = {}
        extracts: dict[str, tuple[Extract, str, int]] = {}
        for b in fn.blocks:
            k = 0  # index in the stripped block
            for ins in b.instrs:
                if isinstance(ins, Check):
                    if isinstance(ins.res, Var):
                        checks[ins.res.name] = ins
                elif isinstance(ins, Extract):
                    extracts[ins.result] = (ins, b.label, k)
                else:
                    k += 1
        for s in ip.sites_in(fname):
            chk = checks.get(s.result)
            if chk is None:
                s.status = "eliminated"
                s.eliminated_by = "unknown"
                continue
            s.underflow, s.overflow, s.extent = chk.underflow, chk.overflow, chk.extent
            if chk.bounds != f"sb.{s.result}":
                bid = f"{fname}:{chk.bounds}"
                if bid not in ip.bindings:
                    ex, label, k = extracts[chk.bounds]
                    ip.bindings[bid] = ExtractionBinding(bid, fname, ex.src, label, k, [], merged=True)
                ip.bindings[bid].consumers.append(s.id)
                s.binding = bid
    return ip
