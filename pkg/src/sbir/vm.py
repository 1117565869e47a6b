"""Deterministic interpreter over a simulated 64-bit address space.

``Machine(program)`` compiles every function once into per-block lists of
closures; ``Machine.run(inputs, config)`` executes ``main`` against a fresh
ShadowRuntime and returns a RunReport.  Besides executing the program the
VM tracks, for every pointer value, the object it was derived from, which is
how out-of-object accesses are classified (in-slack, reserved tail, overlap
with other data, unmapped).
"""

from __future__ import annotations

import bisect
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional

from .ir import (
    BinOp,
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
    GlobalRef,
    IntToPtr,
    Load,
    Phi,
    Program,
    PtrToInt,
    Ret,
    StackAlloc,
    Store,
    Var,
    Alloc,
)
from .runtime import RegionConfig, RuntimeFault, ShadowRuntime
from .types import IntType, PtrType, size_of, wrap_int

U64 = (1 << 64) - 1
PAGE = 4096
CODE_BASE = 0x0000_0040_0000
STACK_LIMIT = 1 << 20
MAX_EVENTS = 64
NULL_PAGE = 4096

OUTCOMES = ("ok", "OD", "BR", "TF", "fault", "budget")
EXIT_CODES = {"ok": 0, "BR": 0, "OD": 3, "fault": 4, "TF": 4, "budget": 5}


@dataclass(frozen=True)
class RunConfig:
    region: RegionConfig = field(default_factory=RegionConfig)
    allocator: str = "bump"
    step_budget: int = 10_000_000
    max_depth: int = 200
    trace: bool = False


@dataclass
class RunStats:
    steps: int = 0
    checksExecuted: int = 0
    halfChecksExecuted: int = 0
    extractionsExecuted: int = 0
    intrinsicChecks: int = 0
    allocs: int = 0
    frees: int = 0
    bytesAllocated: int = 0
    shadowBytesTouched: int = 0

    @property
    def dynamic_checks(self) -> int:
        return self.extractionsExecuted + self.halfChecksExecuted


@dataclass
class RunReport:
    outcome: str
    detail: dict = field(default_factory=dict)
    returnValue: Optional[int] = None
    output: list[int] = field(default_factory=list)
    stats: RunStats = field(default_factory=RunStats)
    events: list[dict] = field(default_factory=list)
    eventCounts: dict[str, int] = field(default_factory=dict)
    trace: list[dict] = field(default_factory=list)

    @property
    def consequence(self) -> str:
        return classify_consequence(self)

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.outcome]

    def visible(self) -> tuple:
        """What the program itself can observe: outputs and main's result."""
        return (tuple(self.output), self.returnValue)

    def to_json(self) -> dict:
        d = asdict(self)
        d["consequence"] = self.consequence
        if not self.trace:
            d.pop("trace")
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def classify_consequence(report: RunReport) -> str:
    """Consequence class of the OOB behaviour seen in a run: S3 > S1 > S2, N/A if none."""
    counts = report.eventCounts
    if counts.get("overlap"):
        return "S3"
    if report.outcome in ("fault", "TF"):
        return "S1"
    if counts.get("slack") or counts.get("reserved"):
        return "S2"
    return "N/A"


# -- machine state -------------------------------------------------------------


class Stop(Exception):
    def __init__(self, outcome: str, **detail: Any):
        super().__init__(outcome)
        self.outcome = outcome
        self.detail = detail


class Obj:
    """A non-heap object (stack slot or global) in the same shape as a Chunk."""

    __slots__ = ("begin", "requested", "usable", "state", "name")

    def __init__(self, begin: int, requested: int, usable: int, name: str):
        self.begin, self.requested, self.usable, self.name = begin, requested, usable, name
        self.state = "live"

    @property
    def end(self) -> int:
        return self.begin + self.usable

    @property
    def live(self) -> bool:
        return self.state == "live"


class _ZeroReserved:
    """Provenance of a null pointer that was read out of a chunk's zeroed reserved tail."""

    __slots__ = ("pc", "addr")

    def __init__(self, pc: str, addr: int):
        self.pc, self.addr = pc, addr


class State:
    def __init__(self, machine: "Machine", inputs: list[int], cfg: RunConfig):
        self.m = machine
        self.cfg = cfg
        self.rt = ShadowRuntime(cfg.region, cfg.allocator)
        self.inputs = inputs
        self.pages: dict[int, bytearray] = {}
        self.ptr_prov: dict[int, tuple[int, Any]] = {}
        self.stats = RunStats()
        self.output: list[int] = []
        self.events: list[dict] = []
        self.event_counts: dict[str, int] = {}
        self.trace: list[dict] = []
        self.depth = 0
        self.sp = cfg.region.stack_base
        self.stack: list[Obj] = []
        self.globals: dict[str, Obj] = {}
        self.global_list: list[Obj] = []
        self._layout_globals()

    # -- layout ---------------------------------------------------------------

    def _layout_globals(self) -> None:
        prog = self.m.program
        addr = self.cfg.region.global_base
        for name, g in prog.globals.items():
            size = size_of(g.type, prog.structs)
            usable = max(8, (size + 7) & ~7)
            obj = Obj(addr, size, usable, "@" + name)
            self.globals[name] = obj
            self.global_list.append(obj)
            if g.init:
                es = size_of(g.type.elem, prog.structs)
                for k, v in enumerate(g.init):
                    self.write(addr + k * es, es, v)
            addr += usable
        self._global_begins = [o.begin for o in self.global_list]

    def push_stack(self, size: int, name: str) -> Obj:
        usable = max(8, (size + 15) & ~15)
        self.sp -= usable
        if self.cfg.region.stack_base - self.sp > STACK_LIMIT:
            raise Stop("fault", reason="stack exhausted")
        obj = Obj(self.sp, size, usable, name)
        self.stack.append(obj)
        self.zero(obj.begin, usable)
        return obj

    def pop_stack(self, mark: int) -> None:
        while len(self.stack) > mark:
            obj = self.stack.pop()
            obj.state = "dead"
            self.sp = obj.end

    # -- object lookup ----------------------------------------------------------

    def lookup(self, addr: int):
        """Mapped object containing ``addr`` (heap chunks may be freed), else None."""
        region = self.cfg.region
        if region.is_heap(addr):
            return self.rt.chunk_at(addr)
        if self.stack and self.sp <= addr < region.stack_base:
            for obj in reversed(self.stack):
                if obj.begin <= addr < obj.end:
                    return obj
            return None
        i = bisect.bisect_right(self._global_begins, addr) - 1
        if i >= 0 and addr < self.global_list[i].end:
            return self.global_list[i]
        return None

    # -- raw memory ---------------------------------------------------------------

    def read(self, addr: int, size: int) -> int:
        off = addr & (PAGE - 1)
        if off + size <= PAGE:
            page = self.pages.get(addr >> 12)
            return int.from_bytes(page[off:off + size], "little") if page is not None else 0
        return int.from_bytes(self.read_bytes(addr, size), "little")

    def read_bytes(self, addr: int, size: int) -> bytes:
        out = bytearray()
        while size > 0:
            off = addr & (PAGE - 1)
            n = min(size, PAGE - off)
            page = self.pages.get(addr >> 12)
            out += page[off:off + n] if page is not None else bytes(n)
            addr += n
            size -= n
        return bytes(out)

    def write(self, addr: int, size: int, value: int) -> None:
        self.write_bytes(addr, (value & ((1 << (8 * size)) - 1)).to_bytes(size, "little"))

    def write_bytes(self, addr: int, data: bytes) -> None:
        k = 0
        while k < len(data):
            off = addr & (PAGE - 1)
            n = min(len(data) - k, PAGE - off)
            page = self.pages.get(addr >> 12)
            if page is None:
                page = self.pages[addr >> 12] = bytearray(PAGE)
            page[off:off + n] = data[k:k + n]
            addr += n
            k += n

    def zero(self, addr: int, size: int) -> None:
        while size > 0:
            off = addr & (PAGE - 1)
            n = min(size, PAGE - off)
            page = self.pages.get(addr >> 12)
            if page is not None:
                page[off:off + n] = bytes(n)
            addr += n
            size -= n

    # -- access classification ---------------------------------------------------

    def event(self, kind: str, **info: Any) -> None:
        self.event_counts[kind] = self.event_counts.get(kind, 0) + 1
        if len(self.events) < MAX_EVENTS:
            self.events.append(dict(kind=kind, **info))

    def slow_access(self, addr: int, size: int, prov, pc: str, op: str) -> bool:
        """Classify an access that is not inside its object's requested bytes.

        Returns True when the access lies in the slack of its own live chunk
        (rounding or reserved tail).  Raises Stop for fatal accesses.
        """
        if isinstance(prov, _ZeroReserved) and self.lookup(addr) is None:
            raise Stop("TF", pc=pc, addr=addr, loadPc=prov.pc, loadedFrom=prov.addr)
        if addr < 0 or addr + size - 1 > U64:
            raise Stop("fault", pc=pc, addr=addr, reason="address outside the 64-bit space")
        obj = self.lookup(addr) if prov is None or isinstance(prov, _ZeroReserved) else prov
        if obj is not None and obj.live and obj.begin <= addr and addr + size <= obj.end:
            if addr + size <= obj.begin + obj.requested:
                return False
            kind = "reserved" if self.cfg.region.is_heap(obj.begin) and addr + size > obj.begin + _round8(obj.requested) else "slack"
            self.event(kind, pc=pc, op=op, addr=addr, size=size, offset=addr - obj.begin,
                       requested=obj.requested)
            return True
        # outside the object the pointer belongs to: overlap if mapped, crash if not
        a, stop = addr, addr + size
        while a < stop:
            target = self.lookup(a)
            if target is None:
                raise Stop("fault", pc=pc, addr=a, reason="unmapped access")
            a = target.end
        self.event("overlap", pc=pc, op=op, addr=addr, size=size,
                   object=None if obj is None else obj.begin, live=bool(obj is not None and obj.live))
        return False


def _round8(n: int) -> int:
    return (max(n, 1) + 7) & ~7


# -- compilation -----------------------------------------------------------------


class _Block:
    __slots__ = ("label", "phis", "ops", "term", "steps")

    def __init__(self, label):
        self.label = label
        self.phis: list = []
        self.ops: list[Callable] = []
        self.term: Optional[Callable] = None
        self.steps = 0


class _Code:
    def __init__(self, fn: Function):
        self.fn = fn
        self.blocks: dict[str, _Block] = {}
        self.entry = fn.blocks[0].label


class Machine:
    """A program compiled for repeated execution."""

    def __init__(self, program: Program):
        self.program = program
        self.fn_addr = {name: CODE_BASE + 16 * k for k, name in enumerate(program.functions)}
        self.addr_fn = {a: n for n, a in self.fn_addr.items()}
        self.code = {name: self._compile(fn) for name, fn in program.functions.items()}

    # public ---------------------------------------------------------------------

    def run(self, inputs: Optional[list[int]] = None, config: Optional[RunConfig] = None) -> RunReport:
        cfg = config or RunConfig()
        st = State(self, [int(x) for x in (inputs or [])], cfg)
        report = RunReport("ok")
        try:
            if "main" not in self.code:
                raise Stop("fault", reason="no main function")
            params = self.program.functions["main"].params
            args = [st.inputs[k] if k < len(st.inputs) else 0 for k in range(len(params))]
            value, _ = self._call(st, "main", args, [None] * len(args))
            report.returnValue = value
            if st.event_counts.get("slack") or st.event_counts.get("reserved"):
                report.outcome = "BR"
        except Stop as s:
            report.outcome = s.outcome
            report.detail = s.detail
        except RecursionError:
            report.outcome = "fault"
            report.detail = {"reason": "host recursion limit"}
        if report.outcome == "BR":
            report.detail = {"accesses": [e for e in st.events if e["kind"] in ("slack", "reserved")]}
        stats = st.stats
        stats.allocs = st.rt.stats.allocs
        stats.frees = st.rt.stats.frees
        stats.bytesAllocated = st.rt.stats.bytes_allocated
        stats.shadowBytesTouched = st.rt.shadow.bytes_touched
        report.stats = stats
        report.output = st.output
        report.events = st.events
        report.eventCounts = dict(sorted(st.event_counts.items()))
        report.trace = st.trace
        return report

    # execution ---------------------------------------------------------------------

    def _call(self, st: State, fname: str, args: list[int], provs: list) -> tuple[Optional[int], Any]:
        code = self.code[fname]
        fn = code.fn
        if st.depth >= st.cfg.max_depth:
            raise Stop("fault", reason="call depth limit", function=fname)
        st.depth += 1
        mark = len(st.stack)
        regs: dict[str, Any] = {}
        prov: dict[str, Any] = {}
        for (p, _), a, pv in zip(fn.params, args, provs):
            regs[p] = a
            prov[p] = pv
        label, prev = code.entry, None
        budget = st.cfg.step_budget
        stats = st.stats
        try:
            while True:
                blk = code.blocks[label]
                stats.steps += blk.steps
                if stats.steps > budget:
                    raise Stop("budget", steps=stats.steps, function=fname, block=label)
                if blk.phis:
                    # all phis read their inputs before any of them is written
                    vals = [(r, table[prev]) for r, table in blk.phis]
                    vals = [(r, gv(st, regs, prov), gp(st, regs, prov)) for r, (gv, gp) in vals]
                    for r, v, pv in vals:
                        regs[r] = v
                        prov[r] = pv
                for op in blk.ops:
                    op(st, regs, prov)
                nxt = blk.term(st, regs, prov)
                if isinstance(nxt, tuple):
                    return nxt
                prev, label = label, nxt
        finally:
            st.depth -= 1
            st.pop_stack(mark)

    # compilation ----------------------------------------------------------------------

    def _compile(self, fn: Function) -> _Code:
        code = _Code(fn)
        for blk in fn.blocks:
            out = _Block(blk.label)
            for i, ins in enumerate(blk.instrs):
                pc = f"{fn.name}/{blk.label}:{i}"
                if isinstance(ins, Phi):
                    table = {lab: self._getter(v) for v, lab in ins.incoming}
                    out.phis.append((ins.result, table))
                    out.steps += 1
                    continue
                if not isinstance(ins, (Extract, Check)):
                    out.steps += 1
                nxt = blk.instrs[i + 1] if i + 1 < len(blk.instrs) else None
                f = self._compile_instr(fn, ins, pc, nxt)
                if isinstance(ins, (Br, CondBr, Ret)):
                    out.term = f
                else:
                    out.ops.append(f)
            if out.term is None:
                def missing(st, regs, prov, _pc=f"{fn.name}/{blk.label}"):
                    raise Stop("fault", pc=_pc, reason="fell off block")
                out.term = missing
            code.blocks[blk.label] = out
        return code

    def _getter(self, op):
        """Return (get_value, get_prov) closures over (st, regs, prov)."""
        if isinstance(op, Const):
            c = op.value
            return (lambda st, regs, prov: c), (lambda st, regs, prov: None)
        if isinstance(op, Var):
            n = op.name
            return (lambda st, regs, prov: regs[n]), (lambda st, regs, prov: prov.get(n))
        name = op.name
        if name in self.program.globals:
            return ((lambda st, regs, prov: st.globals[name].begin),
                    (lambda st, regs, prov: st.globals[name]))
        addr = self.fn_addr.get(name, 0)
        return (lambda st, regs, prov: addr), (lambda st, regs, prov: None)

    def _compile_instr(self, fn: Function, ins, pc: str, nxt) -> Callable:
        prog = self.program
        m = getattr(self, "_c_" + type(ins).__name__)
        return m(fn, ins, pc, nxt, prog)

    # individual instructions -----------------------------------------------------------

    def _c_Alloc(self, fn, ins, pc, nxt, prog):
        gsz, _ = self._getter(ins.size)
        r = ins.result

        def op(st, regs, prov):
            size = gsz(st, regs, prov)
            try:
                begin = st.rt.alloc(size)
            except RuntimeFault as e:
                st.event("allocFailed", pc=pc, size=size, reason=str(e))
                regs[r] = 0
                prov[r] = None
                return
            chunk = st.rt.chunks[begin]
            st.zero(begin, chunk.usable)
            regs[r] = begin
            prov[r] = chunk
        return op

    def _c_Free(self, fn, ins, pc, nxt, prog):
        gp, _ = self._getter(ins.ptr)

        def op(st, regs, prov):
            p = gp(st, regs, prov)
            if p == 0:
                return
            try:
                st.rt.free(p)
            except RuntimeFault as e:
                raise Stop("fault", pc=pc, addr=p, reason=str(e))
        return op

    def _c_StackAlloc(self, fn, ins, pc, nxt, prog):
        size = size_of(ins.type, prog.structs)
        r = ins.result

        def op(st, regs, prov):
            obj = st.push_stack(size, f"{pc}")
            regs[r] = obj.begin
            prov[r] = obj
        return op

    def _ptr_arith(self, base, r, delta_fn, pc, nxt):
        gb, gpv = self._getter(base)
        checked = isinstance(nxt, Check) and nxt.res == Var(r)

        def op(st, regs, prov):
            v = gb(st, regs, prov) + delta_fn(st, regs, prov)
            if not checked and (v < 0 or v > U64):
                raise Stop("fault", pc=pc, reason="pointer arithmetic wraps", value=v)
            regs[r] = v
            prov[r] = gpv(st, regs, prov)
        return op

    def _c_Gep(self, fn, ins, pc, nxt, prog):
        es = size_of(ins.elem, prog.structs)
        gi, _ = self._getter(ins.index)
        return self._ptr_arith(ins.base, ins.result, lambda st, regs, prov: gi(st, regs, prov) * es, pc, nxt)

    def _c_FieldGep(self, fn, ins, pc, nxt, prog):
        off = prog.structs[ins.struct].offsets[ins.field]
        return self._ptr_arith(ins.base, ins.result, lambda st, regs, prov: off, pc, nxt)

    def _c_Cast(self, fn, ins, pc, nxt, prog):
        return self._ptr_arith(ins.base, ins.result, lambda st, regs, prov: 0, pc, nxt)

    def _c_Load(self, fn, ins, pc, nxt, prog):
        gp, gpv = self._getter(ins.ptr)
        is_ptr = isinstance(ins.type, PtrType) or not isinstance(ins.type, IntType)
        size = size_of(ins.type, prog.structs) if isinstance(ins.type, (IntType, PtrType)) else 8
        width = ins.type.width if isinstance(ins.type, IntType) else 64
        r = ins.result

        def op(st, regs, prov):
            a = gp(st, regs, prov)
            o = gpv(st, regs, prov)
            if o is None or isinstance(o, _ZeroReserved) or not (
                    o.begin <= a and a + size <= o.begin + o.requested and o.state == "live"):
                in_slack = st.slow_access(a, size, o, pc, "load")
            else:
                in_slack = False
            v = st.read(a, size)
            if is_ptr:
                regs[r] = v
                slot = st.ptr_prov.get(a)
                if slot is not None and slot[0] == v:
                    prov[r] = slot[1]
                elif v == 0 and in_slack:
                    st.event("reservedZeroLoad", pc=pc, addr=a)
                    prov[r] = _ZeroReserved(pc, a)
                else:
                    prov[r] = None
            else:
                regs[r] = wrap_int(v, width)
        return op

    def _c_Store(self, fn, ins, pc, nxt, prog):
        gp, gpv = self._getter(ins.ptr)
        gv, gvp = self._getter(ins.value)
        is_ptr = isinstance(ins.type, PtrType)
        size = size_of(ins.type, prog.structs) if isinstance(ins.type, (IntType, PtrType)) else 8

        def op(st, regs, prov):
            a = gp(st, regs, prov)
            o = gpv(st, regs, prov)
            if o is None or isinstance(o, _ZeroReserved) or not (
                    o.begin <= a and a + size <= o.begin + o.requested and o.state == "live"):
                st.slow_access(a, size, o, pc, "store")
            v = gv(st, regs, prov)
            st.write(a, size, v)
            if is_ptr:
                st.ptr_prov[a] = (v & U64, gvp(st, regs, prov))
        return op

    def _c_BinOp(self, fn, ins, pc, nxt, prog):
        ga, _ = self._getter(ins.a)
        gb, _ = self._getter(ins.b)
        w = ins.type.width
        r = ins.result
        f = _ARITH[ins.op]

        def op(st, regs, prov):
            try:
                regs[r] = f(ga(st, regs, prov), gb(st, regs, prov), w)
            except ZeroDivisionError:
                raise Stop("fault", pc=pc, reason="division by zero")
        return op

    def _c_PtrToInt(self, fn, ins, pc, nxt, prog):
        gp, _ = self._getter(ins.ptr)
        r = ins.result

        def op(st, regs, prov):
            regs[r] = wrap_int(gp(st, regs, prov), 64)
        return op

    def _c_IntToPtr(self, fn, ins, pc, nxt, prog):
        gv, _ = self._getter(ins.value)
        r = ins.result

        def op(st, regs, prov):
            regs[r] = gv(st, regs, prov) & U64
            prov[r] = None  # classified by address at each access
        return op

    def _c_Extract(self, fn, ins, pc, nxt, prog):
        gs, _ = self._getter(ins.src)
        r = ins.result

        def op(st, regs, prov):
            st.stats.extractionsExecuted += 1
            regs[r] = st.rt.extract(gs(st, regs, prov))
        return op

    def _c_Check(self, fn, ins, pc, nxt, prog):
        gr, _ = self._getter(ins.res)
        b = ins.bounds
        under, over, ext = ins.underflow, ins.overflow, ins.extent
        halves = int(under) + int(over)
        site = f"{fn.name}:{ins.res}"

        def op(st, regs, prov):
            stats = st.stats
            stats.checksExecuted += 1
            stats.halfChecksExecuted += halves
            res = gr(st, regs, prov)
            bounds = regs[b]
            verdict = "notHeap"
            bound = None
            if bounds is not None:
                beg, end = bounds
                verdict = "inBounds"
                if under and res < beg:
                    verdict, bound = "oobUnderflow", beg
                elif over and res + ext - 1 >= end:
                    verdict, bound = "oobOverflow", end
            if st.cfg.trace:
                st.trace.append({"pc": pc, "site": site, "verdict": verdict})
            if bound is not None:
                raise Stop("OD", site=site, pc=pc, verdict=verdict, res=res, bound=bound)
            if res < 0 or res > U64:
                raise Stop("fault", pc=pc, reason="pointer arithmetic wraps", value=res)
        return op

    def _c_Call(self, fn, ins, pc, nxt, prog):
        getters = [self._getter(a) for a in ins.args]
        r = ins.result
        callee = ins.callee
        if isinstance(callee, Var):
            gc, _ = self._getter(callee)

            def op(st, regs, prov):
                target = self.addr_fn.get(gc(st, regs, prov))
                if target is None:
                    raise Stop("fault", pc=pc, reason="indirect call to non-function")
                self._invoke(st, regs, prov, target, getters, r)
            return op
        builtin = _BUILTINS.get(callee)
        if builtin is not None:
            return builtin(self, pc, getters, r)
        if callee not in self.program.functions:
            def missing(st, regs, prov):
                raise Stop("fault", pc=pc, reason=f"call to unknown function {callee}")
            return missing

        def op(st, regs, prov):
            self._invoke(st, regs, prov, callee, getters, r)
        return op

    def _invoke(self, st, regs, prov, target, getters, r):
        args = [g(st, regs, prov) for g, _ in getters]
        provs = [p(st, regs, prov) for _, p in getters]
        want = len(self.program.functions[target].params)
        if len(args) != want:
            raise Stop("fault", reason=f"{target} called with {len(args)} arguments")
        v, pv = self._call(st, target, args, provs)
        if r is not None:
            regs[r] = v if v is not None else 0
            prov[r] = pv

    def _c_Br(self, fn, ins, pc, nxt, prog):
        t = ins.target
        return lambda st, regs, prov: t

    def _c_CondBr(self, fn, ins, pc, nxt, prog):
        gc, _ = self._getter(ins.cond)
        t, f = ins.if_true, ins.if_false
        return lambda st, regs, prov: t if gc(st, regs, prov) else f

    def _c_Ret(self, fn, ins, pc, nxt, prog):
        if ins.value is None:
            return lambda st, regs, prov: (None, None)
        gv, gp = self._getter(ins.value)
        return lambda st, regs, prov: (gv(st, regs, prov), gp(st, regs, prov))


# -- integer semantics --------------------------------------------------------------


def _u(v: int, w: int) -> int:
    return v & ((1 << w) - 1)


def _sdiv(a: int, b: int, w: int) -> int:
    if b == 0:
        raise ZeroDivisionError
    q = abs(a) // abs(b)
    return wrap_int(q if (a < 0) == (b < 0) else -q, w)


def _srem(a: int, b: int, w: int) -> int:
    if b == 0:
        raise ZeroDivisionError
    r = abs(a) % abs(b)
    return wrap_int(r if a >= 0 else -r, w)


def _udiv(a, b, w):
    if _u(b, w) == 0:
        raise ZeroDivisionError
    return wrap_int(_u(a, w) // _u(b, w), w)


def _urem(a, b, w):
    if _u(b, w) == 0:
        raise ZeroDivisionError
    return wrap_int(_u(a, w) % _u(b, w), w)


def _shl(a, b, w):
    s = _u(b, w)
    return 0 if s >= w else wrap_int(a << s, w)


def _lshr(a, b, w):
    s = _u(b, w)
    return 0 if s >= w else wrap_int(_u(a, w) >> s, w)


def _ashr(a, b, w):
    s = _u(b, w)
    return wrap_int(a >> min(s, w - 1), w)


_ARITH: dict[str, Callable[[int, int, int], int]] = {
    "add": lambda a, b, w: wrap_int(a + b, w),
    "sub": lambda a, b, w: wrap_int(a - b, w),
    "mul": lambda a, b, w: wrap_int(a * b, w),
    "sdiv": _sdiv,
    "srem": _srem,
    "udiv": _udiv,
    "urem": _urem,
    "and": lambda a, b, w: wrap_int(a & b, w),
    "or": lambda a, b, w: wrap_int(a | b, w),
    "xor": lambda a, b, w: wrap_int(a ^ b, w),
    "shl": _shl,
    "lshr": _lshr,
    "ashr": _ashr,
    "eq": lambda a, b, w: int(_u(a, w) == _u(b, w)),
    "ne": lambda a, b, w: int(_u(a, w) != _u(b, w)),
    "slt": lambda a, b, w: int(wrap_int(a, w) < wrap_int(b, w)),
    "sle": lambda a, b, w: int(wrap_int(a, w) <= wrap_int(b, w)),
    "sgt": lambda a, b, w: int(wrap_int(a, w) > wrap_int(b, w)),
    "sge": lambda a, b, w: int(wrap_int(a, w) >= wrap_int(b, w)),
    "ult": lambda a, b, w: int(_u(a, w) < _u(b, w)),
    "ule": lambda a, b, w: int(_u(a, w) <= _u(b, w)),
    "ugt": lambda a, b, w: int(_u(a, w) > _u(b, w)),
    "uge": lambda a, b, w: int(_u(a, w) >= _u(b, w)),
}


# -- builtins ---------------------------------------------------------------------------


def _b_input(m, pc, getters, r):
    gk = getters[0][0]

    def op(st, regs, prov):
        k = gk(st, regs, prov)
        v = st.inputs[k] if 0 <= k < len(st.inputs) else 0
        if r is not None:
            regs[r] = wrap_int(v, 64)
    return op


def _b_output(m, pc, getters, r):
    gv = getters[0][0]

    def op(st, regs, prov):
        st.output.append(wrap_int(gv(st, regs, prov), 64))
    return op


def _range_access(st: State, addr: int, n: int, o, pc: str, what: str) -> None:
    if n <= 0:
        return
    if o is None or isinstance(o, _ZeroReserved) or not (
            o.begin <= addr and addr + n <= o.begin + o.requested and o.state == "live"):
        st.slow_access(addr, n, o, pc, what)


def _intrinsic_check(st: State, ptr: int, n: int, pc: str, what: str) -> None:
    st.stats.intrinsicChecks += 1
    v = st.rt.check_range(ptr, n)
    if st.cfg.trace:
        st.trace.append({"pc": pc, "site": what, "verdict": v.kind})
    if not v.ok:
        raise Stop("OD", site=what, pc=pc, verdict=v.kind, res=v.res, bound=v.bound)


def _strlen(st: State, addr: int, o, pc: str) -> int:
    n = 0
    while True:
        _range_access(st, addr + n, 1, o, pc, "strcpy-src")
        if st.read(addr + n, 1) == 0:
            return n
        n += 1
        if n > 1 << 20:
            raise Stop("fault", pc=pc, reason="unterminated string")


def _copy_prov(st: State, dst: int, src: int, n: int) -> None:
    for k in range(n):
        slot = st.ptr_prov.get(src + k)
        if slot is not None:
            st.ptr_prov[dst + k] = slot


def _make_mem(checked: bool, kind: str):
    def build(m, pc, getters, r):
        gs = [g for g, _ in getters]
        ps = [p for _, p in getters]

        def op(st, regs, prov):
            args = [g(st, regs, prov) for g in gs]
            provs = [p(st, regs, prov) for p in ps]
            if kind == "memset":
                d, v, n = args
                if checked:
                    _intrinsic_check(st, d, n, pc, "memset")
                _range_access(st, d, n, provs[0], pc, "memset")
                if n > 0:
                    st.write_bytes(d, bytes([v & 0xFF]) * n)
            elif kind == "memcpy":
                d, s, n = args
                if checked:
                    _intrinsic_check(st, s, n, pc, "memcpy-src")
                    _intrinsic_check(st, d, n, pc, "memcpy-dst")
                _range_access(st, s, n, provs[1], pc, "memcpy-src")
                _range_access(st, d, n, provs[0], pc, "memcpy-dst")
                if n > 0:
                    st.write_bytes(d, st.read_bytes(s, n))
                    _copy_prov(st, d, s, n)
            else:
                d, s = args
                n = _strlen(st, s, provs[1], pc) + 1
                if checked:
                    _intrinsic_check(st, s, n, pc, "strcpy-src")
                    _intrinsic_check(st, d, n, pc, "strcpy-dst")
                _range_access(st, d, n, provs[0], pc, "strcpy-dst")
                st.write_bytes(d, st.read_bytes(s, n))
        return op
    return build


_BUILTINS = {
    "input": _b_input,
    "output": _b_output,
    "memset": _make_mem(False, "memset"),
    "memcpy": _make_mem(False, "memcpy"),
    "strcpy": _make_mem(False, "strcpy"),
    "sb.memset": _make_mem(True, "memset"),
    "sb.memcpy": _make_mem(True, "memcpy"),
    "sb.strcpy": _make_mem(True, "strcpy"),
}


def run(program: Program, inputs: Optional[list[int]] = None, config: Optional[RunConfig] = None) -> RunReport:
    return Machine(program).run(inputs, config)
