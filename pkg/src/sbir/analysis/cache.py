"""Lazily computed, per-program analysis results."""

from __future__ import annotations

from functools import cached_property

from ..ir import Cast, FieldGep, Gep, IntToPtr, Phi, Program, Var
from .allocsize import AllocSizeFact, compute_alloc_sizes, compute_anchored
from .callgraph import CallFacts, compute_call_facts
from .cfg import DomInfo, compute_dom, loops_containing
from .ranges import RangeInfo, compute_ranges


class Analyses:
    """Analysis results for one (immutable) Program."""

    def __init__(self, prog: Program):
        self.prog = prog
        self._dom: dict[str, DomInfo] = {}
        self._ranges: dict[str, RangeInfo] = {}
        self._loops: dict[str, dict] = {}

    def dom(self, fname: str) -> DomInfo:
        if fname not in self._dom:
            self._dom[fname] = compute_dom(self.prog.functions[fname])
        return self._dom[fname]

    def ranges(self, fname: str) -> RangeInfo:
        if fname not in self._ranges:
            self._ranges[fname] = compute_ranges(self.prog, self.prog.functions[fname], self.dom(fname))
        return self._ranges[fname]

    def loops(self, fname: str) -> dict:
        if fname not in self._loops:
            self._loops[fname] = loops_containing(self.dom(fname))
        return self._loops[fname]

    @cached_property
    def calls(self) -> CallFacts:
        return compute_call_facts(self.prog)

    @cached_property
    def alloc_sizes(self) -> dict[str, dict[str, AllocSizeFact]]:
        return compute_alloc_sizes(self.prog)

    @cached_property
    def anchored(self) -> set[tuple[str, str]]:
        return compute_anchored(self.prog, self.calls)

    @cached_property
    def defs(self) -> dict[str, dict]:
        return {name: fn.def_instrs() for name, fn in self.prog.functions.items()}

    @cached_property
    def positions(self) -> dict[str, dict[str, tuple[str, int]]]:
        return {name: fn.def_sites() for name, fn in self.prog.functions.items()}

    def sources(self, fname: str, name: str) -> set[str]:
        """Backtrace a pointer through gep/fieldgep/cast/phi to its origins.

        Origins are SSA names, or ``@g`` / ``#const`` for non-SSA operands.
        """
        defs = self.defs[fname]
        out: set[str] = set()
        seen: set[str] = set()
        work = [name]
        while work:
            n = work.pop()
            if n in seen:
                continue
            seen.add(n)
            ins = defs.get(n)
            if isinstance(ins, (Gep, FieldGep, Cast)):
                nxt = [ins.base]
            elif isinstance(ins, Phi):
                nxt = [v for v, _ in ins.incoming]
            else:
                out.add(n)
                continue
            for o in nxt:
                if isinstance(o, Var):
                    work.append(o.name)
                else:
                    out.add(f"#{o}")
        return out

    def is_foreign(self, fname: str, name: str) -> bool:
        defs = self.defs[fname]
        return any(isinstance(defs.get(s), IntToPtr) for s in self.sources(fname, name))

