"""Whole-program call facts: address-taken functions, call sites, may-free."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..ir import BUILTINS, Call, Free, GlobalRef, Program, Var, operands


@dataclass(frozen=True)
class CallSite:
    caller: str
    block: str
    index: int
    call: Call


@dataclass
class CallFacts:
    address_taken: set[str] = field(default_factory=set)
    call_sites: dict[str, list[CallSite]] = field(default_factory=dict)
    may_free: set[str] = field(default_factory=set)

    def is_barrier(self, ins) -> bool:
        """True if executing ``ins`` may release heap memory."""
        if isinstance(ins, Free):
            return True
        if isinstance(ins, Call):
            if isinstance(ins.callee, Var):
                return True
            return ins.callee in self.may_free
        return False


def compute_call_facts(prog: Program) -> CallFacts:
    facts = CallFacts(call_sites={name: [] for name in prog.functions})
    frees: set[str] = set()
    callees: dict[str, set[str]] = {name: set() for name in prog.functions}
    for fname, fn in prog.functions.items():
        for label, i, ins in fn.positions():
            for o in operands(ins):
                if isinstance(o, GlobalRef) and o.name in prog.functions:
                    facts.address_taken.add(o.name)
            if isinstance(ins, Free):
                frees.add(fname)
            elif isinstance(ins, Call):
                if isinstance(ins.callee, Var):
                    frees.add(fname)  # unknown target
                elif ins.callee in prog.functions:
                    facts.call_sites[ins.callee].append(CallSite(fname, label, i, ins))
                    callees[fname].add(ins.callee)
                elif ins.callee not in BUILTINS:
                    frees.add(fname)
    # reverse reachability over the call graph
    changed = True
    while changed:
        changed = False
        for fname, outs in callees.items():
            if fname not in frees and outs & frees:
                frees.add(fname)
                changed = True
    facts.may_free = frees
    return facts
