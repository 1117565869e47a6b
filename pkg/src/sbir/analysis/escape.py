"""Intraprocedural pointer escape analysis."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from ..ir import (
    Call,
    Cast,
    Check,
    Extract,
    FieldGep,
    Free,
    Function,
    Gep,
    Load,
    Phi,
    Program,
    PtrToInt,
    Ret,
    Store,
    Var,
    operands,
    value_types,
)
from ..types import PtrType

PASSED_TO_CALL = "passed-to-call"
STORED = "stored-to-memory"
RETURNED = "returned"
CHECKED_BASE = "used-as-base-of-checked-arith"
VIA_PHI = "flows-into-phi-that-escapes"
VIA_DERIVED = "derived-pointer-escapes"
TO_INT = "converted-to-int"


@dataclass
class EscapeFact:
    escapes: bool = False
    reasons: set[str] = field(default_factory=set)


def compute_escapes(prog: Program, fn: Function, active_bases: Iterable[str] = ()) -> dict[str, EscapeFact]:
    """Escape facts for every pointer-typed value of ``fn``.

    ``active_bases`` names values used as the base of a still-active check
    site; those escape by the checked-arith rule.
    """
    types = value_types(prog, fn)
    ptrs = {n for n, t in types.items() if isinstance(t, PtrType)}
    facts = {n: EscapeFact() for n in ptrs}
    derived: dict[str, list[tuple[str, str]]] = {n: [] for n in ptrs}  # v -> [(w, reason)]

    def mark(name: str, reason: str) -> None:
        f = facts.get(name)
        if f is not None:
            f.escapes = True
            f.reasons.add(reason)

    for name in active_bases:
        mark(name, CHECKED_BASE)

    for _, _, ins in fn.positions():
        if isinstance(ins, (Load, Free, Extract, Check)):
            continue
        if isinstance(ins, Store):
            if isinstance(ins.value, Var):
                mark(ins.value.name, STORED)
        elif isinstance(ins, Call):
            for a in ins.args:
                if isinstance(a, Var):
                    mark(a.name, PASSED_TO_CALL)
            if isinstance(ins.callee, Var):
                mark(ins.callee.name, PASSED_TO_CALL)
        elif isinstance(ins, Ret):
            if isinstance(ins.value, Var):
                mark(ins.value.name, RETURNED)
        elif isinstance(ins, PtrToInt):
            if isinstance(ins.ptr, Var):
                mark(ins.ptr.name, TO_INT)
        elif isinstance(ins, Phi):
            for v, _ in ins.incoming:
                if isinstance(v, Var) and v.name in derived:
                    derived[v.name].append((ins.result, VIA_PHI))
        elif isinstance(ins, (Gep, FieldGep, Cast)):
            if isinstance(ins.base, Var) and ins.base.name in derived:
                derived[ins.base.name].append((ins.result, VIA_DERIVED))
        else:
            for o in operands(ins):
                if isinstance(o, Var):
                    mark(o.name, TO_INT)

    # least fixpoint: a value escapes if anything derived from it escapes
    changed = True
    while changed:
        changed = False
        for v, outs in derived.items():
            for w, reason in outs:
                if facts.get(w) is not None and facts[w].escapes and reason not in facts[v].reasons:
                    facts[v].escapes = True
                    facts[v].reasons.add(reason)
                    changed = True
    return facts
