"""Redundancy elimination.

Two techniques:

* exact local allocation size: the offset range fits inside a constant-size
  object created in the same function;
* dominance: an earlier site on the same base SSA value already validated a
  range that covers this site's lower and/or upper end.

Only dominating witnesses are used.  A witness that merely post-dominates
runs after the access it would vouch for, so the access could fault or
corrupt memory before the witness reports anything.
"""

from __future__ import annotations

from typing import Optional

from ..analysis.allocsize import global_fact
from ..instrument import CheckSite, InstrumentedProgram
from ..ir import GlobalRef, Var
from .common import checkable, offset_range

NAME = "rdt-elim"


def run(ip: InstrumentedProgram) -> None:
    for fname in ip.program.functions:
        for s in list(ip.active_sites(fname)):
            if not checkable(s):
                continue
            why = _alloc_size(ip, s)
            if why is not None:
                ip.remove_site(s.id, NAME, why)
                continue
            _dominance(ip, s)


def _alloc_size(ip: InstrumentedProgram, s: CheckSite) -> Optional[dict]:
    if isinstance(s.base, Var):
        fact = ip.analyses.alloc_sizes[s.function].get(s.base.name)
    elif isinstance(s.base, GlobalRef):
        fact = global_fact(ip.program, s.base.name)
    else:
        return None
    if fact is None or not fact.exact or fact.size is None:
        return None
    iv = offset_range(ip, s)
    if iv is None or iv.lo < 0 or iv.hi > fact.size - s.extent:
        return None
    return {"technique": "alloc-size", "size": fact.size, "provenance": fact.provenance, "offset": str(iv)}


def _compare(ip: InstrumentedProgram, a: CheckSite, b: CheckSite) -> tuple[bool, bool]:
    """(b's low end >= a's, b's high end <= a's) for every execution of b."""
    oa, ob = a.offset, b.offset
    if oa.var == ob.var and (oa.scale == ob.scale or oa.var is None):
        d = ob.const - oa.const
        return d >= 0, d + b.extent <= a.extent
    ia, ib = offset_range(ip, a), offset_range(ip, b)
    if ia is None or ib is None:
        return False, False
    return ib.lo >= ia.hi, ib.hi + b.extent <= ia.lo + a.extent


def _dominance(ip: InstrumentedProgram, s: CheckSite) -> None:
    dom = ip.analyses.dom(s.function)
    for w in ip.sites_in(s.function):
        if not s.active:
            return
        if w.id == s.id or w.foreign or w.base != s.base:
            continue
        if not dom.inst_dominates(w.pos, s.pos):
            continue
        low, high = _compare(ip, w, s)
        halves = ("u" if low else "") + ("o" if high else "")
        if halves and any(h in s.halves for h in halves):
            ip.drop_halves(s.id, halves, NAME, {"technique": "dominance", "witness": w.id})
