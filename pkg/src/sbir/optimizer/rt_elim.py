"""Reserve-based elimination.

Every heap chunk carries ``n`` reserved bytes past its rounded request, so
an access through a pointer anchored at an object's start that stays within
the first ``n`` bytes cannot leave the chunk, provided the derived pointer
never escapes (an escaped pointer could be rebased by code we cannot see).
A second rule removes field accesses whose base came out of a checked cast
to at least the struct size.
"""

from __future__ import annotations

from ..instrument import InstrumentedProgram
from ..analysis.escape import compute_escapes
from ..ir import GlobalRef, Var
from .common import avail_map, checkable, offset_range

NAME = "rt-elim"


def run(ip: InstrumentedProgram, reserve: int) -> None:
    prog = ip.program
    an = ip.analyses
    anchored = an.anchored
    cast_avail = avail_map(ip, cast_only=True)
    changed = True
    while changed:
        changed = False
        for fname, fn in prog.functions.items():
            active_bases = {s.base.name for s in ip.active_sites(fname) if isinstance(s.base, Var)}
            esc = compute_escapes(prog, fn, active_bases)
            for s in list(ip.active_sites(fname)):
                if not checkable(s):
                    continue
                why = _rule_a(ip, s, reserve, anchored, esc) or _rule_b(ip, s, cast_avail)
                if why is not None:
                    ip.remove_site(s.id, NAME, why)
                    changed = True


def _rule_a(ip, s, reserve, anchored, esc):
    if reserve <= 0:
        return None
    if isinstance(s.base, Var):
        if (s.function, s.base.name) not in anchored:
            return None
    elif not (isinstance(s.base, GlobalRef) and s.base.name in ip.program.globals):
        return None
    iv = offset_range(ip, s)
    if iv is None or iv.lo < 0 or iv.hi + s.extent > reserve:
        return None
    fact = esc.get(s.result)
    if fact is not None and fact.escapes:
        return None
    return {"rule": "anchored-within-reserve", "offset": str(iv), "extent": s.extent, "reserve": reserve}


def _rule_b(ip, s, cast_avail):
    if s.kind != "fieldgep" or not isinstance(s.base, Var):
        return None
    ins = ip.analyses.defs[s.function][s.result]
    sd = ip.program.structs[ins.struct]
    av = cast_avail.get((s.function, s.base.name), 0)
    if av >= sd.size and s.offset.const + s.extent <= sd.size:
        return {"rule": "field-of-checked-cast", "struct": ins.struct, "castAvail": av}
    return None
