"""Helpers shared by the elimination passes."""

from __future__ import annotations

from typing import Optional

from ..analysis.allocsize import compute_avail, global_fact
from ..analysis.ranges import Interval
from ..instrument import CheckSite, InstrumentedProgram
from ..ir import GlobalRef, Operand, Var


def site_extents(ip: InstrumentedProgram) -> dict[tuple[str, str], int]:
    # every site counts, active or not: an eliminated check would still pass
    return {(s.function, s.result): s.extent for s in ip.sites.values() if not s.foreign}


def foreign_keys(ip: InstrumentedProgram) -> frozenset:
    an = ip.analyses
    out = set()
    for fname, defs in an.defs.items():
        for name in defs:
            if an.is_foreign(fname, name):
                out.add((fname, name))
    return frozenset(out)


def avail_map(ip: InstrumentedProgram, cast_only: bool = False) -> dict[tuple[str, str], int]:
    an = ip.analyses
    return compute_avail(ip.program, site_extents(ip), an.calls, cast_only, foreign_keys(ip))


def base_avail(ip: InstrumentedProgram, avail: dict, fname: str, base: Operand) -> int:
    if isinstance(base, Var):
        return avail.get((fname, base.name), 0)
    if isinstance(base, GlobalRef):
        return global_fact(ip.program, base.name).size or 0
    return 0


def offset_range(ip: InstrumentedProgram, s: CheckSite) -> Optional[Interval]:
    """Interval of the site's byte offset, or None if the index may wrap."""
    ranges = ip.analyses.ranges(s.function)
    if s.offset.var is not None and s.offset.var in ranges.may_wrap:
        return None
    return s.offset.interval(ranges, s.block)


def checkable(s: CheckSite) -> bool:
    return s.active and not s.foreign
