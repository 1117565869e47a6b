"""Directional half elimination.

A non-negative offset cannot underflow its base; an access ending within the
bytes known to be available from the base cannot overflow.  Each case drops
one half of the check and keeps the other.
"""

from __future__ import annotations

from ..instrument import InstrumentedProgram
from .common import avail_map, base_avail, checkable, offset_range

NAME = "dir"


def run(ip: InstrumentedProgram) -> None:
    avail = avail_map(ip)
    for s in list(ip.sites.values()):
        if not checkable(s):
            continue
        iv = offset_range(ip, s)
        if iv is None:
            continue
        av = base_avail(ip, avail, s.function, s.base)
        if iv.lo >= 0 and s.underflow:
            ip.drop_halves(s.id, "u", NAME, {"direction": "non-negative", "offset": str(iv)})
        if s.active and s.overflow and iv.hi + s.extent <= av:
            ip.drop_halves(s.id, "o", NAME, {"direction": "within-available", "offset": str(iv),
                                             "extent": s.extent, "avail": av})
