"""Extraction merging.

Active sites whose base pointers all trace back to one source value can share
a single bounds extraction placed at the first of them (the leader), as long
as the leader dominates the others, no path between them can free memory,
and they sit in the same loops as the leader (so the shared extraction never
runs more often than the private ones it replaces).
"""

from __future__ import annotations

from typing import Optional

from ..analysis.paths import between
from ..instrument import CheckSite, ExtractionBinding, InstrumentedProgram
from ..ir import GlobalRef, IntToPtr, Operand, Var

NAME = "merge"


def _source(ip: InstrumentedProgram, s: CheckSite) -> Optional[Operand]:
    an = ip.analyses
    if isinstance(s.base, GlobalRef):
        return s.base if s.base.name in ip.program.globals else None
    if not isinstance(s.base, Var):
        return None
    srcs = an.sources(s.function, s.base.name)
    if len(srcs) != 1:
        return None
    (src,) = srcs
    if src.startswith("#@"):
        return GlobalRef(src[2:]) if src[2:] in ip.program.globals else None
    if src.startswith("#") or isinstance(an.defs[s.function].get(src), IntToPtr):
        return None
    return Var(src)


def run(ip: InstrumentedProgram) -> None:
    an = ip.analyses
    for fname, fn in ip.program.functions.items():
        dom = an.dom(fname)
        loops = an.loops(fname)
        order = {label: k for k, label in enumerate(dom.rpo)}
        pos = an.positions[fname]
        groups: dict[Operand, list[CheckSite]] = {}
        for s in ip.active_sites(fname):
            if s.foreign or ip.bindings[s.binding].merged:
                continue
            src = _source(ip, s)
            if src is not None:
                groups.setdefault(src, []).append(s)
        k = sum(1 for b in ip.bindings.values() if b.function == fname and b.merged)
        for src, members in sorted(groups.items(), key=lambda kv: str(kv[0])):
            members.sort(key=lambda s: (order.get(s.block, 1 << 30), s.index))
            while members:
                leader = members[0]
                if isinstance(src, Var) and pos[src.name][1] >= 0 and not dom.inst_dominates(pos[src.name], leader.pos):
                    members.pop(0)
                    continue
                group = [leader] + [
                    s for s in members[1:]
                    if dom.inst_dominates(leader.pos, s.pos)
                    and loops.get(s.block) == loops.get(leader.block)
                    and not any(an.calls.is_barrier(x) for x in between(fn, dom, leader.pos, s.pos))
                ]
                members = [s for s in members if s not in group]
                if len(group) < 2:
                    continue
                bid = f"{fname}:sb.m{k}"
                k += 1
                binding = ExtractionBinding(bid, fname, src, leader.block, leader.index,
                                            [s.id for s in group], merged=True)
                ip.merge_into(binding, NAME, {"source": str(src), "at": f"{leader.block}:{leader.index}",
                                              "group": len(group)})
