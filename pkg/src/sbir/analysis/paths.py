"""Instructions lying on control-flow paths between two program points."""

from __future__ import annotations

from typing import Iterator

from ..ir import Function
from .cfg import DomInfo


def _closure(start: list[str], step: dict[str, list[str]], avoid: str) -> set[str]:
    seen: set[str] = set()
    work = [s for s in start if s != avoid]
    while work:
        n = work.pop()
        if n in seen:
            continue
        seen.add(n)
        work.extend(x for x in step.get(n, ()) if x != avoid and x not in seen)
    return seen


def between(fn: Function, dom: DomInfo, a: tuple[str, int], b: tuple[str, int]) -> Iterator:
    """Yield every instruction that can execute after the one at ``a`` and
    before reaching ``b``, on paths that do not re-execute ``a``.

    The instruction at ``a`` itself is included; the one at ``b`` is not.
    """
    blocks = fn.block_map()
    (ab, ai), (bb, bi) = a, b
    if ab == bb and ai <= bi:
        yield from blocks[ab].instrs[ai:bi]
        return
    yield from blocks[ab].instrs[ai:]
    fwd = _closure(dom.succ.get(ab, []), dom.succ, ab)
    back = _closure([bb], dom.preds, ab)
    for label in dom.rpo:
        if label in fwd and label in back and label != bb:
            yield from blocks[label].instrs
    yield from blocks[bb].instrs[:bi]
    if bb in _closure(dom.succ.get(bb, []), dom.succ, ab):
        yield from blocks[bb].instrs[bi:]
