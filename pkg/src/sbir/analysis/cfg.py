"""Dominance and post-dominance (Cooper-Harvey-Kennedy iterative scheme)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..ir import Function, Ret

EXIT = "<exit>"


def postorder(succ: dict[str, list[str]], root: str) -> list[str]:
    seen = {root}
    out: list[str] = []
    stack = [(root, iter(succ.get(root, ())))]
    while stack:
        node, it = stack[-1]
        for s in it:
            if s not in seen:
                seen.add(s)
                stack.append((s, iter(succ.get(s, ()))))
                break
        else:
            stack.pop()
            out.append(node)
    return out


def idoms(succ: dict[str, list[str]], root: str) -> dict[str, str]:
    order = postorder(succ, root)
    index = {n: i for i, n in enumerate(order)}
    preds: dict[str, list[str]] = {n: [] for n in order}
    for n in order:
        for s in succ.get(n, ()):
            if s in preds:
                preds[s].append(n)
    idom: dict[str, str] = {root: root}

    def intersect(a: str, b: str) -> str:
        while a != b:
            while index[a] < index[b]:
                a = idom[a]
            while index[b] < index[a]:
                b = idom[b]
        return a

    changed = True
    rpo = list(reversed(order))
    while changed:
        changed = False
        for n in rpo:
            if n == root:
                continue
            new: Optional[str] = None
            for p in preds[n]:
                if p in idom:
                    new = p if new is None else intersect(p, new)
            if new is not None and idom.get(n) != new:
                idom[n] = new
                changed = True
    return idom


@dataclass
class DomInfo:
    entry: str
    idom: dict[str, str]
    ipdom: dict[str, str]
    reachable: set[str]
    rpo: list[str]
    succ: dict[str, list[str]]
    preds: dict[str, list[str]]
    back_edges: set[tuple[str, str]] = field(default_factory=set)
    reducible: bool = True

    def dominates(self, a: str, b: str) -> bool:
        if b not in self.idom or a not in self.idom:
            return False
        while True:
            if a == b:
                return True
            nxt = self.idom[b]
            if nxt == b:
                return False
            b = nxt

    def post_dominates(self, a: str, b: str) -> bool:
        if b not in self.ipdom or a not in self.ipdom:
            return False
        while True:
            if a == b:
                return True
            nxt = self.ipdom[b]
            if nxt == b:
                return False
            b = nxt

    def inst_dominates(self, a: tuple[str, int], b: tuple[str, int]) -> bool:
        """Instruction-level dominance; (label, index) positions."""
        if a[0] == b[0]:
            return a[1] <= b[1]
        return self.dominates(a[0], b[0])

    def loop_headers(self) -> set[str]:
        return {h for _, h in self.back_edges}

    def dom_tree_children(self) -> dict[str, list[str]]:
        kids: dict[str, list[str]] = {n: [] for n in self.idom}
        for n, d in self.idom.items():
            if n != d:
                kids[d].append(n)
        return kids

    def nearest_common_dominator(self, labels: Iterable[str]) -> str:
        labels = list(labels)
        acc = labels[0]
        for lab in labels[1:]:
            while not self.dominates(acc, lab):
                acc = self.idom[acc]
        return acc


def compute_dom(fn: Function) -> DomInfo:
    succ = {b.label: b.succs() for b in fn.blocks}
    entry = fn.entry.label
    idom = idoms(succ, entry)
    reachable = set(idom)
    rpo = [n for n in reversed(postorder(succ, entry))]

    rsucc: dict[str, list[str]] = {EXIT: []}
    for b in fn.blocks:
        if b.label not in reachable:
            continue
        rsucc.setdefault(b.label, [])
        if isinstance(b.terminator, Ret) or not b.succs():
            rsucc[EXIT].append(b.label)
        for s in b.succs():
            rsucc.setdefault(s, []).append(b.label)
    ipdom = idoms(rsucc, EXIT)

    preds: dict[str, list[str]] = {n: [] for n in reachable}
    for n in reachable:
        for s in succ[n]:
            if s in preds and n not in preds[s]:
                preds[s].append(n)
    info = DomInfo(entry, idom, ipdom, reachable, rpo, succ, preds)

    # retreating edges from a DFS; reducible iff each one targets a dominator
    color: dict[str, int] = {}
    stack = [(entry, iter(succ.get(entry, ())))]
    color[entry] = 1
    while stack:
        node, it = stack[-1]
        for s in it:
            c = color.get(s, 0)
            if c == 0:
                color[s] = 1
                stack.append((s, iter(succ.get(s, ()))))
                break
            if c == 1:
                if info.dominates(s, node):
                    info.back_edges.add((node, s))
                else:
                    info.reducible = False
        else:
            color[node] = 2
            stack.pop()
    return info


def natural_loop(info: DomInfo, tail: str, head: str) -> set[str]:
    body = {head, tail}
    work = [tail]
    while work:
        n = work.pop()
        if n == head:
            continue
        for p in info.preds.get(n, ()):
            if p not in body:
                body.add(p)
                work.append(p)
    return body


def loops_containing(info: DomInfo) -> dict[str, frozenset[tuple[str, str]]]:
    """Block -> set of back edges whose natural loop contains it."""
    out: dict[str, set[tuple[str, str]]] = {n: set() for n in info.reachable}
    for edge in info.back_edges:
        for n in natural_loop(info, *edge):
            out[n].add(edge)
    return {k: frozenset(v) for k, v in out.items()}
