"""Pass ordering, configuration, elimination log I/O and replay."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..instrument import ExtractionBinding, InstrumentedProgram, count_static_checks
from ..ir import GlobalRef, Var
from ..runtime import DEFAULT_RESERVE
from . import directional, merge, patterns, rdt_elim, rt_elim

ORDER = ("rt-elim", "rdt-elim", "pattern", "dir", "merge")


class ConfigMismatch(Exception):
    """The optimizer's reserve assumption differs from the runtime's."""


@dataclass(frozen=True)
class PassConfig:
    enabled: frozenset = field(default_factory=lambda: frozenset(ORDER))
    reserve: int = DEFAULT_RESERVE

    @staticmethod
    def parse(spec: str, reserve: int = DEFAULT_RESERVE) -> "PassConfig":
        """``all``, ``none``, or a comma-separated subset of pass names."""
        spec = spec.strip()
        if spec in ("all", ""):
            names = set(ORDER)
        elif spec == "none":
            names = set()
        else:
            names = {x.strip() for x in spec.split(",") if x.strip()}
            unknown = names - set(ORDER)
            if unknown:
                raise ValueError(f"unknown pass(es): {', '.join(sorted(unknown))}")
        return PassConfig(frozenset(names), reserve)

    def label(self) -> str:
        if self.enabled == frozenset(ORDER):
            return "all"
        return ",".join(p for p in ORDER if p in self.enabled) or "none"


@dataclass
class PipelineResult:
    ip: InstrumentedProgram
    log: list[dict]
    facts: list
    stats: dict[str, dict[str, int]]


def optimize(ip: InstrumentedProgram, cfg: PassConfig, runtime_reserve: Optional[int] = None) -> PipelineResult:
    if runtime_reserve is not None and runtime_reserve != cfg.reserve:
        raise ConfigMismatch(f"optimizer assumes reserve {cfg.reserve}, runtime provides {runtime_reserve}")
    if ip.reserve is not None and ip.reserve != cfg.reserve and ip.log:
        raise ConfigMismatch(f"program was optimized for reserve {ip.reserve}, not {cfg.reserve}")
    out = ip.copy()
    out.reserve = cfg.reserve
    start = len(out.log)
    stats = {"baseline": count_static_checks(out)}
    facts: list = []
    for name in ORDER:
        if name not in cfg.enabled:
            continue
        if name == "rt-elim":
            rt_elim.run(out, cfg.reserve)
        elif name == "rdt-elim":
            rdt_elim.run(out)
        elif name == "pattern":
            facts = patterns.run(out)
        elif name == "dir":
            directional.run(out)
        elif name == "merge":
            merge.run(out)
        stats[name] = count_static_checks(out)
    return PipelineResult(out, out.log[start:], facts, stats)


# -- log ---------------------------------------------------------------------


def dump_log(log: Iterable[dict]) -> str:
    return "".join(json.dumps(e, sort_keys=True) + "\n" for e in log)


def load_log(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def _operand(text: str):
    if text.startswith("%"):
        return Var(text[1:])
    if text.startswith("@"):
        return GlobalRef(text[1:])
    raise ValueError(f"bad operand in log: {text!r}")


def replay(baseline: InstrumentedProgram, log: Iterable[dict], reserve: Optional[int] = None) -> InstrumentedProgram:
    """Apply logged status changes to a fresh baseline instrumentation."""
    out = baseline.copy()
    if reserve is not None:
        out.reserve = reserve
    pending: dict[str, dict] = {}
    for e in log:
        sid, action, pname, why = e["site"], e["action"], e["pass"], e["why"]
        if action == "removeSite":
            out.remove_site(sid, pname, why)
        elif action == "dropUnderflow":
            out.drop_halves(sid, "u", pname, why)
        elif action == "dropOverflow":
            out.drop_halves(sid, "o", pname, why)
        elif action == "mergeExtraction":
            bid = why["into"]
            block, index = why["at"].rsplit(":", 1)
            b = pending.setdefault(bid, {"binding": ExtractionBinding(
                bid, out.sites[sid].function, _operand(why["source"]), block, int(index), [], merged=True)})
            b["binding"].consumers.append(sid)
            out.bindings[bid] = b["binding"]
            out.sites[sid].binding = bid
            out.log.append(e)
        else:
            raise ValueError(f"unknown log action {action!r}")
    return out
