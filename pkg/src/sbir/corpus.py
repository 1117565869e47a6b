"""Corpus cases, the expected-outcome runner, differential testing, ablation.

Case files are ordinary ``.sbir`` programs with header lines:

    ;!expect: ok|OD|BR|TF|fault|budget      required
    ;!tags: injected-oob, benign, ...
    ;!inputs: 1 2 | 3 4                     input vectors for the expect run
    ;!clean-inputs: 0 | 5                   in-bounds vectors used for ablation
    ;!fuzz: lo hi                           range for random differential inputs
    ;!opt: all|none|pass,pass               optimization for the expect run
    ;!reserve: 16                           reserve for the expect run
    ;!checks: off                           run the plain program instead
"""

from __future__ import annotations

import itertools
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

from .instrument import InstrumentedProgram, count_static_checks, instrument
from .ir import Call, Const, Program
from .optimizer.pipeline import ORDER, PassConfig, optimize
from .parser import parse_program
from .printer import print_program
from .runtime import DEFAULT_RESERVE, RegionConfig
from .vm import Machine, RunConfig, RunReport

EXPECTABLE = ("ok", "OD", "BR", "TF", "fault", "budget")
PREVENTED = ("OD", "BR", "TF")
DEFAULT_FUZZ = (-4, 40)
FUZZ_RESERVES = (0, 8, 16, 64)
ABLATION_CONFIGS = ("full",) + tuple(f"no-{p}" for p in ORDER) + ("none",)


class CaseError(ValueError):
    pass


def _vectors(text: Optional[str]) -> list[list[int]]:
    if text is None or not text.strip():
        return []
    return [[int(x) for x in part.replace(",", " ").split()] for part in text.split("|")]


@dataclass
class CorpusCase:
    path: Path
    program: Program
    expect: str
    tags: frozenset = frozenset()
    inputs: list[list[int]] = field(default_factory=lambda: [[]])
    clean_inputs: list[list[int]] = field(default_factory=list)
    fuzz: tuple[int, int] = DEFAULT_FUZZ
    opt: str = "all"
    reserve: Optional[int] = None
    checks: bool = True

    @property
    def name(self) -> str:
        return self.path.stem

    @property
    def arity(self) -> int:
        """Number of input slots the program reads (constant ``input(k)`` indices)."""
        width = max((len(v) for v in self.inputs + self.clean_inputs), default=0)
        for fn in self.program.functions.values():
            for _, _, ins in fn.positions():
                if isinstance(ins, Call) and ins.callee == "input" and isinstance(ins.args[0], Const):
                    width = max(width, ins.args[0].value + 1)
        return width

    @classmethod
    def load(cls, path: Path | str) -> "CorpusCase":
        path = Path(path)
        prog = parse_program(path.read_text())
        expect = prog.meta_value("expect")
        if expect not in EXPECTABLE:
            raise CaseError(f"{path.name}: missing or invalid ;!expect: header ({expect!r})")
        tags = frozenset(t.strip() for t in (prog.meta_value("tags") or "").split(",") if t.strip())
        inputs = _vectors(prog.meta_value("inputs")) or [[]]
        clean = _vectors(prog.meta_value("clean-inputs"))
        fuzz = DEFAULT_FUZZ
        if prog.meta_value("fuzz"):
            lo, hi = (int(x) for x in prog.meta_value("fuzz").split())
            fuzz = (lo, hi)
        reserve = prog.meta_value("reserve")
        return cls(path, prog, expect, tags, inputs, clean, fuzz,
                   prog.meta_value("opt", "all"), int(reserve) if reserve is not None else None,
                   (prog.meta_value("checks", "on") != "off"))

    def ablation_inputs(self) -> list[list[int]]:
        return self.clean_inputs or self.inputs


def load_corpus(directory: Path | str) -> tuple[list[CorpusCase], list[str]]:
    cases, errors = [], []
    for p in sorted(Path(directory).glob("*.sbir")):
        try:
            cases.append(CorpusCase.load(p))
        except Exception as e:  # reported per file, run continues
            errors.append(f"{p.name}: {e}")
    return cases, errors


# -- building variants -----------------------------------------------------------


def build(ip: InstrumentedProgram, opt: str | Iterable[str], reserve: int, checks: bool = True) -> Program:
    if not checks:
        return ip.program
    names = opt if isinstance(opt, str) else ",".join(opt) or "none"
    return optimize(ip, PassConfig.parse(names, reserve)).ip.materialize()


def runtime_config(reserve: int, allocator: str = "bump", base: Optional[RegionConfig] = None,
                   trace: bool = False) -> RunConfig:
    region = replace(base or RegionConfig(), reserved_bytes=reserve)
    return RunConfig(region=region, allocator=allocator, trace=trace)


# -- expected-outcome runs ----------------------------------------------------------


@dataclass
class CaseResult:
    name: str
    expect: str
    outcomes: list[str]
    reports: list[RunReport]
    error: Optional[str] = None

    @property
    def outcome(self) -> str:
        return self.outcomes[0] if self.outcomes else "error"

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.outcomes) and all(o == self.expect for o in self.outcomes)


def run_case(case: CorpusCase, reserve: int = DEFAULT_RESERVE, allocator: str = "bump",
             base: Optional[RegionConfig] = None, trace: bool = False) -> CaseResult:
    n = case.reserve if case.reserve is not None else reserve
    try:
        prog = build(instrument(case.program), case.opt, n, case.checks)
        m = Machine(prog)
        cfg = runtime_config(n, allocator, base, trace)
        reports = [m.run(v, cfg) for v in case.inputs]
    except Exception as e:
        return CaseResult(case.name, case.expect, [], [], f"{type(e).__name__}: {e}")
    return CaseResult(case.name, case.expect, [r.outcome for r in reports], reports)


def outcome_table(results: list[CaseResult]) -> dict[str, int]:
    counts = {k: 0 for k in EXPECTABLE}
    for r in results:
        if r.outcomes:
            counts[r.outcome] += 1
    return counts


# -- differential ----------------------------------------------------------------------


def category(r: RunReport) -> str:
    if r.eventCounts.get("overlap"):
        return "exploited"
    if r.outcome in PREVENTED:
        return "prevented"
    if r.outcome == "ok":
        return "clean"
    return r.outcome


def all_subsets() -> list[tuple[str, ...]]:
    return [s for k in range(len(ORDER) + 1) for s in itertools.combinations(ORDER, k)]


@dataclass
class Mismatch:
    case: str
    subset: tuple[str, ...]
    reserve: int
    inputs: list[int]
    baseline: str
    optimized: str
    reason: str

    def __str__(self) -> str:
        label = ",".join(self.subset) or "none"
        return (f"{self.case} [{label}] n={self.reserve} inputs={self.inputs}: "
                f"baseline {self.baseline}, optimized {self.optimized} ({self.reason})")


@dataclass
class DiffResult:
    case: str
    runs: int = 0
    variants: int = 0
    mismatches: list[Mismatch] = field(default_factory=list)


def random_inputs(case: CorpusCase, count: int, seed: int) -> list[list[int]]:
    rng = random.Random(f"{seed}:{case.name}")
    lo, hi = case.fuzz
    k = case.arity
    out = [list(v) for v in case.inputs + case.clean_inputs]
    while len(out) < count:
        out.append([rng.randint(lo, hi) for _ in range(k)])
    return out[:max(count, len(out))]


def differential(case: CorpusCase, count: int = 100, seed: int = 0, allocator: str = "bump",
                 subsets: Optional[list[tuple[str, ...]]] = None,
                 reserves: tuple[int, ...] = FUZZ_RESERVES) -> DiffResult:
    """Compare every pass subset against the fully checked baseline."""
    subsets = all_subsets() if subsets is None else subsets
    ip = instrument(case.program)
    res = DiffResult(case.name)
    inputs = random_inputs(case, count, seed)
    for n in reserves:
        cfg = runtime_config(n, allocator)
        texts: dict[str, list[tuple[str, ...]]] = {}
        progs: dict[str, Program] = {}
        for sub in subsets:
            prog = build(ip, sub, n)
            text = print_program(prog)
            texts.setdefault(text, []).append(sub)
            progs[text] = prog
        base_prog = build(ip, (), n)
        base_m = Machine(base_prog)
        vecs = inputs
        base_reports = [base_m.run(v, cfg) for v in vecs]
        res.runs += len(vecs)
        for text, subs in texts.items():
            if text == print_program(base_prog):
                continue
            res.variants += 1
            m = Machine(progs[text])
            for v, br in zip(vecs, base_reports):
                orr = m.run(v, cfg)
                res.runs += 1
                why = compare(br, orr)
                if why:
                    for sub in subs:
                        res.mismatches.append(Mismatch(case.name, sub, n, v, br.outcome, orr.outcome, why))
    return res


def compare(base: RunReport, opt: RunReport) -> Optional[str]:
    cb, co = category(base), category(opt)
    if cb != co:
        return f"category {cb} vs {co}"
    if cb == "clean" and base.visible() != opt.visible():
        return f"visible results differ: {base.visible()} vs {opt.visible()}"
    return None


def differential_corpus(cases: list[CorpusCase], count: int = 100, seed: int = 0, allocator: str = "bump",
                        jobs: int = 1) -> list[DiffResult]:
    args = [(c, count, seed, allocator) for c in cases]
    if jobs <= 1:
        return [differential(*a) for a in args]
    with ProcessPoolExecutor(jobs) as ex:
        return list(ex.map(_diff_star, args))


def _diff_star(a):
    return differential(*a)


# -- ablation ------------------------------------------------------------------------------


def config_passes(label: str) -> tuple[str, ...]:
    if label == "full":
        return ORDER
    if label == "none":
        return ()
    if label.startswith("no-") and label[3:] in ORDER:
        return tuple(p for p in ORDER if p != label[3:])
    raise ValueError(f"unknown ablation config {label!r}")


@dataclass
class AblationRow:
    case: str
    config: str
    staticSites: int
    staticHalves: int
    extractions: int
    dynamicChecks: int
    halfChecks: int
    extractionsExecuted: int
    intrinsicChecks: int
    outcomes: dict[str, int]
    attribution: dict[str, int]


def ablate_case(case: CorpusCase, reserve: int = DEFAULT_RESERVE, allocator: str = "bump") -> list[AblationRow]:
    n = case.reserve if case.reserve is not None else reserve
    ip = instrument(case.program)
    cfg = runtime_config(n, allocator)
    rows = []
    for label in ABLATION_CONFIGS:
        r = optimize(ip, PassConfig(frozenset(config_passes(label)), n))
        static = count_static_checks(r.ip)
        m = Machine(r.ip.materialize())
        reports = [m.run(v, cfg) for v in case.ablation_inputs()]
        hist: dict[str, int] = {}
        for rep in reports:
            hist[rep.outcome] = hist.get(rep.outcome, 0) + 1
        attribution: dict[str, int] = {}
        for e in r.log:
            if e["action"] == "removeSite":
                attribution[e["pass"]] = attribution.get(e["pass"], 0) + 1
        rows.append(AblationRow(
            case.name, label, static["activeSites"], static["activeHalves"], static["extractions"],
            sum(rep.stats.dynamic_checks for rep in reports),
            sum(rep.stats.halfChecksExecuted for rep in reports),
            sum(rep.stats.extractionsExecuted for rep in reports),
            sum(rep.stats.intrinsicChecks for rep in reports),
            dict(sorted(hist.items())), dict(sorted(attribution.items()))))
    return rows


def monotonicity_violations(rows: list[AblationRow]) -> list[str]:
    by = {r.config: r for r in rows}
    out = []
    full, none = by["full"], by["none"]
    for label in ABLATION_CONFIGS[1:-1]:
        mid = by[label]
        for metric in ("staticSites", "dynamicChecks"):
            a, b, c = getattr(full, metric), getattr(mid, metric), getattr(none, metric)
            if not a <= b <= c:
                out.append(f"{full.case}: {metric} full={a} {label}={b} none={c}")
    return out


def geomean_reduction(rows_by_case: dict[str, list[AblationRow]], config: str = "full") -> float:
    ratios = []
    for rows in rows_by_case.values():
        by = {r.config: r for r in rows}
        if by["none"].dynamicChecks > 0:
            ratios.append(by["none"].dynamicChecks / max(by[config].dynamicChecks, 1))
    if not ratios:
        return 1.0
    return math.exp(sum(math.log(x) for x in ratios) / len(ratios))
