"""Acceptance criteria 1-8, each at its stated tolerance.

Each test records a one-line verdict that the terminal summary prints (see
conftest.py); ``python tests/test_acceptance.py`` runs them without pytest
and prints the same lines.
"""

from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import ACCEPTANCE, CORPUS  # noqa: E402
from helpers import RESERVES, oracle_verdict, random_sequence_check  # noqa: E402
from sbir.corpus import (  # noqa: E402
    ABLATION_CONFIGS,
    ablate_case,
    all_subsets,
    differential_corpus,
    geomean_reduction,
    load_corpus,
    monotonicity_violations,
    outcome_table,
    random_inputs,
    run_case,
    runtime_config,
    build,
)
from sbir.instrument import instrument  # noqa: E402
from sbir.optimizer.pipeline import ORDER, PassConfig, dump_log, optimize  # noqa: E402
from sbir.runtime import RegionConfig, ShadowRuntime  # noqa: E402
from sbir.vm import Machine  # noqa: E402

SEQUENCES = 10_000
PAIRS = 100_000
DIFF_INPUTS = 100
INJECTED_FAMILIES = ("overflow", "underflow", "inter-chunk", "freed-region", "off-by-one")

_cases = None


def cases():
    global _cases
    if _cases is None:
        loaded, errors = load_corpus(CORPUS)
        assert not errors, errors
        _cases = loaded
    return _cases


def record(k: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[k] = (ok, detail)
    assert ok, detail


# 1 ---------------------------------------------------------------------------


def test_c1_shadow_encoding_exact():
    rng = np.random.default_rng(20240501)
    start = time.perf_counter()
    granules = 0
    failures = 0
    for i in range(SEQUENCES):
        try:
            granules += random_sequence_check(rng, RESERVES[i % 4], ("bump", "topdown")[(i // 4) % 2], ops=4)
        except AssertionError:
            failures += 1
    elapsed = time.perf_counter() - start
    record(1, failures == 0 and elapsed < 30,
           f"{SEQUENCES} sequences, {granules} granules decoded, {failures} mismatching sequences, {elapsed:.1f}s")


# 2 ---------------------------------------------------------------------------


def _address_pool(rt: ShadowRuntime, rng: np.random.Generator) -> list[int]:
    cfg = rt.config
    pool = []
    for c in rt.chunks.values():
        for _ in range(4):
            pool.append(c.begin + int(rng.integers(0, c.usable)))
    top = max(c.end for c in rt.chunks.values())
    pool += [top + 8 * int(rng.integers(0, 1000)) for _ in range(64)]  # never allocated heap
    pool += [cfg.global_base + int(rng.integers(0, 4096)) for _ in range(64)]
    pool += [cfg.stack_base - int(rng.integers(1, 4096)) for _ in range(64)]
    pool += [0, 8, cfg.heap_base - 8, cfg.heap_end]
    return pool


def test_c2_bound_check_oracle():
    rng = np.random.default_rng(7)
    mismatches = 0
    kinds: dict[str, int] = {}
    pairs = 0
    for round_ in range(10):
        n = RESERVES[round_ % 4]
        rt = ShadowRuntime(RegionConfig(reserved_bytes=n), ("bump", "topdown")[round_ % 2])
        live = [rt.alloc(int(rng.integers(1, 4097))) for _ in range(120)]
        for p in live[::3]:
            rt.free(p)
        pool = _address_pool(rt, rng)
        for _ in range(PAIRS // 10):
            old = pool[int(rng.integers(len(pool)))]
            res = old + int(rng.integers(-5000, 5000))
            got = rt.bound_check(old, res).kind
            want = oracle_verdict(rt, old, res)
            kinds[want] = kinds.get(want, 0) + 1
            mismatches += got != want
            pairs += 1
    record(2, mismatches == 0 and pairs >= PAIRS,
           f"{pairs} pairs, {mismatches} mismatches, verdicts {dict(sorted(kinds.items()))}")


# 3 ---------------------------------------------------------------------------


def test_c3_baseline_defense():
    injected = [c for c in cases() if "injected-oob" in c.tags]
    families = {f: sum(f in c.tags for c in injected) for f in INJECTED_FAMILIES}
    bad, s3, runs = [], 0, 0
    for c in injected:
        n = c.reserve if c.reserve is not None else 16
        ip = instrument(c.program)
        m = Machine(build(ip, (), n))
        for alloc in ("bump", "topdown"):
            cfg = runtime_config(n, alloc)
            for v in c.inputs:
                r = m.run(v, cfg)
                runs += 1
                if r.outcome not in ("OD", "BR"):
                    bad.append(f"{c.name}:{alloc}:{r.outcome}")
                s3 += r.consequence == "S3"
            for v in random_inputs(c, 100, 0):
                r = m.run(v, cfg)
                runs += 1
                s3 += r.consequence == "S3"
    ok = len(injected) >= 40 and all(families.values()) and not bad and s3 == 0
    record(3, ok, f"{len(injected)} injected cases, families {families}, {runs} runs, "
                  f"{s3} S3, not OD/BR: {bad[:5]}")


# 4 and 8 ------------------------------------------------------------------------


_diff: dict[str, tuple] = {}


def _run_differential(allocator: str):
    if allocator not in _diff:
        start = time.perf_counter()
        results = differential_corpus(cases(), DIFF_INPUTS, seed=0, allocator=allocator)
        _diff[allocator] = (results, time.perf_counter() - start)
    return _diff[allocator]


def _diff_summary(results):
    runs = sum(d.runs for d in results)
    mism = [str(m) for d in results for m in d.mismatches]
    return runs, mism


def test_c4_differential_soundness():
    results, elapsed = _run_differential("bump")
    runs, mism = _diff_summary(results)
    subsets = len(all_subsets())
    ok = not mism and elapsed < 600 and subsets == 32 and len(results) == len(cases())
    record(4, ok, f"{len(results)} programs x {subsets} subsets x {DIFF_INPUTS} inputs x reserves "
                  f"{list(RESERVES)} (identical variants run once), {runs} runs, "
                  f"{len(mism)} mismatches, {elapsed:.0f}s" + (f"; first: {mism[0]}" if mism else ""))


def test_c8_allocator_independence():
    bump, _ = _run_differential("bump")
    top, elapsed = _run_differential("topdown")
    rb, mb = _diff_summary(bump)
    rt, mt = _diff_summary(top)
    ok = not mb and not mt and rb == rt
    record(8, ok, f"bump {rb} runs / {len(mb)} mismatches; topdown {rt} runs / {len(mt)} mismatches "
                  f"({elapsed:.0f}s)")


# 5 ---------------------------------------------------------------------------


def _log(name: str, reserve: int = 16, passes=ORDER):
    c = next(c for c in cases() if c.name == name)
    return optimize(instrument(c.program), PassConfig(frozenset(passes), reserve))


def _removed(log, fn):
    return {e["site"]: e["pass"] for e in log if e["action"] == "removeSite" and e["site"].startswith(fn + ":")}


def test_c5_listing_analogs():
    problems = []

    res = _log("reserve_escape", reserve=8)
    bar_sites = [s for s in res.ip.sites if s.startswith("bar:")]
    bar = _removed(res.log, "bar")
    zoo = _removed(res.log, "zoo")
    if len(bar_sites) != 4 or set(bar) != {"bar:%c0", "bar:%c1", "bar:%c2"}:
        problems.append(f"listing3 bar removed {sorted(bar)} of {sorted(bar_sites)}")
    if set(zoo) != {"zoo:%fx", "zoo:%fy", "zoo:%fz"} or set(bar.values()) | set(zoo.values()) != {"rt-elim"}:
        problems.append(f"listing3 zoo removed {zoo}")

    res = _log("dir_forward_loop")
    site = res.ip.sites["fill:%e"]
    acts = [(e["pass"], e["action"]) for e in res.log if e["site"] == "fill:%e"]
    if not (site.active and site.halves == "o" and acts == [("dir", "dropUnderflow")]):
        problems.append(f"listing4 fill:%e halves={site.halves} log={acts}")

    res = _log("length_ptr_assoc")
    e = [x for x in res.log if x["site"] == "fill:%e"]
    if not (len(e) == 1 and e[0]["pass"] == "pattern" and e[0]["action"] == "removeSite"
            and e[0]["why"]["fact"]["kind"] == "lengthPtrAssoc"):
        problems.append(f"listing5 fill:%e log={e}")

    res = _log("merge_backtrace")
    into: dict[str, list[str]] = {}
    for x in res.log:
        if x["action"] == "mergeExtraction":
            into.setdefault(x["why"]["into"], []).append(x["site"])
    if not into or max(len(v) for v in into.values()) < 4:
        problems.append(f"listing6 bindings={into}")

    golden = CORPUS / "golden"
    for name, n in (("reserve_escape.n8", 8), ("dir_forward_loop", 16), ("length_ptr_assoc", 16),
                    ("merge_backtrace", 16)):
        got = dump_log(_log(name.split(".")[0], reserve=n).log)
        if got != (golden / f"{name}.jsonl").read_text():
            problems.append(f"{name}: log differs from golden")
    record(5, not problems, "listing 3/4/5/6 analogs match" if not problems else "; ".join(problems))


# 6 ---------------------------------------------------------------------------


def test_c6_ablation():
    rows = {c.name: ablate_case(c) for c in cases()}
    violations = [v for rs in rows.values() for v in monotonicity_violations(rs)]
    geo = geomean_reduction(rows, "full")
    per = {cfg: round(geomean_reduction(rows, cfg), 2) for cfg in ABLATION_CONFIGS}
    ok = not violations and geo >= 5 and math.isfinite(geo)
    record(6, ok, f"{len(rows)} programs, {len(violations)} monotonicity violations, "
                  f"geomean reduction full={geo:.2f}x; per config {per}")


# 7 ---------------------------------------------------------------------------


def test_c7_outcome_taxonomy():
    results = [run_case(c, trace=True) for c in cases()]
    counts = outcome_table(results)
    wrong = [f"{r.name}: expect {r.expect} got {r.outcome}" for r in results if not r.passed]
    tf_missing = []
    for r in results:
        if r.expect != "TF":
            continue
        for rep in r.reports:
            ev = [e for e in rep.events if e["kind"] == "reservedZeroLoad"]
            if not ev or rep.detail.get("loadedFrom") != ev[-1]["addr"] or "loadPc" not in rep.detail:
                tf_missing.append(r.name)
    ok = counts["OD"] > 0 and counts["BR"] > 0 and counts["TF"] > 0 and not wrong and not tf_missing
    record(7, ok, f"#OD {counts['OD']} #BR {counts['BR']} #TF {counts['TF']} (#fault {counts['fault']}, "
                  f"#ok {counts['ok']}); mismatched {wrong[:5]}; TF without mechanism {tf_missing}")


if __name__ == "__main__":
    tests = [test_c1_shadow_encoding_exact, test_c2_bound_check_oracle, test_c3_baseline_defense,
             test_c4_differential_soundness, test_c5_listing_analogs, test_c6_ablation,
             test_c7_outcome_taxonomy, test_c8_allocator_independence]
    for t in tests:
        try:
            t()
        except AssertionError:
            pass
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    sys.exit(0 if all(ok for ok, _ in ACCEPTANCE.values()) else 1)
