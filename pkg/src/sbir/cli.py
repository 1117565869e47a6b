"""Command-line front end: ``sbir parse|instrument|run|corpus|ablate|stats``.

Global flags may also be set through ``SB_``-prefixed environment variables
(``SB_RESERVE=8``, ``SB_HEAP_BASE=0x...``, ``SB_SEED=3``, ``SB_JSON=1``);
explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional

from . import corpus as corpus_mod
from .instrument import count_static_checks, from_program, instrument
from .optimizer.pipeline import ConfigMismatch, PassConfig, dump_log, optimize
from .parser import ParseError, ValidationError, parse_program
from .printer import print_program
from .runtime import DEFAULT_RESERVE, ConfigError, RegionConfig
from .vm import Machine, RunConfig

EXIT_OK, EXIT_PARSE, EXIT_CONFIG = 0, 1, 2


def _env(name: str, default=None):
    return os.environ.get("SB_" + name.upper().replace("-", "_"), default)


def _int(text: str) -> int:
    return int(text, 0)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--reserve", type=_int, default=_int(_env("reserve", str(DEFAULT_RESERVE))),
                        help="reserved bytes per heap chunk (n)")
    common.add_argument("--heap-base", type=_int, default=_int(_env("heap_base", hex(RegionConfig.heap_base))))
    common.add_argument("--shadow-offset", type=_int,
                        default=_int(_env("shadow_offset", hex(RegionConfig.shadow_offset))))
    common.add_argument("--allocator", choices=("bump", "topdown"), default=_env("allocator", "bump"))
    common.add_argument("--seed", type=_int, default=_int(_env("seed", "0")))
    common.add_argument("--json", action="store_true", default=_env("json", "0") not in ("0", "", "false"))

    p = argparse.ArgumentParser(prog="sbir", description="Shadow-memory bounds checking on a mini SSA IR.")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("parse", parents=[common], help="parse, validate and pretty-print a program")
    s.add_argument("file")

    s = sub.add_parser("instrument", parents=[common], help="instrument and optimize a program")
    s.add_argument("file")
    s.add_argument("--opt", default=_env("opt", "all"), help="all, none, or a comma list of passes")
    s.add_argument("--runtime-reserve", type=_int, default=None,
                   help="reserve the target runtime provides (must equal --reserve)")
    s.add_argument("-o", "--output")
    s.add_argument("--log", help="write the elimination log (JSON lines) here")

    s = sub.add_parser("run", parents=[common], help="run a program on the VM")
    s.add_argument("file")
    s.add_argument("--input", default="", help="comma-separated integer inputs")
    s.add_argument("--opt", default=_env("opt", "all"))
    s.add_argument("--no-checks", action="store_true", help="run the program without instrumentation")
    s.add_argument("--trace", action="store_true", help="include one entry per executed check")
    s.add_argument("--budget", type=_int, default=10_000_000)

    s = sub.add_parser("corpus", parents=[common], help="run every case against its expected outcome")
    s.add_argument("dir")
    s.add_argument("--differential", type=int, default=0, metavar="N",
                   help="also run the pass-subset differential with N inputs per case")
    s.add_argument("--jobs", type=int, default=1)

    s = sub.add_parser("ablate", parents=[common], help="ablation table over a corpus")
    s.add_argument("dir")

    s = sub.add_parser("stats", parents=[common], help="static check counts per pass and function")
    s.add_argument("file")
    s.add_argument("--opt", default=_env("opt", "all"))
    return p


def _region(args) -> RegionConfig:
    return RegionConfig(heap_base=args.heap_base, shadow_offset=args.shadow_offset, reserved_bytes=args.reserve)


def _load(path: str):
    return parse_program(Path(path).read_text())


def _emit(args, obj, text: str) -> None:
    if args.json:
        print(json.dumps(obj, sort_keys=True, indent=2))
    else:
        print(text)


def cmd_parse(args) -> int:
    prog = _load(args.file)
    if args.json:
        print(json.dumps({"functions": list(prog.functions), "structs": {
            k: {"size": v.size, "offsets": v.offsets} for k, v in prog.structs.items()},
            "globals": list(prog.globals)}, sort_keys=True, indent=2))
    else:
        sys.stdout.write(print_program(prog))
    return EXIT_OK


def cmd_instrument(args) -> int:
    if args.runtime_reserve is not None and args.runtime_reserve != args.reserve:
        raise ConfigMismatch(f"--reserve={args.reserve} but runtime provides {args.runtime_reserve}")
    prog = _load(args.file)
    ip = from_program(prog) if prog.is_instrumented() else instrument(prog)
    res = optimize(ip, PassConfig.parse(args.opt, args.reserve), args.runtime_reserve)
    text = print_program(res.ip.materialize())
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.log:
        Path(args.log).write_text(dump_log(res.log))
    return EXIT_OK


def cmd_run(args) -> int:
    prog = _load(args.file)
    inputs = [_int(x) for x in args.input.replace(" ", "").split(",") if x]
    if prog.is_instrumented():
        built = prog.meta_value("reserve")
        if built is not None and int(built) != args.reserve:
            raise ConfigMismatch(f"program was optimized for reserve {built}, runtime uses {args.reserve}")
    elif not args.no_checks:
        prog = optimize(instrument(prog), PassConfig.parse(args.opt, args.reserve)).ip.materialize()
    cfg = RunConfig(region=_region(args), allocator=args.allocator, step_budget=args.budget, trace=args.trace)
    report = Machine(prog).run(inputs, cfg)
    print(report.dumps())
    return report.exit_code


def cmd_corpus(args) -> int:
    cases, errors = corpus_mod.load_corpus(args.dir)
    region = _region(args)
    results = [corpus_mod.run_case(c, args.reserve, args.allocator, region) for c in cases]
    counts = corpus_mod.outcome_table(results)
    failed = [r for r in results if not r.passed]
    diff = []
    if args.differential:
        diff = corpus_mod.differential_corpus(cases, args.differential, args.seed, args.allocator, args.jobs)
    mismatches = [str(m) for d in diff for m in d.mismatches]
    summary = {
        "cases": len(cases),
        "passed": len(results) - len(failed),
        "failed": [r.name for r in failed],
        "errors": errors,
        "counts": counts,
        "results": {r.name: {"expect": r.expect, "outcome": r.outcome, "pass": r.passed,
                             **({"error": r.error} if r.error else {})} for r in results},
    }
    if args.differential:
        summary["differential"] = {"runs": sum(d.runs for d in diff), "mismatches": mismatches}
    lines = [f"{'case':34} {'expect':7} {'got':7} result"]
    for r in results:
        lines.append(f"{r.name:34} {r.expect:7} {r.outcome:7} {'PASS' if r.passed else 'FAIL'}"
                     + (f"  {r.error}" if r.error else ""))
    lines.append(f"{len(cases)} cases, {summary['passed']} passed, {len(failed)} failed")
    lines.append("#OD {OD}  #BR {BR}  #TF {TF}  #fault {fault}  #ok {ok}".format(**counts))
    lines.extend(f"error: {e}" for e in errors)
    if args.differential:
        lines.append(f"differential: {summary['differential']['runs']} runs, {len(mismatches)} mismatches")
        lines.extend(mismatches[:20])
    _emit(args, summary, "\n".join(lines))
    return 1 if failed or errors or mismatches else EXIT_OK


def cmd_ablate(args) -> int:
    cases, errors = corpus_mod.load_corpus(args.dir)
    rows = {c.name: corpus_mod.ablate_case(c, args.reserve, args.allocator) for c in cases}
    violations = [v for rs in rows.values() for v in corpus_mod.monotonicity_violations(rs)]
    geo = {cfg: corpus_mod.geomean_reduction(rows, cfg) for cfg in corpus_mod.ABLATION_CONFIGS}
    totals = {cfg: sum(r.dynamicChecks for rs in rows.values() for r in rs if r.config == cfg)
              for cfg in corpus_mod.ABLATION_CONFIGS}
    summary = {"rows": [asdict(r) for rs in rows.values() for r in rs], "geomeanReduction": geo,
               "totalDynamicChecks": totals, "violations": violations, "errors": errors}
    lines = [f"{'config':14} {'dynamicChecks':>14} {'geomean reduction':>18}"]
    for cfg in corpus_mod.ABLATION_CONFIGS:
        lines.append(f"{cfg:14} {totals[cfg]:>14} {geo[cfg]:>17.2f}x")
    lines.append(f"{len(rows)} programs, {len(violations)} monotonicity violations")
    lines.extend(violations)
    _emit(args, summary, "\n".join(lines))
    return 1 if violations or errors else EXIT_OK


def cmd_stats(args) -> int:
    prog = _load(args.file)
    ip = from_program(prog) if prog.is_instrumented() else instrument(prog)
    res = optimize(ip, PassConfig.parse(args.opt, args.reserve))
    per_fn = {f: count_static_checks(res.ip, f) for f in prog.functions}
    attribution: dict[str, dict[str, int]] = {}
    for e in res.log:
        attribution.setdefault(e["pass"], {}).setdefault(e["action"], 0)
        attribution[e["pass"]][e["action"]] += 1
    summary = {"perPass": res.stats, "perFunction": per_fn, "attribution": attribution,
               "facts": [f.to_json() for f in res.facts]}
    lines = [f"{'stage':10} {'sites':>6} {'active':>7} {'halves':>7} {'extracts':>9}"]
    for stage, c in res.stats.items():
        lines.append(f"{stage:10} {c['sites']:>6} {c['activeSites']:>7} {c['activeHalves']:>7} {c['extractions']:>9}")
    for pname, acts in attribution.items():
        lines.append(f"{pname}: " + ", ".join(f"{k}={v}" for k, v in sorted(acts.items())))
    _emit(args, summary, "\n".join(lines))
    return EXIT_OK


COMMANDS = {"parse": cmd_parse, "instrument": cmd_instrument, "run": cmd_run,
            "corpus": cmd_corpus, "ablate": cmd_ablate, "stats": cmd_stats}


def main(argv: Optional[list[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.cmd](args)
    except (ParseError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (ConfigMismatch, ConfigError) as e:
        print(f"config mismatch: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
