#!/usr/bin/env python3
"""Regenerate corpus/golden/*.jsonl: the full-pipeline elimination log of
every corpus program at its own reserve, plus ``<name>.n8.jsonl`` for the
cases tagged ``listing3`` (the reserve-driven analog is specified at n=8).

Review the diff before committing regenerated goldens.
"""

from __future__ import annotations

import sys
from pathlib import Path

from sbir.corpus import load_corpus
from sbir.instrument import instrument
from sbir.optimizer.pipeline import PassConfig, dump_log, optimize
from sbir.runtime import DEFAULT_RESERVE


def golden_logs(corpus_dir: Path) -> dict[str, str]:
    cases, errors = load_corpus(corpus_dir)
    if errors:
        raise SystemExit("\n".join(errors))
    out = {}
    for c in cases:
        reserves = {"": c.reserve if c.reserve is not None else DEFAULT_RESERVE}
        if "listing3" in c.tags:
            reserves[".n8"] = 8
        for suffix, n in reserves.items():
            res = optimize(instrument(c.program), PassConfig.parse(c.opt, n))
            out[f"{c.name}{suffix}.jsonl"] = dump_log(res.log)
    return out


def main(argv: list[str]) -> int:
    root = Path(argv[1]) if len(argv) > 1 else Path(__file__).resolve().parent.parent / "corpus"
    gold = root / "golden"
    gold.mkdir(exist_ok=True)
    logs = golden_logs(root)
    for name, text in logs.items():
        (gold / name).write_text(text)
    print(f"wrote {len(logs)} golden logs to {gold}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
