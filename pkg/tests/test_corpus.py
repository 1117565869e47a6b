import pytest

from conftest import CORPUS
from sbir.corpus import CorpusCase, ablate_case, monotonicity_violations, run_case
from sbir.instrument import instrument
from sbir.optimizer.pipeline import PassConfig, dump_log, optimize

CASES = sorted(CORPUS.glob("*.sbir"))
GOLDEN = CORPUS / "golden"


@pytest.mark.parametrize("path", CASES, ids=lambda p: p.stem)
def test_case_matches_expectation(path):
    r = run_case(CorpusCase.load(path))
    assert r.error is None, r.error
    assert r.passed, f"expected {r.expect}, got {r.outcomes}"


@pytest.mark.parametrize("path", CASES, ids=lambda p: p.stem)
def test_elimination_log_matches_golden(path):
    case = CorpusCase.load(path)
    variants = {"": case.reserve if case.reserve is not None else 16}
    if "listing3" in case.tags:
        variants[".n8"] = 8
    for suffix, n in variants.items():
        got = dump_log(optimize(instrument(case.program), PassConfig.parse(case.opt, n)).log)
        want = (GOLDEN / f"{case.name}{suffix}.jsonl").read_text()
        assert got == want, f"{case.name}{suffix}: regenerate with scripts/make_golden.py if intended"


def test_every_golden_has_a_case():
    names = {p.stem for p in CASES}
    for g in GOLDEN.glob("*.jsonl"):
        assert g.name.split(".")[0] in names, g.name


def test_corpus_composition(corpus_cases):
    injected = [c for c in corpus_cases.values() if "injected-oob" in c.tags]
    assert len(injected) >= 40
    assert all(c.expect in ("OD", "BR") for c in injected)
    assert all(c.clean_inputs for c in injected), "ablation needs in-bounds inputs"
    expects = {c.expect for c in corpus_cases.values()}
    assert {"OD", "BR", "TF", "ok"} <= expects
    for listing in ("listing3", "listing4", "listing5", "listing6"):
        assert any(listing in c.tags for c in corpus_cases.values())


@pytest.mark.parametrize("name", ["merge_backtrace", "oob_walk_i8_24", "length_ptr_assoc", "countdown_loop"])
def test_ablation_rows_monotone(corpus_cases, name):
    rows = ablate_case(corpus_cases[name])
    assert monotonicity_violations(rows) == []
    by = {r.config: r for r in rows}
    assert by["full"].dynamicChecks < by["none"].dynamicChecks


def test_ablation_clean_inputs_stay_clean(corpus_cases):
    for c in corpus_cases.values():
        if "injected-oob" not in c.tags:
            continue
        rows = ablate_case(c)
        none = next(r for r in rows if r.config == "none")
        assert set(none.outcomes) <= {"ok"}, (c.name, none.outcomes)
