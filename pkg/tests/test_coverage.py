import pytest

import scripted
from msgpipe.agents import parse_clause_items
from msgpipe.coverage import (CoverageReport, Mutant, NoCandidates, PreconditionViolated, feedback_diffs, measure,
                              mutate, with_spec)
from msgpipe.frontend import check_function, load_workspace, parse
from msgpipe.frontend import ast as A
from msgpipe.prover import MockRule, ProverConfig, VerdictKind

CORPUS = scripted.FIXTURES / "corpus"
PAIR_PROVER = ProverConfig.mock(scripted.FIXTURES / "mock" / "pair.rules", parallelism=1)


def pair():
    m = parse((CORPUS / "pair.move").read_text(encoding="utf-8"))
    return m, m.function("pair_of")


def spec(text):
    block, diags = parse_clause_items(text, "pair_of")
    assert diags == []
    return block


def test_pair_mutants():
    m, f = pair()
    mutants = mutate(f, 7, 16, module=m)
    assert [x.description for x in mutants] == [
        "delete statement at line 6", "delete statement at line 7",
        "replace BinOp at line 6 with a default value", "replace BinOp at line 7 with a default value"]
    assert "-    second = x - first;\n+    second = 0;\n" in mutants[3].diff


def test_mutants_are_seeded():
    m, f = pair()
    a = [x.source for x in mutate(f, 3, 2, module=m)]
    assert a == [x.source for x in mutate(f, 3, 2, module=m)]
    assert len(a) == 2


def test_mutants_are_wellformed_and_distinct():
    ws = load_workspace([CORPUS])
    checked = 0
    for module in ws:
        for fn in module.functions:
            if fn.body is None or check_function(module, fn, ws):
                continue
            try:
                mutants = mutate(fn, 0, 8, module=module, workspace=ws)
            except NoCandidates:
                continue
            sources = [x.source for x in mutants]
            assert len(set(sources)) == len(sources)
            for x in mutants:
                assert check_function(module.with_function(x.function), x.function, ws) == []
            checked += 1
    assert checked > 30


def test_empty_body_has_no_candidates():
    m = parse("module 0x1::m {\n    fun f() {}\n}\n")
    with pytest.raises(NoCandidates):
        mutate(m.function("f"), 0, module=m)


def test_budget_must_be_positive():
    m, f = pair()
    with pytest.raises(ValueError):
        mutate(f, 0, 0, module=m)


# -------------------------------------------------------------- measure


def test_incomplete_spec_misses_the_second_element():
    m, f = pair()
    mutants = mutate(f, 7, 16, module=m)
    minus = measure(f, spec("ensures result_1 == x / 2;"), mutants, PAIR_PROVER, m)
    plus = measure(f, spec("ensures result_1 == x / 2;\nensures result_2 == x - x / 2;"), mutants, PAIR_PROVER, m)
    assert (minus.covered, minus.total, [x.id for x in minus.uncovered]) == (2, 4, [2, 4])
    assert (plus.covered, plus.total, plus.uncovered) == (4, 4, ())
    assert plus.covered + len(plus.uncovered) == plus.total


def test_precondition_is_checked():
    m, f = pair()
    with pytest.raises(PreconditionViolated) as e:
        measure(f, spec("ensures true;"), [], ProverConfig.mock([MockRule(r"\A", VerdictKind.COUNTEREXAMPLE,
                                                                          "error: post-condition does not hold")]), m)
    assert e.value.verdict.kind is VerdictKind.COUNTEREXAMPLE


def test_zero_mutants():
    m, f = pair()
    r = measure(f, spec("ensures result_1 == x / 2;"), [], PAIR_PROVER, m)
    assert (r.total, r.ratio) == (0, None)
    assert "ratio: n/a" in r.text()


def test_timeouts_are_excluded():
    m, f = pair()
    mutants = mutate(f, 7, 16, module=m)
    rules = [MockRule(r"\A(?![\s\S]*first = x / 2;)", VerdictKind.TIMEOUT, ""), MockRule(r"\A", VerdictKind.PASS, "")]
    r = measure(f, spec("ensures true;"), mutants, ProverConfig.mock(rules, parallelism=1), m)
    assert r.excluded == (1, 3)
    assert r.total == 2 and r.covered == 0


def test_with_spec_replaces_only_the_target_block():
    m = parse((CORPUS / "spec_file.move").read_text(encoding="utf-8"))
    fn = m.function("twice")
    out = with_spec(m, fn, A.SpecBlock("twice"))
    assert [b.target_fn for b in out.spec_blocks] == ["capped", "twice"]
    assert out.spec_blocks[1].clauses == ()


# ------------------------------------------------------------- feedback


def _mutant(i, diff):
    return Mutant(i, (i,), "", diff)


def test_feedback_diffs_order_and_empty():
    assert feedback_diffs(CoverageReport(1, 1, ())) == ""
    r = CoverageReport(2, 0, (_mutant(2, "second\n"), _mutant(1, "first\n")))
    assert feedback_diffs(r) == "first\nsecond\n"


def test_feedback_diff_names_the_deleted_line():
    m, f = pair()
    mutants = mutate(f, 7, 16, module=m)
    r = measure(f, spec("ensures result_1 == x / 2;"), mutants, PAIR_PROVER, m)
    text = feedback_diffs(r)
    assert text.count("@@") == 4
    assert "-    second = x - first;\n" in text
