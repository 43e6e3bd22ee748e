import argparse
import os
from pathlib import Path

import pytest

from scripted import FIXTURES, REPLAY_STORE, SUITE_DIR, SUITE_RULES
from msgpipe import cli
from msgpipe.llm import ENV_API_KEY, ENV_MODEL

CORPUS = FIXTURES / "corpus"
PAIR_RULES = FIXTURES / "mock" / "pair.rules"
TRANSFER = ["generate", str(SUITE_DIR), "--target", "coin::transfer", "--modes", "v2", "--trials", "1",
            "--rules", str(SUITE_RULES), "--store", str(REPLAY_STORE)]


@pytest.fixture
def run(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(ENV_MODEL, raising=False)

    def go(*argv):
        code = cli.main(list(argv) + ["--out", str(tmp_path / "out")])
        return code, capsys.readouterr()
    return go


def test_generate_from_replay(run, tmp_path):
    code, io = run(*TRANSFER)
    assert code == 0
    assert "Success    1" in io.out
    out = tmp_path / "out"
    assert (out / "report.txt").read_text(encoding="utf-8") == io.out
    assert (out / "specs" / "coin__transfer.move").exists()


def test_generate_suite_reports_failure(run):
    code, io = run("generate", str(SUITE_DIR), "--rules", str(SUITE_RULES), "--store", str(REPLAY_STORE))
    assert code == 1 and "Fail       3" in io.out


def test_unknown_flag_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["generate", "--no-such-flag"])
    assert e.value.code == 2
    assert "error[E001]" in capsys.readouterr().err


def test_live_backend_without_key(run, monkeypatch):
    monkeypatch.delenv(ENV_API_KEY, raising=False)
    code, io = run(*TRANSFER, "--backend", "live")
    assert code == 3 and "error[E102]" in io.err


def test_replay_miss_is_an_environment_error(run, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    argv = [a if a != str(REPLAY_STORE) else str(empty) for a in TRANSFER]
    code, io = run(*argv)
    assert code == 3 and "error[E103]" in io.err


def test_report_outside_out_is_refused(run):
    code, io = run(*TRANSFER, "--report", "/etc/x")
    assert code == 2 and "error[E005]" in io.err


def test_bad_rounds_is_a_usage_error(run):
    code, io = run(*TRANSFER, "--rounds", "0")
    assert code == 2 and "rounds must be at least 1" in io.err


def test_analyze(run):
    code, io = run("analyze", str(SUITE_DIR), "--target", "coin::transfer")
    assert code == 0 and "coin::withdraw" in io.out


def test_unknown_target(run):
    code, io = run("analyze", str(SUITE_DIR), "--target", "coin::nope")
    assert code == 2 and "error[E004]" in io.err


def test_inline(run, tmp_path):
    code, io = run("inline", str(SUITE_DIR), "--target", "coin::transfer")
    assert code == 0
    written = (tmp_path / "out" / "inline" / "coin__transfer.move").read_text(encoding="utf-8")
    assert "let addr__inl1 = signer::address_of(from);" in written and written in io.out


def test_coverage(run, tmp_path):
    spec = tmp_path / "pair.spec"
    spec.write_text("ensures result_1 == x / 2;\nensures result_2 == x - x / 2;\n", encoding="utf-8")
    code, io = run("coverage", str(CORPUS / "pair.move"), "--target", "pair::pair_of", "--spec", str(spec),
                   "--rules", str(PAIR_RULES), "--seed", "7", "--mutants", "16")
    assert code == 0
    assert (tmp_path / "out" / "coverage" / "pair__pair_of.txt").read_text(encoding="utf-8") == io.out


def test_coverage_without_spec(run):
    code, io = run("coverage", str(CORPUS / "pair.move"), "--target", "pair::pair_of",
                   "--rules", str(PAIR_RULES))
    assert code == 2 and "error[E004]" in io.err


def test_prove_with_mock_rules(run):
    code, io = run("prove", str(SUITE_DIR), "--rules", str(SUITE_RULES))
    assert code == 1
    assert "0x42::broken: CompileError" in io.out


def test_prove_without_the_prover_tool(run, monkeypatch, tmp_path):
    empty = tmp_path / "bin"
    empty.mkdir()
    monkeypatch.setenv("PATH", str(empty))
    code, io = run("prove", str(SUITE_DIR))
    assert code == 3 and "error[E101]" in io.err


def test_missing_config_file(run):
    code, io = run(*TRANSFER, "--config", "nope.conf")
    assert code == 2 and "error[E002]" in io.err


# ------------------------------------------------------------ settings


def _settled(argv, env=None):
    return cli.settle(cli.build_parser().parse_args(argv), env or {})


def test_config_precedence(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("[run]\nrounds = 2\ntrials = 4\n[llm]\nmodel = from-file\n", encoding="utf-8")
    args = _settled(["generate", "--config", str(conf), "--rounds", "7"])
    assert (args.rounds, args.trials, args.model, args.seed) == (7, 4, "from-file", 0)
    args = _settled(["generate", "--config", str(conf), "--model", "flag"], {ENV_MODEL: "from-env"})
    assert args.model == "from-env"


def test_config_rejects_unknown_keys(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("[run]\nspeed = 3\n", encoding="utf-8")
    with pytest.raises(cli.CliError) as e:
        _settled(["generate", "--config", str(conf)])
    assert e.value.code == "E002"


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def test_help_lists_every_option():
    parser = cli.build_parser()
    for name, sub in [("", parser)] + sorted(_subparsers(parser).items()):
        text = sub.format_help()
        for action in sub._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)


# ------------------------------------------------------------ hygiene


def _snapshot(root: Path):
    return {p: p.stat().st_mtime_ns for p in root.rglob("*") if p.is_file() and "__pycache__" not in p.parts}


def test_nothing_is_written_outside_out(run, tmp_path):
    spec = tmp_path / "pair.spec"
    spec.write_text("ensures result_1 == x / 2;\n", encoding="utf-8")
    before_fixtures = _snapshot(FIXTURES)
    before_tmp = _snapshot(tmp_path)
    run(*TRANSFER)
    run("inline", str(SUITE_DIR), "--target", "coin::transfer")
    run("coverage", str(CORPUS / "pair.move"), "--target", "pair::pair_of", "--spec", str(spec),
        "--rules", str(PAIR_RULES))
    run("prove", str(SUITE_DIR), "--rules", str(SUITE_RULES))
    assert _snapshot(FIXTURES) == before_fixtures
    out = tmp_path / "out"
    new = {p for p in _snapshot(tmp_path) if out not in p.parents}
    assert new == set(before_tmp)
