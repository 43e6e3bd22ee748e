"""Command-line entry point: generate, coverage, analyze, inline, prove.

Exit codes: 0 success, 1 a target failed, 2 usage or configuration error,
3 environment error (prover tool or model backend unavailable).
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .coverage import DEFAULT_MUTANTS, NoCandidates, PreconditionViolated, feedback_diffs, measure, mutate
from .deps import ContextMode, TargetNotFound, analyze_report, as_workspace, resolve_target, slice
from .frontend import MoveSyntaxError, UnsupportedConstruct, pretty_print
from .frontend.loader import SourceError, load_workspace
from .frontend.parser import parse_spec_items
from .inline import inline_best_effort
from .llm import (ENV_MODEL, LiveBackend, MissingCredentials, RecordBackend, ReplayBackend, ReplayMiss)
from .prover import DEFAULT_TIMEOUT, ProverConfig, ToolNotFound, WorkspaceSetupFailed, verify

log = logging.getLogger("msgpipe")

DEFAULT_CONFIG = "msgpipe.conf"
DEFAULT_OUT = "msgpipe-out"

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ENV = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: str, message: str, exit_code: int):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


def usage_error(message: str, code: str = "E001") -> CliError:
    return CliError(code, message, EXIT_USAGE)


def env_error(message: str, code: str) -> CliError:
    return CliError(code, message, EXIT_ENV)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"error[E001]: {message}\n")


# -------------------------------------------------------------- config


# (section, key) pairs the config file may set, by argument name
CONFIG_KEYS = {
    "rounds": ("run", "rounds"),
    "trials": ("run", "trials"),
    "modes": ("run", "modes"),
    "coverage": ("run", "coverage"),
    "seed": ("run", "seed"),
    "mutants": ("run", "mutants"),
    "workers": ("run", "workers"),
    "polish": ("run", "polish"),
    "rules": ("prover", "rules"),
    "prover_command": ("prover", "command"),
    "timeout": ("prover", "timeout"),
    "backend": ("llm", "backend"),
    "store": ("llm", "store"),
    "model": ("llm", "model"),
    "out": ("output", "dir"),
}
DEFAULTS = {
    "rounds": 5, "trials": 3, "modes": "v1,v2", "coverage": False, "seed": 0,
    "mutants": DEFAULT_MUTANTS, "workers": 1, "polish": False, "rules": None,
    "prover_command": None, "timeout": DEFAULT_TIMEOUT, "backend": "replay", "store": None,
    "model": "default", "out": DEFAULT_OUT,
}
ENV_OVERRIDES = {"model": ENV_MODEL}
_BOOL = {"coverage", "polish"}
_INT = {"rounds", "trials", "seed", "mutants", "workers"}
_FLOAT = {"timeout"}


def read_config(path: Optional[str]) -> Dict[str, object]:
    explicit = path is not None
    path = path or DEFAULT_CONFIG
    if not os.path.exists(path):
        if explicit:
            raise usage_error(f"config file not found: {path}", "E002")
        return {}
    cp = configparser.ConfigParser()
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise usage_error(f"cannot read config file {path}: {e}", "E002") from e
    known = {(s, k) for s, k in CONFIG_KEYS.values()}
    for section in cp.sections():
        for key in cp[section]:
            if (section, key) not in known:
                raise usage_error(f"{path}: unknown setting [{section}] {key}", "E002")
    out: Dict[str, object] = {}
    for name, (section, key) in CONFIG_KEYS.items():
        if cp.has_option(section, key):
            try:
                if name in _BOOL:
                    out[name] = cp.getboolean(section, key)
                elif name in _INT:
                    out[name] = cp.getint(section, key)
                elif name in _FLOAT:
                    out[name] = cp.getfloat(section, key)
                else:
                    out[name] = cp.get(section, key)
            except ValueError as e:
                raise usage_error(f"{path}: bad value for [{section}] {key}: {e}", "E002") from e
    return out


def settle(args: argparse.Namespace, env=None) -> argparse.Namespace:
    """Fill unset options: flags win over the config file, the environment
    wins over both, built-in defaults come last."""
    env = os.environ if env is None else env
    conf = read_config(getattr(args, "config", None))
    for name, default in DEFAULTS.items():
        if not hasattr(args, name):
            continue
        value = getattr(args, name)
        if value is None:
            value = conf.get(name, default)
        if name in ENV_OVERRIDES and env.get(ENV_OVERRIDES[name]):
            value = env[ENV_OVERRIDES[name]]
        setattr(args, name, value)
    return args


# ------------------------------------------------------------- helpers


def _out_path(out_dir: Path, path: str) -> Path:
    """``path`` resolved under ``out_dir``; anything escaping it is refused."""
    p = Path(path)
    full = (p if p.is_absolute() else out_dir / p).resolve()
    root = out_dir.resolve()
    if full != root and root not in full.parents:
        raise usage_error(f"{path} is outside the output directory {out_dir}", "E005")
    return full


def _workspace(paths: Sequence[str]):
    try:
        return as_workspace(load_workspace(list(paths) or ["."]))
    except SourceError as e:
        raise usage_error(str(e), "E003") from e
    except FileNotFoundError as e:
        raise usage_error(f"no such file or directory: {e.filename or e}", "E003") from e


def _prover(args) -> ProverConfig:
    out = Path(args.out)
    if args.rules:
        try:
            return ProverConfig.mock(args.rules, timeout=args.timeout)
        except FileNotFoundError as e:
            raise usage_error(f"mock rule file not found: {args.rules}", "E002") from e
        except ValueError as e:
            raise usage_error(str(e), "E002") from e
    kw = {"timeout": args.timeout, "workspace_dir": str(out / "prover-work")}
    if args.prover_command:
        return ProverConfig.external(args.prover_command, **kw)
    return ProverConfig.external(**kw)


def _backend(args, out: Path):
    kind = args.backend
    if kind == "live":
        try:
            return LiveBackend.from_env()
        except MissingCredentials as e:
            raise env_error(f"live backend unavailable: {e.body}", "E102") from e
    if kind == "replay":
        store = args.store
        if not store:
            raise usage_error("--backend replay needs --store FILE", "E002")
        if not os.path.exists(store):
            raise env_error(f"replay store not found: {store}", "E104")
        return ReplayBackend(store)
    if kind == "record":
        try:
            inner = LiveBackend.from_env()
        except MissingCredentials as e:
            raise env_error(f"record backend needs live credentials: {e.body}", "E102") from e
        store = _out_path(out, args.store or "replay.jsonl")
        return RecordBackend(inner, store)
    raise usage_error(f"unknown backend {kind!r}", "E001")


def _target(ws, path: str):
    try:
        return resolve_target(ws, path)
    except TargetNotFound as e:
        raise usage_error(str(e), "E004") from e


def _slug(path: str) -> str:
    return path.replace("::", "__")


def _modes(text: str):
    try:
        return tuple(ContextMode(m.strip().lower()) for m in str(text).split(",") if m.strip())
    except ValueError as e:
        raise usage_error(f"--modes takes v1, v2 or v1,v2 (got {text!r})") from e


# ------------------------------------------------------------ commands


def cmd_generate(args) -> int:
    from .agents import AgentSettings
    from .orchestrator import RunConfig, run_suite, write_report

    out = Path(args.out)
    ws = _workspace(args.paths)
    targets = None
    if args.target:
        targets = []
        for t in args.target:
            m, f = _target(ws, t)
            targets.append(f"{m.name}::{f.name}")
    try:
        config = RunConfig(rounds=args.rounds, trials=args.trials, context_modes=_modes(args.modes),
                           prover=_prover(args), coverage_enabled=bool(args.coverage), seed=args.seed,
                           mutants=args.mutants, agent=AgentSettings(model=args.model),
                           polish=bool(args.polish), workers=args.workers)
    except ValueError as e:
        raise usage_error(str(e)) from e
    report = _out_path(out, args.report or "report.txt")
    llm = _backend(args, out)
    records, table = run_suite(ws, config, llm, targets=targets)
    out.mkdir(parents=True, exist_ok=True)
    write_report(records, table, out, str(report.relative_to(out.resolve())))
    sys.stdout.write(table)
    return EXIT_FAIL if any(r.outcome.kind == "Fail" for r in records) else EXIT_OK


def _load_spec(path: str, target: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise usage_error(f"cannot read spec file {path}: {e}", "E003") from e
    from .agents import _unwrap
    bare, wrapped = _unwrap(text)
    if wrapped:
        inner = [body for name, body in wrapped if name == target]
        if not inner:
            raise usage_error(f"{path} has no spec block for '{target}'", "E004")
        text = bare + "\n".join(inner)
    try:
        return parse_spec_items(text, target)
    except (MoveSyntaxError, UnsupportedConstruct) as e:
        raise usage_error(f"{path}: {e}", "E003") from e


def cmd_coverage(args) -> int:
    out = Path(args.out)
    ws = _workspace(args.paths)
    module, fn = _target(ws, args.target)
    if args.spec:
        spec = _load_spec(args.spec, fn.name)
    else:
        spec = next((b for b in module.spec_blocks if b.target_fn == fn.name), None)
        if spec is None:
            raise usage_error(f"'{args.target}' has no spec block; pass --spec FILE", "E004")
    prover = _prover(args)
    try:
        mutants = mutate(fn, args.seed, args.mutants, module, ws)
        report = measure(fn, spec, mutants, prover, module)
    except NoCandidates as e:
        raise CliError("E202", str(e), EXIT_FAIL) from e
    except PreconditionViolated as e:
        raise CliError("E201", f"{e}; coverage is only defined for a verifying spec", EXIT_FAIL) from e
    text = report.text()
    diffs = feedback_diffs(report)
    if diffs:
        text += "\nuncovered mutants:\n" + diffs
    dest = _out_path(out, f"coverage/{_slug(args.target)}.txt")
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_analyze(args) -> int:
    ws = _workspace(args.paths)
    module, fn = _target(ws, args.target)
    sys.stdout.write(analyze_report(slice(ws, f"{module.name}::{fn.name}")))
    return EXIT_OK


def cmd_inline(args) -> int:
    out = Path(args.out)
    ws = _workspace(args.paths)
    module, fn = _target(ws, args.target)
    report = inline_best_effort(slice(ws, f"{module.name}::{fn.name}"))
    source = pretty_print(report.module)
    dest = _out_path(out, f"inline/{_slug(args.target)}.move")
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(source, encoding="utf-8")
    dest.with_suffix(".txt").write_text(report.text(), encoding="utf-8")
    sys.stdout.write(report.text() + "\n" + source)
    return EXIT_OK


def cmd_prove(args) -> int:
    ws = _workspace(args.paths)
    prover = _prover(args)
    worst = EXIT_OK
    for m in ws.modules:
        if args.module and m.name != args.module:
            continue
        v = verify(pretty_print(m), prover)
        sys.stdout.write(f"{m.address}::{m.name}: {v.kind.value}\n")
        for d in v.errors():
            sys.stdout.write("  " + d.header() + "\n")
        if v.failed:
            worst = EXIT_FAIL
    return worst


# -------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, prover: bool = False) -> None:
    p.add_argument("paths", nargs="*", metavar="PATH",
                   help="Move files or directories forming the workspace (default: .)")
    p.add_argument("--config", metavar="FILE", help=f"configuration file (default: {DEFAULT_CONFIG} if present)")
    p.add_argument("--out", metavar="DIR", help=f"output directory; nothing is written elsewhere (default: {DEFAULT_OUT})")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    if prover:
        p.add_argument("--rules", metavar="FILE", help="use the mock prover with this rule file")
        p.add_argument("--prover-command", metavar="CMD",
                       help="external prover command; {workspace} is replaced by the package directory")
        p.add_argument("--timeout", type=float, metavar="SECONDS", help="prover time limit per run")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="msgpipe", description="Generate and check Move specifications.")
    parser.add_argument("--version", action="version", version=f"msgpipe {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", help="generate specifications for target functions")
    _common(g, prover=True)
    g.add_argument("--target", action="append", metavar="MODULE::FN",
                   help="function to specify; repeatable (default: every selectable function)")
    g.add_argument("--rounds", type=int, metavar="N", help="generation rounds per trial (default: 5)")
    g.add_argument("--trials", type=int, metavar="N", help="independent trials per target (default: 3)")
    g.add_argument("--modes", metavar="MODES", help="context variants: v1, v2 or v1,v2 (default: v1,v2)")
    g.add_argument("--coverage", action="store_true", default=None,
                   help="refine ensures clauses with mutation coverage feedback")
    g.add_argument("--seed", type=int, metavar="N", help="mutant selection seed (default: 0)")
    g.add_argument("--mutants", type=int, metavar="N", help="mutants per coverage run (default: 8)")
    g.add_argument("--backend", choices=("live", "replay", "record"), help="model backend (default: replay)")
    g.add_argument("--store", metavar="FILE", help="replay store to read (replay) or write under --out (record)")
    g.add_argument("--model", metavar="NAME", help="model name sent to the backend")
    g.add_argument("--workers", type=int, metavar="N", help="targets processed in parallel (default: 1)")
    g.add_argument("--polish", action="store_true", default=None, help="send merged specs through the model once more")
    g.add_argument("--report", metavar="FILE", help="summary table file, relative to --out (default: report.txt)")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("coverage", help="measure specification coverage by deletion mutants")
    _common(c, prover=True)
    c.add_argument("--target", required=True, metavar="MODULE::FN", help="function whose spec is measured")
    c.add_argument("--spec", metavar="FILE", help="spec items or spec block to measure (default: the module's own)")
    c.add_argument("--seed", type=int, metavar="N", help="mutant selection seed (default: 0)")
    c.add_argument("--mutants", type=int, metavar="N", help="number of mutants (default: 8)")
    c.set_defaults(func=cmd_coverage)

    a = sub.add_parser("analyze", help="print the dependency closure of a function")
    _common(a)
    a.add_argument("--target", required=True, metavar="MODULE::FN", help="function to analyze")
    a.set_defaults(func=cmd_analyze)

    i = sub.add_parser("inline", help="inline callees into a function and report what was skipped")
    _common(i)
    i.add_argument("--target", required=True, metavar="MODULE::FN", help="function to inline into")
    i.set_defaults(func=cmd_inline)

    p = sub.add_parser("prove", help="run the prover on modules and classify the result")
    _common(p, prover=True)
    p.add_argument("--module", metavar="NAME", help="only this module")
    p.set_defaults(func=cmd_prove)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        settle(args)
        return args.func(args)
    except CliError as e:
        sys.stderr.write(f"error[{e.code}]: {e}\n")
        return e.exit_code
    except ToolNotFound as e:
        sys.stderr.write(f"error[E101]: prover not available: {e}\n")
        return EXIT_ENV
    except WorkspaceSetupFailed as e:
        sys.stderr.write(f"error[E105]: cannot set up prover workspace: {e}\n")
        return EXIT_ENV
    except ReplayMiss as e:
        sys.stderr.write(f"error[E103]: {e}\n")
        return EXIT_ENV
    except MissingCredentials as e:
        sys.stderr.write(f"error[E102]: {e.body}\n")
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
