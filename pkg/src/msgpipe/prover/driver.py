"""Run the external prover, or the rule-driven mock, on module text."""

from __future__ import annotations

import os
import re
import shlex
import shutil
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from .output import ProverDiagnostic, ProverVerdict, VerdictKind, verdict_from_output

DEFAULT_TIMEOUT = 60.0
DEFAULT_PARALLELISM = 4
DEFAULT_COMMAND = "aptos move prove --package-dir {workspace}"
DEFAULT_MANIFEST = """[package]
name = "msgpipe_check"
version = "0.0.0"

[addresses]
"""


class ToolNotFound(RuntimeError):
    pass


class WorkspaceSetupFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class MockRule:
    pattern: str
    verdict: VerdictKind
    diagnostic: str

    def matches(self, source: str) -> bool:
        return re.search(self.pattern, source, re.M) is not None


def parse_mock_rules(text: str) -> List[MockRule]:
    """``pattern TAB verdict TAB diagnostic-text`` per line. ``\\n`` and
    ``\\t`` in the diagnostic text are unescaped; ``#`` lines are comments."""
    rules = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise ValueError(f"mock rule line {n}: expected 'pattern<TAB>verdict<TAB>diagnostic'")
        pattern, verdict = parts[0], parts[1].strip()
        diag = "\t".join(parts[2:])
        try:
            re.compile(pattern)
            kind = VerdictKind(verdict)
        except (re.error, ValueError) as e:
            raise ValueError(f"mock rule line {n}: {e}") from e
        rules.append(MockRule(pattern, kind, unescape(diag)))
    return rules


_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\"}


def unescape(text: str) -> str:
    return re.sub(r"\\([nt\\])", lambda m: _ESCAPES[m.group(1)], text)


@dataclass(frozen=True)
class ProverConfig:
    backend: str = "mock"  # "external" | "mock"
    command: str = DEFAULT_COMMAND
    timeout: float = DEFAULT_TIMEOUT
    workspace_dir: Optional[str] = None
    manifest: str = DEFAULT_MANIFEST
    rules: Tuple[MockRule, ...] = ()
    parallelism: int = DEFAULT_PARALLELISM
    extra_sources: Tuple[Tuple[str, str], ...] = field(default=(), compare=False)

    @classmethod
    def mock(cls, rules: Union[str, Path, Sequence[MockRule]], **kw) -> "ProverConfig":
        if isinstance(rules, (str, Path)):
            rules = parse_mock_rules(Path(rules).read_text(encoding="utf-8"))
        return cls(backend="mock", rules=tuple(rules), **kw)

    @classmethod
    def external(cls, command: str = DEFAULT_COMMAND, **kw) -> "ProverConfig":
        return cls(backend="external", command=command, **kw)


def verify(module_source: str, config: ProverConfig) -> ProverVerdict:
    if config.backend == "mock":
        return _verify_mock(module_source, config)
    if config.backend == "external":
        return _verify_external(module_source, config)
    raise ValueError(f"unknown prover backend {config.backend!r}")


def verify_many(sources: Sequence[str], config: ProverConfig,
                parallelism: Optional[int] = None) -> List[ProverVerdict]:
    """Verify independent sources with bounded parallelism; order preserved."""
    n = parallelism or config.parallelism
    if n <= 1 or len(sources) <= 1:
        return [verify(s, config) for s in sources]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(lambda s: verify(s, config), sources))


def _verify_mock(source: str, config: ProverConfig) -> ProverVerdict:
    for rule in config.rules:
        if rule.matches(source):
            return _mock_verdict(rule.verdict, rule.diagnostic, config)
    return _mock_verdict(VerdictKind.COMPILE_ERROR, "error: mock prover: no rule matched the source", config)


def _mock_verdict(kind: VerdictKind, text: str, config: ProverConfig) -> ProverVerdict:
    if kind is VerdictKind.PASS:
        v = verdict_from_output(text, 0, 0.0)
        return v if v.passed else ProverVerdict(kind, (), None, 0.0, text, 0)
    if kind is VerdictKind.TIMEOUT:
        return verdict_from_output(text, None, config.timeout, timed_out=True)
    v = verdict_from_output(text, 1, 0.0)
    if v.kind is not kind:
        # the rule's verdict field decides; the text only supplies diagnostics
        diags = v.diagnostics or (ProverDiagnostic("error", text.strip() or kind.value,
                                                   raw=tuple(text.splitlines())),)
        return ProverVerdict(kind, diags, v.counterexample, 0.0, text, 1)
    return v


def _argv(config: ProverConfig, workspace: Path, file: Path) -> List[str]:
    cmd = config.command.format(workspace=str(workspace), file=str(file))
    return shlex.split(cmd)


def _verify_external(source: str, config: ProverConfig) -> ProverVerdict:
    probe = shlex.split(config.command)
    if not probe or shutil.which(probe[0]) is None:
        raise ToolNotFound(f"prover command not found: {probe[0] if probe else '(empty)'}")
    try:
        base = config.workspace_dir
        if base is not None:
            Path(base).mkdir(parents=True, exist_ok=True)
        tmp = tempfile.mkdtemp(prefix="msgpipe-prove-", dir=base)
        ws = Path(tmp)
        (ws / "sources").mkdir()
        (ws / "Move.toml").write_text(config.manifest, encoding="utf-8")
        target = ws / "sources" / "target.move"
        target.write_text(source, encoding="utf-8")
        for name, text in config.extra_sources:
            (ws / "sources" / f"{name}.move").write_text(text, encoding="utf-8")
    except OSError as e:
        raise WorkspaceSetupFailed(str(e)) from e
    argv = _argv(config, ws, target)
    start = time.monotonic()
    try:
        proc = subprocess.run(argv, cwd=ws, capture_output=True, text=True,
                              timeout=config.timeout, env=os.environ.copy())
    except subprocess.TimeoutExpired as e:
        elapsed = time.monotonic() - start
        out = _text(e.stdout) + _text(e.stderr)
        return verdict_from_output(out, None, elapsed, timed_out=True)
    except FileNotFoundError as e:
        raise ToolNotFound(str(e)) from e
    finally:
        if config.workspace_dir is None:
            shutil.rmtree(ws, ignore_errors=True)
    elapsed = time.monotonic() - start
    return verdict_from_output(proc.stdout + proc.stderr, proc.returncode, elapsed)


def _text(b) -> str:
    if b is None:
        return ""
    return b.decode("utf-8", "replace") if isinstance(b, bytes) else b
