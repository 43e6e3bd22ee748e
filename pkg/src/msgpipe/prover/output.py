"""Parse and classify the prover's human-readable output."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import List, Optional, Tuple


class VerdictKind(str, enum.Enum):
    PASS = "Pass"
    COUNTEREXAMPLE = "Counterexample"
    TIMEOUT = "Timeout"
    COMPILE_ERROR = "CompileError"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Frame:
    function: str
    line: int
    file: str = ""
    assignments: Tuple[Tuple[str, str], ...] = ()


@dataclass(frozen=True)
class CallStackTrace:
    frames: Tuple[Frame, ...]


@dataclass(frozen=True)
class ProverDiagnostic:
    severity: str
    message: str
    code: str = ""
    file: str = ""
    line: int = 0
    col: int = 0
    snippet: Tuple[str, ...] = ()
    frames: Tuple[Frame, ...] = ()
    raw: Tuple[str, ...] = ()

    @property
    def text(self) -> str:
        return "\n".join(self.raw)

    def header(self) -> str:
        code = f"[{self.code}]" if self.code else ""
        loc = f" at {self.file}:{self.line}:{self.col}" if self.file else ""
        return f"{self.severity}{code}: {self.message}{loc}"


@dataclass(frozen=True)
class ProverVerdict:
    kind: VerdictKind
    diagnostics: Tuple[ProverDiagnostic, ...] = ()
    counterexample: Optional[CallStackTrace] = None
    wall_time: float = 0.0
    output: str = field(default="", compare=False)
    exit_code: Optional[int] = None

    def __post_init__(self):
        if self.kind is VerdictKind.COUNTEREXAMPLE and not self.diagnostics:
            raise ValueError("a counterexample verdict needs at least one diagnostic")

    @property
    def passed(self) -> bool:
        return self.kind is VerdictKind.PASS

    @property
    def failed(self) -> bool:
        return not self.passed

    def errors(self) -> List[ProverDiagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    def summary(self, limit: int = 2000) -> str:
        """The raw diagnostic text, truncated."""
        text = "\n".join(d.text for d in self.errors()) or self.output
        text = text.strip() or f"prover verdict: {self.kind.value}"
        marker = "\n[... truncated]"
        return text if len(text) <= limit else text[: limit - len(marker)] + marker


# ---------------------------------------------------------------- parsing

_HEADER = re.compile(r"^(error|warning|bug)(?:\[([A-Za-z0-9_]+)\])?\s*:\s*(.*)$")
_LOC = re.compile(r"^\s*(?:┌─|-->|╭─|\+--)\s*(.+?):(\d+):(\d+)\s*$")
_SNIPPET = re.compile(r"^\s*(\d+)?\s*[│|]\s?(.*)$")
# "=     at path/file.move:12: fun_name" or "=  at  fun_name (Line 12)" or "=  at  file.move:fun (Line 26)"
_FRAME_PATH = re.compile(r"^\s*[│|]?\s*=\s+at\s+(\S+?):(\d+)(?::\s*(\S+))?\s*$")
_FRAME_LINE = re.compile(r"^\s*[│|]?\s*=\s+at\s+(?:(\S+?):)?([A-Za-z_][\w:]*)\s*\(Line\s+(\d+)\)\s*$")
_ASSIGN = re.compile(r"^\s*[│|]?\s*=\s+([A-Za-z_][\w.]*)\s*=\s*(.*?)\s*$")

VERIFICATION_FAILURES = (
    "abort not covered by any",
    "post-condition does not hold",
    "function does not abort under this condition",
    "precondition does not hold",
    "loop invariant does not hold",
    "induction case of the loop invariant does not hold",
    "base case of the loop invariant does not hold",
    "assertion does not hold",
    "unknown assertion failed",
    "data invariant does not hold",
    "global memory invariant does not hold",
    "abort code not covered",
    "does not have permission to modify",
    "emitted events do not match",
)
_TIMEOUT = re.compile(r"out of resources|timeout|timed out", re.I)
_SUCCESS = re.compile(r'^\s*(SUCCESS|\{\s*"Result"\s*:\s*"Success"\s*\})\s*$', re.M)


def is_verification_failure(message: str) -> bool:
    m = message.lower()
    return any(p in m for p in VERIFICATION_FAILURES)


def is_timeout_message(message: str) -> bool:
    return bool(_TIMEOUT.search(message))


def parse_output(text: str) -> List[ProverDiagnostic]:
    """Split output into diagnostics. Lines that belong to no recognised
    shape are kept verbatim in ``raw``."""
    diags: List[ProverDiagnostic] = []
    cur: Optional[dict] = None

    def flush():
        if cur is not None:
            frames = tuple(Frame(f["function"], f["line"], f["file"], tuple(f["assign"]))
                           for f in cur["frames"])
            diags.append(ProverDiagnostic(cur["severity"], cur["message"], cur["code"], cur["file"],
                                          cur["line"], cur["col"], tuple(cur["snippet"]), frames,
                                          tuple(cur["raw"])))

    for line in text.splitlines():
        stripped = line.rstrip()
        m = _HEADER.match(stripped.strip())
        if m and not stripped.startswith((" ", "\t", "│", "|")):
            flush()
            cur = {"severity": "error" if m.group(1) == "bug" else m.group(1), "code": m.group(2) or "",
                   "message": m.group(3).strip(), "file": "", "line": 0, "col": 0,
                   "snippet": [], "frames": [], "raw": [stripped]}
            continue
        if cur is None:
            continue
        cur["raw"].append(stripped)
        m = _LOC.match(stripped)
        if m and not cur["file"]:
            cur["file"], cur["line"], cur["col"] = m.group(1), int(m.group(2)), int(m.group(3))
            continue
        m = _FRAME_LINE.match(stripped)
        if m:
            cur["frames"].append({"function": m.group(2), "line": int(m.group(3)),
                                  "file": m.group(1) or "", "assign": []})
            continue
        m = _FRAME_PATH.match(stripped)
        if m:
            cur["frames"].append({"function": m.group(3) or "", "line": int(m.group(2)),
                                  "file": m.group(1), "assign": []})
            continue
        m = _ASSIGN.match(stripped)
        if m and cur["frames"]:
            cur["frames"][-1]["assign"].append((m.group(1), m.group(2)))
            continue
        m = _SNIPPET.match(stripped)
        if m and m.group(2).strip():
            cur["snippet"].append(m.group(2))
    flush()
    return diags


def classify(text: str, exit_code: Optional[int] = 0, timed_out: bool = False
             ) -> Tuple[VerdictKind, List[ProverDiagnostic]]:
    """Map one prover run to exactly one verdict.

    Precedence: process timeout, compile error, counterexample, reported
    timeout, pass. Anything else (nonzero exit with nothing recognisable)
    is a compile error.
    """
    diags = parse_output(text)
    errors = [d for d in diags if d.severity == "error"]
    if timed_out:
        return VerdictKind.TIMEOUT, diags
    verif = [d for d in errors if is_verification_failure(d.message) or d.frames]
    timeouts = [d for d in errors if is_timeout_message(d.message) and d not in verif]
    compile_errs = [d for d in errors if d not in verif and d not in timeouts]
    if compile_errs:
        return VerdictKind.COMPILE_ERROR, diags
    if verif:
        return VerdictKind.COUNTEREXAMPLE, diags
    if timeouts:
        return VerdictKind.TIMEOUT, diags
    if exit_code == 0 or _SUCCESS.search(text):
        return VerdictKind.PASS, diags
    if not diags:
        diags = [ProverDiagnostic("error", f"prover exited with status {exit_code} without diagnostics",
                                  raw=tuple(text.splitlines()[-20:]))]
    return VerdictKind.COMPILE_ERROR, diags


def verdict_from_output(text: str, exit_code: Optional[int], wall_time: float,
                        timed_out: bool = False) -> ProverVerdict:
    kind, diags = classify(text, exit_code, timed_out)
    trace = None
    for d in diags:
        if d.frames:
            trace = CallStackTrace(d.frames)
            break
    return ProverVerdict(kind, tuple(diags), trace, wall_time, text, exit_code)
