"""Specification coverage by deleting parts of the target's syntax tree."""

from __future__ import annotations

import difflib
import logging
import random
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .frontend import ast as A
from .frontend.check import ANY, NEVER, check_function, expression_types, _is_int
from .frontend.printer import pretty_print, print_function
from .prover import ProverConfig, ProverVerdict, VerdictKind, verify, verify_many

log = logging.getLogger(__name__)

DEFAULT_MUTANTS = 8
_ABORTING_OPS = {"+", "-", "*", "/", "%", "<<"}


class NoCandidates(ValueError):
    pass


class PreconditionViolated(RuntimeError):
    def __init__(self, verdict: ProverVerdict):
        super().__init__(f"spec does not verify on the original function ({verdict.kind.value})")
        self.verdict = verdict


@dataclass(frozen=True)
class Mutant:
    id: int
    deleted_nodes: Tuple[int, ...]
    source: str
    diff: str
    description: str = ""
    function: Optional[A.FunctionDef] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class CoverageReport:
    total: int
    covered: int
    uncovered: Tuple[Mutant, ...]
    excluded: Tuple[int, ...] = ()  # mutant ids whose verification timed out
    verdicts: Tuple[Tuple[int, str], ...] = ()

    @property
    def ratio(self) -> Optional[float]:
        return self.covered / self.total if self.total else None

    def text(self) -> str:
        ratio = "n/a" if self.ratio is None else f"{self.ratio:.3f}"
        out = [f"mutants: {self.total}", f"covered: {self.covered}",
               f"uncovered: {len(self.uncovered)}", f"ratio: {ratio}"]
        if self.excluded:
            out.append("excluded (timeout): " + ", ".join(map(str, self.excluded)))
        for mid, kind in self.verdicts:
            out.append(f"  mutant {mid}: {kind}")
        return "\n".join(out) + "\n"


# ---------------------------------------------------------- candidates


def _default_value(t, span: A.Span) -> Optional[A.Expr]:
    if _is_int(t):
        return A.IntLit(0, span=span)
    if isinstance(t, A.PrimType) and t.name == "bool":
        return A.BoolLit(False, span=span)
    if isinstance(t, A.PrimType) and t.name == "address":
        return A.AddressLit("0x0", span=span)
    if isinstance(t, A.VectorType) and t.elem is not ANY and t.elem is not NEVER:
        return A.VectorLit((), t.elem, span=span)
    return None


def _reads_global(e: A.Node) -> bool:
    while isinstance(e, (A.FieldAccess, A.Deref, A.Borrow)):
        e = e.expr
    return isinstance(e, A.BorrowGlobal)


def _candidates(fn: A.FunctionDef, types: Dict[int, object]):
    """(node id, kind, replacement-or-None) in pre-order."""
    out = []
    body = fn.body
    for n in A.walk(body):
        if isinstance(n, A.Block):
            for s in n.stmts:
                out.append((s.nid, "statement", None))
        if isinstance(n, A.If):
            for b in (n.then, n.else_):
                if isinstance(b, A.Block) and (b.stmts or b.tail is not None):
                    out.append((b.nid, "block", A.Block(span=b.span)))
        if isinstance(n, A.While) and (n.body.stmts or n.body.tail is not None):
            out.append((n.body.nid, "block", A.Block(span=n.body.span)))
        effectful = (isinstance(n, (A.Call, A.MoveFrom))
                     or (isinstance(n, A.BinOp) and n.op in _ABORTING_OPS)
                     or (isinstance(n, (A.FieldAccess, A.Deref)) and _reads_global(n)))
        if effectful:
            d = _default_value(types.get(n.nid, ANY), n.span)
            if d is not None:
                out.append((n.nid, "expression", d))
    return out


def _apply(body: A.Block, nid: int, kind: str, repl: Optional[A.Node]) -> A.Block:
    if kind == "statement":
        def drop(n):
            if isinstance(n, A.Block) and any(s.nid == nid for s in n.stmts):
                return replace(n, stmts=tuple(s for s in n.stmts if s.nid != nid))
            return n
        return A.transform(body, drop)
    return A.transform(body, lambda n: repl if n.nid == nid else n)


def _describe(node: A.Node, kind: str) -> str:
    where = f"line {node.span.line}" if node.span.line else "unknown line"
    if kind == "expression":
        return f"replace {type(node).__name__} at {where} with a default value"
    return f"delete {kind} at {where}"


def mutate(fn: A.FunctionDef, seed: int, n: int = DEFAULT_MUTANTS,
           module: Optional[A.SourceModule] = None, workspace=None) -> List[Mutant]:
    """Up to ``n`` distinct, well-formed deletion mutants, chosen by ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if module is None:
        module = A.SourceModule("0x0", "m", functions=(fn,))
    fn = A.number_nodes(fn)
    module = module.with_function(fn)
    if fn.body is None or not (fn.body.stmts or fn.body.tail is not None):
        raise NoCandidates(f"'{fn.name}' has nothing to delete")
    types = expression_types(module, fn, workspace)
    original = print_function(fn)
    by_id = {x.nid: x for x in A.walk(fn.body)}

    valid = []
    seen = {original}
    for nid, kind, repl in _candidates(fn, types):
        body = _apply(fn.body, nid, kind, repl)
        mfn = replace(fn, body=body)
        text = print_function(mfn)
        if text in seen:
            continue
        if check_function(module.with_function(mfn), mfn, workspace):
            continue
        seen.add(text)
        valid.append((nid, kind, mfn, text))
    if not valid:
        raise NoCandidates(f"'{fn.name}' has no well-formed deletion")

    rng = random.Random(seed)
    picked = sorted(rng.sample(range(len(valid)), min(n, len(valid))))
    out = []
    for i, idx in enumerate(picked, 1):
        nid, kind, mfn, text = valid[idx]
        diff = "\n".join(difflib.unified_diff(
            original.splitlines(), text.splitlines(),
            fromfile=f"a/{fn.name}.move", tofile=f"b/{fn.name}.mutant{i}.move", lineterm=""))
        out.append(Mutant(i, (nid,), text, diff + "\n", _describe(by_id[nid], kind), mfn))
    return out


# ------------------------------------------------------------ measure


def with_spec(module: A.SourceModule, fn: A.FunctionDef, spec: Optional[A.SpecBlock]) -> A.SourceModule:
    """``module`` with ``fn`` swapped in and ``spec`` as its only spec block."""
    m = module.with_function(fn)
    blocks = [b for b in m.spec_blocks if b.target_fn != fn.name]
    if spec is not None:
        blocks.append(spec)
        order = {f.name: i for i, f in enumerate(m.functions)}
        blocks.sort(key=lambda b: order.get(b.target_fn, len(order)))
    return replace(m, spec_blocks=tuple(blocks))


def measure(fn: A.FunctionDef, spec: A.SpecBlock, mutants: Sequence[Mutant],
            prover: ProverConfig, module: Optional[A.SourceModule] = None) -> CoverageReport:
    if module is None:
        module = A.SourceModule("0x0", "m", functions=(fn,))
    base = verify(pretty_print(with_spec(module, fn, spec)), prover)
    if not base.passed:
        raise PreconditionViolated(base)
    if not mutants:
        return CoverageReport(0, 0, ())
    sources = [pretty_print(with_spec(module, m.function, spec)) for m in mutants]
    verdicts = verify_many(sources, prover)
    covered = 0
    uncovered: List[Mutant] = []
    excluded: List[int] = []
    kinds = []
    for m, v in zip(mutants, verdicts):
        kinds.append((m.id, v.kind.value))
        if v.kind is VerdictKind.TIMEOUT:
            log.info("mutant %d timed out; excluded from coverage", m.id)
            excluded.append(m.id)
        elif v.kind is VerdictKind.PASS:
            uncovered.append(m)
        else:
            covered += 1
    total = covered + len(uncovered)
    return CoverageReport(total, covered, tuple(uncovered), tuple(excluded), tuple(kinds))


def feedback_diffs(report: CoverageReport) -> str:
    """Diffs of the uncovered mutants in id order; empty when all are covered."""
    return "".join(m.diff for m in sorted(report.uncovered, key=lambda m: m.id))
