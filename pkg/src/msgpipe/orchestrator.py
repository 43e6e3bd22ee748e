"""The generation loop: agents, merge, verify, route feedback, repeat."""

from __future__ import annotations

import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from . import agents
from .agents import AgentSettings, EmptyOutput, build_bundle, gen_abstract_spec, gen_clauses
from .coverage import DEFAULT_MUTANTS, NoCandidates, PreconditionViolated, feedback_diffs, measure, mutate
from .deps import (ContextMode, DependencyClosure, GenerationContext, as_workspace, build_context,
                   select_targets, slice)
from .ensemble import annotated_function, attach, callee_clauses, merge, polish
from .frontend import ast as A
from .frontend.printer import pretty_print, print_spec_block
from .inline import inline_best_effort
from .llm import BackendError, ChatBackend
from .prover import (GuidanceRule, ProverConfig, ProverVerdict, VerdictKind, attribute_failure,
                     match_guidance, verify)
from .snippets import ClauseClass, ClauseSnippet

log = logging.getLogger(__name__)

SUCCESS, ABSTRACT, FAIL = "Success", "Abstract", "Fail"
_OUTCOME_RANK = {SUCCESS: 0, ABSTRACT: 1, FAIL: 2}


@dataclass(frozen=True)
class RunConfig:
    rounds: int = 5
    trials: int = 3
    context_modes: Tuple[ContextMode, ...] = (ContextMode.V1, ContextMode.V2)
    prover: ProverConfig = field(default_factory=ProverConfig)
    coverage_enabled: bool = False
    seed: int = 0
    mutants: int = DEFAULT_MUTANTS
    agent: AgentSettings = AgentSettings()
    polish: bool = False
    workers: int = 1
    guidance_rules: Optional[Tuple[GuidanceRule, ...]] = None

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        modes = tuple(ContextMode(m) for m in self.context_modes)
        if not modes:
            raise ValueError("at least one context mode is required")
        object.__setattr__(self, "context_modes", tuple(sorted(set(modes), key=lambda m: m.value)))


@dataclass(frozen=True)
class Event:
    kind: str
    trial: int = 0
    round: int = 0
    mode: str = ""
    cls: str = ""
    detail: str = ""
    guidance: Tuple[str, ...] = ()

    def line(self) -> str:
        where = f"trial={self.trial} round={self.round}"
        if self.mode:
            where += f" mode={self.mode}"
        head = f"[{where}] {self.kind}"
        if self.cls:
            head += f" {self.cls}"
        out = head + (f": {self.detail}" if self.detail else "")
        if self.kind == "agent":
            # the feedback event just before carries the full text
            return out + (f" [{len(self.guidance)} guidance item(s)]" if self.guidance else "")
        for g in self.guidance:
            out += "\n    guidance: " + g.replace("\n", "\n      ")
        return out


@dataclass(frozen=True)
class Outcome:
    kind: str
    round: Optional[int] = None
    spec: Optional[A.SpecBlock] = None
    mode: Optional[str] = None
    trial: Optional[int] = None
    source: str = ""
    coverage: Optional[float] = None


@dataclass(frozen=True)
class RunRecord:
    target: str
    outcome: Outcome
    transcript: Tuple[Event, ...]
    clause_counts: Tuple[Tuple[str, int], ...]
    trial_outcomes: Tuple[Tuple[str, Optional[int]], ...] = ()

    @property
    def counts(self) -> Dict[str, int]:
        return dict(self.clause_counts)

    def transcript_text(self) -> str:
        lines = [f"target: {self.target}"]
        lines += [e.line() for e in self.transcript]
        o = self.outcome
        lines.append(f"outcome: {o.kind}" + (f" round={o.round}" if o.round else "")
                     + (f" mode={o.mode}" if o.mode else "") + (f" trial={o.trial}" if o.trial else ""))
        if o.spec is not None:
            lines.append(print_spec_block(o.spec).rstrip())
        return "\n".join(lines) + "\n"


class _Log:
    """Append-only event channel shared by concurrent branches."""

    def __init__(self):
        self._events: List[Event] = []
        self._lock = threading.Lock()

    def add(self, event: Event) -> None:
        with self._lock:
            self._events.append(event)

    def events(self) -> Tuple[Event, ...]:
        with self._lock:
            return tuple(self._events)


# ---------------------------------------------------------- branch state


@dataclass
class _Branch:
    mode: ContextMode
    ctx: GenerationContext
    active: Tuple[ClauseClass, ...]
    snippets: Dict[ClauseClass, ClauseSnippet] = field(default_factory=dict)
    guidance: Dict[ClauseClass, Tuple[str, ...]] = field(default_factory=dict)
    dirty: Tuple[ClauseClass, ...] = ()
    coverage_diffs: str = ""
    last_block: Optional[A.SpecBlock] = None
    last_module: Optional[A.SourceModule] = None
    last_verdict: Optional[ProverVerdict] = None
    last_guidance: Tuple[str, ...] = ()


def _activation(ctx: GenerationContext, aborts_fixed: bool) -> Tuple[ClauseClass, ...]:
    out = []
    if ctx.metadata.has_global_mut:
        out.append(ClauseClass.MODIFIES)
    if not aborts_fixed:
        out.append(ClauseClass.ABORTS_IF)
    out.append(ClauseClass.ENSURES)
    if ctx.metadata.has_loops:
        out.append(ClauseClass.LOOP_INVARIANT)
    return tuple(out)


def _clause_counts(spec: Optional[A.SpecBlock], fn: Optional[A.FunctionDef]) -> Tuple[Tuple[str, int], ...]:
    counts = {c.value: 0 for c in ClauseClass.ordered()}
    if spec is not None:
        for c in spec.clauses:
            for cls in ClauseClass.ordered():
                if c.kind == cls.clause_kind:
                    counts[cls.value] += 1
    if fn is not None and fn.body is not None:
        counts[ClauseClass.LOOP_INVARIANT.value] = sum(
            len(n.invariants) for n in A.walk(fn.body) if isinstance(n, A.While))
    return tuple(counts.items())


class _Trial:
    def __init__(self, target: str, closure: DependencyClosure, config: RunConfig, llm: ChatBackend,
                 prover: ProverConfig, trial: int, log_: _Log):
        self.target = target
        self.closure = closure
        self.config = config
        self.llm = llm
        self.prover = prover
        self.trial = trial
        self.log = log_
        self.module = closure.module
        self.fn = closure.function

    def event(self, kind: str, rnd: int = 0, mode: str = "", cls: str = "", detail: str = "",
              guidance: Sequence[str] = ()) -> None:
        self.log.add(Event(kind, self.trial, rnd, mode, cls, detail, tuple(guidance)))

    # ..................................................................

    def contexts(self) -> Dict[ContextMode, GenerationContext]:
        out = {}
        report = None
        for mode in self.config.context_modes:
            if mode is ContextMode.V1:
                report = inline_best_effort(self.closure)
                self.event("inline", detail=f"inlined={list(report.inlined)} "
                                            f"skipped={[p for p, _ in report.skipped]}")
            out[mode] = build_context(self.closure, mode, report if mode is ContextMode.V1 else None)
        return out

    def run(self) -> Outcome:
        ctxs = self.contexts()
        pre = agents.precheck_aborts_false(self.module, self.fn, self.prover)
        self.event("precheck", 1, detail="aborts_if false verified" if pre else "aborts_if false rejected")
        branches = []
        for mode, ctx in ctxs.items():
            b = _Branch(mode, ctx, _activation(ctx, pre is not None))
            if pre is not None:
                b.snippets[ClauseClass.ABORTS_IF] = pre
            b.dirty = b.active
            branches.append(b)
            self.event("activate", 1, mode.value, detail=", ".join(c.value for c in b.active))

        best: Optional[Outcome] = None
        for rnd in range(1, self.config.rounds + 1):
            results = [self.step(b, rnd) for b in branches]
            passed = [b for b, v in zip(branches, results) if v.passed]
            if passed:
                # tie goes to the listed-dependency context
                win = next((b for b in passed if b.mode is ContextMode.V2), passed[0])
                ratio, diffs = self.coverage(win, rnd)
                if best is None or (ratio or 0) >= (best.coverage or 0):
                    first = best.round if best is not None else rnd
                    best = Outcome(SUCCESS, first, win.last_block, win.mode.value, self.trial,
                                   pretty_print(win.last_module), ratio)
                if not diffs or rnd == self.config.rounds:
                    break
                win.coverage_diffs = diffs
                win.dirty = (ClauseClass.ENSURES,)
                win.guidance = {}
                branches = [win]
                continue
            for b in branches:
                self.route(b, rnd)
        if best is not None:
            return best
        return self.abstract(branches)

    def step(self, b: _Branch, rnd: int) -> ProverVerdict:
        mode = b.mode.value
        for cls in b.active:
            if cls not in b.dirty:
                continue
            guidance = b.guidance.get(cls, ())
            diffs = b.coverage_diffs if cls is ClauseClass.ENSURES else ""
            prior = b.snippets.get(cls) if (guidance or diffs) else None
            bundle = build_bundle(cls, b.ctx, guidance, prior, diffs)
            self.event("agent", rnd, mode, cls.value,
                       "coverage feedback" if diffs else "", guidance)
            try:
                b.snippets[cls] = gen_clauses(cls, b.ctx, bundle, self.llm, self.config.agent)
                s = b.snippets[cls]
                n = len(s.clauses) if cls is not ClauseClass.LOOP_INVARIANT else _clause_counts(
                    None, s.annotated_function)[-1][1]
                extra = f"; {len(s.diagnostics)} item(s) dropped" if s.diagnostics else ""
                self.event("snippet", rnd, mode, cls.value, f"{n} clause(s){extra}")
            except (EmptyOutput, BackendError) as e:
                b.snippets.pop(cls, None)
                self.event("agent_error", rnd, mode, cls.value, f"{type(e).__name__}: {e}")
        b.coverage_diffs = ""
        snippets = [b.snippets[c] for c in ClauseClass.ordered() if c in b.snippets]
        block = merge(snippets, self.fn.name)
        if self.config.polish:
            block = polish(block, self.llm, self.config.agent)
        module = attach(self.module, block, annotated_function(snippets), callee_clauses(snippets))
        verdict = verify(pretty_print(module), self.prover)
        b.last_block, b.last_module, b.last_verdict = block, module, verdict
        head = verdict.diagnostics[0].message if verdict.failed and verdict.diagnostics else ""
        self.event("verify", rnd, mode, detail=verdict.kind.value + (f" ({head})" if head else ""))
        return verdict

    def route(self, b: _Branch, rnd: int) -> None:
        v = b.last_verdict
        summary = agents.summarize_error(v, self.llm, self.config.agent)
        rules = list(self.config.guidance_rules) if self.config.guidance_rules is not None else None
        advice = match_guidance(v, rules)
        responsible = attribute_failure(v, b.active)
        order = [c for c in ClauseClass.ordered() if c in responsible]
        # the precheck result is final; never regenerate it
        if ClauseClass.ABORTS_IF not in b.active:
            order = [c for c in order if c is not ClauseClass.ABORTS_IF]
        note = tuple([summary] + advice)
        b.guidance = {c: note for c in order}
        b.dirty = tuple(order) or b.active
        b.last_guidance = note
        self.event("feedback", rnd, b.mode.value, detail="to " + ", ".join(c.value for c in b.dirty),
                   guidance=note)

    def coverage(self, b: _Branch, rnd: int) -> Tuple[Optional[float], str]:
        if not self.config.coverage_enabled:
            return None, ""
        fn = b.last_module.function(self.fn.name)
        spec = b.last_block
        try:
            mutants = mutate(fn, self.config.seed, self.config.mutants, b.last_module, self.closure.workspace)
            report = measure(fn, spec, mutants, self.prover, b.last_module)
        except NoCandidates as e:
            self.event("coverage", rnd, b.mode.value, detail=f"no mutants ({e})")
            return 1.0, ""
        except PreconditionViolated as e:
            self.event("coverage", rnd, b.mode.value, detail=str(e))
            return None, ""
        ratio = "n/a" if report.ratio is None else f"{report.ratio:.3f}"
        self.event("coverage", rnd, b.mode.value,
                   detail=f"{report.covered}/{report.total} covered (ratio {ratio}); "
                          f"uncovered={[m.id for m in report.uncovered]}")
        return report.ratio, feedback_diffs(report)

    def abstract(self, branches: List[_Branch]) -> Outcome:
        b = next((x for x in branches if x.mode is ContextMode.V2), branches[0])
        block = gen_abstract_spec(b.ctx, self.llm, self.config.agent, b.last_guidance)
        module = attach(self.module, block)
        verdict = verify(pretty_print(module), self.prover)
        self.event("abstract", self.config.rounds, b.mode.value,
                   detail=f"{len(block.clauses)} abstract clause(s); verify {verdict.kind.value}")
        if verdict.passed:
            return Outcome(ABSTRACT, None, block, b.mode.value, self.trial, pretty_print(module))
        return Outcome(FAIL, None, None, None, self.trial)


# ------------------------------------------------------------- driving


def _better(a: Outcome, b: Outcome) -> bool:
    """Whether ``a`` beats ``b``: Success over Abstract over Fail, then the
    earliest successful round; earlier trials win ties."""
    ka = (_OUTCOME_RANK[a.kind], a.round or 0)
    kb = (_OUTCOME_RANK[b.kind], b.round or 0)
    return ka < kb


def run_target(target: str, workspace, config: RunConfig, llm: ChatBackend,
               prover: Optional[ProverConfig] = None) -> RunRecord:
    ws = as_workspace(workspace)
    prover = prover or config.prover
    log_ = _Log()
    try:
        closure = slice(ws, target)
    except Exception as e:  # unknown target, unsupported shape
        log_.add(Event("error", detail=f"{type(e).__name__}: {e}"))
        return RunRecord(target, Outcome(FAIL), log_.events(), _clause_counts(None, None))
    others = tuple((f"{m.address}_{m.name}", pretty_print(m)) for m in ws.modules
                   if m is not closure.module and (m.address, m.name) != (closure.module.address, closure.module.name))
    if others and prover.backend == "external":
        prover = replace(prover, extra_sources=others)
    best: Optional[Outcome] = None
    per_trial = []
    for t in range(1, config.trials + 1):
        out = _Trial(closure.target, closure, config, llm, prover, t, log_).run()
        per_trial.append((out.kind, out.round))
        if best is None or _better(out, best):
            best = out
    fn = None
    if best.source:
        try:
            from .frontend.parser import parse_many
            for m in parse_many(best.source):
                if (m.address, m.name) == (closure.module.address, closure.module.name):
                    fn = m.function(closure.function.name)
        except Exception:
            fn = None
    counts = _clause_counts(best.spec, fn if best.kind == SUCCESS else None) if best.kind != FAIL \
        else _clause_counts(None, None)
    return RunRecord(closure.target, best, log_.events(), counts, tuple(per_trial))


def run_suite(workspace, config: RunConfig, llm: ChatBackend, prover: Optional[ProverConfig] = None,
              targets: Optional[Sequence[str]] = None) -> Tuple[List[RunRecord], str]:
    ws = as_workspace(workspace)
    targets = list(targets) if targets is not None else select_targets(ws)

    def one(t: str) -> RunRecord:
        return run_target(t, ws, config, llm, prover)

    if config.workers > 1 and len(targets) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(one, targets))
    else:
        records = [one(t) for t in targets]
    records.sort(key=lambda r: r.target)
    return records, summary_table(records, config.rounds)


# ------------------------------------------------------------- reports


def summary_table(records: Sequence[RunRecord], rounds: int = 5) -> str:
    classes = [c.value for c in ClauseClass.ordered()]
    out = [f"targets: {len(records)}", "", "outcome    count"]
    for k in (FAIL, SUCCESS, ABSTRACT):
        out.append(f"{k:<10} {sum(1 for r in records if r.outcome.kind == k)}")
    out += ["", "successful round    count"]
    for i in range(1, rounds + 1):
        out.append(f"round {i:<13} {sum(1 for r in records if r.outcome.kind == SUCCESS and r.outcome.round == i)}")
    out += ["", "clauses (Success)   " + " ".join(f"{c:>13}" for c in classes)]
    totals = [sum(r.counts.get(c, 0) for r in records if r.outcome.kind == SUCCESS) for c in classes]
    out.append(f"{'total':<19} " + " ".join(f"{n:>13}" for n in totals))
    out += ["", "target" + " " * 26 + f"{'outcome':<9} {'round':<5} {'mode':<4} {'trial':<5} "
            + " ".join(f"{c:>13}" for c in classes)]
    for r in records:
        o = r.outcome
        out.append(f"{r.target:<32}{o.kind:<9} {str(o.round or '-'):<5} {(o.mode or '-'):<4} "
                   f"{str(o.trial or '-'):<5} " + " ".join(f"{r.counts.get(c, 0):>13}" for c in classes))
    return "\n".join(out) + "\n"


def _slug(target: str) -> str:
    return re.sub(r"[^A-Za-z0-9_]+", "__", target).strip("_")


def write_report(records: Sequence[RunRecord], table: str, out_dir: Union[str, Path],
                 report_name: str = "report.txt") -> Path:
    """Write the summary table, one transcript per target and the module
    source of every Success or Abstract outcome, all under ``out_dir``."""
    out = Path(out_dir)
    (out / "transcripts").mkdir(parents=True, exist_ok=True)
    (out / "specs").mkdir(exist_ok=True)
    report = out / report_name
    report.write_text(table, encoding="utf-8")
    for r in records:
        (out / "transcripts" / f"{_slug(r.target)}.txt").write_text(r.transcript_text(), encoding="utf-8")
        if r.outcome.source:
            (out / "specs" / f"{_slug(r.target)}.move").write_text(r.outcome.source, encoding="utf-8")
    return report
