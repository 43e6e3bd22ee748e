"""Merge per-class snippets into one spec block and attach it to a module."""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .deps import TargetNotFound
from .frontend import ast as A
from .frontend.parser import canonical_block
from .frontend.printer import print_spec_block
from .snippets import ClauseClass, ClauseSnippet

log = logging.getLogger(__name__)


class ConflictingBindings(ValueError):
    pass


def _names(nodes: Iterable[A.Node]) -> Set[str]:
    out = set()
    for node in nodes:
        if node is None:
            continue
        out.update(n.name for n in A.walk(node) if isinstance(n, A.Name))
    return out


def _rename(node, mapping: Mapping[str, str]):
    if not mapping:
        return node
    return A.transform(node, lambda n: replace(n, name=mapping[n.name])
                       if isinstance(n, A.Name) and n.name in mapping else n)


def _references(s: ClauseSnippet) -> Set[str]:
    return _names([c.expr for c in s.clauses] + [b.expr for b in s.bindings])


def merge(snippets: Sequence[ClauseSnippet], target: str) -> A.SpecBlock:
    """Deterministic merge into a block for ``target``.

    Identical bindings collapse into one. A binding that reuses a taken name
    for a different value is dropped when its own snippet never reads it and
    otherwise renamed with its class suffix. Clauses are deduplicated and
    put in canonical kind order.
    """
    order = {c: i for i, c in enumerate(ClauseClass.ordered())}
    seen_cls = set()
    for s in snippets:
        if s.cls in seen_cls:
            raise ValueError(f"more than one {s.cls.value} snippet")
        seen_cls.add(s.cls)
    bindings: List[A.Binding] = []
    by_name: Dict[str, A.Binding] = {}
    clauses: List[A.Clause] = []
    funs: List[A.SpecFun] = []
    fun_names: Dict[str, A.SpecFun] = {}

    for s in sorted(snippets, key=lambda s: order[s.cls]):
        refs = _references(s)
        mapping: Dict[str, str] = {}
        keep: List[A.Binding] = []
        for b in s.bindings:
            old = by_name.get(b.name)
            if old is None or _rename(b, mapping) == old:
                keep.append(b)
                continue
            if b.name not in refs:
                log.info("dropping unreferenced binding %r from the %s snippet", b.name, s.cls.value)
                continue
            new = f"{b.name}_{s.cls.slug}"
            if new in by_name or new in refs or new in mapping.values():
                raise ConflictingBindings(
                    f"binding '{b.name}' from the {s.cls.value} snippet differs from an earlier one "
                    f"and '{new}' is already taken")
            mapping[b.name] = new
            keep.append(b)
        for b in keep:
            b = replace(_rename(b, mapping), name=mapping.get(b.name, b.name))
            if b.name in by_name:
                continue
            by_name[b.name] = b
            bindings.append(b)
        for f in s.helper_funs:
            if f.name in fun_names:
                if fun_names[f.name] != f:
                    log.warning("two different definitions of spec fun %r; keeping the first", f.name)
                continue
            fun_names[f.name] = f
            funs.append(f)
        for c in s.clauses:
            c = _rename(c, mapping)
            if c not in clauses:
                clauses.append(c)

    aborts = [c for c in clauses if c.kind == "aborts_if"]
    if len(aborts) > 1 and any(isinstance(c.expr, A.BoolLit) and not c.expr.value for c in aborts):
        log.warning("spec for %s has 'aborts_if false' next to other aborts_if clauses; "
                    "leaving both for the prover", target)
    block = A.SpecBlock(target, tuple(bindings), tuple(clauses), tuple(funs))
    return A.number_nodes(canonical_block(block))


def as_snippet(block: A.SpecBlock, cls: ClauseClass = ClauseClass.ENSURES) -> ClauseSnippet:
    """A merged block viewed as a single snippet."""
    return ClauseSnippet(cls, block.bindings, block.clauses, helper_funs=block.helper_funs)


def annotated_function(snippets: Sequence[ClauseSnippet]) -> Optional[A.FunctionDef]:
    for s in snippets:
        if s.cls is ClauseClass.LOOP_INVARIANT and s.annotated_function is not None:
            return s.annotated_function
    return None


def callee_clauses(snippets: Sequence[ClauseSnippet]) -> Dict[str, Tuple[A.Clause, ...]]:
    out: Dict[str, List[A.Clause]] = {}
    for s in snippets:
        for path, cs in s.callee_snippets.items():
            acc = out.setdefault(path, [])
            acc.extend(c for c in cs if c not in acc)
    return {k: tuple(v) for k, v in sorted(out.items())}


# ------------------------------------------------------------- attach


def _local_name(path: str, module: A.SourceModule) -> Optional[str]:
    parts = path.split("::")
    if len(parts) == 1:
        return parts[0]
    if parts[-2] != module.name:
        return None
    if len(parts) == 3 and parts[0] != module.address:
        return None
    return parts[-1]


def attach(module: A.SourceModule, block: A.SpecBlock, annotated: Optional[A.FunctionDef] = None,
           callees: Optional[Mapping[str, Sequence[A.Clause]]] = None) -> A.SourceModule:
    """``module`` with ``block`` as the target's spec.

    Pragmas of an existing block for the target survive. ``annotated``
    replaces the target's body. ``callees`` maps callee paths to extra
    modifies clauses merged into those callees' blocks."""
    fn = module.function(block.target_fn)
    if fn is None:
        raise TargetNotFound(f"no function '{block.target_fn}' in {module.address}::{module.name}")
    existing = {b.target_fn: b for b in module.spec_blocks}
    old = existing.get(fn.name)
    if old is not None and old.pragmas:
        block = replace(block, pragmas=old.pragmas + tuple(p for p in block.pragmas if p not in old.pragmas))
    existing[fn.name] = block
    if annotated is not None:
        acquires = fn.acquires + tuple(a for a in annotated.acquires if a not in fn.acquires)
        module = module.with_function(replace(fn, body=annotated.body, acquires=acquires))
    for path, clauses in (callees or {}).items():
        name = _local_name(path, module)
        if name is None or module.function(name) is None or name == fn.name:
            continue
        cur = existing.get(name, A.SpecBlock(name))
        extra = tuple(c for c in clauses if c.kind == "modifies" and c not in cur.clauses)
        if extra:
            existing[name] = canonical_block(replace(cur, clauses=cur.clauses + extra))
    order = {f.name: i for i, f in enumerate(module.functions)}
    blocks = tuple(sorted(existing.values(), key=lambda b: order.get(b.target_fn, len(order))))
    return A.number_nodes(replace(module, spec_blocks=blocks))


# -------------------------------------------------------------- polish


def polish(block: A.SpecBlock, llm, settings=None) -> A.SpecBlock:
    """Optional restyling pass through the chat backend. The result is used
    only if it parses and keeps the same number of clauses of each kind;
    otherwise the input block comes back unchanged."""
    from collections import Counter
    from .agents import AgentSettings, _unwrap, extract_fenced, load_prompt, parse_clause_items, sanitize
    from .llm import BackendError, ChatRequest

    settings = settings or AgentSettings()
    text = print_spec_block(block)
    try:
        req = ChatRequest.make(settings.model, load_prompt("ensembler").strip(),
                               "```move\n" + text + "```\n",
                               temperature=settings.temperature, max_tokens=settings.max_tokens)
        raw = llm.complete(req)
    except BackendError as e:
        log.warning("polish pass skipped: %s", e)
        return block
    fenced = extract_fenced(raw)
    if not fenced:
        return block
    bare, wrapped = _unwrap(sanitize(fenced[0]))
    body = bare + "".join(inner for name, inner in wrapped if name == block.target_fn)
    new, diags = parse_clause_items(body, block.target_fn)
    if diags or Counter(c.kind for c in new.clauses) != Counter(c.kind for c in block.clauses):
        log.warning("polish pass output rejected; keeping the merged block")
        return block
    return A.number_nodes(canonical_block(replace(new, pragmas=block.pragmas)))
