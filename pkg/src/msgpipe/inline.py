"""Best-effort monotonic inlining of a target's callees."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

from .deps import DependencyClosure, fn_path
from .frontend import ast as A
from .frontend.check import Scope, Workspace, check_function

ATTEMPT_ORDER_NOTE = ("callees are attempted transitively in callees-first order; "
                      "callees of an inlined callee become candidates once their callsites appear")

_INL = re.compile(r"__inl(\d+)$")
_EFFECTS = (A.Call, A.MoveTo, A.MoveFrom, A.Assert, A.Abort, A.Return)


class SignatureMismatch(ValueError):
    pass


class NotInlinable(ValueError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(detail or reason)
        self.reason = reason


@dataclass(frozen=True)
class InlineReport:
    target: str
    inlined: Tuple[str, ...]
    skipped: Tuple[Tuple[str, str], ...]
    result: A.FunctionDef
    module: A.SourceModule
    notes: Tuple[str, ...] = (ATTEMPT_ORDER_NOTE,)

    def text(self) -> str:
        out = [f"target: {self.target}"] + [f"note: {n}" for n in self.notes]
        out.append("inlined: " + (", ".join(self.inlined) if self.inlined else "(none)"))
        out.append("skipped:" + ("" if self.skipped else " (none)"))
        out.extend(f"  {p}: {r}" for p, r in self.skipped)
        return "\n".join(out) + "\n"


# ----------------------------------------------------------- renaming


def next_index(fn: A.FunctionDef) -> int:
    """1 + the largest ``__inl<N>`` suffix already present in ``fn``."""
    best = 0
    names = [p.name for p in fn.params]
    if fn.body is not None:
        for n in A.walk(fn.body):
            if isinstance(n, A.Name):
                names.append(n.name)
            elif isinstance(n, A.Let):
                names.extend(A.pattern_names(n.pattern))
    for name in names:
        m = _INL.search(name)
        if m:
            best = max(best, int(m.group(1)))
    return best + 1


def local_names(fn: A.FunctionDef) -> set:
    out = {p.name for p in fn.params}
    if fn.body is not None:
        for n in A.walk(fn.body):
            if isinstance(n, A.Let):
                out.update(A.pattern_names(n.pattern))
    return out


def rename_locals(node: A.Node, names: set, suffix: str) -> A.Node:
    def ren(x: str) -> str:
        return x + suffix if x in names else x

    def fn(n: A.Node) -> A.Node:
        if isinstance(n, A.Name) and n.name in names:
            return replace(n, name=ren(n.name))
        if isinstance(n, A.PVar) and n.name in names:
            return replace(n, name=ren(n.name))
        if isinstance(n, A.PTuple):
            return replace(n, names=tuple(ren(x) for x in n.names))
        if isinstance(n, A.PStruct):
            return replace(n, fields=tuple((f, ren(b)) for f, b in n.fields))
        return n

    return A.transform(node, fn)


# ------------------------------------------------------- substitution


def _path(root: A.Node, nid: int) -> Optional[List[A.Node]]:
    if root.nid == nid:
        return [root]
    for c in A.children(root):
        p = _path(c, nid)
        if p is not None:
            return [root] + p
    return None


def _replace_nid(root: A.Node, nid: int, new: A.Node) -> A.Node:
    return A.transform(root, lambda n: new if n.nid == nid else n)


def _conditional_edge(parent: A.Node, child: A.Node) -> Optional[str]:
    if isinstance(parent, A.While) and child is parent.cond:
        return "callsite in loop condition"
    if isinstance(parent, A.If) and (child is parent.then or child is parent.else_):
        return "callsite in conditional branch expression"
    if isinstance(parent, A.BinOp) and parent.op in ("&&", "||") and child is parent.rhs:
        return "callsite in short-circuit operand"
    return None


def substitute(body: A.Block, callsite: int, callee: A.FunctionDef, index: int = 1) -> A.Block:
    """Replace the call with node id ``callsite`` by the callee's body.

    Arguments are bound to fresh ``<param>__inl<index>`` lets ahead of the
    statement holding the call; the callee's locals get the same suffix and its
    tail expression takes the place of the call.
    """
    path = _path(body, callsite)
    if path is None:
        raise SignatureMismatch(f"no node with id {callsite} in body")
    call = path[-1]
    if not isinstance(call, A.Call) or call.name != callee.name:
        raise SignatureMismatch(f"node {callsite} is not a call to '{callee.name}'")
    if len(call.args) != len(callee.params):
        raise SignatureMismatch(
            f"'{callee.name}' takes {len(callee.params)} argument(s), call passes {len(call.args)}")
    if callee.body is None:
        raise NotInlinable("Native", f"'{callee.name}' has no body")
    if any(isinstance(n, A.Return) for n in A.walk(callee.body)):
        raise NotInlinable("EarlyReturn", f"'{callee.name}' contains return")

    # the innermost block on the path decides where statements are hoisted
    bi = max(i for i, n in enumerate(path[:-1]) if isinstance(n, A.Block))
    block: A.Block = path[bi]
    element = path[bi + 1]
    for parent, child in zip(path[bi + 1:], path[bi + 2:]):
        why = _conditional_edge(parent, child)
        if why:
            raise NotInlinable("ConditionalCallsite", why)
    for n in A.walk(element):
        if n is call:
            break
        if isinstance(n, _EFFECTS) or (isinstance(n, A.BorrowGlobal) and n.mut):
            if not any(n is p for p in path):
                raise NotInlinable("EvaluationOrder", "effects evaluated before the callsite")

    suffix = f"__inl{index}"
    names = local_names(callee)
    cbody: A.Block = rename_locals(callee.body, names, suffix)
    # fresh ids so the copied nodes cannot collide with the caller's
    cbody = A.number_nodes(cbody, start=max(n.nid for n in A.walk(body)) + 1)
    hoisted: List[A.Stmt] = []
    for p, arg in zip(callee.params, call.args):
        ty = p.type if isinstance(arg, (A.IntLit, A.VectorLit)) else None
        if isinstance(arg, A.IntLit) and arg.suffix:
            ty = None
        hoisted.append(A.Let(A.PVar(p.name + suffix, span=p.span), arg, ty, span=call.span))
    hoisted.extend(cbody.stmts)
    value = cbody.tail if cbody.tail is not None else A.TupleExpr((), span=call.span)

    stmts = list(block.stmts)
    if element is block.tail:
        if element is call:
            new_tail = value
        else:
            new_tail = _replace_nid(element, call.nid, value)
        new_block = replace(block, stmts=tuple(stmts) + tuple(hoisted), tail=new_tail)
    else:
        i = next(k for k, s in enumerate(stmts) if s is element)
        if isinstance(element, A.ExprStmt) and element.expr is call:
            new_elems = [A.ExprStmt(value, span=element.span)] if cbody.tail is not None else []
        else:
            new_elems = [_replace_nid(element, call.nid, value)]
        stmts[i:i + 1] = hoisted + new_elems
        new_block = replace(block, stmts=tuple(stmts))
    if block is body:
        return new_block
    return _replace_nid(body, block.nid, new_block)


# ---------------------------------------------------------- greedy loop


def _callsites(fn: A.FunctionDef, scope: Scope, path: str) -> List[int]:
    if fn.body is None:
        return []
    out = []
    for n in A.walk(fn.body):
        if isinstance(n, A.Call):
            status, m, callee = scope.resolve_call(n)
            if callee is not None and fn_path(m, callee) == path:
                out.append(n.nid)
    return out


def _merge_acquires(caller: Tuple[str, ...], callee: Tuple[str, ...]) -> Tuple[str, ...]:
    out = list(caller)
    for a in callee:
        if a not in out:
            out.append(a)
    return tuple(out)


def inline_callee(module: A.SourceModule, fn: A.FunctionDef, callee: A.FunctionDef,
                  sites: List[int]) -> A.FunctionDef:
    """Inline every callsite of ``callee`` into ``fn`` (all or nothing)."""
    body = fn.body
    index = next_index(fn)
    # later callsites first keeps earlier node ids valid; then number in order
    for k, nid in enumerate(sorted(sites, reverse=True)):
        body = substitute(body, nid, callee, index + len(sites) - 1 - k)
    new = replace(fn, body=body, acquires=_merge_acquires(fn.acquires, callee.acquires))
    return A.number_nodes(new)


def inline_best_effort(closure: DependencyClosure) -> InlineReport:
    ws: Workspace = closure.workspace or Workspace([closure.module])
    module = closure.module
    fn = A.number_nodes(closure.function)
    scope = Scope(module, ws)
    inlined: List[str] = []
    skipped: List[Tuple[str, str]] = []
    pending = list(closure.callee_paths)
    modules: Dict[str, A.SourceModule] = dict(zip(closure.callee_paths, closure.callee_modules))
    defs = dict(zip(closure.callee_paths, closure.callees))

    progress = True
    while progress:
        progress = False
        for path in list(pending):
            sites = _callsites(fn, scope, path)
            if not sites:
                continue
            pending.remove(path)
            progress = True
            callee = defs[path]
            if callee.is_native:
                skipped.append((path, "Native"))
                continue
            if modules[path] is not module and callee.acquires:
                # acquires of another module's structs cannot be re-declared here
                skipped.append((path, "ForeignGlobalAccess"))
                continue
            try:
                cand = inline_callee(module, fn, callee, sites)
            except NotInlinable as e:
                skipped.append((path, e.reason))
                continue
            except SignatureMismatch:
                skipped.append((path, "SignatureMismatch"))
                continue
            cand_module = module.with_function(cand)
            diags = check_function(cand_module, cand, ws.replace(cand_module))
            if diags:
                skipped.append((path, diags[0].code))
                continue
            fn = cand
            inlined.append(path)
    for path in pending:
        skipped.append((path, "NotReached"))
    return InlineReport(closure.target, tuple(inlined), tuple(skipped), fn,
                        module.with_function(fn))
