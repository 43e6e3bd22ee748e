"""Dependency slicing and generation-context assembly."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .frontend import ast as A
from .frontend.check import Scope, Workspace, module_key
from .frontend.printer import print_const, print_function, print_struct


class TargetNotFound(LookupError):
    pass


class ContextMode(str, enum.Enum):
    V1 = "v1"  # target with callees inlined
    V2 = "v2"  # target plus listed dependencies

    def __str__(self) -> str:
        return self.value


def fn_path(module: A.SourceModule, fn: A.FunctionDef) -> str:
    return f"{module.name}::{fn.name}"


def as_workspace(workspace) -> Workspace:
    return workspace if isinstance(workspace, Workspace) else Workspace(workspace)


def resolve_target(workspace, path: str) -> Tuple[A.SourceModule, A.FunctionDef]:
    ws = as_workspace(workspace)
    parts = path.split("::")
    if len(parts) == 3:
        m = ws.find(parts[0], parts[1])
    elif len(parts) == 2:
        m = ws.find(None, parts[0])
    else:
        raise TargetNotFound(f"malformed function path '{path}' (expected module::function)")
    fn = m.function(parts[-1]) if m is not None else None
    if fn is None:
        raise TargetNotFound(f"function '{path}' not found in workspace")
    return m, fn


@dataclass(frozen=True)
class DependencyClosure:
    target: str
    module: A.SourceModule
    function: A.FunctionDef
    callees: Tuple[A.FunctionDef, ...]
    callee_paths: Tuple[str, ...]
    callee_modules: Tuple[A.SourceModule, ...]
    structs: Tuple[A.StructDef, ...]
    struct_paths: Tuple[str, ...]
    constants: Tuple[A.ConstDef, ...]
    constant_paths: Tuple[str, ...]
    call_graph: Dict[str, Tuple[str, ...]]
    external: Tuple[str, ...] = ()
    natives: Tuple[str, ...] = ()
    cycles: Tuple[Tuple[str, ...], ...] = ()
    workspace: Optional[Workspace] = field(default=None, compare=False, repr=False)

    @property
    def cyclic(self) -> bool:
        return bool(self.cycles)

    def callee(self, path: str) -> Tuple[A.SourceModule, A.FunctionDef]:
        i = self.callee_paths.index(path)
        return self.callee_modules[i], self.callees[i]


def _calls(fn: A.FunctionDef) -> List[A.Call]:
    if fn.body is None:
        return []
    return [n for n in A.walk(fn.body) if isinstance(n, A.Call)]


def direct_callees(ws: Workspace, module: A.SourceModule, fn: A.FunctionDef):
    """Yield (path, module-or-None, fn-or-None) per distinct call target, in
    first-occurrence order."""
    scope = Scope(module, ws)
    seen = set()
    out = []
    for call in _calls(fn):
        status, m, callee = scope.resolve_call(call)
        if callee is not None:
            path = fn_path(m, callee)
        elif status == "external":
            _, mname, _ = scope.resolve_module(call.module) if call.module else (None, None, None)
            if mname is None and call.name in scope.member_alias:
                mname = scope.member_alias[call.name][1]
                path = f"{mname}::{scope.member_alias[call.name][2]}"
            else:
                path = f"{mname or call.module}::{call.name}"
        else:
            path = call.path
        if path not in seen:
            seen.add(path)
            out.append((path, m if callee is not None else None, callee))
    return out


def call_graph(workspace) -> Dict[str, Tuple[str, ...]]:
    ws = as_workspace(workspace)
    g: Dict[str, Tuple[str, ...]] = {}
    for m in ws.modules:
        for f in m.functions:
            g[fn_path(m, f)] = tuple(p for p, _, _ in direct_callees(ws, m, f))
    return g


def _referenced_structs(scope: Scope, fn: A.FunctionDef) -> List[A.StructType]:
    out: List[A.StructType] = []
    roots: List[A.Node] = [p.type for p in fn.params]
    if fn.return_type is not None:
        roots.append(fn.return_type)
    for a in fn.acquires:
        mod, _, base = a.rpartition("::")
        roots.append(A.StructType(base, mod or None))
    if fn.body is not None:
        roots.append(fn.body)
    for r in roots:
        for n in A.walk(r):
            st = None
            if isinstance(n, A.StructType):
                st = n
            elif isinstance(n, (A.BorrowGlobal, A.Exists, A.MoveFrom, A.Pack, A.PStruct, A.Global)):
                st = n.struct
            elif isinstance(n, A.MoveTo) and n.struct is not None:
                st = n.struct
            if st is not None:
                out.append(scope.qualify(st)[0])
    return out


def _referenced_constants(module: A.SourceModule, fn: A.FunctionDef) -> List[str]:
    if fn.body is None:
        return []
    names = {c.name for c in module.constants}
    locals_ = {p.name for p in fn.params}
    for n in A.walk(fn.body):
        if isinstance(n, A.Let):
            locals_.update(A.pattern_names(n.pattern))
    out = []
    for n in A.walk(fn.body):
        if isinstance(n, A.Name) and n.name in names and n.name not in locals_ and n.name not in out:
            out.append(n.name)
    return out


def slice(workspace, target: str) -> DependencyClosure:
    """Transitive callees (callees first), structs and constants of ``target``."""
    ws = as_workspace(workspace)
    tmod, tfn = resolve_target(ws, target)
    tpath = fn_path(tmod, tfn)

    order: List[str] = []
    info: Dict[str, Tuple[A.SourceModule, A.FunctionDef]] = {tpath: (tmod, tfn)}
    graph: Dict[str, Tuple[str, ...]] = {}
    external: List[str] = []
    cycles: List[Tuple[str, ...]] = []
    state: Dict[str, int] = {}  # 1 = on stack, 2 = done
    stack: List[str] = []

    def visit(path: str) -> None:
        state[path] = 1
        stack.append(path)
        m, f = info[path]
        succ = []
        for cpath, cm, cf in direct_callees(ws, m, f):
            succ.append(cpath)
            if cf is None:
                if cpath not in external:
                    external.append(cpath)
                continue
            info.setdefault(cpath, (cm, cf))
            st = state.get(cpath)
            if st is None:
                visit(cpath)
            elif st == 1:
                cycles.append(tuple(stack[stack.index(cpath):]) + (cpath,))
        graph[path] = tuple(succ)
        stack.pop()
        state[path] = 2
        order.append(path)

    visit(tpath)
    callee_paths = [p for p in order if p != tpath]

    fns = [(tmod, tfn)] + [info[p] for p in callee_paths]
    struct_keys: List[str] = []
    pending: List[A.StructType] = []
    for m, f in fns:
        pending.extend(_referenced_structs(Scope(m, ws), f))
    while pending:
        st = pending.pop(0)
        key = st.qualified
        if key in struct_keys:
            continue
        owner = ws.by_key.get(st.module or "")
        sd = owner.struct(st.name) if owner is not None else None
        if sd is None:
            continue
        struct_keys.append(key)
        scope = Scope(owner, ws)
        for _, ft in sd.fields:
            for n in A.walk(ft):
                if isinstance(n, A.StructType):
                    pending.append(scope.qualify(n)[0])
    # stable output order: workspace module order, then definition order
    structs, struct_paths = [], []
    for m in ws.modules:
        for s in m.structs:
            if f"{module_key(m)}::{s.name}" in struct_keys:
                structs.append(s)
                struct_paths.append(f"{m.name}::{s.name}")

    const_keys = set()
    for m, f in fns:
        for c in _referenced_constants(m, f):
            const_keys.add((module_key(m), c))
    consts, const_paths = [], []
    for m in ws.modules:
        for c in m.constants:
            if (module_key(m), c.name) in const_keys:
                consts.append(c)
                const_paths.append(f"{m.name}::{c.name}")

    natives = tuple(p for p in callee_paths if info[p][1].is_native)
    return DependencyClosure(
        target=tpath,
        module=tmod,
        function=tfn,
        callees=tuple(info[p][1] for p in callee_paths),
        callee_paths=tuple(callee_paths),
        callee_modules=tuple(info[p][0] for p in callee_paths),
        structs=tuple(structs),
        struct_paths=tuple(struct_paths),
        constants=tuple(consts),
        constant_paths=tuple(const_paths),
        call_graph=graph,
        external=tuple(external),
        natives=natives,
        cycles=tuple(cycles),
        workspace=ws,
    )


def reachable(graph: Dict[str, Sequence[str]], start: str) -> set:
    """Plain DFS reachability, excluding ``start`` unless it lies on a cycle."""
    seen = set()
    todo = list(graph.get(start, ()))
    while todo:
        n = todo.pop()
        if n in seen:
            continue
        seen.add(n)
        todo.extend(graph.get(n, ()))
    return seen


# ------------------------------------------------------------ targets


def _verify_disabled(pragmas: Iterable[A.Pragma]) -> bool:
    for p in pragmas:
        if p.name == "verify" and isinstance(p.value, A.BoolLit) and not p.value.value:
            return True
    return False


def select_targets(workspace) -> List[str]:
    """Functions eligible for generation: not native, not marked unverified,
    not test-only."""
    ws = as_workspace(workspace)
    out = []
    for m in ws.modules:
        if _verify_disabled(m.module_pragmas):
            continue
        for f in m.functions:
            if f.is_native or "#test" in f.attrs or "#test_only" in f.attrs:
                continue
            block = m.spec_for(f.name)
            if block is not None and _verify_disabled(block.pragmas):
                continue
            out.append(fn_path(m, f))
    return out


# ------------------------------------------------------------ context


@dataclass(frozen=True)
class ContextMetadata:
    has_loops: bool
    has_global_mut: bool
    callee_count: int


@dataclass(frozen=True)
class GenerationContext:
    mode: ContextMode
    target: str
    target_source: str
    dependencies: Tuple[Tuple[str, str], ...]  # (label, canonical source)
    metadata: ContextMetadata
    function: A.FunctionDef = field(compare=False, repr=False)
    module: A.SourceModule = field(compare=False, repr=False)
    notes: Tuple[str, ...] = ()

    @property
    def dependency_sources(self) -> List[str]:
        return [src for _, src in self.dependencies]

    @property
    def fn_name(self) -> str:
        return self.function.name

    def render(self) -> str:
        """Prompt-ready text: header notes, the target, then its dependencies."""
        lines = [f"// target: {self.target} (context {self.mode.value})"]
        lines += [f"// note: {n}" for n in self.notes]
        lines.append(f"module {self.module.address}::{self.module.name} {{")
        lines.append(_indent(self.target_source))
        lines.append("}")
        if self.dependencies:
            lines.append("")
            lines.append("// dependencies")
            for label, src in self.dependencies:
                lines.append(f"// from {label}")
                lines.append(src)
        return "\n".join(lines) + "\n"


def _indent(text: str) -> str:
    return "\n".join(("    " + l) if l else l for l in text.splitlines())


def _has(node: Optional[A.Node], kind) -> bool:
    return node is not None and any(isinstance(n, kind) for n in A.walk(node))


def _has_global_mut(fn: A.FunctionDef) -> bool:
    return fn.body is not None and any(
        isinstance(n, A.BorrowGlobal) and n.mut for n in A.walk(fn.body))


def build_context(closure: DependencyClosure, mode: ContextMode, inlined=None) -> GenerationContext:
    """Assemble the agent context. ``inlined`` is the inliner's report and is
    required for V1."""
    mode = ContextMode(mode)
    notes: List[str] = []
    if mode is ContextMode.V1:
        if inlined is None:
            raise ValueError("V1 context requires the inliner's report")
        fn = inlined.result
        done = set(inlined.inlined)
        listed = [(p, m, f) for p, m, f in zip(closure.callee_paths, closure.callee_modules, closure.callees)
                  if p not in done]
        if inlined.inlined:
            notes.append("inlined: " + ", ".join(inlined.inlined))
        for p, reason in inlined.skipped:
            notes.append(f"not inlined: {p} ({reason})")
    else:
        fn = closure.function
        listed = list(zip(closure.callee_paths, closure.callee_modules, closure.callees))
    if closure.external:
        notes.append("outside workspace, no source available: " + ", ".join(closure.external))
    if closure.cyclic:
        notes.append("recursive call cycle: " + "; ".join(" -> ".join(c) for c in closure.cycles))

    deps: List[Tuple[str, str]] = []
    for path, sd in zip(closure.struct_paths, closure.structs):
        deps.append((path, print_struct(sd)))
    for path, c in zip(closure.constant_paths, closure.constants):
        deps.append((path, print_const(c)))
    for path, m, f in listed:
        deps.append((path, print_function(f)))

    has_mut = _has_global_mut(fn) or any(_has_global_mut(f) for _, _, f in listed)
    meta = ContextMetadata(
        has_loops=_has(fn.body, A.While),
        has_global_mut=has_mut,
        callee_count=len(listed),
    )
    return GenerationContext(mode, closure.target, print_function(fn), tuple(deps), meta,
                             fn, closure.module, tuple(notes))


# ------------------------------------------------------------- report


def analyze_report(closure: DependencyClosure) -> str:
    out = [f"target: {closure.target}"]

    def section(title: str, items: Sequence[str]) -> None:
        out.append(f"{title}:" + ("" if items else " (none)"))
        out.extend(f"  {i}" for i in items)

    section("callees (callees first)", closure.callee_paths)
    section("native (signature only)", closure.natives)
    section("external (outside workspace)", closure.external)
    section("structs", closure.struct_paths)
    section("constants", closure.constant_paths)
    out.append("call graph:")
    for k in [closure.target, *closure.callee_paths]:
        succ = closure.call_graph.get(k, ())
        out.append(f"  {k} -> {', '.join(succ) if succ else '(none)'}")
    out.append("cycles: " + ("; ".join(" -> ".join(c) for c in closure.cycles) if closure.cycles else "none"))
    return "\n".join(out) + "\n"
