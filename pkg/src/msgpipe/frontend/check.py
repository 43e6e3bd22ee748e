"""Name resolution, arity, typing and acquires checks for the Move subset."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import ast as A

# Diagnostic codes
UNBOUND_NAME = "UnboundName"
UNBOUND_FUNCTION = "UnboundFunction"
UNBOUND_STRUCT = "UnboundStruct"
ARITY = "ArityMismatch"
TYPE = "TypeMismatch"
MISSING_ACQUIRES = "MissingAcquires"
FOREIGN_GLOBAL = "ForeignGlobalAccess"
PRIVATE_CALL = "PrivateCall"
UNKNOWN_FIELD = "UnknownField"
DUPLICATE = "DuplicateName"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    span: A.Span = A.NO_SPAN
    severity: str = "error"
    module: str = ""
    function: str = ""

    def format(self, file: str = "<input>") -> str:
        return f"{file}:{self.span.line}:{self.span.col}: {self.severity}: [{self.code}] {self.message}"


# ------------------------------------------------------------- types


class _Special:
    def __init__(self, name: str):
        self.name = name

    def __repr__(self) -> str:
        return self.name


ANY = _Special("any")  # unknown; unifies with everything
NEVER = _Special("never")  # diverging expression
INT = _Special("integer")  # unsuffixed literal or spec arithmetic
UNIT = A.TupleType(())
BOOL = A.PrimType("bool")
ADDRESS = A.PrimType("address")
U8 = A.PrimType("u8")
U64 = A.PrimType("u64")

_SPEC_CONSTS = {
    "MAX_U8": U8, "MAX_U16": A.PrimType("u16"), "MAX_U32": A.PrimType("u32"),
    "MAX_U64": U64, "MAX_U128": A.PrimType("u128"), "MAX_U256": A.PrimType("u256"),
}
_ARITH = {"+", "-", "*", "/", "%", "&", "|", "^"}
_CMP = {"<", ">", "<=", ">="}


def _is_int(t) -> bool:
    return t is INT or (isinstance(t, A.PrimType) and t.name in A.INT_TYPES)


def show(t) -> str:
    if isinstance(t, _Special):
        return t.name
    if isinstance(t, A.PrimType):
        return t.name
    if isinstance(t, A.VectorType):
        return f"vector<{show(t.elem)}>"
    if isinstance(t, A.StructType):
        return t.name
    if isinstance(t, A.RefType):
        return ("&mut " if t.mut else "&") + show(t.inner)
    if isinstance(t, A.TupleType):
        return "(" + ", ".join(show(e) for e in t.elems) + ")"
    return str(t)


def unify(a, b, spec: bool = False):
    """Return the common type of ``a`` and ``b`` or None when they clash."""
    if a is ANY or a is NEVER:
        return b
    if b is ANY or b is NEVER:
        return a
    if a is INT or b is INT:
        if _is_int(a) and _is_int(b):
            return b if a is INT else a
        return None
    if spec and _is_int(a) and _is_int(b):
        return a
    if type(a) is not type(b):
        return None
    if isinstance(a, A.PrimType):
        return a if a.name == b.name else None
    if isinstance(a, A.VectorType):
        e = unify(a.elem, b.elem, spec)
        return None if e is None else A.VectorType(e)
    if isinstance(a, A.StructType):
        return a if (a.name, a.module) == (b.name, b.module) else None
    if isinstance(a, A.RefType):
        # a mutable reference may be used where an immutable one is expected
        inner = unify(a.inner, b.inner, spec)
        if inner is None:
            return None
        return A.RefType(a.mut and b.mut, inner)
    if isinstance(a, A.TupleType):
        if len(a.elems) != len(b.elems):
            return None
        out = []
        for x, y in zip(a.elems, b.elems):
            u = unify(x, y, spec)
            if u is None:
                return None
            out.append(u)
        return A.TupleType(tuple(out))
    return None


# ---------------------------------------------------------- workspace


def module_key(m) -> str:
    return f"{m.address}::{m.name}"


class Workspace:
    """Module lookup shared by the checker, the slicer and the inliner."""

    def __init__(self, modules: Iterable[A.SourceModule]):
        self.modules: List[A.SourceModule] = list(modules)
        self.by_key: Dict[str, A.SourceModule] = {module_key(m): m for m in self.modules}
        self.by_name: Dict[str, List[A.SourceModule]] = {}
        for m in self.modules:
            self.by_name.setdefault(m.name, []).append(m)

    def find(self, address: Optional[str], name: str) -> Optional[A.SourceModule]:
        if address is not None and f"{address}::{name}" in self.by_key:
            return self.by_key[f"{address}::{name}"]
        cands = self.by_name.get(name, [])
        return cands[0] if len(cands) == 1 else None

    def replace(self, module: A.SourceModule) -> "Workspace":
        key = module_key(module)
        return Workspace(module if module_key(m) == key else m for m in self.modules)


class Scope:
    """Resolves names and paths as seen from inside one module."""

    def __init__(self, module: A.SourceModule, ws: Workspace):
        self.module = module
        self.ws = ws
        self.key = module_key(module)
        # alias -> (address, module name)
        self.module_alias: Dict[str, Tuple[str, str]] = {}
        # local name -> (address, module, member)
        self.member_alias: Dict[str, Tuple[str, str, str]] = {}
        for u in module.uses:
            if u.member is None:
                self.module_alias[u.alias or u.module] = (u.address, u.module)
            elif u.member == "Self":
                self.module_alias[u.alias or u.module] = (u.address, u.module)
            else:
                self.member_alias[u.alias or u.member] = (u.address, u.module, u.member)

    def resolve_module(self, qualifier: str) -> Tuple[Optional[str], Optional[str], Optional[A.SourceModule]]:
        """Map a path qualifier to (address, name, module-if-loaded)."""
        if qualifier == self.module.name or qualifier == "Self":
            return self.module.address, self.module.name, self.module
        if qualifier in self.module_alias:
            addr, name = self.module_alias[qualifier]
            return addr, name, self.ws.find(addr, name)
        return None, None, None

    def resolve_call(self, call: A.Call):
        """Return (status, module, function) where status is one of
        "local", "foreign", "external", "unbound-module", "unbound"."""
        if call.module is None:
            fn = self.module.function(call.name)
            if fn is not None:
                return "local", self.module, fn
            if call.name in self.member_alias:
                addr, mname, member = self.member_alias[call.name]
                m = self.ws.find(addr, mname)
                if m is None:
                    return "external", None, None
                fn = m.function(member)
                return ("foreign" if fn else "unbound"), m, fn
            return "unbound", None, None
        addr, mname, m = self.resolve_module(call.module)
        if mname is None:
            return "unbound-module", None, None
        if m is None:
            return "external", None, None
        fn = m.function(call.name)
        if fn is None:
            return "unbound", m, None
        return ("local" if m is self.module else "foreign"), m, fn

    def qualify(self, st: A.StructType) -> Tuple[A.StructType, Optional[A.StructDef], bool]:
        """Normalize a struct reference. Returns (type, def, is_local)."""
        if st.module is None:
            if self.module.struct(st.name) is not None:
                return A.StructType(st.name, self.key), self.module.struct(st.name), True
            if st.name in self.member_alias:
                addr, mname, member = self.member_alias[st.name]
                m = self.ws.find(addr, mname)
                key = f"{addr}::{mname}"
                return A.StructType(member, key), (m.struct(member) if m else None), False
            return A.StructType(st.name, self.key), None, True
        addr, mname, m = self.resolve_module(st.module)
        if mname is None:
            return A.StructType(st.name, st.module), None, False
        key = f"{addr}::{mname}"
        local = m is self.module
        return A.StructType(st.name, key), (m.struct(st.name) if m else None), local

    def norm_type(self, t: Optional[A.Type]):
        if t is None:
            return UNIT
        if isinstance(t, A.PrimType):
            return A.PrimType(t.name)
        if isinstance(t, A.VectorType):
            return A.VectorType(self.norm_type(t.elem))
        if isinstance(t, A.RefType):
            return A.RefType(t.mut, self.norm_type(t.inner))
        if isinstance(t, A.TupleType):
            return A.TupleType(tuple(self.norm_type(e) for e in t.elems))
        return self.qualify(t)[0]


# ------------------------------------------------------------ checker


class _FnChecker:
    def __init__(self, scope: Scope, fn: Optional[A.FunctionDef], out: List[Diagnostic],
                 spec: bool = False, spec_funs: Sequence[A.SpecFun] = ()):
        self.scope = scope
        self.fn = fn
        self.out = out
        self.spec = spec
        self.spec_funs = {f.name: f for f in spec_funs}
        self.vars: List[Dict[str, object]] = [{}]
        self.types: Dict[int, object] = {}
        self.ret = scope.norm_type(fn.return_type) if fn is not None else ANY
        self.acquires = set()
        if fn is not None:
            for a in fn.acquires:
                self.acquires.add(self._acq_key(a))
            for p in fn.params:
                self.vars[0][p.name] = scope.norm_type(p.type)

    def _acq_key(self, name: str) -> str:
        mod, _, base = name.rpartition("::")
        st = A.StructType(base, mod or None)
        q, _, _ = self.scope.qualify(st)
        return q.qualified

    # -- reporting

    def err(self, code: str, message: str, node: A.Node) -> None:
        self.out.append(Diagnostic(code, message, node.span, "error", self.scope.key,
                                   self.fn.name if self.fn else ""))

    def expect(self, node: A.Node, got, want, what: str):
        u = unify(got, want, self.spec)
        if u is None:
            self.err(TYPE, f"{what}: expected {show(want)}, found {show(got)}", node)
            return ANY
        return u

    # -- scopes

    def lookup(self, name: str):
        for frame in reversed(self.vars):
            if name in frame:
                return frame[name]
        return None

    def bind(self, name: str, t) -> None:
        self.vars[-1][name] = t

    # -- structs

    def struct_def(self, st: A.StructType, node: A.Node, need_key: bool = False,
                   global_op: bool = False):
        q, sd, local = self.scope.qualify(st)
        if global_op and not local:
            self.err(FOREIGN_GLOBAL,
                     f"global storage of '{st.qualified}' can only be accessed by its defining module", node)
            return q, sd
        if sd is None:
            if local or st.module is None:
                self.err(UNBOUND_STRUCT, f"unbound struct '{st.qualified}'", node)
            return q, None
        if need_key and "key" not in sd.abilities:
            self.err(TYPE, f"struct '{st.name}' lacks the 'key' ability", node)
        return q, sd

    def field_type(self, sd: Optional[A.StructDef], owner: A.StructType, field: str, node: A.Node):
        if sd is None:
            return ANY
        for fname, ftype in sd.fields:
            if fname == field:
                m = self.scope.ws.by_key.get(owner.module or "")
                scope = Scope(m, self.scope.ws) if m is not None and m is not self.scope.module else self.scope
                return scope.norm_type(ftype)
        self.err(UNKNOWN_FIELD, f"struct '{sd.name}' has no field '{field}'", node)
        return ANY

    def lookup_struct(self, t: A.StructType) -> Optional[A.StructDef]:
        m = self.scope.ws.by_key.get(t.module or "")
        if m is None and t.module == self.scope.key:
            m = self.scope.module
        return m.struct(t.name) if m is not None else None

    def require_acquire(self, q: A.StructType, node: A.Node, what: str) -> None:
        if self.spec or self.fn is None:
            return
        if q.qualified not in self.acquires:
            self.err(MISSING_ACQUIRES,
                     f"'{what}' of '{q.name}' requires 'acquires {q.name}' on '{self.fn.name}'", node)

    # -- statements

    def block(self, b: A.Block):
        self.vars.append({})
        diverges = False
        for s in b.stmts:
            t = self.stmt(s)
            if t is NEVER:
                diverges = True
        if b.tail is not None:
            t = self.expr(b.tail)
        else:
            t = NEVER if diverges else UNIT
        self.vars.pop()
        return t

    def stmt(self, s: A.Stmt):
        if isinstance(s, A.Let):
            want = self.scope.norm_type(s.type) if s.type is not None else None
            got = self.expr(s.value) if s.value is not None else (want or ANY)
            if want is not None:
                got = self.expect(s, got, want, "let annotation")
            self.bind_pattern(s.pattern, got, s)
            return got if got is NEVER else UNIT
        if isinstance(s, A.Assign):
            vt = self.expr(s.value)
            target = s.target
            if isinstance(target, A.Name):
                tt = self.lookup(target.name)
                if tt is None:
                    self.err(UNBOUND_NAME, f"unbound variable '{target.name}'", target)
                    return UNIT
            elif isinstance(target, A.Deref):
                rt = self.expr(target.expr)
                if isinstance(rt, A.RefType):
                    if not rt.mut:
                        self.err(TYPE, "cannot assign through an immutable reference", target)
                    tt = rt.inner
                else:
                    if rt is not ANY:
                        self.err(TYPE, f"dereference of non-reference type {show(rt)}", target)
                    tt = ANY
            else:
                tt = self.expr(target)
            self.expect(s.value, vt, tt, "assignment")
            return UNIT
        return self.expr(s.expr)

    def bind_pattern(self, p: A.Pattern, t, node: A.Node) -> None:
        if isinstance(p, A.PVar):
            self.bind(p.name, INT_DEFAULT(t))
            return
        if isinstance(p, A.PTuple):
            if isinstance(t, A.TupleType) and len(t.elems) == len(p.names):
                for n, et in zip(p.names, t.elems):
                    self.bind(n, INT_DEFAULT(et))
                return
            if t is not ANY and t is not NEVER:
                self.err(TYPE, f"cannot destructure {show(t)} into {len(p.names)} names", node)
            for n in p.names:
                self.bind(n, ANY)
            return
        q, sd = self.struct_def(p.struct, p)
        if t is not ANY and t is not NEVER and unify(t, q) is None:
            self.err(TYPE, f"cannot unpack {show(t)} as '{p.struct.name}'", node)
        for f, binder in p.fields:
            self.bind(binder, self.field_type(sd, q, f, p))

    # -- expressions

    def expr(self, e: A.Expr):
        t = self._expr(e)
        if e.nid:
            self.types[e.nid] = t
        return t

    def _expr(self, e: A.Expr):
        if isinstance(e, A.IntLit):
            return A.PrimType(e.suffix) if e.suffix else INT
        if isinstance(e, A.BoolLit):
            return BOOL
        if isinstance(e, A.AddressLit):
            return ADDRESS
        if isinstance(e, A.BytesLit):
            return A.VectorType(U8)
        if isinstance(e, A.VectorLit):
            et = self.scope.norm_type(e.elem_type) if e.elem_type is not None else ANY
            for x in e.elems:
                et = self.expect(x, self.expr(x), et, "vector element")
            return A.VectorType(et)
        if isinstance(e, A.Name):
            return self.name(e)
        if isinstance(e, A.Call):
            return self.call(e)
        if isinstance(e, A.BorrowGlobal):
            q, _ = self.struct_def(e.struct, e, need_key=True, global_op=True)
            self.expect(e.addr, self.expr(e.addr), ADDRESS, "global address")
            self.require_acquire(q, e, "borrow_global_mut" if e.mut else "borrow_global")
            return A.RefType(e.mut, q)
        if isinstance(e, A.Exists):
            self.struct_def(e.struct, e, need_key=True, global_op=not self.spec)
            self.expect(e.addr, self.expr(e.addr), ADDRESS, "global address")
            return BOOL
        if isinstance(e, A.Global):
            q, _ = self.struct_def(e.struct, e, need_key=True)
            self.expect(e.addr, self.expr(e.addr), ADDRESS, "global address")
            return q
        if isinstance(e, A.Old):
            return self.expr(e.expr)
        if isinstance(e, A.MoveFrom):
            q, _ = self.struct_def(e.struct, e, need_key=True, global_op=True)
            self.expect(e.addr, self.expr(e.addr), ADDRESS, "global address")
            self.require_acquire(q, e, "move_from")
            return q
        if isinstance(e, A.MoveTo):
            self.expect(e.signer, self.expr(e.signer), A.RefType(False, A.PrimType("signer")), "move_to signer")
            vt = self.expr(e.value)
            if e.struct is not None:
                q, _ = self.struct_def(e.struct, e, need_key=True, global_op=True)
                self.expect(e.value, vt, q, "move_to value")
            elif isinstance(vt, A.StructType):
                sd = self.lookup_struct(vt)
                if vt.module != self.scope.key:
                    self.err(FOREIGN_GLOBAL, f"move_to of foreign struct '{vt.name}'", e)
                elif sd is not None and "key" not in sd.abilities:
                    self.err(TYPE, f"struct '{vt.name}' lacks the 'key' ability", e)
            elif vt is not ANY:
                self.err(TYPE, f"move_to value must be a struct, found {show(vt)}", e)
            return UNIT
        if isinstance(e, A.Assert):
            self.expect(e.cond, self.expr(e.cond), BOOL, "assert condition")
            self.expect(e.code, self.expr(e.code), U64, "abort code")
            return UNIT
        if isinstance(e, A.Abort):
            self.expect(e.code, self.expr(e.code), U64, "abort code")
            return NEVER
        if isinstance(e, A.Return):
            t = self.expr(e.value) if e.value is not None else UNIT
            self.expect(e, t, self.ret, "return value")
            return NEVER
        if isinstance(e, (A.Break, A.Continue)):
            return NEVER
        if isinstance(e, A.BinOp):
            return self.binop(e)
        if isinstance(e, A.UnOp):
            self.expect(e.operand, self.expr(e.operand), BOOL, "operand of '!'")
            return BOOL
        if isinstance(e, A.Deref):
            t = self.expr(e.expr)
            if isinstance(t, A.RefType):
                return t.inner
            if t is not ANY:
                self.err(TYPE, f"dereference of non-reference type {show(t)}", e)
            return ANY
        if isinstance(e, A.Borrow):
            t = self.expr(e.expr)
            if isinstance(t, A.RefType):
                # borrowing a field through a reference yields a reference to the field
                return A.RefType(e.mut, t.inner)
            return A.RefType(e.mut, t)
        if isinstance(e, A.Cast):
            t = self.expr(e.expr)
            if not _is_int(t) and t is not ANY:
                self.err(TYPE, f"cannot cast {show(t)}", e)
            return self.scope.norm_type(e.type)
        if isinstance(e, A.FieldAccess):
            return self.field_access(e)
        if isinstance(e, A.Pack):
            return self.pack(e)
        if isinstance(e, A.TupleExpr):
            return A.TupleType(tuple(INT_DEFAULT(self.expr(x)) for x in e.elems))
        if isinstance(e, A.If):
            self.expect(e.cond, self.expr(e.cond), BOOL, "if condition")
            tt = self.expr(e.then)
            if e.else_ is None:
                return UNIT
            et = self.expr(e.else_)
            u = unify(tt, et, self.spec)
            if u is None:
                self.err(TYPE, f"if branches differ: {show(tt)} vs {show(et)}", e)
                return ANY
            return u
        if isinstance(e, A.While):
            self.expect(e.cond, self.expr(e.cond), BOOL, "while condition")
            self.block(e.body)
            if e.invariants:
                old, self.spec = self.spec, True
                for inv in e.invariants:
                    self.expect(inv, self.expr(inv), BOOL, "loop invariant")
                self.spec = old
            return UNIT
        if isinstance(e, A.Block):
            return self.block(e)
        return ANY

    def name(self, e: A.Name):
        t = self.lookup(e.name)
        if t is not None:
            return t
        c = self.scope.module.constant(e.name)
        if c is not None:
            return self.scope.norm_type(c.type)
        if self.spec and e.name in _SPEC_CONSTS:
            return _SPEC_CONSTS[e.name]
        self.err(UNBOUND_NAME, f"unbound name '{e.name}'", e)
        return ANY

    def field_access(self, e: A.FieldAccess):
        t = self.expr(e.expr)
        base = t.inner if isinstance(t, A.RefType) else t
        if base is ANY:
            return ANY
        if not isinstance(base, A.StructType):
            self.err(TYPE, f"field access '.{e.field}' on non-struct {show(t)}", e)
            return ANY
        sd = self.lookup_struct(base)
        return self.field_type(sd, base, e.field, e)

    def pack(self, e: A.Pack):
        q, sd = self.struct_def(e.struct, e)
        if not self.spec and sd is not None and q.module != self.scope.key:
            self.err(TYPE, f"cannot pack foreign struct '{e.struct.name}'", e)
        given = set()
        for f, v in e.fields:
            vt = self.expr(v)
            if f in given:
                self.err(DUPLICATE, f"field '{f}' given twice", e)
            given.add(f)
            ft = self.field_type(sd, q, f, e)
            self.expect(v, vt, ft, f"field '{f}'")
        if sd is not None:
            missing = [f for f, _ in sd.fields if f not in given]
            if missing:
                self.err(ARITY, f"missing fields in '{e.struct.name}': {', '.join(missing)}", e)
        return q

    def binop(self, e: A.BinOp):
        op = e.op
        lt = self.expr(e.lhs)
        rt = self.expr(e.rhs)
        if op in ("&&", "||", "==>", "<==>"):
            self.expect(e.lhs, lt, BOOL, f"left operand of '{op}'")
            self.expect(e.rhs, rt, BOOL, f"right operand of '{op}'")
            return BOOL
        if op in ("==", "!="):
            a = lt.inner if self.spec and isinstance(lt, A.RefType) else lt
            b = rt.inner if self.spec and isinstance(rt, A.RefType) else rt
            if unify(a, b, self.spec) is None:
                self.err(TYPE, f"cannot compare {show(lt)} with {show(rt)}", e)
            return BOOL
        if op in ("<<", ">>"):
            self._int_operand(e.lhs, lt, op)
            self.expect(e.rhs, rt, U8, f"shift amount of '{op}'")
            return lt
        if op in _ARITH or op in _CMP:
            ok = self._int_operand(e.lhs, lt, op) & self._int_operand(e.rhs, rt, op)
            u = unify(lt, rt, self.spec) if ok else ANY
            if u is None:
                self.err(TYPE, f"operands of '{op}' differ: {show(lt)} vs {show(rt)}", e)
                u = ANY
            return BOOL if op in _CMP else u
        return ANY

    def _int_operand(self, node, t, op) -> bool:
        if not (_is_int(t) or t is ANY or t is NEVER):
            self.err(TYPE, f"operand of '{op}' must be an integer, found {show(t)}", node)
            return False
        return True

    def call(self, e: A.Call):
        arg_types = [self.expr(a) for a in e.args]
        if self.spec and e.module is None:
            if e.name == "len" and len(e.args) == 1:
                if not isinstance(arg_types[0], A.VectorType) and arg_types[0] is not ANY:
                    self.err(TYPE, f"len of non-vector {show(arg_types[0])}", e)
                return U64
            sf = self.spec_funs.get(e.name)
            if sf is not None:
                self._check_args(e, sf.params, arg_types, e.name)
                return self.scope.norm_type(sf.return_type) if sf.return_type else ANY
        status, mod, fn = self.scope.resolve_call(e)
        if status == "external":
            return ANY
        if status == "unbound-module":
            self.err(UNBOUND_NAME, f"unbound module '{e.module}'", e)
            return ANY
        if status == "unbound" or fn is None:
            self.err(UNBOUND_FUNCTION, f"unbound function '{e.path}'", e)
            return ANY
        if status == "foreign" and fn.visibility == "private" and not self.spec:
            self.err(PRIVATE_CALL, f"function '{e.path}' is private to its module", e)
        fscope = self.scope if status == "local" else Scope(mod, self.scope.ws)
        self._check_args(e, fn.params, arg_types, e.path, fscope)
        if status == "local" and not self.spec and self.fn is not None:
            for a in fn.acquires:
                q = self._acq_key(a)
                if q not in self.acquires:
                    name = q.rpartition("::")[2]
                    self.err(MISSING_ACQUIRES,
                             f"call to '{fn.name}' acquires '{name}'; add 'acquires {name}' to '{self.fn.name}'", e)
        return fscope.norm_type(fn.return_type)

    def _check_args(self, e: A.Call, params, arg_types, name, scope: Optional[Scope] = None) -> None:
        scope = scope or self.scope
        if len(params) != len(arg_types):
            self.err(ARITY, f"'{name}' expects {len(params)} argument(s), got {len(arg_types)}", e)
            return
        for p, a, at in zip(params, e.args, arg_types):
            self.expect(a, at, scope.norm_type(p.type), f"argument '{p.name}' of '{name}'")


def INT_DEFAULT(t):
    """Unsuffixed integer literals default to u64 once bound."""
    return U64 if t is INT else t


# ---------------------------------------------------------- entry points


def check_function(module: A.SourceModule, fn: A.FunctionDef,
                   workspace: Optional[Iterable[A.SourceModule]] = None) -> List[Diagnostic]:
    ws = _workspace(module, workspace)
    out: List[Diagnostic] = []
    _check_fn(Scope(module, ws), fn, out)
    return out


def expression_types(module: A.SourceModule, fn: A.FunctionDef,
                     workspace: Optional[Iterable[A.SourceModule]] = None) -> Dict[int, object]:
    """Node id -> inferred type for every expression in ``fn``'s body."""
    ws = _workspace(module, workspace)
    c = _FnChecker(Scope(module, ws), fn, [])
    if fn.body is not None:
        c.block(fn.body)
    return c.types


def _workspace(module, workspace) -> Workspace:
    if workspace is None:
        return Workspace([module])
    if isinstance(workspace, Workspace):
        return workspace.replace(module) if module_key(module) in workspace.by_key else workspace
    mods = list(workspace)
    if not any(module_key(m) == module_key(module) for m in mods):
        mods.append(module)
    return Workspace(mods).replace(module)


def _check_fn(scope: Scope, fn: A.FunctionDef, out: List[Diagnostic]) -> None:
    c = _FnChecker(scope, fn, out)
    for a in fn.acquires:
        mod, _, base = a.rpartition("::")
        c.struct_def(A.StructType(base, mod or None), fn)
    if fn.body is None:
        return
    t = c.block(fn.body)
    c.expect(fn.body.tail if fn.body.tail is not None else fn, t, c.ret, f"body of '{fn.name}'")


def check_wellformed(module: A.SourceModule,
                     workspace: Optional[Iterable[A.SourceModule]] = None) -> List[Diagnostic]:
    """Return every finding for ``module``; empty means the module is well formed."""
    ws = _workspace(module, workspace)
    scope = Scope(module, ws)
    out: List[Diagnostic] = []
    key = module_key(module)

    def dup(items, what):
        seen = set()
        for it in items:
            if it.name in seen:
                out.append(Diagnostic(DUPLICATE, f"duplicate {what} '{it.name}'", it.span, module=key))
            seen.add(it.name)

    dup(module.functions, "function")
    dup(module.structs, "struct")
    dup(module.constants, "constant")

    for u in module.uses:
        if ws.find(u.address, u.module) is None:
            continue
        m = ws.find(u.address, u.module)
        if u.member not in (None, "Self") and m.function(u.member) is None and m.struct(u.member) is None:
            out.append(Diagnostic(UNBOUND_NAME, f"'{u.module}::{u.member}' does not exist", u.span, module=key))

    consts = _FnChecker(scope, None, out)
    for c in module.constants:
        consts.expect(c.value, consts.expr(c.value), scope.norm_type(c.type), f"constant '{c.name}'")
    for s in module.structs:
        for _, ft in s.fields:
            _check_type(scope, ft, s, out)
    for fn in module.functions:
        for p in fn.params:
            _check_type(scope, p.type, p, out, fn.name)
        _check_fn(scope, fn, out)

    mod_funs = list(module.spec_funs)
    for sf in mod_funs:
        _check_spec_fun(scope, sf, mod_funs, out)
    for block in module.spec_blocks:
        fn = module.function(block.target_fn)
        if fn is None:
            out.append(Diagnostic(UNBOUND_FUNCTION, f"spec block for unknown function '{block.target_fn}'",
                                  block.span, module=key))
            continue
        out.extend(check_spec_block(module, block, ws))
    return out


def _check_type(scope: Scope, t: A.Type, node: A.Node, out: List[Diagnostic], fn: str = "") -> None:
    for n in A.walk(t):
        if isinstance(n, A.StructType):
            q, sd, local = scope.qualify(n)
            if sd is None and (local or n.module is None):
                out.append(Diagnostic(UNBOUND_STRUCT, f"unbound struct '{n.qualified}'", node.span,
                                      module=scope.key, function=fn))


def _check_spec_fun(scope: Scope, sf: A.SpecFun, funs, out) -> None:
    if sf.body is None:
        return
    c = _FnChecker(scope, None, out, spec=True, spec_funs=funs)
    for p in sf.params:
        c.bind(p.name, scope.norm_type(p.type))
    t = c.expr(sf.body)
    if sf.return_type is not None:
        c.expect(sf.body, t, scope.norm_type(sf.return_type), f"body of spec fun '{sf.name}'")


def check_spec_block(module: A.SourceModule, block: A.SpecBlock,
                     workspace: Optional[Iterable[A.SourceModule]] = None) -> List[Diagnostic]:
    """Check names, arities and types inside one spec block."""
    ws = _workspace(module, workspace)
    scope = Scope(module, ws)
    out: List[Diagnostic] = []
    fn = module.function(block.target_fn)
    funs = list(module.spec_funs) + list(block.helper_funs)
    for sf in block.helper_funs:
        _check_spec_fun(scope, sf, funs, out)
    c = _FnChecker(scope, fn, out, spec=True, spec_funs=funs)
    if fn is not None:
        ret = scope.norm_type(fn.return_type)
        if isinstance(ret, A.TupleType) and ret.elems:
            for i, et in enumerate(ret.elems, 1):
                c.bind(f"result_{i}", et)
        elif ret != UNIT:
            c.bind("result", ret)
    seen = set()
    for b in block.bindings:
        if b.name in seen:
            c.err(DUPLICATE, f"duplicate binding '{b.name}'", b)
        seen.add(b.name)
        c.bind(b.name, INT_DEFAULT(c.expr(b.expr)))
    for cl in block.clauses:
        if cl.kind == "modifies":
            if not isinstance(cl.expr, A.Global):
                c.err(TYPE, "modifies target must be global<S>(addr)", cl)
                continue
            c.expr(cl.expr)
            continue
        c.expect(cl, c.expr(cl.expr), BOOL, f"{cl.kind} clause")
    return out


def diagnostics_for(diags: Iterable[Diagnostic], function: str) -> List[Diagnostic]:
    return [d for d in diags if d.function == function]
