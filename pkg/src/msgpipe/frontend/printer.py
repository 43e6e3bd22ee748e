"""Canonical pretty-printer: 4-space indent, one clause per line.

``parse(pretty_print(m))`` is structurally equal to ``m`` for any module
produced by the parser.
"""

from __future__ import annotations

from typing import List, Optional

from . import ast as A

IND = "    "

_PREC = {
    "==>": 1, "||": 2, "&&": 3,
    "==": 4, "!=": 4, "<": 4, ">": 4, "<=": 4, ">=": 4,
    "|": 5, "^": 6, "&": 7, "<<": 8, ">>": 8,
    "+": 9, "-": 9, "*": 10, "/": 10, "%": 10,
}
_UNARY_PREC = 11
_ATOM_PREC = 12
_CLAUSE_ORDER = {k: i for i, k in enumerate(A.CLAUSE_KINDS)}


def type_str(t: A.Type) -> str:
    if isinstance(t, A.PrimType):
        return t.name
    if isinstance(t, A.VectorType):
        return f"vector<{type_str(t.elem)}>"
    if isinstance(t, A.StructType):
        return t.qualified
    if isinstance(t, A.RefType):
        return ("&mut " if t.mut else "&") + type_str(t.inner)
    if isinstance(t, A.TupleType):
        return "(" + ", ".join(type_str(e) for e in t.elems) + ")"
    raise TypeError(f"not a type: {t!r}")


def _prec(e: A.Expr) -> int:
    if isinstance(e, A.BinOp):
        return _PREC[e.op]
    if isinstance(e, (A.UnOp, A.Deref, A.Borrow)):
        return _UNARY_PREC
    if isinstance(e, (A.If, A.While, A.Block, A.Return, A.Abort)):
        return 0
    return _ATOM_PREC


class _Printer:
    def __init__(self):
        self.lines: List[str] = []

    # ----------------------------------------------------------- exprs

    def expr(self, e: A.Expr, depth: int) -> str:
        if isinstance(e, A.IntLit):
            return f"{e.value}{e.suffix or ''}"
        if isinstance(e, A.BoolLit):
            return "true" if e.value else "false"
        if isinstance(e, A.AddressLit):
            return f"@{e.value}"
        if isinstance(e, A.BytesLit):
            return f'{e.kind}"{e.text}"'
        if isinstance(e, A.VectorLit):
            ty = f"<{type_str(e.elem_type)}>" if e.elem_type is not None else ""
            return f"vector{ty}[" + ", ".join(self.expr(x, depth) for x in e.elems) + "]"
        if isinstance(e, A.Name):
            return e.name
        if isinstance(e, A.Call):
            return f"{e.path}({self.args(e.args, depth)})"
        if isinstance(e, A.BorrowGlobal):
            fn = "borrow_global_mut" if e.mut else "borrow_global"
            return f"{fn}<{e.struct.qualified}>({self.expr(e.addr, depth)})"
        if isinstance(e, A.Exists):
            return f"exists<{e.struct.qualified}>({self.expr(e.addr, depth)})"
        if isinstance(e, A.Global):
            return f"global<{e.struct.qualified}>({self.expr(e.addr, depth)})"
        if isinstance(e, A.MoveFrom):
            return f"move_from<{e.struct.qualified}>({self.expr(e.addr, depth)})"
        if isinstance(e, A.Old):
            return f"old({self.expr(e.expr, depth)})"
        if isinstance(e, A.MoveTo):
            ty = f"<{e.struct.qualified}>" if e.struct is not None else ""
            return f"move_to{ty}({self.args((e.signer, e.value), depth)})"
        if isinstance(e, A.Assert):
            return f"assert!({self.args((e.cond, e.code), depth)})"
        if isinstance(e, A.Abort):
            return f"abort {self.expr(e.code, depth)}"
        if isinstance(e, A.Return):
            return "return" if e.value is None else f"return {self.expr(e.value, depth)}"
        if isinstance(e, A.Break):
            return "break"
        if isinstance(e, A.Continue):
            return "continue"
        if isinstance(e, A.BinOp):
            p = _PREC[e.op]
            lp, rp = _prec(e.lhs), _prec(e.rhs)
            right_assoc = e.op == "==>"
            non_assoc = p == 4
            lhs = self.expr(e.lhs, depth)
            rhs = self.expr(e.rhs, depth)
            if lp < p or (lp == p and (right_assoc or non_assoc)):
                lhs = f"({lhs})"
            if rp < p or (rp == p and not right_assoc):
                rhs = f"({rhs})"
            return f"{lhs} {e.op} {rhs}"
        if isinstance(e, (A.UnOp, A.Deref, A.Borrow)):
            inner = e.operand if isinstance(e, A.UnOp) else e.expr
            s = self.expr(inner, depth)
            if _prec(inner) < _UNARY_PREC:
                s = f"({s})"
            if isinstance(e, A.UnOp):
                return f"!{s}"
            if isinstance(e, A.Deref):
                return f"*{s}"
            return ("&mut " if e.mut else "&") + s
        if isinstance(e, A.Cast):
            return f"({self.expr(e.expr, depth)} as {type_str(e.type)})"
        if isinstance(e, A.FieldAccess):
            s = self.expr(e.expr, depth)
            if _prec(e.expr) < _ATOM_PREC:
                s = f"({s})"
            return f"{s}.{e.field}"
        if isinstance(e, A.Pack):
            if not e.fields:
                return f"{e.struct.qualified} {{}}"
            parts = []
            for name, value in e.fields:
                if isinstance(value, A.Name) and value.name == name:
                    parts.append(name)
                else:
                    parts.append(f"{name}: {self.expr(value, depth)}")
            return f"{e.struct.qualified} {{ " + ", ".join(parts) + " }"
        if isinstance(e, A.TupleExpr):
            return "(" + self.args(e.elems, depth) + ")"
        if isinstance(e, A.If):
            s = f"if ({self.expr(e.cond, depth)}) {self.expr(e.then, depth)}"
            if e.else_ is not None:
                s += f" else {self.expr(e.else_, depth)}"
            return s
        if isinstance(e, A.While):
            return self.while_(e, depth)
        if isinstance(e, A.Block):
            return self.block(e, depth)
        raise TypeError(f"cannot print {type(e).__name__}")

    def args(self, args, depth: int) -> str:
        out = []
        for a in args:
            s = self.expr(a, depth)
            if _prec(a) == 0 and not isinstance(a, A.Block):
                s = f"({s})"
            out.append(s)
        return ", ".join(out)

    def block(self, b: A.Block, depth: int, prefix: Optional[List[str]] = None) -> str:
        inner = list(prefix or [])
        pad = IND * (depth + 1)
        for st in b.stmts:
            inner.append(pad + self.stmt(st, depth + 1))
        if b.tail is not None:
            inner.append(pad + self.expr(b.tail, depth + 1))
        if not inner:
            return "{}"
        return "{\n" + "\n".join(inner) + "\n" + IND * depth + "}"

    def while_(self, w: A.While, depth: int) -> str:
        prefix = []
        if w.invariants:
            pad = IND * (depth + 1)
            prefix.append(pad + "spec {")
            for inv in w.invariants:
                prefix.append(pad + IND + f"invariant {self.expr(inv, depth + 2)};")
            prefix.append(pad + "};")
        return f"while ({self.expr(w.cond, depth)}) " + self.block(w.body, depth, prefix)

    def stmt(self, st: A.Stmt, depth: int) -> str:
        if isinstance(st, A.Let):
            s = "let " + pattern_str(st.pattern)
            if st.type is not None:
                s += ": " + type_str(st.type)
            if st.value is not None:
                s += " = " + self.expr(st.value, depth)
            return s + ";"
        if isinstance(st, A.Assign):
            return f"{self.expr(st.target, depth)} = {self.expr(st.value, depth)};"
        return self.expr(st.expr, depth) + ";"

    # --------------------------------------------------------- items

    def function(self, f: A.FunctionDef, depth: int) -> List[str]:
        pad = IND * depth
        out = [pad + f"#[{a[1:]}]" for a in sorted(x for x in f.attrs if x.startswith("#"))]
        head = ""
        if f.visibility == "public":
            head += "public "
        elif f.visibility == "friend":
            head += "public(friend) "
        if "entry" in f.attrs:
            head += "entry "
        if "native" in f.attrs:
            head += "native "
        params = ", ".join(f"{p.name}: {type_str(p.type)}" for p in f.params)
        head += f"fun {f.name}({params})"
        if f.return_type is not None:
            head += ": " + type_str(f.return_type)
        if f.acquires:
            head += " acquires " + ", ".join(f.acquires)
        if f.body is None:
            out.append(pad + head + ";")
        else:
            out.append(pad + head + " " + self.block(f.body, depth))
        return out

    def spec_fun(self, f: A.SpecFun, depth: int) -> str:
        params = ", ".join(f"{p.name}: {type_str(p.type)}" for p in f.params)
        s = f"spec fun {f.name}({params})"
        if f.return_type is not None:
            s += ": " + type_str(f.return_type)
        if f.body is None:
            return IND * depth + s + ";"
        body = f.body if isinstance(f.body, A.Block) else A.Block((), f.body)
        return IND * depth + s + " " + self.block(body, depth)

    def spec_block(self, b: A.SpecBlock, depth: int) -> List[str]:
        pad = IND * depth
        inner = IND * (depth + 1)
        out = [pad + f"spec {b.target_fn} {{"]
        for p in b.pragmas:
            out.append(inner + pragma_str(p, self, depth + 1))
        for bd in b.bindings:
            kw = "let post" if bd.kind == "let_post" else "let"
            out.append(inner + f"{kw} {bd.name} = {self.expr(bd.expr, depth + 1)};")
        for c in sorted(b.clauses, key=lambda c: _CLAUSE_ORDER[c.kind]):
            out.append(inner + clause_str(c, self, depth + 1))
        out.append(pad + "}")
        for hf in b.helper_funs:
            out.append("")
            out.append(self.spec_fun(hf, depth))
        return out

    def module(self, m: A.SourceModule) -> List[str]:
        out = [f"module {m.address}::{m.name} {{"]
        sections: List[List[str]] = []
        if m.uses:
            sections.append([IND + use_str(u) for u in m.uses])
        if m.constants:
            sections.append([
                IND + f"const {c.name}: {type_str(c.type)} = {self.expr(c.value, 1)};"
                for c in m.constants
            ])
        for s in m.structs:
            sections.append(self.struct(s))
        for sf in m.spec_funs:
            sections.append([self.spec_fun(sf, 1)])
        specs = {b.target_fn: b for b in m.spec_blocks}
        for f in m.functions:
            sections.append(self.function(f, 1))
            if f.name in specs:
                sections.append(self.spec_block(specs[f.name], 1))
        if m.module_pragmas:
            sec = [IND + "spec module {"]
            sec += [IND * 2 + pragma_str(p, self, 2) for p in m.module_pragmas]
            sec.append(IND + "}")
            sections.append(sec)
        for i, sec in enumerate(sections):
            if i:
                out.append("")
            out.extend(sec)
        out.append("}")
        return out

    def struct(self, s: A.StructDef) -> List[str]:
        head = IND + f"struct {s.name}"
        if s.abilities:
            head += " has " + ", ".join(s.abilities)
        if not s.fields:
            return [head + " {}"]
        lines = [head + " {"]
        lines += [IND * 2 + f"{n}: {type_str(t)}," for n, t in s.fields]
        lines.append(IND + "}")
        return lines


def pattern_str(p: A.Pattern) -> str:
    if isinstance(p, A.PVar):
        return p.name
    if isinstance(p, A.PTuple):
        return "(" + ", ".join(p.names) + ")"
    parts = [f if f == b else f"{f}: {b}" for f, b in p.fields]
    return f"{p.struct.qualified} {{ " + ", ".join(parts) + " }" if parts else f"{p.struct.qualified} {{}}"


def use_str(u: A.Use) -> str:
    s = f"use {u.address}::{u.module}"
    if u.member:
        s += f"::{u.member}"
    if u.alias:
        s += f" as {u.alias}"
    return s + ";"


def pragma_str(p: A.Pragma, pr: "_Printer", depth: int) -> str:
    if p.value is None:
        return f"pragma {p.name};"
    return f"pragma {p.name} = {pr.expr(p.value, depth)};"


def clause_str(c: A.Clause, pr: Optional["_Printer"] = None, depth: int = 1) -> str:
    pr = pr or _Printer()
    prop = " [abstract]" if c.abstract else ""
    return f"{c.kind}{prop} {pr.expr(c.expr, depth)};"


def pretty_print(module: A.SourceModule) -> str:
    return "\n".join(_Printer().module(module)) + "\n"


def print_modules(modules) -> str:
    return "\n".join(pretty_print(m) for m in modules)


def print_function(fn: A.FunctionDef, depth: int = 0) -> str:
    return "\n".join(_Printer().function(fn, depth)) + "\n"


def print_spec_block(block: A.SpecBlock, depth: int = 0) -> str:
    return "\n".join(_Printer().spec_block(block, depth)) + "\n"


def print_struct(s: A.StructDef) -> str:
    return "\n".join(line[len(IND):] for line in _Printer().struct(s)) + "\n"


def print_const(c: A.ConstDef) -> str:
    return f"const {c.name}: {type_str(c.type)} = {_Printer().expr(c.value, 0)};\n"


def print_expr(e: A.Expr) -> str:
    return _Printer().expr(e, 0)


def print_spec_fun(f: A.SpecFun) -> str:
    return _Printer().spec_fun(f, 0) + "\n"
