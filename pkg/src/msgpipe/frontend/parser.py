"""Recursive-descent parser for the Move subset, including MSL spec blocks."""

from __future__ import annotations

from dataclasses import replace
from typing import Dict, List, Optional, Tuple

from . import ast as A
from .ast import Span
from .lexer import MoveSyntaxError, Token, UnsupportedConstruct, tokenize

_BINARY_PREC = {
    "==>": 1, "<==>": 1,
    "||": 2,
    "&&": 3,
    "==": 4, "!=": 4, "<": 4, ">": 4, "<=": 4, ">=": 4,
    "|": 5,
    "^": 6,
    "&": 7,
    "<<": 8, ">>": 8,
    "+": 9, "-": 9,
    "*": 10, "/": 10, "%": 10,
}
_SPEC_ONLY_OPS = ("==>", "<==>")
_RIGHT_ASSOC = ("==>",)

_GLOBAL_BUILTINS = ("borrow_global", "borrow_global_mut", "exists", "move_from")
_CLAUSE_KW = {"requires", "modifies", "aborts_if", "ensures"}
_UNSUPPORTED_SPEC_ITEMS = {
    "include", "invariant", "emits", "aborts_with", "apply", "schema",
    "assume", "assert", "axiom", "global", "local", "update", "succeeds_if",
}
_FUN_MODIFIERS = {"public", "entry", "native"}


class Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.pos = 0
        self.spec_mode = False

    # ------------------------------------------------------------ helpers

    def peek(self, k: int = 0) -> Token:
        i = min(self.pos + k, len(self.tokens) - 1)
        return self.tokens[i]

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t.text == text and t.kind in ("punct", "ident")

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            t = self.peek()
            found = t.text or "end of input"
            raise MoveSyntaxError(t.span, f"expected '{text}', found '{found}'")
        return self.advance()

    def ident(self, what: str = "identifier") -> Token:
        t = self.peek()
        if t.kind != "ident":
            found = t.text or "end of input"
            raise MoveSyntaxError(t.span, f"expected {what}, found '{found}'")
        return self.advance()

    def span_from(self, start: Token) -> Span:
        prev = self.tokens[self.pos - 1] if self.pos > 0 else start
        return Span(start.line, start.col, prev.line, prev.col + len(prev.text))

    def error(self, message: str, tok: Optional[Token] = None) -> MoveSyntaxError:
        return MoveSyntaxError((tok or self.peek()).span, message)

    def unsupported(self, construct: str, tok: Optional[Token] = None,
                    message: str = "") -> UnsupportedConstruct:
        return UnsupportedConstruct((tok or self.peek()).span, construct, message)

    # -------------------------------------------------------- top level

    def parse_units(self) -> Tuple[List[A.SourceModule], List[A.SpecUnit]]:
        modules: List[A.SourceModule] = []
        units: List[A.SpecUnit] = []
        while self.peek().kind != "eof":
            if self.at("module"):
                modules.append(self.parse_module())
            elif self.at("spec"):
                units.append(self.parse_spec_unit())
            elif self.at("address") or self.at("script"):
                raise self.unsupported(self.peek().text + " block")
            else:
                raise self.error("expected module")
        if not modules and not units:
            raise self.error("expected module")
        return modules, units

    def module_path(self) -> Tuple[str, str]:
        t = self.peek()
        if t.kind not in ("int", "ident"):
            raise self.error("expected module address")
        self.advance()
        self.expect("::")
        name = self.ident("module name").text
        return t.text, name

    def parse_module(self) -> A.SourceModule:
        start = self.expect("module")
        address, name = self.module_path()
        self.expect("{")
        items = _ModuleItems()
        while not self.at("}"):
            if self.peek().kind == "eof":
                raise self.error("expected '}' closing module")
            self.parse_module_item(items)
        self.expect("}")
        return items.build(address, name, self.span_from(start), start)

    def parse_spec_unit(self) -> A.SpecUnit:
        start = self.expect("spec")
        address, name = self.module_path()
        self.expect("{")
        items = _ModuleItems()
        while not self.at("}"):
            if not self.at("spec"):
                raise self.error("expected 'spec' item in spec module")
            self.parse_spec_item(items)
        self.expect("}")
        blocks, funs = items.spec_parts()
        return A.SpecUnit(address, name, tuple(blocks), tuple(funs),
                          tuple(items.module_pragmas), span=self.span_from(start))

    def parse_module_item(self, items: "_ModuleItems") -> None:
        t = self.peek()
        if t.text == "use":
            items.reset_spec()
            items.uses.extend(self.parse_use())
        elif t.text == "const":
            items.reset_spec()
            items.constants.append(self.parse_const())
        elif t.text == "struct":
            items.reset_spec()
            items.structs.append(self.parse_struct())
        elif t.text == "spec":
            self.parse_spec_item(items)
        elif t.text == "friend":
            raise self.unsupported("friend declaration")
        elif t.text == "inline":
            raise self.unsupported("inline function")
        elif t.text in _FUN_MODIFIERS or t.text in ("fun", "#"):
            items.reset_spec()
            items.functions.append(self.parse_function())
        else:
            raise self.error(f"unexpected '{t.text}' in module body")

    def parse_use(self) -> List[A.Use]:
        start = self.expect("use")
        address, module = self.module_path()
        uses = []
        if self.accept("::"):
            if self.accept("{"):
                while True:
                    member = self.ident("member name").text
                    alias = self.ident().text if self.accept("as") else None
                    uses.append(A.Use(address, module, member, alias, span=self.span_from(start)))
                    if not self.accept(","):
                        break
                    if self.at("}"):
                        break
                self.expect("}")
            else:
                member = self.ident("member name").text
                alias = self.ident().text if self.accept("as") else None
                uses.append(A.Use(address, module, member, alias, span=self.span_from(start)))
        else:
            alias = self.ident().text if self.accept("as") else None
            uses.append(A.Use(address, module, None, alias, span=self.span_from(start)))
        self.expect(";")
        return uses

    def parse_const(self) -> A.ConstDef:
        start = self.expect("const")
        name = self.ident("constant name").text
        self.expect(":")
        ty = self.parse_type()
        self.expect("=")
        value = self.parse_expr()
        self.expect(";")
        return A.ConstDef(name, ty, value, span=self.span_from(start))

    def parse_struct(self) -> A.StructDef:
        start = self.expect("struct")
        name = self.ident("struct name").text
        if self.at("<"):
            raise self.unsupported("generic struct")
        abilities: List[str] = []
        if self.accept("has"):
            while True:
                abilities.append(self.ident("ability").text)
                if not self.accept(","):
                    break
        self.expect("{")
        fields: List[Tuple[str, A.Type]] = []
        while not self.at("}"):
            fname = self.ident("field name").text
            self.expect(":")
            fields.append((fname, self.parse_type()))
            if not self.accept(","):
                break
        self.expect("}")
        return A.StructDef(name, tuple(abilities), tuple(fields), span=self.span_from(start))

    def parse_attribute(self) -> str:
        self.expect("#")
        self.expect("[")
        name = self.ident("attribute").text
        if self.at("("):
            raise self.unsupported("attribute arguments")
        self.expect("]")
        return "#" + name

    def parse_function(self) -> A.FunctionDef:
        start = self.peek()
        attrs = set()
        visibility = "private"
        while self.at("#"):
            attrs.add(self.parse_attribute())
        while not self.at("fun"):
            t = self.peek()
            if t.text == "public":
                self.advance()
                visibility = "public"
                if self.accept("("):
                    kind = self.ident().text
                    if kind != "friend":
                        raise self.unsupported(f"public({kind})", t)
                    self.expect(")")
                    visibility = "friend"
            elif t.text in ("entry", "native"):
                self.advance()
                attrs.add(t.text)
            else:
                raise self.error(f"expected 'fun', found '{t.text}'")
        self.expect("fun")
        name = self.ident("function name").text
        if self.at("<"):
            raise self.unsupported("generic function")
        params = self.parse_params()
        ret = None
        if self.accept(":"):
            ret = self.parse_type()
        acquires: List[str] = []
        if self.accept("acquires"):
            while True:
                acquires.append(self.parse_struct_name().qualified)
                if not self.accept(","):
                    break
        body = None
        if "native" in attrs:
            self.expect(";")
        else:
            body = self.parse_block()
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise self.error(f"duplicate parameter name in '{name}'", start)
        return A.FunctionDef(name, params, ret, tuple(acquires), body, visibility,
                             frozenset(attrs), span=self.span_from(start))

    def parse_params(self) -> Tuple[A.Param, ...]:
        self.expect("(")
        params = []
        while not self.at(")"):
            t = self.ident("parameter name")
            self.expect(":")
            params.append(A.Param(t.text, self.parse_type(), span=self.span_from(t)))
            if not self.accept(","):
                break
        self.expect(")")
        return tuple(params)

    # ----------------------------------------------------------- types

    def parse_struct_name(self) -> A.StructType:
        t = self.ident("struct name")
        if self.at("::"):
            self.advance()
            n = self.ident("struct name")
            if self.at("::"):
                raise self.unsupported("fully qualified struct path", t)
            st = A.StructType(n.text, t.text, span=self.span_from(t))
        else:
            st = A.StructType(t.text, span=self.span_from(t))
        if self.at("<"):
            raise self.unsupported("generic type arguments")
        return st

    def parse_type(self) -> A.Type:
        t = self.peek()
        if self.accept("&"):
            mut = self.accept("mut")
            return A.RefType(mut, self.parse_type(), span=self.span_from(t))
        if self.at("("):
            self.advance()
            elems = []
            while not self.at(")"):
                elems.append(self.parse_type())
                if not self.accept(","):
                    break
            self.expect(")")
            if len(elems) == 1:
                return elems[0]
            return A.TupleType(tuple(elems), span=self.span_from(t))
        if t.kind != "ident":
            raise self.error(f"expected type, found '{t.text or 'end of input'}'")
        if t.text in A.PRIM_TYPES:
            self.advance()
            return A.PrimType(t.text, span=self.span_from(t))
        if t.text == "vector":
            self.advance()
            self.expect("<")
            elem = self.parse_type()
            self.close_angle()
            return A.VectorType(elem, span=self.span_from(t))
        return self.parse_struct_name()

    def close_angle(self) -> None:
        t = self.peek()
        if t.text == ">>":
            # split '>>' so nested generic types close correctly
            self.tokens[self.pos] = Token("punct", ">", t.line, t.col + 1)
            return
        self.expect(">")

    # ----------------------------------------------------- spec items

    def parse_spec_item(self, items: "_ModuleItems") -> None:
        start = self.expect("spec")
        if self.at("fun"):
            fun = self.parse_spec_fun(start)
            items.add_spec_fun(fun)
            return
        if self.at("module"):
            self.advance()
            self.expect("{")
            while not self.at("}"):
                if self.at("pragma"):
                    items.module_pragmas.extend(self.parse_pragmas())
                elif self.at("fun"):
                    items.spec_funs.append(self.parse_spec_fun(self.peek()))
                else:
                    raise self.unsupported(f"'{self.peek().text}' in spec module")
            self.expect("}")
            items.reset_spec()
            return
        name_tok = self.ident("function name")
        if self.at("::") or self.at("("):
            raise self.unsupported("spec target path", name_tok)
        self.expect("{")
        old_mode, self.spec_mode = self.spec_mode, True
        bindings: List[A.Binding] = []
        clauses: List[A.Clause] = []
        pragmas: List[A.Pragma] = []
        try:
            while not self.at("}"):
                t = self.peek()
                if t.kind == "eof":
                    raise self.error("expected '}' closing spec block")
                if t.text == "let":
                    bindings.append(self.parse_binding())
                elif t.text in _CLAUSE_KW:
                    clauses.append(self.parse_clause())
                elif t.text == "pragma":
                    pragmas.extend(self.parse_pragmas())
                elif t.text in _UNSUPPORTED_SPEC_ITEMS:
                    raise self.unsupported(f"spec item '{t.text}'")
                else:
                    raise self.error(f"unexpected '{t.text}' in spec block")
        finally:
            self.spec_mode = old_mode
        self.expect("}")
        block = A.SpecBlock(name_tok.text, tuple(bindings), tuple(clauses), (),
                            tuple(pragmas), span=self.span_from(start))
        items.add_spec_block(block)

    def parse_binding(self) -> A.Binding:
        start = self.expect("let")
        kind = "let"
        if self.at("post") and self.peek(1).kind == "ident":
            self.advance()
            kind = "let_post"
        name = self.ident("binding name").text
        self.expect("=")
        expr = self.parse_expr()
        self.expect(";")
        return A.Binding(kind, name, expr, span=self.span_from(start))

    def parse_clause(self) -> A.Clause:
        start = self.advance()
        abstract = False
        if self.accept("["):
            prop = self.ident("property").text
            if prop != "abstract":
                raise self.unsupported(f"clause property [{prop}]")
            self.expect("]")
            abstract = True
        expr = self.parse_expr()
        if self.at("with"):
            raise self.unsupported("aborts_if ... with")
        self.expect(";")
        return A.Clause(start.text, expr, abstract, span=self.span_from(start))

    def parse_pragmas(self) -> List[A.Pragma]:
        self.expect("pragma")
        out = []
        while True:
            t = self.ident("pragma name")
            value = None
            if self.accept("="):
                value = self.parse_expr()
            out.append(A.Pragma(t.text, value, span=self.span_from(t)))
            if not self.accept(","):
                break
        self.expect(";")
        return out

    def parse_spec_fun(self, start: Token) -> A.SpecFun:
        self.expect("fun")
        name = self.ident("spec function name").text
        params = self.parse_params()
        ret = self.parse_type() if self.accept(":") else None
        body = None
        if self.accept(";"):
            pass
        else:
            old_mode, self.spec_mode = self.spec_mode, True
            try:
                body = self.parse_block()
            finally:
                self.spec_mode = old_mode
        return A.SpecFun(name, params, ret, body, span=self.span_from(start))

    # ----------------------------------------------------------- blocks

    def parse_block(self, loop_body: bool = False) -> A.Block:
        block, invariants = self._parse_block(loop_body)
        if invariants:
            raise self.unsupported("inline spec block")
        return block

    def _parse_block(self, loop_body: bool) -> Tuple[A.Block, Tuple[A.Expr, ...]]:
        start = self.expect("{")
        stmts: List[A.Stmt] = []
        tail: Optional[A.Expr] = None
        invariants: List[A.Expr] = []
        while not self.at("}"):
            t = self.peek()
            if t.kind == "eof":
                raise self.error("expected '}'")
            if tail is not None:
                raise self.error("expected ';'", t)
            if t.text == "spec" and self.peek(1).text == "{":
                if not loop_body or stmts:
                    raise self.unsupported("inline spec block")
                invariants.extend(self.parse_loop_spec())
                self.accept(";")
                continue
            if t.text == "let":
                stmts.append(self.parse_let())
                continue
            if t.text == "use":
                raise self.unsupported("use inside function body")
            e = self.parse_expr()
            if self.at("="):
                self.advance()
                value = self.parse_expr()
                self.expect(";")
                stmts.append(A.Assign(e, value, span=self.span_from(t)))
            elif self.accept(";"):
                stmts.append(A.ExprStmt(e, span=self.span_from(t)))
            elif self.at("}"):
                tail = e
            elif isinstance(e, (A.If, A.While, A.Block)):
                stmts.append(A.ExprStmt(e, span=self.span_from(t)))
            else:
                raise self.error(f"expected ';', found '{self.peek().text}'")
        self.expect("}")
        return A.Block(tuple(stmts), tail, span=self.span_from(start)), tuple(invariants)

    def parse_loop_spec(self) -> List[A.Expr]:
        self.expect("spec")
        self.expect("{")
        out = []
        old_mode, self.spec_mode = self.spec_mode, True
        try:
            while not self.at("}"):
                if not self.at("invariant"):
                    raise self.unsupported(f"loop spec item '{self.peek().text}'")
                self.advance()
                if self.at("update"):
                    raise self.unsupported("invariant update")
                out.append(self.parse_expr())
                self.expect(";")
        finally:
            self.spec_mode = old_mode
        self.expect("}")
        return out

    def parse_let(self) -> A.Let:
        start = self.expect("let")
        pattern = self.parse_pattern()
        ty = self.parse_type() if self.accept(":") else None
        value = None
        if self.accept("="):
            value = self.parse_expr()
        self.expect(";")
        return A.Let(pattern, value, ty, span=self.span_from(start))

    def parse_pattern(self) -> A.Pattern:
        t = self.peek()
        if self.accept("("):
            names = []
            while not self.at(")"):
                names.append(self.ident("binder").text)
                if not self.accept(","):
                    break
            self.expect(")")
            return A.PTuple(tuple(names), span=self.span_from(t))
        name = self.ident("binder")
        if self.at("{") or self.at("::"):
            self.pos -= 1
            st = self.parse_struct_name()
            self.expect("{")
            fields = []
            while not self.at("}"):
                f = self.ident("field name").text
                binder = self.ident("binder").text if self.accept(":") else f
                fields.append((f, binder))
                if not self.accept(","):
                    break
            self.expect("}")
            return A.PStruct(st, tuple(fields), span=self.span_from(t))
        return A.PVar(name.text, span=self.span_from(t))

    # ------------------------------------------------------ expressions

    def parse_expr(self, min_prec: int = 1) -> A.Expr:
        start = self.peek()
        lhs = self.parse_unary()
        while True:
            t = self.peek()
            op = t.text if t.kind == "punct" else None
            prec = _BINARY_PREC.get(op) if op else None
            if prec is None or prec < min_prec:
                return lhs
            if op in _SPEC_ONLY_OPS and not self.spec_mode:
                raise self.error(f"'{op}' is only allowed in specifications", t)
            if op == "<==>":
                raise self.unsupported("<==>", t)
            self.advance()
            next_min = prec if op in _RIGHT_ASSOC else prec + 1
            rhs = self.parse_expr(next_min)
            lhs = A.BinOp(op, lhs, rhs, span=self.span_from(start))

    def parse_unary(self) -> A.Expr:
        t = self.peek()
        if t.kind == "punct":
            if t.text == "!":
                self.advance()
                return A.UnOp("!", self.parse_unary(), span=self.span_from(t))
            if t.text == "*":
                self.advance()
                return A.Deref(self.parse_unary(), span=self.span_from(t))
            if t.text == "&":
                self.advance()
                mut = self.accept("mut")
                return A.Borrow(mut, self.parse_unary(), span=self.span_from(t))
            if t.text == "-":
                raise self.unsupported("unary minus", t)
        return self.parse_postfix()

    def parse_postfix(self) -> A.Expr:
        start = self.peek()
        e = self.parse_primary()
        while self.at("."):
            self.advance()
            f = self.ident("field name")
            if self.at("("):
                raise self.unsupported("method call syntax", f)
            e = A.FieldAccess(e, f.text, span=self.span_from(start))
        if self.at("["):
            raise self.unsupported("index expression")
        return e

    def parse_args(self) -> Tuple[A.Expr, ...]:
        self.expect("(")
        args = []
        while not self.at(")"):
            args.append(self.parse_expr())
            if not self.accept(","):
                break
        self.expect(")")
        return tuple(args)

    def parse_type_arg(self) -> A.StructType:
        self.expect("<")
        st = self.parse_struct_name()
        self.close_angle()
        return st

    def parse_primary(self) -> A.Expr:
        t = self.peek()
        if t.kind == "int":
            self.advance()
            return _int_literal(t)
        if t.kind == "addr":
            self.advance()
            return A.AddressLit(t.text[1:], span=t.span)
        if t.kind == "bytes":
            self.advance()
            return A.BytesLit(t.text[0], t.text[2:-1], span=t.span)
        if t.kind == "punct":
            if t.text == "(":
                return self.parse_paren()
            if t.text == "{":
                if self.spec_mode:
                    raise self.unsupported("block expression in specification", t)
                return self.parse_block()
            raise self.error(f"expected expression, found '{t.text}'")
        if t.kind != "ident":
            raise self.error("expected expression, found end of input")

        word = t.text
        if word in ("true", "false"):
            self.advance()
            return A.BoolLit(word == "true", span=t.span)
        if word == "if":
            if self.spec_mode:
                raise self.unsupported("if", t, "branch form disallowed; use ==>")
            return self.parse_if()
        if word == "while":
            return self.parse_while()
        if word in ("loop", "match", "for"):
            raise self.unsupported(f"'{word}' expression", t)
        if word == "return":
            self.advance()
            value = None
            if not (self.at(";") or self.at("}")):
                value = self.parse_expr()
            return A.Return(value, span=self.span_from(t))
        if word == "abort":
            self.advance()
            return A.Abort(self.parse_expr(), span=self.span_from(t))
        if word == "break":
            self.advance()
            return A.Break(span=t.span)
        if word == "continue":
            self.advance()
            return A.Continue(span=t.span)
        if word == "assert" and self.at("!", 1):
            self.advance()
            self.advance()
            args = self.parse_args()
            if len(args) != 2:
                raise self.error("assert! takes a condition and an abort code", t)
            return A.Assert(args[0], args[1], span=self.span_from(t))
        if word == "vector" and (self.at("[", 1) or self.at("<", 1)):
            return self.parse_vector_lit()
        if word in ("forall",) or (word == "exists" and self.peek(1).kind == "ident"):
            raise self.unsupported("quantifier", t)
        if word in _GLOBAL_BUILTINS and self.at("<", 1):
            self.advance()
            st = self.parse_type_arg()
            args = self.parse_args()
            if len(args) != 1:
                raise self.error(f"{word} takes one argument", t)
            span = self.span_from(t)
            if word == "exists":
                return A.Exists(st, args[0], span=span)
            if word == "move_from":
                return A.MoveFrom(st, args[0], span=span)
            return A.BorrowGlobal(word == "borrow_global_mut", st, args[0], span=span)
        if word == "move_to" and (self.at("<", 1) or self.at("(", 1)):
            self.advance()
            st = self.parse_type_arg() if self.at("<") else None
            args = self.parse_args()
            if len(args) != 2:
                raise self.error("move_to takes a signer and a value", t)
            return A.MoveTo(args[0], args[1], st, span=self.span_from(t))
        if word == "global" and self.at("<", 1):
            if not self.spec_mode:
                raise self.unsupported("global<..> outside specifications", t)
            self.advance()
            st = self.parse_type_arg()
            args = self.parse_args()
            if len(args) != 1:
                raise self.error("global takes one argument", t)
            return A.Global(st, args[0], span=self.span_from(t))
        if word == "old" and self.at("(", 1) and self.spec_mode:
            self.advance()
            args = self.parse_args()
            if len(args) != 1:
                raise self.error("old takes one argument", t)
            return A.Old(args[0], span=self.span_from(t))

        self.advance()
        if self.at("::"):
            self.advance()
            member = self.ident("member name")
            if self.at("::"):
                raise self.unsupported("fully qualified path", t)
            if self.at("("):
                args = self.parse_args()
                return A.Call(member.text, args, word, span=self.span_from(t))
            if self.at("{") and member.text[:1].isupper():
                return self.parse_pack(A.StructType(member.text, word, span=self.span_from(t)), t)
            if self.at("<"):
                raise self.unsupported("generic call", t)
            raise self.unsupported("module member reference", t)
        if self.at("("):
            args = self.parse_args()
            return A.Call(word, args, span=self.span_from(t))
        if self.at("{") and word[:1].isupper() and not self.spec_mode:
            return self.parse_pack(A.StructType(word, span=t.span), t)
        return A.Name(word, span=t.span)

    def parse_pack(self, st: A.StructType, start: Token) -> A.Pack:
        self.expect("{")
        fields = []
        while not self.at("}"):
            f = self.ident("field name")
            if self.accept(":"):
                value = self.parse_expr()
            else:
                value = A.Name(f.text, span=f.span)
            fields.append((f.text, value))
            if not self.accept(","):
                break
        self.expect("}")
        return A.Pack(st, tuple(fields), span=self.span_from(start))

    def parse_vector_lit(self) -> A.VectorLit:
        start = self.advance()
        elem_type = None
        if self.accept("<"):
            elem_type = self.parse_type()
            self.close_angle()
        self.expect("[")
        elems = []
        while not self.at("]"):
            elems.append(self.parse_expr())
            if not self.accept(","):
                break
        self.expect("]")
        return A.VectorLit(tuple(elems), elem_type, span=self.span_from(start))

    def parse_paren(self) -> A.Expr:
        start = self.expect("(")
        if self.accept(")"):
            return A.TupleExpr((), span=self.span_from(start))
        first = self.parse_expr()
        if self.accept("as"):
            ty = self.parse_type()
            self.expect(")")
            return A.Cast(first, ty, span=self.span_from(start))
        if self.accept(")"):
            return first
        elems = [first]
        while self.accept(","):
            if self.at(")"):
                break
            elems.append(self.parse_expr())
        self.expect(")")
        return A.TupleExpr(tuple(elems), span=self.span_from(start))

    def parse_if(self) -> A.If:
        start = self.expect("if")
        self.expect("(")
        cond = self.parse_expr()
        self.expect(")")
        then = self.parse_expr()
        else_ = None
        if self.accept("else"):
            else_ = self.parse_expr()
        return A.If(cond, then, else_, span=self.span_from(start))

    def parse_while(self) -> A.While:
        start = self.expect("while")
        self.expect("(")
        invariants: List[A.Expr] = []
        if self.at("{") and self.at("spec", 1):
            # header form: while ({ spec { invariant ..; }; cond })
            self.advance()
            invariants.extend(self.parse_loop_spec())
            self.expect(";")
            cond = self.parse_expr()
            self.expect("}")
        else:
            cond = self.parse_expr()
        self.expect(")")
        if not self.at("{"):
            raise self.error("expected '{' after while condition")
        body, body_invs = self._parse_block(loop_body=True)
        invariants.extend(body_invs)
        return A.While(cond, body, tuple(invariants), span=self.span_from(start))


def _int_literal(t: Token) -> A.IntLit:
    text = t.text.replace("_", "")
    suffix = None
    for s in sorted(A.INT_TYPES, key=len, reverse=True):
        if text.endswith(s):
            suffix, text = s, text[: -len(s)]
            break
    value = int(text, 16) if text.startswith("0x") else int(text)
    return A.IntLit(value, suffix, span=t.span)


class _ModuleItems:
    def __init__(self):
        self.uses: List[A.Use] = []
        self.constants: List[A.ConstDef] = []
        self.structs: List[A.StructDef] = []
        self.functions: List[A.FunctionDef] = []
        self.blocks: List[A.SpecBlock] = []
        self.spec_funs: List[A.SpecFun] = []
        self.module_pragmas: List[A.Pragma] = []
        self._last_block: Optional[int] = None

    def reset_spec(self) -> None:
        self._last_block = None

    def add_spec_block(self, block: A.SpecBlock) -> None:
        self.blocks.append(block)
        self._last_block = len(self.blocks) - 1

    def add_spec_fun(self, fun: A.SpecFun) -> None:
        if self._last_block is None:
            self.spec_funs.append(fun)
        else:
            b = self.blocks[self._last_block]
            self.blocks[self._last_block] = replace(b, helper_funs=b.helper_funs + (fun,))

    def spec_parts(self) -> Tuple[List[A.SpecBlock], List[A.SpecFun]]:
        merged: Dict[str, A.SpecBlock] = {}
        for b in self.blocks:
            merged[b.target_fn] = _merge_blocks(merged[b.target_fn], b) if b.target_fn in merged else b
        return [canonical_block(b) for b in merged.values()], self.spec_funs

    def build(self, address: str, name: str, span: Span, start: Token) -> A.SourceModule:
        seen = set()
        for f in self.functions:
            if f.name in seen:
                raise MoveSyntaxError(f.span, f"duplicate function '{f.name}'")
            seen.add(f.name)
        snames = set()
        for s in self.structs:
            if s.name in snames:
                raise MoveSyntaxError(s.span, f"duplicate struct '{s.name}'")
            snames.add(s.name)
        blocks, funs = self.spec_parts()
        order = {f.name: i for i, f in enumerate(self.functions)}
        for b in blocks:
            if b.target_fn not in order:
                raise MoveSyntaxError(b.span, f"spec block for unknown function '{b.target_fn}'")
        blocks.sort(key=lambda b: order[b.target_fn])
        return A.SourceModule(
            address, name, tuple(self.uses), tuple(self.constants), tuple(self.structs),
            tuple(self.functions), tuple(blocks), tuple(funs), tuple(self.module_pragmas),
            span=span,
        )


_CLAUSE_ORDER = {k: i for i, k in enumerate(A.CLAUSE_KINDS)}


def canonical_block(block: A.SpecBlock) -> A.SpecBlock:
    """Stable-sort clauses into requires < modifies < aborts_if < ensures."""
    clauses = tuple(sorted(block.clauses, key=lambda c: _CLAUSE_ORDER[c.kind]))
    if clauses == block.clauses and all(a is b for a, b in zip(clauses, block.clauses)):
        return block
    return replace(block, clauses=clauses)


def _merge_blocks(a: A.SpecBlock, b: A.SpecBlock) -> A.SpecBlock:
    return replace(a, bindings=a.bindings + b.bindings, clauses=a.clauses + b.clauses,
                   helper_funs=a.helper_funs + b.helper_funs, pragmas=a.pragmas + b.pragmas)


def merge_spec_unit(module: A.SourceModule, unit: A.SpecUnit) -> A.SourceModule:
    """Attach the blocks of a separate spec unit to the module they describe."""
    blocks = {b.target_fn: b for b in module.spec_blocks}
    names = {f.name for f in module.functions}
    for b in unit.spec_blocks:
        if b.target_fn not in names:
            raise MoveSyntaxError(b.span, f"spec block for unknown function '{b.target_fn}'")
        blocks[b.target_fn] = canonical_block(_merge_blocks(blocks[b.target_fn], b)) \
            if b.target_fn in blocks else b
    order = {f.name: i for i, f in enumerate(module.functions)}
    merged = tuple(sorted(blocks.values(), key=lambda b: order[b.target_fn]))
    return replace(module, spec_blocks=merged, spec_funs=module.spec_funs + unit.spec_funs,
                   module_pragmas=module.module_pragmas + unit.module_pragmas)


def parse_many(source: str) -> List[A.SourceModule]:
    """Parse every module in ``source``; spec units in the same text are merged
    into the module of the same name."""
    modules, units = Parser(source).parse_units()
    by_name = {m.name: i for i, m in enumerate(modules)}
    for u in units:
        if u.name not in by_name:
            raise MoveSyntaxError(u.span, f"spec unit for unknown module '{u.name}'")
        i = by_name[u.name]
        modules[i] = merge_spec_unit(modules[i], u)
    return [A.number_nodes(m) for m in modules]


def parse(source: str) -> A.SourceModule:
    """Parse text holding exactly one module."""
    modules = parse_many(source)
    if len(modules) != 1:
        raise MoveSyntaxError(modules[1].span if len(modules) > 1 else Span(1, 1),
                              f"expected exactly one module, found {len(modules)}")
    return modules[0]


def parse_units(source: str) -> Tuple[List[A.SourceModule], List[A.SpecUnit]]:
    """Parse without merging; used when spec units live in separate files."""
    modules, units = Parser(source).parse_units()
    return [A.number_nodes(m) for m in modules], units


def parse_spec_items(source: str, target_fn: str) -> A.SpecBlock:
    """Parse bare spec-block items (bindings, clauses, pragmas, ``spec fun``
    declarations) into a block for ``target_fn``."""
    p = Parser(source)
    p.spec_mode = True
    bindings, clauses, pragmas, funs = [], [], [], []
    while p.peek().kind != "eof":
        t = p.peek()
        if t.text == "let":
            bindings.append(p.parse_binding())
        elif t.text in _CLAUSE_KW:
            clauses.append(p.parse_clause())
        elif t.text == "pragma":
            pragmas.extend(p.parse_pragmas())
        elif t.text == "spec" and p.at("fun", 1):
            funs.append(p.parse_spec_fun(p.advance()))
        elif t.text == "fun":
            funs.append(p.parse_spec_fun(t))
        elif t.text in _UNSUPPORTED_SPEC_ITEMS:
            raise p.unsupported(f"spec item '{t.text}'")
        else:
            raise p.error(f"unexpected '{t.text}' in spec block")
    block = A.SpecBlock(target_fn, tuple(bindings), tuple(clauses), tuple(funs), tuple(pragmas))
    return A.number_nodes(canonical_block(block))


def parse_expr(source: str, spec: bool = False) -> A.Expr:
    p = Parser(source)
    p.spec_mode = spec
    e = p.parse_expr()
    if p.peek().kind != "eof":
        raise p.error(f"unexpected '{p.peek().text}' after expression")
    return e


def parse_function(source: str) -> A.FunctionDef:
    p = Parser(source)
    fn = p.parse_function()
    if p.peek().kind != "eof":
        raise p.error(f"unexpected '{p.peek().text}' after function")
    return fn
