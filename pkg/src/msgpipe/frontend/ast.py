"""Syntax tree for the supported Move subset.

All nodes are frozen dataclasses. ``span`` and ``nid`` never take part in
equality, so two trees compare equal when they are structurally the same
regardless of where they came from.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Iterator, Optional, Tuple, Union


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NO_SPAN = Span(0, 0, 0, 0)


@dataclass(frozen=True)
class Node:
    span: Span = field(default=NO_SPAN, compare=False, repr=False, kw_only=True)
    nid: int = field(default=0, compare=False, repr=False, kw_only=True)


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class PrimType(Node):
    name: str


@dataclass(frozen=True)
class VectorType(Node):
    elem: "Type"


@dataclass(frozen=True)
class StructType(Node):
    name: str
    module: Optional[str] = None

    @property
    def qualified(self) -> str:
        return f"{self.module}::{self.name}" if self.module else self.name


@dataclass(frozen=True)
class RefType(Node):
    mut: bool
    inner: "Type"


@dataclass(frozen=True)
class TupleType(Node):
    elems: Tuple["Type", ...]


Type = Union[PrimType, VectorType, StructType, RefType, TupleType]

INT_TYPES = ("u8", "u16", "u32", "u64", "u128", "u256")
PRIM_TYPES = INT_TYPES + ("bool", "address", "signer")


# ---------------------------------------------------------- expressions


@dataclass(frozen=True)
class IntLit(Node):
    value: int
    suffix: Optional[str] = None


@dataclass(frozen=True)
class BoolLit(Node):
    value: bool


@dataclass(frozen=True)
class AddressLit(Node):
    value: str  # "0x1" or a named address


@dataclass(frozen=True)
class BytesLit(Node):
    kind: str  # "b" or "x"
    text: str


@dataclass(frozen=True)
class VectorLit(Node):
    elems: Tuple["Expr", ...]
    elem_type: Optional[Type] = None


@dataclass(frozen=True)
class Name(Node):
    name: str


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: Tuple["Expr", ...]
    module: Optional[str] = None

    @property
    def path(self) -> str:
        return f"{self.module}::{self.name}" if self.module else self.name


@dataclass(frozen=True)
class BorrowGlobal(Node):
    mut: bool
    struct: StructType
    addr: "Expr"


@dataclass(frozen=True)
class Exists(Node):
    struct: StructType
    addr: "Expr"


@dataclass(frozen=True)
class Global(Node):
    """``global<S>(addr)``; specification expressions only."""

    struct: StructType
    addr: "Expr"


@dataclass(frozen=True)
class Old(Node):
    expr: "Expr"


@dataclass(frozen=True)
class MoveTo(Node):
    signer: "Expr"
    value: "Expr"
    struct: Optional[StructType] = None


@dataclass(frozen=True)
class MoveFrom(Node):
    struct: StructType
    addr: "Expr"


@dataclass(frozen=True)
class Assert(Node):
    cond: "Expr"
    code: "Expr"


@dataclass(frozen=True)
class Abort(Node):
    code: "Expr"


@dataclass(frozen=True)
class Return(Node):
    value: Optional["Expr"] = None


@dataclass(frozen=True)
class Break(Node):
    pass


@dataclass(frozen=True)
class Continue(Node):
    pass


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class UnOp(Node):
    op: str  # only "!"
    operand: "Expr"


@dataclass(frozen=True)
class Deref(Node):
    expr: "Expr"


@dataclass(frozen=True)
class Borrow(Node):
    mut: bool
    expr: "Expr"


@dataclass(frozen=True)
class Cast(Node):
    expr: "Expr"
    type: Type


@dataclass(frozen=True)
class FieldAccess(Node):
    expr: "Expr"
    field: str


@dataclass(frozen=True)
class Pack(Node):
    struct: StructType
    fields: Tuple[Tuple[str, "Expr"], ...]


@dataclass(frozen=True)
class TupleExpr(Node):
    elems: Tuple["Expr", ...]


@dataclass(frozen=True)
class If(Node):
    cond: "Expr"
    then: "Expr"
    else_: Optional["Expr"] = None


@dataclass(frozen=True)
class While(Node):
    cond: "Expr"
    body: "Block"
    invariants: Tuple["Expr", ...] = ()


@dataclass(frozen=True)
class Block(Node):
    stmts: Tuple["Stmt", ...] = ()
    tail: Optional["Expr"] = None


Expr = Union[
    IntLit, BoolLit, AddressLit, BytesLit, VectorLit, Name, Call, BorrowGlobal,
    Exists, Global, Old, MoveTo, MoveFrom, Assert, Abort, Return, Break, Continue,
    BinOp, UnOp, Deref, Borrow, Cast, FieldAccess, Pack, TupleExpr, If, While, Block,
]


# ----------------------------------------------------------- statements


@dataclass(frozen=True)
class PVar(Node):
    name: str


@dataclass(frozen=True)
class PTuple(Node):
    names: Tuple[str, ...]


@dataclass(frozen=True)
class PStruct(Node):
    struct: StructType
    fields: Tuple[Tuple[str, str], ...]  # (field, binder)


Pattern = Union[PVar, PTuple, PStruct]


def pattern_names(p: Pattern) -> Tuple[str, ...]:
    if isinstance(p, PVar):
        return (p.name,)
    if isinstance(p, PTuple):
        return p.names
    return tuple(b for _, b in p.fields)


@dataclass(frozen=True)
class Let(Node):
    pattern: Pattern
    value: Optional[Expr] = None
    type: Optional[Type] = None


@dataclass(frozen=True)
class Assign(Node):
    target: Expr
    value: Expr


@dataclass(frozen=True)
class ExprStmt(Node):
    expr: Expr


Stmt = Union[Let, Assign, ExprStmt]


# ------------------------------------------------------- specifications

CLAUSE_KINDS = ("requires", "modifies", "aborts_if", "ensures")


@dataclass(frozen=True)
class Binding(Node):
    kind: str  # "let" | "let_post"
    name: str
    expr: Expr


@dataclass(frozen=True)
class Clause(Node):
    kind: str
    expr: Expr
    abstract: bool = False


@dataclass(frozen=True)
class Pragma(Node):
    name: str
    value: Optional[Expr] = None


@dataclass(frozen=True)
class Param(Node):
    name: str
    type: Type


@dataclass(frozen=True)
class SpecFun(Node):
    name: str
    params: Tuple[Param, ...]
    return_type: Optional[Type] = None
    body: Optional[Expr] = None

    @property
    def uninterpreted(self) -> bool:
        return self.body is None


@dataclass(frozen=True)
class SpecBlock(Node):
    target_fn: str
    bindings: Tuple[Binding, ...] = ()
    clauses: Tuple[Clause, ...] = ()
    helper_funs: Tuple[SpecFun, ...] = ()
    pragmas: Tuple[Pragma, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not (self.bindings or self.clauses or self.helper_funs or self.pragmas)


# -------------------------------------------------------------- modules


@dataclass(frozen=True)
class Use(Node):
    address: str
    module: str
    member: Optional[str] = None
    alias: Optional[str] = None


@dataclass(frozen=True)
class StructDef(Node):
    name: str
    abilities: Tuple[str, ...]
    fields: Tuple[Tuple[str, Type], ...]


@dataclass(frozen=True)
class ConstDef(Node):
    name: str
    type: Type
    value: Expr


@dataclass(frozen=True)
class FunctionDef(Node):
    name: str
    params: Tuple[Param, ...]
    return_type: Optional[Type] = None
    acquires: Tuple[str, ...] = ()
    body: Optional[Block] = None
    visibility: str = "private"  # "public" | "friend" | "private"
    attrs: frozenset = frozenset()

    @property
    def is_native(self) -> bool:
        return "native" in self.attrs


@dataclass(frozen=True)
class SourceModule(Node):
    address: str
    name: str
    uses: Tuple[Use, ...] = ()
    constants: Tuple[ConstDef, ...] = ()
    structs: Tuple[StructDef, ...] = ()
    functions: Tuple[FunctionDef, ...] = ()
    spec_blocks: Tuple[SpecBlock, ...] = ()
    spec_funs: Tuple[SpecFun, ...] = ()
    module_pragmas: Tuple[Pragma, ...] = ()

    def function(self, name: str) -> Optional[FunctionDef]:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def struct(self, name: str) -> Optional[StructDef]:
        for s in self.structs:
            if s.name == name:
                return s
        return None

    def constant(self, name: str) -> Optional[ConstDef]:
        for c in self.constants:
            if c.name == name:
                return c
        return None

    def spec_for(self, name: str) -> Optional[SpecBlock]:
        for b in self.spec_blocks:
            if b.target_fn == name:
                return b
        return None

    def with_function(self, fn: FunctionDef) -> "SourceModule":
        funcs = tuple(fn if f.name == fn.name else f for f in self.functions)
        return replace(self, functions=funcs)


@dataclass(frozen=True)
class SpecUnit(Node):
    """A ``spec addr::module { ... }`` unit, usually from a separate spec file."""

    address: str
    name: str
    spec_blocks: Tuple[SpecBlock, ...] = ()
    spec_funs: Tuple[SpecFun, ...] = ()
    module_pragmas: Tuple[Pragma, ...] = ()


# ------------------------------------------------------------ traversal


def children(node: Node) -> Iterator[Node]:
    """Yield direct child nodes in field order."""
    for f in fields(node):
        if f.name in ("span", "nid"):
            continue
        yield from _nodes_in(getattr(node, f.name))


def _nodes_in(value) -> Iterator[Node]:
    if isinstance(value, Node):
        yield value
    elif isinstance(value, tuple):
        for v in value:
            yield from _nodes_in(v)


def walk(node: Node) -> Iterator[Node]:
    """Pre-order traversal."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(list(children(n))))


def transform(node: Node, fn) -> Node:
    """Bottom-up rebuild: ``fn`` receives each node with rebuilt children and
    returns a replacement (or the node itself)."""
    changes = {}
    for f in fields(node):
        if f.name in ("span", "nid"):
            continue
        old = getattr(node, f.name)
        new = _transform_value(old, fn)
        if new is not old:
            changes[f.name] = new
    if changes:
        node = replace(node, **changes)
    return fn(node)


def _transform_value(value, fn):
    if isinstance(value, Node):
        return transform(value, fn)
    if isinstance(value, tuple):
        out = tuple(_transform_value(v, fn) for v in value)
        if all(a is b for a, b in zip(out, value)):
            return value
        return out
    return value


def number_nodes(node: Node, start: int = 1) -> Node:
    """Assign sequential pre-order ids to every node under ``node``."""
    counter = [start]

    def rebuild(n: Node) -> Node:
        nid = counter[0]
        counter[0] += 1
        changes = {}
        for f in fields(n):
            if f.name in ("span", "nid"):
                continue
            v = getattr(n, f.name)
            nv = _renumber_value(v, rebuild)
            if nv is not v:
                changes[f.name] = nv
        return replace(n, nid=nid, **changes)

    return rebuild(node)


def _renumber_value(value, rebuild):
    if isinstance(value, Node):
        return rebuild(value)
    if isinstance(value, tuple):
        return tuple(_renumber_value(v, rebuild) for v in value)
    return value


def find_node(root: Node, nid: int) -> Optional[Node]:
    for n in walk(root):
        if n.nid == nid:
            return n
    return None
