from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

from .frontend import ast as A


class ClauseClass(str, enum.Enum):
    MODIFIES = "Modifies"
    ABORTS_IF = "AbortsIf"
    ENSURES = "Ensures"
    LOOP_INVARIANT = "LoopInvariant"

    def __str__(self) -> str:
        return self.value

    @property
    def clause_kind(self) -> str:
        return _KIND[self]

    @property
    def slug(self) -> str:
        return _SLUG[self]

    @classmethod
    def ordered(cls) -> Tuple["ClauseClass", ...]:
        """Canonical processing order, matching printed clause order."""
        return (cls.MODIFIES, cls.ABORTS_IF, cls.ENSURES, cls.LOOP_INVARIANT)

    @classmethod
    def parse(cls, text: str) -> "ClauseClass":
        t = text.strip().lower().replace("-", "_")
        for c in cls:
            if t in (c.value.lower(), c.slug, c.clause_kind):
                return c
        raise ValueError(f"unknown clause class {text!r}")


_KIND = {
    ClauseClass.MODIFIES: "modifies",
    ClauseClass.ABORTS_IF: "aborts_if",
    ClauseClass.ENSURES: "ensures",
    ClauseClass.LOOP_INVARIANT: "invariant",
}
_SLUG = {
    ClauseClass.MODIFIES: "modifies",
    ClauseClass.ABORTS_IF: "aborts_if",
    ClauseClass.ENSURES: "ensures",
    ClauseClass.LOOP_INVARIANT: "loop_invariant",
}


@dataclass(frozen=True)
class ClauseSnippet:
    cls: ClauseClass
    bindings: Tuple[A.Binding, ...] = ()
    clauses: Tuple[A.Clause, ...] = ()
    annotated_function: Optional[A.FunctionDef] = None
    callee_snippets: Mapping[str, Tuple[A.Clause, ...]] = field(default_factory=dict)
    raw_model_text: str = ""
    helper_funs: Tuple[A.SpecFun, ...] = ()
    diagnostics: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.cls is ClauseClass.LOOP_INVARIANT:
            if self.clauses:
                raise ValueError("loop-invariant snippets carry invariants in the annotated function")
        elif self.cls is ClauseClass.MODIFIES:
            if any(c.kind != "modifies" for c in self.clauses):
                raise ValueError("modifies snippets may only hold modifies clauses")

    @property
    def is_empty(self) -> bool:
        return not (self.clauses or self.bindings or self.annotated_function is not None
                    or self.helper_funs)
