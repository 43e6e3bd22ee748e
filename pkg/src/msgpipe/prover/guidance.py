"""Predefined guidance for known prover errors, and failure attribution."""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Sequence, Union

from ..snippets import ClauseClass
from .output import ProverVerdict, VerdictKind


@dataclass(frozen=True)
class GuidanceRule:
    pattern: str
    advice: str
    error_tag: str

    def compiled(self) -> "re.Pattern[str]":
        return re.compile(self.pattern)


def parse_rules(text: str) -> List[GuidanceRule]:
    """``tag TAB pattern TAB advice`` per line; ``#`` starts a comment line."""
    rules: List[GuidanceRule] = []
    tags = set()
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"guidance rule line {n}: expected 3 tab-separated fields")
        tag, pattern, advice = (p.strip() for p in parts)
        try:
            re.compile(pattern)
        except re.error as e:
            raise ValueError(f"guidance rule line {n}: bad pattern: {e}") from e
        if tag in tags:
            raise ValueError(f"guidance rule line {n}: duplicate tag '{tag}'")
        tags.add(tag)
        rules.append(GuidanceRule(pattern, advice, tag))
    return rules


def builtin_rules() -> List[GuidanceRule]:
    text = resources.files(__package__).joinpath("guidance_rules.tsv").read_text(encoding="utf-8")
    return parse_rules(text)


def load_rules(path: Optional[Union[str, Path]] = None) -> List[GuidanceRule]:
    if path is None:
        return builtin_rules()
    return parse_rules(Path(path).read_text(encoding="utf-8"))


def match_guidance(verdict: ProverVerdict, rules: Optional[Sequence[GuidanceRule]] = None) -> List[str]:
    """Advice of every rule matching any failing diagnostic, in rule order."""
    if verdict.passed:
        return []
    rules = builtin_rules() if rules is None else rules
    texts = [d.text or d.message for d in verdict.errors()]
    if not texts and verdict.output:
        texts = [verdict.output]
    out: List[str] = []
    for r in rules:
        pat = r.compiled()
        if any(pat.search(t) for t in texts) and r.advice not in out:
            out.append(r.advice)
    return out


def matched_tags(verdict: ProverVerdict, rules: Optional[Sequence[GuidanceRule]] = None) -> List[str]:
    rules = builtin_rules() if rules is None else rules
    texts = [d.text or d.message for d in verdict.errors()]
    return [r.error_tag for r in rules if any(r.compiled().search(t) for t in texts)]


# ---------------------------------------------------------- attribution

_SPAN_KEYWORDS = (
    (re.compile(r"\baborts_if\b"), ClauseClass.ABORTS_IF),
    (re.compile(r"\bmodifies\b"), ClauseClass.MODIFIES),
    (re.compile(r"\bensures\b"), ClauseClass.ENSURES),
    (re.compile(r"\binvariant\b"), ClauseClass.LOOP_INVARIANT),
)
_MESSAGE_RULES = (
    ("abort not covered", ClauseClass.ABORTS_IF),
    ("abort code not covered", ClauseClass.ABORTS_IF),
    ("function does not abort under this condition", ClauseClass.ABORTS_IF),
    ("post-condition does not hold", ClauseClass.ENSURES),
    ("loop invariant", ClauseClass.LOOP_INVARIANT),
    ("permission to modify", ClauseClass.MODIFIES),
)


def attribute_failure(verdict: ProverVerdict, active: Iterable[ClauseClass] = ClauseClass.ordered()
                      ) -> FrozenSet[ClauseClass]:
    """Clause classes responsible for a failure.

    A failure message with a known meaning decides; otherwise the source
    lines quoted by the diagnostic name the clause when they point into the
    spec. Failing
    postconditions also implicate the loop-invariant agent when it is active.
    Anything unattributable goes to every active class.
    """
    active = frozenset(active)
    if verdict.kind not in (VerdictKind.COUNTEREXAMPLE, VerdictKind.COMPILE_ERROR):
        return active
    found = set()
    for d in verdict.errors():
        msg = d.message.lower()
        hit = {cls for needle, cls in _MESSAGE_RULES if needle in msg}
        if not hit:
            for line in d.snippet:
                for pat, cls in _SPAN_KEYWORDS:
                    if pat.search(line):
                        hit.add(cls)
        found |= hit
    if ClauseClass.ENSURES in found and ClauseClass.LOOP_INVARIANT in active:
        found.add(ClauseClass.LOOP_INVARIANT)
    found &= active
    return frozenset(found) if found else active
