"""Clause-generating agents: prompt assembly, output parsing and sanitizing."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

from .deps import GenerationContext
from .frontend import ast as A
from .frontend.lexer import MoveSyntaxError, UnsupportedConstruct
from .frontend.parser import canonical_block, parse_function, parse_spec_items
from .frontend.printer import clause_str, print_function, print_spec_block, print_spec_fun
from .llm import BackendError, ChatBackend, ChatRequest
from .prover import ProverConfig, ProverVerdict, VerdictKind, verify
from .snippets import ClauseClass, ClauseSnippet

log = logging.getLogger(__name__)

__all__ = [
    "AgentSettings", "ClauseClass", "ClauseSnippet", "EmptyOutput", "PromptBundle",
    "build_bundle", "extract_fenced", "gen_abstract_spec", "gen_clauses", "load_prompt",
    "make_request", "parse_clause_items", "placeholder_abstract", "precheck_aborts_false",
    "sanitize", "snippet_block", "summarize_error",
]

SUMMARY_LIMIT = 1200


class EmptyOutput(ValueError):
    """The model answered, but nothing usable survived parsing."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class AgentSettings:
    model: str = "default"
    temperature: float = 0.0
    max_tokens: int = 2048


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    guidance: Tuple[str, ...] = ()
    prior_snippet: Optional[ClauseSnippet] = None


# ------------------------------------------------------------- prompts


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    return resources.files("msgpipe").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")


def _system_prompt(cls: ClauseClass) -> str:
    text = load_prompt(cls.slug)
    if cls is ClauseClass.LOOP_INVARIANT:
        text = text.replace("{examples}", load_prompt("loop_invariant_examples").strip())
    return load_prompt("common").strip() + "\n\n" + text.strip() + "\n"


def _writers_of_global(ctx: GenerationContext) -> List[str]:
    out = []
    for label, src in ctx.dependencies:
        if "borrow_global_mut" in src or "move_to" in src or "move_from" in src:
            if re.search(r"\bfun\s+\w+", src):
                out.append(label)
    return out


def build_bundle(cls: ClauseClass, ctx: GenerationContext, guidance: Sequence[str] = (),
                 prior: Optional[ClauseSnippet] = None, coverage_diffs: str = "") -> PromptBundle:
    """The prompt pair for one agent call. ``guidance`` and ``prior`` come
    from the previous failed round; ``coverage_diffs`` lists deletions the
    previous ensures clauses did not detect."""
    parts = [f"Target function: {ctx.fn_name}", "", ctx.render().rstrip()]
    if cls is ClauseClass.MODIFIES:
        writers = _writers_of_global(ctx)
        if writers:
            parts += ["", "Callees that write global storage: " + ", ".join(writers)]
    if prior is not None and not prior.is_empty:
        parts += ["", "Your previous answer:", "```move", _snippet_text(prior, ctx.fn_name).rstrip(), "```"]
    if guidance:
        parts += ["", "The prover rejected the previous specification. Fix these problems:"]
        parts += [f"- {g}" for g in guidance]
    if coverage_diffs.strip():
        parts += ["", "The current ensures clauses still verify after each of these deletions, "
                      "so they do not describe the deleted behaviour. Strengthen them:",
                  "```diff", coverage_diffs.rstrip(), "```"]
    parts += ["", "Answer with one ```move fenced block."]
    return PromptBundle(_system_prompt(cls), "\n".join(parts) + "\n", tuple(guidance), prior)


def make_request(bundle: PromptBundle, settings: AgentSettings) -> ChatRequest:
    return ChatRequest.make(settings.model, bundle.system, bundle.user,
                            temperature=settings.temperature, max_tokens=settings.max_tokens)


# ------------------------------------------------------ output contract

_FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.S)
_ITEM_START = re.compile(r"^(let|ensures|aborts_if|modifies|requires|pragma|invariant|spec\s+fun|fun)\b")
_CONTINUES = (";", "{", "(", ",", "&&", "||", "==>", "+", "-", "*", "/", "%", "=", "<", ">", "!", "[")


def extract_fenced(text: str) -> List[str]:
    """Contents of the fenced code blocks, preferring ones tagged ``move``."""
    blocks = [(lang.lower(), body) for lang, body in _FENCE.findall(text)]
    tagged = [b for lang, b in blocks if lang == "move"]
    return tagged or [b for lang, b in blocks if lang in ("", "msl", "rust")]


def sanitize(text: str) -> str:
    """Repair the formatting slips models commonly make in spec items."""
    text = text.replace("\r\n", "\n").replace("`", "").replace("\t", "    ")
    text = re.sub(r"//[^\n]*", "", text)
    text = re.sub(r"[ ]+\n", "\n", text)
    text = re.sub(r"\s+;", ";", text)
    text = re.sub(r";(\s*;)+", ";", text)
    lines = text.split("\n")
    out = []
    for i, line in enumerate(lines):
        s = line.strip()
        if s and _ITEM_START.match(s) and not s.startswith(("spec", "fun")) \
                and not s.endswith(_CONTINUES) and not s.endswith("}"):
            nxt = next((l.strip() for l in lines[i + 1:] if l.strip()), None)
            if nxt is None or _ITEM_START.match(nxt) or nxt.startswith(("}", "spec ")):
                line = line.rstrip() + ";"
        out.append(line)
    return "\n".join(l.rstrip() for l in out).strip() + "\n"


def _match_brace(text: str, open_at: int) -> int:
    depth = 0
    for i in range(open_at, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                return i
    return -1


_WRAPPER = re.compile(r"\bspec\s+(?!fun\b|module\b)(\w+)\s*\{")


def _unwrap(text: str) -> Tuple[str, List[Tuple[str, str]]]:
    """Split ``spec name { ... }`` wrappers out of ``text``. Returns the
    remaining bare text and the (name, body) of each wrapper."""
    wrapped = []
    rest = []
    pos = 0
    while True:
        m = _WRAPPER.search(text, pos)
        if not m:
            rest.append(text[pos:])
            break
        close = _match_brace(text, m.end() - 1)
        if close < 0:
            rest.append(text[pos:])
            break
        rest.append(text[pos:m.start()])
        wrapped.append((m.group(1), text[m.end():close]))
        pos = close + 1
    return "".join(rest), wrapped


def _split_items(text: str) -> List[str]:
    """Cut at top-level semicolons; a ``spec fun`` item ends at its closing brace."""
    items, buf, depth = [], [], 0
    for ch in text:
        buf.append(ch)
        if ch in "({[":
            depth += 1
        elif ch in ")}]":
            depth -= 1
            if depth == 0 and ch == "}" and re.match(r"\s*(spec\s+)?fun\b", "".join(buf)):
                items.append("".join(buf))
                buf = []
        elif ch == ";" and depth <= 0:
            items.append("".join(buf))
            buf, depth = [], 0
    tail = "".join(buf).strip()
    if tail:
        items.append(tail)
    return [i.strip() for i in items if i.strip() and i.strip() != ";"]


def parse_clause_items(text: str, target: str) -> Tuple[A.SpecBlock, List[str]]:
    """Parse sanitized bare items one at a time; items that do not parse are
    dropped with a diagnostic."""
    bindings, clauses, funs, pragmas, diags = [], [], [], [], []
    for item in _split_items(text):
        try:
            b = parse_spec_items(item, target)
        except (MoveSyntaxError, UnsupportedConstruct) as e:
            diags.append(f"dropped `{' '.join(item.split())}`: {e}")
            continue
        bindings += b.bindings
        clauses += b.clauses
        funs += b.helper_funs
        pragmas += b.pragmas
    block = A.SpecBlock(target, tuple(bindings), tuple(clauses), tuple(funs), tuple(pragmas))
    return A.number_nodes(block), diags


def _dedupe_bindings(bindings: Sequence[A.Binding], diags: List[str]) -> Tuple[A.Binding, ...]:
    seen: Dict[str, A.Binding] = {}
    for b in bindings:
        if b.name in seen:
            if seen[b.name] != b:
                diags.append(f"dropped second binding of '{b.name}'")
            continue
        seen[b.name] = b
    return tuple(seen.values())


def _with_diagnostics(raw: str, diags: Sequence[str]) -> str:
    if not diags:
        return raw
    return raw.rstrip() + "\n\n-- parse diagnostics --\n" + "\n".join(diags) + "\n"


# ------------------------------------------------------------- agents


def gen_clauses(cls: ClauseClass, ctx: GenerationContext, bundle: PromptBundle, llm: ChatBackend,
                settings: AgentSettings = AgentSettings()) -> ClauseSnippet:
    """Ask one agent for its clauses and parse the answer.

    Raises ``EmptyOutput`` when nothing usable comes back, including a
    modifies request for a context that never writes global storage."""
    cls = ClauseClass(cls)
    if cls is ClauseClass.LOOP_INVARIANT and not ctx.metadata.has_loops:
        raise ValueError("loop-invariant agent needs a target with loops")
    if cls is ClauseClass.MODIFIES and not ctx.metadata.has_global_mut:
        raise EmptyOutput("target writes no global storage; nothing to mark as modified")
    raw = llm.complete(make_request(bundle, settings))
    blocks = extract_fenced(raw)
    if not blocks:
        raise EmptyOutput("no fenced code block in model output", raw)
    if cls is ClauseClass.LOOP_INVARIANT:
        return _loop_snippet(ctx, raw, blocks)
    return _clause_snippet(cls, ctx, raw, blocks)


def _clause_snippet(cls: ClauseClass, ctx: GenerationContext, raw: str, blocks: Sequence[str]) -> ClauseSnippet:
    target = ctx.fn_name
    diags: List[str] = []
    bindings, clauses, funs = [], [], []
    callee: Dict[str, List[A.Clause]] = {}
    callee_names = {label.split("::")[-1]: label for label, _ in ctx.dependencies}
    for body in blocks:
        bare, wrapped = _unwrap(sanitize(body))
        pieces = [(target, bare)]
        for name, inner in wrapped:
            if name == target:
                pieces.append((target, inner))
            elif cls is ClauseClass.MODIFIES and name in callee_names:
                block, d = parse_clause_items(sanitize(inner), name)
                diags += d
                mods = [c for c in block.clauses if c.kind == "modifies"]
                if mods:
                    callee.setdefault(callee_names[name], []).extend(mods)
            else:
                diags.append(f"ignored spec block for '{name}'")
        for _, text in pieces:
            block, d = parse_clause_items(text, target)
            diags += d
            bindings += block.bindings
            funs += block.helper_funs
            for c in block.clauses:
                if c.kind == cls.clause_kind:
                    clauses.append(c)
                else:
                    diags.append(f"dropped `{clause_str(c, depth=0).strip()}`: "
                                 f"the {cls.value} agent only keeps {cls.clause_kind} clauses")
    uniq: List[A.Clause] = []
    for c in clauses:
        if c not in uniq:
            uniq.append(c)
    if cls is ClauseClass.MODIFIES:
        bindings, funs = [], []
    if not uniq and not callee:
        raise EmptyOutput(f"no parseable {cls.clause_kind} clause in model output",
                          _with_diagnostics(raw, diags))
    return ClauseSnippet(cls, _dedupe_bindings(bindings, diags), tuple(uniq), None,
                         {k: tuple(v) for k, v in callee.items()},
                         _with_diagnostics(raw, diags), tuple(funs), tuple(diags))


def _function_text(text: str, name: str) -> Optional[str]:
    m = re.search(r"((?:public(?:\([a-z]+\))?\s+|entry\s+)*)fun\s+" + re.escape(name) + r"\b", text)
    if not m:
        return None
    brace = text.find("{", m.end())
    if brace < 0:
        return None
    close = _match_brace(text, brace)
    return text[m.start():close + 1] if close > 0 else None


def _strip_invariants(fn: A.FunctionDef) -> A.FunctionDef:
    def clear(n):
        return replace(n, invariants=()) if isinstance(n, A.While) else n
    return A.transform(fn, clear)


def _loop_snippet(ctx: GenerationContext, raw: str, blocks: Sequence[str]) -> ClauseSnippet:
    diags: List[str] = []
    for body in blocks:
        text = _function_text(body.replace("`", ""), ctx.fn_name)
        if text is None:
            diags.append(f"no definition of '{ctx.fn_name}' in fenced block")
            continue
        try:
            fn = parse_function(text)
        except (MoveSyntaxError, UnsupportedConstruct) as e:
            diags.append(f"annotated function does not parse: {e}")
            continue
        if _strip_invariants(fn) != _strip_invariants(ctx.function):
            diags.append("annotated function changes the code, not only its invariants")
            continue
        if not any(isinstance(n, A.While) and n.invariants for n in A.walk(fn)):
            diags.append("annotated function carries no loop invariant")
            continue
        fn = replace(fn, visibility=ctx.function.visibility, attrs=ctx.function.attrs)
        return ClauseSnippet(ClauseClass.LOOP_INVARIANT, annotated_function=A.number_nodes(fn),
                             raw_model_text=_with_diagnostics(raw, diags), diagnostics=tuple(diags))
    raise EmptyOutput("no usable annotated function in model output", _with_diagnostics(raw, diags))


def _snippet_text(s: ClauseSnippet, target: str) -> str:
    if s.annotated_function is not None:
        return print_function(s.annotated_function)
    lines = [print_spec_fun(f) for f in s.helper_funs]
    lines += [_binding_str(b) for b in s.bindings]
    lines += [clause_str(c, depth=0).strip() for c in s.clauses]
    for name, cs in s.callee_snippets.items():
        lines.append(f"spec {name.split('::')[-1]} {{")
        lines += ["    " + clause_str(c, depth=0).strip() for c in cs]
        lines.append("}")
    return "\n".join(lines) + "\n"


def _binding_str(b: A.Binding) -> str:
    block = print_spec_block(A.SpecBlock("x", bindings=(b,)))
    return block.splitlines()[1].strip()


def snippet_block(s: ClauseSnippet, target: str) -> A.SpecBlock:
    """A snippet's own items as a spec block for ``target``."""
    return A.SpecBlock(target, s.bindings, s.clauses, s.helper_funs)


# ------------------------------------------------------------ precheck


def precheck_aborts_false(module: A.SourceModule, fn: A.FunctionDef, prover: ProverConfig,
                          render=None) -> Optional[ClauseSnippet]:
    """``aborts_if false;`` as the whole abort specification, if the prover
    accepts it. Any non-passing verdict, a timeout included, yields None."""
    from .coverage import with_spec
    from .frontend.printer import pretty_print

    clause = A.Clause("aborts_if", A.BoolLit(False))
    block = A.SpecBlock(fn.name, clauses=(clause,))
    m = with_spec(module, fn, block)
    source = render(m) if render is not None else pretty_print(m)
    verdict = verify(source, prover)
    if verdict.kind is not VerdictKind.PASS:
        log.debug("aborts_if false precheck on %s: %s", fn.name, verdict.kind.value)
        return None
    return ClauseSnippet(ClauseClass.ABORTS_IF, clauses=(clause,), raw_model_text="(precheck)")


# ---------------------------------------------------------- summarizer


def _clip(text: str, limit: int) -> str:
    text = text.strip()
    marker = "\n[... truncated]"
    return text if len(text) <= limit else text[: limit - len(marker)].rstrip() + marker


def summarize_error(verdict: ProverVerdict, llm: ChatBackend, settings: AgentSettings = AgentSettings(),
                    limit: int = SUMMARY_LIMIT) -> str:
    raw = verdict.summary(limit)
    try:
        req = ChatRequest.make(settings.model, load_prompt("summarizer").strip(),
                               "Prover output:\n\n" + raw + "\n",
                               temperature=settings.temperature, max_tokens=settings.max_tokens)
        text = llm.complete(req)
    except BackendError as e:
        log.warning("error summarizer unavailable (%s); passing the raw diagnostic through", e)
        return _clip(raw, limit)
    text = text.strip()
    return _clip(text, limit) if text else _clip(raw, limit)


# ------------------------------------------------------------ abstract


def placeholder_abstract(target: str) -> A.SpecBlock:
    return A.number_nodes(A.SpecBlock(target, clauses=(A.Clause("aborts_if", A.BoolLit(True), True),)))


def gen_abstract_spec(ctx: GenerationContext, llm: ChatBackend, settings: AgentSettings = AgentSettings(),
                      guidance: Sequence[str] = ()) -> A.SpecBlock:
    """An abstract specification: every clause marked ``[abstract]``, helpers
    possibly bodiless. Backend failure or an unusable answer gives the
    placeholder block."""
    target = ctx.fn_name
    user = [f"Target function: {target}", "", ctx.render().rstrip()]
    if guidance:
        user += ["", "Concrete specifications failed with:"] + [f"- {g}" for g in guidance]
    user += ["", "Answer with one ```move fenced block."]
    try:
        req = ChatRequest.make(settings.model, load_prompt("common").strip() + "\n\n"
                               + load_prompt("abstract").strip() + "\n", "\n".join(user) + "\n",
                               temperature=settings.temperature, max_tokens=settings.max_tokens)
        raw = llm.complete(req)
    except BackendError as e:
        log.warning("abstract spec agent unavailable (%s); using placeholder", e)
        return placeholder_abstract(target)
    bindings, clauses, funs = [], [], []
    for body in extract_fenced(raw):
        bare, wrapped = _unwrap(sanitize(body))
        texts = [bare] + [inner for name, inner in wrapped if name == target]
        for text in texts:
            block, _ = parse_clause_items(text, target)
            bindings += block.bindings
            funs += block.helper_funs
            clauses += [replace(c, abstract=True) for c in block.clauses
                        if c.kind in ("aborts_if", "ensures", "requires")]
    if not clauses:
        return placeholder_abstract(target)
    seen = set()
    helpers = []
    for f in funs:
        if f.name not in seen:
            seen.add(f.name)
            helpers.append(f)
    block = A.SpecBlock(target, _dedupe_bindings(bindings, []), tuple(clauses), tuple(helpers))
    return A.number_nodes(canonical_block(block))
