"""Scripted model answers for the fixture scenarios.

``respond`` is the single source of model behaviour for tests. The replay
store under fixtures/replay is recorded from it by fixtures/replay/record.py.
"""

import re
from pathlib import Path

from msgpipe.deps import ContextMode
from msgpipe.frontend import load_workspace
from msgpipe.llm import ChatRequest
from msgpipe.orchestrator import RunConfig
from msgpipe.prover import ProverConfig

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
SUITE_DIR = FIXTURES / "suite"
SUITE_RULES = FIXTURES / "mock" / "suite.rules"
REPLAY_STORE = FIXTURES / "replay" / "scenarios.jsonl"
CLOCK = "2026-01-01T00:00:00+00:00"

# guidance text for the stand-alone agent recordings
FIXED_GUIDANCE = ("Avoid undefined functions: state the subtraction directly.",)


def fence(body: str, chatter: str = "Here are the clauses.") -> str:
    return f"{chatter}\n\n```move\n{body.strip()}\n```\n\nLet me know if you need anything else.\n"


def _kind(system: str) -> str:
    if system.startswith("You read Move Prover error output"):
        return "summary"
    if system.startswith("You merge MSL clauses"):
        return "polish"
    for key, name in (("Task: write the `aborts_if`", "aborts_if"), ("Task: write the `modifies`", "modifies"),
                      ("Task: write the `ensures`", "ensures"), ("Task: add loop invariants", "loop"),
                      ("Task: concrete specifications", "abstract")):
        if key in system:
            return name
    return "unknown"


TRANSFER = {
    "modifies": """
modifies global<Balance>(signer::address_of(from));
modifies global<Balance>(to);
spec withdraw {
    modifies global<Balance>(addr);
}
spec deposit {
    modifies global<Balance>(addr);
}
""",
    "aborts_if": """
let balance_from = global<Balance>(signer::address_of(from)).coin.value;
aborts_if !exists<Balance>(signer::address_of(from));
aborts_if balance_from < amount;
aborts_if !exists<Balance>(to);
""",
    # first attempt leans on a helper that does not exist, and forgets a semicolon
    "ensures": """
let balance_from = global<Balance>(signer::address_of(from)).coin.value;
let post balance_from_post = global<Balance>(signer::address_of(from)).coin.value;
ensures balance_from_post == spec_sub(balance_from, amount)
""",
    "ensures_retry": """
let balance_from = global<Balance>(signer::address_of(from)).coin.value;
let post balance_from_post = global<Balance>(signer::address_of(from)).coin.value;
ensures balance_from_post == balance_from - amount;
""",
}

PAIR = {
    "ensures": "ensures result_1 == x / 2;",
    "ensures_coverage": "ensures result_1 == x / 2;\nensures result_2 == x - x / 2;",
}

EXP = {
    "aborts_if": "aborts_if base * base > MAX_U64;",
    "ensures": "ensures result == base * e;",
    "loop": """
public fun exp(base: u64, e: u64): u64 {
    let r = 1;
    let i = 0;
    while (i < e) {
        spec {
            invariant i <= e;
        };
        r = r * base;
        i = i + 1;
    };
    r
}
""",
    "abstract": """
// base raised to the power e; left uninterpreted
spec fun spec_exp(base: u64, e: u64): u64;
aborts_if [abstract] spec_exp(base, e) > MAX_U64;
ensures [abstract] result == spec_exp(base, e);
""",
}

BUMP = {
    "aborts_if": "aborts_if x + 1 > MAX_U64;",
    "ensures": "ensures result == x + 1;",
}


def _summary(user: str) -> str:
    if "spec_sub" in user:
        return ("The ensures clause calls spec_sub, which is not defined in the module or the spec block. "
                "Write the subtraction with the - operator instead.")
    if "ObjectCore" in user and "abort not covered" in user:
        return ("An abort is not covered: the function aborts when no ObjectCore resource exists at the "
                "object address. Add an aborts_if clause over !exists<ObjectCore>(addr).")
    if "abort not covered" in user:
        return "An abort path has no aborts_if clause; add one for the failing condition in the trace."
    if "post-condition does not hold" in user:
        return "An ensures clause is false for the values in the trace; compare it with the code."
    m = re.search(r"(unbound|undefined|no) function[^`]*`([^`]+)`", user)
    if m:
        return f"The spec block calls {m.group(2)}, which is not defined."
    return "The prover rejected these clauses."


def respond(req: ChatRequest) -> str:
    system = req.messages[0].content
    user = req.messages[-1].content
    kind = _kind(system)
    if kind == "summary":
        return _summary(user)
    m = re.search(r"Target function: (\w+)", user)
    target = m.group(1) if m else ""
    retry = "The prover rejected" in user
    refine = "```diff" in user
    if target == "transfer":
        if kind == "ensures" and retry:
            return fence(TRANSFER["ensures_retry"])
        if kind in TRANSFER:
            return fence(TRANSFER[kind])
    if target == "pair_of" and kind == "ensures":
        return fence(PAIR["ensures_coverage" if refine else "ensures"])
    if target == "exp" and kind in EXP:
        return fence(EXP[kind])
    if target == "bump" and kind in BUMP:
        return fence(BUMP[kind])
    if kind == "abstract":
        return "I could not find a useful abstraction."
    if kind == "ensures":
        return fence("ensures true;")
    if kind == "aborts_if":
        return fence("aborts_if false;")
    return "No clauses apply here."


# ---------------------------------------------------------- scenarios


def suite_workspace():
    return load_workspace([SUITE_DIR])


def mock_prover() -> ProverConfig:
    return ProverConfig.mock(SUITE_RULES, parallelism=1)


def config(**kw) -> RunConfig:
    kw.setdefault("prover", mock_prover())
    return RunConfig(**kw)


# (name, targets or None for select_targets, RunConfig keyword arguments)
SCENARIOS = (
    ("suite", None, {}),
    ("transfer-v2", ["coin::transfer"], {"context_modes": (ContextMode.V2,), "trials": 1}),
    ("transfer-v1", ["coin::transfer"], {"context_modes": (ContextMode.V1,), "trials": 1}),
    ("pair-coverage", ["pair::pair_of"], {"coverage_enabled": True, "trials": 1, "seed": 7}),
    ("exp", ["math::exp"], {"trials": 1}),
)


def scenario(name):
    for n, targets, kw in SCENARIOS:
        if n == name:
            return targets, config(**kw)
    raise KeyError(name)


# ------------------------------------------------ stand-alone agent calls

DIAGNOSTICS = FIXTURES / "diagnostics"


def diagnostic(name: str):
    """A labelled diagnostic fixture as (label, verdict)."""
    from msgpipe.prover import verdict_from_output
    lines = (DIAGNOSTICS / name).read_text(encoding="utf-8").splitlines(True)
    header = dict(kv.split("=", 1) for kv in lines[0][2:].split())
    exit_code = int(header["exit"]) if "exit" in header else None
    verdict = verdict_from_output("".join(lines[1:]), exit_code, 0.0, header.get("timed_out") == "true")
    return header["label"], verdict


def transfer_context(mode=ContextMode.V2):
    from msgpipe.deps import build_context, slice
    from msgpipe.inline import inline_best_effort
    closure = slice(suite_workspace(), "coin::transfer")
    report = inline_best_effort(closure) if mode is ContextMode.V1 else None
    return build_context(closure, mode, report)


def exp_context():
    from msgpipe.deps import build_context, slice
    return build_context(slice(suite_workspace(), "math::exp"), ContextMode.V2)


def agent_calls(llm):
    """Every direct agent call the agent tests replay, in a fixed order."""
    from msgpipe.agents import (ClauseClass, build_bundle, gen_abstract_spec, gen_clauses,
                                summarize_error)
    ctx = transfer_context()
    out = {}
    out["ensures_fixed"] = gen_clauses(ClauseClass.ENSURES, ctx,
                                       build_bundle(ClauseClass.ENSURES, ctx, FIXED_GUIDANCE), llm)
    out["summary_objectcore"] = summarize_error(diagnostic("01_abort_not_covered_objectcore.txt")[1], llm)
    out["summary_unbound"] = summarize_error(diagnostic("06_unbound_function.txt")[1], llm)
    out["abstract_exp"] = gen_abstract_spec(exp_context(), llm)
    return out
