import pytest

import scripted
from msgpipe.agents import (AgentSettings, EmptyOutput, build_bundle, extract_fenced, gen_abstract_spec, gen_clauses,
                            load_prompt, make_request, parse_clause_items, precheck_aborts_false, sanitize,
                            summarize_error)
from msgpipe.deps import ContextMode, build_context, slice
from msgpipe.ensemble import as_snippet
from msgpipe.frontend import ast as A
from msgpipe.frontend import clause_str, parse, parse_spec_items, print_spec_block, print_spec_fun
from msgpipe.llm import FailingBackend, ReplayBackend, ScriptedBackend
from msgpipe.prover import MockRule, ProverConfig, VerdictKind
from msgpipe.snippets import ClauseClass

E, A_IF, M, L = ClauseClass.ENSURES, ClauseClass.ABORTS_IF, ClauseClass.MODIFIES, ClauseClass.LOOP_INVARIANT


@pytest.fixture(scope="module")
def replay():
    return ReplayBackend(scripted.REPLAY_STORE)


def answer(text):
    return ScriptedBackend(lambda req: text)


# ------------------------------------------------------------- prompts


def test_system_prompts_differ_per_class():
    ctx = scripted.transfer_context()
    systems = {c: build_bundle(c, ctx).system for c in (M, A_IF, E)}
    assert len(set(systems.values())) == 3
    assert all(s.startswith(load_prompt("common").strip()) for s in systems.values())


def test_user_message_sections_in_order():
    ctx = scripted.transfer_context()
    prior = parse_clause_items("ensures true;", "transfer")[0]
    user = build_bundle(E, ctx, ("fix it",), as_snippet(prior), "--- a\n+++ b\n").user
    keys = ["Target function: transfer", "// target: coin::transfer", "Your previous answer:",
            "Fix these problems:\n- fix it", "```diff", "Answer with one ```move fenced block."]
    positions = [user.index(k) for k in keys]
    assert positions == sorted(positions)


def test_modifies_prompt_lists_writers():
    user = build_bundle(M, scripted.transfer_context()).user
    assert "Callees that write global storage: coin::withdraw, coin::deposit" in user


def test_loop_prompt_has_examples():
    system = build_bundle(L, scripted.exp_context()).system
    assert "{examples}" not in system and "invariant" in system


def test_request_carries_settings():
    req = make_request(build_bundle(E, scripted.transfer_context()), AgentSettings("m1", 0.5, 99))
    assert (req.model, req.temperature, req.max_tokens) == ("m1", 0.5, 99)
    assert [m.role for m in req.messages] == ["system", "user"]


# ------------------------------------------------------------ sanitizer


def test_only_move_fences_are_read():
    assert extract_fenced("```rust\nensures a;\n```\n```move\nensures b;\n```") == ["ensures b;\n"]
    assert extract_fenced("```\nensures a;\n```") == ["ensures a;\n"]
    assert extract_fenced("no fences here") == []


def test_sanitize_repairs_small_slips():
    assert sanitize("ensures `x` == 1 ;;  // note\nensures y == 2\naborts_if z;\n") == (
        "ensures x == 1;\nensures y == 2;\naborts_if z;\n")


def test_branch_form_is_rejected():
    block, diags = parse_clause_items("ensures if (c) x else y;\nensures result == 1;", "f")
    assert len(block.clauses) == 1
    assert diags == ["dropped `ensures if (c) x else y;`: 1:9: branch form disallowed; use ==>"]


def test_spec_wrapper_and_helpers():
    block, diags = parse_clause_items(
        "spec fun twice(x: u64): u64 { x * 2 }\nlet a = twice(x);\nensures result == a;", "f")
    assert diags == []
    assert [f.name for f in block.helper_funs] == ["twice"]
    assert [b.name for b in block.bindings] == ["a"]


# -------------------------------------------------------------- agents


def test_ensures_agent_with_guidance(replay):
    s = scripted.agent_calls(replay)["ensures_fixed"]
    assert s.cls is E
    assert [clause_str(c, depth=0).strip() for c in s.clauses] == [
        "ensures balance_from_post == balance_from - amount;"]
    assert [b.name for b in s.bindings] == ["balance_from", "balance_from_post"]


def test_modifies_agent_without_global_writes():
    ctx = build_context(slice([parse("module 0x1::m {\n    fun f(): u64 { 1 }\n}\n")], "m::f"), ContextMode.V2)
    backend = answer("unused")
    with pytest.raises(EmptyOutput):
        gen_clauses(M, ctx, build_bundle(M, ctx), backend)
    assert backend.requests == []


def test_modifies_agent_collects_callee_blocks():
    ctx = scripted.transfer_context()
    s = gen_clauses(M, ctx, build_bundle(M, ctx), answer(scripted.fence(scripted.TRANSFER["modifies"])))
    assert len(s.clauses) == 2
    assert sorted(s.callee_snippets) == ["coin::deposit", "coin::withdraw"]


def test_agent_keeps_only_its_kind():
    ctx = scripted.transfer_context()
    s = gen_clauses(A_IF, ctx, build_bundle(A_IF, ctx), answer(scripted.fence("aborts_if amount > 5;\nensures true;")))
    assert [c.kind for c in s.clauses] == ["aborts_if"]
    assert "the AbortsIf agent only keeps aborts_if clauses" in s.raw_model_text


def test_no_fence_is_empty_output():
    ctx = scripted.transfer_context()
    with pytest.raises(EmptyOutput) as e:
        gen_clauses(E, ctx, build_bundle(E, ctx), answer("I think it is fine."))
    assert e.value.raw == "I think it is fine."


def test_loop_agent_requires_loops():
    ctx = scripted.transfer_context()
    with pytest.raises(ValueError):
        gen_clauses(L, ctx, build_bundle(E, ctx), answer(""))


def test_loop_agent_returns_annotated_function():
    ctx = scripted.exp_context()
    s = gen_clauses(L, ctx, build_bundle(L, ctx), answer(scripted.fence(scripted.EXP["loop"])))
    assert s.annotated_function.name == "exp"
    loops = [n for n in A.walk(s.annotated_function) if isinstance(n, A.While)]
    assert len(loops[0].invariants) == 1


def test_loop_agent_rejects_changed_code():
    ctx = scripted.exp_context()
    changed = scripted.EXP["loop"].replace("r = r * base;", "r = r + base;")
    with pytest.raises(EmptyOutput) as e:
        gen_clauses(L, ctx, build_bundle(L, ctx), answer(scripted.fence(changed)))
    assert "changes the code" in e.value.raw


# ------------------------------------------------------------ precheck


PURE = parse("module 0x1::m {\n    fun add(a: u64, b: u64): u64 { a + b }\n}\n")


def _prover(kind):
    return ProverConfig.mock([MockRule(r"aborts_if false;", kind, "error: abort not covered by any `aborts_if` clauses")])


def test_precheck_passes_for_abort_free_function():
    s = precheck_aborts_false(PURE, PURE.function("add"), _prover(VerdictKind.PASS))
    assert s.clauses == (A.Clause("aborts_if", A.BoolLit(False)),)


def test_precheck_is_absent_when_refuted():
    coin = parse((scripted.FIXTURES / "corpus" / "coin.move").read_text(encoding="utf-8"))
    assert precheck_aborts_false(coin, coin.function("withdraw"), _prover(VerdictKind.COUNTEREXAMPLE)) is None


def test_precheck_fails_open_on_timeout():
    assert precheck_aborts_false(PURE, PURE.function("add"), _prover(VerdictKind.TIMEOUT)) is None


# ---------------------------------------------------------- summarizer


def test_summary_of_objectcore_abort(replay):
    text = scripted.agent_calls(replay)["summary_objectcore"]
    assert "aborts_if" in text and "ObjectCore" in text


def test_summary_names_unknown_function(replay):
    assert "spec_sub" in scripted.agent_calls(replay)["summary_unbound"]


def test_summary_passthrough_on_outage():
    _, v = scripted.diagnostic("02_post_condition.txt")
    text = summarize_error(v, FailingBackend())
    assert text.startswith("error: post-condition does not hold")


# ------------------------------------------------------------- abstract


def test_abstract_spec_for_exp(replay):
    block = scripted.agent_calls(replay)["abstract_exp"]
    text = print_spec_block(block)
    assert "ensures [abstract] result == spec_exp(base, e);" in text
    assert all(c.abstract for c in block.clauses)
    assert print_spec_fun(block.helper_funs[0]).strip() == "spec fun spec_exp(base: u64, e: u64): u64;"


def test_abstract_placeholder_on_outage():
    block = gen_abstract_spec(scripted.exp_context(), FailingBackend())
    assert "aborts_if [abstract] true;" in print_spec_block(block)


def test_abstract_block_round_trips():
    ctx = build_context(slice([PURE], "m::add"), ContextMode.V2)
    block = gen_abstract_spec(ctx, answer(scripted.fence("ensures result == a + b;\nmodifies global<R>(a);")))
    text = print_spec_block(block)
    assert "modifies" not in text
    inner = text[text.index("{") + 1:text.rindex("}")]
    again = parse_spec_items(inner, "add")
    assert print_spec_block(again) == text
