import pytest

from scripted import FIXTURES
from msgpipe.deps import (ContextMode, TargetNotFound, analyze_report, build_context, reachable,
                          resolve_target, select_targets, slice)
from msgpipe.frontend import load_workspace, parse, parse_many, print_function
from msgpipe.frontend import ast as A
from msgpipe.inline import inline_best_effort

CORPUS = FIXTURES / "corpus"


@pytest.fixture(scope="module")
def ws():
    return load_workspace([CORPUS])


def test_transfer_closure(ws):
    c = slice(ws, "coin::transfer")
    assert c.callee_paths == ("coin::withdraw", "coin::deposit")
    assert set(c.struct_paths) == {"coin::Coin", "coin::Balance"}
    assert c.constant_paths == ("coin::EINSUFFICIENT_BALANCE",)
    assert "signer::address_of" in c.external
    assert not c.cyclic


def test_leaf_function(ws):
    c = slice(ws, "vault::lock")
    assert c.callee_paths == ()
    assert c.struct_paths == ("vault::Vault",)


def test_cross_module_chain_is_callees_first():
    src = """
module 0x1::a {
    use 0x1::b;
    public fun f(x: u64): u64 { b::g(x) }
}
module 0x1::b {
    public fun g(x: u64): u64 { h(x) + 1 }
    public fun h(x: u64): u64 { x }
}
"""
    c = slice(parse_many(src), "a::f")
    assert c.callee_paths == ("b::h", "b::g")


def test_recursion_is_flagged_not_rejected():
    src = """
module 0x1::r {
    fun even(n: u64): bool { if (n == 0) true else odd(n - 1) }
    fun odd(n: u64): bool { if (n == 0) false else even(n - 1) }
}
"""
    c = slice(parse_many(src), "r::even")
    assert c.callee_paths == ("r::odd",)
    assert c.cycles == (("r::even", "r::odd", "r::even"),)
    assert "recursive call cycle" in build_context(c, ContextMode.V2).render()


def test_native_callee_is_included_by_signature(ws):
    c = slice(ws, "hashing::digest_len")
    assert c.natives == ("hashing::digest",)
    ctx = build_context(c, ContextMode.V2)
    assert any("native fun digest" in s for s in ctx.dependency_sources)


def test_unknown_target(ws):
    with pytest.raises(TargetNotFound):
        slice(ws, "coin::nope")
    with pytest.raises(TargetNotFound):
        resolve_target(ws, "nope::transfer")


def test_address_qualified_target(ws):
    m, f = resolve_target(ws, "0x42::coin::transfer")
    assert (m.name, f.name) == ("coin", "transfer")


def test_reachable_helper():
    g = {"a": ("b",), "b": ("c", "a"), "c": ()}
    assert reachable(g, "a") == {"a", "b", "c"}
    assert reachable(g, "c") == set()


# ---------------------------------------------------------- contexts


def test_v2_context_lists_callees_canonically(ws):
    c = slice(ws, "coin::transfer")
    ctx = build_context(c, ContextMode.V2)
    assert ctx.target_source == print_function(c.function)
    srcs = dict(ctx.dependencies)
    assert srcs["coin::withdraw"] == print_function(c.callee("coin::withdraw")[1])
    assert srcs["coin::deposit"] == print_function(c.callee("coin::deposit")[1])
    assert ctx.metadata.has_global_mut and not ctx.metadata.has_loops
    assert ctx.metadata.callee_count == 2


def test_v1_context_has_no_calls_left(ws):
    c = slice(ws, "coin::transfer")
    ctx = build_context(c, ContextMode.V1, inline_best_effort(c))
    body = parse("module 0x42::coin {\n" + ctx.target_source + "}\n").functions[0].body
    assert not [n for n in A.walk(body) if isinstance(n, A.Call) and n.name in ("withdraw", "deposit")]
    assert ctx.metadata.callee_count == 0
    assert "inlined: coin::withdraw, coin::deposit" in ctx.notes


def test_v1_requires_inliner_output(ws):
    with pytest.raises(ValueError):
        build_context(slice(ws, "coin::transfer"), ContextMode.V1)


def test_loop_metadata(ws):
    assert build_context(slice(ws, "sum_loop::sum_to"), ContextMode.V2).metadata.has_loops
    assert not build_context(slice(ws, "flags::both"), ContextMode.V2).metadata.has_loops


def test_context_is_stable(ws):
    a = build_context(slice(ws, "coin::transfer"), ContextMode.V2).render()
    b = build_context(slice(load_workspace([CORPUS]), "coin::transfer"), ContextMode.V2).render()
    assert a == b


# ----------------------------------------------------------- targets


def test_select_targets_skips_native_and_unverified(ws):
    targets = select_targets(ws)
    assert "hashing::digest" not in targets and "hashing::digest_len" in targets
    assert "unverified::risky_mul" not in targets and "unverified::checked_add" in targets
    assert [t for t in targets if t.startswith("coin::")] == ["coin::transfer", "coin::withdraw", "coin::deposit"]


def test_analyze_report(ws):
    text = analyze_report(slice(ws, "hashing::digest_len"))
    assert "native (signature only):\n  hashing::digest\n" in text
    assert "external (outside workspace):\n  vector::length\n" in text
    assert text.endswith("cycles: none\n")
