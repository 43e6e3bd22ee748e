import pytest

from scripted import FIXTURES
from msgpipe.deps import slice
from msgpipe.frontend import check_function, load_workspace, parse, print_function
from msgpipe.frontend import ast as A
from msgpipe.inline import SignatureMismatch, inline_best_effort, substitute

CORPUS = FIXTURES / "corpus"


@pytest.fixture(scope="module")
def ws():
    return load_workspace([CORPUS])


def _mut_borrows(node):
    return sum(isinstance(n, A.BorrowGlobal) and n.mut for n in A.walk(node))


def test_transfer_golden(ws):
    r = inline_best_effort(slice(ws, "coin::transfer"))
    text = print_function(r.result)
    assert text.startswith(
        "public fun transfer(from: &signer, to: address, amount: u64) acquires Balance {\n"
        "    let addr__inl1 = signer::address_of(from);\n"
        "    let amount__inl1 = amount;\n")
    assert "    let check = Coin { value: amount__inl1 };\n" in text
    assert "    let addr__inl2 = to;\n    let check__inl2 = check;\n" in text


def test_borrow_count_is_preserved(ws):
    c = slice(ws, "coin::transfer")
    r = inline_best_effort(c)
    assert _mut_borrows(r.result.body) == _mut_borrows(c.function.body) + sum(
        _mut_borrows(f.body) for f in c.callees)


def test_no_callees_means_no_change(ws):
    c = slice(ws, "flags::both")
    r = inline_best_effort(c)
    assert (r.inlined, r.skipped) == ((), ())
    assert r.result == c.function


def test_collisions_are_renamed(ws):
    r = inline_best_effort(slice(ws, "shadowing::outer"))
    assert r.inlined == ("shadowing::add",)
    assert "let x__inl1 = a__inl1 + b__inl1;" in print_function(r.result)
    assert check_function(r.module, r.result, ws) == []


def test_nested_callees_inline_transitively(ws):
    r = inline_best_effort(slice(ws, "nested_calls::top"))
    assert set(r.inlined) == {"nested_calls::middle", "nested_calls::bottom"}
    assert not [n for n in A.walk(r.result.body) if isinstance(n, A.Call)]


def test_native_callee_is_skipped(ws):
    r = inline_best_effort(slice(ws, "hashing::digest_len"))
    assert r.skipped == (("hashing::digest", "Native"),)


def test_rerun_inlines_nothing_more(ws):
    r = inline_best_effort(slice(ws, "coin::transfer"))
    again = inline_best_effort(slice([r.module], "coin::transfer"))
    assert again.inlined == ()
    assert again.result == r.result


def test_report_text(ws):
    text = inline_best_effort(slice(ws, "greedy_skip::step")).text()
    assert "inlined: greedy_skip::double\n" in text
    assert "  greedy_skip::peek: MissingAcquires\n" in text


def test_literal_callee_replaces_call():
    m = parse("module 0x1::m {\n    fun one(): u64 { 1 }\n    fun f(): u64 { one() + 1 }\n}\n")
    r = inline_best_effort(slice([m], "m::f"))
    assert print_function(r.result) == "fun f(): u64 {\n    1 + 1\n}\n"


def test_arity_mismatch_is_rejected():
    m = A.number_nodes(parse("module 0x1::m {\n    fun g(x: u64): u64 { x }\n    fun f(): u64 { g(1) }\n}\n"))
    f, g = m.function("f"), m.function("g")
    call = next(n for n in A.walk(f.body) if isinstance(n, A.Call))
    with pytest.raises(SignatureMismatch):
        substitute(f.body, call.nid, A.FunctionDef("g", (), body=g.body))
