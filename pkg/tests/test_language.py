import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from stepproof.modules import FlattenError, ScopeError, check_module, flatten
from stepproof.parser import ParseError, parse_expr, parse_module
from stepproof.printer import print_expr
from stepproof.syntax import (
    Bool, Id, Num, OpApp, OperatorDef, Prime, QedStep, Sequence, walk,
)

from strategies import exprs, rich_exprs

PROPERTY = settings(max_examples=400, deadline=None, suppress_health_check=list(HealthCheck))


def module(body: str, name: str = "M") -> str:
    return f"---- MODULE {name} ----\n{body}\n====\n"


def test_operator_definition_parses_to_body():
    m = parse_module(module("CONSTANT c\nP(x, y) == x + 2 * y"))
    (d,) = m.definitions
    assert isinstance(d, OperatorDef)
    assert d.name == "P" and d.params == ("x", "y")
    assert d.body == OpApp("plus", (Id("x"), OpApp("times", (Num(2), Id("y")))))


def test_theorem_without_proof():
    m = parse_module(module("THEOREM T == TRUE"))
    (t,) = m.theorems
    assert t.name == "T" and t.statement == Bool(True) and t.proof is None


def test_double_prime_is_rejected_with_position():
    with pytest.raises(ParseError) as err:
        parse_module(module("VARIABLE x\nA == x'' = 1"))
    assert err.value.kind == "double-prime"
    assert err.value.line == 3


def test_prime_inside_primed_expression_is_rejected():
    with pytest.raises(ParseError) as err:
        parse_expr("(x' + 1)'")
    assert err.value.kind == "double-prime"


def test_duplicate_label_and_definition():
    with pytest.raises(ParseError) as err:
        parse_module(module("A == l::(1) + l::(2)"))
    assert err.value.kind == "duplicate-label"
    with pytest.raises(ParseError) as err:
        parse_module(module("A == 1\nA == 2"))
    assert err.value.kind == "duplicate-definition"


def test_syntax_error_reports_line_and_column():
    with pytest.raises(ParseError) as err:
        parse_module(module("A == 1 + * 2"))
    assert err.value.kind == "syntax"
    assert err.value.format("f.mt").startswith("f.mt:2:")


def test_qed_step_ends_each_level():
    src = module("THEOREM T == TRUE\n<1>1. TRUE\n  OBVIOUS\n<1> QED BY <1>1")
    proof = parse_module(src).theorems[0].proof
    assert isinstance(proof, Sequence) and isinstance(proof.steps[-1], QedStep)
    with pytest.raises(ParseError):
        parse_module(module("THEOREM T == TRUE\n<1>1. TRUE\n  OBVIOUS"))


def test_print_examples():
    e = Prime(OpApp("eq", (Id("u"), OpApp("plus", (Id("v"), OpApp("times", (Num(2), Id("c"))))))))
    assert print_expr(e) == "(u = v + 2 * c)'"
    assert print_expr(Num(0)) == "0"


def test_precedence_conventions():
    assert parse_expr("~a /\\ b \\/ c => d") == parse_expr("(((~a) /\\ b) \\/ c) => d")
    assert parse_expr("a => b => c") == parse_expr("a => (b => c)")
    assert parse_expr("x + 1 = y") == parse_expr("(x + 1) = y")
    with pytest.raises(ParseError):
        parse_expr("a = b = c")


@PROPERTY
@given(rich_exprs)
def test_print_parse_round_trip(e):
    assert parse_expr(print_expr(e)) == e


@PROPERTY
@given(exprs)
def test_printer_is_a_fixpoint(e):
    once = print_expr(parse_expr(print_expr(e)))
    assert once == print_expr(e)


@PROPERTY
@given(exprs)
def test_parser_never_builds_nested_primes(e):
    parsed = parse_expr(print_expr(e) + "'") if not any(isinstance(x, Prime) for x in walk(e)) else e
    for node in walk(parsed):
        if isinstance(node, Prime):
            assert not any(isinstance(x, Prime) for x in walk(node.expr))


@settings(max_examples=500, deadline=None)
@given(st.binary(max_size=200))
def test_parser_is_total_on_bytes(data):
    text = data.decode("utf-8", errors="replace")
    for src in (text, module(text)):
        try:
            parse_module(src)
        except ParseError:
            pass


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=" ()[]<>=/\\~'!:,.{}0123456789abxyMODULE-TH", max_size=60))
def test_parser_is_total_on_token_soup(text):
    try:
        parse_module(module(text))
    except ParseError:
        pass


# ---------------------------------------------------------------- flattening


def test_flatten_without_extends_is_identity():
    root = parse_module(module("CONSTANT c\nA == c"))
    assert flatten(root, {}) == root


def test_extended_definitions_come_first():
    b = parse_module(module("Op == 1", "B"))
    a = parse_module(module("EXTENDS B\nMine == Op + 1", "A"))
    flat = flatten(a, {"B": b})
    assert [d.name for d in flat.definitions] == ["Op", "Mine"]
    check_module(flat)


def test_duplicate_across_modules_is_an_error():
    b = parse_module(module("Op == 1", "B"))
    c = parse_module(module("Op == 2", "C"))
    a = parse_module(module("EXTENDS B, C\nX == 0", "A"))
    with pytest.raises(FlattenError) as err:
        flatten(a, {"B": b, "C": c})
    assert err.value.kind == "duplicate-name"


def test_missing_module_and_cycle():
    a = parse_module(module("EXTENDS Nowhere", "A"))
    with pytest.raises(FlattenError) as err:
        flatten(a, {})
    assert err.value.kind == "missing-module"
    x = parse_module(module("EXTENDS Y", "X"))
    y = parse_module(module("EXTENDS X", "Y"))
    with pytest.raises(FlattenError) as err:
        flatten(x, {"Y": y})
    assert err.value.kind == "import-cycle"


def test_diamond_is_included_once_and_flatten_is_idempotent():
    d = parse_module(module("Base == 0", "D"))
    b = parse_module(module("EXTENDS D\nLeft == Base", "B"))
    c = parse_module(module("EXTENDS D\nRight == Base", "C"))
    a = parse_module(module("EXTENDS B, C\nTop == Left + Right", "A"))
    flat = flatten(a, {"B": b, "C": c, "D": d})
    assert [x.name for x in flat.definitions] == ["Base", "Left", "Right", "Top"]
    assert flatten(flat, {}) == flat


def test_scope_check_finds_undeclared_identifier():
    with pytest.raises(ScopeError):
        check_module(parse_module(module("A == undeclared + 1")))
