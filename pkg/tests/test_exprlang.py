import math

import pytest
from hypothesis import given, settings, strategies as st

from delaystack.exprlang import (BinOp, Call, ExprDomainError, ExprError, ExprSyntaxError, Neg, Num,
                                 UnboundVariableError, Var, evaluate, free_vars, parse, to_source)


def test_parse_tree_shape():
    assert parse("exp(-t)*2") == BinOp("*", Call("exp", (Neg(Var("t")),)), Num(2.0))


@pytest.mark.parametrize("src, value", [
    ("1+2*3", 7.0),
    ("2^3^2", 512.0),
    ("-2^2", -4.0),
    ("(1+2)*3", 9.0),
    ("8/4/2", 1.0),
    ("10-4-3", 3.0),
    ("1.5e1 + .5", 15.5),
    ("pow(2, 10)", 1024.0),
    ("sign(-3) + sqrt(16)", 3.0),
])
def test_precedence_and_associativity(src, value):
    assert evaluate(src) == value


def test_builtin_examples():
    assert evaluate("min(1, abs(x))", {"x": -3.0}) == 1.0
    assert evaluate("select(t-1, 5, 7)", {"t": 0.5}) == 7.0
    assert evaluate("select(t-1, 5, 7)", {"t": 1.0}) == 5.0
    assert evaluate("log(eta^(-1)*c)", {"eta": 0.5, "c": 2.0}) == pytest.approx(math.log(4.0), abs=1e-12)
    assert evaluate("max(1, 4, 2)") == 4.0


@pytest.mark.parametrize("src", ["log(0)", "log(-1)", "sqrt(-1)", "1/0", "(-8)^0.5"])
def test_domain_errors_raise(src):
    with pytest.raises(ExprDomainError):
        evaluate(src)


def test_unbound_variable():
    with pytest.raises(UnboundVariableError) as info:
        evaluate("x + 1")
    assert info.value.name == "x"


@pytest.mark.parametrize("src, names", [
    ("exp(-t)", {"t"}),
    ("3.14", set()),
    ("a*x + b", {"a", "x", "b"}),
])
def test_free_vars(src, names):
    assert free_vars(parse(src)) == names


@pytest.mark.parametrize("src, offset", [("1 +", 3), ("2 * )", 4), ("foo(1)", 0), ("exp(1, 2)", 0), ("1 $ 2", 2)])
def test_syntax_errors_carry_offsets(src, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(src)
    assert info.value.offset == offset


def test_expected_token_set_reported():
    with pytest.raises(ExprSyntaxError) as info:
        parse("1 +")
    assert "(" in info.value.expected


def test_array_evaluation_is_elementwise():
    import numpy as np
    out = evaluate("select(t, t^2, 0)", {"t": np.array([-1.0, 2.0])})
    assert list(out) == [0.0, 4.0]


# ---------------------------------------------------------------- properties

_names = st.sampled_from(["t", "x", "eta", "b"])
_leaf = st.one_of(st.floats(min_value=0, max_value=1e6, allow_nan=False).map(Num), _names.map(Var))


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda a: BinOp(*a)),
        st.tuples(st.sampled_from(["exp", "log", "sin", "abs", "sqrt"]), children).map(lambda a: Call(a[0], (a[1],))),
        st.tuples(children, children, children).map(lambda a: Call("select", a)),
        st.lists(children, min_size=1, max_size=3).map(lambda a: Call("max", tuple(a))),
    )


trees = st.recursive(_leaf, _extend, max_leaves=12)


@given(trees)
def test_print_parse_round_trip(tree):
    assert parse(to_source(tree)) == tree


@given(trees, st.floats(-3, 3), st.floats(0.1, 3))
def test_evaluation_is_pure(tree, x, eta):
    env = {"t": 0.5, "x": x, "eta": eta, "b": 0.2}
    try:
        first = evaluate(tree, env)
    except ExprError:
        with pytest.raises(ExprError):
            evaluate(tree, env)
        return
    second = evaluate(tree, env)
    assert repr(first) == repr(second)


_tokens = st.sampled_from(["1", "2.5", "x", "t", "+", "-", "*", "/", "^", "(", ")", ",", "exp", "select",
                           "max", "@", " ", "1e", ".", "é"])


@settings(max_examples=300)
@given(st.lists(_tokens, max_size=25))
def test_fuzz_parse_or_positioned_error(parts):
    src = "".join(parts)
    try:
        parse(src)
    except ExprSyntaxError as exc:
        assert 0 <= exc.offset <= len(src.encode("utf-8"))
