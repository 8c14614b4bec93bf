import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sasakilab import numkit as nk
from sasakilab.errors import SasakiLabError
from sasakilab.expr import (
    Expression,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    evaluate,
    parse_expression,
    to_string,
)

FUNCS = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh")
PARAMS = ("s1", "s2", "s3", "s4")


def gen_expr(rng: np.random.Generator, depth: int = 0) -> str:
    """Random sentence of the expression grammar, with varied spacing."""
    sp = lambda: " " * int(rng.integers(0, 2))  # noqa: E731
    if depth >= 4 or rng.uniform() < 0.25:
        k = rng.integers(4)
        if k == 0:
            return PARAMS[rng.integers(len(PARAMS))]
        if k == 1:
            return ("pi", "e")[rng.integers(2)]
        if k == 2:
            return str(int(rng.integers(0, 10)))
        return f"{rng.uniform(0, 5):.{int(rng.integers(1, 4))}f}"
    k = rng.integers(6)
    a = gen_expr(rng, depth + 1)
    if k == 0:
        b = gen_expr(rng, depth + 1)
        return f"{a}{sp()}{'+-*/'[rng.integers(4)]}{sp()}{b}"
    if k == 1:
        return f"-{a}"
    if k == 2:
        return f"({a})^{int(rng.integers(-2, 4))}"
    if k == 3:
        return f"{FUNCS[rng.integers(len(FUNCS))]}({sp()}{a}{sp()})"
    if k == 4:
        return f"({sp()}{a}{sp()})"
    return f"{PARAMS[rng.integers(len(PARAMS))]}^{int(rng.integers(0, 4))}"


def reference_eval(text: str, env: dict) -> float:
    """Independent evaluator: Python's own parser with math functions."""
    ns = {f: getattr(math, f) for f in FUNCS}
    ns.update(pi=math.pi, e=math.e, **{k: float(v) for k, v in env.items()})
    return float(eval(text.replace("^", "**"), {"__builtins__": {}}, ns))


def test_parameter_reference():
    node = parse_expression("s1", 2)
    assert to_string(node) == "s1"


def test_spec_values():
    assert Expression("cos(s1)*(1+0.3*sin(s2))", 2)([0.0, 0.0]) == pytest.approx(1.0)
    assert Expression("s1 - s2 ^ 2", 2)([1.0, 3.0]) == pytest.approx(-8.0)
    assert Expression("-s1^2", 2)([2.0, 0.0]) == pytest.approx(-4.0)
    assert Expression("2^-1", 1)([0.0]) == pytest.approx(0.5)
    assert Expression("8/2/2 - 1 - 1", 1)([0.0]) == pytest.approx(0.0)
    assert Expression("--s1", 1)([3.0]) == pytest.approx(3.0)


def test_roundtrip_10000_generated():
    rng = np.random.default_rng(20240)
    for _ in range(10_000):
        text = gen_expr(rng)
        tree = parse_expression(text)
        assert parse_expression(to_string(tree)) == tree, text


@st.composite
def grammar_text(draw):
    return gen_expr(np.random.default_rng(draw(st.integers(0, 2**63 - 1))))


@given(grammar_text())
@settings(max_examples=300, deadline=None)
def test_roundtrip_property(text):
    tree = parse_expression(text)
    printed = to_string(tree)
    assert parse_expression(printed) == tree
    assert to_string(parse_expression(printed)) == printed


def test_against_reference_evaluator():
    rng = np.random.default_rng(77)
    checked = 0
    while checked < 1000:
        text = gen_expr(rng)
        env = dict(zip(PARAMS, rng.uniform(-2, 2, size=4)))
        try:
            ref = reference_eval(text, env)
        except (ValueError, ZeroDivisionError, OverflowError):
            with pytest.raises(SasakiLabError):
                evaluate(parse_expression(text), {k: np.float64(v) for k, v in env.items()})
            continue
        if not math.isfinite(ref) or abs(ref) > 1e12:
            continue
        got = float(evaluate(parse_expression(text), {k: np.float64(v) for k, v in env.items()}))
        assert got == pytest.approx(ref, rel=1e-9, abs=1e-9), text
        checked += 1


def test_jet_value_matches_plain():
    rng = np.random.default_rng(5)
    done = 0
    while done < 300:
        text = gen_expr(rng)
        tree = parse_expression(text)
        p = rng.uniform(-1.5, 1.5, size=4)
        try:
            plain = float(evaluate(tree, dict(zip(PARAMS, p))))
            xs = nk.Jet.variables(p, order=2)
            jet = evaluate(tree, dict(zip(PARAMS, xs)))
        except SasakiLabError:
            continue
        val = float(nk.value(jet))
        assert abs(val - plain) <= 1e-12 * max(1.0, abs(plain)), text
        done += 1


def test_syntax_error_position():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression("s1 +\n  * s2", 2)
    assert (info.value.line, info.value.column) == (2, 3)
    assert "number" in info.value.expected
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression("sin(s1", 1)
    assert ")" in info.value.expected
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("s1^1.5", 1)
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("", 1)


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError) as info:
        parse_expression("s1 + s3", 2)
    assert info.value.name == "s3"
    assert info.value.valid == ("s1", "s2")
    assert (info.value.line, info.value.column) == (1, 6)
    with pytest.raises(UnknownIdentifierError):
        parse_expression("x + 1", 2)


def test_vectorized_values():
    e = Expression("s1*s2 + 1", 2)
    s = np.array([[1.0, 2.0], [3.0, 4.0], [0.0, 5.0]])
    np.testing.assert_allclose(e.values(s), [3.0, 13.0, 1.0])
    np.testing.assert_allclose(Expression("2", 2).values(s), [2.0, 2.0, 2.0])


def test_non_finite_intermediate_raises():
    # 0^-1 is infinite even though the whole expression would fold to 0
    with pytest.raises(SasakiLabError):
        Expression("1/(0^-1)", 1)([0.0])
