import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from algebroid_mech.expr import (
    BinOp,
    ExprDomainError,
    ExprSyntaxError,
    UnknownIdentifierError,
    eval_jet2,
    evaluate,
    jet_batch,
    parse,
)

XY = ["x1", "x2", "y1", "y2"]


def test_two_top_level_terms():
    e = parse("x1*y2 + sin(x2)", XY)
    assert isinstance(e.root, BinOp) and e.root.op == "+"
    assert e.root.left.op == "*"


def test_quadratic_over_two():
    assert evaluate(parse("y1^2/2", ["y1"]), [3.0]) == 4.5


def test_unknown_identifier_is_named():
    with pytest.raises(UnknownIdentifierError) as info:
        parse("x1 + z9", ["x1"])
    assert info.value.name == "z9"
    assert info.value.offset == 5


@pytest.mark.parametrize(
    "src, point, expected",
    [
        ("sin(x1)", [0.0], 0.0),
        ("x1*y1", [2.0, 3.0], 6.0),
        ("-x1^2", [3.0], -9.0),
        ("2^3^2", [0.0], 512.0),
        ("x1 - 1 - 1", [5.0], 3.0),
        ("8/2/2", [0.0], 2.0),
        ("exp(log(x1)) + sqrt(x1) + abs(-x1) + tan(0) + cos(0)", [4.0], 4.0 + 2.0 + 4.0 + 1.0),
        ("1.5e1 + .5", [0.0], 15.5),
    ],
)
def test_evaluate(src, point, expected):
    vars_ = ["x1", "y1"][: len(point)] if src != "x1*y1" else ["x1", "y1"]
    assert evaluate(parse(src, vars_), point) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("src, point", [("log(x1)", [-1.0]), ("1/x1", [0.0]), ("sqrt(x1)", [-4.0])])
def test_domain_errors(src, point):
    with pytest.raises(ExprDomainError):
        evaluate(parse(src, ["x1"]), point)


@pytest.mark.parametrize("src, offset", [("x1 +", 4), ("(x1", 3), ("x1 $ 2", 3), ("sin x1", 4), ("2 3", 2)])
def test_syntax_errors_report_offset(src, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(src, ["x1"])
    assert info.value.offset == offset


def test_unknown_function():
    with pytest.raises(UnknownIdentifierError) as info:
        parse("cosh(x1)", ["x1"])
    assert info.value.name == "cosh"


def test_jet_polynomial():
    assert eval_jet2(parse("x1^2", ["x1"]), [3.0], [1.0], [1.0]) == pytest.approx((9.0, 6.0, 6.0, 2.0))


def test_jet_sin_at_zero():
    assert eval_jet2(parse("sin(x1)", ["x1"]), [0.0], [1.0], [1.0]) == pytest.approx((0.0, 1.0, 1.0, 0.0))


def test_jet_mixed_partial():
    v, d1, d2, d12 = eval_jet2(parse("x1*x2^2", ["x1", "x2"]), [2.0, 3.0], [1.0, 0.0], [0.0, 1.0])
    assert (v, d1, d2, d12) == pytest.approx((18.0, 9.0, 12.0, 6.0))


def test_batch_evaluation_matches_pointwise():
    e = parse("sin(x1)*y1 + x1^3", ["x1", "y1"])
    pts = np.random.default_rng(0).uniform(-1, 1, (7, 2))
    batch = e(pts)
    assert batch.shape == (7,)
    assert np.array_equal(batch, [e(p) for p in pts])


def test_wrong_arity_point():
    with pytest.raises(ValueError):
        evaluate(parse("x1", ["x1", "x2"]), [1.0])


def test_round_trip_preserves_value():
    src = "-(x1 - 2)^3/(1 + x2^2) - sin(-x1)*exp(x2)"
    e = parse(src, ["x1", "x2"])
    again = parse(e.to_string(), ["x1", "x2"])
    p = [0.7, -0.3]
    assert evaluate(again, p) == evaluate(e, p)
    assert again.to_string() == e.to_string()


def test_substitute():
    e = parse("x1*x2", ["x1", "x2"])
    inner = [parse("t1 + 1", ["t1"]), parse("t1^2", ["t1"])]
    assert evaluate(e.substitute(inner), [2.0]) == 12.0


# ---------------------------------------------------------------------------
# Finite-difference oracle on random cubic polynomials in four variables

MONOMIALS = [(i, j, k) for i in range(4) for j in range(i, 4) for k in range(j, 4)]


def _poly_source(coefs):
    terms = [f"{c!r}*x{i + 1}*x{j + 1}*x{k + 1}" for c, (i, j, k) in zip(coefs, MONOMIALS)]
    terms += [f"{c!r}*x{i + 1}" for c, i in zip(coefs[-4:], range(4))]
    return " + ".join(terms)


coef_lists = st.lists(st.floats(-2, 2, allow_nan=False), min_size=len(MONOMIALS) + 4, max_size=len(MONOMIALS) + 4)
vec4 = st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4)


@settings(max_examples=40, deadline=None)
@given(coefs=coef_lists, point=vec4, d1=vec4, d2=vec4)
def test_jet_matches_central_differences(coefs, point, d1, d2):
    names = ["x1", "x2", "x3", "x4"]
    e = parse(_poly_source(coefs), names)
    p, u, w = (np.array(a) for a in (point, d1, d2))
    v, g1, g2, g12 = eval_jet2(e, p, u, w)
    step = 1e-5
    fd1 = (evaluate(e, p + step * u) - evaluate(e, p - step * u)) / (2 * step)
    assert abs(g1 - fd1) <= 1e-8 * max(1.0, abs(fd1))
    # second mixed derivative of a cubic: the central stencil in the first derivative is exact up to rounding
    fd12 = (eval_jet2(e, p + step * w, u, u)[1] - eval_jet2(e, p - step * w, u, u)[1]) / (2 * step)
    assert abs(g12 - fd12) <= 1e-6 * max(1.0, abs(fd12))
    assert v == pytest.approx(evaluate(e, p), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), x=st.floats(-1, 1))
def test_first_derivative_is_linear_in_direction(a, b, x):
    e = parse("x1^3*x2 + sin(x1*x2)", ["x1", "x2"])
    p = [x, 0.5]
    u, w = np.array([1.0, 0.3]), np.array([-0.2, 0.7])
    lhs = eval_jet2(e, p, a * u + b * w, u)[1]
    rhs = a * eval_jet2(e, p, u, u)[1] + b * eval_jet2(e, p, w, w)[1]
    assert lhs == pytest.approx(rhs, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0.1, 2.0))
def test_chain_rule_through_functions(x):
    e = parse("exp(sin(x1)) + log(x1)^2 + sqrt(x1)", ["x1"])
    v, d, _, dd = eval_jet2(e, [x], [1.0], [1.0])
    s, c = math.sin(x), math.cos(x)
    exact_d = c * math.exp(s) + 2 * math.log(x) / x + 0.5 / math.sqrt(x)
    exact_dd = (c * c - s) * math.exp(s) + 2 * (1 - math.log(x)) / x**2 - 0.25 * x**-1.5
    assert d == pytest.approx(exact_d, rel=1e-12)
    assert dd == pytest.approx(exact_dd, rel=1e-11, abs=1e-12)


def test_jet_batch_gradient_and_hessian():
    e = parse("x1^2*y1 + y1^3", ["x1", "y1"])
    pts = np.array([[1.0, 2.0], [-1.0, 0.5]])
    j = jet_batch(e, pts, np.eye(2), order=2)
    x, y = pts.T
    assert np.allclose(j.g, np.stack([2 * x * y, x**2 + 3 * y**2], axis=1))
    H = np.stack([[2 * y, 2 * x], [2 * x, 6 * y]]).transpose(2, 0, 1)
    assert np.allclose(j.h, H)
