import numpy as np
import pytest

from densopt.expressions import ExpressionError, compile_expression


def ev(src, variables=("x", "t"), **env):
    return compile_expression(src, variables)(env)


def test_basic_arithmetic():
    assert ev("1 + 2*3") == 7.0
    assert ev("(1 + 2)*3") == 9.0
    assert ev("7/2") == 3.5
    assert ev("2^3") == 8.0
    assert ev("1e-3 + .5") == 0.5010


def test_power_binds_tighter_than_unary_minus():
    assert ev("-2^2") == -4.0
    assert ev("(-2)^2") == 4.0
    assert ev("2^-1") == 0.5


def test_power_right_associative():
    assert ev("2^3^2") == 512.0


def test_constants_and_functions():
    assert abs(ev("sin(pi/2)") - 1.0) < 1e-15
    assert abs(ev("cos(0)") - 1.0) < 1e-15
    assert abs(ev("exp(1)") - np.e) < 1e-15


def test_variables_vectorized():
    x = np.linspace(-1, 1, 11)
    out = ev("(1-t)/2 + t/2*(sin(pi*(x-2)/2) + 1)", x=x, t=0.5)
    expected = 0.25 + 0.25 * (np.sin(np.pi * (x - 2) / 2) + 1)
    assert np.max(np.abs(out - expected)) < 1e-15


def test_2d_variables():
    x1 = np.array([0.0, 0.5])
    x2 = np.array([1.0, -1.0])
    out = ev("x1*x2 + x2^2", variables=("x1", "x2", "t"), x1=x1, x2=x2, t=0.0)
    assert np.allclose(out, x1 * x2 + x2**2)


def test_unknown_name_rejected():
    with pytest.raises(ExpressionError, match="unknown name"):
        compile_expression("y + 1", ("x", "t"))
    with pytest.raises(ExpressionError, match="unknown name"):
        compile_expression("tan(x)", ("x", "t"))


def test_syntax_errors():
    for bad in ("", "1 +", "(1", "sin x", "1 2", "x & t"):
        with pytest.raises(ExpressionError):
            compile_expression(bad, ("x", "t"))


def test_whitespace_and_nesting():
    assert ev("  exp( - (x^2) ) ", x=0.0) == 1.0
    assert abs(ev("sin(cos(exp(0)))") - np.sin(np.cos(1.0))) < 1e-15


def test_expression_repr_and_reuse():
    e = compile_expression("x + t", ("x", "t"))
    assert "x + t" in repr(e)
    assert e({"x": 1.0, "t": 2.0}) == 3.0
    assert e({"x": 5.0, "t": -1.0}) == 4.0
