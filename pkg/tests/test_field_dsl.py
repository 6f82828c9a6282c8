import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affine_reilly import field_dsl as dsl
from affine_reilly.field_dsl import (
    CoordinateOutOfRange,
    DerivativeOrderError,
    DomainError,
    ParseError,
    UnknownIdentifier,
    derivative,
    eval_field,
    fd_check,
    fd_derivative,
    parse,
)


def test_parse_examples():
    assert eval_field(parse("x1^2 + x2^2", 2), (1, 2)) == 5.0
    assert eval_field(parse("exp(x1)", 1), (0.0,)) == 1.0
    assert eval_field(parse("x1^2*x2", 2), (3, 2)) == 18.0
    assert eval_field(parse("log(x1)", 1), (1.0,)) == 0.0


def test_mixed_partial_matches_finite_difference():
    f = parse("sin(x1)*x2", 2)
    exact = eval_field(derivative(f, [0, 1]), (0.0, 5.0))
    fd = fd_derivative(f, (0.0, 5.0), [0, 1], 1e-4)
    assert exact == pytest.approx(1.0, abs=1e-14)
    assert abs(exact - fd) < 1e-8


@pytest.mark.parametrize(
    "src, idx, point, value",
    [("x1^3", [0], (2.0,), 12.0), ("exp(2*x1)", [0, 0], (0.0,), 4.0), ("sin(x1)", [0, 0, 0], (0.0,), -1.0)],
)
def test_derivative_examples(src, idx, point, value):
    assert eval_field(derivative(parse(src, 1), idx), point) == pytest.approx(value, abs=1e-14)


def test_derivative_order_limit():
    with pytest.raises(DerivativeOrderError):
        derivative(parse("x1^5", 1), [0, 0, 0, 0])


@pytest.mark.parametrize(
    "src, exc, offset",
    [("x1 + * x2", ParseError, 5), ("foo(x1)", UnknownIdentifier, 0), ("x1 + x3", CoordinateOutOfRange, 5),
     ("x1^1.5", ParseError, 3), ("(x1", ParseError, 3)],
)
def test_parse_errors_report_byte_offset(src, exc, offset):
    with pytest.raises(exc) as info:
        parse(src, 2)
    assert info.value.offset == offset


def test_byte_offset_counts_utf8():
    with pytest.raises(ParseError) as info:
        parse("x1 + é", 1)
    assert info.value.offset == 5
    with pytest.raises(ParseError) as info:
        parse("éé x1", 1)
    assert info.value.offset == 0


@pytest.mark.parametrize("src, point", [("x1/x2", (1.0, 0.0)), ("log(x1)", (-1.0, 0.0)), ("sqrt(x1)", (-2.0, 1.0))])
def test_domain_errors_are_raised(src, point):
    with pytest.raises(DomainError):
        eval_field(parse(src, 2), point)


def test_domain_error_in_batch():
    with pytest.raises(DomainError):
        parse("log(x1)", 1).eval_many(np.array([[1.0], [0.0]]))


def test_fd_check_examples():
    cubic = parse("x1^3 - 2*x1*x2^2 + x2 + 4", 2)
    assert fd_check(cubic, (0.3, -0.7), 1, 1e-3) <= 1e-10
    assert fd_check(parse("exp(x1)", 1), (0.0,), 2, 1e-3) <= 1e-8
    assert fd_check(parse("sin(x1)", 1), (0.5,), 3, 1e-2) <= 1e-6


def _unit_scale_points(T, count, seed):
    # semi-infinite axes (radius, half-space height) are sampled in [1, 2]
    lo = np.array([1.0 if a == 0 else max(a + 0.2, -1.5) for a, b in T.box])
    hi = np.array([2.0 if a == 0 else min(b - 0.2, 1.5) for a, b in T.box])
    return np.random.default_rng(seed).uniform(lo, hi, (count, T.dim))


def test_catalog_fields_pass_fd_check():
    from affine_reilly.cli import DEFAULT_PHI, DEFAULT_U
    from affine_reilly.geometry import catalog_triple

    steps = {1: 1e-3, 2: 1e-3, 3: 3e-3}
    for name, u in DEFAULT_U.items():
        T = catalog_triple(name, u)
        fields = [T.u, dsl.field(DEFAULT_PHI[name], T.dim)] + [f for row in T.g for f in row]
        for p in _unit_scale_points(T, 100, seed=3):
            for f in fields:
                for order, h in steps.items():
                    assert fd_check(f, p, order, h) <= 1e-6, (name, str(f), order)


def test_pickle_and_threads():
    import pickle

    f = parse("exp(x1)*sin(x2) + x1^2", 2)
    g = pickle.loads(pickle.dumps(f))
    assert eval_field(g, (0.2, 0.4)) == eval_field(f, (0.2, 0.4))
    pts = np.random.default_rng(0).uniform(-1, 1, (500, 2))
    ref = [f.derivative(idx).eval_many(pts) for idx in ([0], [1, 1], [0, 1, 1])]
    out = [None] * 8

    def work(k):
        h = parse("exp(x1)*sin(x2) + x1^2", 2)
        out[k] = [h.derivative(idx).eval_many(pts) for idx in ([0], [1, 1], [0, 1, 1])]

    threads = [threading.Thread(target=work, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for o in out:
        for a, b in zip(o, ref):
            np.testing.assert_array_equal(a, b)


# -- properties ---------------------------------------------------------------

_leaves = st.one_of(
    st.sampled_from(["x1", "x2", "pi"]),
    st.floats(min_value=0.1, max_value=3.0, allow_nan=False).map(lambda c: repr(round(c, 3))),
)


def _extend(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "tanh"]), children).map(lambda t: f"{t[0]}(0.3*{t[1]})"),
        st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
        children.map(lambda c: f"-{c}"),
    )


expressions = st.recursive(_leaves, _extend, max_leaves=8)
points = st.tuples(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))


@settings(max_examples=150, deadline=None)
@given(expressions, points)
def test_print_parse_round_trip(src, p):
    f = parse(src, 2)
    g = parse(f.source(), 2)
    a, b = eval_field(f, p), eval_field(g, p)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(expressions, points, st.integers(0, 1), st.integers(0, 1))
def test_nested_derivatives_commute(src, p, i, j):
    f = parse(src, 2)
    a = eval_field(derivative(derivative(f, [i]), [j]), p)
    b = eval_field(derivative(f, [i, j]), p)
    c = eval_field(derivative(f, [j, i]), p)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)
    assert b == pytest.approx(c, rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(expressions, points)
def test_exact_derivative_matches_stencil(src, p):
    f = parse(src, 2)
    scale = 1.0 + max(abs(eval_field(derivative(f, [k]), p)) for k in range(2))
    assert fd_check(f, p, 1, 1e-3) <= 1e-7 * scale * 100


def test_jet_shapes_and_values():
    f = parse("x1^2*x2 + sin(x2)", 2)
    pts = np.array([[1.0, 0.0], [2.0, math.pi]])
    v, d1, d2, d3 = f.jet(pts, 3)
    assert v.shape == (2,) and d1.shape == (2, 2) and d2.shape == (2, 2, 2) and d3.shape == (2, 2, 2, 2)
    np.testing.assert_allclose(d1[1], [4 * math.pi, 4 + math.cos(math.pi)], atol=1e-14)
    assert d3[0, 0, 0, 1] == pytest.approx(2.0)
