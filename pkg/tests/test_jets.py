import itertools
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from sode_geometry import jets as J
from sode_geometry.jets import DomainError, jet_apply, jet_partial, jet_seed


def all_multi_indices(nvars, order):
    for total in range(order + 1):
        for alpha in itertools.product(range(total + 1), repeat=nvars):
            if sum(alpha) == total:
                yield alpha


def sympy_partial(expr, syms, alpha, point):
    d = expr
    for s, k in zip(syms, alpha):
        if k:
            d = sp.diff(d, s, k)
    return float(d.subs(dict(zip(syms, point))))


# -- seeds and partial extraction --------------------------------------------

def test_seed_first_coordinate():
    j = jet_seed(0, 2.0, 2, 2)
    assert j.value == 2.0
    assert jet_partial(j, (1, 0)) == 1.0
    assert jet_partial(j, (0, 1)) == 0.0
    for alpha in [(2, 0), (1, 1), (0, 2)]:
        assert jet_partial(j, alpha) == 0.0


def test_seed_gradient():
    j = jet_seed(1, -1.0, 3, 1)
    assert j.value == -1.0
    np.testing.assert_array_equal(j.grad().value, [0.0, 1.0, 0.0])


def test_seed_out_of_range():
    with pytest.raises(IndexError):
        jet_seed(5, 0.0, 3, 2)


def test_partial_order_too_high():
    j = jet_seed(0, 1.0, 2, 2)
    with pytest.raises(ValueError):
        jet_partial(j * j, (2, 1))


def test_square_partials():
    v = jet_seed(0, 3.0, 1, 2)
    f = v * v
    assert f.value == 9.0
    assert jet_partial(f, (1,)) == 6.0
    assert jet_partial(f, (2,)) == 2.0


def test_square_second_partial_two_vars():
    v = J.seeds([1.5, -0.5], 2)
    assert jet_partial(v[0] * v[0], (2, 0)) == 2.0
    assert jet_partial(v[0], (1, 0)) == 1.0


def test_a_tan_b_against_hand_values():
    a, b = J.seeds([2.0, math.pi / 4], 2)
    f = jet_apply("*", [a, jet_apply("tan", [b])])
    assert f.value == pytest.approx(2.0, abs=1e-14)
    assert jet_partial(f, (1, 0)) == pytest.approx(1.0, abs=1e-14)
    assert jet_partial(f, (0, 1)) == pytest.approx(4.0, abs=1e-14)
    assert jet_partial(f, (1, 1)) == pytest.approx(2.0, abs=1e-14)


def test_sin_third_derivative_at_zero():
    v = jet_seed(0, 0.0, 1, 3)
    assert jet_partial(J.sin(v), (3,)) == pytest.approx(-1.0, abs=1e-15)


@pytest.mark.parametrize(
    "op, x",
    [("tan", math.pi / 2), ("sec", math.pi / 2), ("cot", 0.0), ("csc", 0.0), ("log", 0.0), ("log", -1.0), ("sqrt", -2.0)],
)
def test_domain_errors(op, x):
    with pytest.raises(DomainError):
        jet_apply(op, [jet_seed(0, x, 1, 2)])


def test_division_by_zero_value():
    v = jet_seed(0, 0.0, 1, 2)
    with pytest.raises(DomainError):
        jet_apply("/", [J.constant(1.0, 1, 2), v])


def test_unknown_operation():
    with pytest.raises(ValueError):
        jet_apply("erf", [jet_seed(0, 0.0, 1, 1)])


# -- every supported function against a CAS --------------------------------

X, Y, Z = sp.symbols("x y z")
SYMS = (X, Y, Z)
POINT = (0.7, -0.4, 1.3)

CASES = [
    ("sin", lambda a, b, c: J.sin(a * b + c), sp.sin(X * Y + Z)),
    ("cos", lambda a, b, c: J.cos(a - b * c), sp.cos(X - Y * Z)),
    ("tan", lambda a, b, c: J.tan(a * c) * b, sp.tan(X * Z) * Y),
    ("cot", lambda a, b, c: J.cot(a + c), sp.cot(X + Z)),
    ("sec", lambda a, b, c: J.sec(a * b) ** 2, sp.sec(X * Y) ** 2),
    ("csc", lambda a, b, c: J.csc(c - b), sp.csc(Z - Y)),
    ("sqrt", lambda a, b, c: J.sqrt(a * a + c), sp.sqrt(X**2 + Z)),
    ("exp", lambda a, b, c: J.exp(a * b) / c, sp.exp(X * Y) / Z),
    ("log", lambda a, b, c: J.log(c + a * a) * b, sp.log(Z + X**2) * Y),
    ("arctan", lambda a, b, c: J.arctan(a * b - c), sp.atan(X * Y - Z)),
    ("pow", lambda a, b, c: J.pow_int(a + b, 3) - J.pow_int(c, -2), (X + Y) ** 3 - Z ** (-2)),
    ("quotient", lambda a, b, c: (a + 1.0) / (b * b + c), (X + 1) / (Y**2 + Z)),
]


@pytest.mark.parametrize("name, fj, fs", CASES, ids=[c[0] for c in CASES])
def test_partials_match_cas(name, fj, fs):
    z = J.seeds(POINT, 3)
    f = fj(z[0], z[1], z[2])
    for alpha in all_multi_indices(3, 3):
        expected = sympy_partial(fs, SYMS, alpha, POINT)
        got = jet_partial(f, alpha)
        assert got == pytest.approx(expected, rel=1e-11, abs=1e-11), alpha


def test_mixed_partials_symmetric_by_storage():
    z = J.seeds(POINT, 2)
    f = J.sin(z[0] * z[1]) * J.exp(z[2])
    H = np.asarray(f.grad().grad().value)
    np.testing.assert_array_equal(H, H.T)


# -- property tests ---------------------------------------------------------

coef = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def polynomial(draw):
    nvars = draw(st.integers(1, 4))
    order = draw(st.integers(1, 3))
    monos = [a for a in all_multi_indices(nvars, order)]
    cs = draw(st.lists(coef, min_size=len(monos), max_size=len(monos)))
    point = draw(st.lists(st.floats(-2, 2), min_size=nvars, max_size=nvars))
    return nvars, order, list(zip(monos, cs)), point


@given(polynomial())
def test_polynomial_partials_exact(data):
    nvars, order, terms, point = data
    syms = sp.symbols(f"v0:{nvars}")
    expr = sum(c * sp.Mul(*[s**k for s, k in zip(syms, a)]) for a, c in terms)
    z = J.seeds(point, order)
    f = J.constant(0.0, nvars, order)
    for a, c in terms:
        m = J.constant(c, nvars, order)
        for i, k in enumerate(a):
            for _ in range(k):
                m = m * z[i]
        f = f + m
    for alpha in all_multi_indices(nvars, order):
        expected = sympy_partial(sp.expand(expr), syms, alpha, point)
        assert jet_partial(f, alpha) == pytest.approx(expected, rel=1e-12, abs=1e-10)


@st.composite
def two_jets(draw):
    nvars = draw(st.integers(1, 3))
    order = draw(st.integers(1, 3))
    size = J.space_for(nvars, order).size
    f = draw(st.lists(coef, min_size=size, max_size=size))
    g = draw(st.lists(coef, min_size=size, max_size=size))
    sp_ = J.space_for(nvars, order)
    return J.Jet(sp_, f), J.Jet(sp_, g)


@given(two_jets())
def test_leibniz_rule(pair):
    f, g = pair
    fg = f * g
    for alpha in all_multi_indices(f.nvars, f.order):
        total = 0.0
        for beta in itertools.product(*[range(a + 1) for a in alpha]):
            gamma = tuple(a - b for a, b in zip(alpha, beta))
            binom = math.prod(math.comb(a, b) for a, b in zip(alpha, beta))
            total += binom * jet_partial(f, beta) * jet_partial(g, gamma)
        scale = 1.0 + abs(total)
        assert abs(jet_partial(fg, alpha) - total) <= 1e-12 * scale


OUTER = [J.sin, J.cos, J.exp, J.arctan, lambda v: J.tan(0.3 * v), lambda v: J.sqrt(v * v + 1.0)]
OUTER_F = [math.sin, math.cos, math.exp, math.atan, lambda v: math.tan(0.3 * v), lambda v: math.sqrt(v * v + 1.0)]
INNER = [lambda v: v * v - 0.5 * v, J.sin, lambda v: J.exp(0.5 * v)]
INNER_F = [lambda v: v * v - 0.5 * v, math.sin, lambda v: math.exp(0.5 * v)]


@given(st.integers(0, len(OUTER) - 1), st.integers(0, len(INNER) - 1), st.floats(-1.2, 1.2))
def test_chain_rule_against_finite_differences(i, k, x):
    f = lambda v: OUTER_F[i](INNER_F[k](v))
    j = OUTER[i](INNER[k](jet_seed(0, x, 1, 2)))
    h = 1e-5
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + h) - 2 * f(x) + f(x - h)) / h**2
    assert abs(jet_partial(j, (1,)) - d1) <= 1e-6 * (1 + abs(d1))
    assert abs(jet_partial(j, (2,)) - d2) <= 1e-4 * (1 + abs(d2))


# -- structural helpers ---------------------------------------------------

def test_compose_matches_direct_evaluation():
    z = J.seeds([0.3, -0.8], 3)
    inner = J.stack([J.sin(z[0]) + z[1], z[0] * z[1]])
    outer_point = np.asarray(inner.value)
    w = J.seeds(outer_point, 3)
    outer = J.exp(w[0]) * w[1] - w[0] ** 2
    direct = J.exp(inner[0]) * inner[1] - inner[0] ** 2
    np.testing.assert_allclose(outer.compose(inner).c, direct.c, rtol=1e-13, atol=1e-13)
    table = J.composition_table(inner, 3)
    np.testing.assert_allclose(outer.compose(inner, table).c, direct.c, rtol=1e-13, atol=1e-13)


def test_linear_solve_derivatives():
    z = J.seeds([0.4, 0.1], 2)
    A = J.stack([J.stack([2.0 + z[0], z[1]]), J.stack([z[1], 3.0 - z[0] * z[1]])])
    b = J.stack([J.sin(z[0]), z[1] * z[1] + 1.0])
    x = J.solve(A, b)
    residual = (A * x[None, :]).sum(-1) - b
    assert np.max(np.abs(residual.c)) <= 1e-13
    Ainv = J.inv(A)
    eye = (Ainv[:, :, None] * A[None, :, :]).sum(1)
    np.testing.assert_allclose(eye.c[..., 0], np.eye(2), atol=1e-14)
    assert np.max(np.abs(eye.c[..., 1:])) <= 1e-13


def test_truncate_keeps_lower_coefficients():
    z = J.seeds([0.2], 3)
    f = J.exp(z[0])
    g = f.truncate(1)
    assert g.order == 1
    assert jet_partial(g, (1,)) == pytest.approx(math.exp(0.2))
    with pytest.raises(ValueError):
        g.truncate(2)


def test_deriv_lowers_order_and_exhausts():
    v = jet_seed(0, 1.0, 1, 1)
    d = v.deriv(0)
    assert d.order == 0 and d.value == 1.0
    with pytest.raises(ValueError):
        d.deriv(0)
