import cmath
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_laurent
from leglab.errors import NonexactForm, PreconditionViolation
from leglab.geometry import Arc, CircularPiece, Cycle, LineSegment
from leglab.laurent import (
    LaurentPoly,
    OneForm,
    adaptive_integrate,
    add,
    arc_integral,
    arc_integral_exact,
    contour_integral,
    differentiate,
    evaluate,
    jet_at,
    mul,
    primitive,
    residue_at,
)

Z = LaurentPoly.monomial(1)
INV = LaurentPoly.pole(0j)


def seg(a, b):
    return Arc((LineSegment(complex(a), complex(b)),))


# -- add / mul ------------------------------------------------------------


def test_additive_inverse_is_zero():
    assert add(Z, Z.scale(-1)).is_zero()


def test_disjoint_supports_add():
    s = add(INV, Z)
    assert dict(s.poly) == {1: 1}
    assert dict(s.poles) == {(0, -1): 1}


def test_add_zero_identity():
    a = LaurentPoly((1j,), {0: 2, 3: 1 - 1j}, {(0, -2): 4})
    assert add(a, LaurentPoly.zero()) == a


def test_mul_basic():
    assert mul(Z, Z) == LaurentPoly.monomial(2)
    assert mul(INV, Z) == LaurentPoly.constant(1.0, (0j,))


def test_partial_fractions_against_direct_product(rng):
    a = LaurentPoly.pole(0j)
    b = LaurentPoly.pole(1 + 0j)
    p = mul(a, b)
    pts = rng.normal(size=64) + 1j * rng.normal(size=64) + 0.5
    direct = 1 / pts / (pts - 1)
    assert np.allclose(evaluate(p, pts), direct, rtol=1e-12, atol=0)
    # 1/(q(q-1)) = 1/(q-1) - 1/q exactly
    expect = add(LaurentPoly.pole(1 + 0j, centers=[0j]), LaurentPoly.pole(0j, coef=-1.0, centers=[0j, 1 + 0j]))
    assert np.allclose(evaluate(p, pts), evaluate(expect, pts), rtol=1e-13)


def test_mul_commutes_and_distributes(rng):
    centers = (0j, 2 + 1j)
    for _ in range(10):
        a, b, c = (random_laurent(rng, centers, 4, 2) for _ in range(3))
        pts = 3 * (rng.random(64) - 0.5) + 3j * (rng.random(64) - 0.5) + 0.3 + 0.6j
        ab, ba = evaluate(mul(a, b), pts), evaluate(mul(b, a), pts)
        assert np.allclose(ab, ba, rtol=1e-11, atol=0)
        lhs = evaluate(mul(a, add(b, c)), pts)
        rhs = evaluate(add(mul(a, b), mul(a, c)), pts)
        assert np.allclose(lhs, rhs, rtol=1e-11, atol=1e-11 * np.max(np.abs(lhs)))
        assert np.allclose(ab, evaluate(a, pts) * evaluate(b, pts), rtol=1e-10)


# -- calculus -------------------------------------------------------------


def test_differentiate_examples():
    assert differentiate(LaurentPoly.monomial(2)) == LaurentPoly.monomial(1, 2.0)
    assert differentiate(INV) == LaurentPoly((0j,), None, {(0, -2): -1.0})
    assert differentiate(LaurentPoly.constant(5.0)).is_zero()


def test_primitive_examples():
    assert primitive(OneForm(LaurentPoly.monomial(1, 2.0))) == LaurentPoly.monomial(2)
    p = primitive(OneForm(LaurentPoly((0j,), None, {(0, -2): 1.0})))
    assert p == LaurentPoly((0j,), None, {(0, -1): -1.0})
    with pytest.raises(NonexactForm):
        primitive(OneForm(INV))


def test_residue_examples():
    assert residue_at(OneForm(INV), 0) == 1
    assert residue_at(OneForm(LaurentPoly((0j,), {3: 1.0})), 0) == 0
    assert residue_at(OneForm(LaurentPoly.pole(1j, coef=3.0)), 0) == 3


def test_differentiate_primitive_roundtrip(rng):
    centers = (0j, 2 + 0j)
    for _ in range(20):
        f = random_laurent(rng, centers, 6, 3)
        back = differentiate(primitive(OneForm.d(f)))
        df = differentiate(f)
        diff = add(back, df.scale(-1))
        assert diff.max_coeff() <= 1e-12


def test_derivatives_have_no_residues(rng):
    centers = (0j, -1 + 1j, 2.5 + 0j)
    for _ in range(20):
        f = random_laurent(rng, centers, 5, 4)
        for i in range(len(centers)):
            assert residue_at(OneForm.d(f), i) == 0


# -- integrals ------------------------------------------------------------


def test_contour_examples():
    assert contour_integral(OneForm(INV), Cycle(0j, 1.0)) == pytest.approx(2j * math.pi, abs=1e-15)
    assert contour_integral(OneForm(Z), Cycle(0j, 1.0)) == 0
    assert contour_integral(OneForm(INV), Cycle(2 + 0j, 0.5)) == 0


def test_arc_examples():
    one = OneForm(LaurentPoly.constant(1.0))
    assert arc_integral(one, seg(0, 1)).value == pytest.approx(1.0, abs=1e-14)
    assert arc_integral(OneForm(LaurentPoly.monomial(1, 2.0)), seg(0, 1)).value == pytest.approx(1.0, abs=1e-14)
    upper = Arc((CircularPiece(0j, 1.0, 0.0, math.pi),))
    assert arc_integral(OneForm(INV), upper).value == pytest.approx(1j * math.pi, abs=1e-10)


def test_contour_agrees_with_quadrature(rng):
    """Residue route vs adaptive quadrature around a circle, 50 random forms."""
    centers = (0j, 3 + 0j, -0.5 + 2j)
    cyc = Cycle(0.2 + 0.1j, 1.3)
    for _ in range(50):
        f = random_laurent(rng, centers, 5, 3)
        form = OneForm(f)
        exact = contour_integral(form, cyc)
        quad = arc_integral(form, cyc.as_arc(), 1e-12).value
        assert abs(exact - quad) <= 1e-9


def test_exact_and_quadrature_arc_routes_agree(rng):
    a = Arc.from_vertices([0.5 + 0.5j, 1.5 + 0.2j, 1.0 - 1.0j])
    for _ in range(10):
        f = OneForm.d(random_laurent(rng, (0j,), 5, 3))
        assert abs(arc_integral_exact(f, a) - arc_integral(f, a, 1e-12).value) <= 1e-10


def test_adaptive_integrate_smooth_function():
    res = adaptive_integrate(np.exp, 0.0, 1.0, 1e-13)
    assert abs(res.value - (math.e - 1)) <= 1e-13


# -- evaluation / jets ----------------------------------------------------


def test_jet_and_evaluate_examples():
    assert np.allclose(jet_at(LaurentPoly.monomial(2), 1.0, 1), [1, 2])
    assert np.allclose(jet_at(INV, 2.0, 0), [0.5])
    assert evaluate(LaurentPoly((), {0: 1.0, 2: 1.0}), 1j) == 0


def test_jet_matches_repeated_derivative(rng):
    f = random_laurent(rng, (0j, 1 + 1j), 6, 3)
    p = 0.4 - 0.7j
    j = jet_at(f, p, 4)
    for k in range(5):
        assert j[k] == pytest.approx(complex(evaluate(f.derivative(k), p)), rel=1e-12)


# -- structure ------------------------------------------------------------


def test_invariants_enforced():
    with pytest.raises(PreconditionViolation):
        LaurentPoly((0j, 1e-13 + 0j))
    with pytest.raises(PreconditionViolation):
        LaurentPoly((0j,), None, {(1, -1): 1.0})
    tiny = LaurentPoly((), {0: 1e-301, 1: 1.0})
    assert 0 not in tiny.poly


@given(st.lists(st.tuples(st.integers(0, 12), st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), max_size=8),
       st.lists(st.tuples(st.integers(0, 1), st.integers(-6, -1), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
                max_size=6))
def test_json_roundtrip_bit_exact(poly, poles):
    centers = (0.25 - 1j, 3 + 0.5j)
    f = LaurentPoly(centers, {k: complex(a, b) for k, a, b in poly},
                    {(i, k): complex(a, b) for i, k, a, b in poles})
    g = LaurentPoly.from_json(json.loads(json.dumps(f.to_json())))
    assert g == f


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_evaluate_matches_closed_form(re, im):
    q = complex(re, im)
    if abs(q) < 1e-3 or abs(q - 1) < 1e-3:
        return
    f = LaurentPoly((0j, 1 + 0j), {0: 2.0, 3: -1j}, {(0, -2): 0.5, (1, -1): 1 + 1j})
    expect = 2.0 - 1j * q**3 + 0.5 / q**2 + (1 + 1j) / (q - 1)
    assert cmath.isclose(evaluate(f, q), expect, rel_tol=1e-12, abs_tol=1e-12)
