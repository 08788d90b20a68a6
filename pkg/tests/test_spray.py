import math

import numpy as np
import pytest

from leglab.contact import LegendrianCurve, jet_of_curve, jet_distance
from leglab.errors import DegenerateDy1, DerivativeNotNearIdentity, SearchExhausted, ZeroCrossing
from leglab.geometry import CircularDomain, CompactSet, Disk
from leglab.laurent import LaurentPoly, evaluate, primitive, OneForm
from leglab.spray import (
    CorrectionSet,
    assemble_ds,
    build_corrections,
    build_period_map,
    certify_immersion,
    certify_injective,
    difference_map,
    embedding_search,
    eval_extended_period,
    solve_affine,
    solve_multiplicative,
    spray_x1,
    sup_change,
)

Q = LaurentPoly.monomial(1)
ANN = CircularDomain(None, (Disk(0j, 0.3),))
TWO = CircularDomain(None, (Disk(0j, 0.3), Disk(3 + 0j, 0.3)))
UNIT = CompactSet(0j, 1.0)


def annulus_pm():
    return build_period_map(ANN, CompactSet.in_domain(ANN, 0j, 2.0))


def curve_from(x, y, anchor=0.5):
    """Legendrian curve with z the primitive of -x dy vanishing at anchor."""
    F = primitive(OneForm.product(x, y))
    z = LaurentPoly.constant(complex(evaluate(F, anchor)), F.centers) - F
    return LegendrianCurve([x], [y], z)


def nodal(true_node=False):
    # true node: x(1) = x(-1), y(1) = y(-1) and z(1) = z(-1) all hold
    if true_node:
        x = LaurentPoly((), {0: -1.0, 2: -6.0, 4: 7.0})
    else:
        x = LaurentPoly((), {0: -1.0, 2: 1.0})
    y = LaurentPoly((), {1: -1.0, 3: 1.0})
    return curve_from(x, y, 0j)


# -- corrections -----------------------------------------------------------


def test_annulus_correction_is_scaled_pole():
    cs = build_corrections(Q, annulus_pm())
    (g,) = cs.g
    expect = LaurentPoly.pole(0j, coef=1 / (2j * math.pi))
    diff = g - expect
    # oracle: residue arithmetic, only the 1/z term can carry the period
    assert diff.max_coeff() <= 1e-12


def test_arc_correction_integral_is_one():
    pm = build_period_map(None, UNIT, 0j, [0.5 + 0.5j], [0j])
    cs = build_corrections(Q, pm, jet_kill=[(-0.5 + 0j, 2)])
    (h,) = cs.h.values()
    # straight arc: integral of h over [0, p] by Gauss-Legendre, independent of the solver
    t, w = np.polynomial.legendre.leggauss(40)
    s = 0.5 * (t + 1)
    val = np.sum(0.5 * w * evaluate(h, s * (0.5 + 0.5j))) * (0.5 + 0.5j)
    assert abs(val - 1) <= 1e-8
    assert np.max(np.abs(np.array([evaluate(h.derivative(k), -0.5) for k in range(3)]))) <= 1e-10


def test_constant_y1_degenerate():
    with pytest.raises(DegenerateDy1):
        build_corrections(LaurentPoly.constant(2.0), annulus_pm())


# -- extended period map -----------------------------------------------------


def test_eval_extended_period_examples():
    pm = annulus_pm()
    P, _ = eval_extended_period([LaurentPoly.pole(0j)], [Q], pm)
    assert P[0] == pytest.approx(2j * math.pi, abs=1e-14)
    P, _ = eval_extended_period([Q], [Q], pm)
    assert abs(P[0]) == 0
    arc = build_period_map(None, UNIT, 0j, [1 + 0j], [-1 + 0j])
    for method in ("quad", "exact"):
        _, Z = eval_extended_period([LaurentPoly.constant(1.0)], [Q], arc, method)
        assert abs(Z[0]) <= 1e-13


# -- affine spray ----------------------------------------------------------------


def test_solve_affine_annulus():
    pm = annulus_pm()
    cs = build_corrections(Q, pm)
    x1 = LaurentPoly.pole(0j)
    params = solve_affine(x1, [], [Q], cs, pm)
    # S(zeta) = 2 pi i + zeta
    assert params.zeta[0] == pytest.approx(-2j * math.pi, abs=1e-12)
    P, _ = eval_extended_period([spray_x1(x1, cs, params)], [Q], pm)
    assert abs(P[0]) <= 1e-12


def test_solve_affine_zero_input():
    pm = annulus_pm()
    cs = build_corrections(Q, pm)
    params = solve_affine(Q, [], [Q], cs, pm)
    assert np.all(params.vector == 0)


def test_solve_affine_gate():
    pm = annulus_pm()
    cs = build_corrections(Q, pm).scaled(1.5)
    with pytest.raises(DerivativeNotNearIdentity):
        solve_affine(LaurentPoly.pole(0j), [], [Q], cs, pm)


def two_hole_setup():
    K = CompactSet.in_domain(TWO, 1.5, 2.4)
    pm = build_period_map(TWO, K, 1.5 + 0j, [1.5 + 1j, 0.8 - 1.2j], [0.3 + 0j, -0.2j], 0j)
    y1 = Q + LaurentPoly.monomial(2, 0.05)
    return K, pm, y1


def test_ds_near_identity_and_fd_jacobian():
    _, pm, y1 = two_hole_setup()
    cs = build_corrections(y1, pm)
    DS = assemble_ds(y1, cs, pm)
    dev = np.abs(DS - np.eye(pm.size))
    assert dev[: pm.s].max() <= 1e-6 and dev[pm.s:].max() <= 1e-7
    x1 = LaurentPoly.pole(0j) + LaurentPoly.pole(3 + 0j)

    def S(vec):
        return np.concatenate(eval_extended_period([spray_x1(x1, cs, vec)], [y1], pm, "quad", 1e-13))

    h = 1e-3
    J = np.zeros_like(DS)
    for k in range(pm.size):
        e = np.zeros(pm.size, dtype=complex)
        e[k] = h
        J[:, k] = (S(e) - S(-e)) / (2 * h)
    assert np.max(np.abs(J - DS)) <= 1e-6


def test_two_hole_periods_vanish():
    _, pm, y1 = two_hole_setup()
    cs = build_corrections(y1, pm)
    x1 = LaurentPoly.pole(0j) + LaurentPoly.pole(3 + 0j)
    params = solve_affine(x1, [], [y1], cs, pm)
    P, Z = eval_extended_period([spray_x1(x1, cs, params)], [y1], pm, "quad", 1e-13)
    assert np.max(np.abs(P)) <= 1e-9 and np.max(np.abs(Z)) <= 1e-8


# -- multiplicative spray -------------------------------------------------------


def test_multiplicative_already_solved():
    pm = annulus_pm()
    cs = build_corrections(Q, pm)
    params = solve_multiplicative(Q, Q, cs, pm)
    assert params.report["iterations"] == 0 and np.all(params.vector == 0)


def test_multiplicative_closed_form():
    # one arc [0, 1], x1 = 1, correction 1: S(xi) = exp(-xi) - 2, root -log 2
    pm = build_period_map(None, UNIT, 0j, [1 + 0j], [2 + 0j], 0j)
    cs = CorrectionSet([], {1 + 0j: LaurentPoly.constant(1.0)})
    params = solve_multiplicative(LaurentPoly.constant(1.0), LaurentPoly.constant(1.0), cs, pm)
    assert abs(params.xi[0] + math.log(2)) <= 1e-7


def test_multiplicative_zero_on_cycle():
    pm = annulus_pm()
    c = pm.cycles[0]
    x1 = Q - LaurentPoly.constant(c.center + c.radius)
    with pytest.raises(ZeroCrossing):
        solve_multiplicative(x1, Q, build_corrections(Q, pm), pm)


# -- immersion / injectivity ----------------------------------------------------


def test_certify_immersion():
    assert certify_immersion(curve_from(Q, Q), UNIT).ok
    q2 = LaurentPoly.monomial(2)
    assert not certify_immersion(curve_from(q2, q2), UNIT).ok


def test_difference_map_examples():
    c = nodal(true_node=True)
    same = lambda xi: c
    assert np.all(difference_map(same, [(0.3 + 0.1j, 0.3 + 0.1j)], None) == 0)
    assert np.max(np.abs(difference_map(same, [(1 + 0j, -1 + 0j)], None))) <= 1e-14
    # the plain nodal curve only meets in the (x, y) projection
    d = difference_map(lambda xi: nodal(), [(1 + 0j, -1 + 0j)], None)[0]
    assert np.max(np.abs(d[:2])) <= 1e-14 and abs(d[2]) == pytest.approx(8 / 15, abs=1e-13)
    emb = curve_from(Q, Q)
    assert np.all(np.abs(difference_map(lambda xi: emb, [(0j, 0.5 + 0j)], None)[0, :2]) > 0)


def test_embedding_search_embedded_unchanged():
    c = curve_from(Q, Q)
    assert embedding_search(c, UNIT) is c


def test_embedding_search_removes_node():
    c = nodal(true_node=True)
    K = CompactSet(0j, 1.2)
    assert not certify_injective(c, K).ok
    out = embedding_search(c, K, budget=1e-2, seed=3)
    assert certify_injective(out, K).ok
    assert sup_change(c, out, K) <= 1e-2


def test_embedding_search_zero_budget():
    with pytest.raises(SearchExhausted):
        embedding_search(nodal(true_node=True), CompactSet(0j, 1.2), budget=0.0)


def test_embedding_search_keeps_jets():
    c = nodal(true_node=True)
    K = CompactSet(0j, 1.2)
    jets = [jet_of_curve(c, 0.2 + 0.1j, 1)]
    out = embedding_search(c, K, jets=jets, budget=1e-2, seed=1)
    assert jet_distance(jet_of_curve(out, 0.2 + 0.1j, 1), jets[0]) <= 1e-10
