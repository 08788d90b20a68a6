import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_laurent, random_legendrian
from leglab.contact import (
    ContactIso,
    JetSpec,
    LegendrianCurve,
    apply_iso,
    jet_distance,
    jet_of_curve,
    max_norm,
    verify_legendrian,
)
from leglab.errors import MismatchedJets
from leglab.laurent import LaurentPoly, add

Q = LaurentPoly.monomial(1)
ARC = LegendrianCurve([Q], [Q], LaurentPoly.monomial(2, -0.5))


def const(v):
    return LaurentPoly.constant(v)


def test_verify_examples():
    assert verify_legendrian(ARC).max_residual == 0 and verify_legendrian(ARC).passed
    assert verify_legendrian(LegendrianCurve([const(1)], [const(2)], const(3))).passed
    bad = verify_legendrian(LegendrianCurve([Q], [Q], LaurentPoly.zero()))
    assert not bad.passed and bad.max_residual == 1


def test_c2_on_arc():
    out = apply_iso(ContactIso.c2(1), ARC)
    assert out.x[0] == Q
    assert out.y[0] == Q.scale(-1)
    assert np.allclose(out.z(np.array([0.7 + 0.2j])), 0.5 * (0.7 + 0.2j) ** 2)
    assert verify_legendrian(out).max_residual == 0


def test_c2_on_constants():
    c = LegendrianCurve([const(2)], [const(3)], const(5))
    out = apply_iso(ContactIso.c2(1), c)
    assert out.y[0] == const(-3) and out.z == const(11)


def test_c1_involution_bit_exact(rng):
    for _ in range(20):
        c = random_legendrian(rng, 3, centers=(0j, 2 + 0j))
        iso = ContactIso.c1(3, 2)
        back = apply_iso(iso, apply_iso(iso, c))
        assert back.x == c.x and back.y == c.y and back.z == c.z


def test_exchange_inverse_restores(rng):
    c = random_legendrian(rng, 2)
    iso = ContactIso.exchange(2, 2)
    out = apply_iso(iso.inverse(), apply_iso(iso, c))
    assert verify_legendrian(out).passed
    pts = np.array([0.1 + 0.2j, -0.5j])
    assert np.allclose(out(pts), c(pts), atol=1e-12)


def test_c2_preserves_verdict(rng):
    iso = ContactIso.c2(2)
    for k in range(100):
        good = random_legendrian(rng, 2, centers=(0j,) if k % 2 else ())
        assert verify_legendrian(apply_iso(iso, good)).passed
        bad = LegendrianCurve(good.x, good.y, add(good.z, random_laurent(rng, good.z.centers, 2, 0)))
        assert verify_legendrian(bad).passed == verify_legendrian(apply_iso(iso, bad)).passed is False


def test_jet_examples():
    j = jet_of_curve(ARC, 0, 1)
    assert np.allclose(j.x, [[0, 1]]) and np.allclose(j.y, [[0, 1]]) and np.allclose(j.z, [0, 0])
    j = jet_of_curve(LegendrianCurve([const(1)], [const(2)], const(3)), 0.3, 2)
    assert np.all(j.x[:, 1:] == 0) and np.all(j.y[:, 1:] == 0) and np.all(j.z[1:] == 0)
    assert np.allclose(jet_of_curve(ARC, 1, 2).z, [-0.5, -1, -1])


def test_jet_distance_examples():
    a = jet_of_curve(ARC, 0.5, 2)
    assert jet_distance(a, a) == 0
    b = JetSpec(a.p, a.m, a.x, a.y, a.z + np.array([1, 0, 0]))
    assert jet_distance(a, b) == 1
    with pytest.raises(MismatchedJets):
        jet_distance(a, jet_of_curve(ARC, 0.5, 1))


def test_curve_jets_are_compatible(rng):
    for _ in range(20):
        c = random_legendrian(rng, 2, centers=(3 + 0j,))
        p = complex(rng.normal(), rng.normal())
        assert jet_of_curve(c, p, 3).is_compatible()


def test_max_norm_examples():
    assert max_norm([3 + 4j, 0, 0]) == 5
    assert max_norm([0, 0, 0]) == 0
    assert max_norm([1, 2j, -3]) == 3


@given(st.integers(1, 3), st.integers(0, 10**6))
def test_curve_json_roundtrip(n, seed):
    c = random_legendrian(np.random.default_rng(seed), n, centers=(0j, -1 + 2j))
    back = LegendrianCurve.from_json(json.loads(json.dumps(c.to_json())))
    assert back.x == c.x and back.y == c.y and back.z == c.z


@given(st.integers(0, 10**6))
def test_jetspec_json_roundtrip(seed):
    c = random_legendrian(np.random.default_rng(seed), 2)
    j = jet_of_curve(c, 0.25 - 0.5j, 3)
    k = JetSpec.from_json(json.loads(json.dumps(j.to_json())))
    assert jet_distance(j, k) == 0
