import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leglab.errors import NoPathFound, PreconditionViolation
from leglab.geometry import (
    AdmissibleSet,
    Arc,
    CircularDomain,
    CompactSet,
    Disk,
    LineSegment,
    build_arc,
    default_exhaustion,
    homology_basis,
    sample_set,
)
from leglab.laurent import LaurentPoly, OneForm, contour_integral

PLANE = CircularDomain(None, ())


def test_homology_basis_counts():
    disk = CircularDomain(Disk(0j, 5.0), ())
    assert homology_basis(disk, CompactSet(0j, 2.0)) == []
    ann = CircularDomain(None, (Disk(0j, 0.3),))
    k = CompactSet.in_domain(ann, 0j, 2.0)
    (c,) = homology_basis(ann, k)
    assert c.center == 0 and k.holes[0].radius < c.radius < 2.0
    two = CircularDomain(None, (Disk(0j, 0.3), Disk(3 + 0j, 0.3)))
    cycles = homology_basis(two, CompactSet.in_domain(two, 1.5, 2.4))
    assert [set(c.mask) for c in cycles] == [{0}, {1}]
    assert abs(cycles[0].center - cycles[1].center) > cycles[0].radius + cycles[1].radius


def test_homology_cycles_pick_out_their_hole():
    d = CircularDomain(None, (Disk(0j, 0.3), Disk(3 + 0j, 0.3), Disk(1.5 + 2j, 0.2)))
    k = CompactSet.in_domain(d, 1.5 + 0.5j, 3.2)
    cycles = homology_basis(d, k)
    assert len(cycles) == 3
    for c in cycles:
        for i, h in enumerate(d.holes):
            v = contour_integral(OneForm(LaurentPoly.pole(h.center)), c)
            assert v == (2j * math.pi if i in c.mask else 0)


def test_build_arc_straight_when_clear():
    d = CircularDomain(Disk(0j, 2.0), ())
    a = build_arc(d, 0, 1)
    assert a.vertices == [0, 1]


def test_build_arc_detours_around_hole():
    d = CircularDomain(None, (Disk(0j, 1.0),))
    a = build_arc(d, -1.5, 1.5)
    pts = a.sample(20000)
    assert np.min(np.abs(pts)) - 1.0 >= 1e-3
    assert a.a == -1.5 and a.b == 1.5


def test_build_arc_blocked():
    ring = Arc.from_vertices([2 * np.exp(2j * np.pi * k / 64) for k in range(65)])
    with pytest.raises(NoPathFound):
        build_arc(PLANE, 0, 5, avoid=[ring])


def test_build_arc_deterministic():
    d = CircularDomain(None, (Disk(0j, 1.0), Disk(2.5 + 0.5j, 0.4)))
    a = build_arc(d, -1.5 + 0.1j, 3.5, seed=7)
    b = build_arc(d, -1.5 + 0.1j, 3.5, seed=7)
    assert a.vertices == b.vertices


def test_default_exhaustion_plane():
    ex = default_exhaustion(PLANE, 3)
    assert [k.radius for k in ex.sets] == [1, 2, 3]
    assert set(ex.tags) == {"retract"}


def test_default_exhaustion_hole_step():
    d = CircularDomain(None, (Disk(2 + 0j, 0.1),))
    ex = default_exhaustion(d, 3)
    assert ex.tags.count("arc-attach") == 1
    j = ex.tags.index("arc-attach")
    assert 0 in ex.enclosed[j] and 0 not in ex.enclosed[j - 1]


def test_default_exhaustion_marked_point_moves_radius():
    ex = default_exhaustion(PLANE, 3, marked=[2 + 0j])
    assert all(abs(abs(2) - k.radius) > 1e-3 for k in ex.sets)
    assert any(k.contains(np.array([2 + 0j]), 1e-6)[0] for k in ex.sets)


def test_exhaustion_nesting():
    d = CircularDomain(None, (Disk(2 + 0j, 0.2), Disk(-3.5 + 1j, 0.3)))
    ex = default_exhaustion(d, 4)
    for a, b in zip(ex.sets, ex.sets[1:]):
        pts = a.grid(80)
        assert np.all(b.contains(pts, 1e-6))


def test_sample_set_counts():
    unit = AdmissibleSet((CompactSet(0j, 1.0),))
    pts = sample_set(unit, 100 / math.pi)
    assert pts.size == 100 and np.all(np.abs(pts) <= 1 + 1e-12)
    seg = AdmissibleSet((), (Arc((LineSegment(0j, 1 + 0j),)),))
    s = sample_set(seg, 50)
    assert s.size == 50 and np.allclose(np.diff(s.real), 1 / 49)
    assert sample_set(AdmissibleSet((CompactSet(0j, 1.0),), ()), 10).size == round(math.pi * 10)


def test_admissible_checks():
    tangent = AdmissibleSet((CompactSet(0j, 1.0),), (Arc((LineSegment(1 + 0j, 1 + 2j),)),))
    with pytest.raises(PreconditionViolation):
        tangent.validate()
    ok = AdmissibleSet((CompactSet(0j, 1.0),), (Arc((LineSegment(1 + 0j, 3 + 0j),)),))
    assert ok.validate()
    ann = CircularDomain(None, (Disk(0j, 0.3),))
    ring = AdmissibleSet((CompactSet(0j, 1.0, (Disk(0j, 0.5),)),))
    assert ring.is_runge(ann)
    assert not ring.is_runge(PLANE)


@given(st.floats(0.1, 3), st.floats(-2, 2), st.floats(-2, 2))
def test_geometry_json_roundtrip(r, cx, cy):
    k = CompactSet(complex(cx, cy), r + 1, (Disk(complex(cx, cy), r / 2),))
    assert CompactSet.from_json(k.to_json()) == k
    a = Arc.from_vertices([complex(cx, cy), complex(cx + r, cy), complex(cx + r, cy + r)])
    assert Arc.from_json(a.to_json()).vertices == a.vertices
    d = CircularDomain(Disk(0j, 10.0), (Disk(complex(cx, cy), r / 3),))
    assert CircularDomain.from_json(d.to_json()) == d


def test_admissible_components():
    K = CompactSet(0j, 1.0)
    attached = Arc((LineSegment(1 + 0j, 2 + 0j),))
    chained = Arc((LineSegment(2 + 0j, 2 + 1j),))
    free = Arc((LineSegment(-3 + 0j, -3 + 1j),))
    S = AdmissibleSet((K, CompactSet(5j, 0.5)), (attached, chained, free))
    assert sorted(S.components()) == [[0, 2, 3], [1], [4]]
    assert abs(S.piece_point(0)) < 0.5 and S.piece_point(4) == -3 + 0.5j
    assert AdmissibleSet((K,)).components() == [[0]]
