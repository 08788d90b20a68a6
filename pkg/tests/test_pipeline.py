import json
import math

import numpy as np
import pytest

from leglab.cli import demo_spec
from leglab.contact import JetSpec, LegendrianCurve, jet_of_curve
from leglab.errors import NotProperOnData, PreconditionViolation
from leglab.geometry import AdmissibleSet, Arc, CompactSet, LineSegment
from leglab.laurent import LaurentPoly, evaluate
from leglab.pipeline import (
    CertInputs,
    ProblemSpec,
    approximate_legendrian,
    extend_with_outside_jets,
    push_boundary,
    run_carleman,
    run_mergelyan_theorem,
    run_push,
    upgrade_proper,
)
from leglab.spray import sup_change
from leglab.targets import TargetCurve

PLANAR = ["q", "q", "-q**2/2"]


def disk(c, r, holes=()):
    return {"center": [float(np.real(c)), float(np.imag(c))], "radius": r,
            "holes": [{"center": [float(np.real(h)), float(np.imag(h))], "radius": s} for h, s in holes],
            "hole_ids": list(range(len(holes)))}


def make(S, target=PLANAR, holes=(), **kw):
    d = {"domain": {"outer": {"type": "plane"},
                    "holes": [{"center": [float(np.real(h)), float(np.imag(h))], "radius": r} for h, r in holes]},
         "S": S, "target": {"components": [{"expr": e} for e in target]}}
    d.update(kw)
    return ProblemSpec.from_json(d)


def segment(a, b):
    return {"K": [], "arcs": [{"vertices": [[a, 0.0], [b, 0.0]]}]}


def from_demo(name, **kw):
    d = demo_spec(name)
    d.update(kw)
    return ProblemSpec.from_json(d)


def trapezoid_period(curve, center, radius, n=4096):
    """Sum of x dy around a circle by the periodic trapezoid rule."""
    th = 2 * np.pi * np.arange(n) / n
    w = radius * np.exp(1j * th)
    q = center + w
    total = 0j
    for x, y in zip(curve.x, curve.y):
        total += np.sum(evaluate(x, q) * evaluate(y.derivative(), q) * 1j * w) * 2 * np.pi / n
    return total


# -- approximate_legendrian ------------------------------------------------------


def test_segment_jet_example():
    spec = make(segment(-0.5, 0.5), inner=[{"p": [0, 0], "m": 2}], eps=1e-6)
    curve, rep = approximate_legendrian(spec)
    assert rep.ok
    j = jet_of_curve(curve, 0, 2)
    assert np.allclose(j.x, [[0, 1, 0]], atol=1e-9) and np.allclose(j.y, [[0, 1, 0]], atol=1e-9)
    assert np.allclose(j.z, [0, 0, -1], atol=1e-9)
    t = np.linspace(-0.5, 0.5, 501)
    assert np.max(np.abs(curve(t) - np.array([t, t, -t**2 / 2]))) <= 1e-6
    assert rep.certificates["legendrian"]["maxResidualCoeff"] <= 1e-12


def test_annulus_periods_vanish():
    spec = from_demo("annulus-period")
    curve, rep = approximate_legendrian(spec)
    assert rep.ok
    # independent quadrature of the period around the hole
    assert abs(trapezoid_period(curve, 0j, 1.0)) <= 1e-9
    th = np.exp(2j * np.pi * np.arange(200) / 200)
    pts = 1.5 + 0.4 * np.outer(np.linspace(0, 1, 6), th).ravel()
    err = np.max(np.abs(curve(pts) - spec.target.values(pts)))
    assert err <= spec.eps


def test_inner_point_on_boundary_rejected():
    with pytest.raises(PreconditionViolation):
        make({"K": [disk(0, 1.0)], "arcs": []}, inner=[{"p": [1.0, 0.0], "m": 1}])


def test_certificates_recomputed_by_inputs():
    spec = from_demo("segment-jet")
    curve, rep = approximate_legendrian(spec)
    inputs = rep.extra["certify"]
    back = CertInputs.from_json(json.loads(json.dumps(inputs.to_json())))
    assert back.run(curve) == inputs.run(curve)
    bad = LegendrianCurve(curve.x, curve.y, curve.z + LaurentPoly.constant(1e-6))
    assert not back.run(bad)["pass"]


# -- outside jets ---------------------------------------------------------------------


def test_extend_constant_jet():
    jet = JetSpec(3 + 0j, 0, [[1.0]], [[2.0]], [3.0])
    spec = make({"K": [disk(0, 1.0)], "arcs": []}, outer=[jet.to_json()])
    ext = extend_with_outside_jets(spec)
    assert np.allclose(ext.curve.values(np.array([3 + 0j, 3.05 + 0.02j])), [[1, 1], [2, 2], [3, 3]])
    assert ext.report[0]["conditionC"] <= 1e-10
    (piece,) = [p for p in ext.curve.pieces if hasattr(p, "path")]
    path = piece.path
    # condition C by an independent Simpson rule on the sampled path
    t = np.linspace(0, 1, 20001)
    form = sum(path.values(t)[i] * path.derivatives(t)[1 + i] for i in range(1))
    h = t[1] - t[0]
    simpson = h / 3 * (form[0] + form[-1] + 4 * form[1:-1:2].sum() + 2 * form[2:-1:2].sum())
    assert abs(path.values(np.array([0.0]))[2, 0] - simpson - 3.0) <= 1e-9
    a = ext.arcs[0].a
    assert np.allclose(path.values(np.array([0.0]))[:, 0], spec.target.values(np.array([a]))[:, 0], atol=1e-12)


def test_extend_without_outside_points():
    spec = make({"K": [disk(0, 1.0)], "arcs": []})
    ext = extend_with_outside_jets(spec)
    assert ext.S_prime is spec.S and ext.arcs == []


def test_outside_jet_run():
    curve, rep = approximate_legendrian(from_demo("outside-jet"))
    assert rep.ok
    assert np.allclose(curve(np.array([3 + 0j]))[:, 0], [2, 2.5, -3], atol=1e-9)


# -- push ---------------------------------------------------------------------


def test_push_constant_curve():
    curve, rep = run_push(from_demo("push-constant"))
    assert rep.ok
    th = np.exp(2j * np.pi * np.arange(4096) / 4096)
    assert np.min(np.max(np.abs(curve(1.5 * th)), axis=0)) > 2
    ring = np.outer(np.linspace(1.0, 1.5, 21), th).ravel()
    assert np.min(np.max(np.abs(curve(ring)), axis=0)) > 1


def test_push_inert_when_levels_are_met():
    f = LegendrianCurve([LaurentPoly.constant(2.0)], [LaurentPoly.zero()], LaurentPoly.zero())
    g, rep = push_boundary(f, CompactSet(0j, 1.0), CompactSet(0j, 1.5), 0.0, 0.0)
    assert g.x == f.x and g.y == f.y and g.z == f.z


def test_push_rejects_zero_on_inner_circle():
    f = LegendrianCurve([LaurentPoly((), {0: -1.0, 1: 1.0})], [LaurentPoly.zero()], LaurentPoly.zero())
    with pytest.raises(PreconditionViolation):
        push_boundary(f, CompactSet(0j, 1.0), CompactSet(0j, 1.5), 0.5, 1.0)


# -- Mergelyan induction ------------------------------------------------------------------


def test_mergelyan_budget_arithmetic():
    spec = from_demo("mergelyan-three")
    curve, rep = run_mergelyan_theorem(spec)
    assert rep.ok
    assert len(rep.budgets) == 3
    e = min(1.0, spec.eps)
    assert sum(rep.budgets[1:]) <= 3 * e / 8 + 1e-15
    first = approximate_legendrian(spec.replace(region=CompactSet(0j, 1.0), check=False))
    assert all(t["pass"] for t in rep.certificates["telescoping"])
    assert first[1].ok


def test_mergelyan_arc_attach_kills_period():
    spec = make({"K": [disk(0, 0.5)], "arcs": []}, ["1/(q - 2)", "q", "-log(2 - q)"], holes=[(2 + 0j, 0.1)],
                eps=1e-3, exhaustion={"radii": [1.0, 2.6]})
    curve, rep = run_mergelyan_theorem(spec)
    assert [s["kind"] for s in rep.stages if s["stage"] == "step"] == ["initial", "arc-attach"]
    assert abs(trapezoid_period(curve, 2 + 0j, 0.3)) <= 1e-9
    assert rep.ok


def test_injective_with_colliding_jets_rejected():
    with pytest.raises(PreconditionViolation):
        make({"K": [disk(0, 1.0)], "arcs": []}, ["q**2", "q**2", "-q**4/2"],
             inner=[{"p": [0.2, 0], "m": 0}, {"p": [-0.2, 0], "m": 0}],
             flags={"injective": True})


# -- Carleman induction ------------------------------------------------------------------


def test_carleman_axis():
    spec = from_demo("carleman-axis")
    curve, rep = run_carleman(spec)
    assert rep.ok
    t = np.linspace(-3, 3, 200)
    err = np.max(np.abs(curve(t) - np.array([t, t, -t**2 / 2])), axis=0)
    assert np.all(err < 1 / (1 + t**2))


def test_carleman_single_disk_matches_approximation():
    spec = make({"K": [disk(0, 0.5)], "arcs": []}, eps=1e-6, carleman={"radii": [1.0], "truncate": 10.0})
    a, _ = run_carleman(spec)
    b, _ = approximate_legendrian(spec.replace(region=CompactSet(0j, 1.0), check=False))
    pts = CompactSet(0j, 0.5).grid(30)
    assert np.max(np.abs(a(pts) - b(pts))) <= 1e-12


def test_carleman_tangent_arc_rejected():
    spec = make({"K": [], "arcs": [{"vertices": [[1.0, -5.0], [1.0, 5.0]]}]},
                carleman={"radii": [1.0, 2.0], "truncate": 10.0}, eps=1e-3)
    with pytest.raises(PreconditionViolation):
        run_carleman(spec)


# -- properness ---------------------------------------------------------------------


def test_upgrade_proper_axis():
    target = TargetCurve.from_json({"components": [{"expr": e} for e in PLANAR]})
    S = AdmissibleSet((), (Arc((LineSegment(-10 + 0j, 10 + 0j),)),))
    sched = upgrade_proper(target, S, [1.0, 2.0, 3.0])
    t = np.linspace(-10, 10, 40001)
    norms = np.max(np.abs(target.values(t.astype(complex))), axis=0)
    for j, r in enumerate(sched.radii, start=1):
        assert r >= j - 1e-12 or r >= [1.0, 2.0, 3.0][j - 1]
        assert np.max(np.abs(t[norms <= j])) < r


def test_upgrade_proper_bounded_and_inert():
    target = TargetCurve.from_json({"components": [{"expr": e} for e in ["0", "0", "1"]]})
    S = AdmissibleSet((), (Arc((LineSegment(-10 + 0j, 10 + 0j),)),))
    with pytest.raises(NotProperOnData):
        upgrade_proper(target, S, [1.0, 2.0, 3.0])
    sched = upgrade_proper(target, S, [1.0, 2.0, 3.0], proper=False)
    assert not sched.active and sched.radii == [1.0, 2.0, 3.0]


def test_proper_three_levels():
    curve, rep = run_mergelyan_theorem(from_demo("proper-three"))
    assert rep.ok
    for b in rep.certificates["boundary"]:
        assert b["min"] > b["level"]
    assert [b["level"] for b in rep.certificates["boundary"]] == [1, 2, 3]
    assert math.isfinite(rep.certificates["boundary"][-1]["min"])


def test_several_outside_points():
    outer = []
    for p in (1.5j, -1.6 + 0j, -2.2j):
        outer.append(JetSpec.from_xy(p, [[p + 1e-3, 1.0, 0.0]], [[p - 1e-3, 1.0, 0.0]], -p * p / 2).to_json())
    spec = make({"K": [disk(0, 1.0)], "arcs": []}, inner=[{"p": [0, 0], "m": 1}], outer=outer, eps=1e-2)
    ext = extend_with_outside_jets(spec)
    assert len(ext.disks) == 3
    for i, a in enumerate(ext.disks):
        assert all(abs(a.center - b.center) > a.radius + b.radius for b in ext.disks[:i])
    curve, rep = approximate_legendrian(spec)
    assert rep.ok
    assert max(j["distance"] for j in rep.certificates["jets"]) <= 1e-9


def test_disconnected_S_across_a_hole():
    # z offsets between the disk and the far arc are fixed by an anchor row;
    # without it the fit never sees the integral of x dy across the gap
    spec = make({"K": [disk(1.5, 0.4)], "arcs": [{"vertices": [[-1.0, 1.0], [-1.0, 1.6]]}]},
                ["1/q", "q", "-log(q)"], holes=[(0j, 0.3)],
                region={"center": [0, 0], "radius": 2.2, "holes": [{"center": [0, 0], "radius": 0.3}]})
    assert len(spec.S.components()) == 2
    curve, rep = approximate_legendrian(spec)
    assert rep.ok
    pts = spec.S.arcs[0].sample(50)
    assert np.max(np.abs(curve(pts) - spec.target.values(pts))) <= spec.eps
    assert abs(trapezoid_period(curve, 0j, 1.0)) <= 1e-9
