"""Command line front-end: ``leglab verify``, ``leglab run`` and ``leglab demo``.

Exit codes: 0 when every certificate passes, 1 on a failed certificate or a
runtime error of a pipeline, 2 on usage/parse errors and on specs a
pipeline rejects as invalid.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .contact import LegendrianCurve, verify_legendrian
from .errors import LeglabError, PreconditionViolation
from .pipeline import (
    RESIDUAL_TOL,
    CertInputs,
    ProblemSpec,
    _jsonable,
    approximate_legendrian,
    extend_with_outside_jets,
    run_carleman,
    run_mergelyan_theorem,
    run_push,
)

PIPELINES = ("approximate", "extend", "push", "mergelyan", "carleman")
CSV_SAMPLES = 1024

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def dumps(obj) -> str:
    """Canonical JSON text (sorted keys, repr floats) so output is byte-stable."""
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# demos


def _plane():
    return {"outer": {"type": "plane"}, "holes": []}


def _disk(c, r):
    return {"center": [float(np.real(c)), float(np.imag(c))], "radius": r, "holes": [], "hole_ids": []}


def _hole(c, r):
    return {"center": [float(np.real(c)), float(np.imag(c))], "radius": r}


def _target(*comps):
    return {"components": [{"expr": c} for c in comps]}


def _base(name, pipeline, S, target, **kw):
    d = {"name": name, "pipeline": pipeline, "domain": _plane(), "S": S, "target": target,
         "inner": [], "outer": [], "flags": {"immersion": False, "injective": False, "proper": False},
         "eps": 1e-6, "keep": None, "region": None, "exhaustion": {}, "seed": 0, "degreeMax": 64,
         "push": {}, "carleman": {}}
    d.update(kw)
    return d


def _demo_specs():
    seg = {"K": [], "arcs": [{"vertices": [[-1.0, 0.0], [1.0, 0.0]]}]}
    unit = {"K": [_disk(0, 1.0)], "arcs": []}
    half = {"K": [_disk(0, 0.5)], "arcs": []}
    ann = {"outer": {"type": "plane"}, "holes": [_hole(0, 0.3)]}
    two = {"outer": {"type": "plane"}, "holes": [_hole(0, 0.3), _hole(3, 0.3)]}
    eps_axis = [[float(r), 1.0 / (1.0 + r * r)] for r in np.linspace(0.0, 20.0, 41)]
    planar = _target("q", "q", "-q**2/2")
    return {
        "segment-jet": _base(
            "segment-jet", "approximate", seg, planar, inner=[{"p": [0.0, 0.0], "m": 2}]),
        "annulus-period": _base(
            "annulus-period", "approximate", {"K": [_disk(1.5, 0.4)], "arcs": []},
            _target("1/q", "q", "-log(q)"), domain=ann, inner=[{"p": [1.5, 0.0], "m": 1}],
            region={"center": [0.0, 0.0], "radius": 2.2, "holes": [_hole(0, 0.3)], "hole_ids": [0]}),
        "two-hole-periods": _base(
            "two-hole-periods", "approximate", {"K": [_disk(1.5, 0.5)], "arcs": []},
            _target("1/q + 1/(q - 3)", "q", "-log(q) - log(3 - q)"), domain=two,
            inner=[{"p": [1.5, 0.0], "m": 1}],
            region={"center": [1.5, 0.0], "radius": 2.4, "holes": [_hole(0, 0.3), _hole(3, 0.3)],
                    "hole_ids": [0, 1]}),
        "nodal-embedding": _base(
            "nodal-embedding", "approximate", {"K": [_disk(0, 1.2)], "arcs": []},
            _target("q**2 - 1", "q**3 - q", "-(3*q**5/5 - 4*q**3/3 + q)"), eps=1e-2,
            flags={"immersion": False, "injective": True, "proper": False}),
        "outside-jet": _base(
            "outside-jet", "approximate", unit, planar, eps=1e-2,
            inner=[{"p": [0.0, 0.0], "m": 1}],
            outer=[{"p": [3.0, 0.0], "m": 0, "x": [[[2.0, 0.0]]], "y": [[[2.5, 0.0]]], "z": [[-3.0, 0.0]]}]),
        "push-constant": _base(
            "push-constant", "push", unit, {"components": [
                {"laurent": {"centers": [], "poly": [[0, 2.0, 0.0]], "poles": []}},
                {"laurent": {"centers": [], "poly": [], "poles": []}},
                {"laurent": {"centers": [], "poly": [], "poles": []}}]},
            push={"R1": 1.0, "R2": 1.5, "rho": 1.0, "C": 1.0}),
        "mergelyan-three": _base(
            "mergelyan-three", "mergelyan", half, planar, eps=1e-3,
            inner=[{"p": [0.0, 0.0], "m": 1}], exhaustion={"count": 3}),
        "proper-three": _base(
            "proper-three", "mergelyan", half, planar, eps=1e-3,
            inner=[{"p": [0.0, 0.0], "m": 1}], exhaustion={"count": 3},
            flags={"immersion": False, "injective": False, "proper": True}),
        "immersion-critical": _base(
            "immersion-critical", "mergelyan", half, _target("q**2", "q**2", "-q**4/2"), eps=1e-3,
            exhaustion={"count": 3}, flags={"immersion": True, "injective": False, "proper": False}),
        "carleman-axis": _base(
            "carleman-axis", "carleman", {"K": [], "arcs": [{"vertices": [[-1000.0, 0.0], [1000.0, 0.0]]}]},
            planar, eps=eps_axis, carleman={"radii": [1.0, 2.0, 3.0], "truncate": 10.0}),
        "exp-degree16": _base(
            "exp-degree16", "approximate", unit, _target("exp(q)", "q", "-exp(q)"), degreeMax=16),
        "two-dim": _base(
            "two-dim", "approximate", unit, _target("q", "q**2", "q**2", "q", "-2*q**3/3 - q**3/3"),
            inner=[{"p": [0.25, 0.0], "m": 3}, {"p": [-0.5, 0.0], "m": 1}]),
    }


def demo_names():
    return sorted(_demo_specs())


def demo_spec(name: str) -> dict:
    specs = _demo_specs()
    if name not in specs:
        raise UsageError(f"unknown demo {name!r}; try 'leglab demo list'")
    return specs[name]


# ---------------------------------------------------------------------------
# pipelines


def load_spec(path) -> tuple[ProblemSpec, dict]:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read spec {path}: {exc}") from None
    try:
        return ProblemSpec.from_json(raw), raw
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed spec {path}: {exc}") from None


def run_pipeline(name: str, spec: ProblemSpec):
    """Run a named pipeline; returns (curve or None, RunReport-like dict, extras)."""
    if name == "approximate":
        curve, rep = approximate_legendrian(spec)
    elif name == "mergelyan":
        curve, rep = run_mergelyan_theorem(spec)
    elif name == "carleman":
        curve, rep = run_carleman(spec)
    elif name == "push":
        curve, rep = run_push(spec)
    elif name == "extend":
        ext = extend_with_outside_jets(spec)
        conds = [float(r["conditionC"]) for r in ext.report]
        report = {
            "pipeline": "extend", "name": spec.name, "stages": [{"stage": "extend", "arcs": ext.report}],
            "budgets": [], "boundary": [], "extra": {"S": ext.S_prime.to_json()},
            "certificates": {"conditionC": {"values": conds, "pass": all(c <= 1e-9 for c in conds)}},
        }
        report["certificates"]["pass"] = report["certificates"]["conditionC"]["pass"]
        report["pass"] = report["certificates"]["pass"]
        return None, _jsonable(report), ext
    else:
        raise UsageError(f"unknown pipeline {name!r}; choose from {', '.join(PIPELINES)}")
    return curve, rep.to_json(), rep


def curve_bundle(curve: LegendrianCurve, inputs: CertInputs | None):
    out = {"curve": curve.to_json()}
    if inputs is not None:
        out["certify"] = inputs.to_json()
    return out


def sample_paths(S, region, n=CSV_SAMPLES):
    """Boundary circles of the region and the arcs of S (clipped to the region), n samples each."""
    t = np.arange(n) / n
    paths = []
    if region is not None:
        paths.append(region.center + region.radius * np.exp(2j * np.pi * t))
        for h in region.holes:
            paths.append(h.center + h.radius * np.exp(2j * np.pi * t))
    for a in S.arcs:
        s = np.linspace(0.0, 1.0, 8 * n)
        pts = a.point_at(s)
        if region is not None:
            inside = np.flatnonzero(region.contains(pts, -1e-12))
            if inside.size == 0:
                continue
            # zoom onto the parameter range that meets the region
            lo, hi = s[max(inside[0] - 1, 0)], s[min(inside[-1] + 1, s.size - 1)]
            pts = a.point_at(np.linspace(lo, hi, 8 * n))
            pts = pts[region.contains(pts, -1e-12)]
        if pts.size:
            paths.append(pts[np.linspace(0, pts.size - 1, min(n, pts.size)).astype(int)])
    return paths


def write_csv(path, evaluate, paths):
    """Rows (t_index, component_index, re, im); t_index runs on across paths."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_index", "component_index", "re", "im"])
        t0 = 0
        for pts in paths:
            vals = evaluate(pts)
            for k in range(pts.size):
                for i in range(vals.shape[0]):
                    v = complex(vals[i, k])
                    w.writerow([t0 + k, i, repr(v.real), repr(v.imag)])
            t0 += pts.size


# ---------------------------------------------------------------------------
# commands


def cmd_verify(path, out=None) -> int:
    out = out or sys.stdout
    try:
        with open(path) as fh:
            raw = json.load(fh)
        curve = LegendrianCurve.from_json(raw["curve"] if "curve" in raw else raw)
        inputs = CertInputs.from_json(raw["certify"]) if "certify" in raw else None
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError, IndexError) as exc:
        print(f"leglab verify: cannot parse {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if inputs is not None:
        cert = inputs.run(curve)
    else:
        leg = verify_legendrian(curve, RESIDUAL_TOL)
        cert = {"legendrian": leg.to_json(), "pass": bool(leg.passed)}
    out.write(dumps(_jsonable({"certificates": cert, "pass": cert["pass"]})))
    return EXIT_OK if cert["pass"] else EXIT_FAIL


def cmd_run(pipeline, spec_path, degree_max=None, tol=None, seed=None, out_dir=None, csv_path=None,
            samples=CSV_SAMPLES, stream=None) -> int:
    stream = stream or sys.stdout
    if pipeline not in PIPELINES:
        raise UsageError(f"unknown pipeline {pipeline!r}; choose from {', '.join(PIPELINES)}")
    spec, _ = load_spec(spec_path)
    over = {}
    if degree_max is not None:
        over["degree_max"] = int(degree_max)
    if tol is not None:
        over["eps"] = float(tol)
    if seed is not None:
        over["seed"] = int(seed)
    if over:
        spec = spec.replace(**over)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    try:
        curve, report, obj = run_pipeline(pipeline, spec)
    except LeglabError as exc:
        diag = {"pipeline": pipeline, "name": spec.name, "pass": False,
                "error": {"type": type(exc).__name__, "message": str(exc)}}
        if out_dir:
            with open(os.path.join(out_dir, "report.json"), "w") as fh:
                fh.write(dumps(diag))
        stream.write(dumps(diag))
        return EXIT_USAGE if isinstance(exc, PreconditionViolation) else EXIT_FAIL
    if out_dir:
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            fh.write(dumps(report))
        if curve is not None:
            with open(os.path.join(out_dir, "curve.json"), "w") as fh:
                fh.write(dumps(curve_bundle(curve, obj.extra.get("certify"))))
        else:
            with open(os.path.join(out_dir, "extension.json"), "w") as fh:
                fh.write(dumps(_jsonable({"S": obj.S_prime.to_json(), "arcs": obj.report})))
    if csv_path:
        if curve is not None:
            inputs = obj.extra.get("certify")
            region = inputs.region if inputs is not None else spec.default_region()
            write_csv(csv_path, curve, sample_paths(spec.S, region, samples))
        else:
            write_csv(csv_path, obj.curve.values, sample_paths(obj.S_prime, None, samples))
    summary = {"pipeline": pipeline, "name": spec.name, "pass": report["pass"],
               "certificates": {k: v.get("pass") for k, v in report["certificates"].items()
                                if isinstance(v, dict) and "pass" in v}}
    stream.write(dumps(summary))
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_demo(name, out=None, stream=None) -> int:
    stream = stream or sys.stdout
    if name == "list":
        stream.write("\n".join(demo_names()) + "\n")
        return EXIT_OK
    text = dumps(demo_spec(name))
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        stream.write(text)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="leglab", description="Holomorphic Legendrian curve toolkit.")
    sub = p.add_subparsers(dest="command")
    v = sub.add_parser("verify", help="check a serialized curve")
    v.add_argument("path")
    r = sub.add_parser("run", help="run a pipeline on a spec")
    r.add_argument("pipeline", help="|".join(PIPELINES))
    r.add_argument("spec")
    r.add_argument("--degree-max", type=int)
    r.add_argument("--tol", type=float, help="uniform approximation tolerance")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="directory for report.json and curve.json")
    r.add_argument("--csv", help="CSV file of curve samples")
    r.add_argument("--samples", type=int, default=CSV_SAMPLES, help="CSV samples per boundary or arc")
    d = sub.add_parser("demo", help="list or print bundled specs")
    d.add_argument("name", help="'list' or a demo name")
    d.add_argument("--out", help="write the spec here instead of stdout")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        if args.command == "verify":
            return cmd_verify(args.path)
        if args.command == "run":
            return cmd_run(args.pipeline, args.spec, args.degree_max, args.tol, args.seed, args.out, args.csv,
                           args.samples)
        if args.command == "demo":
            if not args.name:
                parser.print_usage(sys.stderr)
                return EXIT_USAGE
            return cmd_demo(args.name, args.out)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"leglab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
