"""Drivers: jet-interpolating approximation, outside-jet extension, boundary
push, and the Mergelyan-type and Carleman-type induction loops."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .approx import (
    LaurentBasis,
    constrained_lstsq,
    fit_components,
    immersion_fix,
    make_nonconstant,
    mergelyan_jets,
    min_derivative_on_grid,
    zeros_of_derivative,
)
from .contact import ContactIso, JetSpec, LegendrianCurve, apply_iso, jet_distance, jet_of_curve, verify_legendrian
from .errors import (
    BudgetCollapse,
    ConditioningFailure,
    DegenerateArcIntegral,
    DegenerateDy1,
    FloorViolated,
    JunctionMismatch,
    LeglabError,
    NoPathFound,
    NotProperOnData,
    PreconditionViolation,
    SectorCoverFailure,
    ZeroCrossing,
)
from .geometry import (
    AdmissibleSet,
    Arc,
    CircularDomain,
    CircularPiece,
    CompactSet,
    Disk,
    Exhaustion,
    LineSegment,
    default_exhaustion,
    enclosed_holes,
    homology_basis,
    sample_compact,
)
from .laurent import LaurentPoly, OneForm, contour_integral, differentiate, evaluate, mul, primitive
from .paths import connect_legendrian
from .spray import (
    _integral_rows,
    build_corrections,
    build_period_map,
    certify_immersion,
    certify_injective,
    embedding_search,
    eval_extended_period,
    legendrian_z,
    solve_affine,
    solve_multiplicative,
    spray_x1,
    sup_change,
)
from .targets import (
    DiskPiece,
    GeneralisedCurve,
    PathPiece,
    RegionPiece,
    SegmentBase,
    TargetCurve,
    end_scale,
    t_jet,
    taylor_curve,
)

DEGREE_SCHEDULE = (8, 12, 16, 24, 32, 48, 64, 96, 128)
FIT_SHARE = 0.5
JET_TOL = 1e-9
PERIOD_TOL = 1e-9
RESIDUAL_TOL = 1e-9
BOUNDARY_SAMPLES = 4096
MIN_BUDGET = 1e-14
JUNCTION_TOL = 1e-8
AUX_TOL = 1.0
RIDGE = 1e-5  # coefficient damping in weighted-residual units for pipeline fits


# ---------------------------------------------------------------------------
# problem specification


def _c(v):
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def _cj(z):
    z = complex(z)
    return [z.real, z.imag]


def slot_index(keep, n):
    """Slot of a kept component given as an index or a name such as "y1" or "z"."""
    if keep is None:
        return None
    if isinstance(keep, str):
        if keep == "z":
            return 2 * n
        kind, i = keep[0], int(keep[1:])
        if kind not in "xy" or not 1 <= i <= n:
            raise PreconditionViolation(f"unknown component name {keep}")
        return i - 1 if kind == "x" else n + i - 1
    k = int(keep)
    if not 0 <= k <= 2 * n:
        raise PreconditionViolation(f"component index {k} out of range")
    return k


class EpsFunction:
    """Positive tolerance: a constant or samples (|q|, eps) interpolated in |q|."""

    def __init__(self, eps):
        self.raw = eps
        if np.isscalar(eps):
            if eps <= 0:
                raise PreconditionViolation("eps must be positive")
            self.r = None
            self.e = float(eps)
        else:
            arr = np.asarray(eps, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2 or np.any(arr[:, 1] <= 0):
                raise PreconditionViolation("eps samples must be positive (|q|, eps) pairs")
            order = np.argsort(arr[:, 0])
            self.r, self.e = arr[order, 0], arr[order, 1]

    def __call__(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.r is None:
            return np.full(z.shape, self.e)
        return np.interp(np.abs(z), self.r, self.e)

    def to_json(self):
        return self.e if self.r is None else np.column_stack([self.r, self.e]).tolist()


@dataclass
class ProblemSpec:
    """Data of one run; see README for the JSON schema."""

    domain: CircularDomain
    S: AdmissibleSet
    target: object
    inner: list = field(default_factory=list)
    outer: list = field(default_factory=list)
    immersion: bool = False
    injective: bool = False
    proper: bool = False
    eps: object = 1e-6
    keep: object = None
    region: CompactSet | None = None
    exhaustion: dict = field(default_factory=dict)
    seed: int = 0
    degree_max: int = 64
    name: str = ""
    push: dict = field(default_factory=dict)
    carleman: dict = field(default_factory=dict)
    check: bool = True

    def __post_init__(self):
        self.n = self.target.n
        self.inner = [(complex(p), int(m)) for p, m in self.inner]
        self.outer = list(self.outer)
        self.keep = slot_index(self.keep, self.n)
        self.eps_fn = EpsFunction(self.eps)
        if self.check:
            self.validate()

    # -- checks

    def validate(self):
        S = self.S
        for p, m in self.inner:
            if m < 0:
                raise PreconditionViolation("jet orders must be >= 0")
            if not _in_interior(S, p):
                raise PreconditionViolation(f"interpolation point {p} is not in the interior of S")
            if not self.domain.contains(np.array([p]))[0]:
                raise PreconditionViolation(f"interpolation point {p} is outside the domain")
        for j in self.outer:
            if j.n != self.n:
                raise PreconditionViolation("outside jet dimension does not match the target")
            if S.contains(np.array([j.p]))[0]:
                raise PreconditionViolation(f"outside point {j.p} lies on S")
            if not self.domain.contains(np.array([j.p]))[0]:
                raise PreconditionViolation(f"outside point {j.p} is outside the domain")
            if not j.is_compatible():
                raise PreconditionViolation(f"outside jet at {j.p} violates the Legendrian compatibility")
        pts = [p for p, _ in self.inner] + [j.p for j in self.outer]
        if len({complex(p) for p in pts}) != len(pts):
            raise PreconditionViolation("interpolation points must be distinct")
        jets = self.jets()
        if self.injective:
            vals = [j.value() for j in jets]
            for a in range(len(vals)):
                for b in range(a):
                    if np.max(np.abs(vals[a] - vals[b])) <= 1e-12:
                        raise PreconditionViolation("jet values at the interpolation points collide")
        if self.immersion:
            for j in jets:
                if j.m >= 1 and np.max(np.abs(np.concatenate([j.x[:, 1], j.y[:, 1], j.z[1:2]]))) == 0:
                    raise PreconditionViolation(f"zero first derivative prescribed at {j.p}")
        if self.keep is not None and self.outer:
            raise PreconditionViolation("a kept component cannot be combined with outside jets")
        return True

    def jets(self):
        """Prescribed jets: target jets at inner points, then the outside jets."""
        return [self.target.jet(p, m) for p, m in self.inner] + list(self.outer)

    def default_region(self) -> CompactSet:
        if self.region is not None:
            return self.region
        c, r = self.S.bounding_disk()
        for j in self.outer:
            r = max(r, abs(j.p - c))
        return CompactSet.in_domain(self.domain, c, 1.25 * r + 0.1)

    def replace(self, **kw) -> "ProblemSpec":
        d = dict(domain=self.domain, S=self.S, target=self.target, inner=self.inner, outer=self.outer,
                 immersion=self.immersion, injective=self.injective, proper=self.proper, eps=self.eps,
                 keep=self.keep, region=self.region, exhaustion=self.exhaustion, seed=self.seed,
                 degree_max=self.degree_max, name=self.name, push=self.push, carleman=self.carleman,
                 check=self.check)
        d.update(kw)
        return ProblemSpec(**d)

    # -- serialization

    def to_json(self):
        return {
            "name": self.name,
            "domain": self.domain.to_json(),
            "S": self.S.to_json(),
            "target": self.target.to_json(),
            "inner": [{"p": _cj(p), "m": m} for p, m in self.inner],
            "outer": [j.to_json() for j in self.outer],
            "flags": {"immersion": self.immersion, "injective": self.injective, "proper": self.proper},
            "eps": self.eps_fn.to_json(),
            "keep": self.keep,
            "region": self.region.to_json() if self.region is not None else None,
            "exhaustion": self.exhaustion,
            "seed": self.seed,
            "degreeMax": self.degree_max,
            "push": _push_json(self.push),
            "carleman": self.carleman,
        }

    @classmethod
    def from_json(cls, d):
        flags = d.get("flags", {})
        region = d.get("region")
        return cls(
            domain=CircularDomain.from_json(d.get("domain", {})),
            S=AdmissibleSet.from_json(d["S"]),
            target=TargetCurve.from_json(d["target"]),
            inner=[(_c(e["p"]), int(e["m"])) for e in d.get("inner", [])],
            outer=[JetSpec.from_json(e) for e in d.get("outer", [])],
            immersion=bool(flags.get("immersion", False)),
            injective=bool(flags.get("injective", False)),
            proper=bool(flags.get("proper", False)),
            eps=d.get("eps", 1e-6),
            keep=d.get("keep"),
            region=CompactSet.from_json(region) if region else None,
            exhaustion=d.get("exhaustion", {}),
            seed=int(d.get("seed", 0)),
            degree_max=int(d.get("degreeMax", 64)),
            name=d.get("name", ""),
            push=_push_from_json(d.get("push", {})),
            carleman=d.get("carleman", {}),
        )


def _push_json(p):
    out = {}
    for k, v in (p or {}).items():
        out[k] = v.to_json() if isinstance(v, CompactSet) else v
    return out


def _push_from_json(p):
    out = {}
    for k, v in (p or {}).items():
        out[k] = CompactSet.from_json(v) if isinstance(v, dict) and "radius" in v else v
    return out


def _in_interior(S: AdmissibleSet, p, tol=1e-9):
    """Interior of the compact pieces, or the relative interior of an arc."""
    z = np.array([complex(p)])
    for k in S.K:
        if k.contains(z, tol)[0]:
            return True
    for a in S.arcs:
        if a.distance_to(z, 4096)[0] <= max(1e-9, a.length / 2048) and min(abs(p - a.a), abs(p - a.b)) > tol:
            return True
    return False


# ---------------------------------------------------------------------------
# reports


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (complex, np.complexfloating)):
        return [float(np.real(v)), float(np.imag(v))]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if hasattr(v, "to_json"):
        return _jsonable(v.to_json())
    return v


# in-process objects and timings; kept off report JSON so it stays byte-stable
_IN_PROCESS = ("certify", "generalised", "rounds", "runtime")


@dataclass
class RunReport:
    pipeline: str
    name: str = ""
    stages: list = field(default_factory=list)
    budgets: list = field(default_factory=list)
    boundary: list = field(default_factory=list)
    certificates: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def stage(self, name, **data):
        self.stages.append({"stage": name, **data})

    @property
    def ok(self) -> bool:
        return bool(self.certificates.get("pass", False))

    def to_json(self):
        return _jsonable({
            "pipeline": self.pipeline,
            "name": self.name,
            "stages": self.stages,
            "budgets": self.budgets,
            "boundary": self.boundary,
            "certificates": self.certificates,
            "extra": {k: v for k, v in self.extra.items() if k not in _IN_PROCESS},
            "pass": self.ok,
        })


# ---------------------------------------------------------------------------
# certificates


def boundary_norm(curve, center, radius, n=BOUNDARY_SAMPLES):
    th = 2 * np.pi * np.arange(n) / n
    pts = complex(center) + radius * np.exp(1j * th)
    return float(np.min(np.max(np.abs(curve(pts)), axis=0)))


def period_values(curve: LegendrianCurve, domain, region):
    """Periods of sum x dy over the homology cycles of region (residue-exact)."""
    if domain is None or region is None:
        return []
    form = OneForm.product(curve.x[0], curve.y[0])
    for xi, yi in zip(curve.x[1:], curve.y[1:]):
        form = form + OneForm.product(xi, yi)
    return [contour_integral(form, c) for c in homology_basis(domain, region)]


def certify(curve: LegendrianCurve, region: CompactSet | None = None, jets=(), target=None, points=None,
            eps=None, immersion=False, injective=False, domain=None, boundary=(), grid_n=150):
    """Recompute every certificate from the curve alone."""
    out = {}
    leg = verify_legendrian(curve, RESIDUAL_TOL)
    out["legendrian"] = leg.to_json()
    ok = leg.passed
    jrep = []
    for j in jets:
        d = jet_distance(jet_of_curve(curve, j.p, j.m), j)
        jrep.append({"p": j.p, "m": j.m, "distance": d, "pass": d <= JET_TOL})
        ok &= d <= JET_TOL
    out["jets"] = jrep
    domain = domain if domain is not None else curve.domain
    P = period_values(curve, domain, region)
    out["periods"] = {"values": [abs(p) for p in P], "pass": all(abs(p) <= PERIOD_TOL for p in P)}
    ok &= out["periods"]["pass"]
    if target is not None and points is not None and len(points):
        pts = np.asarray(points, dtype=complex)
        if callable(eps):
            e = eps(pts)
        elif np.ndim(eps) == 1:
            e = np.asarray(eps, dtype=float)
        else:
            e = np.full(pts.shape, float(eps if eps is not None else np.inf))
        tv = np.asarray(target, dtype=complex) if isinstance(target, np.ndarray) else target.values(pts)
        diff = np.max(np.abs(curve(pts) - tv), axis=0)
        w = float(np.max(diff / e))
        out["supError"] = {"max": float(np.max(diff)), "weighted": w, "pass": w < 1.0}
        ok &= w < 1.0
    if immersion and region is not None:
        c = certify_immersion(curve, region)
        out["immersion"] = c.to_json()
        ok &= c.ok
    if injective and region is not None:
        c = certify_injective(curve, region, grid_n)
        out["injectivity"] = c.to_json()
        ok &= c.ok
    brep = []
    for center, radius, level in boundary:
        v = boundary_norm(curve, center, radius)
        brep.append({"radius": radius, "min": v, "level": level, "pass": v > level})
        ok &= v > level
    if brep:
        out["boundary"] = brep
    out["pass"] = bool(ok)
    return out


class CertInputs:
    """Frozen certificate data: target values and tolerances at fixed points.

    Serialized next to a curve so that a later check reproduces the in-process
    certificates exactly.
    """

    def __init__(self, region=None, jets=(), points=None, values=None, eps=None, immersion=False,
                 injective=False, domain=None, boundary=()):
        self.region = region
        self.jets = list(jets)
        self.points = None if points is None else np.asarray(points, dtype=complex)
        self.values = None if values is None else np.asarray(values, dtype=complex)
        self.eps = None if eps is None else np.asarray(eps, dtype=float)
        self.immersion = bool(immersion)
        self.injective = bool(injective)
        self.domain = domain
        self.boundary = [(complex(c), float(r), float(v)) for c, r, v in boundary]

    @classmethod
    def build(cls, region, jets, target, points, eps, immersion=False, injective=False, domain=None,
              boundary=()):
        pts = None if points is None else np.asarray(points, dtype=complex)
        vals = e = None
        if pts is not None and target is not None:
            vals = target.values(pts)
            e = eps(pts) if callable(eps) else np.full(pts.shape, float(eps))
        return cls(region, jets, pts, vals, e, immersion, injective, domain, boundary)

    def run(self, curve):
        return certify(curve, self.region, self.jets, self.values, self.points, self.eps, self.immersion,
                       self.injective, self.domain, self.boundary)

    def to_json(self):
        pair = lambda a: np.column_stack([a.real, a.imag]).tolist()
        return {
            "region": self.region.to_json() if self.region is not None else None,
            "domain": self.domain.to_json() if self.domain is not None else None,
            "jets": [j.to_json() for j in self.jets],
            "points": pair(self.points) if self.points is not None else None,
            "values": [pair(v) for v in self.values] if self.values is not None else None,
            "eps": self.eps.tolist() if self.eps is not None else None,
            "immersion": self.immersion,
            "injective": self.injective,
            "boundary": [[_cj(c), r, v] for c, r, v in self.boundary],
        }

    @classmethod
    def from_json(cls, d):
        arr = lambda rows: np.array([complex(a, b) for a, b in rows], dtype=complex)
        return cls(
            CompactSet.from_json(d["region"]) if d.get("region") else None,
            [JetSpec.from_json(j) for j in d.get("jets", [])],
            arr(d["points"]) if d.get("points") is not None else None,
            np.array([arr(v) for v in d["values"]]) if d.get("values") is not None else None,
            np.array(d["eps"], dtype=float) if d.get("eps") is not None else None,
            d.get("immersion", False),
            d.get("injective", False),
            CircularDomain.from_json(d["domain"]) if d.get("domain") else None,
            [(_c(c), r, v) for c, r, v in d.get("boundary", [])],
        )


# ---------------------------------------------------------------------------
# sampling


def sample_admissible(S: AdmissibleSet, total=600, min_piece=48, min_arc=32):
    areas = [k.area for k in S.K]
    lens = [a.length for a in S.arcs]
    share_k = 0.7 if S.arcs else 1.0
    out = []
    for k, a in zip(S.K, areas):
        out.append(sample_compact(k, max(min_piece, int(total * share_k * a / max(sum(areas), 1e-300)))))
    for arc, L in zip(S.arcs, lens):
        out.append(arc.sample(max(min_arc, int(total * (1 - share_k) * L / max(sum(lens), 1e-300)))))
    return np.concatenate(out) if out else np.zeros(0, dtype=complex)


# ---------------------------------------------------------------------------
# outside jets


@dataclass
class ExtensionResult:
    curve: GeneralisedCurve
    S_prime: AdmissibleSet
    arcs: list
    disks: list
    report: list


def _nearest_on_S(S: AdmissibleSet, p, offset=0.0):
    best = None
    for k in S.K:
        circles = [(k.center, k.radius)]
        if abs(p - k.center) < k.radius:
            circles = [(h.center, h.radius) for h in k.holes if abs(p - h.center) < h.radius]
        for c, r in circles:
            th = np.angle(p - c) + offset
            u = c + r * np.exp(1j * th)
            d = abs(p - u)
            if best is None or d < best[1]:
                best = (complex(u), d)
    for a in S.arcs:
        pts = a.sample(2048)
        i = int(np.argmin(np.abs(pts - p)))
        i = int(np.clip(i + int(round(offset * 200)), 0, pts.size - 1))
        d = abs(p - pts[i])
        if best is None or d < best[1]:
            best = (complex(pts[i]), d)
    if best is None:
        raise PreconditionViolation("S is empty")
    return best[0]


def _segment_clear(domain, S, a, b, disks):
    t = np.linspace(0.02, 1.0, 200)
    pts = a + t * (b - a)
    if not np.all(domain.contains(pts)):
        return False
    if np.any(S.contains(pts[:-1], 1e-12)):
        return False
    for d in disks:
        if np.any(np.abs(pts[:-1] - d.center) < d.radius):
            return False
    return True


def _as_target(f):
    if f is None or isinstance(f, (TargetCurve, GeneralisedCurve)):
        return f
    if isinstance(f, LegendrianCurve):
        return TargetCurve.from_curve(f)
    raise PreconditionViolation("unsupported base curve")


def extend_with_outside_jets(spec: ProblemSpec, f=None, floor=0.0, mask=(), S=None, outer=None) -> ExtensionResult:
    """Generalised curve on S' = S plus disks around outside points plus arcs.

    On each disk the components are the jet polynomials of the prescribed
    jet; along each arc a Legendrian path matches order-2 jets at both ends
    and its bump amplitude makes the z values agree.
    """
    base = _as_target(f) if f is not None else spec.target
    S = S if S is not None else spec.S
    outer = list(spec.outer if outer is None else outer)
    domain = spec.domain
    if not outer:
        return ExtensionResult(GeneralisedCurve(base), S, [], [], [])
    centers = domain.centers
    pieces_disk, pieces_path, disks, arcs, rep = [], [], [], [], []
    ps = [j.p for j in outer]
    radii = []
    for p in ps:
        if S.contains(np.array([p]))[0]:
            raise PreconditionViolation(f"outside point {p} lies on S")
        r = min(0.3 * abs(p - _nearest_on_S(S, p)), 0.25)
        others = [abs(p - q) for q in ps if q != p]
        if others:
            r = min(r, 0.3 * min(others))
        for h in domain.holes:
            r = min(r, 0.3 * (abs(p - h.center) - h.radius))
        if domain.outer is not None:
            r = min(r, 0.3 * (domain.outer.radius - abs(p - domain.outer.center)))
        radii.append(r)
    all_disks = [Disk(p, r) for p, r in zip(ps, radii)]
    for idx, jet in enumerate(outer):
        p, r, disk = jet.p, radii[idx], all_disks[idx]
        u0 = _nearest_on_S(S, p)
        blockers = [d for k, d in enumerate(all_disks) if k != idx]
        dcurve = taylor_curve(jet, centers)
        path = arc = None
        last = None
        for attempt, off in enumerate((0.0, 0.3, -0.3, 0.6)):
            u = _nearest_on_S(S, p, off) if off else u0
            o = p + r * (u - p) / abs(u - p)
            if not _segment_clear(domain, S, u, o, blockers):
                last = NoPathFound(f"straight arc from {u} to {o} is blocked")
                continue
            arc = Arc((LineSegment(u, o),))
            ja = t_jet(base.jet(u, 2), end_scale(arc, 0))
            jb = t_jet(jet_of_curve(dcurve, o, 2), end_scale(arc, 1))
            jb = JetSpec(0.0, 2, jb.x, jb.y, jb.z)
            try:
                path = connect_legendrian(ja, jb, floor, mask)
                break
            except DegenerateArcIntegral as exc:
                last = exc
                path = None
        if path is None:
            raise last if last is not None else NoPathFound("no arc found")
        zc = complex(evaluate(dcurve.z, p))
        cond = abs(complex(path.z(np.array([1.0]))[0]) - complex(evaluate(dcurve.z, arc.b)))
        rep.append({"point": p, "radius": r, "u": arc.a, "arcLength": arc.length, "conditionC": cond,
                    "bump": path.report.get("bumpAmplitude", 0.0), "zDisk": zc})
        disks.append(disk)
        arcs.append(arc)
        pieces_disk.append(DiskPiece(disk, dcurve, jet))
        pieces_path.append(PathPiece(arc, path))
    curve = GeneralisedCurve(base, pieces_disk + pieces_path, base.n)
    Sp = AdmissibleSet(tuple(S.K) + tuple(CompactSet(d.center, d.radius) for d in disks), tuple(S.arcs) + tuple(arcs))
    return ExtensionResult(curve, Sp, arcs, disks, rep)


# ---------------------------------------------------------------------------
# core fit


def _weighted_error(curve, pts, vals, w):
    if pts.size == 0:
        return 0.0, 0.0
    diff = np.max(np.abs(curve(pts) - vals), axis=0)
    return float(np.max(diff * w)), float(np.max(diff))


def _jet_rows(basis, jets, slot):
    rows, rhs = [], []
    for j in jets:
        comp = j.component(slot)
        for d in range(j.m + 1):
            rows.append(basis.matrix(np.array([j.p]), d)[0])
            rhs.append(comp[d])
    return rows, rhs


def _corrections_for(y1, pm, jets, R, immersion, pts):
    jk = [(j.p, j.m + 1) for j in jets if j.m >= 1]
    dk = [j.p for j in jets if j.m == 0]
    if immersion:
        dk += [p for p, _ in zeros_of_derivative(y1, R)]
    return build_corrections(y1, pm, jk, dk, pts[:: max(1, pts.size // 200)])


def _fit_once(basis, data_pts, vals, w, jets, spec, R, pm_factory, keep, report, anchors=()):
    n = spec.n
    free = [i for i in range(2 * n) if i != keep]
    jv = []
    for i in free:
        v = []
        for j in jets:
            v.extend(j.component(i)[: j.m + 1])
        jv.append(v)
    comps, info = fit_components(data_pts, vals[free], [(j.p, j.m) for j in jets], basis, w,
                                 jv if jets else None, RIDGE)
    fitted = dict(zip(free, comps))
    if keep is not None:
        fitted[keep] = spec_keep_component(spec, keep, basis.centers)
    xs = [fitted[i] for i in range(n)]
    ys = [fitted[n + i] for i in range(n)]
    eps_min = float(np.min(1.0 / w)) if w.size else 1e-6
    if keep != n:
        ys[0] = make_nonconstant(ys[0], data_pts, [(j.p, j.m) for j in jets], 1e-6, 0.01 * eps_min)
    elif ys[0].is_constant(tol=1e-14):
        raise PreconditionViolation("the kept y1 is constant")
    pm = pm_factory(n)
    # refit x1 with the period and arc rows imposed exactly
    A = basis.matrix(data_pts) * w[:, None]
    b = vals[0] * w
    rows, rhs = _jet_rows(basis, jets, 0)
    dy1 = differentiate(ys[0])
    if pm.size:
        cols = [basis.to_laurent(e) for e in np.eye(basis.dim)]
        zero = LaurentPoly.zero(basis.centers)
        P0, Z0 = eval_extended_period([zero] + xs[1:], ys, pm, "exact")
        Rr = _integral_rows(cols, dy1, pm)
        rows = list(rows) + list(Rr)
        rhs = list(rhs) + list(-np.concatenate([P0, Z0]))
    C = np.array(rows) if rows else None
    d = np.array(rhs, dtype=complex) if rows else None
    coef, linfo = constrained_lstsq(A, b, C, d, ridge=RIDGE)
    xs[0] = basis.to_laurent(coef)
    report["constraintResidual"] = linfo.constraint_residual
    delta = 0.0
    if spec.immersion:
        xs[0], delta = immersion_fix(xs[0], ys[0], R, [(j.p, j.m) for j in jets], 0.1 * eps_min)
    report["immersionDelta"] = delta
    if pm.size:
        try:
            cs = _corrections_for(ys[0], pm, jets, R, spec.immersion, data_pts)
            params = solve_affine(xs[0], xs[1:], ys, cs, pm)
            xs[0] = spray_x1(xs[0], cs, params)
            report["spray"] = {"dsDeviation": params.report["ds_dev"], "P": params.report["P"],
                               "Z": params.report["Z"], "params": np.abs(params.vector).tolist(),
                               "correctionResiduals": {k: cs.report[k] for k in ("cycle", "arc", "kill")}}
        except (DegenerateDy1, ConditioningFailure) as exc:
            P, Z = eval_extended_period(xs, ys, pm, "quad")
            res = float(max(np.max(np.abs(P), initial=0), np.max(np.abs(Z), initial=0)))
            if res > 1e-10:
                raise
            report["spray"] = {"skipped": str(exc), "residual": res}
    if jets:
        z = legendrian_z(xs, ys, jets[0].p, complex(jets[0].z[0]))
    elif anchors:
        z = legendrian_z(xs, ys, anchors[0][0], anchors[0][1])
    else:
        F = primitive(_form(xs, ys))
        fv = evaluate(F, data_pts)
        ww = w**2
        c0 = complex(np.sum(ww * (vals[2 * n] + fv)) / np.sum(ww))
        z = LaurentPoly.constant(c0, F.centers) - F
    return LegendrianCurve(xs, ys, z, spec.domain), info


def _form(xs, ys):
    form = OneForm.product(xs[0], ys[0])
    for a, b in zip(xs[1:], ys[1:]):
        form = form + OneForm.product(a, b)
    return form


def spec_keep_component(spec, keep, centers):
    f = spec.target.laurent(keep) if isinstance(spec.target, TargetCurve) else None
    if f is None:
        raise PreconditionViolation("a kept component must be a Laurent polynomial")
    return f


def _pm_factory(spec, R, jets, slot_values=None, anchors=()):
    def make(n):
        pts = [j.p for j in jets] + [p for p, _ in anchors]
        if not pts:
            return build_period_map(spec.domain, R, None, (), (), 0j, n, spec.seed)
        vals = list(slot_values if slot_values is not None else [complex(j.z[0]) for j in jets])
        vals += [v for _, v in anchors]
        return build_period_map(spec.domain, R, pts[0], pts[1:], vals[1:], vals[0], n, spec.seed)

    return make


def _z_anchors(S, data, jets, n):
    """Target z at one point of each connected piece of S that holds no jet point.

    z is pinned at a single point, so on a disconnected S the offsets between
    pieces are integrals of x dy across gaps the fit never samples. One arc row
    per extra piece fixes them. Empty when S is connected.
    """
    groups = S.components()
    if len(groups) < 2:
        return []
    out = []
    for g in groups:
        sub = S.piece_subset(g)
        if any(sub.contains(np.array([j.p]))[0] for j in jets):
            continue
        p = S.piece_point(g[0])
        out.append((p, complex(data.values(np.array([p]))[2 * n, 0])))
    return out


def _identity_ok(spec, data, jets, R):
    """The target is already a Legendrian Laurent curve meeting every condition."""
    if not isinstance(data, TargetCurve) or not data.is_laurent:
        return None
    c = data.curve(spec.domain)
    if verify_legendrian(c, 1e-12).max_residual > 1e-12 * max(1.0, c.residual().max_coeff()):
        return None
    if any(jet_distance(jet_of_curve(c, j.p, j.m), j) > 1e-12 for j in jets):
        return None
    if any(abs(p) > PERIOD_TOL for p in period_values(c, spec.domain, R)):
        return None
    for f in c.components:
        for i, ctr in enumerate(f.centers):
            if f.pole_order(i) and np.any(R.contains(np.array([ctr]))):
                return None
    if spec.immersion and not certify_immersion(c, R).ok:
        return None
    return c


def _fit_legendrian(spec, data, Sp, R, jets, eps_fn, report, keep=None):
    pts = sample_admissible(Sp)
    vals = data.values(pts)
    w = 1.0 / eps_fn(pts)
    # disks and arcs added around outside points only carry the jets there
    core = spec.S.contains(pts, 1e-9)
    w[~core] = 1.0 / np.maximum(1.0 / w[~core], AUX_TOL)
    cp, cv, cw = pts[core], vals[:, core], w[core]
    ident = _identity_ok(spec, data, jets, R) if keep is None or isinstance(data, TargetCurve) else None
    if ident is not None:
        report.stage("fit", identity=True, degree=max(f.degree for f in ident.components))
        return ident, cp, cv, cw
    centers = spec.domain.centers
    enclosed = set(enclosed_holes(spec.domain, R))
    anchor = np.concatenate([pts, R.boundary_points(64)])
    z_anchors = _z_anchors(Sp, data, jets, spec.n)
    best = None
    trace = []
    schedule = [d for d in DEGREE_SCHEDULE if d <= spec.degree_max] or [spec.degree_max]
    for deg in schedule:
        poles = [max(1, deg // 4) if i in enclosed else 0 for i in range(len(centers))]
        basis = LaurentBasis.for_points(centers, deg, poles, anchor)
        if basis.dim < sum(j.m + 1 for j in jets):
            trace.append({"degree": deg, "error": "basis too small"})
            continue
        info = {}
        try:
            curve, finfo = _fit_once(basis, pts, vals, w, jets, spec, R, _pm_factory(spec, R, jets, None, z_anchors),
                                     keep, info, z_anchors)
        except (LeglabError, np.linalg.LinAlgError) as exc:
            trace.append({"degree": deg, "error": f"{type(exc).__name__}: {exc}"})
            last_exc = exc
            continue
        werr, aerr = _weighted_error(curve, cp, cv, cw)
        info["auxError"] = _weighted_error(curve, pts[~core], vals[:, ~core], w[~core])[1] if np.any(~core) else 0.0
        trace.append({"degree": deg, "weightedError": werr, "supError": aerr, **info})
        if best is None or werr < best[1]:
            best = (curve, werr)
        if werr <= FIT_SHARE:
            break
    report.stage("fit", identity=False, trace=trace)
    if best is None:
        raise last_exc
    return best[0], cp, cv, cw


def _exchange_jet(j: JetSpec, i):
    """Jet of the image under the exchange iso in slot pair i (1-based)."""
    n = j.n
    x, y = j.x.copy(), j.y.copy()
    X, Y = x[i - 1].copy(), y[i - 1].copy()
    x[i - 1] = -Y
    y[i - 1] = X
    z = j.z.copy()
    for k in range(j.m + 1):
        z[k] += sum(math.comb(k, r) * X[r] * Y[k - r] for r in range(k + 1))
    return JetSpec(j.p, j.m, x, y, z)


def approximate_legendrian(spec: ProblemSpec, region: CompactSet | None = None):
    """Legendrian Laurent curve on region approximating the target on S with jets.

    Returns (curve, RunReport).
    """
    R = region if region is not None else spec.default_region()
    rep = RunReport("approximate", spec.name)
    t0 = time.perf_counter()
    spts = sample_admissible(spec.S, 300)
    if not np.all(R.contains(spts, -1e-9)):
        raise PreconditionViolation("the region must contain S")
    if spec.domain.holes and not spec.S.is_runge(spec.domain):
        raise PreconditionViolation("S is not Runge in the domain")
    jets = spec.jets()
    for j in jets:
        if not R.contains(np.array([j.p]), 1e-9)[0]:
            raise PreconditionViolation(f"interpolation point {j.p} is not inside the region")
    data, Sp = spec.target, spec.S
    if spec.outer:
        ext = extend_with_outside_jets(spec)
        data, Sp = ext.curve, ext.S_prime
        rep.stage("extend", arcs=ext.report)
    keep = spec.keep
    n = spec.n
    if keep is not None and keep < n:
        # exchange (x_k, y_k): the kept x becomes a kept y; undone at the end
        k = keep + 1
        iso = ContactIso.exchange(n, k)
        sub = spec.replace(target=spec.target.exchanged(k), keep=n + keep, check=False)
        jx = [_exchange_jet(j, k) for j in jets]
        curve, pts, vals, w = _fit_legendrian(sub, sub.target, Sp, R, jx, spec.eps_fn, rep, n + keep)
        curve = apply_iso(iso.inverse(), curve)
        curve = LegendrianCurve(curve.x, curve.y, curve.z, spec.domain)
        vals = spec.target.values(pts)
        rep.stage("keep", component=keep, via="exchange")
    elif keep == 2 * n:
        curve, pts, vals, w = _keep_z(spec, R, jets, rep)
    else:
        curve, pts, vals, w = _fit_legendrian(spec, data, Sp, R, jets, spec.eps_fn, rep, keep)
    werr, aerr = _weighted_error(curve, pts, vals, w)
    if spec.injective:
        cert = certify_injective(curve, R)
        if not cert.ok:
            budget = 0.5 * float(np.min(1.0 / w)) * max(0.0, 1.0 - werr)
            curve, info = embedding_search(curve, R, jets, budget, spec.seed, spec.domain, return_info=True)
            rep.stage("embedding", budget=budget, supChange=info.get("supChange", 0.0),
                      probes=info.get("probes", []), tries=len(info.get("trace", [])))
    inputs = CertInputs.build(R, jets, data, pts, spec.eps_fn, spec.immersion, spec.injective, spec.domain)
    rep.extra["certify"] = inputs
    rep.certificates = inputs.run(curve)
    if keep is not None:
        kept = curve.components[keep]
        same = kept == spec.target.laurent(keep)
        rep.certificates["keep"] = {"component": keep, "identical": bool(same)}
        if keep == 2 * n:
            # the kept-z variant is Legendrian up to the approximation level
            res = rep.certificates["legendrian"]["maxResidualCoeff"]
            rep.certificates["legendrian"]["pass"] = bool(res <= 1e-6)
            rep.certificates["pass"] = all(
                v.get("pass", True) for key, v in rep.certificates.items() if isinstance(v, dict)
            ) and all(j["pass"] for j in rep.certificates["jets"])
        rep.certificates["pass"] = bool(rep.certificates["pass"] and same)
    rep.extra["runtime"] = time.perf_counter() - t0
    rep.extra["weightedError"] = werr
    return curve, rep


def _keep_z(spec, R, jets, rep):
    """Kept z: x1 moves multiplicatively, y1 follows from dz + sum x dy = 0."""
    n = spec.n
    z = spec.target.laurent(2 * n)
    if z is None:
        raise PreconditionViolation("a kept z must be a Laurent polynomial")
    pts = sample_admissible(spec.S)
    vals = spec.target.values(pts)
    w = 1.0 / spec.eps_fn(pts)
    centers = spec.domain.centers
    enclosed = set(enclosed_holes(spec.domain, R))
    grid = np.concatenate([R.grid(40), R.boundary_points(128)])
    best = None
    for deg in [d for d in DEGREE_SCHEDULE if d <= spec.degree_max]:
        poles = [max(1, deg // 4) if i in enclosed else 0 for i in range(len(centers))]
        basis = LaurentBasis.for_points(centers, deg, poles, np.concatenate([pts, grid]))
        free = list(range(2 * n))
        jv = [[v for j in jets for v in j.component(i)[: j.m + 1]] for i in free]
        comps, _ = fit_components(pts, vals[:2 * n], [(j.p, j.m) for j in jets], basis, w, jv if jets else None)
        xs, ys = comps[:n], comps[n:]
        beta = -differentiate(z)
        for a, b in zip(xs[1:], ys[1:]):
            beta = beta - mul(a, differentiate(b))
        yvals = [complex(j.y[0, 0]) for j in jets]
        pm = _pm_factory(spec, R, jets, yvals)(n)
        x1 = xs[0]
        if pm.size:
            cs = _corrections_for(ys[0], pm, jets, R, False, pts)
            params = solve_multiplicative(x1, beta, cs, pm)
            g = np.zeros(grid.shape, dtype=complex)
            gp = np.zeros(pts.shape, dtype=complex)
            for c, f in zip(params.vector, cs.functions):
                g = g + c * evaluate(f, grid)
                gp = gp + c * evaluate(f, pts)
            fit_pts = np.concatenate([grid, pts])
            fit_vals = np.concatenate([evaluate(x1, grid) * np.exp(g), evaluate(x1, pts) * np.exp(gp)])
            x1 = mergelyan_jets((fit_pts, fit_vals), [(j.p, j.m, j.x[0]) for j in jets], basis)
        xv = evaluate(x1, grid)
        if np.min(np.abs(xv)) < 1e-8:
            raise ZeroCrossing("x1 vanishes on the region; the kept-z variant needs x1 != 0")
        target_dy = evaluate(beta, grid) / xv
        A = basis.matrix(grid, 1)
        rows, rhs = _jet_rows(basis, jets, n)
        if not rows:
            rows = [basis.matrix(np.array([pts[0]]))[0]]
            rhs = [vals[n, 0]]
        coef, _ = constrained_lstsq(A, target_dy, np.array(rows), np.array(rhs, dtype=complex))
        ys = [basis.to_laurent(coef)] + list(ys[1:])
        curve = LegendrianCurve([x1] + list(xs[1:]), ys, z, spec.domain)
        werr, aerr = _weighted_error(curve, pts, vals, w)
        res = curve.residual().max_coeff()
        if best is None or werr + res < best[1]:
            best = (curve, werr + res)
        if werr <= FIT_SHARE and res <= 1e-8:
            break
    rep.stage("keep", component=2 * n, via="multiplicative")
    return best[0], pts, vals, w


# ---------------------------------------------------------------------------
# boundary push


def _sector_plan(vals, th, rho, n, K):
    """Per sector: the x/y component with the largest minimal modulus above rho."""
    sec = np.floor(((th + np.pi / K) % (2 * np.pi)) / (2 * np.pi / K)).astype(int) % K
    plan = []
    for s in range(K):
        m = sec == s
        mins = np.min(np.abs(vals[: 2 * n, m]), axis=1)
        i = int(np.argmax(mins))
        if mins[i] <= rho:
            return None
        plan.append((s, i, float(mins[i])))
    return plan


def _polypow(c, k):
    out = np.array([1.0 + 0j])
    base = np.asarray(c, dtype=complex)
    while k:
        if k & 1:
            out = np.convolve(out, base)
        k >>= 1
        if k:
            base = np.convolve(base, base)
    return out


def _directional_bump(c, r2, A, N, M, theta, centers):
    """A u^N ((1 + e^{-i theta} u)/2)^M with u = (q - c)/r2, in powers of q."""
    u = np.array([-complex(c) / r2, 1.0 / r2])
    lin = np.array([1.0, 0.0]) + np.exp(-1j * theta) * u
    coef = A * np.convolve(_polypow(u, N), _polypow(0.5 * lin, M))
    return LaurentPoly(centers, {k: v for k, v in enumerate(coef) if v != 0})


def _hermite_fix(f: LaurentPoly, jets, centers):
    """Polynomial with the jets of f at the interpolation points (minimal degree)."""
    if not jets:
        return LaurentPoly.zero(centers)
    nrows = sum(j.m + 1 for j in jets)
    pts = np.array([j.p for j in jets])
    basis = LaurentBasis(centers, nrows - 1, None, max(1.0, float(np.max(np.abs(pts)))))
    rows, rhs = [], []
    for j in jets:
        for d in range(j.m + 1):
            rows.append(basis.matrix(np.array([j.p]), d)[0])
            rhs.append(evaluate(f.derivative(d) if d else f, j.p))
    coef = np.linalg.solve(np.array(rows), np.array(rhs, dtype=complex))
    return basis.to_laurent(coef)


def _annulus_points(R1, R2, domain, n=200):
    g = R2.grid(n)
    g = g[np.abs(g - R2.center) >= R1.radius]
    if domain is not None:
        g = g[domain.contains(g)]
    return g


def push_boundary(f: LegendrianCurve, R1: CompactSet, R2: CompactSet, rho, C, spec: ProblemSpec | None = None,
                  jets=(), small_tol=1e-10, domain=None):
    """Enlarge the boundary norm: > rho on R2 minus Int R1 and > rho + C on bR2.

    Returns (curve, report dict).
    """
    domain = domain if domain is not None else (spec.domain if spec is not None else f.domain)
    c = R1.center
    if abs(R2.center - c) > 1e-12:
        raise PreconditionViolation("R1 and R2 must be concentric")
    if R2.radius < 1.05 * R1.radius:
        raise PreconditionViolation("R2 must be at least 1.05 times larger than R1")
    if rho < 0 or C < 0:
        raise PreconditionViolation("rho and C must be non-negative")
    th = 2 * np.pi * np.arange(BOUNDARY_SAMPLES) / BOUNDARY_SAMPLES
    b1 = c + R1.radius * np.exp(1j * th)
    v1 = f(b1)
    n1 = np.max(np.abs(v1), axis=0)
    if float(np.min(n1)) <= rho:
        raise PreconditionViolation(f"min norm {np.min(n1):.3e} on bR1 does not exceed rho={rho}")
    jets = list(jets) if jets else (spec.jets() if spec is not None else [])
    inner_jets = [j for j in jets if abs(j.p - c) < R1.radius]
    outer_jets = [j for j in jets if R1.radius <= abs(j.p - c) <= R2.radius]
    for j in outer_jets:
        if np.max(np.abs(j.value())) <= rho:
            raise PreconditionViolation(f"prescribed value at {j.p} is not above rho")
    rep = {"rho": rho, "C": C, "R1": R1.radius, "R2": R2.radius}
    n = f.n
    annulus = _annulus_points(R1, R2, domain)
    b2 = c + R2.radius * np.exp(1j * th)

    def passes(g):
        a = float(np.min(np.max(np.abs(g(annulus)), axis=0))) if annulus.size else math.inf
        b = float(np.min(np.max(np.abs(g(b2)), axis=0)))
        return a > rho and b > rho + C, a, b

    ok, a, b = passes(f)
    if ok and not outer_jets:
        rep.update({"bumped": False, "annulusMin": a, "boundaryMin": b})
        return f, rep
    f1 = f
    if outer_jets:
        # phase 1: outside jets in the annulus, joined with floor-respecting paths
        sub = ProblemSpec(domain, AdmissibleSet((R1,)), TargetCurve.from_curve(f), [(j.p, j.m) for j in inner_jets],
                          outer_jets, eps=small_tol * 1e3, region=R2, seed=spec.seed if spec else 0,
                          check=False)
        f1, srep = approximate_legendrian(sub, R2)
        rep["phase1"] = srep.to_json()["certificates"]
        v1 = f1(b1)
    zmask = np.max(np.abs(v1[: 2 * n]), axis=0) <= rho
    if np.any(zmask):
        raise SectorCoverFailure(f"{int(np.sum(zmask))} boundary samples have only z above rho")
    centers = f1.x[0].centers
    for K in (1, 2, 4, 8):
        plan = _sector_plan(v1, th, rho, n, K)
        if plan is None:
            continue
        if K == 1:
            Ms = [0]
        else:
            base_m = 2 * K
            M0 = base_m * max(1, int(math.log(0.25) / math.log(math.cos(math.pi / (2 * K))) // base_m))
            Ms = [M0, 2 * M0, 4 * M0]
        for M in Ms:
            lead = math.cos(math.pi / (2 * K)) ** M if K > 1 else 1.0
            comps = list(f1.components)
            amps = {}
            for s, i, _ in plan:
                j = i + n if i < n else i - n
                sup = float(np.max(np.abs(f1.components[j](b2))))
                amps[s] = (j, 1.5 * (rho + C + sup) / lead + 1e-3)
            total = sum(A for _, A in amps.values())
            N = max(1, math.ceil(math.log(small_tol / total) / math.log(R1.radius / R2.radius)))
            bumps = {}
            for s, (j, A) in amps.items():
                theta = 2 * np.pi * s / K
                w = _directional_bump(c, R2.radius, A, N, M, theta, centers)
                bumps[j] = bumps[j] + w if j in bumps else w
            for j, w in bumps.items():
                comps[j] = comps[j] + w - _hermite_fix(w, inner_jets, centers)
            xs, ys = comps[:n], comps[n:2 * n]
            anchor = inner_jets[0].p if inner_jets else c + R1.radius
            z_anchor = complex(evaluate(f1.z, anchor))
            pj = inner_jets
            pm = build_period_map(domain, R2, anchor if pj else None, [j.p for j in pj[1:]],
                                  [complex(evaluate(f1.z, j.p)) for j in pj[1:]], z_anchor, n)
            if pm.size:
                cs = _corrections_for(ys[0], pm, pj, R2, False, R1.boundary_points(256))
                params = solve_affine(xs[0], xs[1:], ys, cs, pm)
                xs = [spray_x1(xs[0], cs, params)] + xs[1:]
            z = legendrian_z(xs, ys, anchor, z_anchor)
            g = LegendrianCurve(xs, ys, z, domain)
            ok, a, b = passes(g)
            if ok:
                rep.update({"bumped": True, "sectors": K, "M": M, "N": N,
                            "components": [{"sector": s, "kept": i, "bumped": amps[s][0], "amplitude": amps[s][1]}
                                           for s, i, _ in plan],
                            "annulusMin": a, "boundaryMin": b,
                            "changeOnR1": float(np.max(np.abs(g(b1) - f1(b1))))})
                return g, rep
    raise FloorViolated("no sector plan met the norm targets")


def _as_disk(domain, v):
    if isinstance(v, CompactSet):
        return v
    return CompactSet.in_domain(domain, 0j, float(v))


def run_push(spec: ProblemSpec):
    """push_boundary driven by spec.push = {R1, R2, rho, C[, smallTol]}; returns (curve, RunReport).

    A Laurent target is pushed as given; any other target is first approximated on R1.
    """
    t0 = time.perf_counter()
    cfg = spec.push or {}
    try:
        R1 = _as_disk(spec.domain, cfg["R1"])
        R2 = _as_disk(spec.domain, cfg["R2"])
        rho, C = float(cfg["rho"]), float(cfg["C"])
    except KeyError as exc:
        raise PreconditionViolation(f"push settings need {exc.args[0]}") from None
    rep = RunReport("push", spec.name)
    if spec.target.is_laurent:
        f = spec.target.curve(spec.domain)
    else:
        f, r0 = approximate_legendrian(spec.replace(outer=[], region=R1, check=False), R1)
        rep.stage("approximate", certificates=r0.certificates)
    jets = spec.jets()
    g, prep = push_boundary(f, R1, R2, rho, C, spec, jets, float(cfg.get("smallTol", 1e-10)), spec.domain)
    rep.stage("push", **prep)
    rep.boundary.append({"radius": R2.radius, "level": rho + C, "min": prep["boundaryMin"]})
    inputs = CertInputs(R2, jets, immersion=spec.immersion, domain=spec.domain,
                        boundary=[(R2.center, R2.radius, rho + C)])
    rep.extra["certify"] = inputs
    cert = inputs.run(g)
    cert["annulus"] = {"min": prep["annulusMin"], "rho": rho, "pass": prep["annulusMin"] > rho}
    cert["pass"] = bool(cert["pass"] and cert["annulus"]["pass"])
    rep.certificates = cert
    rep.extra["runtime"] = time.perf_counter() - t0
    return g, rep


# ---------------------------------------------------------------------------
# properness schedule


@dataclass
class ProperSchedule:
    radii: list
    targets: list
    active: bool = True

    def to_json(self):
        return {"radii": self.radii, "targets": self.targets, "active": self.active}


def upgrade_proper(target, S: AdmissibleSet, radii, proper=True, n=4096, margin=0.5):
    """Relabel exhaustion radii so {q in S: |f(q)| <= j} lies inside K_j."""
    radii = [float(r) for r in radii]
    if not proper:
        return ProperSchedule(radii, [], False)
    pts = sample_admissible(S, n, min_piece=64, min_arc=n // max(1, len(S.arcs) or 1))
    norms = np.max(np.abs(target.values(pts)), axis=0)
    edge = float(np.max(np.abs(pts)))
    out = []
    prev = 0.0
    for j, r in enumerate(radii, start=1):
        sub = pts[norms <= j]
        need = float(np.max(np.abs(sub))) if sub.size else 0.0
        if sub.size and need >= edge * (1 - 1e-9):
            raise NotProperOnData(f"the sublevel set for level {j} reaches the edge of the data")
        rr = max(r, need + margin if sub.size else r, prev + margin)
        out.append(rr)
        prev = rr
    return ProperSchedule(out, [(j, 1.0) for j in range(1, len(out) + 1)], True)


# ---------------------------------------------------------------------------
# Mergelyan-type induction


def exhaustion_from_radii(domain, radii, enlarge=0.2):
    sets, tags, encl = [], [], []
    prev = None
    for j, r in enumerate(radii):
        holes, ids = [], []
        for i, h in enumerate(domain.holes):
            if abs(h.center - domain.center) + h.radius < r:
                holes.append(Disk(h.center, h.radius * (1 + enlarge / (j + 1))))
                ids.append(i)
        inside = frozenset(ids)
        if prev is None or inside == prev:
            tags.append("retract")
        elif len(inside - prev) == 1 and prev <= inside:
            tags.append("arc-attach")
        else:
            raise PreconditionViolation("exhaustion step adds more than one hole")
        sets.append(CompactSet(domain.center, float(r), tuple(holes), tuple(ids)))
        encl.append(inside)
        prev = inside
    return Exhaustion(tuple(sets), tuple(tags), tuple(encl))


def _spec_exhaustion(spec):
    ex = spec.exhaustion or {}
    if "radii" in ex:
        return exhaustion_from_radii(spec.domain, ex["radii"])
    marked = [p for p, _ in spec.inner] + [j.p for j in spec.outer]
    return default_exhaustion(spec.domain, int(ex.get("count", 3)), marked)


def attach_arc(domain, k_prev: CompactSet, k_new: CompactSet, hole_id):
    """Loop from bK_prev around the far side of a newly enclosed hole."""
    h = domain.holes[hole_id]
    c = k_prev.center
    v = h.center - c
    th = float(np.angle(v))
    enl = [d for d, i in zip(k_new.holes, k_new.hole_ids) if i == hole_id]
    rh = enl[0].radius if enl else h.radius
    far = 0.5 * (abs(v) + rh + k_new.radius)
    phi = math.asin(min(0.95, 1.3 * rh / abs(v))) if abs(v) > 0 else math.pi / 2
    a0 = c + k_prev.radius * np.exp(1j * (th + phi))
    a1 = c + far * np.exp(1j * (th + phi))
    b1 = c + far * np.exp(1j * (th - phi))
    b0 = c + k_prev.radius * np.exp(1j * (th - phi))
    return Arc((LineSegment(complex(a0), complex(a1)), CircularPiece(c, far, th + phi, th - phi),
                LineSegment(complex(b1), complex(b0))))


def run_mergelyan_theorem(spec: ProblemSpec, exhaustion: Exhaustion | None = None, eps=None):
    """Induction over an exhaustion; returns (curve, RunReport)."""
    t0 = time.perf_counter()
    ex = exhaustion if exhaustion is not None else _spec_exhaustion(spec)
    eps = float(eps) if eps is not None else float(np.min(spec.eps_fn(sample_admissible(spec.S, 200))))
    e0 = min(1.0, eps)
    rep = RunReport("mergelyan", spec.name)
    K0 = ex[0]
    spts = sample_admissible(spec.S, 300)
    if not np.all(K0.contains(spts, -1e-9)):
        raise PreconditionViolation("S must lie in the first exhaustion set")
    jets_all = spec.jets()
    sched = upgrade_proper(spec.target, spec.S, [k.radius for k in ex.sets], False)
    # first set: plain approximation
    first = spec.replace(outer=[j for j in spec.outer if K0.contains(np.array([j.p]), 1e-9)[0]],
                         eps=_scaled_eps(spec, e0 / 2), region=K0, check=False)
    f, r0 = approximate_legendrian(first, K0)
    rep.stage("step", j=0, kind="initial", budget=e0 / 2, certificates=r0.certificates)
    rep.budgets.append(e0 / 2)
    curves = [f]
    nu = [min_derivative_on_grid(f.components, K0, 120)] if spec.immersion else []
    margin = certify_injective(f, K0).margin if spec.injective else None
    if spec.proper:
        f, prep = _proper_push(f, None, K0, 1, spec, jets_all, e0 / 2)
        curves[-1] = f
        rep.boundary.append({"j": 1, **prep})
    for j in range(1, len(ex)):
        kp, k = ex[j - 1], ex[j]
        ej = e0 / 2 ** (j + 1)
        caps = {"base": ej}
        if spec.immersion:
            caps["immersion"] = nu[-1] / 2**j
        if spec.injective and margin is not None:
            caps["injective"] = margin / 3
        ej = min(caps.values())
        if ej < MIN_BUDGET:
            raise BudgetCollapse(f"step {j} budget {ej:.2e} below {MIN_BUDGET}")
        rep.budgets.append(ej)
        inner = [(q.p, q.m) for q in jets_all if kp.contains(np.array([q.p]), 1e-9)[0]]
        new_outer = [q for q in spec.outer if k.contains(np.array([q.p]), 1e-9)[0]
                     and not kp.contains(np.array([q.p]), -1e-9)[0]]
        arcs = ()
        if ex.tags[j] == "arc-attach":
            hid = next(iter(ex.enclosed[j] - ex.enclosed[j - 1]))
            arcs = (attach_arc(spec.domain, kp, k, hid),)
        target = TargetCurve.from_curve(f)
        sub = ProblemSpec(spec.domain, AdmissibleSet((kp,), arcs), target, inner, new_outer,
                          spec.immersion, spec.injective, False, ej, None, k, {}, spec.seed + j,
                          spec.degree_max, spec.name, check=False)
        g, rj = approximate_legendrian(sub, k)
        change = sup_change(f, g, kp)
        stage = {"j": j, "kind": ex.tags[j], "budget": ej, "caps": caps, "supChange": change,
                 "certificates": rj.certificates}
        if spec.proper:
            g, prep = _proper_push(g, kp, k, j + 1, spec, jets_all, ej)
            rep.boundary.append({"j": j + 1, **prep})
            stage["supChangeAfterPush"] = sup_change(f, g, kp)
        rep.stage("step", **stage)
        f = g
        curves.append(f)
        if spec.immersion:
            nu.append(min_derivative_on_grid(f.components, k, 120))
        if spec.injective:
            margin = certify_injective(f, k).margin
    # telescoping: sum over later steps of the change on K_j stays below eps_j
    tele = []
    for j in range(len(curves) - 1):
        later = sum(sup_change(curves[k - 1], curves[k], ex[j]) for k in range(j + 1, len(curves)))
        bound = sum(rep.budgets[k] for k in range(j + 1, len(curves)))
        tele.append({"j": j, "sum": later, "bound": bound, "pass": later <= bound + 1e-14 and bound < rep.budgets[j]})
    last = ex[len(ex) - 1]
    inputs = CertInputs.build(last, jets_all, spec.target, spts, spec.eps_fn, spec.immersion, spec.injective,
                              spec.domain,
                              [(k.center, k.radius, j + 1) for j, k in enumerate(ex.sets)] if spec.proper else ())
    rep.extra["certify"] = inputs
    cert = inputs.run(f)
    cert["telescoping"] = tele
    ok = cert["pass"] and all(t["pass"] for t in tele)
    if spec.immersion:
        final_nu = min_derivative_on_grid(f.components, K0, 120)
        bound = nu[0] * (1 - sum(2.0 ** (-k - 1) for k in range(1, len(ex))))
        cert["immersionBound"] = {"nu": nu, "final": final_nu, "bound": bound, "pass": final_nu > bound > 0}
        ok &= final_nu > bound > 0
    cert["pass"] = bool(ok)
    rep.certificates = cert
    rep.extra["runtime"] = time.perf_counter() - t0
    return f, rep


def _scaled_eps(spec, cap):
    """Tolerance no larger than cap anywhere."""
    e = spec.eps_fn
    if e.r is None:
        return min(e.e, cap)
    return np.column_stack([e.r, np.minimum(e.e, cap)]).tolist()


def _proper_push(f, k_prev, k, level, spec, jets, budget):
    """Push so that the norm on bK exceeds ``level`` (rho = level - 1, C = 1)."""
    c = k.center
    r1 = k_prev.radius if k_prev is not None else k.radius / 1.1
    r1 = min(r1, k.radius / 1.05)
    R1 = CompactSet(c, r1)
    R2 = CompactSet(c, k.radius, k.holes, k.hole_ids)
    base = boundary_norm(f, c, r1)
    rho = float(min(level - 1, 0.99 * base))
    C = float(level - rho + 1e-3)
    g, prep = push_boundary(f, R1, R2, rho, C, None, [q for q in jets if abs(q.p - c) < r1],
                            small_tol=min(1e-10, 0.01 * budget), domain=spec.domain)
    prep["levelMin"] = boundary_norm(g, c, k.radius)
    prep["level"] = level
    prep["pass"] = prep["levelMin"] > level
    return g, prep


# ---------------------------------------------------------------------------
# Carleman-type induction


def _segments_of(S: AdmissibleSet, truncate):
    segs = []
    for a in S.arcs:
        for s in a.segments:
            if not isinstance(s, LineSegment):
                raise PreconditionViolation("Carleman arcs must be polylines")
            segs.extend(_clip_disk(s.a, s.b, truncate))
    return segs


def _circle_params(a, b, r):
    d = b - a
    A = abs(d) ** 2
    B = 2 * (a * np.conj(d)).real
    Cq = abs(a) ** 2 - r * r
    disc = B * B - 4 * A * Cq
    return A, B, disc


def _clip_disk(a, b, r):
    """Parts of segment a-b inside |q| <= r."""
    A, B, disc = _circle_params(a, b, r)
    if disc <= 0:
        return [(a, b)] if abs(a) <= r and abs(b) <= r else []
    s = math.sqrt(disc)
    t0, t1 = (-B - s) / (2 * A), (-B + s) / (2 * A)
    lo, hi = max(0.0, t0), min(1.0, t1)
    if lo >= hi:
        return []
    d = b - a
    return [(a + lo * d, a + hi * d)]


def _clip_annulus(a, b, r_in, r_out):
    out = []
    for p, q in _clip_disk(a, b, r_out):
        if r_in <= 0:
            out.append((p, q))
            continue
        A, B, disc = _circle_params(p, q, r_in)
        if disc <= 0:
            out.append((p, q))
            continue
        s = math.sqrt(disc)
        t0, t1 = (-B - s) / (2 * A), (-B + s) / (2 * A)
        d = q - p
        if t0 > 0:
            out.append((p, p + min(t0, 1.0) * d))
        if t1 < 1:
            out.append((p + max(t1, 0.0) * d, q))
    return [(p, q) for p, q in out if abs(q - p) > 1e-12]


def _crossings(segs, r, min_angle_deg=5.0):
    """Points where segments cross |q| = r, with the outward unit direction."""
    out = []
    for a, b in segs:
        A, B, disc = _circle_params(a, b, r)
        scale = max(B * B, 4 * A * r * r, 1e-300)
        if abs(disc) <= 1e-12 * scale:
            t = -B / (2 * A)
            if 0 <= t <= 1:
                raise PreconditionViolation(f"an arc of S is tangent to the circle of radius {r}")
            continue
        if disc < 0:
            continue
        s = math.sqrt(disc)
        for t in ((-B - s) / (2 * A), (-B + s) / (2 * A)):
            if 0 <= t <= 1:
                q = a + t * (b - a)
                dirn = (b - a) / abs(b - a)
                cosang = abs((dirn * np.conj(q / abs(q))).real)
                if cosang < math.sin(math.radians(min_angle_deg)):
                    raise PreconditionViolation(f"an arc of S meets the circle of radius {r} tangentially")
                if (dirn * np.conj(q)).real < 0:
                    dirn = -dirn
                out.append((complex(q), complex(dirn), (a, b)))
    return out


def run_carleman(spec: ProblemSpec, radii=None, eps=None, truncate=None, samples=200, check_span=3.0):
    """Carleman-type induction over disks K_j = {|q| <= r_j}; returns (curve, RunReport)."""
    t0 = time.perf_counter()
    cfg = spec.carleman or {}
    radii = [float(r) for r in (radii or cfg.get("radii", [1.0, 2.0, 3.0]))]
    truncate = float(truncate or cfg.get("truncate", 10.0))
    eps_fn = EpsFunction(eps) if eps is not None else spec.eps_fn
    f = spec.target
    if not isinstance(f, TargetCurve):
        raise PreconditionViolation("the Carleman target must be a target curve")
    domain = spec.domain
    rep = RunReport("carleman", spec.name)
    segs = _segments_of(spec.S, truncate)
    for k in spec.S.K:
        for r in radii:
            if abs(abs(k.center) - r) <= k.radius:
                raise PreconditionViolation("a compact piece of S meets an exhaustion circle")
    crossings = {r: _crossings(segs, r) for r in radii}
    if spec.proper:
        sched = upgrade_proper(f, AdmissibleSet(spec.S.K, tuple(Arc((LineSegment(a, b),)) for a, b in segs)),
                               radii, True)
        radii = sched.radii
        crossings = {r: _crossings(segs, r) for r in radii}
        rep.extra["properSchedule"] = sched.to_json()
    ext = radii + [radii[-1] + (radii[-1] - radii[-2] if len(radii) > 1 else radii[-1])]
    Ks = [CompactSet.in_domain(domain, 0j, r) for r in ext]
    all_pts = _carleman_samples(spec.S, segs, truncate)
    jets_all = spec.jets()
    G = GeneralisedCurve(f, [], f.n)
    prev_curve = None
    prev_K = None
    curves, rounds = [], []
    for j, r in enumerate(radii, start=1):
        K = Ks[j - 1]
        Knext = Ks[j]
        inK = all_pts[np.abs(all_pts) <= Knext.radius]
        ej = 2.0**-j * float(np.min(eps_fn(inK))) if inK.size else 2.0**-j * float(np.min(eps_fn(all_pts)))
        rep.budgets.append(ej)
        pieces_K = [kk for kk in spec.S.K if abs(kk.center) + kk.radius <= r
                    and (prev_K is None or abs(kk.center) - kk.radius >= prev_K.radius)]
        new_arcs = []
        for a, b in segs:
            for p, q in _clip_annulus(a, b, prev_K.radius if prev_K is not None else 0.0, r):
                new_arcs.append(Arc((LineSegment(p, q),)))
        sjets = [q for q in jets_all if K.contains(np.array([q.p]), 1e-9)[0]]
        if prev_curve is not None and not pieces_K and not new_arcs and all(
                prev_K.contains(np.array([q.p]), 1e-9)[0] for q in sjets):
            F = prev_curve
            stage = {"j": j, "reused": True}
        else:
            Kset = ((prev_K,) if prev_K is not None else ()) + tuple(pieces_K)
            Sj = AdmissibleSet(Kset, tuple(new_arcs))
            inner = [(q.p, q.m) for q in sjets if _in_interior(Sj, q.p)]
            outer = [q for q in spec.outer if K.contains(np.array([q.p]), 1e-9)[0] and not _in_interior(Sj, q.p)]
            sub = ProblemSpec(domain, Sj, G if prev_curve is not None else f, inner, outer, spec.immersion, False,
                              False, ej, None, K, {}, spec.seed + j, spec.degree_max, spec.name, check=False)
            if prev_curve is not None:
                sub.target = G
            F, rj = approximate_legendrian(sub, K)
            stage = {"j": j, "reused": False, "certificates": rj.certificates}
            if prev_curve is not None:
                stage["supChange"] = sup_change(prev_curve, F, prev_K)
        if spec.proper:
            F, prep = _proper_push(F, prev_K, K, j, spec, [q for q in sjets], ej)
            rep.boundary.append({"j": j, **prep})
        # junction arcs back to f
        paths = []
        jrep = []
        delta = 0.5 * (ext[j] - r)
        for q, u, (a, b) in crossings[r]:
            end = q + delta * u
            arc = Arc((LineSegment(q, end),))
            ja = t_jet(jet_of_curve(F, q, 2), end - q)
            jb = t_jet(f.jet(end, 2), end - q)
            path = connect_legendrian(ja, jb, base=SegmentBase(f, q, end))
            v0 = path.values(np.array([0.0]))[:, 0]
            v1 = path.values(np.array([1.0]))[:, 0]
            d0 = path.derivatives(np.array([0.0]))[: 2 * f.n, 0]
            mis = max(float(np.max(np.abs(v0 - F(np.array([q]))[:, 0]))),
                      float(np.max(np.abs(v1 - f.values(np.array([end]))[:, 0]))),
                      float(np.max(np.abs(d0 - ja.value()[: 2 * f.n] * 0 - _first(ja)))))
            if mis > JUNCTION_TOL:
                raise JunctionMismatch(f"junction at {q} misses its end jets by {mis:.2e}")
            paths.append(PathPiece(arc, path))
            jrep.append({"crossing": q, "end": end, "mismatch": mis, "bump": path.report.get("bumpAmplitude", 0.0)})
        G = GeneralisedCurve(f, [RegionPiece(K, F)] + paths, f.n)
        outside = all_pts[np.abs(all_pts) > Knext.radius]
        same = bool(np.array_equal(G.values(outside), f.values(outside))) if outside.size else True
        stage.update({"budget": ej, "junctions": jrep, "regluingIdentity": same, "outsideSamples": int(outside.size)})
        rep.stage("round", **stage)
        prev_curve, prev_K = F, K
        curves.append(F)
        rounds.append((Knext.radius, G))
    F = curves[-1]
    span = min(check_span, radii[-1])
    chk = np.linspace(-span, span, samples) + 0j
    on_S = chk[_on_segments(chk, segs)] if segs else chk[:0]
    if spec.S.K:
        extra = sample_admissible(AdmissibleSet(tuple(k for k in spec.S.K if abs(k.center) + k.radius <= radii[-1])), 200)
        on_S = np.concatenate([on_S, extra])
    err = np.max(np.abs(F(on_S) - f.values(on_S)), axis=0) if on_S.size else np.zeros(0)
    e = eps_fn(on_S)
    KJ = Ks[len(radii) - 1]
    inputs = CertInputs.build(KJ, [q for q in jets_all if KJ.contains(np.array([q.p]))[0]], f,
                              on_S if on_S.size else None, eps_fn, spec.immersion, False, domain)
    rep.extra["certify"] = inputs
    cert = inputs.run(F)
    cert["carleman"] = {"samples": int(on_S.size), "maxRatio": float(np.max(err / e)) if err.size else 0.0,
                        "pass": bool(np.all(err < e))}
    cert["regluing"] = {"pass": all(s.get("regluingIdentity", True) for s in rep.stages)}
    if spec.proper:
        cert["proper"] = {"pass": all(b["pass"] for b in rep.boundary)}
    cert["pass"] = bool(cert["pass"] and cert["carleman"]["pass"] and cert["regluing"]["pass"]
                        and cert.get("proper", {}).get("pass", True))
    rep.certificates = cert
    rep.extra["runtime"] = time.perf_counter() - t0
    rep.extra["generalised"] = G
    rep.extra["rounds"] = rounds  # (radius of K_{j+1}, glued curve) per round
    return F, rep


def _first(jet):
    return np.concatenate([jet.x[:, 1], jet.y[:, 1]])


def _on_segments(z, segs, tol=1e-9):
    ok = np.zeros(z.shape, dtype=bool)
    for a, b in segs:
        d = b - a
        t = ((z - a) * np.conj(d)).real / abs(d) ** 2
        ok |= (t >= -1e-12) & (t <= 1 + 1e-12) & (np.abs(z - (a + np.clip(t, 0, 1) * d)) <= tol)
    return ok


def _carleman_samples(S, segs, truncate, per_unit=40):
    out = []
    for a, b in segs:
        m = max(2, int(abs(b - a) * per_unit))
        out.append(a + np.linspace(0, 1, m) * (b - a))
    for k in S.K:
        out.append(sample_compact(k, 100))
    return np.concatenate(out) if out else np.zeros(0, dtype=complex)
