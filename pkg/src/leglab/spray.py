"""Correction functions, the extended period map and its sprays, and the
embedding machinery (difference map, randomized search, certificates)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .approx import LaurentBasis, constrained_lstsq, zeros_of_derivative
from .contact import LegendrianCurve, jet_distance, jet_of_curve
from .errors import (
    ConditioningFailure,
    DegenerateDy1,
    DerivativeNotNearIdentity,
    InfeasibleConstraints,
    NewtonDiverged,
    NoPathFound,
    PreconditionViolation,
    SearchExhausted,
    SingularSystem,
    ZeroCrossing,
)
from .geometry import Arc, CircularDomain, CompactSet, LineSegment, build_arc, homology_basis
from .laurent import (
    LaurentPoly,
    OneForm,
    adaptive_integrate,
    arc_integral,
    arc_integral_exact,
    contour_integral,
    differentiate,
    evaluate,
    jet_at,
    mul,
    primitive,
)

GATE = 0.1
P_TOL = 1e-9
Z_TOL = 1e-8
CYCLE_TOL = 1e-10
ARC_TOL = 1e-8
KILL_TOL = 1e-11
COND_CAP = 1e10


# ---------------------------------------------------------------------------
# period map


@dataclass
class ExtendedPeriodMap:
    """Cycles C_i, arcs E_p from a shared base point, and target offsets.

    ``z_targets[p] - z_base`` is the prescribed z(p) - z(p0); the Z row of
    the map vanishes when -integral of sum x dy over E_p equals it.
    """

    cycles: tuple = ()
    arcs: tuple = ()
    base_point: complex = 0j
    z_targets: tuple = ()
    z_base: complex = 0j
    n: int = 1
    centers: tuple = ()  # hole centers of the domain, offered to correction bases

    def __post_init__(self):
        self.centers = tuple(complex(c) for c in self.centers)
        self.cycles = tuple(self.cycles)
        self.arcs = tuple(self.arcs)
        self.z_targets = tuple(complex(v) for v in self.z_targets)
        if len(self.z_targets) != len(self.arcs):
            raise PreconditionViolation("one z target per arc is required")

    @property
    def s(self):
        return len(self.cycles)

    @property
    def size(self):
        return len(self.cycles) + len(self.arcs)

    @property
    def points(self):
        return [a.b for a in self.arcs]

    @property
    def offsets(self):
        return np.array([t - self.z_base for t in self.z_targets], dtype=complex)

    def path_samples(self, n=256):
        pts = [c.as_arc().sample(n) for c in self.cycles] + [a.sample(n) for a in self.arcs]
        return np.concatenate(pts) if pts else np.zeros(0, dtype=complex)


def build_period_map(domain: CircularDomain, k: CompactSet, base_point=None, points=(), z_targets=(),
                     z_base=0j, n=1, seed=0) -> ExtendedPeriodMap:
    """Homology cycles of k plus one routed arc from the base point to each point."""
    cycles = homology_basis(domain, k) if domain is not None else []
    arcs = []
    points = [complex(p) for p in points]
    if points and base_point is None:
        raise PreconditionViolation("a base point is needed for arc rows")
    avoid = list(cycles)
    for p in points:
        arcs.append(_route(domain, base_point, p, avoid, seed))
    centers = tuple(h.center for h in domain.holes) if domain is not None else ()
    return ExtendedPeriodMap(tuple(cycles), tuple(arcs), complex(base_point or 0j), tuple(z_targets), z_base, n,
                             centers)


def _route(domain, a, b, avoid, seed):
    if domain is None:
        return Arc((LineSegment(complex(a), complex(b)),))
    # cycles are circles; they do not block but arcs should not cross them needlessly
    try:
        return build_arc(domain, a, b, avoid=[], seed=seed)
    except NoPathFound:
        raise


def _total_form(x, y):
    form = OneForm.product(x[0], y[0])
    for xi, yi in zip(x[1:], y[1:]):
        form = form + OneForm.product(xi, yi)
    return form


def eval_extended_period(x, y, pm: ExtendedPeriodMap, method="quad", tol=1e-10):
    """(P, Z) of sum x_j dy_j. Periods by residues, arcs by quadrature or exactly."""
    form = _total_form(list(x), list(y))
    P = np.array([contour_integral(form, c) for c in pm.cycles], dtype=complex)
    if method == "quad":
        ints = [arc_integral(form, a, tol).value for a in pm.arcs]
    else:
        ints = [arc_integral_exact(form, a) for a in pm.arcs]
    Z = pm.offsets + np.array(ints, dtype=complex) if pm.arcs else np.zeros(0, dtype=complex)
    return P, Z


# ---------------------------------------------------------------------------
# correction functions


@dataclass
class CorrectionSet:
    g: list
    h: dict
    report: dict = field(default_factory=dict)
    eta: LaurentPoly | None = None

    @property
    def functions(self):
        return list(self.g) + list(self.h.values())

    def scaled(self, s):
        """Copy with every correction multiplied by s (used to inject bad DS)."""
        return CorrectionSet([f.scale(s) for f in self.g], {p: f.scale(s) for p, f in self.h.items()},
                             dict(self.report), self.eta)


def _merge_kills(jet_kill, deriv_kill):
    kills = []
    for p, order in list(jet_kill) + [(q, 1) for q in deriv_kill]:
        p = complex(p)
        for i, (q, o) in enumerate(kills):
            if abs(q - p) < 1e-12:
                kills[i] = (q, max(o, int(order)))
                break
        else:
            kills.append((p, int(order)))
    return kills


def _min_modulus_on_paths(f: LaurentPoly, pm: ExtendedPeriodMap, n=256):
    pts = pm.path_samples(n)
    return float(np.min(np.abs(evaluate(f, pts)))) if pts.size else math.inf


def _integral_rows(cols, dy1, pm):
    """Cycle and arc integrals of col * dy1 for every basis column."""
    R = np.zeros((pm.size, len(cols)), dtype=complex)
    for k, phi in enumerate(cols):
        form = OneForm(mul(phi, dy1))
        for i, c in enumerate(pm.cycles):
            R[i, k] = contour_integral(form, c)
        for j, a in enumerate(pm.arcs):
            R[pm.s + j, k] = arc_integral_exact(form, a)
    return R


def build_corrections(y1: LaurentPoly, pm: ExtendedPeriodMap, jet_kill=(), deriv_kill=(), samples=None,
                      centers=None, max_poly=64, max_pole=4) -> CorrectionSet:
    """g_j, h_p with exact cycle rows, arc rows and jet-kill rows.

    jet_kill holds (point, order) pairs killing derivatives 0..order; every
    deriv_kill point gets order 1. Each function has minimal coefficient norm
    in a basis scaled to ``samples``, subject to those rows.
    """
    if y1.is_constant(tol=1e-14):
        raise DegenerateDy1("y1 is constant")
    dy1 = differentiate(y1)
    if pm.size == 0:
        return CorrectionSet([], {}, {"cycle": 0.0, "arc": 0.0, "kill": 0.0, "cond": 1.0})
    if _min_modulus_on_paths(dy1, pm) <= 1e-8:
        raise DegenerateDy1("dy1 vanishes on a cycle or arc")
    if centers is None:
        centers = tuple(y1.centers) + tuple(c for c in pm.centers if all(abs(c - d) > 1e-12 for d in y1.centers))
    centers = tuple(centers)
    kills = _merge_kills(jet_kill, deriv_kill)
    nkill = sum(o + 1 for _, o in kills)
    if samples is None:
        samples = pm.path_samples(64)
    samples = np.asarray(samples, dtype=complex)
    anchor = np.concatenate([samples, pm.path_samples(16), np.array([p for p, _ in kills], dtype=complex)])
    target = np.zeros((pm.size, pm.size), dtype=complex)
    np.fill_diagonal(target, 1.0)

    last = None
    deg = max(8, 2 * (pm.size + nkill))
    pole = 1
    while True:
        basis = LaurentBasis.for_points(centers, deg, [pole] * len(centers), anchor)
        cols = [basis.to_laurent(e) for e in np.eye(basis.dim)]
        R = _integral_rows(cols, dy1, pm)
        K = [basis.matrix(np.array([p]), d)[0] for p, o in kills for d in range(o + 1)]
        C = np.vstack([R] + ([np.array(K)] if K else []))
        D = np.vstack([target, np.zeros((len(K), pm.size), dtype=complex)])
        # minimum coefficient norm in the scaled basis (columns are O(1) on samples)
        A = np.eye(basis.dim)
        try:
            coef, info = constrained_lstsq(A, np.zeros((basis.dim, pm.size)), C, D)
        except InfeasibleConstraints as exc:
            last = exc
            coef = None
        if coef is not None:
            funcs = [basis.to_laurent(coef[:, j]) for j in range(pm.size)]
            cs = CorrectionSet(funcs[: pm.s], {p: f for p, f in zip(pm.points, funcs[pm.s:])})
            cs.report = correction_report(cs, y1, pm, kills)
            cs.report["cond"] = info.cond
            cs.report["dim"] = basis.dim
            if (cs.report["cycle"] <= CYCLE_TOL and cs.report["arc"] <= ARC_TOL
                    and cs.report["kill"] <= KILL_TOL):
                return cs
            last = cs.report
        if deg >= max_poly and pole >= max_pole:
            break
        deg = min(2 * deg, max_poly)
        pole = min(pole + 1, max_pole)
    raise ConditioningFailure(f"corrections failed at the largest basis: {last}")


def correction_report(cs: CorrectionSet, y1, pm, kills):
    """Measured residuals of the defining conditions (arcs by quadrature)."""
    dy1 = differentiate(y1)
    funcs = cs.functions
    cyc = arc = kill = 0.0
    for j, f in enumerate(funcs):
        form = OneForm(mul(f, dy1))
        for i, c in enumerate(pm.cycles):
            cyc = max(cyc, abs(contour_integral(form, c) - (1.0 if i == j else 0.0)))
        for i, a in enumerate(pm.arcs):
            val = arc_integral(form, a, 1e-12).value
            arc = max(arc, abs(val - (1.0 if pm.s + i == j else 0.0)))
        for p, o in kills:
            kill = max(kill, float(np.max(np.abs(jet_at(f, p, o)))))
    return {"cycle": cyc, "arc": arc, "kill": kill}


# ---------------------------------------------------------------------------
# sprays


@dataclass
class SprayParams:
    zeta: np.ndarray
    xi: np.ndarray
    delta: complex = 0j
    report: dict = field(default_factory=dict)

    @property
    def vector(self):
        return np.concatenate([self.zeta, self.xi])


def spray_x1(x1: LaurentPoly, cs: CorrectionSet, params) -> LaurentPoly:
    vec = params.vector if isinstance(params, SprayParams) else np.asarray(params, dtype=complex)
    out = x1
    for c, f in zip(vec, cs.functions):
        if c != 0:
            out = out + f.scale(c)
    if isinstance(params, SprayParams) and params.delta and cs.eta is not None:
        out = out + cs.eta.scale(params.delta)
    return out


def assemble_ds(y1: LaurentPoly, cs: CorrectionSet, pm: ExtendedPeriodMap):
    """Derivative of the affine spray map, column per correction function."""
    return _integral_rows(cs.functions, differentiate(y1), pm)


def solve_affine(x1, other_x, y, cs: CorrectionSet, pm: ExtendedPeriodMap, gate=GATE, method="exact"):
    """Spray parameters with vanishing (P, Z) for x1 + sum zeta g + sum xi h."""
    y = list(y)
    xs = [x1] + list(other_x)
    S0 = np.concatenate(eval_extended_period(xs, y, pm, method))
    m = pm.size
    if m == 0:
        return SprayParams(np.zeros(0, complex), np.zeros(0, complex), report={"ds_dev": 0.0})
    DS = assemble_ds(y[0], cs, pm)
    dev = float(np.max(np.sum(np.abs(DS - np.eye(m)), axis=1)))
    if dev > gate:
        raise DerivativeNotNearIdentity(f"||DS - I|| = {dev:.3e} exceeds {gate}", dev)
    try:
        vec = np.linalg.solve(DS, -S0)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    for _ in range(3):
        S = np.concatenate(eval_extended_period([spray_x1(x1, cs, vec)] + xs[1:], y, pm, method))
        P, Z = S[: pm.s], S[pm.s:]
        if np.all(np.abs(P) <= P_TOL) and np.all(np.abs(Z) <= Z_TOL * 1e-2):
            break
        vec = vec - np.linalg.solve(DS, S)
    S = np.concatenate(eval_extended_period([spray_x1(x1, cs, vec)] + xs[1:], y, pm, "quad"))
    P, Z = S[: pm.s], S[pm.s:]
    if np.any(np.abs(P) > P_TOL) or np.any(np.abs(Z) > Z_TOL):
        raise SingularSystem(f"post-solve residual |P|={np.max(np.abs(P), initial=0):.2e} "
                             f"|Z|={np.max(np.abs(Z), initial=0):.2e}")
    return SprayParams(vec[: pm.s], vec[pm.s:], 0j,
                       {"ds_dev": dev, "P": np.abs(P).tolist(), "Z": np.abs(Z).tolist()})


def _path_integral_fn(func, pm: ExtendedPeriodMap, n_cycle=512, tol=1e-12):
    """Integrals of func(z) dz over cycles (trapezoid) and arcs (adaptive)."""
    out = []
    th = 2 * np.pi * np.arange(n_cycle) / n_cycle
    for c in pm.cycles:
        w = c.radius * np.exp(1j * c.orientation * th)
        pts = c.center + w
        out.append(complex(np.sum(func(pts) * 1j * c.orientation * w) * (2 * np.pi / n_cycle)))
    for a in pm.arcs:
        total = 0j
        for seg in a.segments:
            total += adaptive_integrate(lambda t, seg=seg: func(seg.point(t)) * seg.deriv(t), 0, 1, tol).value
        out.append(total)
    return np.array(out, dtype=complex)


def multiplicative_map(x1, beta_prime, cs, pm):
    """S(params) for the exp-spray: cycle and arc integrals of beta'/x1~."""
    b = beta_prime.coeff if isinstance(beta_prime, OneForm) else beta_prime
    funcs = cs.functions

    def S(vec):
        def integrand(z):
            g = np.zeros(np.shape(z), dtype=complex)
            for c, f in zip(vec, funcs):
                g = g + c * evaluate(f, z)
            xt = evaluate(x1, z) * np.exp(g)
            if np.min(np.abs(xt)) < 1e-8:
                raise ZeroCrossing("sprayed x1 is nearly zero on an integration path")
            return evaluate(b, z) / xt

        vals = _path_integral_fn(integrand, pm)
        vals[pm.s:] -= pm.offsets
        return vals

    return S


def solve_multiplicative(x1, beta_prime, cs: CorrectionSet, pm: ExtendedPeriodMap, max_iter=50,
                         step=1e-6, tol=1e-8):
    """Damped Newton on the exp-spray with a finite-difference Jacobian.

    Here the arc targets are the prescribed increments of the integral of
    beta'/x1 (the y1 increments when z is kept fixed).
    """
    if _min_modulus_on_paths(x1, pm) <= 1e-8:
        raise ZeroCrossing("x1 vanishes on a cycle or arc")
    S = multiplicative_map(x1, beta_prime, cs, pm)
    m = pm.size
    vec = np.zeros(m, dtype=complex)
    val = S(vec)
    history = [float(np.max(np.abs(val), initial=0.0))]
    for it in range(max_iter):
        if history[-1] <= tol:
            return SprayParams(vec[: pm.s], vec[pm.s:], 0j, {"iterations": it, "residual": history[-1]})
        J = np.zeros((m, m), dtype=complex)
        for k in range(m):
            e = np.zeros(m, dtype=complex)
            e[k] = step
            J[:, k] = (S(vec + e) - S(vec - e)) / (2 * step)
        try:
            d = np.linalg.solve(J, -val)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
        t = 1.0
        for _ in range(12):
            cand = vec + t * d
            try:
                cval = S(cand)
            except ZeroCrossing:
                cval = None
            if cval is not None and np.max(np.abs(cval)) < history[-1]:
                break
            t *= 0.5
        else:
            raise NewtonDiverged(f"line search failed at iteration {it}")
        vec, val = cand, cval
        history.append(float(np.max(np.abs(val))))
        if len(history) > 5 and history[-1] > 0.5 * history[-6]:
            raise NewtonDiverged(f"residual {history[-1]:.2e} not halved over 5 iterations")
    if history[-1] <= tol:
        return SprayParams(vec[: pm.s], vec[pm.s:], 0j, {"iterations": max_iter, "residual": history[-1]})
    raise NewtonDiverged(f"no convergence in {max_iter} iterations (residual {history[-1]:.2e})")


def exp_spray_x1(x1, cs, params, k: CompactSet, degree=None, samples=None):
    """Laurent approximation of x1 * exp(sum of corrections) on k."""
    from .approx import mergelyan_jets

    vec = params.vector
    pts = samples if samples is not None else k.grid(40)
    g = np.zeros(pts.shape, dtype=complex)
    for c, f in zip(vec, cs.functions):
        g = g + c * evaluate(f, pts)
    vals = evaluate(x1, pts) * np.exp(g)
    deg = degree or max(16, x1.degree + 8)
    poles = [max(x1.pole_order(i), 2) for i in range(len(x1.centers))]
    return mergelyan_jets((pts, vals), [], LaurentBasis.for_points(x1.centers, deg, poles, pts))


# ---------------------------------------------------------------------------
# bounds and certificates


def termwise_bound(f: LaurentPoly, c, R):
    """Upper bound of |f| on the disks D(c, R), term by term (vectorized)."""
    c = np.asarray(c, dtype=complex)
    R = np.broadcast_to(np.asarray(R, dtype=float), c.shape)
    rad = np.abs(c) + R
    out = np.zeros(c.shape)
    for k, a in f.poly.items():
        out = out + abs(a) * rad**k
    for i, ctr in enumerate(f.centers):
        b = f.pole_array(i)
        if b.size == 0:
            continue
        gap = np.abs(c - ctr) - R
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(gap > 0, 1.0 / np.maximum(gap, 1e-300), np.inf)
        for k, coef in enumerate(b, start=1):
            out = out + abs(coef) * inv**k
    return out


def sup_bound(f: LaurentPoly, df: LaurentPoly, c, R):
    """|f(c)| + R * bound(f') over the disk D(c, R)."""
    c = np.asarray(c, dtype=complex)
    return np.abs(evaluate(f, c)) + R * termwise_bound(df, c, R)


@dataclass
class ImmersionCertificate:
    ok: bool
    min_derivative: float
    rigorous: bool
    critical_checked: int

    def to_json(self):
        return {"ok": self.ok, "minDerivative": self.min_derivative, "rigorous": self.rigorous,
                "criticalChecked": self.critical_checked}


def _cells(k: CompactSet, n):
    h = 2 * k.radius / n
    x = -k.radius + h * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(x, x)
    z = (k.center + X + 1j * Y).ravel()
    r = h / math.sqrt(2)
    return z[k.contains(z, -r)], h


def certify_immersion(curve: LegendrianCurve, k: CompactSet, n=200, max_depth=10) -> ImmersionCertificate:
    """Cell-wise proof that some |F_i'| > 0 on every cell covering k.

    A cell D(c, r) passes when |F_i'(c)| > r * bound(F_i''); failing cells
    are split 4 x 4 up to max_depth. Zeros of y1' are checked directly.
    """
    comps = curve.components
    d1 = [differentiate(c) for c in comps]
    d2 = [differentiate(c) for c in d1]
    d3 = [differentiate(c) for c in d2]
    centers, h = _cells(k, n)
    vals = np.array([np.abs(evaluate(f, centers)) for f in d1])
    min_der = float(np.min(np.max(vals, axis=0))) if centers.size else math.inf
    crit = 0
    ok = True
    if not curve.y[0].is_constant(tol=1e-14):
        for p, _ in zeros_of_derivative(curve.y[0], k):
            crit += 1
            if abs(evaluate(d1[0], p)) <= 1e-12:
                ok = False
    if not ok:
        return ImmersionCertificate(False, min_der, True, crit)

    def passes(c, r):
        good = np.zeros(c.shape, dtype=bool)
        for f1, f2, f3 in zip(d1, d2, d3):
            good |= np.abs(evaluate(f1, c)) > r * sup_bound(f2, f3, c, r)
        return good

    todo = [(centers, h)]
    for depth in range(max_depth + 1):
        nxt = []
        for c, hh in todo:
            if c.size == 0:
                continue
            r = hh / math.sqrt(2)
            bad = c[~passes(c, r)]
            if bad.size:
                if depth == max_depth:
                    return ImmersionCertificate(False, min_der, True, crit)
                off = hh / 4 * (np.arange(4) - 1.5)
                OX, OY = np.meshgrid(off, off)
                sub = (bad[:, None] + (OX + 1j * OY).ravel()[None, :]).ravel()
                sub = sub[k.contains(sub, -hh / 4 / math.sqrt(2) * 1.0000001)]
                nxt.append((sub, hh / 4))
        todo = nxt
        if not todo:
            break
    return ImmersionCertificate(min_der > 0, min_der, True, crit)


@dataclass
class InjectivityCertificate:
    ok: bool
    margin: float
    pairs_checked: int
    failures: list
    grid_n: int
    cell: float

    def to_json(self):
        return {"ok": self.ok, "margin": self.margin, "pairsChecked": self.pairs_checked,
                "failures": [[[a.real, a.imag], [b.real, b.imag]] for a, b in self.failures[:16]],
                "grid": self.grid_n, "cell": self.cell}


class _CurveBounds:
    def __init__(self, curve):
        self.comps = curve.components
        self.d1 = [differentiate(c) for c in self.comps]
        self.d2 = [differentiate(c) for c in self.d1]
        self.d3 = [differentiate(c) for c in self.d2]

    def values(self, z):
        return np.array([evaluate(c, z) for c in self.comps])

    def lipschitz(self, z, r):
        return np.array([sup_bound(f1, f2, z, r) for f1, f2 in zip(self.d1, self.d2)])

    def nw(self, a, b, r):
        """Noshiro-Warschawski test on the disk enclosing D(a, r) and D(b, r)."""
        m = 0.5 * (a + b)
        R = 0.5 * np.abs(a - b) + r
        good = np.zeros(m.shape, dtype=bool)
        for f1, f2, f3 in zip(self.d1, self.d2, self.d3):
            good |= np.abs(evaluate(f1, m)) > R * sup_bound(f2, f3, m, R)
        return good


def _pair_tests(B: _CurveBounds, a, b, r, Fa=None, Fb=None, La=None, Lb=None):
    Fa = B.values(a) if Fa is None else Fa
    Fb = B.values(b) if Fb is None else Fb
    La = B.lipschitz(a, r) if La is None else La
    Lb = B.lipschitz(b, r) if Lb is None else Lb
    gap = np.abs(Fa - Fb) - (La + Lb) * r
    best_gap = np.max(gap, axis=0)
    sep = best_gap > 0
    ok = sep.copy()
    if not np.all(ok):
        idx = ~ok
        ok[idx] = B.nw(a[idx], b[idx], r)
    return ok, np.where(sep, best_gap, np.inf)


def certify_injective(curve: LegendrianCurve, k: CompactSet, n=150, max_depth=6, max_work=400000):
    """Cell-pair proof that the curve is injective on cells covering k.

    Each pair of cells passes when some component separates the images
    (|dF| > (L_a + L_b) r) or is injective on the enclosing disk by the
    Noshiro-Warschawski test. Failing pairs are split 4 x 4 depth-first.
    """
    B = _CurveBounds(curve)
    centers, h = _cells(k, n)
    r = h / math.sqrt(2)
    F = B.values(centers)
    L = B.lipschitz(centers, r)
    ell = np.max(L, axis=0) * r
    # a pair whose real coordinates differ by more than 2(ell_a + ell_b)
    # somewhere is separated with gap >= ell_a + ell_b, so only closer pairs are tested
    X = np.concatenate([F.real, F.imag]).T
    ia, ib = [np.arange(centers.size)], [np.arange(centers.size)]
    if centers.size:
        tree = cKDTree(X)
        hits = tree.query_ball_point(X, 4.0 * ell * (1 + 1e-9), p=np.inf)
        for i, lst in enumerate(hits):
            lst = np.asarray(lst, dtype=int)
            lst = lst[lst > i]
            if lst.size:
                close = np.max(np.abs(X[lst] - X[i]), axis=1) <= 2.0 * (ell[i] + ell[lst])
                lst = lst[close]
                ia.append(np.full(lst.size, i))
                ib.append(lst)
    ia, ib = np.concatenate(ia), np.concatenate(ib)
    ok = np.zeros(ia.size, dtype=bool)
    gaps = np.full(ia.size, np.inf)
    for s0 in range(0, ia.size, 100000):
        sl = slice(s0, s0 + 100000)
        a, b = ia[sl], ib[sl]
        ok[sl], gaps[sl] = _pair_tests(B, centers[a], centers[b], r, F[:, a], F[:, b], L[:, a], L[:, b])
    margin = min(2.0 * float(np.min(ell, initial=np.inf)), float(np.min(gaps, initial=np.inf)))
    bad = np.nonzero(~ok)[0]
    work = ia.size
    failures = []
    off = (np.arange(4) - 1.5) / 4
    OX, OY = np.meshgrid(off, off)
    offs = (OX + 1j * OY).ravel()

    def refine(a, b, hh, depth):
        nonlocal work, margin
        hs = hh / 4
        rs = hs / math.sqrt(2)
        sa = a + hh * offs
        sb = b + hh * offs
        sa = sa[k.contains(sa, -rs * 1.0000001)]
        sb = sb[k.contains(sb, -rs * 1.0000001)]
        if sa.size == 0 or sb.size == 0:
            return True
        A, Bv = np.meshgrid(sa, sb)
        A, Bv = A.ravel(), Bv.ravel()
        work += A.size
        good, g = _pair_tests(B, A, Bv, rs)
        margin = min(margin, float(np.min(g, initial=np.inf)))
        if np.all(good):
            return True
        if depth >= max_depth or work > max_work:
            failures.append((complex(A[~good][0]), complex(Bv[~good][0])))
            return False
        for x, y in zip(A[~good], Bv[~good]):
            if not refine(x, y, hs, depth + 1):
                return False
        return True

    all_ok = True
    for j in bad:
        if not refine(centers[ia[j]], centers[ib[j]], h, 1):
            all_ok = False
            # collect the remaining coarse failures for probe selection
            failures.extend((complex(centers[ia[q]]), complex(centers[ib[q]])) for q in bad if q != j)
            break
    return InjectivityCertificate(all_ok, margin if all_ok else 0.0, int(work), failures, n, h)


# ---------------------------------------------------------------------------
# embedding search


@dataclass
class EmbeddingProbe:
    u: complex
    v: complex
    w1: LaurentPoly
    w2: LaurentPoly
    arc: Arc
    mu: float
    report: dict = field(default_factory=dict)


def build_probe(y1: LaurentPoly, u, v, k: CompactSet, domain=None, kill=(), samples=None, seed=0) -> EmbeddingProbe:
    """w1, w2 with w1(u)=0, w1(v)=1, w2(u)=w2(v)=0 and -int_E w2 dy1 = 1."""
    u, v = complex(u), complex(v)
    arc = _route(domain, u, v, [], seed)
    dy1 = differentiate(y1)
    pts = samples if samples is not None else k.grid(40)
    kills = [(complex(p), int(o)) for p, o in kill]
    nrows = 3 + sum(o + 1 for _, o in kills)
    deg = max(6, nrows + 2)
    basis = LaurentBasis.for_points(y1.centers, deg, None, np.concatenate([pts, [u, v]]))
    cols = [basis.to_laurent(e) for e in np.eye(basis.dim)]
    arc_row = np.array([arc_integral_exact(OneForm(mul(c, dy1)), arc) for c in cols])
    rows = [basis.matrix(np.array([u]))[0], basis.matrix(np.array([v]))[0], arc_row]
    rows += [basis.matrix(np.array([p]), d)[0] for p, o in kills for d in range(o + 1)]
    C = np.array(rows)
    D = np.zeros((C.shape[0], 2), dtype=complex)
    D[1, 0] = 1.0          # w1(v) = 1
    D[2, 1] = -1.0         # int_E w2 dy1 = -1
    A = basis.matrix(pts)
    # w1 is not constrained on the arc
    coef1, _ = constrained_lstsq(A, np.zeros(pts.size), np.delete(C, 2, axis=0), np.delete(D[:, 0], 2))
    coef2, _ = constrained_lstsq(A, np.zeros(pts.size), C, D[:, 1])
    w1, w2 = basis.to_laurent(coef1), basis.to_laurent(coef2)
    w5 = abs(1 + arc_integral(OneForm(mul(w2, dy1)), arc, 1e-13).value)
    w3 = max(abs(evaluate(w1, u)), abs(evaluate(w1, v) - 1), abs(evaluate(w2, u)), abs(evaluate(w2, v)))
    sup = max(float(np.max(np.abs(evaluate(w1, pts)))), float(np.max(np.abs(evaluate(w2, pts)))))
    return EmbeddingProbe(u, v, w1, w2, arc, max(w5, 1e-16), {"W3": w3, "W5": w5, "sup": sup})


def probe_family(curve: LegendrianCurve, probes, cs: CorrectionSet, pm: ExtendedPeriodMap, anchor, z_anchor):
    """Builder xi -> Legendrian curve, with three parameters per probe.

    x1 += xi_1 w1 + xi_3 w2 and y1 += xi_2 w1; periods and arc targets are
    restored by the affine spray and z is the primitive pinned at the anchor.
    """
    x1, y1 = curve.x[0], curve.y[0]

    def build(xi):
        xi = np.asarray(xi, dtype=complex).reshape(len(probes), 3) if probes else np.zeros((0, 3))
        xt, yt = x1, y1
        for pr, (a, b, c) in zip(probes, xi):
            if a or c:
                xt = xt + pr.w1.scale(a) + pr.w2.scale(c)
            if b:
                yt = yt + pr.w1.scale(b)
        ys = [yt] + list(curve.y[1:])
        if pm.size:
            params = solve_affine(xt, curve.x[1:], ys, cs, pm)
            xt = spray_x1(xt, cs, params)
        xs = [xt] + list(curve.x[1:])
        z = legendrian_z(xs, ys, anchor, z_anchor)
        return LegendrianCurve(xs, ys, z, curve.domain, curve.form)

    return build


def legendrian_z(xs, ys, anchor, z_anchor) -> LaurentPoly:
    """z = z_anchor - integral from anchor of sum x dy (residues must vanish)."""
    F = primitive(_total_form(xs, ys))
    return LaurentPoly.constant(z_anchor + evaluate(F, anchor), F.centers) - F


def difference_map(builder, probes, xi):
    """H(v, xi) - H(u, xi) for every probe pair (u, v)."""
    curve = builder(xi)
    u = np.array([complex(p[0]) if not hasattr(p, "u") else p.u for p in probes])
    v = np.array([complex(p[1]) if not hasattr(p, "v") else p.v for p in probes])
    return (curve(v) - curve(u)).T


def _refine_double_point(curve, u, v, iters=30):
    """Newton on x1(u) = x1(v), y1(u) = y1(v) from a coarse pair."""
    x1, y1 = curve.x[0], curve.y[0]
    dx, dy = differentiate(x1), differentiate(y1)
    for _ in range(iters):
        r = np.array([evaluate(x1, u) - evaluate(x1, v), evaluate(y1, u) - evaluate(y1, v)])
        J = np.array([[evaluate(dx, u), -evaluate(dx, v)], [evaluate(dy, u), -evaluate(dy, v)]])
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            break
        u, v = u + step[0], v + step[1]
        if np.max(np.abs(step)) < 1e-14:
            break
    return complex(u), complex(v)


def _select_probes(curve, failures, cell, k):
    probes = []
    for a, b in failures:
        if abs(a - b) < 4 * cell:
            continue
        u, v = _refine_double_point(curve, a, b)
        if abs(u - v) < 4 * cell or not (k.contains(np.array([u]), -cell)[0] and k.contains(np.array([v]), -cell)[0]):
            u, v = a, b
        if any(min(abs(u - p) + abs(v - q), abs(u - q) + abs(v - p)) < 0.05 for p, q in probes):
            continue
        probes.append((u, v))
    return probes


def sup_change(a: LegendrianCurve, b: LegendrianCurve, k: CompactSet, n=60):
    pts = np.concatenate([k.grid(n), k.boundary_points(256)])
    pts = pts[k.contains(pts, -1e-12)]
    return float(np.max(np.abs(a(pts) - b(pts))))


def embedding_search(f: LegendrianCurve, k: CompactSet, jets=(), budget=1e-3, seed=0, domain=None,
                     grid_n=150, samples_per_radius=64, radii=20, return_info=False):
    """Randomized generic-parameter search for an embedded perturbation of f.

    Every returned curve carries a passing injectivity certificate; when none
    is found SearchExhausted is raised with the best candidate.
    """
    domain = domain if domain is not None else f.domain
    imm = certify_immersion(f, k, n=min(grid_n, 120))
    if not imm.ok:
        raise PreconditionViolation("f must be an immersion on k")
    jets = list(jets)
    diag = {"seed": seed, "trace": []}
    cert = certify_injective(f, k, grid_n)
    diag["initial"] = cert.to_json()
    if cert.ok:
        diag["xi"] = []
        return (f, {"certificate": cert.to_json(), **diag}) if return_info else f
    pairs = _select_probes(f, cert.failures, cert.cell, k)
    diag["probes"] = [[[u.real, u.imag], [v.real, v.imag]] for u, v in pairs]
    if not pairs or budget <= 0:
        raise SearchExhausted("no room to perturb" if budget <= 0 else "no usable probe pairs", f, diag)

    kill = [(j.p, j.m) for j in jets]
    anchor = kill[0][0] if kill else k.center
    z_anchor = evaluate(f.z, anchor)
    samples = k.grid(40)
    probes = [build_probe(f.y[0], u, v, k, domain, kill, samples, seed) for u, v in pairs]
    diag["probeReport"] = [p.report for p in probes]
    pm = build_period_map(domain, k, anchor, [p for p, _ in kill[1:]],
                          [evaluate(f.z, p) for p, _ in kill[1:]], z_anchor, f.n, seed)
    cs = None
    if pm.size:
        jk = [(p, m + 1) for p, m in kill if m >= 1]
        dk = [p for p, m in kill if m == 0]
        cs = build_corrections(f.y[0], pm, jk, dk, samples)
    builder = probe_family(f, probes, cs, pm, anchor, z_anchor)
    base_jets = [jet_of_curve(f, j.p, j.m) for j in jets]

    scale = max(p.report["sup"] for p in probes)
    r0 = budget / (3.0 * len(probes) * max(scale, 1e-12))
    rng = np.random.default_rng(seed)
    best = None
    dim = 3 * len(probes)
    for level in range(radii):
        rad = r0 * 0.5**level
        for _ in range(samples_per_radius):
            mod = rad * np.sqrt(rng.random(dim))
            xi = mod * np.exp(2j * np.pi * rng.random(dim))
            try:
                cand = builder(xi)
            except (SingularSystem, DerivativeNotNearIdentity) as exc:
                diag["trace"].append({"radius": rad, "error": str(exc)})
                continue
            change = sup_change(f, cand, k)
            jd = max((jet_distance(jet_of_curve(cand, j.p, j.m), b) for j, b in zip(jets, base_jets)), default=0.0)
            entry = {"radius": rad, "supChange": change, "jetDistance": jd}
            if change > budget or jd > 1e-10:
                entry["rejected"] = "budget" if change > budget else "jets"
                diag["trace"].append(entry)
                continue
            c = certify_injective(cand, k, grid_n)
            entry["certificate"] = c.ok
            entry["margin"] = c.margin
            diag["trace"].append(entry)
            if best is None or c.margin > best[1]:
                best = (cand, c.margin)
            if c.ok:
                diag["xi"] = [[z.real, z.imag] for z in xi]
                diag["certificate"] = c.to_json()
                diag["supChange"] = change
                return (cand, diag) if return_info else cand
    raise SearchExhausted("no certified candidate in the search box", best[0] if best else f, diag)
