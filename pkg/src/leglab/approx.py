"""Jet-constrained least-squares approximation in the Laurent class, plus the
small function builders used by the construction: immersion corrections,
nonconstant fixes and boundary bumps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import (
    BasisTooSmall,
    ConstantDerivative,
    InfeasibleConstraints,
    NoSeparation,
    NoValidDelta,
    PreconditionViolation,
)
from .geometry import AdmissibleSet, CompactSet, sample_set
from .laurent import LaurentPoly, differentiate, evaluate, jet_at

CONSTRAINT_TOL = 1e-12
DELTA_LADDER = tuple(10.0 ** -k for k in range(2, 9))


# ---------------------------------------------------------------------------
# basis and constrained least squares


class LaurentBasis:
    """Scaled Laurent basis (z/rho)^j, j <= poly_deg, and (s_c/(z-c))^j,
    j <= pole_deg[c]. Scaling keeps every column O(1) on the sample set."""

    def __init__(self, centers, poly_deg, pole_degs=None, rho=1.0, pole_scales=None):
        self.centers = tuple(complex(c) for c in centers)
        self.poly_deg = int(poly_deg)
        if pole_degs is None:
            pole_degs = [0] * len(self.centers)
        elif np.isscalar(pole_degs):
            pole_degs = [int(pole_degs)] * len(self.centers)
        self.pole_degs = tuple(int(k) for k in pole_degs)
        self.rho = float(rho)
        self.pole_scales = tuple(pole_scales) if pole_scales is not None else (1.0,) * len(self.centers)

    @classmethod
    def for_points(cls, centers, poly_deg, pole_degs, points):
        points = np.asarray(points, dtype=complex)
        rho = max(float(np.max(np.abs(points))), 1e-12) if points.size else 1.0
        scales = []
        for c in centers:
            scales.append(float(np.min(np.abs(points - c))) if points.size else 1.0)
        return cls(centers, poly_deg, pole_degs, rho, scales)

    @property
    def dim(self):
        return self.poly_deg + 1 + sum(self.pole_degs)

    def matrix(self, z, deriv=0):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        cols = []
        w = z / self.rho
        for j in range(self.poly_deg + 1):
            if j < deriv:
                cols.append(np.zeros_like(z))
            else:
                ff = math.perm(j, deriv)
                cols.append(ff * w ** (j - deriv) / self.rho**deriv)
        for c, K, s in zip(self.centers, self.pole_degs, self.pole_scales):
            u = 1.0 / (z - c)
            for j in range(1, K + 1):
                ff = 1.0
                for r in range(deriv):
                    ff *= -(j + r)
                cols.append(ff * (s * u) ** j * u**deriv)
        return np.stack(cols, axis=1) if cols else np.zeros((z.size, 0), dtype=complex)

    def to_laurent(self, coef) -> LaurentPoly:
        coef = np.asarray(coef, dtype=complex)
        poly = {j: coef[j] / self.rho**j for j in range(self.poly_deg + 1)}
        poles = {}
        off = self.poly_deg + 1
        for i, (K, s) in enumerate(zip(self.pole_degs, self.pole_scales)):
            for j in range(1, K + 1):
                poles[(i, -j)] = coef[off + j - 1] * s**j
            off += K
        return LaurentPoly(self.centers, poly, poles)


@dataclass
class LstsqInfo:
    rank: int
    constraint_rank: int
    constraint_residual: float
    cond: float


def constrained_lstsq(A, b, C=None, d=None, rcond=1e-14, feas_tol=1e-9, ridge=0.0):
    """min ||A x - b|| subject to C x = d, by null-space elimination.

    ``b`` and ``d`` may have several columns (one per right-hand side).
    Raises BasisTooSmall when constraints outnumber unknowns and
    InfeasibleConstraints when C x = d has no solution. A positive ``ridge``
    adds ridge**2 * rows * ||x||**2 to the objective. Rows are weighted so
    that an acceptable residual is O(1) each, so the damping only bites on
    directions the samples barely see, where coefficients would otherwise blow up.
    """
    A = np.asarray(A, dtype=complex)
    b = np.asarray(b, dtype=complex)
    vec = b.ndim == 1
    if vec:
        b = b[:, None]
    dim = A.shape[1]
    if C is None or np.asarray(C).shape[0] == 0:
        x, _, rank, sv = np.linalg.lstsq(A, b, rcond=rcond)
        cond = float(sv[0] / sv[-1]) if sv.size and sv[-1] > 0 else math.inf
        return (x[:, 0] if vec else x), LstsqInfo(int(rank), 0, 0.0, cond)
    C = np.asarray(C, dtype=complex)
    d = np.asarray(d, dtype=complex)
    if d.ndim == 1:
        d = d[:, None]
    if C.shape[0] > dim:
        raise BasisTooSmall(f"{C.shape[0]} constraint rows exceed basis dimension {dim}")
    scale = np.linalg.norm(C, axis=1)
    scale[scale == 0] = 1.0
    Cs = C / scale[:, None]
    ds = d / scale[:, None]
    U, S, Vh = np.linalg.svd(Cs, full_matrices=True)
    r = int(np.sum(S > S[0] * 1e-12)) if S.size and S[0] > 0 else 0
    Ur = U[:, :r]
    proj = ds - Ur @ (Ur.conj().T @ ds)
    if np.linalg.norm(proj) > feas_tol * max(1.0, float(np.linalg.norm(ds))):
        raise InfeasibleConstraints(
            f"constraint system inconsistent (rank {r} of {C.shape[0]} rows, residual {np.linalg.norm(proj):.2e})"
        )
    Vr = Vh[:r].conj().T
    xp = Vr @ ((Ur.conj().T @ ds) / S[:r, None])
    N = Vh[r:].conj().T
    if N.shape[1]:
        AN = A @ N
        rhs = b - A @ xp
        if ridge > 0:
            lam = ridge * math.sqrt(A.shape[0])
            AN = np.vstack([AN, lam * np.eye(AN.shape[1])])
            rhs = np.vstack([rhs, -lam * (N.conj().T @ xp)])
        y, _, rank, sv = np.linalg.lstsq(AN, rhs, rcond=rcond)
        x = xp + N @ y
        cond = float(sv[0] / sv[-1]) if sv.size and sv[-1] > 0 else math.inf
    else:
        x, rank, cond = xp, 0, 1.0
    # one step of refinement on the constraints
    for _ in range(2):
        x = x + Vr @ ((Ur.conj().T @ (ds - Cs @ x)) / S[:r, None])
    res = float(np.max(np.abs(Cs @ x - ds))) if x.size else 0.0
    return (x[:, 0] if vec else x), LstsqInfo(int(rank), r, res, cond)


def _jet_rows(basis: LaurentBasis, jets):
    rows, keys = [], []
    for p, m in jets:
        for k in range(m + 1):
            rows.append(basis.matrix(np.array([p]), k)[0])
            keys.append((complex(p), k))
    if not rows:
        return np.zeros((0, basis.dim), dtype=complex), keys
    return np.array(rows), keys


def fit_components(points, values, jets, basis: LaurentBasis, weights=None, jet_values=None, ridge=0.0):
    """Fit several components sharing sample points and jet locations.

    ``values`` has shape (K, N); ``jets`` is a list of (p, m) and
    ``jet_values[c]`` the concatenated derivative targets of component c.
    Returns (list of LaurentPoly, info dict).
    """
    points = np.asarray(points, dtype=complex)
    values = np.atleast_2d(np.asarray(values, dtype=complex))
    A = basis.matrix(points)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        A = A * w[:, None]
        rhs = (values * w[None, :]).T
    else:
        rhs = values.T
    C, keys = _jet_rows(basis, jets)
    D = None
    if C.shape[0]:
        D = np.array([np.asarray(jv, dtype=complex) for jv in jet_values]).T
    coef, info = constrained_lstsq(A, rhs, C if C.shape[0] else None, D, ridge=ridge)
    coef = np.atleast_2d(coef.T) if coef.ndim == 2 else coef[None, :]
    fs = [basis.to_laurent(c) for c in coef]
    sup = []
    jres = []
    for i, f in enumerate(fs):
        sup.append(float(np.max(np.abs(evaluate(f, points) - values[i]))) if points.size else 0.0)
        if C.shape[0]:
            jres.append(_jet_residual(f, jets, jet_values[i]))
    return fs, {
        "sup_error": sup,
        "constraint_residual": max(jres) if jres else 0.0,
        "rank": info.rank,
        "cond": info.cond,
        "dim": basis.dim,
    }


def _jet_residual(f, jets, target):
    got = []
    for p, m in jets:
        got.extend(jet_at(f, p, m))
    got = np.array(got, dtype=complex)
    target = np.asarray(target, dtype=complex)
    return float(np.max(np.abs(got - target) / np.maximum(1.0, np.abs(target))))


def mergelyan_jets(target_samples, jets=(), basis=None, weights=None, return_info=False):
    """Least-squares fit over a Laurent basis with exact jet constraints.

    target_samples: (points, values) arrays or a list of (point, value).
    jets: list of (point, order m, [f(p), f'(p), ..., f^(m)(p)]).
    basis: a LaurentBasis or (poly_deg, pole_degs, centers).
    """
    if isinstance(target_samples, tuple) and len(target_samples) == 2 and np.ndim(target_samples[0]) == 1:
        pts, vals = target_samples
    else:
        pts = [s[0] for s in target_samples]
        vals = [s[1] for s in target_samples]
    pts = np.asarray(pts, dtype=complex)
    vals = np.asarray(vals, dtype=complex)
    jets = list(jets)
    ps = [complex(j[0]) for j in jets]
    if len(set(ps)) != len(ps):
        raise PreconditionViolation("jet points must be distinct")
    if not isinstance(basis, LaurentBasis):
        deg, poles, centers = basis if basis is not None else (8, 0, ())
        allpts = np.concatenate([pts, np.array(ps, dtype=complex)])
        basis = LaurentBasis.for_points(centers, deg, poles, allpts)
    for c in basis.centers:
        if any(abs(p - c) < 1e-12 for p in ps):
            raise PreconditionViolation("jet point on a pole center")
    nrows = sum(j[1] + 1 for j in jets)
    if nrows > basis.dim:
        raise BasisTooSmall(f"{nrows} jet rows exceed basis dimension {basis.dim}")
    jv = np.concatenate([np.asarray(j[2], dtype=complex)[: j[1] + 1] for j in jets]) if jets else None
    fs, info = fit_components(pts, vals[None, :], [(j[0], j[1]) for j in jets], basis, weights,
                              [jv] if jets else None)
    info["sup_error"] = info["sup_error"][0]
    if return_info:
        return fs[0], info
    return fs[0]


# ---------------------------------------------------------------------------
# function builders


def _points_of(s):
    if isinstance(s, AdmissibleSet):
        return sample_set(s, 200.0 / max(sum(k.area for k in s.K) + sum(a.length for a in s.arcs), 1e-12))
    if isinstance(s, CompactSet):
        return s.grid(40)
    return np.atleast_1d(np.asarray(s, dtype=complex))


def make_nonconstant(f: LaurentPoly, s, protect=(), eps=1e-6, sup_budget=1e-5) -> LaurentPoly:
    """Return f if it is nonconstant, else add a tiny nonconstant term.

    The added term is eps*z, or eps*prod (z-p)^(m+1) when jets at ``protect``
    (list of (p, m)) must be preserved; it is scaled so its sup over ``s``
    stays below ``sup_budget``.
    """
    if not f.is_constant(tol=1e-10):
        return f
    pts = _points_of(s)
    term = LaurentPoly.monomial(1, 1.0, f.centers)
    if protect:
        term = LaurentPoly.constant(1.0, f.centers)
        for p, m in protect:
            lin = LaurentPoly(f.centers, {0: -complex(p), 1: 1.0})
            for _ in range(int(m) + 1):
                term = term * lin
    sup = float(np.max(np.abs(evaluate(term, pts)))) if pts.size else 1.0
    scale = eps if sup * eps <= 0.99 * sup_budget else 0.99 * sup_budget / sup
    return f + term.scale(scale)


def _derivative_numerator(fp: LaurentPoly):
    """Ascending polynomial whose zeros off the centers are the zeros of fp."""
    orders = [fp.pole_order(i) for i in range(len(fp.centers))]
    lin = [np.array([-c, 1.0], dtype=complex) for c in fp.centers]

    def power(i, k):
        out = np.array([1.0 + 0j])
        for _ in range(k):
            out = P.polymul(out, lin[i])
        return out

    num = fp.poly_array() if fp.poly else np.zeros(1, dtype=complex)
    for i, K in enumerate(orders):
        num = P.polymul(num, power(i, K))
    for i, K in enumerate(orders):
        if K == 0:
            continue
        b = fp.pole_array(i)
        # sum_j b_j (z-c)^(K-j)
        part = np.zeros(1, dtype=complex)
        for j in range(1, K + 1):
            part = P.polyadd(part, b[j - 1] * power(i, K - j))
        for l, L in enumerate(orders):
            if l != i:
                part = P.polymul(part, power(l, L))
        num = P.polyadd(num, part)
    return P.polytrim(num, 0)


def zeros_of_derivative(f: LaurentPoly, k: CompactSet, group_tol=1e-8):
    """Zeros of f' inside k with multiplicities."""
    fp = differentiate(f)
    if fp.is_zero():
        raise ConstantDerivative("f is constant")
    fpp = differentiate(fp)
    num = _derivative_numerator(fp)
    if num.size <= 1:
        return []
    roots = np.roots(num[::-1])
    roots = roots[np.isfinite(roots)]
    # loose clustering of eigenvalues, then multiplicity-aware Newton
    clusters = []
    for r in sorted(roots, key=lambda w: (round(w.real, 6), round(w.imag, 6))):
        for cl in clusters:
            if abs(np.mean(cl) - r) < 1e-4:
                cl.append(r)
                break
        else:
            clusters.append([r])
    out = []
    for cl in clusters:
        m = len(cl)
        w = complex(np.mean(cl))
        for _ in range(30):
            g = evaluate(fp, w)
            if g == 0:
                break
            gp = evaluate(fpp, w)
            if gp == 0:
                break
            step = m * g / gp
            w -= step
            if abs(step) < 1e-15 * max(1.0, abs(w)):
                break
        if not k.contains(np.array([w]), -1e-9)[0]:
            continue
        for prev in out:
            if abs(prev[0] - w) < group_tol:
                prev[1] += m
                break
        else:
            out.append([w, m])
    return [(complex(w), int(m)) for w, m in out]


def build_eta(imm_points=(), jet_kill=(), tol=1e-11) -> LaurentPoly:
    """Minimal-degree polynomial with prescribed vanishing and derivative values.

    imm_points: list of (p, flag): eta'(p) = 1 if flag else 0.
    jet_kill: list of (p, order): eta^(k)(p) = 0 for k = 0..order.
    """
    rows = {}

    def add(p, k, v):
        key = (complex(p), k)
        for (q, kk), vv in rows.items():
            if kk == k and abs(q - key[0]) < 1e-12:
                if vv != v:
                    raise InfeasibleConstraints(f"conflicting conditions on derivative {k} at {p}")
                return
        rows[key] = v

    for p, order in jet_kill:
        for k in range(int(order) + 1):
            add(p, k, 0.0)
    for p, flag in imm_points:
        add(p, 1, 1.0 if flag else 0.0)
    if not rows:
        return LaurentPoly()
    keys = list(rows)
    pts = np.array([p for p, _ in keys])
    rho = max(1.0, float(np.max(np.abs(pts))))
    rhs = np.array([rows[k] for k in keys], dtype=complex)
    nrows = len(keys)
    for deg in range(max(nrows - 1, 0), 2 * nrows + 2):
        basis = LaurentBasis((), deg, None, rho)
        M = np.array([basis.matrix(np.array([p]), k)[0] for p, k in keys])
        coef, *_ = np.linalg.lstsq(M, rhs, rcond=1e-14)
        if np.max(np.abs(M @ coef - rhs)) <= tol:
            eta = basis.to_laurent(coef)
            if all(abs(jet_at(eta, p, k)[k] - rows[(p, k)]) <= 10 * tol for p, k in keys):
                return eta
    raise InfeasibleConstraints("no polynomial satisfies the eta conditions")


def min_derivative_on_grid(comps, k: CompactSet, n=200, extra_points=()):
    """min over an n x n grid of k (plus extra points) of max_i |comp_i'|."""
    pts = k.grid(n)
    if len(extra_points):
        pts = np.concatenate([pts, np.asarray(extra_points, dtype=complex)])
    vals = np.array([np.abs(evaluate(differentiate(c), pts)) for c in comps])
    return float(np.min(np.max(vals, axis=0))) if pts.size else math.inf


def immersion_fix(x1: LaurentPoly, y1: LaurentPoly, k: CompactSet, protect=(), budget=math.inf,
                  grid_n=200, crit_tol=1e-8):
    """Perturb x1 by delta*eta so that (x1, y1) has no common critical point on k.

    Returns (new x1, delta). delta = 0 when the pair is already immersive.
    """
    if y1.is_constant(tol=1e-14):
        raise PreconditionViolation("y1 must be nonconstant")
    zeros = zeros_of_derivative(y1, k)
    dx1 = differentiate(x1)
    protect = [(complex(p), int(m)) for p, m in protect]

    def protected(p):
        return any(abs(p - q) < 1e-8 for q, _ in protect)

    for q, m in protect:
        if m >= 1 and abs(evaluate(dx1, q)) <= crit_tol and abs(evaluate(differentiate(y1), q)) <= crit_tol:
            if any(abs(q - z) < 1e-6 for z, _ in zeros) or abs(evaluate(differentiate(y1), q)) == 0:
                raise NoValidDelta(f"protected point {q} is a critical point of both components")
    imm = []
    need = False
    for p, _ in zeros:
        if protected(p):
            continue
        flag = abs(evaluate(dx1, p)) <= crit_tol
        need |= flag
        imm.append((p, flag))
    if not need:
        return x1, 0.0
    eta = build_eta(imm, protect)
    grid = k.grid(grid_n)
    sup_eta = float(np.max(np.abs(evaluate(eta, grid)))) if grid.size else 0.0
    deta = differentiate(eta)
    crit = np.array([p for p, f in imm if f])
    for delta in DELTA_LADDER:
        if delta * sup_eta > budget:
            continue
        cand = x1 + eta.scale(delta).with_centers(x1.centers) if x1.centers else x1 + eta.scale(delta)
        dxc = differentiate(cand)
        at_crit = np.abs(evaluate(dxc, crit))
        if np.min(at_crit) <= 1e-12:
            continue
        if min_derivative_on_grid([cand, y1], k, grid_n, crit) > 0:
            return cand, delta
    raise NoValidDelta("no delta on the ladder keeps the change within budget")


def boundary_bump(k_inner: CompactSet, k_outer: CompactSet, small_tol, large_target, centers=()):
    """w = A((z-c)/r)^N: at most small_tol on k_inner, at least large_target on bk_outer."""
    if abs(k_inner.center - k_outer.center) > 1e-12:
        raise PreconditionViolation("bump sets must be concentric")
    if large_target <= 0:
        return LaurentPoly.zero(centers)
    ratio = k_outer.radius / k_inner.radius
    if ratio < 1.01:
        raise NoSeparation(f"radius ratio {ratio:.4f} < 1.01")
    # relative headroom so rounding in evaluating z^N cannot dip below the target
    A = float(large_target) * (1 + 1e-12)
    N = max(1, math.ceil(math.log(small_tol / A) / math.log(k_inner.radius / k_outer.radius)))
    if N > 2**20:
        raise NoSeparation(f"bump exponent {N} exceeds 2^20")
    return power_bump(k_outer.center, k_outer.radius, A, N, centers)


def power_bump(c, r, A, N, centers=()):
    """A * ((z - c)/r)^N expanded in powers of z."""
    c = complex(c)
    if c == 0:
        return LaurentPoly(centers, {N: A / r**N})
    poly = {j: A * math.comb(N, j) * (-c) ** (N - j) / r**N for j in range(N + 1)}
    return LaurentPoly(centers, poly)
