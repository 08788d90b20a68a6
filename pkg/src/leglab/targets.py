"""Target data for the drivers: curves given by Laurent or symbolic
components, and piecewise generalised curves (functions on regions, disks
around outside points, Legendrian paths along arcs)."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import sympy as sp

from .contact import JetSpec, LegendrianCurve
from .errors import PreconditionViolation
from .geometry import Arc, CompactSet, Disk, LineSegment
from .laurent import LaurentPoly, evaluate, jet_at, mul
from .paths import LegendrianPath

Q = sp.Symbol("q")


def laurent_to_expr(f: LaurentPoly):
    """Sympy expression in q equal to the Laurent polynomial."""
    out = sp.Integer(0)
    for k, c in f.poly.items():
        out += _num(c) * Q**k
    for (i, k), c in f.poles.items():
        out += _num(c) * (Q - _num(f.centers[i])) ** k
    return out


def _num(c):
    c = complex(c)
    if c.imag == 0:
        return sp.Float(c.real, 17)
    return sp.Float(c.real, 17) + sp.I * sp.Float(c.imag, 17)


class _ExprComp:
    """A symbolic component with cached numeric derivative functions."""

    def __init__(self, expr):
        self.expr = sp.sympify(expr, locals={"q": Q}) if isinstance(expr, str) else sp.sympify(expr)
        extra = self.expr.free_symbols - {Q}
        if extra:
            raise PreconditionViolation(f"unknown symbols in target expression: {extra}")
        self._fns = {}

    def fn(self, k):
        if k not in self._fns:
            self._fns[k] = sp.lambdify(Q, sp.diff(self.expr, Q, k) if k else self.expr, "numpy")
        return self._fns[k]

    def values(self, z, k=0):
        z = np.asarray(z, dtype=complex)
        return np.broadcast_to(np.asarray(self.fn(k)(z), dtype=complex), z.shape).copy()

    def jet(self, p, m):
        return np.array([complex(self.fn(k)(complex(p))) for k in range(m + 1)])

    def to_json(self):
        return {"expr": sp.srepr(self.expr)}


class TargetCurve:
    """Components x_1..x_n, y_1..y_n, z as LaurentPolys or sympy expressions in q."""

    def __init__(self, comps):
        comps = list(comps)
        if len(comps) < 3 or len(comps) % 2 == 0:
            raise PreconditionViolation("a target needs 2n+1 components")
        self.n = (len(comps) - 1) // 2
        self.comps = [c if isinstance(c, LaurentPoly) else _ExprComp(c) for c in comps]

    @classmethod
    def from_curve(cls, c: LegendrianCurve) -> "TargetCurve":
        return cls(c.components)

    @property
    def is_laurent(self):
        return all(isinstance(c, LaurentPoly) for c in self.comps)

    def laurent(self, i):
        c = self.comps[i]
        return c if isinstance(c, LaurentPoly) else None

    def curve(self, domain=None) -> LegendrianCurve:
        if not self.is_laurent:
            raise PreconditionViolation("target is not a Laurent curve")
        return LegendrianCurve.from_components(self.comps, domain)

    def expr(self, i):
        c = self.comps[i]
        return laurent_to_expr(c) if isinstance(c, LaurentPoly) else c.expr

    def values(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return np.array([evaluate(c, z) if isinstance(c, LaurentPoly) else c.values(z) for c in self.comps])

    def derivs(self, z, k=1):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = []
        for c in self.comps:
            out.append(evaluate(c.derivative(k), z) if isinstance(c, LaurentPoly) else c.values(z, k))
        return np.array(out)

    def comp_jet(self, i, p, m):
        c = self.comps[i]
        return np.asarray(jet_at(c, p, m) if isinstance(c, LaurentPoly) else c.jet(p, m), dtype=complex)

    def jet(self, p, m) -> JetSpec:
        n = self.n
        rows = [self.comp_jet(i, p, m) for i in range(2 * n + 1)]
        return JetSpec(p, m, rows[:n], rows[n:2 * n], rows[2 * n])

    def exchanged(self, i=1) -> "TargetCurve":
        """Image under (x_i, y_i, z) -> (-y_i, x_i, z + x_i y_i)."""
        n = self.n
        comps = list(self.comps)
        xi, yi, z = comps[i - 1], comps[n + i - 1], comps[2 * n]
        if self.is_laurent:
            comps[i - 1] = yi.scale(-1.0)
            comps[n + i - 1] = xi
            comps[2 * n] = z + mul(xi, yi)
            return TargetCurve(comps)
        ex = [self.expr(k) for k in range(2 * n + 1)]
        X, Y = ex[i - 1], ex[n + i - 1]
        ex[i - 1] = -Y
        ex[n + i - 1] = X
        ex[2 * n] = ex[2 * n] + X * Y
        return TargetCurve(ex)

    def to_json(self):
        return {"n": self.n, "components": [{"laurent": c.to_json()} if isinstance(c, LaurentPoly)
                                           else c.to_json() for c in self.comps]}

    @classmethod
    def from_json(cls, d):
        comps = []
        for c in d["components"]:
            if isinstance(c, str):
                comps.append(c)
            elif "laurent" in c:
                comps.append(LaurentPoly.from_json(c["laurent"]))
            elif "expr" in c:
                # plain text ("q**2/2") or srepr output both parse here
                comps.append(sp.sympify(c["expr"], locals={"q": Q}))
            else:
                raise PreconditionViolation(f"unknown target component {c}")
        return cls(comps)


# ---------------------------------------------------------------------------
# straight-line parametrisation helpers


def arc_param(arc: Arc, z):
    """(normalized arclength s, distance) of the nearest arc point, per z."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    lens = np.array([s.length for s in arc.segments])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    best_d = np.full(z.shape, np.inf)
    best_s = np.zeros(z.shape)
    for i, seg in enumerate(arc.segments):
        if not isinstance(seg, LineSegment):
            raise PreconditionViolation("path pieces need polyline arcs")
        d = seg.b - seg.a
        t = np.clip(((z - seg.a) * np.conj(d)).real / max(abs(d) ** 2, 1e-300), 0.0, 1.0)
        dist = np.abs(z - (seg.a + t * d))
        better = dist < best_d
        best_d = np.where(better, dist, best_d)
        best_s = np.where(better, (cum[i] + t * lens[i]) / cum[-1], best_s)
    return best_s, best_d


def end_scale(arc: Arc, end):
    """d(point)/ds at an end of the arc (s is the normalized arclength)."""
    seg = arc.segments[0] if end == 0 else arc.segments[-1]
    return (seg.b - seg.a) / seg.length * arc.length


def t_jet(jet: JetSpec, scale) -> JetSpec:
    """Convert a jet in the plane variable into one in s, with dq/ds = scale."""
    f = np.array([scale**k for k in range(jet.m + 1)])
    return JetSpec(0.0, jet.m, jet.x * f, jet.y * f, jet.z * f)


class SegmentBase:
    """A target restricted to a straight segment a -> b, in the parameter t."""

    def __init__(self, target: TargetCurve, a, b):
        self.target = target
        self.a, self.b = complex(a), complex(b)
        self.d = self.b - self.a

    def comp(self, i):
        c = self.target.comps[i]
        if isinstance(c, LaurentPoly):
            dc = c.derivative()
            return (lambda t: evaluate(c, self.a + np.asarray(t) * self.d),
                    lambda t: evaluate(dc, self.a + np.asarray(t) * self.d) * self.d)
        return (lambda t: c.values(self.a + np.asarray(t) * self.d),
                lambda t: c.values(self.a + np.asarray(t) * self.d, 1) * self.d)

    def jet(self, t, r):
        q = self.a + t * self.d
        f = np.array([self.d**k for k in range(r + 1)])
        return np.array([self.target.comp_jet(i, q, r) * f for i in range(2 * self.target.n)])


# ---------------------------------------------------------------------------
# generalised curves


class RegionPiece:
    """A Laurent (or target) curve on a compact set."""

    def __init__(self, k: CompactSet, curve):
        self.k = k
        self.curve = curve

    def contains(self, z):
        return self.k.contains(z, -1e-12)

    def values(self, z):
        return self.curve.values(z) if isinstance(self.curve, TargetCurve) else self.curve(z)

    def jet(self, p, m):
        if isinstance(self.curve, TargetCurve):
            return self.curve.jet(p, m)
        return self.curve.jet(p, m)


class DiskPiece(RegionPiece):
    """Jet polynomials of an outside point on a small closed disk."""

    def __init__(self, disk: Disk, curve: LegendrianCurve, jet: JetSpec):
        super().__init__(CompactSet(disk.center, disk.radius), curve)
        self.point = complex(disk.center)
        self.prescribed = jet


class PathPiece:
    """A Legendrian path carried by an arc, parameter = normalized arclength."""

    def __init__(self, arc: Arc, path: LegendrianPath, tol=1e-9):
        self.arc = arc
        self.path = path
        self.tol = tol

    def contains(self, z):
        _, d = arc_param(self.arc, z)
        return d <= self.tol

    def values(self, z):
        s, _ = arc_param(self.arc, z)
        return self.path.values(s)


class GeneralisedCurve:
    """Ordered pieces over a base target; the first piece containing a point wins."""

    def __init__(self, base: TargetCurve | None, pieces=(), n=None):
        self.base = base
        self.pieces = list(pieces)
        self.n = n if n is not None else base.n

    def values(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.full((2 * self.n + 1, z.size), np.nan + 0j)
        todo = np.ones(z.shape, dtype=bool)
        for pc in self.pieces:
            if not np.any(todo):
                break
            m = todo & pc.contains(z)
            if np.any(m):
                out[:, m] = pc.values(z[m])
                todo &= ~m
        if np.any(todo):
            if self.base is None:
                raise PreconditionViolation("point outside every piece of the generalised curve")
            out[:, todo] = self.base.values(z[todo])
        return out

    def jet(self, p, m) -> JetSpec:
        for pc in self.pieces:
            if isinstance(pc, RegionPiece) and pc.contains(np.array([p]))[0]:
                return pc.jet(p, m)
        if self.base is None:
            raise PreconditionViolation("no jet data at this point")
        return self.base.jet(p, m)

    @property
    def is_laurent(self):
        return False


def taylor_curve(jet: JetSpec, centers=()) -> LegendrianCurve:
    """x, y = Taylor polynomials of the jet; z = jet z(p) minus the primitive."""
    from .spray import legendrian_z

    xs = [_taylor(row, jet.p, centers) for row in jet.x]
    ys = [_taylor(row, jet.p, centers) for row in jet.y]
    z = legendrian_z(xs, ys, jet.p, complex(jet.z[0]))
    return LegendrianCurve(xs, ys, z.with_centers(centers) if centers else z)


@lru_cache(maxsize=None)
def _binom(n, k):
    return math.comb(n, k)


def _taylor(row, p, centers):
    """sum row[k]/k! (q - p)^k expanded in powers of q."""
    p = complex(p)
    poly = {}
    for k, a in enumerate(row):
        c = complex(a) / math.factorial(k)
        if c == 0:
            continue
        for j in range(k + 1):
            poly[j] = poly.get(j, 0j) + c * _binom(k, j) * (-p) ** (k - j)
    return LaurentPoly(centers, poly)
