"""Sampled Legendrian paths between two jets.

x and y are Hermite polynomials in the path parameter t in [0, 1] (or
exponentials of Hermite polynomials for components that must stay above a
modulus floor); z is recovered from dz = -sum x dy by composite
Gauss-Legendre, and one bump amplitude is solved so that z lands on the
prescribed end value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .contact import JetSpec
from .errors import DegenerateArcIntegral, FloorViolated, PreconditionViolation

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
PATH_SAMPLES = 1024


def hermite_poly(a_derivs, b_derivs) -> Polynomial:
    """Polynomial on [0, 1] with prescribed derivatives at both ends."""
    a = np.asarray(a_derivs, dtype=complex)
    b = np.asarray(b_derivs, dtype=complex)
    deg = a.size + b.size - 1
    M = np.zeros((deg + 1, deg + 1), dtype=complex)
    rhs = np.concatenate([a, b])
    for k in range(a.size):
        M[k, k] = math.factorial(k)
    for k in range(b.size):
        for j in range(k, deg + 1):
            M[a.size + k, j] = math.perm(j, k)
    return Polynomial(np.linalg.solve(M, rhs))


def bump_poly(order, skew=0.0) -> Polynomial:
    """t^(r+1) (1-t)^(r+1) (1 + skew (2t - 1)), scaled to peak about 1."""
    r = order + 1
    base = Polynomial([0, 1]) ** r * Polynomial([1, -1]) ** r
    base = base * Polynomial([1 - skew, 2 * skew])
    return base * (4.0**r)


def _log_jets(vals):
    """Derivatives of log c from derivatives of c (orders up to 2)."""
    c = np.asarray(vals, dtype=complex)
    out = [np.log(c[0])]
    if c.size > 1:
        out.append(c[1] / c[0])
    if c.size > 2:
        out.append(c[2] / c[0] - (c[1] / c[0]) ** 2)
    return np.array(out)


@dataclass
class PathComp:
    """poly(t) + exp(logpoly(t)) + base(t); the last two parts are optional.

    ``base`` is a pair of callables (value, derivative) in t.
    """

    poly: Polynomial
    logpoly: Polynomial | None = None
    base: tuple | None = None

    def value(self, t):
        v = np.asarray(self.poly(t), dtype=complex)
        if self.logpoly is not None:
            v = v + np.exp(self.logpoly(t))
        if self.base is not None:
            v = v + self.base[0](t)
        return v

    def deriv(self, t):
        v = np.asarray(self.poly.deriv()(t), dtype=complex)
        if self.logpoly is not None:
            v = v + self.logpoly.deriv()(t) * np.exp(self.logpoly(t))
        if self.base is not None:
            v = v + self.base[1](t)
        return v

    def plus(self, p: Polynomial) -> "PathComp":
        return PathComp(self.poly + p, self.logpoly, self.base)


@dataclass
class LegendrianPath:
    """x_1..x_n, y_1..y_n as PathComps; z from the Legendrian condition."""

    n: int
    comps: list
    z0: complex
    panels: int = 256
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        edges = np.linspace(0.0, 1.0, self.panels + 1)
        self._edges = edges
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        t = (mid[:, None] + half[:, None] * GL_NODES[None, :]).ravel()
        w = (half[:, None] * GL_WEIGHTS[None, :]).ravel()
        vals = (self._form(t) * w).reshape(self.panels, -1).sum(axis=1)
        self._cum = np.concatenate([[0.0], np.cumsum(vals)])

    def _form(self, t):
        """sum x_i y_i' at parameters t."""
        acc = np.zeros(np.shape(t), dtype=complex)
        for i in range(self.n):
            acc = acc + self.comps[i].value(t) * self.comps[self.n + i].deriv(t)
        return acc

    @property
    def integral(self) -> complex:
        return complex(self._cum[-1])

    def z(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self._edges, t, side="right") - 1, 0, self.panels - 1)
        lo = self._edges[idx]
        half = 0.5 * (t - lo)
        nodes = (lo + half)[:, None] + half[:, None] * GL_NODES[None, :]
        part = (self._form(nodes.ravel()).reshape(nodes.shape) * GL_WEIGHTS[None, :]).sum(axis=1) * half
        return self.z0 - (self._cum[idx] + part)

    def values(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        rows = [c.value(t) for c in self.comps] + [self.z(t)]
        return np.array(rows)

    def derivatives(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        rows = [c.deriv(t) for c in self.comps] + [-self._form(t)]
        return np.array(rows)

    def sample(self, n=PATH_SAMPLES):
        t = np.linspace(0.0, 1.0, n)
        return t, self.values(t)

    def length(self, n=PATH_SAMPLES) -> float:
        _, v = self.sample(n)
        return float(np.sum(np.max(np.abs(np.diff(v, axis=1)), axis=0)))


def _slot_jets(jet: JetSpec, slot, r):
    return np.asarray(jet.component(slot), dtype=complex)[: r + 1]


def _jets_equal(a: JetSpec, b: JetSpec):
    return (a.n == b.n and a.m == b.m and np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
            and np.array_equal(a.z, b.z))


LIFTS = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0)
WINDINGS = (0, 1, -1, 2)


def connect_legendrian(jet_a: JetSpec, jet_b: JetSpec, rho=0.0, mask=(), order=2, samples=PATH_SAMPLES,
                       base=None):
    """Legendrian path from jet_a (t = 0) to jet_b (t = 1).

    Jets hold derivatives with respect to t. Components listed in ``mask``
    (slot indices, z = 2n) must keep modulus > rho at all ``samples`` points.
    With ``base`` (an object with ``comp(i)`` -> (value, deriv) callables and
    ``jet(t, r)`` -> (2n, r+1) array) the x, y components are base plus a
    Hermite interpolant of the jet differences.
    """
    if jet_a.n != jet_b.n:
        raise PreconditionViolation("jets have different dimensions")
    n = jet_a.n
    mask = tuple(int(i) for i in mask)
    va, vb = jet_a.value(), jet_b.value()
    for i in mask:
        if abs(va[i]) <= rho or abs(vb[i]) <= rho:
            raise PreconditionViolation(f"component {i} is not above the floor {rho} at both ends")
    if base is not None and mask:
        raise PreconditionViolation("a base path cannot be combined with a floor mask")
    if _jets_equal(jet_a, jet_b) and base is None:
        comps = [PathComp(Polynomial([va[i]])) for i in range(2 * n)]
        return LegendrianPath(n, comps, complex(va[2 * n]), report={"degenerate": True, "bumpAmplitude": 0.0})
    r = min(order, jet_a.m, jet_b.m)
    if base is not None:
        ba, bb = base.jet(0.0, r), base.jet(1.0, r)
    t = np.linspace(0.0, 1.0, samples)
    free = [i for i in range(2 * n) if i not in mask]
    candidates = free + [i for i in range(2 * n) if i in mask]
    degenerate_only = True
    last_min = None
    for attempt in range(len(LIFTS) * len(WINDINGS)):
        lift = LIFTS[attempt // len(WINDINGS)]
        wind = WINDINGS[attempt % len(WINDINGS)]
        comps = []
        for i in range(2 * n):
            ja, jb = _slot_jets(jet_a, i, r), _slot_jets(jet_b, i, r)
            if i in mask:
                la, lb = _log_jets(ja), _log_jets(jb)
                # nearest branch, then the attempt's winding
                k = np.round((la[0].imag - lb[0].imag) / (2 * np.pi)) + wind
                lb = lb.copy()
                lb[0] += 2j * np.pi * k
                lp = hermite_poly(la, lb) + bump_poly(r) * lift
                comps.append(PathComp(Polynomial([0j]), lp))
            elif base is not None:
                comps.append(PathComp(hermite_poly(ja - ba[i], jb - bb[i]), None, base.comp(i)))
            else:
                comps.append(PathComp(hermite_poly(ja, jb)))
        path = None
        for skew in (0.0, 0.5, -0.5):
            b = bump_poly(r, skew)
            for j in candidates:
                trial = LegendrianPath(n, comps, complex(va[2 * n]))
                if j < n:
                    i1 = _integral(lambda s: b(s) * comps[n + j].deriv(s))
                else:
                    i1 = _integral(lambda s: comps[j - n].value(s) * b.deriv()(s))
                if abs(i1) < 1e-10:
                    continue
                amp = (va[2 * n] - vb[2 * n] - trial.integral) / i1
                new = list(comps)
                new[j] = comps[j].plus(b * amp)
                path = LegendrianPath(n, new, complex(va[2 * n]),
                                      report={"bumpSlot": j, "bumpAmplitude": abs(amp), "attempt": attempt,
                                              "lift": lift, "winding": wind})
                break
            if path is not None:
                break
        if path is None:
            comps = _preshape(comps, n, r, mask)
            if comps is None:
                continue
            path = _solve_with(comps, n, r, va, vb, candidates)
            if path is None:
                continue
        degenerate_only = False
        if not mask:
            return path
        vals = path.values(t)
        mins = [float(np.min(np.abs(vals[i]))) for i in mask]
        last_min = min(mins)
        if last_min > rho:
            path.report["floorMin"] = last_min
            return path
    if degenerate_only:
        raise DegenerateArcIntegral("the z-equation does not depend on any bump amplitude")
    raise FloorViolated(f"floor {rho} violated after all reshape attempts (best min {last_min})")


def _integral(f, panels=64):
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = (mid[:, None] + half[:, None] * GL_NODES[None, :]).ravel()
    w = (half[:, None] * GL_WEIGHTS[None, :]).ravel()
    return complex(np.sum(f(t) * w))


def _preshape(comps, n, r, mask):
    """Give y_1 (or the first free y) a nonzero velocity that keeps end jets."""
    for i in range(n):
        if n + i not in mask:
            shape = bump_poly(r) * Polynomial([1.0, -2.0])
            new = list(comps)
            new[n + i] = comps[n + i].plus(shape)
            return new
    return None


def _solve_with(comps, n, r, va, vb, candidates):
    b = bump_poly(r)
    for j in candidates:
        trial = LegendrianPath(n, comps, complex(va[2 * n]))
        if j < n:
            i1 = _integral(lambda s: b(s) * comps[n + j].deriv(s))
        else:
            i1 = _integral(lambda s: comps[j - n].value(s) * b.deriv()(s))
        if abs(i1) < 1e-10:
            continue
        amp = (va[2 * n] - vb[2 * n] - trial.integral) / i1
        new = list(comps)
        new[j] = comps[j].plus(b * amp)
        return LegendrianPath(n, new, complex(va[2 * n]),
                              report={"bumpSlot": j, "bumpAmplitude": abs(amp), "preshaped": True})
    return None


def path_jet(path: LegendrianPath, t, m=2) -> JetSpec:
    """t-derivative jet of the path (z derivatives from the Legendrian condition)."""
    x = []
    y = []
    for i in range(path.n):
        x.append(_comp_derivs(path.comps[i], t, m))
        y.append(_comp_derivs(path.comps[path.n + i], t, m))
    z0 = complex(path.z(np.array([t]))[0])
    return JetSpec.from_xy(t, x, y, z0)


def _comp_derivs(c: PathComp, t, m):
    out = []
    p = c.poly
    lp = c.logpoly
    for k in range(m + 1):
        v = complex(p(t))
        out.append(v)
        p = p.deriv()
    if c.base is not None:
        raise PreconditionViolation("jets of based path components are not available")
    if lp is not None:
        e = complex(np.exp(lp(t)))
        d1 = complex(lp.deriv()(t))
        d2 = complex(lp.deriv(2)(t))
        extra = [e, d1 * e, (d2 + d1 * d1) * e]
        for k in range(min(m, 2) + 1):
            out[k] += extra[k]
    return out
