"""Contact structure on C^(2n+1), Legendrian curves, jets and coordinate isos.

Coordinates are ordered (x_1..x_n, y_1..y_n, z). A contact form is stored as
dz + sum coef * u_a du_b over a list of (coef, a, b) slot triples; the
standard form has the terms (1, i, n+i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MismatchedJets, PreconditionViolation
from .geometry import CircularDomain
from .laurent import LaurentPoly, differentiate, evaluate, jet_at, mul

LEGENDRIAN_TOL = 1e-9
EXACT_TOL = 1e-12
JET_COMPAT_TOL = 1e-10


@dataclass(frozen=True)
class ContactForm:
    n: int
    terms: tuple = None

    def __post_init__(self):
        if self.n < 1:
            raise PreconditionViolation("n must be >= 1")
        if self.terms is None:
            object.__setattr__(self, "terms", tuple((1.0, i, self.n + i) for i in range(self.n)))
        else:
            object.__setattr__(self, "terms", tuple((float(c), int(a), int(b)) for c, a, b in self.terms))

    @property
    def is_standard(self) -> bool:
        return self == ContactForm(self.n)

    def to_json(self):
        return {"n": self.n, "terms": [list(t) for t in self.terms]}

    @classmethod
    def from_json(cls, d):
        return cls(d["n"], tuple(tuple(t) for t in d["terms"]) if "terms" in d else None)


class LegendrianCurve:
    """A holomorphic map (x, y, z) with Laurent components.

    Construction does not enforce the Legendrian condition; use
    ``verify_legendrian`` for the certificate.
    """

    def __init__(self, x, y, z, domain: CircularDomain | None = None, form: ContactForm | None = None):
        self.x = tuple(x)
        self.y = tuple(y)
        self.z = z
        if len(self.x) != len(self.y) or not self.x:
            raise PreconditionViolation("need n >= 1 x and y components")
        self.n = len(self.x)
        self.domain = domain
        self.form = form or ContactForm(self.n)
        if self.form.n != self.n:
            raise PreconditionViolation("form dimension does not match the curve")

    @property
    def components(self):
        return list(self.x) + list(self.y) + [self.z]

    @classmethod
    def from_components(cls, comps, domain=None, form=None):
        n = (len(comps) - 1) // 2
        return cls(comps[:n], comps[n:2 * n], comps[2 * n], domain, form)

    def evaluate(self, z):
        return np.array([evaluate(c, z) for c in self.components])

    def __call__(self, z):
        return self.evaluate(z)

    def derivative_values(self, z, order=1):
        return np.array([evaluate(c.derivative(order), z) for c in self.components])

    def residual(self) -> LaurentPoly:
        """Coefficient of the pulled-back contact form dz + sum coef u_a du_b."""
        comps = self.components
        out = differentiate(self.z)
        for coef, a, b in self.form.terms:
            out = out + mul(comps[a], differentiate(comps[b])).scale(coef)
        return out

    def jet(self, p, m) -> "JetSpec":
        return jet_of_curve(self, p, m)

    def to_json(self):
        d = {
            "n": self.n,
            "x": [c.to_json() for c in self.x],
            "y": [c.to_json() for c in self.y],
            "z": self.z.to_json(),
        }
        if self.domain is not None:
            d["domain"] = self.domain.to_json()
        if not self.form.is_standard:
            d["form"] = self.form.to_json()
        return d

    @classmethod
    def from_json(cls, d):
        dom = CircularDomain.from_json(d["domain"]) if "domain" in d else None
        form = ContactForm.from_json(d["form"]) if "form" in d else None
        return cls(
            [LaurentPoly.from_json(c) for c in d["x"]],
            [LaurentPoly.from_json(c) for c in d["y"]],
            LaurentPoly.from_json(d["z"]),
            dom,
            form,
        )

    def __repr__(self):
        return f"LegendrianCurve(n={self.n}, x={self.x}, y={self.y}, z={self.z})"


@dataclass
class LegendrianReport:
    max_residual: float
    passed: bool
    tol: float

    def to_json(self):
        return {"maxResidualCoeff": self.max_residual, "pass": self.passed, "tol": self.tol}


def verify_legendrian(c: LegendrianCurve, tol=LEGENDRIAN_TOL) -> LegendrianReport:
    """Symbolic check that every coefficient of the pulled-back form is small."""
    r = c.residual().max_coeff()
    return LegendrianReport(r, bool(r <= tol), tol)


# ---------------------------------------------------------------------------
# contactomorphisms


@dataclass(frozen=True)
class ContactIso:
    """Signed coordinate permutation plus a quadratic shift of z.

    New coordinates are U_k = sign_k * u_{src_k} for k < 2n and
    Z = z + sum coef * u_a * u_b over ``shift``.
    """

    kind: str
    n: int
    perm: tuple
    shift: tuple = ()
    j: int | None = None

    @classmethod
    def c1(cls, n, j):
        """Swap y_1 and y_j (j in 2..n, 1-based)."""
        if not 2 <= j <= n:
            raise PreconditionViolation("c1 needs 2 <= j <= n")
        perm = [(k, 1.0) for k in range(2 * n)]
        perm[n], perm[n + j - 1] = (n + j - 1, 1.0), (n, 1.0)
        return cls("c1", n, tuple(perm), (), j)

    @classmethod
    def c2(cls, n):
        """(x_1, y_1, z) -> (x_1, -y_1, z + x_1 y_1)."""
        perm = [(k, 1.0) for k in range(2 * n)]
        perm[n] = (n, -1.0)
        return cls("c2", n, tuple(perm), ((1.0, 0, n),))

    @classmethod
    def exchange(cls, n, i=1):
        """(x_i, y_i, z) -> (-y_i, x_i, z + x_i y_i); keeps the standard form."""
        perm = [(k, 1.0) for k in range(2 * n)]
        perm[i - 1] = (n + i - 1, -1.0)
        perm[n + i - 1] = (i - 1, 1.0)
        return cls("exchange", n, tuple(perm), ((1.0, i - 1, n + i - 1),), i)

    def inverse(self) -> "ContactIso":
        m = 2 * self.n
        inv = [None] * m
        for k, (src, s) in enumerate(self.perm):
            inv[src] = (k, s)
        # z = Z - q(u) with u_a = s_a U_{k_a}
        shift = []
        for coef, a, b in self.shift:
            ka, sa = inv[a]
            kb, sb = inv[b]
            shift.append((-coef * sa * sb, ka, kb))
        kind = self.kind if self.kind in ("c1", "c2") else self.kind + "-inverse"
        return ContactIso(kind, self.n, tuple(inv), tuple(shift), self.j)

    def map_form(self, form: ContactForm) -> ContactForm:
        """Form on the new coordinates whose pullback is the old form."""
        terms = {}
        for coef, a, b in form.terms:
            terms[(a, b)] = terms.get((a, b), 0.0) + coef
        # dz = dZ - dq with dq = sum coef (u_a du_b + u_b du_a)
        for coef, a, b in self.shift:
            terms[(a, b)] = terms.get((a, b), 0.0) - coef
            terms[(b, a)] = terms.get((b, a), 0.0) - coef
        inv = [None] * (2 * self.n)
        for k, (src, s) in enumerate(self.perm):
            inv[src] = (k, s)
        out = []
        for (a, b), coef in sorted(terms.items()):
            if coef == 0.0:
                continue
            ka, sa = inv[a]
            kb, sb = inv[b]
            out.append((coef * sa * sb, ka, kb))
        return ContactForm(self.n, tuple(sorted(out, key=lambda t: (t[1], t[2]))))


def _signed(c: LaurentPoly, s: float) -> LaurentPoly:
    return c if s == 1.0 else c.scale(s)


def apply_iso(iso: ContactIso, c: LegendrianCurve) -> LegendrianCurve:
    """Image of the curve under the iso; the form is transported along."""
    if iso.n != c.n:
        raise PreconditionViolation("iso and curve dimensions differ")
    comps = c.components
    new = [_signed(comps[src], s) for src, s in iso.perm]
    z = c.z
    for coef, a, b in iso.shift:
        z = z + mul(comps[a], comps[b]).scale(coef)
    return LegendrianCurve(new[: c.n], new[c.n:], z, c.domain, iso.map_form(c.form))


# ---------------------------------------------------------------------------
# jets


@dataclass
class JetSpec:
    """Derivative values (order ascending) of all components at a point."""

    p: complex
    m: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.p = complex(self.p)
        self.m = int(self.m)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=complex))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=complex))
        self.z = np.asarray(self.z, dtype=complex).ravel()
        if self.x.shape != self.y.shape or self.x.shape[1] != self.m + 1 or self.z.size != self.m + 1:
            raise PreconditionViolation("jet arrays do not match order m")

    @property
    def n(self):
        return self.x.shape[0]

    def component(self, k):
        """Derivative values of component k in slot order."""
        if k < self.n:
            return self.x[k]
        if k < 2 * self.n:
            return self.y[k - self.n]
        return self.z

    def value(self):
        return np.concatenate([self.x[:, 0], self.y[:, 0], [self.z[0]]])

    def leibniz_z(self):
        """z-derivatives of orders 1..m implied by dz = -sum x dy."""
        out = np.zeros(self.m + 1, dtype=complex)
        for k in range(1, self.m + 1):
            acc = 0j
            for i in range(self.n):
                for r in range(k):
                    acc += math.comb(k - 1, r) * self.x[i, r] * self.y[i, k - r]
            out[k] = -acc
        return out

    def compatibility_error(self) -> float:
        if self.m < 1:
            return 0.0
        implied = self.leibniz_z()
        scale = max(1.0, float(np.max(np.abs(implied[1:]))))
        return float(np.max(np.abs(implied[1:] - self.z[1:]))) / scale

    def is_compatible(self, tol=JET_COMPAT_TOL) -> bool:
        return self.compatibility_error() <= tol

    def truncated(self, m) -> "JetSpec":
        return JetSpec(self.p, m, self.x[:, : m + 1], self.y[:, : m + 1], self.z[: m + 1])

    def to_json(self):
        pair = lambda v: [float(np.real(v)), float(np.imag(v))]
        return {
            "p": pair(self.p),
            "m": self.m,
            "x": [[pair(v) for v in row] for row in self.x],
            "y": [[pair(v) for v in row] for row in self.y],
            "z": [pair(v) for v in self.z],
        }

    @classmethod
    def from_json(cls, d):
        cx = lambda v: complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)
        return cls(
            cx(d["p"]), d["m"],
            [[cx(v) for v in row] for row in d["x"]],
            [[cx(v) for v in row] for row in d["y"]],
            [cx(v) for v in d["z"]],
        )

    @classmethod
    def from_xy(cls, p, x, y, z0):
        """Complete x, y jets with the z-jet forced by the Legendrian condition."""
        x = np.atleast_2d(np.asarray(x, dtype=complex))
        m = x.shape[1] - 1
        tmp = cls(p, m, x, y, np.zeros(m + 1))
        z = tmp.leibniz_z()
        z[0] = z0
        return cls(p, m, x, y, z)


def jet_of_curve(c: LegendrianCurve, p, m: int) -> JetSpec:
    xs = [jet_at(f, p, m) for f in c.x]
    ys = [jet_at(f, p, m) for f in c.y]
    zs = jet_at(c.z, p, m)
    return JetSpec(p, m, xs, ys, zs)


def jet_distance(a: JetSpec, b: JetSpec) -> float:
    if abs(a.p - b.p) > 1e-12 or a.m != b.m or a.n != b.n:
        raise MismatchedJets(f"jets at {a.p} (m={a.m}, n={a.n}) vs {b.p} (m={b.m}, n={b.n})")
    return float(max(np.max(np.abs(a.x - b.x)), np.max(np.abs(a.y - b.y)), np.max(np.abs(a.z - b.z))))


def max_norm(point) -> float | np.ndarray:
    """Max of component moduli; arrays are reduced over axis 0."""
    v = np.abs(np.asarray(point, dtype=complex))
    if v.ndim == 0:
        return float(v)
    if v.size == 0:
        return 0.0
    out = v.max(axis=0)
    return float(out) if np.ndim(out) == 0 else out
