"""Planar circular domains, compact exhaustions, cycles and arcs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import NoPathFound, PreconditionViolation

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
ARC_MARGIN = 1e-3


def _c(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def _cjson(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


@dataclass(frozen=True)
class Disk:
    center: complex
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise PreconditionViolation("disk radius must be positive")

    def contains(self, z, margin=0.0):
        return np.abs(np.asarray(z) - self.center) <= self.radius - margin

    def to_json(self):
        return {"center": _cjson(self.center), "radius": self.radius}

    @classmethod
    def from_json(cls, d):
        return cls(_c(d["center"]), d["radius"])


@dataclass(frozen=True)
class CircularDomain:
    """The plane (``outer is None``) or a disk, minus disjoint closed disks."""

    outer: Optional[Disk] = None
    holes: tuple = ()

    def __post_init__(self):
        holes = tuple(h if isinstance(h, Disk) else Disk(*h) for h in self.holes)
        object.__setattr__(self, "holes", holes)
        for i, h in enumerate(holes):
            for g in holes[:i]:
                if abs(h.center - g.center) <= h.radius + g.radius:
                    raise PreconditionViolation("holes must be pairwise disjoint")
            if self.outer is not None:
                if abs(h.center - self.outer.center) + h.radius >= self.outer.radius:
                    raise PreconditionViolation("hole not strictly inside outer disk")

    @property
    def centers(self):
        return tuple(h.center for h in self.holes)

    @property
    def center(self) -> complex:
        return self.outer.center if self.outer is not None else 0j

    def contains(self, z, margin=0.0):
        z = np.asarray(z, dtype=complex)
        ok = np.ones(z.shape, dtype=bool)
        if self.outer is not None:
            ok &= np.abs(z - self.outer.center) < self.outer.radius - margin
        for h in self.holes:
            ok &= np.abs(z - h.center) > h.radius + margin
        return ok

    def to_json(self):
        outer = {"type": "plane"} if self.outer is None else {"type": "disk", **self.outer.to_json()}
        return {"outer": outer, "holes": [h.to_json() for h in self.holes]}

    @classmethod
    def from_json(cls, d):
        o = d.get("outer", {"type": "plane"})
        outer = None if o.get("type", "plane") == "plane" else Disk.from_json(o)
        return cls(outer, tuple(Disk.from_json(h) for h in d.get("holes", [])))


# ---------------------------------------------------------------------------
# arcs


@dataclass(frozen=True)
class LineSegment:
    a: complex
    b: complex

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return self.a + t * (self.b - self.a)

    def deriv(self, t):
        return np.full(np.shape(t), self.b - self.a, dtype=complex)

    @property
    def length(self):
        return abs(self.b - self.a)


@dataclass(frozen=True)
class CircularPiece:
    """Circle arc center + radius*exp(i theta), theta from theta0 to theta1."""

    center: complex
    radius: float
    theta0: float
    theta1: float

    def point(self, t):
        th = self.theta0 + np.asarray(t, dtype=float) * (self.theta1 - self.theta0)
        return self.center + self.radius * np.exp(1j * th)

    def deriv(self, t):
        th = self.theta0 + np.asarray(t, dtype=float) * (self.theta1 - self.theta0)
        return 1j * self.radius * (self.theta1 - self.theta0) * np.exp(1j * th)

    @property
    def length(self):
        return abs(self.theta1 - self.theta0) * self.radius


@dataclass(frozen=True)
class Arc:
    """A chain of line segments and circle pieces traversed in order."""

    segments: tuple
    kind: str = "polyline"

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise PreconditionViolation("arc needs at least one segment")
        if any(isinstance(s, CircularPiece) for s in self.segments):
            object.__setattr__(self, "kind", "circular")

    @classmethod
    def from_vertices(cls, vertices) -> "Arc":
        v = [complex(p) for p in vertices]
        segs = [LineSegment(p, q) for p, q in zip(v[:-1], v[1:]) if p != q]
        return cls(tuple(segs))

    @property
    def a(self) -> complex:
        return complex(self.segments[0].point(0.0))

    @property
    def b(self) -> complex:
        return complex(self.segments[-1].point(1.0))

    @property
    def length(self) -> float:
        return float(sum(s.length for s in self.segments))

    @property
    def vertices(self):
        return [self.a] + [complex(s.point(1.0)) for s in self.segments]

    def reversed(self) -> "Arc":
        segs = []
        for s in reversed(self.segments):
            if isinstance(s, LineSegment):
                segs.append(LineSegment(s.b, s.a))
            else:
                segs.append(CircularPiece(s.center, s.radius, s.theta1, s.theta0))
        return Arc(tuple(segs))

    def concat(self, other: "Arc") -> "Arc":
        return Arc(self.segments + other.segments)

    def point_at(self, s):
        """Points at normalized arclength parameters s in [0, 1]."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        lens = np.array([seg.length for seg in self.segments])
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        total = cum[-1]
        target = np.clip(s, 0.0, 1.0) * total
        idx = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, len(self.segments) - 1)
        out = np.empty(s.shape, dtype=complex)
        for i, seg in enumerate(self.segments):
            m = idx == i
            if np.any(m):
                local = (target[m] - cum[i]) / max(lens[i], 1e-300)
                out[m] = seg.point(np.clip(local, 0.0, 1.0))
        return out

    def tangent_at(self, s):
        """Unit tangents at normalized arclength parameters."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        lens = np.array([seg.length for seg in self.segments])
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        target = np.clip(s, 0.0, 1.0) * cum[-1]
        idx = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, len(self.segments) - 1)
        out = np.empty(s.shape, dtype=complex)
        for i, seg in enumerate(self.segments):
            m = idx == i
            if np.any(m):
                local = np.clip((target[m] - cum[i]) / max(lens[i], 1e-300), 0.0, 1.0)
                d = seg.deriv(local)
                out[m] = d / np.abs(d)
        return out

    def sample(self, n: int):
        """n points equally spaced in arclength, endpoints included."""
        if n <= 1:
            return np.array([self.a])
        return self.point_at(np.linspace(0.0, 1.0, n))

    def distance_to(self, z, n=512):
        pts = self.sample(max(n, 2))
        return _polyline_distance(np.atleast_1d(np.asarray(z, dtype=complex)), pts)

    def is_simple(self, n=512, tol=1e-9) -> bool:
        pts = self.sample(n)
        d = np.abs(pts[:, None] - pts[None, :])
        idx = np.arange(n)
        far = np.abs(idx[:, None] - idx[None, :]) > 1
        return not np.any(d[far] < tol)

    def to_json(self):
        segs = []
        for s in self.segments:
            if isinstance(s, LineSegment):
                segs.append({"type": "line", "a": _cjson(s.a), "b": _cjson(s.b)})
            else:
                segs.append({"type": "circle", "center": _cjson(s.center), "radius": s.radius,
                             "theta0": s.theta0, "theta1": s.theta1})
        if all(isinstance(s, LineSegment) for s in self.segments):
            return {"vertices": [_cjson(v) for v in self.vertices]}
        return {"segments": segs}

    @classmethod
    def from_json(cls, d):
        if "vertices" in d:
            return cls.from_vertices([_c(v) for v in d["vertices"]])
        segs = []
        for s in d["segments"]:
            if s["type"] == "line":
                segs.append(LineSegment(_c(s["a"]), _c(s["b"])))
            else:
                segs.append(CircularPiece(_c(s["center"]), s["radius"], s["theta0"], s["theta1"]))
        return cls(tuple(segs))


@dataclass(frozen=True)
class Cycle:
    """Positively (orientation 1) or negatively oriented circle."""

    center: complex
    radius: float
    orientation: int = 1
    mask: frozenset = frozenset()

    def as_arc(self) -> Arc:
        th1 = 2 * math.pi * self.orientation
        return Arc((CircularPiece(complex(self.center), self.radius, 0.0, th1),))

    @property
    def segments(self):
        return self.as_arc().segments


# ---------------------------------------------------------------------------
# compact sets


@dataclass(frozen=True)
class CompactSet:
    """Closed disk minus open disks around the enclosed holes."""

    center: complex
    radius: float
    holes: tuple = ()
    hole_ids: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "holes", tuple(self.holes))
        if not self.hole_ids:
            object.__setattr__(self, "hole_ids", tuple(range(len(self.holes))))

    @classmethod
    def in_domain(cls, d: CircularDomain, center, radius, enlarge=0.2):
        """Disk of the given radius minus the enlarged domain holes inside it."""
        center = complex(center)
        holes, ids = [], []
        for i, h in enumerate(d.holes):
            if abs(h.center - center) + h.radius < radius:
                holes.append(Disk(h.center, h.radius * (1.0 + enlarge)))
                ids.append(i)
        return cls(center, radius, tuple(holes), tuple(ids))

    def contains(self, z, margin=0.0):
        z = np.asarray(z, dtype=complex)
        ok = np.abs(z - self.center) <= self.radius - margin
        for h in self.holes:
            ok &= np.abs(z - h.center) >= h.radius + margin
        return ok

    @property
    def area(self) -> float:
        return math.pi * (self.radius**2 - sum(h.radius**2 for h in self.holes))

    def boundary_points(self, n=256):
        th = 2 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.exp(1j * th)

    def grid(self, n=200, margin=0.0):
        """Points of an n x n grid over the bounding square lying in the set."""
        x = np.linspace(-self.radius, self.radius, n)
        X, Y = np.meshgrid(x, x)
        z = (self.center + X + 1j * Y).ravel()
        return z[self.contains(z, margin)]

    def to_json(self):
        return {"center": _cjson(self.center), "radius": self.radius,
                "holes": [h.to_json() for h in self.holes], "hole_ids": list(self.hole_ids)}

    @classmethod
    def from_json(cls, d):
        holes = tuple(Disk.from_json(h) for h in d.get("holes", []))
        return cls(_c(d["center"]), d["radius"], holes, tuple(d.get("hole_ids", range(len(holes)))))


@dataclass(frozen=True)
class AdmissibleSet:
    """Disjoint compact pieces K plus disjoint arcs."""

    K: tuple = ()
    arcs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "K", tuple(self.K))
        object.__setattr__(self, "arcs", tuple(self.arcs))

    def contains(self, z, tol=1e-9):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        ok = np.zeros(z.shape, dtype=bool)
        for k in self.K:
            ok |= k.contains(z, -tol)
        for a in self.arcs:
            ok |= a.distance_to(z, 2048) <= max(tol, a.length / 1024)
        return ok

    def components(self, tol=1e-9):
        """Connected components as lists of piece indices, K pieces first, then arcs."""
        nk = len(self.K)
        m = nk + len(self.arcs)
        if m == 0:
            return []
        edges = []
        samples = [a.sample(256) for a in self.arcs]
        for i, k in enumerate(self.K):
            for j, g in enumerate(self.K[:i]):
                if abs(k.center - g.center) <= k.radius + g.radius + tol:
                    edges.append((i, j))
            for j, pts in enumerate(samples):
                if np.any(k.contains(pts, -tol)):
                    edges.append((i, nk + j))
        for i, a in enumerate(self.arcs):
            for j, b in enumerate(self.arcs[:i]):
                if min(abs(p - q) for p in (a.a, a.b) for q in (b.a, b.b)) <= tol:
                    edges.append((nk + i, nk + j))
        rows = [e[0] for e in edges]
        cols = [e[1] for e in edges]
        graph = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(m, m))
        count, labels = connected_components(graph, directed=False)
        return [np.flatnonzero(labels == c).tolist() for c in range(count)]

    def piece_point(self, i):
        """A deterministic point of piece i, well inside it when it is a compact piece."""
        nk = len(self.K)
        if i >= nk:
            return complex(self.arcs[i - nk].point_at(np.array([0.5]))[0])
        k = self.K[i]
        pts = sample_compact(k, 64)
        margin = k.radius - np.abs(pts - k.center)
        for h in k.holes:
            margin = np.minimum(margin, np.abs(pts - h.center) - h.radius)
        return complex(pts[int(np.argmax(margin))])

    def piece_subset(self, idx):
        nk = len(self.K)
        return AdmissibleSet(tuple(self.K[i] for i in idx if i < nk), tuple(self.arcs[i - nk] for i in idx if i >= nk))

    def bounding_disk(self):
        pts = [k.boundary_points(64) for k in self.K] + [a.sample(64) for a in self.arcs]
        pts = np.concatenate(pts) if pts else np.zeros(1, dtype=complex)
        c = 0.5 * (pts.real.min() + pts.real.max()) + 0.5j * (pts.imag.min() + pts.imag.max())
        return c, float(np.max(np.abs(pts - c)))

    def validate(self, min_angle_deg=5.0):
        """Check arc disjointness and transversal meeting with bK."""
        for i, a in enumerate(self.arcs):
            for b in self.arcs[:i]:
                pa, pb = a.sample(256), b.sample(256)
                d = np.abs(pa[:, None] - pb[None, :])
                shared = [(p, q) for p in (a.a, a.b) for q in (b.a, b.b) if abs(p - q) < 1e-9]
                if shared:
                    for p, _ in shared:
                        d[np.abs(pa - p) < 1e-6, :] = np.inf
                if np.any(d < 1e-9):
                    raise PreconditionViolation("arcs of an admissible set must be disjoint")
        for a in self.arcs:
            for k in self.K:
                for s, end in ((0.0, a.a), (1.0, a.b)):
                    if abs(abs(end - k.center) - k.radius) < 1e-9:
                        tan = a.tangent_at(np.array([s]))[0]
                        normal = (end - k.center) / abs(end - k.center)
                        cosang = abs((tan * normal.conjugate()).real)
                        if cosang < math.sin(math.radians(min_angle_deg)):
                            raise PreconditionViolation("arc meets a boundary tangentially")
        return True

    def is_runge(self, d: CircularDomain, n=400) -> bool:
        """Every bounded complement component must contain a hole."""
        c, r = self.bounding_disk()
        r = 1.2 * r + 1e-9
        x = np.linspace(-r, r, n)
        X, Y = np.meshgrid(x, x)
        z = c + X + 1j * Y
        h = x[1] - x[0]
        inside = np.zeros(z.shape, dtype=bool)
        for k in self.K:
            inside |= k.contains(z)
        for a in self.arcs:
            pts = a.sample(max(8, int(4 * a.length / h)))
            ix = np.clip(np.round((pts.real - (c.real - r)) / h).astype(int), 0, n - 1)
            iy = np.clip(np.round((pts.imag - (c.imag - r)) / h).astype(int), 0, n - 1)
            inside[iy, ix] = True
        labels, count = ndimage.label(~inside)
        border = set(np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])))
        for lab in range(1, count + 1):
            if lab in border:
                continue
            comp = labels == lab
            has_hole = False
            for hole in d.holes:
                iy = int(round((hole.center.imag - (c.imag - r)) / h))
                ix = int(round((hole.center.real - (c.real - r)) / h))
                if 0 <= ix < n and 0 <= iy < n and comp[iy, ix]:
                    has_hole = True
            if not has_hole:
                return False
        return True

    def to_json(self):
        return {"K": [k.to_json() for k in self.K], "arcs": [a.to_json() for a in self.arcs]}

    @classmethod
    def from_json(cls, d):
        return cls(tuple(CompactSet.from_json(k) for k in d.get("K", [])),
                   tuple(Arc.from_json(a) for a in d.get("arcs", [])))


@dataclass(frozen=True)
class Exhaustion:
    sets: tuple
    tags: tuple
    enclosed: tuple = field(default=())

    def __len__(self):
        return len(self.sets)

    def __getitem__(self, j):
        return self.sets[j]


# ---------------------------------------------------------------------------
# operations


def enclosed_holes(d: CircularDomain, k: CompactSet):
    return [i for i, h in enumerate(d.holes) if abs(h.center - k.center) + h.radius < k.radius]


def homology_basis(d: CircularDomain, k: CompactSet):
    """One positively oriented circle around each hole enclosed by k."""
    removed = {hid: h for hid, h in zip(k.hole_ids, k.holes)}
    ids = enclosed_holes(d, k)
    cycles = []
    for i in ids:
        h = d.holes[i]
        r_in = removed.get(i, h).radius
        r_out = k.radius - abs(h.center - k.center)
        for j in ids:
            if j != i:
                g = d.holes[j]
                r_out = min(r_out, abs(g.center - h.center) - removed.get(j, g).radius)
        if r_out <= r_in:
            raise PreconditionViolation(f"no room for a cycle around hole {i}")
        cycles.append(Cycle(h.center, r_in + 0.3 * (r_out - r_in), 1, frozenset({i})))
    return cycles


def _seg_point_dist(p, q, z):
    """Distance from points z to the segment [p, q] (vectorized over z)."""
    d = q - p
    L2 = abs(d) ** 2
    if L2 == 0:
        return np.abs(z - p)
    t = np.clip(((z - p) * np.conj(d)).real / L2, 0.0, 1.0)
    return np.abs(z - (p + t * d))


def _polyline_distance(z, pts):
    out = np.full(z.shape, np.inf)
    for p, q in zip(pts[:-1], pts[1:]):
        out = np.minimum(out, _seg_point_dist(p, q, z))
    return out


def _arc_polyline(arc: Arc, margin):
    """Vertices of a polyline within margin/4 of the arc (line pieces exactly)."""
    out = [arc.a]
    for seg in arc.segments:
        if isinstance(seg, LineSegment):
            out.append(seg.b)
            continue
        # chord sag r(1 - cos(h/2)) <= margin/4
        step = 2 * math.acos(max(-1.0, 1 - margin / (4 * seg.radius)))
        m = max(4, int(math.ceil(abs(seg.theta1 - seg.theta0) / step)))
        out.extend(seg.point(np.linspace(0.0, 1.0, m + 1)[1:]))
    return np.array(out, dtype=complex)


def _cross(a, b):
    return a.real * b.imag - a.imag * b.real


def _segments_polyline_distance(P, Q, pl, chunk=2048):
    """Exact distance from each segment [P_i, Q_i] to the polyline pl."""
    A, B = pl[None, :-1], pl[None, 1:]
    out = np.empty(P.shape)
    for s in range(0, P.size, chunk):
        p, q = P[s:s + chunk, None], Q[s:s + chunk, None]
        d = np.minimum.reduce([_seg_dist(A, B, p), _seg_dist(A, B, q), _seg_dist(p, q, A), _seg_dist(p, q, B)])
        d1, d2 = _cross(q - p, A - p), _cross(q - p, B - p)
        d3, d4 = _cross(B - A, p - A), _cross(B - A, q - A)
        hit = (d1 * d2 < 0) & (d3 * d4 < 0)
        out[s:s + chunk] = np.where(hit, 0.0, d).min(axis=1)
    return out


def _seg_dist(a, b, z):
    """Broadcast distance from points z to segments [a, b]."""
    d = b - a
    L2 = np.abs(d) ** 2
    t = np.clip(((z - a) * np.conj(d)).real / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    return np.abs(z - (a + t * d))


class _Obstacles:
    """Forbidden regions for routing: disks with margin plus sampled arcs."""

    def __init__(self, d: CircularDomain, avoid, margin):
        self.margin = margin
        self.disks = [(h.center, h.radius + margin) for h in d.holes]
        self.outer = None if d.outer is None else (d.outer.center, d.outer.radius - margin)
        self.polylines = []
        for item in avoid:
            if isinstance(item, Disk):
                self.disks.append((item.center, item.radius + margin))
            elif isinstance(item, CompactSet):
                self.disks.append((item.center, item.radius + margin))
            elif isinstance(item, Arc):
                self.polylines.append(_arc_polyline(item, margin))
            else:
                raise PreconditionViolation(f"cannot avoid {type(item).__name__}")

    def point_free(self, z):
        z = np.asarray(z, dtype=complex)
        ok = np.ones(z.shape, dtype=bool)
        for c, r in self.disks:
            ok &= np.abs(z - c) >= r
        if self.outer is not None:
            ok &= np.abs(z - self.outer[0]) <= self.outer[1]
        for pl in self.polylines:
            ok &= _polyline_distance(np.atleast_1d(z), pl).reshape(z.shape) >= self.margin
        return ok

    def segments_free(self, P, Q):
        """Vectorized clearance test for segments [P_i, Q_i]."""
        P = np.asarray(P, dtype=complex)
        Q = np.asarray(Q, dtype=complex)
        ok = np.ones(P.shape, dtype=bool)
        D = Q - P
        L2 = np.abs(D) ** 2
        for c, r in self.disks:
            t = np.where(L2 > 0, ((c - P) * np.conj(D)).real / np.where(L2 > 0, L2, 1), 0.0)
            t = np.clip(t, 0.0, 1.0)
            ok &= np.abs(P + t * D - c) >= r
        if self.outer is not None:
            c, r = self.outer
            ok &= (np.abs(P - c) <= r) & (np.abs(Q - c) <= r)
        for pl in self.polylines:
            ok &= _segments_polyline_distance(P, Q, pl) >= self.margin
        return ok


def build_arc(d: CircularDomain, start, end, avoid=(), seed: int = 0, margin=ARC_MARGIN,
              grid_size: int = 97) -> Arc:
    """Route a polyline from start to end avoiding holes and ``avoid`` items.

    A straight segment is used when it is clear; otherwise shortest paths on a
    fixed 16-neighbour grid are string-pulled. ``seed`` only enters the tiny
    tie-breaking weights, so identical inputs give identical vertices.
    """
    a, b = complex(start), complex(end)
    if a == b:
        raise PreconditionViolation("arc endpoints must be distinct")
    obs = _Obstacles(d, avoid, margin)
    if obs.segments_free(np.array([a]), np.array([b]))[0]:
        return Arc((LineSegment(a, b),))

    # routing window
    pts = [a, b] + [c for c, _ in obs.disks]
    rad = [0.0, 0.0] + [r for _, r in obs.disks]
    for pl in obs.polylines:
        pts += list(pl[:: max(1, len(pl) // 16)])
        rad += [0.0] * len(pl[:: max(1, len(pl) // 16)])
    pts = np.array(pts)
    rad = np.array(rad)
    lo_x, hi_x = np.min(pts.real - rad), np.max(pts.real + rad)
    lo_y, hi_y = np.min(pts.imag - rad), np.max(pts.imag + rad)
    span = max(hi_x - lo_x, hi_y - lo_y)
    pad = 0.25 * span + 4 * margin
    if obs.outer is not None:
        c, r = obs.outer
        lo_x, hi_x = max(lo_x - pad, c.real - r), min(hi_x + pad, c.real + r)
        lo_y, hi_y = max(lo_y - pad, c.imag - r), min(hi_y + pad, c.imag + r)
    else:
        lo_x, hi_x, lo_y, hi_y = lo_x - pad, hi_x + pad, lo_y - pad, hi_y + pad
    n = grid_size
    xs = np.linspace(lo_x, hi_x, n)
    ys = np.linspace(lo_y, hi_y, n)
    X, Y = np.meshgrid(xs, ys)
    nodes = (X + 1j * Y).ravel()
    free = obs.point_free(nodes)
    # node n*n is start, n*n+1 is end
    allnodes = np.concatenate([nodes, [a, b]])
    offsets = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)]
    I, J = np.meshgrid(np.arange(n), np.arange(n))
    I, J = I.ravel(), J.ravel()
    src, dst = [], []
    for di, dj in offsets:
        I2, J2 = I + di, J + dj
        m = (I2 >= 0) & (I2 < n) & (J2 >= 0) & (J2 < n)
        u = J[m] * n + I[m]
        v = J2[m] * n + I2[m]
        src.append(u)
        dst.append(v)
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    m = free[src] & free[dst]
    src, dst = src[m], dst[m]
    h = max(xs[1] - xs[0], ys[1] - ys[0])
    for k, p in ((n * n, a), (n * n + 1, b)):
        near = np.nonzero(np.abs(nodes - p) <= 2.5 * h)[0]
        src = np.concatenate([src, np.full(near.size, k)])
        dst = np.concatenate([dst, near])
    P, Q = allnodes[src], allnodes[dst]
    ok = obs.segments_free(P, Q)
    src, dst, P, Q = src[ok], dst[ok], P[ok], Q[ok]
    # tie-breaking: prefer larger imaginary part (detours go above), then seed jitter
    rng = np.random.default_rng(seed)
    mid_y = 0.5 * (P.imag + Q.imag)
    bias = 1.0 + 1e-6 * (hi_y - mid_y) / max(hi_y - lo_y, 1e-300)
    bias += 1e-9 * rng.random(bias.size)
    w = np.abs(Q - P) * bias
    N = n * n + 2
    G = coo_matrix((np.concatenate([w, w]), (np.concatenate([src, dst]), np.concatenate([dst, src]))),
                   shape=(N, N)).tocsr()
    dist, pred = dijkstra(G, directed=False, indices=n * n, return_predecessors=True)
    if not np.isfinite(dist[n * n + 1]):
        raise NoPathFound(f"no route from {a} to {b} on the routing grid")
    path = [n * n + 1]
    while path[-1] != n * n:
        path.append(pred[path[-1]])
    verts = allnodes[np.array(path[::-1])]
    verts = _string_pull(verts, obs)
    return Arc.from_vertices(verts)


def _string_pull(verts, obs):
    out = [verts[0]]
    i = 0
    while i < len(verts) - 1:
        cand = np.arange(len(verts) - 1, i, -1)
        ok = obs.segments_free(np.full(cand.size, verts[i]), verts[cand])
        j = int(cand[np.argmax(ok)]) if np.any(ok) else i + 1
        out.append(verts[j])
        i = j
    return out


def default_exhaustion(d: CircularDomain, count: int, marked=(), enlarge=0.2) -> Exhaustion:
    """Concentric disks minus shrinking enlarged holes.

    Plane domains use radii 1..count around the origin; disk domains use
    equally spaced fractions of the outer radius. Radii whose circle would
    meet a hole are moved just outside it, extra radii are inserted so every
    topology change adds exactly one hole, and radii through marked points are
    perturbed by up to 1%.
    """
    if count < 1:
        raise PreconditionViolation("count must be >= 1")
    c0 = d.center
    if d.outer is None:
        radii = [float(j) for j in range(1, count + 1)]
    else:
        radii = [d.outer.radius * j / (count + 1) for j in range(1, count + 1)]
    gap = _hole_gaps(d)

    def clash(r):
        for i, h in enumerate(d.holes):
            dist = abs(h.center - c0)
            reach = h.radius * (1 + enlarge) + gap[i]
            if abs(dist - r) < reach:
                return i
        return None

    fixed = []
    for r in radii:
        for _ in range(len(d.holes) + 1):
            i = clash(r)
            if i is None:
                break
            h = d.holes[i]
            r = abs(h.center - c0) + h.radius * (1 + enlarge) + gap[i]
        fixed.append(r)
    fixed = sorted(set(fixed))
    # insert radii so each step encloses at most one new hole
    dists = sorted((abs(h.center - c0), i) for i, h in enumerate(d.holes))
    out = []
    prev_set = set()
    for r in fixed:
        inside = {i for dist, i in dists if dist + d.holes[i].radius < r}
        new = sorted((abs(d.holes[i].center - c0), i) for i in inside - prev_set)
        for dist, i in new[:-1]:
            h = d.holes[i]
            out.append(dist + h.radius * (1 + enlarge) + gap[i])
        out.append(r)
        prev_set = inside
    radii = sorted(set(out))
    if d.outer is not None and radii[-1] >= d.outer.radius:
        raise PreconditionViolation("exhaustion does not fit inside the outer disk")
    # keep marked points off the boundary circles
    marked = [complex(p) for p in marked]
    adj = []
    for r in radii:
        for f in (0.0, 0.005, -0.005, 0.01, -0.01):
            rr = r * (1 + f)
            if all(abs(abs(p - c0) - rr) > 1e-3 * rr for p in marked) and clash(rr) is None:
                break
        adj.append(rr)
    sets, tags, encl = [], [], []
    prev = None
    for j, r in enumerate(adj):
        # enlargement shrinks with j so that K_j sits inside K_{j+1}
        holes, ids = [], []
        for i, h in enumerate(d.holes):
            if abs(h.center - c0) + h.radius < r:
                holes.append(Disk(h.center, h.radius * (1 + enlarge / (j + 1))))
                ids.append(i)
        k = CompactSet(c0, r, tuple(holes), tuple(ids))
        inside = frozenset(ids)
        if prev is None or inside == prev:
            tags.append("retract")
        elif len(inside - prev) == 1 and prev <= inside:
            tags.append("arc-attach")
        else:
            raise PreconditionViolation("exhaustion step adds more than one hole")
        sets.append(k)
        encl.append(inside)
        prev = inside
    return Exhaustion(tuple(sets), tuple(tags), tuple(encl))


def _hole_gaps(d: CircularDomain):
    """Safety gap around each hole: a fraction of its distance to neighbours."""
    gaps = []
    for i, h in enumerate(d.holes):
        room = h.radius
        for j, g in enumerate(d.holes):
            if j != i:
                room = min(room, abs(g.center - h.center) - g.radius - h.radius)
        if d.outer is not None:
            room = min(room, d.outer.radius - abs(h.center - d.outer.center) - h.radius)
        gaps.append(0.25 * room)
    return gaps


def sunflower(center, radius, n):
    """n quasi-uniform points filling a disk (Vogel spiral)."""
    if n <= 0:
        return np.zeros(0, dtype=complex)
    k = np.arange(1, n + 1)
    r = radius * np.sqrt((k - 0.5) / n)
    return complex(center) + r * np.exp(1j * k * GOLDEN_ANGLE)


def sample_compact(k: CompactSet, n: int):
    """Exactly n points on k: boundary circles plus a filtered sunflower."""
    if n <= 0:
        return np.zeros(0, dtype=complex)
    circ = [k.radius] + [h.radius for h in k.holes]
    nb_total = min(n // 2, int(round(2.5 * math.sqrt(n))))
    per = np.array(circ) / sum(circ) * nb_total
    counts = np.floor(per).astype(int)
    pts = []
    for (cc, r), m in zip([(k.center, k.radius)] + [(h.center, h.radius) for h in k.holes], counts):
        if m > 0:
            th = 2 * np.pi * (np.arange(m) + 0.5) / m
            pts.append(cc + r * np.exp(1j * th))
    boundary = np.concatenate(pts) if pts else np.zeros(0, dtype=complex)
    need = n - boundary.size
    inner_r = k.radius * (1 - 0.5 / max(math.sqrt(n), 1))
    full = math.pi * k.radius**2
    m = max(need, int(need * full / max(k.area, 1e-300)))
    while True:
        cand = sunflower(k.center, inner_r, m)
        keep = cand[k.contains(cand, 1e-12)]
        if keep.size >= need:
            break
        m = int(m * 1.1) + 1
    if keep.size > need:
        idx = np.round(np.linspace(0, keep.size - 1, need)).astype(int)
        keep = keep[idx]
    return np.concatenate([boundary, keep])


def sample_set(s: AdmissibleSet, density: float):
    """Deterministic samples: round(area*density) per compact piece and
    round(length*density) per arc (equally spaced, endpoints included)."""
    if density <= 0:
        raise PreconditionViolation("density must be positive")
    out = []
    for k in s.K:
        out.append(sample_compact(k, int(round(k.area * density))))
    for a in s.arcs:
        out.append(a.sample(max(2, int(round(a.length * density)))))
    return np.concatenate(out) if out else np.zeros(0, dtype=complex)
