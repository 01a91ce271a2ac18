"""Convex polytopes as half-space intersections, with exact face geometry."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

from ..errors import DegenerateBody, EmptyCrystal, UnboundedPolytope
from .bodies import TOL, ConvexBody, orthonormal_frame, sphere_directions

FACE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Face:
    normal: np.ndarray
    offset: float
    area: float
    vertices: np.ndarray  # d=2: two endpoints; d=3: polygon in cyclic order

    def centroid(self):
        return self.vertices.mean(axis=0)

    def to_dict(self):
        return {
            "normal": self.normal.tolist(),
            "offset": self.offset,
            "area": self.area,
            "vertices": self.vertices.tolist(),
        }


def _segment_distance(p, a, b):
    ab = b - a
    den = ab @ ab
    t = np.clip(((p - a) @ ab) / den, 0.0, 1.0) if den > 0 else np.zeros(len(p))
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def face_distance(face: Face, points):
    """Euclidean distance from each point to the closed face."""
    p = np.atleast_2d(np.asarray(points, float))
    V = face.vertices
    if len(V) == 2:
        return _segment_distance(p, V[0], V[1])
    # d=3 planar polygon
    n = face.normal
    h = p @ n - face.offset
    foot = p - h[:, None] * n
    inside = np.ones(len(p), bool)
    k = len(V)
    edge_d = np.full(len(p), np.inf)
    for i in range(k):
        a, b = V[i], V[(i + 1) % k]
        # outward in-plane normal of edge (a, b) for counter-clockwise order
        out = np.cross(b - a, n)
        inside &= (foot - a) @ out <= TOL
        edge_d = np.minimum(edge_d, _segment_distance(p, a, b))
    return np.where(inside, np.abs(h), edge_d)


class ConvexPolytope(ConvexBody):
    """``P = {x : x . v_i <= phi_i}`` with unit normals ``v_i``."""

    kind = "polytope"

    def __init__(self, normals, offsets):
        N = np.atleast_2d(np.asarray(normals, float))
        b = np.asarray(offsets, float).ravel()
        norms = np.linalg.norm(N, axis=1)
        if np.any(norms == 0):
            raise DegenerateBody("zero half-space normal")
        N = N / norms[:, None]
        b = b / norms
        # identical directions: keep the tightest offset
        keep = []
        for i in range(len(N)):
            dup = [j for j in keep if np.allclose(N[i], N[j], atol=1e-12)]
            if dup:
                j = dup[0]
                b[j] = min(b[j], b[i])
            else:
                keep.append(i)
        self.normals = N[keep]
        self.offsets = b[keep]
        self.d = N.shape[1]
        self._check_bounded()
        self._interior, self._inradius = self._chebyshev()
        if self._inradius <= 1e-12:
            raise DegenerateBody("polytope has empty interior")
        self._vertices = None
        self._faces = None

    @classmethod
    def from_points(cls, points):
        pts = np.asarray(points, float)
        try:
            hull = ConvexHull(pts)
        except Exception as exc:
            raise DegenerateBody(f"points span no full-dimensional hull: {exc}") from exc
        eq = hull.equations
        return cls(eq[:, :-1], -eq[:, -1])

    def _check_bounded(self):
        if len(self.normals) < self.d + 1:
            raise UnboundedPolytope("fewer than d+1 half-spaces")
        bounds = [(None, None)] * self.d
        for k in range(self.d):
            for sgn in (1.0, -1.0):
                c = np.zeros(self.d)
                c[k] = -sgn
                res = linprog(c, A_ub=self.normals, b_ub=self.offsets, bounds=bounds, method="highs")
                if res.status == 3:
                    raise UnboundedPolytope("half-space intersection is unbounded")
                if res.status == 2:
                    raise EmptyCrystal("half-space intersection is empty")

    def _chebyshev(self):
        d = self.d
        c = np.zeros(d + 1)
        c[-1] = -1.0
        A = np.hstack([self.normals, np.ones((len(self.normals), 1))])
        res = linprog(c, A_ub=A, b_ub=self.offsets,
                      bounds=[(None, None)] * d + [(0, None)], method="highs")
        if res.status != 0:
            raise EmptyCrystal("half-space intersection is empty")
        return res.x[:d], res.x[d]

    # ConvexBody -------------------------------------------------------
    def contains(self, points, scale=1.0, tol=TOL):
        p = np.asarray(points, float)
        return np.all(p @ self.normals.T <= scale * self.offsets + tol, axis=-1)

    def support(self, u):
        u = np.atleast_2d(np.asarray(u, float))
        return (u @ self.vertices.T).max(axis=1)

    def interior_point(self):
        return self._interior.copy()

    def radial_boundary(self, directions):
        u = np.atleast_2d(np.asarray(directions, float))
        u = u / np.linalg.norm(u, axis=1, keepdims=True)
        c = self._interior
        slack = self.offsets - self.normals @ c
        rate = u @ self.normals.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(rate > 1e-15, slack / rate, np.inf).min(axis=1)
        return c + t[:, None] * u

    def bounds(self):
        V = self.vertices
        return V.min(axis=0), V.max(axis=0)

    def circumradius(self):
        return float(np.linalg.norm(self.vertices, axis=1).max())

    def distance(self, points):
        """Euclidean distance to the polytope (0 inside)."""
        p = np.atleast_2d(np.asarray(points, float))
        inside = self.contains(p, tol=0.0)
        out = np.zeros(len(p))
        if (~inside).any():
            q = p[~inside]
            out[~inside] = np.min([face_distance(f, q) for f in self.faces], axis=0)
        return out

    # geometry ---------------------------------------------------------
    @property
    def vertices(self):
        if self._vertices is None:
            hs = np.hstack([self.normals, -self.offsets[:, None]])
            V = HalfspaceIntersection(hs, self._interior).intersections
            scale = max(1.0, np.abs(V).max())
            key = np.round(V / (scale * 1e-10)).astype(np.int64)
            _, first = np.unique(key, axis=0, return_index=True)
            self._vertices = V[np.sort(first)]
        return self._vertices

    @property
    def faces(self):
        if self._faces is None:
            self._faces = face_decomposition(self)
        return self._faces

    def surface_area(self):
        return float(sum(f.area for f in self.faces))

    def volume(self):
        return float(ConvexHull(self.vertices).volume)

    def to_dict(self):
        return {
            "kind": "polytope",
            "d": self.d,
            "halfspaces": [
                {"normal": n.tolist(), "offset": float(o)}
                for n, o in zip(self.normals, self.offsets)
            ],
            "faces": [f.to_dict() for f in self.faces],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        hs = doc["halfspaces"]
        return cls([h["normal"] for h in hs], [h["offset"] for h in hs])


def _is_axis_box(P):
    return np.all(np.isclose(np.abs(P.normals).max(axis=1), 1.0, atol=1e-12))


def face_decomposition(P: ConvexPolytope):
    """Faces with positive (d-1)-measure, outward unit normals and exact areas."""
    d = P.d
    if d >= 4:
        if not _is_axis_box(P) or len(P.normals) != 2 * d:
            raise ValueError("face geometry for d >= 4 is limited to axis-aligned boxes")
        lo, hi = P.bounds()
        faces = []
        for n, off in zip(P.normals, P.offsets):
            k = int(np.argmax(np.abs(n)))
            area = float(np.prod(np.delete(hi - lo, k)))
            corners = _box_face_corners(lo, hi, k, off * n[k])
            faces.append(Face(n.copy(), float(off), area, corners))
        return faces

    V = P.vertices
    scale = max(1.0, np.abs(V).max())
    faces = []
    for n, off in zip(P.normals, P.offsets):
        on = np.abs(V @ n - off) <= FACE_TOL * scale
        W = V[on]
        if len(W) < d:
            continue
        if d == 2:
            t = W @ np.array([-n[1], n[0]])
            a, b = W[np.argmin(t)], W[np.argmax(t)]
            area = float(np.linalg.norm(b - a))
            verts = np.array([a, b])
        else:
            U = orthonormal_frame(n)
            c = W.mean(axis=0)
            s = (W - c) @ U.T
            order = np.argsort(np.arctan2(s[:, 1], s[:, 0]), kind="stable")
            s = s[order]
            verts = W[order]
            x, y = s[:, 0], s[:, 1]
            area = float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
        if area > FACE_TOL * scale ** (d - 1):
            faces.append(Face(n.copy(), float(off), area, verts))
    return faces


def _box_face_corners(lo, hi, k, value):
    d = len(lo)
    others = [j for j in range(d) if j != k]
    out = []
    for bits in np.ndindex(*([2] * (d - 1))):
        p = np.empty(d)
        p[k] = value
        for j, bit in zip(others, bits):
            p[j] = hi[j] if bit else lo[j]
        out.append(p)
    return np.array(out)


def outer_polytope(A: ConvexBody, m: int, directions=None, check_points=1000):
    """Circumscribed polytope from ``m`` tangent half-spaces ``x . u <= h_A(u)``."""
    if m < A.d + 1:
        raise ValueError("need m >= d + 1 directions")
    U = sphere_directions(A.d, m) if directions is None else np.asarray(directions, float)
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    Q = ConvexPolytope(U, A.support(U))
    pts = A.sample_points(check_points)
    if not Q.contains(pts).all():
        raise AssertionError("outer polytope misses sampled points of A")
    return Q


def inner_polytope(A: ConvexBody, m: int, directions=None):
    """Inscribed polytope: hull of ``m`` radial boundary points of ``A``."""
    if m < A.d + 1:
        raise ValueError("need m >= d + 1 points")
    U = sphere_directions(A.d, m) if directions is None else np.asarray(directions, float)
    pts = A.radial_boundary(U)
    P = ConvexPolytope.from_points(pts)
    if not A.contains(P.vertices, tol=1e-9).all():
        raise AssertionError("inner polytope vertex outside A")
    return P


def wulff_crystal(nu, directions):
    """Outer approximation ``{x : x . y <= nu(y)}`` of the Wulff crystal.

    ``nu`` is a callable on unit vectors or a sequence of values aligned
    with ``directions``.
    """
    Y = np.atleast_2d(np.asarray(directions, float))
    Y = Y / np.linalg.norm(Y, axis=1, keepdims=True)
    if callable(nu):
        vals = np.array([float(nu(y)) for y in Y])
    else:
        vals = np.asarray(nu, float)
        if vals.shape != (len(Y),):
            raise ValueError("need one nu value per direction")
    if np.any(vals <= 0):
        raise ValueError("nu must be positive on every supplied direction")
    return ConvexPolytope(Y, vals)
