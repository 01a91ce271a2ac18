"""Compact convex bodies: balls, axis boxes (polytopes live in ``polytope``)."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DegenerateBody

# absolute tolerance for every floating-point geometric predicate
TOL = 1e-9


class ConvexBody:
    """Common surface: membership at a scale, support function, radial map."""

    kind = "body"
    d: int

    def contains(self, points, scale=1.0, tol=TOL):
        raise NotImplementedError

    def support(self, u):
        """``max_{x in A} x . u`` for each row of ``u``."""
        raise NotImplementedError

    def interior_point(self):
        raise NotImplementedError

    def radial_boundary(self, directions):
        """Boundary points ``c + t u`` along rays from :meth:`interior_point`."""
        raise NotImplementedError

    def bounds(self):
        """(lo, hi) corners of the axis bounding box."""
        raise NotImplementedError

    def circumradius(self):
        """Radius of the smallest origin-centred ball containing the body."""
        raise NotImplementedError

    def lattice_bounds(self, scale):
        lo, hi = self.bounds()
        return (np.floor(np.asarray(lo) * scale - TOL).astype(np.int64),
                np.ceil(np.asarray(hi) * scale + TOL).astype(np.int64))

    def sample_points(self, k, seed=0):
        """``k`` uniform points of the body by rejection from its bounding box."""
        rng = np.random.default_rng(seed)
        lo, hi = (np.asarray(b, float) for b in self.bounds())
        out = []
        got = 0
        while got < k:
            pts = lo + (hi - lo) * rng.random((4 * k, self.d))
            pts = pts[self.contains(pts, tol=0.0)]
            out.append(pts)
            got += len(pts)
        return np.concatenate(out)[:k]

    def to_dict(self):
        raise NotImplementedError


class Ball(ConvexBody):
    kind = "ball"

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.d = len(self.center)
        if not self.radius > 0:
            raise DegenerateBody("ball radius must be positive")

    def contains(self, points, scale=1.0, tol=TOL):
        p = np.asarray(points, float)
        return np.linalg.norm(p - scale * self.center, axis=-1) <= scale * self.radius + tol

    def support(self, u):
        u = np.atleast_2d(np.asarray(u, float))
        return u @ self.center + self.radius * np.linalg.norm(u, axis=1)

    def interior_point(self):
        return self.center.copy()

    def radial_boundary(self, directions):
        u = np.atleast_2d(np.asarray(directions, float))
        u = u / np.linalg.norm(u, axis=1, keepdims=True)
        return self.center + self.radius * u

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def circumradius(self):
        return float(np.linalg.norm(self.center) + self.radius)

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


class Box(ConvexBody):
    kind = "box"

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.d = len(self.lo)
        if self.lo.shape != self.hi.shape or np.any(self.hi - self.lo <= 0):
            raise DegenerateBody("box needs lo < hi on every axis")

    def contains(self, points, scale=1.0, tol=TOL):
        p = np.asarray(points, float)
        return np.all((p >= scale * self.lo - tol) & (p <= scale * self.hi + tol), axis=-1)

    def support(self, u):
        u = np.atleast_2d(np.asarray(u, float))
        return np.maximum(u * self.lo, u * self.hi).sum(axis=1)

    def interior_point(self):
        return 0.5 * (self.lo + self.hi)

    def radial_boundary(self, directions):
        u = np.atleast_2d(np.asarray(directions, float))
        u = u / np.linalg.norm(u, axis=1, keepdims=True)
        c = self.interior_point()
        half = 0.5 * (self.hi - self.lo)
        with np.errstate(divide="ignore"):
            t = np.where(np.abs(u) > 0, half / np.abs(u), np.inf).min(axis=1)
        return c + t[:, None] * u

    def bounds(self):
        return self.lo.copy(), self.hi.copy()

    def circumradius(self):
        far = np.maximum(np.abs(self.lo), np.abs(self.hi))
        return float(np.linalg.norm(far))

    def as_polytope(self):
        from .polytope import ConvexPolytope

        eye = np.eye(self.d)
        return ConvexPolytope(np.vstack([eye, -eye]), np.concatenate([self.hi, -self.lo]))

    def to_dict(self):
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


def sphere_directions(d, m):
    """``m`` unit directions: equally spaced angles (d=2) or a Fibonacci grid (d=3)."""
    if d == 2:
        a = 2 * np.pi * np.arange(m) / m
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    if d == 3:
        i = np.arange(m) + 0.5
        z = 1 - 2 * i / m
        r = np.sqrt(1 - z * z)
        phi = np.pi * (1 + math.sqrt(5)) * i
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    raise ValueError("direction grids exist for d in {2, 3} only")


def orthonormal_frame(v):
    """Rows spanning the hyperplane normal to unit ``v``; axis-aligned when ``v`` is."""
    v = np.asarray(v, float)
    d = len(v)
    basis = []
    for k in np.argsort(np.abs(v), kind="stable"):
        a = np.zeros(d)
        a[k] = 1.0
        a -= (a @ v) * v
        for b in basis:
            a -= (a @ b) * b
        nrm = np.linalg.norm(a)
        if nrm > 1e-8:
            basis.append(a / nrm)
        if len(basis) == d - 1:
            break
    U = np.array(basis)
    if d == 3:
        # right-handed (u1, u2, v)
        U[1] = np.cross(v, U[0])
    return U


def body_from_dict(spec):
    from .polytope import ConvexPolytope

    kind = spec.get("kind")
    if kind == "ball":
        return Ball(spec["center"], spec["radius"])
    if kind == "box":
        return Box(spec["lo"], spec["hi"])
    if kind == "polytope":
        if "vertices" in spec:
            return ConvexPolytope.from_points(spec["vertices"])
        return ConvexPolytope(spec["normals"], spec["offsets"])
    raise ValueError(f"unknown body kind {kind!r}")
