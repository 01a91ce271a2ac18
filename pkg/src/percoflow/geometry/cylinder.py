"""Cylinders over flat bases and the lattice sets the flow functionals use.

All discretizations work on the integer lattice with the body dilated by
``n``; a lattice point on the boundary of a closed set counts as inside.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from ..environment import LatticeRegion
from ..errors import DegenerateCylinder, EmptyDiscretization
from .bodies import TOL, ConvexBody, orthonormal_frame
from .polytope import Face


class Cylinder:
    """``cyl(A, h) = {x + t v : x in A, t in [-h, h]}`` for a flat convex base ``A``.

    The base is stored in local coordinates ``s = U (x - origin)`` as the
    polytope ``{s : L s <= c}``; ``U`` is an orthonormal frame of ``v``'s
    complement.
    """

    def __init__(self, origin, normal, frame, local_normals, local_offsets,
                 height, base_vertices, area):
        self.origin = np.asarray(origin, float)
        self.normal = np.asarray(normal, float)
        self.frame = np.asarray(frame, float)
        self.local_normals = np.asarray(local_normals, float)
        self.local_offsets = np.asarray(local_offsets, float)
        self.height = float(height)
        self.base_vertices = np.asarray(base_vertices, float)
        self.area = float(area)
        self.d = len(self.origin)
        if abs(np.linalg.norm(self.normal) - 1) > 1e-12:
            raise ValueError("cylinder direction must be a unit vector")
        if not self.height > 0:
            raise DegenerateCylinder("cylinder height must be positive")
        if not self.area > 0:
            raise DegenerateCylinder("cylinder base has zero (d-1)-area")

    @classmethod
    def hyperrectangle(cls, center, normal, sides, height, frame=None):
        """Base is the box ``center + sum_j s_j u_j`` with ``|s_j| <= sides_j / 2``."""
        v = np.asarray(normal, float)
        v = v / np.linalg.norm(v)
        U = orthonormal_frame(v) if frame is None else np.asarray(frame, float)
        sides = np.broadcast_to(np.asarray(sides, float), (len(v) - 1,))
        half = sides / 2
        eye = np.eye(len(v) - 1)
        L = np.vstack([eye, -eye])
        c = np.concatenate([half, half])
        corners = [np.asarray(center, float) + (np.array(sgn) * half) @ U
                   for sgn in itertools.product((-1, 1), repeat=len(v) - 1)]
        return cls(center, v, U, L, c, height, np.array(corners), float(np.prod(sides)))

    @classmethod
    def from_face(cls, face: Face, height, shift=0.0):
        """Cylinder on ``face + shift * normal`` (faces of 2- and 3-polytopes)."""
        v = np.asarray(face.normal, float)
        d = len(v)
        U = orthonormal_frame(v)
        verts = face.vertices + shift * v
        o = verts.mean(axis=0)
        s = (verts - o) @ U.T
        if d == 2:
            L = np.array([[1.0], [-1.0]])
            c = np.array([s.max(), -s.min()])
        else:
            eq = ConvexHull(s).equations
            L, c = eq[:, :-1], -eq[:, -1]
        return cls(o, v, U, L, c, height, verts, face.area)

    def local(self, points, scale=1.0):
        q = np.asarray(points, float) - scale * self.origin
        return q @ self.normal, q @ self.frame.T

    def in_base(self, s, scale=1.0, tol=TOL):
        return np.all(s @ self.local_normals.T <= scale * self.local_offsets + tol, axis=-1)

    def contains(self, points, scale=1.0, tol=TOL):
        t, s = self.local(points, scale)
        return (np.abs(t) <= scale * self.height + tol) & self.in_base(s, scale, tol)

    def corners(self):
        h = self.height * self.normal
        return np.vstack([self.base_vertices + h, self.base_vertices - h])

    def lattice_region(self, scale):
        C = self.corners() * scale
        lo = np.floor(C.min(axis=0) - TOL).astype(np.int64)
        hi = np.ceil(C.max(axis=0) + TOL).astype(np.int64)
        return LatticeRegion(tuple(lo), tuple(hi))

    def to_dict(self):
        return {
            "origin": self.origin.tolist(),
            "normal": self.normal.tolist(),
            "height": self.height,
            "area": self.area,
            "base_vertices": self.base_vertices.tolist(),
        }


@dataclass(frozen=True, eq=False)
class LatticeSets:
    """Source/sink vertex sets of a lattice subgraph of ``region``.

    ``inside`` marks the subgraph's vertices; ``edges`` marks region edges
    with both endpoints inside.  All masks index the region densely.
    """

    region: LatticeRegion
    inside: np.ndarray
    source: np.ndarray
    sink: np.ndarray
    edges: np.ndarray

    def points(self, mask):
        return self.region.vertex_coords()[mask]

    def source_points(self):
        return self.points(self.source)

    def sink_points(self):
        return self.points(self.sink)

    def interior_edges(self):
        """(base coordinates, axis) of every subgraph edge."""
        base, axis = self.region.edge_base()
        return base[self.edges], axis[self.edges]


def _neighbor_steps(d):
    steps = []
    for k in range(d):
        for sgn in (1, -1):
            e = np.zeros(d, np.int64)
            e[k] = sgn
            steps.append(e)
    return steps


def _segment_hits_cap(cyl: Cylinder, x, y, level, scale):
    """Does segment ``[x, y]`` meet the cap ``{t = level} x base`` (scaled)?"""
    tx, _ = cyl.local(x, scale)
    ty, _ = cyl.local(y, scale)
    den = ty - tx
    on_plane = np.abs(tx - level) <= TOL
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lam = (level - tx) / den
    crosses = (np.abs(den) > 1e-12) & (lam >= -TOL) & (lam <= 1 + TOL)
    lam = np.clip(np.nan_to_num(lam), 0.0, 1.0)
    p = x + lam[:, None] * (y - x)
    _, sp = cyl.local(p, scale)
    hit_cross = crosses & cyl.in_base(sp, scale)
    _, sx = cyl.local(x, scale)
    hit_plane = on_plane & cyl.in_base(sx, scale)
    return hit_cross | hit_plane


def discretize_cylinder(cyl: Cylinder, n, mode="top_bottom", region=None):
    """Lattice versions of the cylinder's terminal sets at scale ``n``.

    ``top_bottom``: source = top ``T_n``, sink = bottom ``B_n`` (vertices of
    ``n cyl`` with an edge leaving the cylinder through ``n (A +- h v)``).
    ``half_boundary``: source = ``C'_1`` (the ``+v`` half), sink = ``C'_2``;
    vertices strictly on one side of the base with a neighbour outside.
    """
    if mode not in ("top_bottom", "half_boundary"):
        raise ValueError(f"unknown mode {mode!r}")
    region = cyl.lattice_region(n) if region is None else region
    X = region.vertex_coords()
    inside = cyl.contains(X, n)
    tails, heads = region.edge_endpoints()
    edges = inside[tails] & inside[heads]

    idx = np.flatnonzero(inside)
    P = X[idx]
    src = np.zeros(region.n_vertices, bool)
    snk = np.zeros(region.n_vertices, bool)
    H = n * cyl.height
    if mode == "top_bottom":
        top = np.zeros(len(P), bool)
        bot = np.zeros(len(P), bool)
        for e in _neighbor_steps(region.d):
            Y = P + e
            out = ~cyl.contains(Y, n)
            if not out.any():
                continue
            top[out] |= _segment_hits_cap(cyl, P[out], Y[out], H, n)
            bot[out] |= _segment_hits_cap(cyl, P[out], Y[out], -H, n)
        src[idx[top]] = True
        snk[idx[bot]] = True
    else:
        t, _ = cyl.local(P, n)
        boundary = np.zeros(len(P), bool)
        for e in _neighbor_steps(region.d):
            boundary |= ~cyl.contains(P + e, n)
        src[idx[boundary & (t > TOL)]] = True
        snk[idx[boundary & (t < -TOL)]] = True
    if not src.any() or not snk.any():
        raise DegenerateCylinder(f"{mode} discretization at n={n} has an empty terminal set")
    if (src & snk).any():
        raise DegenerateCylinder("terminal sets intersect; increase n or h")
    return LatticeSets(region, inside, src, snk, edges)


def discretize_body(A: ConvexBody, n, region=None):
    """Vertices of ``nA`` inside ``region`` (default: ``nA``'s bounding box)."""
    if region is None:
        lo, hi = A.lattice_bounds(n)
        hi = np.maximum(hi, lo + 1)
        region = LatticeRegion(tuple(lo), tuple(hi))
    mask = A.contains(region.vertex_coords(), n)
    if not mask.any():
        raise EmptyDiscretization(f"nA contains no lattice point at n={n}")
    return region, mask


def edge_boundary(A: ConvexBody, n):
    """``∂_e(nA)`` as (inner endpoint coords, outer endpoint coords) arrays."""
    region, mask = discretize_body(A, n)
    P = region.vertex_coords()[mask]
    inner, outer = [], []
    for e in _neighbor_steps(region.d):
        Y = P + e
        out = ~A.contains(Y, n)
        inner.append(P[out])
        outer.append(Y[out])
    return np.concatenate(inner), np.concatenate(outer)


def edge_keys(x, y):
    """Canonical (base, axis) of lattice edges between neighbouring points."""
    x = np.asarray(x, np.int64)
    y = np.asarray(y, np.int64)
    base = np.minimum(x, y)
    axis = np.argmax(np.abs(y - x), axis=1)
    return base, axis
