"""Flow functionals on random lattice environments.

* ``phi_cylinder`` / ``tau_cylinder``: top-to-bottom and half-to-half flows
  through a cylinder.
* ``phi_to_infinity``: min-cut from ``nA`` to infinity, certified by a
  growing sequence of truncation boxes on one coupled environment.
* ``glued_upper_bound``: a separating edge set for a polytope assembled from
  per-face cylinder cuts plus bridge edges around shared sides.
* ``hypersquare_bound``: the analogous assembly for one flat face tiled by
  small squares (d=2).

Cuts are returned as :class:`EdgeSet`, keyed by lattice coordinates so that
cuts from different regions of the same environment can be merged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .environment import CapacityLaw, Environment, LatticeRegion, sample_environment
from .errors import DegenerateCylinder, NoStabilization, NotSeparating
from .geometry import (
    TOL,
    ConvexBody,
    ConvexPolytope,
    Cylinder,
    LatticeSets,
    discretize_body,
    discretize_cylinder,
)
from .maxflow import FlowProblem, max_flow, min_cut

SCHEDULE_STEPS = 7


@dataclass(frozen=True, eq=False)
class EdgeSet:
    """Lattice edges ``<x, x + e_axis>`` with their capacities."""

    base: np.ndarray
    axis: np.ndarray
    capacities: np.ndarray

    @classmethod
    def empty(cls, d):
        return cls(np.zeros((0, d), np.int64), np.zeros(0, np.int64), np.zeros(0))

    @classmethod
    def from_region(cls, region: LatticeRegion, env: Environment, mask):
        base, axis = region.edge_base()
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        return cls(base[idx], axis[idx], env.on(region).capacities[idx])

    @property
    def capacity(self):
        return math.fsum(self.capacities.tolist())

    @property
    def cardinality(self):
        return len(self.axis)

    def keys(self):
        return np.hstack([self.base, self.axis[:, None]])

    def key_set(self):
        return set(map(tuple, self.keys().tolist()))

    def union(self, *others):
        parts = (self,) + others
        keys = np.vstack([p.keys() for p in parts])
        caps = np.concatenate([p.capacities for p in parts])
        if not len(keys):
            return EdgeSet.empty(self.base.shape[1])
        uniq, first = np.unique(keys, axis=0, return_index=True)
        return EdgeSet(uniq[:, :-1], uniq[:, -1], caps[first])

    def mask_in(self, region: LatticeRegion):
        """Boolean mask over ``region``'s edges (edges outside are ignored)."""
        out = np.zeros(region.n_edges, bool)
        if not self.cardinality:
            return out
        tip = self.base.copy()
        tip[np.arange(len(tip)), self.axis] += 1
        ok = region.contains_points(self.base) & region.contains_points(tip)
        out[region.edge_index(self.base[ok], self.axis[ok])] = True
        return out


def _lattice_problem(region, env, edge_mask, src_mask, snk_mask):
    tails, heads = region.edge_endpoints()
    eidx = np.flatnonzero(edge_mask)
    caps = env.on(region).capacities[eidx]
    prob = FlowProblem(region.n_vertices, tails[eidx], heads[eidx], caps,
                       np.flatnonzero(src_mask), np.flatnonzero(snk_mask))
    return prob, eidx


def _solve(region, env, edge_mask, src_mask, snk_mask):
    prob, eidx = _lattice_problem(region, env, edge_mask, src_mask, snk_mask)
    res = max_flow(prob)
    cut = min_cut(prob, res)
    base, axis = region.edge_base()
    ids = eidx[cut.edges]
    caps = prob.capacities[cut.edges]
    # exactly rounded, so equal cuts give bit-equal values on any region
    return math.fsum(caps.tolist()), EdgeSet(base[ids], axis[ids], caps)


# -- cylinders ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CylinderFlow:
    value: float
    cut: EdgeSet
    sets: LatticeSets
    mode: str


def cylinder_flow(C: Cylinder, n, env: Environment, mode="top_bottom") -> CylinderFlow:
    sets = discretize_cylinder(C, n, mode)
    value, cut = _solve(sets.region, env, sets.edges, sets.source, sets.sink)
    return CylinderFlow(value, cut, sets, mode)


def phi_cylinder(C: Cylinder, n, env: Environment) -> float:
    """Max flow from the top ``T_n`` to the bottom ``B_n`` inside ``n cyl``."""
    return cylinder_flow(C, n, env, "top_bottom").value


def tau_cylinder(C: Cylinder, n, env: Environment) -> float:
    """Max flow between the two half lateral boundaries ``C'_1``, ``C'_2``."""
    return cylinder_flow(C, n, env, "half_boundary").value


# -- flow to infinity ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TruncatedCut:
    radius: float
    half_width: int
    value: float
    cut: EdgeSet
    touches_shell: bool


@dataclass(frozen=True, eq=False)
class FlowToInfinityResult:
    value: float
    cutset: EdgeSet
    radius: float
    half_width: int
    trace: tuple  # ((R, value), ...)
    n: int
    seed: int = 0
    replica: int = 0

    def to_record(self):
        return {
            "quantity": "phi_to_infinity",
            "n": self.n,
            "seed": self.seed,
            "replica": self.replica,
            "value": self.value,
            "cutset_size": self.cutset.cardinality,
            "truncation_radius": self.radius,
            "half_width": self.half_width,
            "trace": [list(t) for t in self.trace],
        }

    def to_json(self):
        return json.dumps(self.to_record(), sort_keys=True)


def truncation_schedule(A: ConvexBody, n, steps=SCHEDULE_STEPS):
    """``(R_k, half_width_k)`` with ``R_k = rho (1 + 2^k / 4)``.

    Half widths are floored to the lattice but forced to strictly increase
    and to clear ``nA`` by at least one site, so tiny bodies still get a
    usable box.
    """
    rho = A.circumradius()
    floor_w = math.ceil(rho * n + TOL) + 1
    out, prev = [], 0
    for k in range(steps):
        R = rho * (1 + 2 ** k / 4)
        w = max(int(math.floor(R * n + TOL)), floor_w + k, prev + 1)
        out.append((R, w))
        prev = w
    return out


def truncated_min_cut(A: ConvexBody, n, env: Environment, half_width, radius=float("nan")):
    """Min cut from ``nA`` to the shell of the cube ``[-w, w]^d``."""
    region = LatticeRegion.cube(A.d, int(half_width))
    _, src = discretize_body(A, n, region)
    shell = region.shell_mask()
    if (src & shell).any():
        raise ValueError("nA touches the truncation box; use a larger half width")
    edges = np.ones(region.n_edges, bool)
    value, cut = _solve(region, env, edges, src, shell)
    tip = cut.base.copy()
    tip[np.arange(len(tip)), cut.axis] += 1
    lo, hi = np.array(region.lo), np.array(region.hi)
    touch = bool(np.any((cut.base == lo) | (tip == hi)))
    return TruncatedCut(radius, int(half_width), value, cut, touch)


def phi_to_infinity(A: ConvexBody, n, law: CapacityLaw = None, seed=0, replica=0,
                    env: Environment = None, steps=SCHEDULE_STEPS) -> FlowToInfinityResult:
    """Certified ``mincut_n(A, infinity)``.

    Walks the truncation schedule on one coupled environment and stops at
    the first box whose value equals the previous box's value exactly and
    whose cut avoids the box shell.  ``env`` (any region) takes precedence
    over ``law``/``seed``; missing capacities are drawn from the same
    counter-based streams.
    """
    if env is None:
        if law is None:
            raise ValueError("pass either env or law")
        env = sample_environment(LatticeRegion.cube(A.d, 1), law, seed, replica)
    trace, prev = [], None
    for R, w in truncation_schedule(A, n, steps):
        tc = truncated_min_cut(A, n, env, w, R)
        trace.append((R, tc.value))
        if prev is not None and tc.value == prev and not tc.touches_shell:
            return FlowToInfinityResult(tc.value, tc.cut, R, w, tuple(trace), int(n),
                                        env.master_seed, env.replica)
        prev = tc.value
    raise NoStabilization(f"min cut did not stabilize within {steps} truncation steps",
                          trace=tuple(trace))


# -- separation checks --------------------------------------------------------

def escape_path(region: LatticeRegion, removed: np.ndarray, src_mask, target_mask):
    """A vertex path from the source set to the target set avoiding removed
    edges, or ``None`` when the removed edges separate them."""
    tails, heads = region.edge_endpoints()
    keep = ~removed
    nv = region.n_vertices
    super_src = nv
    src = np.flatnonzero(src_mask)
    rows = np.concatenate([tails[keep], heads[keep], np.full(len(src), super_src)])
    cols = np.concatenate([heads[keep], tails[keep], src])
    g = sparse.csr_matrix((np.ones(len(rows), np.int8), (rows, cols)), shape=(nv + 1, nv + 1))
    order, pred = csgraph.breadth_first_order(g, super_src, directed=True,
                                              return_predecessors=True)
    reached = np.zeros(nv + 1, bool)
    reached[order] = True
    hits = np.flatnonzero(reached[:nv] & target_mask)
    if not len(hits):
        return None
    path, v = [], int(hits[0])
    while v != super_src and v >= 0:
        path.append(v)
        v = int(pred[v])
    coords = region.vertex_coords()[np.array(path[::-1])]
    return [tuple(c) for c in coords.tolist()]


# -- gluing for a polytope ----------------------------------------------------

def _segment_min(f, a, b, iters=60):
    """Minimum over ``[a, b]`` of a convex function, per row (golden section)."""
    g = (math.sqrt(5) - 1) / 2
    lo = np.zeros(len(a))
    hi = np.ones(len(a))

    def at(t):
        return f(a + t[:, None] * (b - a))

    for _ in range(iters):
        m1 = hi - g * (hi - lo)
        m2 = lo + g * (hi - lo)
        left = at(m1) <= at(m2)
        hi = np.where(left, m2, hi)
        lo = np.where(left, lo, m1)
    return np.minimum(np.minimum(at(lo), at(hi)), np.minimum(f(a), f(b)))


def _hull_distance(points, verts):
    """Distance to the convex hull of one or two points."""
    if len(verts) == 1:
        return np.linalg.norm(points - verts[0], axis=1)
    a, b = verts[0], verts[1]
    ab = b - a
    t = np.clip(((points - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def shared_sides(P: ConvexPolytope, tol=1e-9):
    """``{(i, j): ridge vertices}`` for faces meeting in a (d-2)-face."""
    faces = P.faces
    out = {}
    for i in range(len(faces)):
        for j in range(i + 1, len(faces)):
            Vi, Vj = faces[i].vertices, faces[j].vertices
            D = np.linalg.norm(Vi[:, None, :] - Vj[None, :, :], axis=2)
            common = Vi[np.any(D <= tol * max(1.0, np.abs(Vi).max()), axis=1)]
            if len(common) >= P.d - 1:
                out[(i, j)] = common[:2]
    return out


@dataclass(frozen=True, eq=False)
class GluedCutset:
    face_cuts: tuple  # E'_i
    face_values: tuple  # tau_n(F_i + eps v_i, eps)
    bridges: dict  # (i, j) -> M_{i,j}
    shell: EdgeSet  # E_0 (empty for the polytope assembly)
    union: EdgeSet
    capacity: float
    eps: float
    zeta: float
    verified_half_width: int

    @property
    def parts_capacity(self):
        return (sum(c.capacity for c in self.face_cuts)
                + sum(b.capacity for b in self.bridges.values()) + self.shell.capacity)

    def to_record(self):
        return {
            "quantity": "glued_upper_bound",
            "capacity": self.capacity,
            "parts_capacity": self.parts_capacity,
            "face_values": list(self.face_values),
            "bridge_sizes": {f"{i}-{j}": b.cardinality for (i, j), b in self.bridges.items()},
            "union_size": self.union.cardinality,
            "eps": self.eps,
            "zeta": self.zeta,
            "verified_half_width": self.verified_half_width,
        }


def _check_disjoint_interiors(cyls, n):
    lo = np.min([c.lattice_region(n).lo for c in cyls], axis=0)
    hi = np.max([c.lattice_region(n).hi for c in cyls], axis=0)
    X = LatticeRegion(tuple(lo), tuple(hi)).vertex_coords()
    count = np.zeros(len(X), np.int64)
    for c in cyls:
        count += c.contains(X, n, tol=-TOL)
    if (count > 1).any():
        raise DegenerateCylinder("face cylinders overlap; decrease eps")


def bridge_edges(P: ConvexPolytope, ridge, n, eps, zeta, env: Environment) -> EdgeSet:
    """Edges lying in ``V(ridge, eps + zeta) minus V(P, eps - zeta)`` at scale n.

    Both neighbourhoods are open.  Distance to a convex set is convex along
    a segment, so the outer test needs only the endpoints and the inner test
    a one-dimensional convex minimisation.
    """
    r_out = (eps + zeta) * n
    r_in = (eps - zeta) * n
    R = ridge * n
    lo = np.floor(R.min(axis=0) - r_out).astype(np.int64) - 1
    hi = np.ceil(R.max(axis=0) + r_out).astype(np.int64) + 1
    region = LatticeRegion(tuple(lo), tuple(hi))
    tails, heads = region.edge_endpoints()
    X = region.vertex_coords().astype(float)
    near = _hull_distance(X, R) < r_out - TOL
    cand = np.flatnonzero(near[tails] & near[heads])
    far_v = P.distance(X / n) * n >= r_in - TOL
    cand = cand[far_v[tails[cand]] & far_v[heads[cand]]]
    if len(cand):
        dmin = _segment_min(lambda p: P.distance(p / n) * n, X[tails[cand]], X[heads[cand]])
        cand = cand[dmin >= r_in - TOL]
    return EdgeSet.from_region(region, env, cand)


def glued_upper_bound(P: ConvexPolytope, n, env: Environment, eps) -> GluedCutset:
    """Separating set ``M + sum_i E'_i`` from ``nP`` to infinity.

    ``E'_i`` is the canonical min cut of ``tau_n(F_i + eps v_i, eps)`` and
    ``M`` collects the bridge edges around every pair of faces sharing a
    side, with shell width ``zeta = 4d/n``.  The union is checked by search
    in a box strictly containing it.
    """
    d = P.d
    if d not in (2, 3):
        raise ValueError("gluing is implemented for d in {2, 3}")
    zeta = 4 * d / n
    if not eps > zeta:
        raise ValueError(f"eps must exceed zeta = 4d/n = {zeta:g} so the bridges have an inner radius")
    cyls = [Cylinder.from_face(F, eps, shift=eps) for F in P.faces]
    _check_disjoint_interiors(cyls, n)
    flows = [cylinder_flow(C, n, env, "half_boundary") for C in cyls]
    bridges = {ij: bridge_edges(P, ridge, n, eps, zeta, env)
               for ij, ridge in shared_sides(P).items()}
    parts = [f.cut for f in flows] + list(bridges.values())
    union = parts[0].union(*parts[1:])

    w = int(math.ceil((P.circumradius() + 2 * eps + zeta) * n)) + 2
    region = LatticeRegion.cube(d, w)
    _, src = discretize_body(P, n, region)
    witness = escape_path(region, union.mask_in(region), src, region.shell_mask())
    if witness is not None:
        raise NotSeparating("glued edge set leaves a path from nP to infinity", witness=witness)
    return GluedCutset(
        tuple(f.cut for f in flows), tuple(f.value for f in flows), bridges,
        EdgeSet.empty(d), union, union.capacity, float(eps), float(zeta), w,
    )


# -- hypersquare tiling of one face (d = 2) -----------------------------------

@dataclass(frozen=True, eq=False)
class HypersquareBound:
    tau_face: float
    tau_squares: tuple
    squares: tuple  # Cylinders over the tiles
    shell: EdgeSet  # E_0
    separated: bool

    @property
    def bound(self):
        return self.shell.capacity + sum(self.tau_squares)


def hypersquare_bound(C: Cylinder, n, env: Environment, kappa) -> HypersquareBound:
    """Compare ``tau_n(F, h)`` with ``V(E_0) + sum_i tau_n(S_i, h)``.

    ``F`` is the (segment) base of ``C``; tiles of side ``kappa`` cover the
    points of ``F`` farther than ``2 sqrt(d) kappa`` from its ends, and
    ``E_0`` holds the cylinder edges within ``zeta = 4d/n`` of the uncovered
    part of ``F`` or of a tile endpoint.
    """
    d = C.d
    if d != 2:
        raise ValueError("hypersquare tiling is implemented for d = 2")
    zeta = 4 * d / n
    if not kappa > 2 * zeta:
        raise ValueError("kappa must exceed 2 zeta so shell pieces stay apart")
    a, b = -C.local_offsets[1], C.local_offsets[0]
    margin = 2 * math.sqrt(d) * kappa
    starts = []
    s = a + margin
    while s < b - margin:
        starts.append(s)
        s += kappa
    U = C.frame[0]

    def point(t):
        return C.origin + t * U

    # pieces of F that E_0 must cover, as (start, end) in base coordinates
    if starts:
        pieces = [(a, starts[0]), (starts[-1] + kappa, b)]
        pieces += [(t, t) for t in starts[1:]]
    else:
        pieces = [(a, b)]

    sets = discretize_cylinder(C, n, "half_boundary")
    region = sets.region
    tails, heads = region.edge_endpoints()
    X = region.vertex_coords().astype(float)
    shell_mask = np.zeros(region.n_edges, bool)
    for s0, s1 in pieces:
        seg = np.array([point(s0), point(s1)]) * n
        ok = _hull_distance(X, seg[:1] if s0 == s1 else seg) <= zeta * n + TOL
        shell_mask |= ok[tails] & ok[heads]
    shell_mask &= sets.edges
    shell = EdgeSet.from_region(region, env, shell_mask)

    tiles, taus, cuts = [], [], []
    for t in starts:
        S = Cylinder.hyperrectangle(point(t + kappa / 2), C.normal, kappa, C.height,
                                    frame=C.frame)
        f = cylinder_flow(S, n, env, "half_boundary")
        tiles.append(S)
        taus.append(f.value)
        cuts.append(f.cut)
    whole, _ = _solve(region, env, sets.edges, sets.source, sets.sink)
    removed = shell.union(*cuts).mask_in(region) | ~sets.edges
    separated = escape_path(region, removed, sets.source, sets.sink) is None
    return HypersquareBound(whole, tuple(taus), tuple(tiles), shell, separated)
