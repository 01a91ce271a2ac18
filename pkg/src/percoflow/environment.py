"""Capacity laws, lattice regions and reproducible capacity environments.

Seed splitting
--------------
Capacities are coupled across regions: an edge gets the same capacity no
matter which region it is sampled in.  The lattice is tiled into blocks of
``BLOCK ** d`` base vertices.  The edge ``<x, x + e_k>`` lives in block
``b = floor(x / BLOCK)`` at local slot ``k * BLOCK**d + ravel(x - BLOCK * b)``
(C order).  Every block draws its uniforms from::

    Generator(Philox(SeedSequence(master_seed,
                                  spawn_key=(replica, d, zz(b_1), ..., zz(b_d)))))
        .random(d * BLOCK**d)

where ``zz`` is the zigzag map ``z -> 2z`` for ``z >= 0`` and ``-2z - 1`` else.
Each uniform ``u`` becomes a capacity through the law's quantile function.
Philox is counter based, so blocks and replicas are independent streams.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import HypothesisViolated, MalformedLaw, RegionTooLarge

BLOCK = 16
EDGE_BUDGET = 50_000_000

# critical bond-percolation thresholds; d=2 is exact (Kesten)
PC_TABLE = {2: 0.5, 3: 0.2488}

KINDS = ("constant", "bernoulli_scaled", "uniform", "exponential", "finite_discrete")


@dataclass(frozen=True)
class CapacityLaw:
    """Edge-capacity distribution ``G``.

    ``params`` per kind: ``constant(value)``, ``bernoulli_scaled(p, value)``
    (mass ``1 - p`` at 0 and ``p`` at ``value``), ``uniform(a, b)``,
    ``exponential(rate)``, ``finite_discrete(values, probs)``.
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MalformedLaw(f"unknown law kind {self.kind!r}")
        p = self.params
        if self.kind == "finite_discrete":
            vals, probs = (tuple(float(x) for x in p[0]), tuple(float(x) for x in p[1]))
            object.__setattr__(self, "params", (vals, probs))
        else:
            object.__setattr__(self, "params", tuple(float(x) for x in p))
        self._check()

    # constructors -----------------------------------------------------
    @classmethod
    def constant(cls, value):
        return cls("constant", (value,))

    @classmethod
    def bernoulli_scaled(cls, p, value=1.0):
        return cls("bernoulli_scaled", (p, value))

    @classmethod
    def uniform(cls, a, b):
        return cls("uniform", (a, b))

    @classmethod
    def exponential(cls, rate):
        return cls("exponential", (rate,))

    @classmethod
    def finite_discrete(cls, values, probs):
        return cls("finite_discrete", (tuple(values), tuple(probs)))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind", None)
        keys = {
            "constant": ("value",),
            "bernoulli_scaled": ("p", "value"),
            "uniform": ("a", "b"),
            "exponential": ("rate",),
            "finite_discrete": ("values", "probs"),
        }.get(kind)
        if keys is None:
            raise MalformedLaw(f"unknown law kind {kind!r}")
        if kind == "bernoulli_scaled":
            d.setdefault("value", 1.0)
        missing = [k for k in keys if k not in d]
        extra = sorted(set(d) - set(keys))
        if missing or extra:
            raise MalformedLaw(f"law {kind}: missing {missing}, unexpected {extra}")
        return cls(kind, tuple(d[k] for k in keys))

    def to_dict(self):
        names = {
            "constant": ("value",),
            "bernoulli_scaled": ("p", "value"),
            "uniform": ("a", "b"),
            "exponential": ("rate",),
            "finite_discrete": ("values", "probs"),
        }[self.kind]
        out = {"kind": self.kind}
        for k, v in zip(names, self.params):
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    def _check(self):
        k, p = self.kind, self.params
        if k == "constant":
            if len(p) != 1 or p[0] < 0:
                raise MalformedLaw("constant law needs one value >= 0")
        elif k == "bernoulli_scaled":
            if len(p) != 2 or not 0 <= p[0] <= 1 or p[1] <= 0:
                raise MalformedLaw("bernoulli_scaled needs 0 <= p <= 1 and value > 0")
        elif k == "uniform":
            if len(p) != 2 or not 0 <= p[0] < p[1]:
                raise MalformedLaw("uniform needs 0 <= a < b")
        elif k == "exponential":
            if len(p) != 1 or p[0] <= 0:
                raise MalformedLaw("exponential needs rate > 0")
        else:
            vals, probs = p
            if len(vals) != len(probs) or not vals:
                raise MalformedLaw("finite_discrete needs matching nonempty values/probs")
            if min(vals) < 0 or min(probs) < 0:
                raise MalformedLaw("finite_discrete values and probs must be >= 0")
            if abs(math.fsum(probs) - 1.0) > 1e-12:
                raise MalformedLaw("finite_discrete probabilities must sum to 1")

    # distribution -----------------------------------------------------
    def atom_at_zero(self) -> float:
        k, p = self.kind, self.params
        if k == "constant":
            return 1.0 if p[0] == 0 else 0.0
        if k == "bernoulli_scaled":
            return 1.0 - p[0]
        if k == "uniform":
            return 0.0
        if k == "exponential":
            return 0.0
        vals, probs = p
        return math.fsum(q for v, q in zip(vals, probs) if v == 0)

    def ppf(self, u):
        """Quantile function, vectorized over ``u`` in [0, 1)."""
        u = np.asarray(u, dtype=np.float64)
        k, p = self.kind, self.params
        if k == "constant":
            return np.full(u.shape, p[0])
        if k == "bernoulli_scaled":
            return np.where(u < 1.0 - p[0], 0.0, p[1])
        if k == "uniform":
            return p[0] + (p[1] - p[0]) * u
        if k == "exponential":
            return -np.log1p(-u) / p[0]
        vals, probs = p
        order = np.argsort(vals, kind="stable")
        v = np.asarray(vals)[order]
        cum = np.cumsum(np.asarray(probs)[order])
        cum[-1] = 1.0
        return v[np.searchsorted(cum, u, side="right")]

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        k, p = self.kind, self.params
        if k == "constant":
            return (x >= p[0]).astype(float)
        if k == "bernoulli_scaled":
            return np.where(x < 0, 0.0, np.where(x < p[1], 1.0 - p[0], 1.0))
        if k == "uniform":
            return np.clip((x - p[0]) / (p[1] - p[0]), 0.0, 1.0)
        if k == "exponential":
            return np.where(x < 0, 0.0, -np.expm1(-p[0] * np.maximum(x, 0)))
        vals, probs = p
        return np.sum([q * (x >= v) for v, q in zip(vals, probs)], axis=0)

    def mean(self):
        k, p = self.kind, self.params
        if k == "constant":
            return p[0]
        if k == "bernoulli_scaled":
            return p[0] * p[1]
        if k == "uniform":
            return 0.5 * (p[0] + p[1])
        if k == "exponential":
            return 1.0 / p[0]
        return math.fsum(v * q for v, q in zip(*p))


@dataclass(frozen=True)
class ValidationReport:
    zero_atom: float
    pc: float | None
    subcritical_zeros: bool
    exp_moment: bool
    notes: tuple = ()


def validate_law(law: CapacityLaw, d: int) -> ValidationReport:
    """Check the hypothesis ``G({0}) < 1 - p_c(d)`` and record the tail class.

    Violations only warn: experiments may still run.
    """
    zero = law.atom_at_zero()
    pc = PC_TABLE.get(d)
    notes = []
    if pc is None:
        notes.append(f"p_c({d}) not tabulated; hypothesis not checked")
        warnings.warn(notes[-1], HypothesisViolated, stacklevel=2)
        sub = False
    else:
        sub = zero < 1.0 - pc
        if not sub:
            notes.append(f"G({{0}})={zero} >= 1 - p_c({d}) = {1 - pc}")
            warnings.warn(notes[-1], HypothesisViolated, stacklevel=2)
    if law.kind == "exponential":
        notes.append("exponential tail: moments exist for theta < rate")
    else:
        notes.append("bounded support")
    return ValidationReport(zero, pc, sub, True, tuple(notes))


@dataclass(frozen=True)
class LatticeRegion:
    """Integer box ``[lo_1, hi_1] x ... x [lo_d, hi_d]`` with dense indexing.

    Vertices are numbered in C order over ``x - lo``.  Edges are grouped by
    axis; within axis ``k`` the base vertex ``x`` (``x_k < hi_k``) is numbered
    in C order over a grid one shorter along ``k``.
    """

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lo and hi must have equal positive length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("region needs lo_i < hi_i on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, d, half_width, center=None):
        c = (0,) * d if center is None else tuple(center)
        return cls(tuple(ci - half_width for ci in c), tuple(ci + half_width for ci in c))

    @property
    def d(self):
        return len(self.lo)

    @property
    def shape(self):
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def n_vertices(self):
        return math.prod(self.shape)

    def _edge_shape(self, k):
        s = list(self.shape)
        s[k] -= 1
        return tuple(s)

    @cached_property
    def _edge_offsets(self):
        sizes = [math.prod(self._edge_shape(k)) for k in range(self.d)]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)

    @property
    def n_edges(self):
        return int(self._edge_offsets[-1])

    def contains_region(self, other):
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def vertex_coords(self):
        """(n_vertices, d) integer coordinates in index order."""
        axes = [np.arange(a, b + 1) for a, b in zip(self.lo, self.hi)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def vertex_index(self, coords):
        coords = np.asarray(coords, dtype=np.int64)
        rel = coords - np.asarray(self.lo)
        return np.ravel_multi_index(tuple(rel.T), self.shape)

    def contains_points(self, coords):
        coords = np.asarray(coords)
        return np.all((coords >= self.lo) & (coords <= self.hi), axis=-1)

    def edge_index(self, coords, axis):
        """Dense index of edges ``<x, x + e_axis>`` for base points ``coords``."""
        coords = np.asarray(coords, dtype=np.int64)
        axis = np.broadcast_to(np.asarray(axis, dtype=np.int64), coords.shape[:1])
        rel = coords - np.asarray(self.lo)
        out = np.empty(len(coords), np.int64)
        for k in range(self.d):
            sel = axis == k
            if sel.any():
                out[sel] = self._edge_offsets[k] + np.ravel_multi_index(
                    tuple(rel[sel].T), self._edge_shape(k)
                )
        return out

    @cached_property
    def _edges(self):
        ids = np.arange(self.n_vertices).reshape(self.shape)
        tails, heads, base, axis = [], [], [], []
        coords = self.vertex_coords().reshape(self.shape + (self.d,))
        for k in range(self.d):
            lo_sl = [slice(None)] * self.d
            hi_sl = [slice(None)] * self.d
            lo_sl[k] = slice(0, -1)
            hi_sl[k] = slice(1, None)
            tails.append(ids[tuple(lo_sl)].ravel())
            heads.append(ids[tuple(hi_sl)].ravel())
            base.append(coords[tuple(lo_sl)].reshape(-1, self.d))
            axis.append(np.full(tails[-1].shape, k, np.int64))
        return (np.concatenate(tails), np.concatenate(heads),
                np.concatenate(base), np.concatenate(axis))

    def edge_endpoints(self):
        """(tails, heads) vertex indices for every edge, tail = base vertex."""
        t, h, _, _ = self._edges
        return t, h

    def edge_base(self):
        """(base coordinates, axis) of every edge."""
        _, _, b, a = self._edges
        return b, a

    def shell_mask(self):
        """Vertices on the region's outer boundary."""
        c = self.vertex_coords()
        return np.any((c == self.lo) | (c == self.hi), axis=1)


def _zigzag(z):
    return 2 * z if z >= 0 else -2 * z - 1


def block_uniforms(master_seed, replica, d, block):
    """Uniform stream of one block; shape ``(d,) + (BLOCK,) * d``."""
    key = (int(replica), int(d)) + tuple(_zigzag(int(b)) for b in block)
    ss = np.random.SeedSequence(int(master_seed), spawn_key=key)
    g = np.random.Generator(np.random.Philox(ss))
    return g.random(d * BLOCK ** d).reshape((d,) + (BLOCK,) * d)


def _sample_uniforms(region: LatticeRegion, master_seed, replica):
    d = region.d
    out = np.empty(region.n_edges, np.float64)
    offsets = region._edge_offsets
    views, tops = [], []
    for k in range(d):
        views.append(out[offsets[k]:offsets[k + 1]].reshape(region._edge_shape(k)))
        tops.append([h - (j == k) for j, h in enumerate(region.hi)])
    blo = [a // BLOCK for a in region.lo]
    bhi = [b // BLOCK for b in region.hi]
    for block in np.ndindex(*[h - l + 1 for l, h in zip(blo, bhi)]):
        b = [l + i for l, i in zip(blo, block)]
        u = None
        for k in range(d):
            # overlap of this block with the axis-k base points
            g_lo = [max(bi * BLOCK, lo) for bi, lo in zip(b, region.lo)]
            g_hi = [min(bi * BLOCK + BLOCK - 1, t) for bi, t in zip(b, tops[k])]
            if any(x > y for x, y in zip(g_lo, g_hi)):
                continue
            if u is None:
                u = block_uniforms(master_seed, replica, d, b)
            src = tuple(slice(x - bi * BLOCK, y - bi * BLOCK + 1) for x, y, bi in zip(g_lo, g_hi, b))
            dst = tuple(slice(x - lo, y - lo + 1) for x, y, lo in zip(g_lo, g_hi, region.lo))
            views[k][dst] = u[k][src]
    return out


@dataclass(frozen=True, eq=False)
class Environment:
    region: LatticeRegion
    law: CapacityLaw
    master_seed: int
    replica: int
    capacities: np.ndarray = field(repr=False)

    def on(self, region: LatticeRegion) -> "Environment":
        """Same coupled environment restricted or extended to ``region``."""
        if region == self.region:
            return self
        if self.region.contains_region(region):
            base, axis = region.edge_base()
            caps = self.capacities[self.region.edge_index(base, axis)]
            return Environment(region, self.law, self.master_seed, self.replica, caps)
        return sample_environment(region, self.law, self.master_seed, self.replica)

    def capacity_of(self, base, axis):
        """Capacities of edges given by base coordinates and axis."""
        return self.capacities[self.region.edge_index(base, axis)]

    def to_csv(self, path):
        idx = np.arange(self.region.n_edges)
        with open(path, "w") as fh:
            fh.write("edge_index,capacity\n")
            for i, c in zip(idx.tolist(), self.capacities.tolist()):
                fh.write(f"{i},{c!r}\n")

    def to_binary(self, path):
        """Raw little-endian float64 capacities in edge-index order."""
        self.capacities.astype("<f8").tofile(path)


def sample_environment(
    region: LatticeRegion,
    law: CapacityLaw,
    master_seed: int,
    replica: int = 0,
    edge_budget: int = EDGE_BUDGET,
) -> Environment:
    if replica < 0 or master_seed < 0:
        raise ValueError("master_seed and replica must be >= 0")
    if region.n_edges > edge_budget:
        raise RegionTooLarge(
            f"region has {region.n_edges} edges, budget is {edge_budget}",
            n_edges=region.n_edges,
        )
    u = _sample_uniforms(region, master_seed, replica)
    caps = law.ppf(u)
    caps.flags.writeable = False
    return Environment(region, law, int(master_seed), int(replica), caps)


def derive_seed(master_seed: int, *key: int) -> int:
    """Deterministic 63-bit child seed, used to decorrelate sub-experiments."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def empirical_sample(law: CapacityLaw, size: int, seed: int) -> np.ndarray:
    """i.i.d. draws through the same quantile path the environments use."""
    return law.ppf(np.random.default_rng(seed).random(size))
