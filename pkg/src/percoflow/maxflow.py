"""Exact max-flow / min-cut on undirected capacitated graphs.

Each undirected edge ``(u, v, c)`` becomes the arc pair ``u->v`` and ``v->u``,
both of capacity ``c``.  Source and sink sets are attached to a super-source
and a super-sink by arcs of capacity ``sum(c) + 1``, which can never saturate.

The solver is Dinic's algorithm (blocking flows on BFS level graphs),
``O(V^2 E)`` in the worst case, compiled with numba.  Every augmentation
subtracts the bottleneck from the bottleneck arc itself, so that arc's residual
becomes exactly ``0.0`` and the phase bound holds in floating point too.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import InvalidProblem, OverflowGuard, TooLarge

_MAX_TOTAL = 1e300


@dataclass(frozen=True, eq=False)
class FlowProblem:
    n_vertices: int
    tails: np.ndarray
    heads: np.ndarray
    capacities: np.ndarray
    sources: np.ndarray
    sinks: np.ndarray

    def __post_init__(self):
        tails = np.ascontiguousarray(self.tails, dtype=np.int64)
        heads = np.ascontiguousarray(self.heads, dtype=np.int64)
        caps = np.ascontiguousarray(self.capacities, dtype=np.float64)
        src = np.unique(np.asarray(self.sources, dtype=np.int64))
        snk = np.unique(np.asarray(self.sinks, dtype=np.int64))
        object.__setattr__(self, "tails", tails)
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "sources", src)
        object.__setattr__(self, "sinks", snk)
        self.validate()

    @classmethod
    def from_edges(cls, n_vertices, edges, sources, sinks):
        """Build from an iterable of ``(u, v, capacity)`` triples."""
        edges = list(edges)
        arr = np.array(edges, dtype=np.float64).reshape(-1, 3)
        return cls(
            int(n_vertices),
            arr[:, 0].astype(np.int64),
            arr[:, 1].astype(np.int64),
            arr[:, 2],
            sources,
            sinks,
        )

    @property
    def n_edges(self):
        return len(self.tails)

    def validate(self):
        n = self.n_vertices
        if not (len(self.tails) == len(self.heads) == len(self.capacities)):
            raise InvalidProblem("edge arrays differ in length")
        if len(self.tails) and (
            min(self.tails.min(), self.heads.min()) < 0
            or max(self.tails.max(), self.heads.max()) >= n
        ):
            raise InvalidProblem("edge endpoint out of range")
        if np.any(self.tails == self.heads):
            raise InvalidProblem("self-loop edge")
        if not np.all(np.isfinite(self.capacities)) or np.any(self.capacities < 0):
            raise InvalidProblem("capacities must be finite and >= 0")
        for name, s in (("sources", self.sources), ("sinks", self.sinks)):
            if len(s) == 0:
                raise InvalidProblem(f"{name} is empty")
            if s.min() < 0 or s.max() >= n:
                raise InvalidProblem(f"{name} index out of range")
        if np.intersect1d(self.sources, self.sinks).size:
            raise InvalidProblem("sources and sinks intersect")

    # -- plain edge-list text format -------------------------------------
    def to_text(self):
        lines = [f"{self.n_vertices} {self.n_edges} {len(self.sources)} {len(self.sinks)}"]
        lines += [f"{u} {v} {c!r}" for u, v, c in
                  zip(self.tails.tolist(), self.heads.tolist(), self.capacities.tolist())]
        lines.append(" ".join(map(str, self.sources.tolist())))
        lines.append(" ".join(map(str, self.sinks.tolist())))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        try:
            nv, ne, ns, nt = (int(x) for x in rows[0])
            edges = [(int(r[0]), int(r[1]), float(r[2])) for r in rows[1:1 + ne]]
            src = [int(x) for x in rows[1 + ne]]
            snk = [int(x) for x in rows[2 + ne]]
        except (IndexError, ValueError) as exc:
            raise InvalidProblem(f"malformed edge-list text: {exc}") from exc
        if len(edges) != ne or len(src) != ns or len(snk) != nt:
            raise InvalidProblem("header counts disagree with body")
        return cls.from_edges(nv, edges, src, snk)


@dataclass(frozen=True, eq=False)
class MaxFlowResult:
    value: float
    flow: np.ndarray  # signed flow on each edge, positive in tail->head direction
    reachable: np.ndarray  # residual reachability from the sources

    def net_outflow(self, problem):
        """Net flow leaving each vertex (node-law residual)."""
        out = np.zeros(problem.n_vertices)
        np.add.at(out, problem.tails, self.flow)
        np.add.at(out, problem.heads, -self.flow)
        return out


@dataclass(frozen=True, eq=False)
class Cutset:
    edges: np.ndarray  # indices into the problem's edge list
    capacity: float
    meta: dict = field(default_factory=dict)

    @property
    def cardinality(self):
        return len(self.edges)


@numba.njit(cache=True)
def _reach(n, start, arc_to, residual, s):
    seen = np.zeros(n, np.bool_)
    stack = np.empty(n, np.int64)
    seen[s] = True
    stack[0] = s
    top = 1
    while top > 0:
        top -= 1
        v = stack[top]
        for a in range(start[v], start[v + 1]):
            w = arc_to[a]
            if not seen[w] and residual[a] > 0.0:
                seen[w] = True
                stack[top] = w
                top += 1
    return seen


def max_flow(problem: FlowProblem) -> MaxFlowResult:
    """Exact maximum flow from ``problem.sources`` to ``problem.sinks``."""
    n = problem.n_vertices
    m = problem.n_edges
    caps = problem.capacities
    total = float(caps.sum())
    if not np.isfinite(total) or total > _MAX_TOTAL:
        raise OverflowGuard("total capacity exceeds representable range", total=total)
    big = total + 1.0
    s, t = n, n + 1
    ns, nt = len(problem.sources), len(problem.sinks)

    # arc 2k and 2k+1 are mutual reverses
    n_arcs = 2 * (m + ns + nt)
    tail = np.empty(n_arcs, np.int64)
    head = np.empty(n_arcs, np.int64)
    res = np.zeros(n_arcs, np.float64)
    tail[0:2 * m:2], head[0:2 * m:2] = problem.tails, problem.heads
    tail[1:2 * m:2], head[1:2 * m:2] = problem.heads, problem.tails
    res[0:2 * m:2] = caps
    res[1:2 * m:2] = caps
    o = 2 * m
    tail[o:o + 2 * ns:2], head[o:o + 2 * ns:2] = s, problem.sources
    tail[o + 1:o + 2 * ns:2], head[o + 1:o + 2 * ns:2] = problem.sources, s
    res[o:o + 2 * ns:2] = big
    o += 2 * ns
    tail[o:o + 2 * nt:2], head[o:o + 2 * nt:2] = problem.sinks, t
    tail[o + 1:o + 2 * nt:2], head[o + 1:o + 2 * nt:2] = t, problem.sinks
    res[o:o + 2 * nt:2] = big

    # CSR by tail; sorting breaks the 2k/2k+1 pairing, so carry a reverse table
    order = np.argsort(tail, kind="stable")
    inv = np.empty_like(order)
    inv[order] = np.arange(n_arcs)
    start = np.zeros(n + 3, np.int64)
    np.cumsum(np.bincount(tail, minlength=n + 2), out=start[1:])
    arc_to = head[order]
    arc_tail = tail[order]
    residual = res[order]
    rev = inv[np.arange(n_arcs) ^ 1][order]
    value = _dinic(n + 2, start, arc_to, arc_tail, rev, residual, s, t)
    seen = _reach(n + 2, start, arc_to, residual, s)

    res_back = residual[inv]
    flow = (res_back[1:2 * m:2] - res_back[0:2 * m:2]) / 2.0
    return MaxFlowResult(float(value), flow, seen[:n].copy())


@numba.njit(cache=True)
def _dinic(n, start, arc_to, arc_tail, rev, residual, s, t):
    level = np.empty(n, np.int64)
    it = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    path = np.empty(n, np.int64)
    total = 0.0
    while True:
        for i in range(n):
            level[i] = -1
        level[s] = 0
        qh = 0
        qt = 1
        queue[0] = s
        while qh < qt:
            v = queue[qh]
            qh += 1
            for a in range(start[v], start[v + 1]):
                w = arc_to[a]
                if level[w] < 0 and residual[a] > 0.0:
                    level[w] = level[v] + 1
                    queue[qt] = w
                    qt += 1
        if level[t] < 0:
            break
        for i in range(n):
            it[i] = start[i]
        depth = 0
        v = s
        while True:
            if v == t:
                b = residual[path[0]]
                for i in range(1, depth):
                    r = residual[path[i]]
                    if r < b:
                        b = r
                first = -1
                for i in range(depth):
                    a = path[i]
                    residual[a] -= b
                    residual[rev[a]] += b
                    if first < 0 and residual[a] <= 0.0:
                        residual[a] = 0.0
                        first = i
                total += b
                depth = first
                v = arc_tail[path[first]]
                continue
            advanced = False
            while it[v] < start[v + 1]:
                a = it[v]
                w = arc_to[a]
                if residual[a] > 0.0 and level[w] == level[v] + 1:
                    path[depth] = a
                    depth += 1
                    v = w
                    advanced = True
                    break
                it[v] += 1
            if not advanced:
                if v == s:
                    break
                level[v] = -1
                depth -= 1
                v = arc_tail[path[depth]]
                it[v] += 1
    return total


def min_cut(problem: FlowProblem, result: MaxFlowResult) -> Cutset:
    """Canonical cut: edges joining the residual-reachable side to the rest."""
    r = result.reachable
    crossing = r[problem.tails] != r[problem.heads]
    idx = np.flatnonzero(crossing)
    cap = float(problem.capacities[idx].sum())
    return Cutset(idx, cap)


def separates(problem: FlowProblem, removed) -> bool:
    """True when deleting the edges in ``removed`` disconnects sources from sinks."""
    keep = np.ones(problem.n_edges, bool)
    keep[np.asarray(removed, dtype=np.int64)] = False
    labels = _components(problem.n_vertices, problem.tails[keep], problem.heads[keep])
    return not np.intersect1d(labels[problem.sources], labels[problem.sinks]).size


def _components(n, tails, heads):
    adj = sparse.coo_matrix(
        (np.ones(len(tails), np.int8), (tails, heads)), shape=(n, n)
    ).tocsr()
    return csgraph.connected_components(adj, directed=False)[1]


def brute_force_min_cut(problem: FlowProblem, max_edges: int = 20) -> Cutset:
    """Minimum separating edge set by exhaustive subset search (test oracle)."""
    m = problem.n_edges
    if m > max_edges:
        raise TooLarge(f"{m} edges exceeds the brute-force limit {max_edges}")
    n = problem.n_vertices
    tails = problem.tails.tolist()
    heads = problem.heads.tolist()
    caps = problem.capacities.tolist()
    src_mask = sum(1 << s for s in problem.sources.tolist())
    snk_mask = sum(1 << t for t in problem.sinks.tolist())

    def separated(removed_bits):
        adj = [0] * n
        for e in range(m):
            if not removed_bits >> e & 1:
                adj[tails[e]] |= 1 << heads[e]
                adj[heads[e]] |= 1 << tails[e]
        seen = src_mask
        frontier = src_mask
        while frontier:
            nxt = 0
            f = frontier
            while f:
                low = f & -f
                nxt |= adj[low.bit_length() - 1]
                f ^= low
            frontier = nxt & ~seen
            seen |= nxt
            if seen & snk_mask:
                return False
        return True

    best, best_bits = None, None
    for k in range(m + 1):
        for combo in itertools.combinations(range(m), k):
            cap = sum(caps[e] for e in combo)
            if best is not None and cap >= best:
                continue
            bits = sum(1 << e for e in combo)
            if separated(bits):
                best, best_bits = cap, combo
    return Cutset(np.array(best_bits, dtype=np.int64), float(best))
