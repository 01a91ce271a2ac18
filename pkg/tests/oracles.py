"""Independent reference implementations used only by the tests.

Nothing here calls the package's geometry predicates or solvers: d=2
geometry goes through shapely, d=3 through LP feasibility, and cuts through
exhaustive enumeration.
"""

import itertools

import numpy as np
from scipy.optimize import linprog
from shapely.geometry import LineString, Point, Polygon

EPS = 1e-9
STEPS2 = [(1, 0), (-1, 0), (0, 1), (0, -1)]


def steps(d):
    out = []
    for k in range(d):
        for s in (1, -1):
            e = [0] * d
            e[k] = s
            out.append(tuple(e))
    return out


# -- d = 2 via shapely ---------------------------------------------------------

def cylinder_polygon2(origin, v, half_len, h, n):
    """Scaled rectangle of a 2-D cylinder with base ``origin +- half_len u``."""
    v = np.asarray(v, float)
    u = np.array([-v[1], v[0]])
    o = np.asarray(origin, float)
    pts = [o + a * half_len * u + b * h * v for a, b in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
    poly = Polygon([tuple(n * p) for p in pts])
    top = LineString([tuple(n * (o - half_len * u + h * v)), tuple(n * (o + half_len * u + h * v))])
    bot = LineString([tuple(n * (o - half_len * u - h * v)), tuple(n * (o + half_len * u - h * v))])
    base = LineString([tuple(n * (o - half_len * u)), tuple(n * (o + half_len * u))])
    return poly, top, bot, base


def terminals2(origin, v, half_len, h, n, mode):
    """Definition-chasing terminal sets of a 2-D cylinder at scale ``n``."""
    poly, top, bot, base = cylinder_polygon2(origin, v, half_len, h, n)
    inside = lambda p: poly.distance(Point(p)) <= EPS  # noqa: E731
    minx, miny, maxx, maxy = poly.bounds
    pts = [(x, y) for x in range(int(np.floor(minx)) - 1, int(np.ceil(maxx)) + 2)
           for y in range(int(np.floor(miny)) - 1, int(np.ceil(maxy)) + 2)]
    members = [p for p in pts if inside(p)]
    S, T = set(), set()
    top_mid = top.interpolate(0.5, normalized=True)
    bot_mid = bot.interpolate(0.5, normalized=True)
    for p in members:
        for e in STEPS2:
            q = (p[0] + e[0], p[1] + e[1])
            if inside(q):
                continue
            seg = LineString([p, q])
            if mode == "top_bottom":
                if seg.distance(top) <= EPS:
                    S.add(p)
                if seg.distance(bot) <= EPS:
                    T.add(p)
            else:
                if base.distance(Point(p)) <= EPS:
                    continue
                # same component as the top face iff the joining segment misses the base
                if LineString([p, (top_mid.x, top_mid.y)]).distance(base) > EPS:
                    S.add(p)
                elif LineString([p, (bot_mid.x, bot_mid.y)]).distance(base) > EPS:
                    T.add(p)
    return S, T


def polygon_members(vertices, n, pad=2):
    poly = Polygon([tuple(n * np.asarray(v, float)) for v in vertices])
    minx, miny, maxx, maxy = poly.bounds
    return poly, [
        (x, y)
        for x in range(int(np.floor(minx)) - pad, int(np.ceil(maxx)) + pad + 1)
        for y in range(int(np.floor(miny)) - pad, int(np.ceil(maxy)) + pad + 1)
    ]


def edge_boundary2_polygon(vertices, n):
    """``{(x, y)}`` with ``x`` in ``n P`` and neighbour ``y`` outside, by scan."""
    poly, pts = polygon_members(vertices, n)
    inside = {p for p in pts if poly.distance(Point(p)) <= EPS}
    return {(p, (p[0] + e[0], p[1] + e[1])) for p in inside for e in STEPS2
            if (p[0] + e[0], p[1] + e[1]) not in inside}


# -- d = 3 via LP feasibility --------------------------------------------------

def in_hull(point, V):
    """Is ``point`` a convex combination of the rows of ``V``?"""
    V = np.asarray(V, float)
    k = len(V)
    A_eq = np.vstack([V.T, np.ones(k)])
    b_eq = np.concatenate([np.asarray(point, float), [1.0]])
    res = linprog(np.zeros(k), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * k, method="highs")
    return res.status == 0


def segment_meets_hull(x, y, V):
    """Does ``[x, y]`` meet ``conv(V)``?  Variables: weights on V and mu."""
    V = np.asarray(V, float)
    k = len(V)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    # sum w_i V_i - mu (y - x) = x ; sum w_i = 1
    A_eq = np.vstack([np.hstack([V.T, -(y - x)[:, None]]), np.concatenate([np.ones(k), [0.0]])])
    b_eq = np.concatenate([x, [1.0]])
    res = linprog(np.zeros(k + 1), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * k + [(0, 1)], method="highs")
    return res.status == 0


def terminals3_box_cylinder(center, v_axis, half, h, n, mode):
    """Axis-aligned 3-D cylinder (normal ``e_axis``) by LP definition chasing."""
    c = np.asarray(center, float)
    other = [j for j in range(3) if j != v_axis]
    base = []
    for a, b in itertools.product((-1, 1), repeat=2):
        p = c.copy()
        p[other[0]] += a * half
        p[other[1]] += b * half
        base.append(p)
    base = np.array(base) * n
    v = np.zeros(3)
    v[v_axis] = 1.0
    top = base + n * h * v
    bot = base - n * h * v
    corners = np.vstack([top, bot])
    lo = np.floor(corners.min(axis=0)).astype(int) - 1
    hi = np.ceil(corners.max(axis=0)).astype(int) + 1
    inside = {}

    def ins(p):
        if p not in inside:
            inside[p] = in_hull(p, corners)
        return inside[p]

    S, T = set(), set()
    for p in itertools.product(*[range(a, b + 1) for a, b in zip(lo, hi)]):
        if not ins(p):
            continue
        for e in steps(3):
            q = tuple(pi + ei for pi, ei in zip(p, e))
            if ins(q):
                continue
            if mode == "top_bottom":
                if segment_meets_hull(p, q, top):
                    S.add(p)
                if segment_meets_hull(p, q, bot):
                    T.add(p)
            else:
                if in_hull(p, base):
                    continue
                if not segment_meets_hull(p, top.mean(axis=0), base):
                    S.add(p)
                elif not segment_meets_hull(p, bot.mean(axis=0), base):
                    T.add(p)
    return S, T


# -- cuts ---------------------------------------------------------------------

def vertex_partition_min_cut(n_vertices, edges, sources, sinks, max_free=22):
    """Minimum over source sides ``X`` (sources in X, sinks out) of the
    capacity of edges leaving ``X``; exhaustive over the free vertices."""
    sources, sinks = set(sources), set(sinks)
    free = [v for v in range(n_vertices) if v not in sources and v not in sinks]
    if len(free) > max_free:
        raise ValueError("too many free vertices for exhaustive search")
    E = np.array([(u, v) for u, v, _ in edges], dtype=np.int64).reshape(-1, 2)
    caps = np.array([c for _, _, c in edges], float)
    best = np.inf
    k = len(free)
    pos = {v: i for i, v in enumerate(free)}
    chunk = 1 << min(k, 16)
    for start in range(0, 1 << k, chunk):
        masks = np.arange(start, min(start + chunk, 1 << k), dtype=np.int64)
        side = np.zeros((len(masks), n_vertices), bool)
        for v in sources:
            side[:, v] = True
        for v, i in pos.items():
            side[:, v] = (masks >> i) & 1
        if len(E):
            cross = side[:, E[:, 0]] != side[:, E[:, 1]]
            vals = cross @ caps
        else:
            vals = np.zeros(len(masks))
        best = min(best, float(vals.min()))
    return best


def staircase_edges(p0, p1):
    """Lattice edges whose closed segment meets the segment ``[p0, p1]``."""
    seg = LineString([tuple(p0), tuple(p1)])
    minx, miny, maxx, maxy = seg.bounds
    out = set()
    for x in range(int(np.floor(minx)) - 1, int(np.ceil(maxx)) + 2):
        for y in range(int(np.floor(miny)) - 1, int(np.ceil(maxy)) + 2):
            for e in ((1, 0), (0, 1)):
                if LineString([(x, y), (x + e[0], y + e[1])]).distance(seg) <= EPS:
                    out.add(((x, y), e))
    return out
