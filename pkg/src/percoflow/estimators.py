"""Monte Carlo estimators built on the flow functionals.

Replica ``r`` of an experiment with master seed ``s`` always uses the
environment stream ``(s, r)``; sub-experiments (one per ``n`` or per
direction) get their own master seed from :func:`derive_seed`, and every
row records the master seed it used.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .environment import CapacityLaw, LatticeRegion, derive_seed, sample_environment
from .errors import MissingDirection
from .functionals import phi_cylinder, phi_to_infinity, tau_cylinder
from .geometry import Box, ConvexBody, ConvexPolytope, Cylinder, edge_boundary
from .geometry import inner_polytope, outer_polytope

ANGLE_TOL = 1e-9
POLY_DIRECTIONS = {2: 16, 3: 64}


def map_replicas(fn, tasks, workers=1):
    """``[fn(t) for t in tasks]``, optionally on a process pool; order kept."""
    tasks = list(tasks)
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=int(workers)) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _env(law, seed, replica, d):
    return sample_environment(LatticeRegion.cube(d, 1), law, seed, replica)


def _summary(values):
    v = np.asarray(values, float)
    std = float(v.std(ddof=1)) if len(v) >= 2 else float("nan")
    se = std / math.sqrt(len(v)) if len(v) >= 2 else float("nan")
    return float(v.mean()), std, se


# -- flow constant ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EstimateRecord:
    quantity: str
    direction: tuple
    n: int
    h: float
    law: dict
    seed: int
    values: np.ndarray  # normalized per-replica values
    raw: np.ndarray  # un-normalized flows
    mean: float
    std: float
    stderr: float

    @property
    def replicas(self):
        return len(self.values)

    @property
    def seeds(self):
        return tuple((self.seed, r) for r in range(self.replicas))

    def rows(self):
        return [
            {"quantity": self.quantity, "n": self.n, "replica": r, "seed": self.seed,
             "value": float(raw), "normalized_value": float(v)}
            for r, (raw, v) in enumerate(zip(self.raw, self.values))
        ]

    def to_record(self):
        return {
            "quantity": self.quantity, "direction": list(self.direction), "n": self.n,
            "h": self.h, "law": self.law, "seed": self.seed, "replicas": self.replicas,
            "mean": self.mean, "std": self.std, "stderr": self.stderr,
        }


def lattice_offset(n, d):
    """Base centre shift putting the scaled base's sides on half-integers.

    A unit base scaled by ``n`` then covers exactly ``n^{d-1}`` lattice
    columns instead of picking up an extra row of boundary points.
    """
    return np.full(d, 0.0 if n % 2 else 0.5 / n)


def nu_cylinder(v, n, h=1.0):
    v = np.asarray(v, float)
    v = v / np.linalg.norm(v)
    return Cylinder.hyperrectangle(lattice_offset(n, len(v)), v, 1.0, h)


def _nu_task(args):
    v, n, h, law_d, seed, r, functional = args
    law = CapacityLaw.from_dict(law_d)
    C = nu_cylinder(v, n, h)
    env = _env(law, seed, r, len(v))
    f = tau_cylinder if functional == "tau" else phi_cylinder
    return f(C, n, env)


def estimate_nu(v, n, h=1.0, law: CapacityLaw = None, replicas=32, seed=0,
                functional="tau", workers=1) -> EstimateRecord:
    """Mean of ``tau_n(S, h) / n^{d-1}`` over replicas, ``S`` a unit-area square
    base normal to ``v`` (``functional="phi"`` uses the top-to-bottom flow)."""
    if functional not in ("tau", "phi"):
        raise ValueError("functional must be 'tau' or 'phi'")
    v = np.asarray(v, float)
    v = v / np.linalg.norm(v)
    d = len(v)
    tasks = [(v, int(n), float(h), law.to_dict(), int(seed), r, functional) for r in range(replicas)]
    raw = np.array(map_replicas(_nu_task, tasks, workers), float)
    vals = raw / n ** (d - 1)
    mean, std, se = _summary(vals)
    return EstimateRecord(f"nu_{functional}", tuple(v.tolist()), int(n), float(h), law.to_dict(),
                          int(seed), vals, raw, mean, std, se)


def exact_nu_constant(v, c):
    """Flow constant of the constant law ``c``: ``c * ||v||_1``."""
    v = np.asarray(v, float)
    return float(c * np.abs(v).sum() / np.linalg.norm(v))


# -- surface energy -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SurfaceEnergyReport:
    polytope: ConvexPolytope
    normals: np.ndarray
    areas: np.ndarray
    nu: np.ndarray
    contributions: np.ndarray
    total: float
    stderr: float

    def to_record(self):
        return {
            "normals": self.normals.tolist(), "areas": self.areas.tolist(),
            "nu": self.nu.tolist(), "contributions": self.contributions.tolist(),
            "total": self.total, "stderr": self.stderr,
        }


def _lookup(estimates, u):
    """Key of the estimate for ``u`` (or ``-u``, since nu is even)."""
    best = None
    for key in estimates:
        w = np.asarray(key, float)
        w = w / np.linalg.norm(w)
        for sign in (1.0, -1.0):
            ang = math.acos(max(-1.0, min(1.0, float(sign * w @ u))))
            if ang <= ANGLE_TOL and (best is None or ang < best[0]):
                best = (ang, key)
    if best is None:
        raise MissingDirection(f"no estimate within {ANGLE_TOL} rad of {np.round(u, 12).tolist()}",
                               direction=u.tolist())
    return best[1]


def surface_energy(P: ConvexPolytope, nu_estimates) -> SurfaceEnergyReport:
    """``sum_i nu(v_i) area(F_i)`` with first-order error propagation.

    ``nu_estimates`` maps direction tuples to :class:`EstimateRecord` or to
    plain numbers (treated as exact).  Faces that resolve to the same
    estimate share its error.
    """
    faces = P.faces
    keys = [_lookup(nu_estimates, f.normal) for f in faces]
    areas = np.array([f.area for f in faces])
    nu = np.empty(len(faces))
    weight = {}
    for i, k in enumerate(keys):
        e = nu_estimates[k]
        nu[i] = e.mean if isinstance(e, EstimateRecord) else float(e)
        weight[k] = weight.get(k, 0.0) + areas[i]
    var = 0.0
    for k, w in weight.items():
        e = nu_estimates[k]
        if isinstance(e, EstimateRecord) and np.isfinite(e.stderr):
            var += (w * e.stderr) ** 2
    contrib = nu * areas
    if np.any(contrib < 0):
        raise ValueError("negative flow-constant estimate")
    return SurfaceEnergyReport(P, np.array([f.normal for f in faces]), areas, nu, contrib,
                               float(contrib.sum()), math.sqrt(var))


def polytope_approximations(A: ConvexBody):
    """(outer, inner) polytopes of ``A``; exact for boxes and polytopes."""
    if isinstance(A, ConvexPolytope):
        return A, A
    if isinstance(A, Box):
        P = A.as_polytope()
        return P, P
    m = POLY_DIRECTIONS.get(A.d)
    if m is None:
        raise ValueError("polytope approximation needs d in {2, 3} for curved bodies")
    return outer_polytope(A, m), inner_polytope(A, m)


def nu_table(polytopes, law, n, h=1.0, replicas=16, seed=0, workers=1):
    """Flow-constant values for every face normal of the given polytopes.

    Constant laws use the exact value.  Otherwise one estimate per direction
    up to sign, each from its own derived seed.
    """
    out = {}
    for P in polytopes:
        for f in P.faces:
            u = f.normal
            try:
                _lookup(out, u)
                continue
            except MissingDirection:
                pass
            key = tuple(u.tolist())
            if law.kind == "constant":
                out[key] = exact_nu_constant(u, law.params[0])
            else:
                s = derive_seed(seed, len(out))
                out[key] = estimate_nu(u, n, h, law, replicas, s, workers=workers)
    return out


# -- flow to infinity experiments ---------------------------------------------

def _phi_task(args):
    body_d, n, law_d, seed, r = args
    from .geometry import body_from_dict

    A = body_from_dict(body_d)
    res = phi_to_infinity(A, n, CapacityLaw.from_dict(law_d), seed, r)
    return res.value, res.cutset.cardinality, res.cutset.capacities


def _body_dict(A):
    if isinstance(A, ConvexPolytope):
        return {"kind": "polytope", "normals": A.normals.tolist(), "offsets": A.offsets.tolist()}
    return A.to_dict()


def phi_samples(A, law, n, replicas, seed, workers=1):
    tasks = [(_body_dict(A), int(n), law.to_dict(), int(seed), r) for r in range(replicas)]
    return map_replicas(_phi_task, tasks, workers)


@dataclass(frozen=True, eq=False)
class ConvergenceTable:
    rows: list  # per replica: quantity, n, replica, seed, value, normalized_value
    summary: list  # per n: n, seed, mean, std, stderr, min, max, I_outer, I_inner, gap
    energy_outer: SurfaceEnergyReport
    energy_inner: SurfaceEnergyReport


def convergence_experiment(A: ConvexBody, law: CapacityLaw, n_schedule, replicas, seed,
                           nu=None, nu_n=None, nu_replicas=16, workers=1) -> ConvergenceTable:
    """``phi_to_infinity(A, n) / n^{d-1}`` along ``n_schedule`` against
    ``I(P_outer)`` and ``I(P_inner)``.

    ``nu`` maps directions to estimates; when omitted it is computed by
    :func:`nu_table` at ``nu_n`` (default: the last ``n``).
    """
    n_schedule = [int(n) for n in n_schedule]
    d = A.d
    outer, inner = polytope_approximations(A)
    if nu is None:
        nu = nu_table([outer, inner], law, nu_n or n_schedule[-1], 1.0, nu_replicas,
                      derive_seed(seed, 0xA), workers)
    e_out = surface_energy(outer, nu)
    e_in = surface_energy(inner, nu)
    rows, summary = [], []
    for n in n_schedule:
        s = derive_seed(seed, n)
        res = phi_samples(A, law, n, replicas, s, workers)
        raw = np.array([r[0] for r in res])
        norm = raw / n ** (d - 1)
        for r, (x, y) in enumerate(zip(raw, norm)):
            rows.append({"quantity": "phi_to_infinity", "n": n, "replica": r, "seed": s,
                         "value": float(x), "normalized_value": float(y)})
        mean, std, se = _summary(norm)
        summary.append({
            "n": n, "seed": s, "replicas": replicas, "mean": mean, "std": std, "stderr": se,
            "min": float(norm.min()), "max": float(norm.max()),
            "I_outer": e_out.total, "I_inner": e_in.total,
            "gap": abs(mean - e_out.total),
        })
    return ConvergenceTable(rows, summary, e_out, e_in)


@dataclass(frozen=True, eq=False)
class DeviationTable:
    rows: list
    summary: list  # per n: n, seed, frequency, log_frequency_rate, threshold
    reference: float


def deviation_tail(A: ConvexBody, law: CapacityLaw, n_schedule, relative_eps, replicas, seed,
                   reference=None, nu=None, nu_replicas=16, workers=1) -> DeviationTable:
    """Frequency of ``|phi_n / n^{d-1} - I| >= relative_eps * I`` per ``n``.

    ``I`` is ``reference`` or the outer-polytope surface energy.  When the
    frequency is positive the table adds ``log(freq) / n^{d-1}``.
    """
    if not relative_eps > 0:
        raise ValueError("relative_eps must be positive")
    conv = convergence_experiment(A, law, n_schedule, replicas, seed, nu=nu,
                                  nu_replicas=nu_replicas, workers=workers)
    ref = conv.energy_outer.total if reference is None else float(reference)
    summary = []
    for s in conv.summary:
        n = s["n"]
        vals = np.array([r["normalized_value"] for r in conv.rows if r["n"] == n])
        freq = float(np.mean(np.abs(vals - ref) >= relative_eps * ref))
        rate = math.log(freq) / n ** (A.d - 1) if freq > 0 else float("nan")
        summary.append({"n": n, "seed": s["seed"], "replicas": len(vals), "frequency": freq,
                        "log_frequency_rate": rate, "threshold": relative_eps * ref})
    return DeviationTable(conv.rows, summary, ref)


# -- minimal cutsets ----------------------------------------------------------

def classify_cutset(capacities, eps):
    """``(N_plus, N_minus, N_zero)``: capacity ``> eps``, in ``(0, eps]``, ``== 0``."""
    c = np.asarray(capacities, float)
    plus = int(np.sum(c > eps))
    zero = int(np.sum(c == 0))
    return plus, len(c) - plus - zero, zero


def beta_grid(d):
    return [b * 2 * d for b in (1, 2, 4, 8)]


@dataclass(frozen=True, eq=False)
class CutsetStats:
    n: int
    d: int
    eps: float
    seed: int
    betas: tuple
    size: np.ndarray  # |E|
    capacity: np.ndarray  # V(E)
    n_plus: np.ndarray
    n_minus: np.ndarray
    n_zero: np.ndarray
    boundary_capacity: np.ndarray  # V(edge boundary of nA)

    @property
    def normalized_size(self):
        return self.size / self.n ** (self.d - 1)

    def beta_frequencies(self):
        return {b: float(np.mean(self.size >= b * self.n ** (self.d - 1))) for b in self.betas}

    def histogram(self, bins=10):
        return np.histogram(self.normalized_size, bins=bins)

    def rows(self):
        return [
            {"quantity": "cutset_size", "n": self.n, "replica": r, "seed": self.seed,
             "value": float(s), "normalized_value": float(s / self.n ** (self.d - 1))}
            for r, s in enumerate(self.size)
        ]


def cutset_statistics(A: ConvexBody, law: CapacityLaw, n, eps, replicas, seed,
                      betas=None, workers=1) -> CutsetStats:
    """Classify the canonical minimal cutset from ``nA`` to infinity per replica."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    res = phi_samples(A, law, n, replicas, seed, workers)
    inner, outer = edge_boundary(A, n)
    lo = np.minimum(inner, outer).min(axis=0) - 1
    hi = np.maximum(inner, outer).max(axis=0) + 1
    region = LatticeRegion(tuple(lo), tuple(hi))
    base = np.minimum(inner, outer)
    axis = np.argmax(np.abs(outer - inner), axis=1)
    eidx = region.edge_index(base, axis)
    size, cap, plus, minus, zero, bcap = [], [], [], [], [], []
    for r, (value, k, caps) in enumerate(res):
        p, m, z = classify_cutset(caps, eps)
        size.append(k)
        cap.append(math.fsum(caps.tolist()))
        plus.append(p)
        minus.append(m)
        zero.append(z)
        env = sample_environment(region, law, seed, r)
        bcap.append(math.fsum(env.capacities[eidx].tolist()))
    return CutsetStats(int(n), A.d, float(eps), int(seed),
                       tuple(betas if betas is not None else beta_grid(A.d)),
                       *(np.array(x) for x in (size, cap, plus, minus, zero, bcap)))


__all__ = [
    "ConvergenceTable", "CutsetStats", "DeviationTable", "EstimateRecord", "SurfaceEnergyReport",
    "beta_grid", "classify_cutset", "convergence_experiment", "cutset_statistics",
    "deviation_tail", "estimate_nu", "exact_nu_constant", "lattice_offset", "map_replicas",
    "nu_cylinder", "nu_table", "phi_samples", "polytope_approximations", "surface_energy",
]
