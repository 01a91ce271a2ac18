import math

import numpy as np
import pytest

from oracles import staircase_edges
from percoflow.environment import CapacityLaw
from percoflow.errors import MissingDirection
from percoflow.estimators import (
    EstimateRecord,
    beta_grid,
    classify_cutset,
    convergence_experiment,
    cutset_statistics,
    deviation_tail,
    estimate_nu,
    exact_nu_constant,
    map_replicas,
    nu_table,
    polytope_approximations,
    surface_energy,
)
from percoflow.geometry import Ball, Box, ConvexPolytope, edge_boundary

SQUARE = Box([0, 0], [1, 1])
DIAG = (1 / math.sqrt(2), 1 / math.sqrt(2))


def axis_nu(a, b):
    return {(1.0, 0.0): a, (-1.0, 0.0): a, (0.0, 1.0): b, (0.0, -1.0): b}


# -- flow constant --------------------------------------------------------------

@pytest.mark.parametrize("c", [1.0, 2.5])
@pytest.mark.parametrize("n", [8, 9, 32])
def test_flat_cut_estimate_is_exact(c, n):
    rec = estimate_nu((1, 0), n, 1.0, CapacityLaw.constant(c), replicas=3, seed=1)
    assert np.all(rec.values == c)
    assert rec.mean == c and rec.std == 0.0


def test_zero_law_estimate():
    rec = estimate_nu((0, 1), 8, 1.0, CapacityLaw.constant(0.0), replicas=2)
    assert rec.mean == 0.0


@pytest.mark.parametrize("c", [1.0, 2.5])
def test_diagonal_estimate_matches_staircase_count(c):
    n = 32
    rec = estimate_nu(DIAG, n, 1.0, CapacityLaw.constant(c), replicas=2)
    # lattice edges crossed by a unit-length base segment normal to the diagonal, at
    # scale n, placed off the lattice so that it meets no vertex
    half = 0.5 * n * np.array([-DIAG[1], DIAG[0]])
    mid = np.array([0.31, 0.17])
    count = len(staircase_edges(mid - half, mid + half))
    assert abs(count / n - math.sqrt(2)) / math.sqrt(2) < 0.05
    assert abs(rec.mean - c * count / n) / (c * count / n) < 0.05
    assert abs(rec.mean - c * math.sqrt(2)) / (c * math.sqrt(2)) < 0.05
    assert rec.std == 0.0


def test_exact_constant_nu():
    assert exact_nu_constant((1, 0), 2.0) == 2.0
    assert exact_nu_constant((3, 4), 1.0) == pytest.approx(7 / 5)


def test_estimate_record_fields():
    law = CapacityLaw.bernoulli_scaled(0.7, 1.0)
    rec = estimate_nu((1, 0), 8, 1.0, law, replicas=6, seed=3)
    assert rec.replicas == 6
    assert rec.values.min() <= rec.mean <= rec.values.max()
    assert rec.stderr == pytest.approx(rec.std / math.sqrt(6))
    assert np.allclose(rec.raw / 8, rec.values)
    assert [r["replica"] for r in rec.rows()] == list(range(6))
    assert rec.seeds[2] == (3, 2)


def test_phi_and_tau_functionals_are_both_available():
    law = CapacityLaw.uniform(0.5, 1.5)
    tau = estimate_nu((1, 0), 8, 1.0, law, replicas=4, seed=2)
    phi = estimate_nu((1, 0), 8, 1.0, law, replicas=4, seed=2, functional="phi")
    assert np.all(phi.raw <= tau.raw)
    with pytest.raises(ValueError):
        estimate_nu((1, 0), 8, 1.0, law, replicas=2, functional="psi")


def test_axis_symmetry_within_three_standard_errors():
    law = CapacityLaw.bernoulli_scaled(0.7, 1.0)
    a = estimate_nu((1, 0), 16, 1.0, law, replicas=40, seed=11)
    b = estimate_nu((0, 1), 16, 1.0, law, replicas=40, seed=12)
    assert abs(a.mean - b.mean) < 3 * math.hypot(a.stderr, b.stderr)


def test_worker_pool_keeps_order():
    assert map_replicas(abs, [-3, 2, -1, 0], workers=2) == [3, 2, 1, 0]


# -- surface energy -------------------------------------------------------------

def test_surface_energy_examples():
    assert surface_energy(SQUARE.as_polytope(), axis_nu(1, 1)).total == 4.0
    assert surface_energy(SQUARE.as_polytope(), axis_nu(1, 2)).total == 6.0
    cube = Box([0, 0, 0], [1, 1, 1]).as_polytope()
    ones = {tuple(float(x) for x in r): 1.0 for r in np.vstack([np.eye(3), -np.eye(3)])}
    assert surface_energy(cube, ones).total == 6.0


def test_surface_energy_uses_even_symmetry_only():
    rep = surface_energy(SQUARE.as_polytope(), {(1.0, 0.0): 1.0, (0.0, -1.0): 2.0})
    assert rep.total == 6.0
    with pytest.raises(MissingDirection):
        surface_energy(SQUARE.as_polytope(), {(1.0, 0.0): 1.0, (1e-6, 1.0): 2.0})


def test_surface_energy_error_propagation():
    law = CapacityLaw.bernoulli_scaled(0.7, 1.0)
    a = estimate_nu((1, 0), 8, 1.0, law, replicas=5, seed=1)
    b = estimate_nu((0, 1), 8, 1.0, law, replicas=5, seed=2)
    rep = surface_energy(Box([0, 0], [2, 1]).as_polytope(), {(1.0, 0.0): a, (0.0, 1.0): b})
    # faces normal to e1 have total length 2, faces normal to e2 total length 4
    assert rep.total == pytest.approx(2 * a.mean + 4 * b.mean)
    assert rep.stderr == pytest.approx(math.hypot(2 * a.stderr, 4 * b.stderr))
    assert rep.contributions.sum() == pytest.approx(rep.total)
    assert np.all(rep.contributions >= 0)


def test_chopping_never_raises_constant_law_energy():
    # nu(v) = c ||v||_1 is a norm, so cutting a convex polygon by a half-plane lowers I
    c = 1.7
    rng = np.random.default_rng(8)
    for _ in range(25):
        S = ConvexPolytope.from_points(rng.normal(size=(10, 2)))
        u = rng.normal(size=2)
        u /= np.linalg.norm(u)
        P = ConvexPolytope(np.vstack([S.normals, u]), np.append(S.offsets, u @ S.interior_point()))
        nu = {tuple(f.normal.tolist()): exact_nu_constant(f.normal, c) for Q in (S, P) for f in Q.faces}
        assert surface_energy(P, nu).total <= surface_energy(S, nu).total + 1e-12


def test_polytope_approximations():
    P, Q = polytope_approximations(SQUARE)
    assert P is Q and P.volume() == 1.0
    outer, inner = polytope_approximations(Ball([0, 0], 1.0))
    assert inner.volume() < math.pi < outer.volume()


def test_nu_table_constant_law_is_exact():
    outer, inner = polytope_approximations(Ball([0, 0], 1.0))
    table = nu_table([outer, inner], CapacityLaw.constant(2.0), 8)
    for key, val in table.items():
        assert val == exact_nu_constant(key, 2.0)
    # 16 outer and 16 inner normals, interleaved, closed under negation
    assert len(table) == 16


# -- convergence and deviations ---------------------------------------------------

def test_constant_law_convergence_matches_enumeration():
    ns = [4, 8, 16]
    conv = convergence_experiment(SQUARE, CapacityLaw.constant(1.0), ns, replicas=2, seed=0)
    for s in conv.summary:
        n = s["n"]
        assert s["mean"] == len(edge_boundary(SQUARE, n)[0]) / n
        assert s["std"] == 0.0
        assert s["I_outer"] == s["I_inner"] == 4.0
        assert s["gap"] * n <= 8 + 1e-12
    assert len(conv.rows) == 2 * len(ns)


def test_constant_law_convergence_on_a_disk_is_coherent():
    ns = [4, 8, 16, 32]
    conv = convergence_experiment(Ball([0, 0], 0.5), CapacityLaw.constant(1.0), ns, 1, 0)
    # I for the l1-norm surface tension of a disk of radius r is 8 r
    assert conv.energy_outer.total == pytest.approx(4.0, rel=2e-2)
    assert conv.energy_inner.total <= 4.0 <= conv.energy_outer.total
    scaled = [s["gap"] * s["n"] for s in conv.summary]
    assert max(scaled) <= 16


def test_zero_law_convergence():
    conv = convergence_experiment(SQUARE, CapacityLaw.constant(0.0), [4, 8], 2, 0)
    assert all(s["mean"] == 0 and s["I_outer"] == 0 for s in conv.summary)


def test_constant_law_deviation_frequencies_are_degenerate():
    tab = deviation_tail(SQUARE, CapacityLaw.constant(1.0), [4, 8, 16], 0.2, 3, 0)
    freqs = [s["frequency"] for s in tab.summary]
    assert set(freqs) <= {0.0, 1.0}
    # |dE|/n = 4 + 4/n, so the relative error is 1/n
    assert freqs == [1.0, 0.0, 0.0]
    huge = deviation_tail(SQUARE, CapacityLaw.constant(1.0), [4, 8], 10.0, 2, 0)
    assert all(s["frequency"] == 0.0 for s in huge.summary)


def test_deviation_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        deviation_tail(SQUARE, CapacityLaw.constant(1.0), [4], 0.0, 2, 0)


@pytest.mark.slow
def test_random_deviation_frequencies_fall_along_the_schedule():
    # batches of 10 replicas; frequencies should not increase in at least 90% of batches
    law = CapacityLaw.bernoulli_scaled(0.9, 1.0)
    nu = {(1.0, 0.0): 0.78, (0.0, 1.0): 0.78}
    ok = 0
    for batch in range(10):
        tab = deviation_tail(SQUARE, law, [8, 16, 32], 0.2, 10, 1000 + batch, nu=nu)
        f = [s["frequency"] for s in tab.summary]
        ok += all(a >= b for a, b in zip(f, f[1:]))
    assert ok >= 9


# -- cutsets ------------------------------------------------------------------

def test_classify_examples():
    assert classify_cutset([0, 0.5, 2], 1.0) == (1, 1, 1)
    assert classify_cutset([1.0] * 7, 0.5) == (7, 0, 0)
    assert classify_cutset([], 0.5) == (0, 0, 0)


def test_beta_grid():
    assert beta_grid(2) == [4, 8, 16, 32]
    assert beta_grid(3) == [6, 12, 24, 48]


def test_constant_law_cutset_is_all_plus_edges():
    st = cutset_statistics(SQUARE, CapacityLaw.constant(1.0), 8, 0.5, 2, 0)
    assert np.all(st.n_plus == st.size) and np.all(st.n_minus == 0) and np.all(st.n_zero == 0)
    assert np.all(st.capacity == st.boundary_capacity)


def test_cutset_invariants_on_random_laws():
    for law in (CapacityLaw.bernoulli_scaled(0.7, 1.0), CapacityLaw.uniform(0.0, 1.0)):
        st = cutset_statistics(SQUARE, law, 8, 0.3, 10, 5)
        assert np.all(st.n_plus + st.n_minus + st.n_zero == st.size)
        assert np.all(st.eps * st.n_plus <= st.capacity)
        assert np.all(st.capacity <= st.boundary_capacity)
        freqs = list(st.beta_frequencies().values())
        assert all(a >= b for a, b in zip(freqs, freqs[1:]))
        counts, _ = st.histogram()
        assert counts.sum() == 10


def test_cutset_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        cutset_statistics(SQUARE, CapacityLaw.constant(1.0), 4, 0.0, 2, 0)


def test_surface_energy_accepts_estimate_records():
    rec = EstimateRecord("nu_tau", (1.0, 0.0), 8, 1.0, {}, 0, np.array([1.0, 1.0]),
                         np.array([8.0, 8.0]), 1.0, 0.0, 0.0)
    rep = surface_energy(SQUARE.as_polytope(), {(1.0, 0.0): rec, (0.0, 1.0): 1.0})
    assert rep.total == 4.0 and rep.stderr == 0.0
