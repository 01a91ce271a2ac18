"""``percoflow <kind> --config FILE [--workers N] [--out DIR]``.

Writes ``<kind>_replicas.csv`` (columns ``quantity, n, replica, seed, value,
normalized_value``), ``<kind>_summary.csv``, ``manifest.json`` and
``<kind>.svg`` into the output directory.  Artifact bytes depend only on the
config file and the software version, never on the worker count.

Environment overrides: ``PERCOFLOW_SEED`` and ``PERCOFLOW_WORKERS`` (command
line flags win over both).  Exit codes: 0 success, 1 config error, 2 runtime
error; errors are printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .config import KINDS, ExperimentConfig, Problem, load_config
from .environment import PC_TABLE, derive_seed, validate_law
from .errors import ConfigError, PercoflowError
from .estimators import (
    convergence_experiment,
    cutset_statistics,
    deviation_tail,
    estimate_nu,
    exact_nu_constant,
    map_replicas,
    phi_samples,
)
from .functionals import glued_upper_bound
from .geometry import Box, ConvexPolytope, sphere_directions, wulff_crystal
from . import plotting

REPLICA_COLUMNS = ("quantity", "n", "replica", "seed", "value", "normalized_value")
SCHEMA_VERSION = 1


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def write_csv(path, rows, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


class Run:
    """Collects rows, seeds and extra files for one experiment."""

    def __init__(self, cfg: ExperimentConfig, out, workers):
        self.cfg = cfg
        self.out = out
        self.workers = workers
        self.rows = []
        self.summary = []
        self.summary_columns = ()
        self.seeds = []
        self.files = []

    def seed_for(self, label, *key):
        s = derive_seed(self.cfg.seed, *key)
        self.seeds.append({"label": label, "seed": s})
        return s

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)


def _directions(cfg):
    p = cfg.params
    dirs = p.get("directions") or [p["direction"]]
    return [np.asarray(v, float) / np.linalg.norm(v) for v in dirs]


def _run_nu(run: Run):
    cfg = run.cfg
    h = float(cfg.params["h"])
    functional = cfg.params.get("functional", "tau")
    dirs = _directions(cfg)
    for k, v in enumerate(dirs):
        for n in cfg.n_schedule:
            s = run.seed_for(f"nu dir{k} n={n}", k, n)
            rec = estimate_nu(v, n, h, cfg.law, cfg.replicas, s, functional, run.workers)
            for row in rec.rows():
                row["quantity"] = f"{rec.quantity}_dir{k}"
                run.rows.append(row)
            exact = exact_nu_constant(v, cfg.law.params[0]) if cfg.law.kind == "constant" else None
            run.summary.append({"direction": v.tolist(), "n": n, "h": h, "seed": s,
                                "replicas": cfg.replicas, "mean": rec.mean, "std": rec.std,
                                "stderr": rec.stderr, "exact": exact if exact is not None else ""})
    run.summary_columns = ("direction", "n", "h", "seed", "replicas", "mean", "std", "stderr", "exact")
    first = [r for r in run.summary if r["direction"] == dirs[0].tolist()]
    ref = first[0]["exact"] if first and first[0]["exact"] != "" else None
    plotting.plot_series(run.path("nu.svg"), [r["n"] for r in first], [r["mean"] for r in first],
                         [r["stderr"] for r in first], ylabel="normalized cylinder flow",
                         title=f"direction {np.round(dirs[0], 4).tolist()}", reference=ref,
                         reference_label="exact")


def _glued_task(args):
    P_d, n, law_d, seed, r, eps = args
    from .environment import CapacityLaw, LatticeRegion, sample_environment

    P = ConvexPolytope(P_d["normals"], P_d["offsets"])
    law = CapacityLaw.from_dict(law_d)
    env = sample_environment(LatticeRegion.cube(P.d, 1), law, seed, r)
    return glued_upper_bound(P, n, env, eps).capacity


def _run_flow(run: Run):
    cfg = run.cfg
    A, d = cfg.body, cfg.d
    eps = cfg.params.get("glued_eps")
    P = None
    if eps is not None:
        if isinstance(A, Box):
            P = A.as_polytope()
        elif isinstance(A, ConvexPolytope):
            P = A
        else:
            raise ConfigError([Problem("ConstraintViolation", "params.glued_eps", None,
                                       "glued bounds need a box or polytope body")])
    for n in cfg.n_schedule:
        s = run.seed_for(f"flow n={n}", n)
        res = phi_samples(A, cfg.law, n, cfg.replicas, s, run.workers)
        vals = np.array([r[0] for r in res])
        for r, v in enumerate(vals):
            run.rows.append({"quantity": "phi_to_infinity", "n": n, "replica": r, "seed": s,
                             "value": float(v), "normalized_value": float(v / n ** (d - 1))})
        row = {"quantity": "phi_to_infinity", "n": n, "seed": s, "replicas": cfg.replicas,
               "mean": float(np.mean(vals / n ** (d - 1))),
               "std": float(np.std(vals / n ** (d - 1), ddof=1)) if len(vals) > 1 else float("nan")}
        run.summary.append(row)
        if P is not None:
            pd = {"normals": P.normals.tolist(), "offsets": P.offsets.tolist()}
            tasks = [(pd, n, cfg.law.to_dict(), s, r, float(eps)) for r in range(cfg.replicas)]
            caps = np.array(map_replicas(_glued_task, tasks, run.workers))
            for r, c in enumerate(caps):
                run.rows.append({"quantity": "glued_upper_bound", "n": n, "replica": r, "seed": s,
                                 "value": float(c), "normalized_value": float(c / n ** (d - 1))})
            run.summary.append({"quantity": "glued_upper_bound", "n": n, "seed": s,
                                "replicas": cfg.replicas,
                                "mean": float(np.mean(caps / n ** (d - 1))),
                                "std": float(np.std(caps / n ** (d - 1), ddof=1))
                                if len(caps) > 1 else float("nan")})
    run.summary_columns = ("quantity", "n", "seed", "replicas", "mean", "std")
    phi = [r for r in run.summary if r["quantity"] == "phi_to_infinity"]
    plotting.plot_series(run.path("flow.svg"), [r["n"] for r in phi], [r["mean"] for r in phi],
                         [r["std"] for r in phi], ylabel="min cut to infinity / n^(d-1)")


def _run_converge(run: Run):
    cfg = run.cfg
    p = cfg.params
    for n in cfg.n_schedule:
        run.seeds.append({"label": f"converge n={n}", "seed": derive_seed(cfg.seed, n)})
    run.seeds.append({"label": "nu table", "seed": derive_seed(cfg.seed, 0xA)})
    conv = convergence_experiment(cfg.body, cfg.law, cfg.n_schedule, cfg.replicas, cfg.seed,
                                  nu_n=p.get("nu_n"), nu_replicas=p.get("nu_replicas", 16),
                                  workers=run.workers)
    run.rows = conv.rows
    run.summary = conv.summary
    run.summary_columns = ("n", "seed", "replicas", "mean", "std", "stderr", "min", "max",
                           "I_outer", "I_inner", "gap")
    with open(run.path("surface_energy.json"), "w") as fh:
        json.dump({"outer": conv.energy_outer.to_record(), "inner": conv.energy_inner.to_record()},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    s = conv.summary
    plotting.plot_series(run.path("converge.svg"), [r["n"] for r in s], [r["mean"] for r in s],
                         [r["stderr"] for r in s], ylabel="min cut to infinity / n^(d-1)",
                         reference=conv.energy_outer.total, reference_label="I(outer polytope)")


def _run_tail(run: Run):
    cfg = run.cfg
    p = cfg.params
    for n in cfg.n_schedule:
        run.seeds.append({"label": f"tail n={n}", "seed": derive_seed(cfg.seed, n)})
    run.seeds.append({"label": "nu table", "seed": derive_seed(cfg.seed, 0xA)})
    tab = deviation_tail(cfg.body, cfg.law, cfg.n_schedule, p["relative_eps"], cfg.replicas,
                         cfg.seed, reference=p.get("reference"),
                         nu_replicas=p.get("nu_replicas", 16), workers=run.workers)
    run.rows = tab.rows
    run.summary = [{**r, "reference": tab.reference} for r in tab.summary]
    run.summary_columns = ("n", "seed", "replicas", "reference", "threshold", "frequency",
                           "log_frequency_rate")
    plotting.plot_series(run.path("tail.svg"), [r["n"] for r in tab.summary],
                         [r["frequency"] for r in tab.summary], ylabel="deviation frequency")


def _run_cutset(run: Run):
    cfg = run.cfg
    eps = float(cfg.params["eps"])
    betas = cfg.params.get("betas")
    hist_rows = []
    last = None
    for n in cfg.n_schedule:
        s = run.seed_for(f"cutset n={n}", n)
        st = cutset_statistics(cfg.body, cfg.law, n, eps, cfg.replicas, s, betas, run.workers)
        norm = n ** (st.d - 1)
        for name, arr in (("cutset_size", st.size), ("cutset_capacity", st.capacity),
                          ("n_plus", st.n_plus), ("n_minus", st.n_minus), ("n_zero", st.n_zero),
                          ("edge_boundary_capacity", st.boundary_capacity)):
            for r, v in enumerate(arr):
                run.rows.append({"quantity": name, "n": n, "replica": r, "seed": s,
                                 "value": float(v), "normalized_value": float(v / norm)})
        freqs = st.beta_frequencies()
        for b, f in freqs.items():
            run.summary.append({"n": n, "seed": s, "eps": eps, "beta": b, "frequency": f,
                                "max_normalized_size": float(st.normalized_size.max()),
                                "eps_nplus_le_capacity": bool(np.all(eps * st.n_plus <= st.capacity)),
                                "capacity_le_edge_boundary": bool(
                                    np.all(st.capacity <= st.boundary_capacity))})
        counts, edges = st.histogram()
        for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
            hist_rows.append({"n": n, "bin_lo": float(lo), "bin_hi": float(hi), "count": int(c)})
        last = (n, freqs)
    run.summary_columns = ("n", "seed", "eps", "beta", "frequency", "max_normalized_size",
                           "eps_nplus_le_capacity", "capacity_le_edge_boundary")
    write_csv(run.path("cutset_histogram.csv"), hist_rows, ("n", "bin_lo", "bin_hi", "count"))
    n, freqs = last
    plotting.plot_bars(run.path("cutset.svg"), list(freqs), list(freqs.values()),
                       xlabel="beta", title=f"P(|E| >= beta n^(d-1)), n={n}")


def _run_wulff(run: Run):
    cfg = run.cfg
    d = cfg.d
    m = int(cfg.params.get("m", 32))
    h = float(cfg.params["h"])
    U = sphere_directions(d, m)
    n = cfg.n_schedule[-1]
    nu = []
    for k, u in enumerate(U):
        s = run.seed_for(f"wulff dir{k} n={n}", k, n)
        rec = estimate_nu(u, n, h, cfg.law, cfg.replicas, s, "tau", run.workers)
        for row in rec.rows():
            row["quantity"] = f"nu_tau_dir{k}"
            run.rows.append(row)
        run.summary.append({"direction": u.tolist(), "n": n, "seed": s, "replicas": cfg.replicas,
                            "mean": rec.mean, "std": rec.std, "stderr": rec.stderr})
        nu.append(rec.mean)
    run.summary_columns = ("direction", "n", "seed", "replicas", "mean", "std", "stderr")
    W = wulff_crystal(nu, U)
    with open(run.path("wulff.json"), "w") as fh:
        fh.write(W.to_json(indent=2, sort_keys=True) + "\n")
    if d == 2:
        V = W.vertices
        c = V.mean(axis=0)
        V = V[np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]))]
        plotting.plot_polygons(run.path("wulff.svg"), [V], title="Wulff crystal (outer approx.)")
    else:
        plotting.plot_series(run.path("wulff.svg"), list(range(m)), nu, xlabel="direction index",
                             ylabel="flow constant estimate", logx=False)


RUNNERS = {"nu": _run_nu, "flow": _run_flow, "converge": _run_converge, "tail": _run_tail,
           "cutset": _run_cutset, "wulff": _run_wulff}


def _prepare_out(out):
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".percoflow-write-test")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise ConfigError([Problem("ConstraintViolation", "experiment.out", None,
                                   f"output directory {out!r} is not writable: {exc}")]) from None


def run(cfg: ExperimentConfig, out=None, workers=None):
    """Execute one experiment; returns the list of files written."""
    out = out or cfg.out
    workers = workers or cfg.workers
    _prepare_out(out)
    validate_law(cfg.law, cfg.d)
    r = Run(cfg, out, workers)
    RUNNERS[cfg.kind](r)
    write_csv(r.path(f"{cfg.kind}_replicas.csv"), r.rows, REPLICA_COLUMNS)
    write_csv(r.path(f"{cfg.kind}_summary.csv"), r.summary, r.summary_columns)
    manifest = {
        "software": {"name": "percoflow", "version": __version__},
        "schema": {"version": SCHEMA_VERSION, "replicas_csv": list(REPLICA_COLUMNS),
                   "summary_csv": list(r.summary_columns)},
        "config": cfg.echo(),
        "critical_probability_table": {str(k): v for k, v in sorted(PC_TABLE.items())},
        "seeds": r.seeds,
        "files": sorted(r.files + ["manifest.json"]),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return [os.path.join(out, f) for f in manifest["files"]]


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, float) and math.isnan(o):
        return None
    raise TypeError(type(o).__name__)


def _int_env(name):
    v = os.environ.get(name)
    if v is None or v == "":
        return None
    try:
        return int(v)
    except ValueError:
        raise ConfigError([Problem("TypeMismatch", f"env.{name}", None, "expected an integer")]) \
            from None


def build_parser():
    p = argparse.ArgumentParser(prog="percoflow", description=__doc__.splitlines()[0])
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True, help="experiment TOML file")
    p.add_argument("--workers", type=int, default=None, help="process pool size")
    p.add_argument("--out", default=None, help="output directory")
    return p


def _error(exc, code):
    payload = exc.to_dict() if isinstance(exc, PercoflowError) else {
        "error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.kind != args.kind:
            raise ConfigError([Problem("ConstraintViolation", "experiment.kind", None,
                                       f"config describes {cfg.kind!r}, command asked for "
                                       f"{args.kind!r}")])
        seed = _int_env("PERCOFLOW_SEED")
        workers = args.workers or _int_env("PERCOFLOW_WORKERS")
        if workers is not None and workers < 1:
            raise ConfigError([Problem("ConstraintViolation", "workers", None, "must be >= 1")])
        cfg = cfg.with_overrides(seed=seed)
    except ConfigError as exc:
        return _error(exc, 1)
    except OSError as exc:
        return _error(exc, 1)
    try:
        files = run(cfg, args.out, workers)
    except ConfigError as exc:
        return _error(exc, 1)
    except Exception as exc:  # any module failure is reported, not raised
        return _error(exc, 2)
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
