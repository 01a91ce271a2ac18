"""Experiment configuration files (TOML).

One experiment per file::

    [experiment]
    kind = "converge"          # nu | flow | converge | tail | cutset | wulff
    n = [8, 16, 32]            # strictly increasing scale schedule
    replicas = 32              # default 32
    seed = 7                   # master seed, default 0
    workers = 1                # default 1
    out = "runs/converge"      # default "percoflow-out"

    [body]                     # not used by "nu" and "wulff"
    kind = "box"
    lo = [0, 0]
    hi = [1, 1]

    [law]
    kind = "bernoulli_scaled"
    p = 0.9
    value = 1.0

    [params]                   # optional; see PARAM_KEYS
    h = 1.0

Validation collects every problem with its line number instead of stopping
at the first one.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .environment import CapacityLaw
from .errors import ConfigError, PercoflowError
from .geometry import body_from_dict

KINDS = ("nu", "flow", "converge", "tail", "cutset", "wulff")
DEFAULTS = {"replicas": 32, "seed": 0, "workers": 1, "out": "percoflow-out"}
DEFAULT_PARAMS = {"h": 1.0}

EXPERIMENT_KEYS = {"kind": str, "n": list, "replicas": int, "seed": int, "workers": int, "out": str}
BODY_KEYS = {
    "ball": {"kind": str, "center": list, "radius": (int, float)},
    "box": {"kind": str, "lo": list, "hi": list},
    "polytope": {"kind": str, "vertices": list, "normals": list, "offsets": list},
}
LAW_KEYS = {
    "constant": ("value",),
    "bernoulli_scaled": ("p", "value"),
    "uniform": ("a", "b"),
    "exponential": ("rate",),
    "finite_discrete": ("values", "probs"),
}
PARAM_KEYS = {
    "h": (int, float),
    "direction": list,
    "directions": list,
    "functional": str,
    "relative_eps": (int, float),
    "reference": (int, float),
    "eps": (int, float),
    "betas": list,
    "glued_eps": (int, float),
    "nu_replicas": int,
    "nu_n": int,
    "m": int,
    "dimension": int,
}
NEEDS_BODY = ("flow", "converge", "tail", "cutset")


@dataclass(frozen=True)
class Problem:
    kind: str  # UnknownKey | TypeMismatch | ConstraintViolation | InvalidSyntax
    location: str
    line: int | None
    message: str

    def describe(self):
        at = f"{self.location}" + (f" (line {self.line})" if self.line else "")
        return f"{self.kind} at {at}: {self.message}"

    def to_dict(self):
        return {"kind": self.kind, "location": self.location, "line": self.line,
                "message": self.message}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n_schedule: tuple
    replicas: int
    seed: int
    workers: int
    out: str
    law: CapacityLaw
    body: object = None
    body_spec: dict = None
    params: dict = field(default_factory=dict)

    @property
    def d(self):
        if self.body is not None:
            return self.body.d
        if "direction" in self.params:
            return len(self.params["direction"])
        if "directions" in self.params:
            return len(self.params["directions"][0])
        return int(self.params.get("dimension", 2))

    def echo(self):
        """Deterministic description of the experiment (no run-time knobs)."""
        return {
            "experiment": {"kind": self.kind, "n": list(self.n_schedule),
                           "replicas": self.replicas, "seed": self.seed},
            "body": self.body_spec,
            "law": self.law.to_dict(),
            "params": dict(sorted(self.params.items())),
        }

    def with_overrides(self, **kw):
        vals = {k: getattr(self, k) for k in self.__dataclass_fields__}
        vals.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**vals)


def _line_index(text):
    """``{(section, key): line}`` from a light scan of the document."""
    out = {}
    section = ""
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.split("#", 1)[0].strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), i)
            continue
        m = re.match(r'^("?)([A-Za-z0-9_\-]+)\1\s*=', s)
        if m:
            out.setdefault((section, m.group(2)), i)
    return out


def _type_ok(v, t):
    if t is int or t == (int,):
        return isinstance(v, int) and not isinstance(v, bool)
    if isinstance(t, tuple):
        return any(_type_ok(v, x) for x in t)
    if t is float:
        return isinstance(v, (int, float)) and not isinstance(v, bool)
    return isinstance(v, t)


def _tname(t):
    if isinstance(t, tuple):
        return "number" if set(t) == {int, float} else "/".join(x.__name__ for x in t)
    return {"str": "string", "list": "array"}.get(t.__name__, t.__name__)


def parse_config(text: str) -> ExperimentConfig:
    """Validated :class:`ExperimentConfig`, or :class:`ConfigError` listing
    every problem found."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError([Problem("InvalidSyntax", "<document>", int(m.group(1)) if m else None,
                                   str(exc))]) from None
    lines = _line_index(text)
    problems = []

    def add(kind, section, key, msg):
        loc = section if key is None else f"{section}.{key}"
        problems.append(Problem(kind, loc, lines.get((section, key)) or lines.get((section, None)), msg))

    for sec in doc:
        if sec not in ("experiment", "body", "law", "params"):
            add("UnknownKey", sec, None, f"unknown section [{sec}]")

    exp = doc.get("experiment")
    if not isinstance(exp, dict):
        add("ConstraintViolation", "experiment", None, "missing [experiment] section")
        exp = {}
    for k, v in exp.items():
        if k not in EXPERIMENT_KEYS:
            add("UnknownKey", "experiment", k, f"unknown key {k!r}")
        elif not _type_ok(v, EXPERIMENT_KEYS[k]):
            add("TypeMismatch", "experiment", k, f"expected {_tname(EXPERIMENT_KEYS[k])}")
    kind = exp.get("kind")
    if kind is None:
        add("ConstraintViolation", "experiment", "kind", "experiment kind is required")
    elif isinstance(kind, str) and kind not in KINDS:
        add("ConstraintViolation", "experiment", "kind", f"kind must be one of {list(KINDS)}")

    sched = exp.get("n")
    if sched is None:
        add("ConstraintViolation", "experiment", "n", "n schedule is required")
        sched = []
    elif isinstance(sched, list):
        if not sched:
            add("ConstraintViolation", "experiment", "n", "n schedule is empty")
        elif not all(_type_ok(x, int) for x in sched):
            add("TypeMismatch", "experiment", "n", "n schedule must hold integers")
        elif any(x < 1 for x in sched):
            add("ConstraintViolation", "experiment", "n", "every n must be >= 1")
        elif any(b <= a for a, b in zip(sched, sched[1:])):
            add("ConstraintViolation", "experiment", "n", "n schedule must be strictly increasing")
    settings = {**DEFAULTS, **{k: v for k, v in exp.items() if k in DEFAULTS}}
    for k, lo in (("replicas", 1), ("seed", 0), ("workers", 1)):
        if _type_ok(settings[k], int) and settings[k] < lo:
            add("ConstraintViolation", "experiment", k, f"{k} must be >= {lo}")
    if kind in ("converge", "tail", "nu") and _type_ok(settings["replicas"], int) \
            and settings["replicas"] < 2:
        add("ConstraintViolation", "experiment", "replicas", "standard errors need replicas >= 2")

    law = None
    law_d = doc.get("law")
    if not isinstance(law_d, dict):
        add("ConstraintViolation", "law", None, "missing [law] section")
    else:
        lk = law_d.get("kind")
        if lk not in LAW_KEYS:
            add("ConstraintViolation", "law", "kind", f"law kind must be one of {list(LAW_KEYS)}")
        else:
            allowed = ("kind",) + LAW_KEYS[lk]
            bad = False
            for k in law_d:
                if k not in allowed:
                    add("UnknownKey", "law", k, f"unknown key {k!r} for law {lk}")
                    bad = True
            if not bad:
                try:
                    law = CapacityLaw.from_dict(law_d)
                except PercoflowError as exc:
                    add("ConstraintViolation", "law", None, str(exc))
                except (TypeError, ValueError) as exc:
                    add("TypeMismatch", "law", None, str(exc))

    body, body_spec = None, doc.get("body")
    if body_spec is not None:
        if not isinstance(body_spec, dict) or body_spec.get("kind") not in BODY_KEYS:
            add("ConstraintViolation", "body", "kind", f"body kind must be one of {list(BODY_KEYS)}")
        else:
            allowed = BODY_KEYS[body_spec["kind"]]
            bad = False
            for k, v in body_spec.items():
                if k not in allowed:
                    add("UnknownKey", "body", k, f"unknown key {k!r} for body {body_spec['kind']}")
                    bad = True
                elif not _type_ok(v, allowed[k]):
                    add("TypeMismatch", "body", k, f"expected {_tname(allowed[k])}")
                    bad = True
            if not bad:
                try:
                    body = body_from_dict(body_spec)
                except (PercoflowError, KeyError, TypeError, ValueError) as exc:
                    add("ConstraintViolation", "body", None, f"invalid body: {exc}")
    elif kind in NEEDS_BODY:
        add("ConstraintViolation", "body", None, f"experiment {kind!r} needs a [body] section")

    params = dict(DEFAULT_PARAMS)
    for k, v in (doc.get("params") or {}).items():
        if k not in PARAM_KEYS:
            add("UnknownKey", "params", k, f"unknown key {k!r}")
        elif not _type_ok(v, PARAM_KEYS[k]):
            add("TypeMismatch", "params", k, f"expected {_tname(PARAM_KEYS[k])}")
        else:
            params[k] = v
    for k in ("h", "relative_eps", "eps", "glued_eps"):
        if k in params and _type_ok(params[k], (int, float)) and not params[k] > 0:
            add("ConstraintViolation", "params", k, f"{k} must be positive")
    if kind == "tail" and "relative_eps" not in params:
        add("ConstraintViolation", "params", "relative_eps", "tail experiments need relative_eps")
    if kind == "cutset" and "eps" not in params:
        add("ConstraintViolation", "params", "eps", "cutset experiments need eps")
    if kind == "nu" and "direction" not in params and "directions" not in params:
        add("ConstraintViolation", "params", "direction", "nu experiments need direction(s)")
    if params.get("functional", "tau") not in ("tau", "phi"):
        add("ConstraintViolation", "params", "functional", "functional must be 'tau' or 'phi'")

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        kind=kind, n_schedule=tuple(sched), replicas=settings["replicas"], seed=settings["seed"],
        workers=settings["workers"], out=settings["out"], law=law, body=body,
        body_spec=body_spec, params=params,
    )


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
