import csv
import json
from pathlib import Path

import pytest

from oracles import edge_boundary2_polygon
from percoflow.cli import main
from percoflow.config import parse_config
from percoflow.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL_NU = """
[experiment]
kind = "nu"
n = [8]

[law]
kind = "constant"
value = 1.0

[params]
direction = [1.0, 0.0]
"""

SMALL = {
    "nu": MINIMAL_NU.replace("n = [8]", "n = [4, 8]\nreplicas = 3"),
    "flow": """
[experiment]
kind = "flow"
n = [4, 8]
replicas = 3
seed = 2
[body]
kind = "box"
lo = [0.0, 0.0]
hi = [1.0, 1.0]
[law]
kind = "bernoulli_scaled"
p = 0.8
value = 1.0
""",
    "converge": """
[experiment]
kind = "converge"
n = [4, 8]
replicas = 3
[body]
kind = "ball"
center = [0.0, 0.0]
radius = 0.6
[law]
kind = "uniform"
a = 0.5
b = 1.5
[params]
nu_replicas = 2
nu_n = 4
""",
    "tail": """
[experiment]
kind = "tail"
n = [4, 8]
replicas = 3
[body]
kind = "box"
lo = [0.0, 0.0]
hi = [1.0, 1.0]
[law]
kind = "constant"
value = 1.0
[params]
relative_eps = 0.2
""",
    "cutset": """
[experiment]
kind = "cutset"
n = [4, 8]
replicas = 4
[body]
kind = "box"
lo = [0.0, 0.0]
hi = [1.0, 1.0]
[law]
kind = "bernoulli_scaled"
p = 0.7
value = 1.0
[params]
eps = 0.5
""",
    "wulff": """
[experiment]
kind = "wulff"
n = [4]
replicas = 2
[law]
kind = "exponential"
rate = 1.0
[params]
m = 8
""",
}


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def problems(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value.problems


# -- parsing --------------------------------------------------------------------

def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL_NU)
    assert cfg.kind == "nu" and cfg.n_schedule == (8,)
    assert cfg.replicas == 32 and cfg.seed == 0 and cfg.workers == 1
    assert cfg.params["h"] == 1.0
    assert cfg.d == 2


def test_unknown_key_reports_its_line():
    text = MINIMAL_NU.replace('kind = "nu"', 'kind = "nu"\nfoo = 3')
    [p] = problems(text)
    assert p.kind == "UnknownKey"
    assert p.location == "experiment.foo"
    assert text.splitlines()[p.line - 1].startswith("foo")


def test_empty_schedule():
    [p] = problems(MINIMAL_NU.replace("n = [8]", "n = []"))
    assert p.kind == "ConstraintViolation" and p.location == "experiment.n"


def test_schedule_must_increase():
    [p] = problems(MINIMAL_NU.replace("n = [8]", "n = [8, 8]"))
    assert p.kind == "ConstraintViolation"


def test_all_problems_are_collected():
    text = MINIMAL_NU.replace("n = [8]", 'n = []\nreplicas = "many"\nbar = 1').replace(
        "value = 1.0", "value = -1.0")
    kinds = sorted(p.kind for p in problems(text))
    assert kinds == ["ConstraintViolation", "ConstraintViolation", "TypeMismatch", "UnknownKey"]


def test_invalid_syntax():
    [p] = problems("[experiment\nkind = 1")
    assert p.kind == "InvalidSyntax"


def test_missing_body_and_direction():
    locs = {p.location for p in problems(SMALL["flow"].split("[body]")[0] + "[law]\nkind = \"constant\"\nvalue = 1.0\n")}
    assert "body" in locs
    locs = {p.location for p in problems(MINIMAL_NU.replace("direction = [1.0, 0.0]", ""))}
    assert "params.direction" in locs


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = parse_config(path.read_text())
    assert cfg.kind in path.stem or cfg.kind == "flow"


def test_problem_records_are_json_ready():
    [p] = problems(MINIMAL_NU.replace("n = [8]", "n = []"))
    assert json.loads(json.dumps(p.to_dict()))["kind"] == "ConstraintViolation"
    assert "experiment.n" in p.describe()


# -- running ------------------------------------------------------------------

@pytest.mark.parametrize("kind", sorted(SMALL))
def test_every_kind_writes_csv_svg_and_manifest(tmp_path, kind, capsys):
    cfg = write(tmp_path, SMALL[kind])
    out = tmp_path / "out"
    assert main([kind, "--config", cfg, "--out", str(out)]) == 0
    for name in (f"{kind}_replicas.csv", f"{kind}_summary.csv", "manifest.json", f"{kind}.svg"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["experiment"]["kind"] == kind
    assert sorted(manifest["files"]) == sorted(p.name for p in out.iterdir())
    header = (out / f"{kind}_replicas.csv").read_text().splitlines()[0]
    assert header == "quantity,n,replica,seed,value,normalized_value"
    # every seed in the table is listed in the manifest
    seeds = {s["seed"] for s in manifest["seeds"]}
    assert {int(r["seed"]) for r in read_rows(out / f"{kind}_replicas.csv")} <= seeds
    assert (out / f"{kind}.svg").read_text().lstrip().startswith("<?xml")


def test_constant_law_convergence_csv_matches_enumeration(tmp_path):
    text = SMALL["tail"].replace('kind = "tail"', 'kind = "converge"').replace(
        "relative_eps = 0.2", "").replace("n = [4, 8]", "n = [2, 4, 8]")
    cfg = write(tmp_path, text)
    assert main(["converge", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    square = [(0, 0), (1, 0), (1, 1), (0, 1)]
    for row in read_rows(tmp_path / "o" / "converge_replicas.csv"):
        n = int(row["n"])
        count = len(edge_boundary2_polygon(square, n))
        assert float(row["value"]) == count
        assert float(row["normalized_value"]) == count / n


def test_outputs_do_not_depend_on_worker_count(tmp_path):
    cfg = write(tmp_path, SMALL["converge"])
    main(["converge", "--config", cfg, "--out", str(tmp_path / "w1"), "--workers", "1"])
    main(["converge", "--config", cfg, "--out", str(tmp_path / "w3"), "--workers", "3"])
    names = sorted(p.name for p in (tmp_path / "w1").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "w3").iterdir())
    for name in names:
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w3" / name).read_bytes(), name


def test_unwritable_output_exits_with_error_json(tmp_path, capsys):
    cfg = write(tmp_path, SMALL["nu"])
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["nu", "--config", cfg, "--out", str(blocker / "sub")])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
    assert err["problems"][0]["location"] == "experiment.out"


def test_invalid_config_exits_one(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL_NU.replace("n = [8]", "n = []"))
    assert main(["nu", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["problems"][0]["kind"] == "ConstraintViolation"


def test_kind_mismatch_exits_one(tmp_path, capsys):
    cfg = write(tmp_path, SMALL["nu"])
    assert main(["flow", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_runtime_failure_exits_two(tmp_path, capsys):
    # the glued construction needs eps > 4d/n
    cfg = write(tmp_path, SMALL["flow"] + "[params]\nglued_eps = 0.5\n")
    assert main(["flow", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ValueError"


def test_environment_overrides(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path, SMALL["flow"])
    monkeypatch.setenv("PERCOFLOW_SEED", "99")
    monkeypatch.setenv("PERCOFLOW_WORKERS", "0")
    # the flag wins over an invalid environment value
    assert main(["flow", "--config", cfg, "--out", str(tmp_path / "o"), "--workers", "2"]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["experiment"]["seed"] == 99
    monkeypatch.setenv("PERCOFLOW_WORKERS", "zero")
    assert main(["flow", "--config", cfg, "--out", str(tmp_path / "p")]) == 1


def test_seed_changes_results(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path, SMALL["flow"])
    main(["flow", "--config", cfg, "--out", str(tmp_path / "a")])
    monkeypatch.setenv("PERCOFLOW_SEED", "5")
    main(["flow", "--config", cfg, "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "flow_replicas.csv").read_bytes()
    b = (tmp_path / "b" / "flow_replicas.csv").read_bytes()
    assert a != b
