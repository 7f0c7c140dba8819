import csv
import io
import json

import jsonschema
import pytest

from conftest import SCENARIOS
from wittenlab.cli import CATALOG, main
from wittenlab.scenario import load_config, report_schema, run_scenario

BAD_M = """
[scenario]
name = bad_m

[model]
kind = sphere
n = 3
N = 100

[initial]
kind = uniform

[solve]
dt = 0.01
horizon = 0.2
output_times = 0.1:0.2:0.1

[monitor.li_yau]
check = li_yau
m = 2
"""


def _exit(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    return exc.value.code


def test_dimension_precondition_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(BAD_M)
    assert main(["run", str(cfg)]) == 3
    assert "m >= n" in capsys.readouterr().err


def test_usage_errors_exit_with_config_code(capsys):
    assert _exit(["run", "x.ini", "--bogus"]) == 3
    assert _exit([]) == 3
    assert _exit(["run", "x.ini", "--refine", "two"]) == 3


def test_missing_and_malformed_config(tmp_path, capsys):
    assert main(["run", str(tmp_path / "none.ini")]) == 3
    cfg = tmp_path / "junk.ini"
    cfg.write_text("[model]\nkind = torus\n")
    assert main(["run", str(cfg)]) == 3
    assert main(["calibrate", str(cfg)]) == 3


def test_list_catalog_text(capsys):
    assert main(["list-catalog"]) == 0
    out = capsys.readouterr().out
    assert "shrinking_sphere — Ricci flow on round sphere" in out
    for group in CATALOG:
        assert f"{group}:" in out


def test_list_catalog_json(capsys):
    assert main(["list-catalog", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert set(data) == {"models", "flows", "potentials", "functionals", "monitors"}
    assert "li_yau" in data["monitors"] and "W_K" in data["functionals"]


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def rigidity_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("rigidity")
    code = main(["run", str(SCENARIOS / "euclidean_rigidity.ini"), "--out", str(out),
                 "--seed", "7"])
    return code, out


def test_rigidity_run(rigidity_run):
    code, out = rigidity_run
    assert code == 0
    rows = _read_csv(out / "series.csv")
    assert rows and max(abs(float(r["W_m"])) for r in rows) <= 1e-3
    report = json.loads((out / "report.json").read_text())
    jsonschema.validate(report, report_schema())
    assert report["seed"] == 7
    assert report["monitors"]["li_yau"]["verdict"] in ("holds", "holds-within-tolerance")


def test_refinement_artifacts(rigidity_run):
    _, out = rigidity_run
    level = out / "refine" / "level_1"
    assert (level / "series.csv").exists() and (level / "report.json").exists()
    orders = json.loads((out / "refine" / "orders.json").read_text())
    assert "W_m" in orders["identities"]
    base = json.loads((out / "report.json").read_text())
    fine = json.loads((level / "report.json").read_text())
    assert fine["resolution"]["dt"] == pytest.approx(base["resolution"]["dt"] / 2)


def test_negative_control_run(tmp_path, capsys):
    code = main(["run", str(SCENARIOS / "sphere_rlsi_control.ini"), "--out", str(tmp_path)])
    assert code == 0
    assert "expected-and-found" in capsys.readouterr().out
    report = json.loads((tmp_path / "report.json").read_text())
    rep = report["monitors"]["rlsi_control"]
    assert rep["premise_verdict"] == "negative_control"
    assert rep["control_outcome"] == "expected-and-found"


def test_calibrate_command(capsys):
    assert main(["calibrate", str(SCENARIOS / "sphere_rlsi_control.ini")]) == 0
    data = json.loads(capsys.readouterr().out)
    tol = data["rlsi_control"]
    assert tol["C1"] >= 0 and tol["C2"] >= 0


def test_csv_is_deterministic():
    cfg = load_config(str(SCENARIOS / "sphere_rlsi_control.ini"))
    a = run_scenario(cfg, refine=0).csv_text
    b = run_scenario(cfg, refine=0, seed=99).csv_text
    assert a == b
    header = next(csv.reader(io.StringIO(a)))
    assert header[0] == "t" and header[-1] == "margin:rlsi_control"
    assert "\r" not in a


def test_report_schema_rejects_missing_fields():
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"scenario": "x"}, report_schema())
