"""CLI: dispatch, envelopes, exit codes, determinism, schema validity."""

import json
import subprocess
import sys

import numpy as np
import pytest

from calgeo.cli import run


def run_cli(args, tmp_path, name="report.json"):
    out = tmp_path / name
    code = run(list(args) + ["--out", str(out)])
    payload = json.loads(out.read_text()) if out.exists() else None
    return code, payload


def test_comass_builtin(tmp_path):
    code, rep = run_cli(["comass", "--calibration", "builtin:associative",
                         "--seed", "7", "--restarts", "12"], tmp_path)
    assert code == 0
    assert rep["status"] == "ok"
    assert abs(rep["payload"]["value"] - 1.0) <= 1e-6
    assert rep["seed"] == 7
    assert rep["tool"] == "calgeo"


def test_torus_scan_convexity(tmp_path):
    code, rep = run_cli(["torus-scan", "--R", "2", "--r", "1.01",
                         "--resolution", "8"], tmp_path)
    assert code == 0
    assert rep["payload"]["convex"] is False
    code, rep = run_cli(["torus-scan", "--R", "2", "--r", "0.99",
                         "--resolution", "8"], tmp_path)
    assert rep["payload"]["convex"] is True


def test_torus_scan_csv(tmp_path):
    code, rep = run_cli(["torus-scan", "--R", "2", "--r", "0.9",
                         "--resolution", "4", "--format", "csv"], tmp_path)
    assert code == 0
    csv = rep["payload"]["csv"]
    header, *rows = csv.strip().splitlines()
    assert header == "u,v,x,y,z,vacuous,margin"
    assert len(rows) == 16


def test_verify_identities_deterministic(tmp_path):
    code1, rep1 = run_cli(["verify", "--suite", "identities", "--seed", "1"],
                          tmp_path, "a.json")
    code2, rep2 = run_cli(["verify", "--suite", "identities", "--seed", "1"],
                          tmp_path, "b.json")
    assert code1 == code2 == 0
    assert json.dumps(rep1["payload"], sort_keys=True) == \
        json.dumps(rep2["payload"], sort_keys=True)
    assert rep1["payload"]["all_passed"] is True


def test_check_psh_inline_jet(tmp_path):
    jet = json.dumps({"value": 0.0, "grad": [0.0] * 4,
                      "hess": [[2.0 if i == j else 0.0 for j in range(4)]
                               for i in range(4)]})
    code, rep = run_cli(["check-psh", "--calibration", "builtin:kahler?n=2",
                         "--jet", jet], tmp_path)
    assert code == 0
    assert rep["payload"]["class"] == "strictly_psh"
    assert abs(rep["payload"]["lower_margin"] - 4.0) <= 1e-6


def test_laplacian_command(tmp_path):
    jet = json.dumps({"value": 0.0, "grad": [0.0] * 3,
                      "hess": np.eye(3).tolist()})
    code, rep = run_cli(["laplacian", "--calibration", "builtin:volume?n=3",
                         "--jet", jet], tmp_path)
    assert code == 0
    assert abs(rep["payload"]["laplacian"] - 3.0) <= 1e-12


def test_cone_membership_and_hyperplane(tmp_path):
    plane = json.dumps({"n": 3, "p": 2,
                        "frame": [[1, 0], [0, 1], [0, 0]]})
    code, rep = run_cli(["cone", "--calibration",
                         "builtin:coordinate?n=3&indices=0,1",
                         "--target", plane], tmp_path)
    assert code == 0
    assert rep["payload"]["verdict"] == "inside"
    assert rep["payload"]["recheck"]["ok"] is True
    evec = json.dumps([0.0, 0.0, 1.0])
    code, rep = run_cli(["cone", "--calibration",
                         "builtin:coordinate?n=3&indices=0,1",
                         "--hyperplane-e", evec], tmp_path)
    assert rep["payload"]["on_boundary"] is False


def test_witness_flagged_when_not_found(tmp_path):
    # on R^1 every plurisubharmonic quadratic is convex: no witness exists
    code, rep = run_cli(["witness", "--calibration", "builtin:volume?n=1"],
                        tmp_path)
    assert code == 2
    assert rep["status"] == "flagged"
    assert rep["payload"]["found"] is False


def test_error_exit_code_and_message(tmp_path):
    code, rep = run_cli(["comass", "--calibration", "builtin:nonsense"],
                        tmp_path)
    assert code == 1
    assert rep["status"] == "error"
    assert "unknown calibration" in rep["error"]


def test_unknown_flag_rejected(tmp_path):
    code = run(["comass", "--calibration", "builtin:kahler?n=2",
                "--no-such-flag"])
    assert code != 0


def test_free_subcommand(tmp_path):
    T = json.dumps(np.eye(4)[:, :2].tolist())
    code, rep = run_cli(["free", "--calibration", "builtin:kahler?n=2",
                         "--subspace", T], tmp_path)
    assert code == 0
    assert rep["payload"]["free"] is False


def test_dist_jet_subcommand(tmp_path):
    surface = json.dumps({"kind": "sphere", "r": 1.0})
    point = json.dumps([0.0, 0.0, 1.0])
    code, rep = run_cli(["dist-jet", "--surface", surface, "--point", point],
                        tmp_path)
    assert code == 0
    assert np.allclose(rep["payload"]["hess"], np.diag([0, 0, 1.0]))


def test_hull_subcommand(tmp_path):
    pts = json.dumps([[1.0, 0], [0, 1.0], [-1.0, 0], [0, -1.0]])
    code, rep = run_cli(["hull", "--calibration", "builtin:volume?n=2",
                         "--points", pts, "--query", "[0.0, 0.0]"], tmp_path)
    assert code == 0
    assert rep["payload"]["inside"] is True


def test_planes_and_span_commands(tmp_path):
    code, rep = run_cli(["planes", "--calibration", "builtin:kahler?n=2",
                         "--count", "4"], tmp_path)
    assert code == 0 and rep["payload"]["count"] == 4
    code, rep = run_cli(["span", "--calibration", "builtin:kahler?n=2"],
                        tmp_path)
    assert code == 0 and rep["payload"]["rank"] == 4


def test_calibration_file_round_trip_through_cli(tmp_path):
    from calgeo.catalog import load_calibration, make_calibration, save_calibration

    cal = make_calibration("double_point", n=3)
    path = tmp_path / "dp.json"
    save_calibration(cal, path)
    code, rep = run_cli(["comass", "--calibration", str(path),
                         "--restarts", "16"], tmp_path)
    assert code == 0
    assert abs(rep["payload"]["value"] - 1.0) <= 1e-6


def test_emitted_reports_validate_against_schemas(tmp_path):
    import jsonschema
    from importlib import resources

    def load_schema(name):
        with resources.files("calgeo.schemas").joinpath(name).open() as fh:
            return json.load(fh)

    code, rep = run_cli(["comass", "--calibration", "builtin:kahler?n=2",
                         "--restarts", "8"], tmp_path)
    jsonschema.validate(rep, load_schema("report.schema.json"))
    for pl in rep["payload"]["argplanes"]:
        jsonschema.validate(pl, load_schema("plane.schema.json"))

    plane = json.dumps({"n": 3, "p": 2, "frame": [[1, 0], [0, 1], [0, 0]]})
    code, rep = run_cli(["cone", "--calibration",
                         "builtin:coordinate?n=3&indices=0,1",
                         "--target", plane], tmp_path, "cone.json")
    payload = dict(rep["payload"])
    payload.pop("recheck")
    jsonschema.validate(payload, load_schema("certificate.schema.json"))

    from calgeo.catalog import calibration_to_dict, make_calibration

    jsonschema.validate(calibration_to_dict(make_calibration("kahler", n=2)),
                        load_schema("calibration.schema.json"))


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "calgeo", "comass", "--calibration",
         "builtin:volume?n=3", "--restarts", "4"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    rep = json.loads(proc.stdout)
    assert abs(rep["payload"]["value"] - 1.0) <= 1e-9
