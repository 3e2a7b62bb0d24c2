import json
import subprocess
import sys

import pytest

from hesslab.cli import EXIT_OK, EXIT_OPERATIONAL, EXIT_VERIFY, main


def report(path):
    return json.loads((path / "report.json").read_text(encoding="utf-8"))


def without_timestamp(path):
    data = report(path)
    data["header"].pop("timestamp")
    data["config"].pop("out")
    return data


def test_solve_example(tmp_path):
    out = tmp_path / "solve"
    assert main(["solve", "--op", "ma", "--n", "2", "--domain", "ball", "--h", "0.03125", "--out", str(out)]) == EXIT_OK
    rep = report(out)
    assert rep["result"]["solve"]["residual_max"] <= rep["config"]["tol"]
    header = (out / "field.csv").read_text().splitlines()[0]
    assert header == "x,y,u"
    assert rep["config"]["command"] == "solve" and rep["verified"]


def test_audit_example(tmp_path):
    out = tmp_path / "audit"
    code = main(["audit", "--op", "khessian", "--k", "2", "--n", "3", "--samples", "10000", "--seed", "7", "--out", str(out)])
    assert code == EXIT_OK
    rep = report(out)
    assert rep["failures"] == []
    assert rep["result"]["operators"][0]["total_violations"] == 0


def test_check_forced_failure(tmp_path):
    out = tmp_path / "check"
    args = ["check", "--op", "khessian", "--k", "1", "--n", "2", "--domain", "box", "--h", "0.0625",
            "--condition", "d", "--D1", "0", "--D2", "0.5", "--out", str(out)]
    assert main(args) == EXIT_VERIFY
    rep = report(out)
    assert not rep["result"]["conditions"]["d"]["satisfied"]
    assert (out / "field.csv").exists()


def test_check_single_spectrum(tmp_path):
    ok = ["check", "--op", "khessian", "--k", "2", "--n", "3", "--lam=5,5,-2", "--condition", "khess", "--A", "10"]
    assert main(ok + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert report(tmp_path / "a")["result"]["conditions"]["khess"]["extra"]["conclusion_holds"]
    bad = ["check", "--op", "pma", "--p", "3", "--n", "4", "--lam=-2,-2,5,5", "--condition", "pma", "--A", "3"]
    assert main(bad + ["--out", str(tmp_path / "b")]) == EXIT_VERIFY


def test_estimate_and_table(tmp_path):
    out = tmp_path / "est"
    assert main(["estimate", "--h-list", "0.0625,0.03125", "--out", str(out)]) == EXIT_OK
    lines = (out / "table.csv").read_text().splitlines()
    assert lines[0].startswith("h,functional_sup")
    assert len(lines) == 3
    assert report(out)["result"]["default_exponents"] == {"alpha": 1.5, "beta": 10.0}


def test_blowdown_quadratic(tmp_path):
    out = tmp_path / "bd"
    assert main(["blowdown", "--a", "2", "--n", "2", "--out", str(out)]) == EXIT_OK
    rows = (out / "table.csv").read_text().splitlines()
    assert len(rows) == 5
    assert report(out)["result"]["blowdown"]["all_within_bound"]


@pytest.mark.parametrize(
    "args",
    [
        ["solve", "--op", "quotient", "--k", "1", "--l", "2", "--n", "3"],
        ["solve", "--op", "pma", "--p", "4", "--n", "3"],
        ["solve", "--op", "ma", "--n", "3", "--domain", "ball", "--h", "0.001"],
        ["estimate", "--h-list", "0.03125,0.0625"],
        ["check", "--condition", "d"],
        ["solve", "--op", "khessian"],
    ],
)
def test_invalid_config_writes_nothing(tmp_path, args):
    out = tmp_path / "never"
    assert main(args + ["--out", str(out)]) == EXIT_OPERATIONAL
    assert not out.exists()


def test_unknown_command_and_bad_config_file(tmp_path):
    assert main(["frobnicate"]) == EXIT_OPERATIONAL
    bad = tmp_path / "cfg.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_OPERATIONAL
    bad.write_text(json.dumps({"bogus_key": 1}))
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_OPERATIONAL
    assert not (tmp_path / "x").exists()


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("occupied")
    assert main(["solve", "--out", str(blocker / "sub")]) == EXIT_OPERATIONAL


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"op": "khessian", "k": 1, "n": 2, "h": 0.125}))
    out = tmp_path / "o"
    assert main(["solve", "--config", str(cfg), "--h", "0.0625", "--out", str(out)]) == EXIT_OK
    rep = report(out)
    assert rep["config"]["h"] == 0.0625 and rep["config"]["op"] == "khessian"


def test_deterministic_reports(tmp_path):
    args = ["audit", "--n", "2", "--samples", "500", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert without_timestamp(tmp_path / "a") == without_timestamp(tmp_path / "b")
    raw_a = (tmp_path / "a" / "report.json").read_text().splitlines()
    raw_b = (tmp_path / "b" / "report.json").read_text().splitlines()
    diff = [(x, y) for x, y in zip(raw_a, raw_b) if x != y]
    assert all('"timestamp"' in x or '"out"' in x for x, _ in diff)


def test_sweep_parallel(tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"run": "solve", "sweep": {"h": [0.0625, 0.03125], "op": ["ma", "khessian"]}, "k": 1}))
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg), "--workers", "2", "--out", str(out)]) == EXIT_OK
    index = json.loads((out / "index.json").read_text())
    assert [r["exit_code"] for r in index["runs"]] == [0, 0, 0, 0]
    for r in index["runs"]:
        assert (out / r["report"]).exists()


def test_sweep_validates_every_point(tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"run": "solve", "sweep": {"h": [0.0625, -1.0]}}))
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == EXIT_OPERATIONAL
    assert not out.exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "hesslab", "blowdown", "--a", "1", "--out", str(tmp_path / "m")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
