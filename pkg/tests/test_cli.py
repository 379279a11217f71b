import csv
import json
import math
import subprocess
import sys

import pytest

from rfcollapse.cli import invoke, main
from rfcollapse.metric import sample_circle, write_distance_matrix

SMOKE = """\
scenario: family_convergence
i_list: [16, 64]
t_grid: [0.0, 0.25, 0.5]
nr: 32
ns: 8
"""


@pytest.fixture
def smoke(tmp_path):
    p = tmp_path / "smoke.yaml"
    p.write_text(SMOKE)
    return p


def test_run_writes_report_and_series(tmp_path, smoke):
    out = tmp_path / "out"
    res = invoke(["--out-dir", str(out), "run", str(smoke)])
    assert res.exit_code == 0, res.lines
    doc = json.loads((out / "report.json").read_text())
    assert doc["scenario"] == "family_convergence" and doc["timestamp"]
    rows = list(csv.reader((out / "series.csv").open()))
    assert rows[0][:6] == ["scenario", "i", "t", "gh_lower", "gh_upper", "K_max"]
    assert len(rows) == 1 + 2 * 3


def test_seed_override_is_recorded(tmp_path, smoke):
    invoke(["--seed", "7", "--out-dir", str(tmp_path), "run", str(smoke)])
    assert json.loads((tmp_path / "report.json").read_text())["config"]["seed"] == 7


def test_failed_assertion_exits_1(tmp_path):
    # the coarse grid cannot resolve the nonstationarity witness
    p = tmp_path / "c.yaml"
    p.write_text("scenario: collapsing_torus\ni_list: [4]\nt_grid: [0.0, 0.25]\nnr: 32\nns: 8\n"
                 "monitor_ns: 16\nbudget: 50\ncontainment_times: [0.1]\nlandmark_step_r: 4\n")
    res = invoke(["--out-dir", str(tmp_path), "run", str(p)])
    assert res.exit_code == 1
    assert any("FAIL" in line for line in res.lines)


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "missing.yaml"],
        ["frobnicate"],
        ["--jobs", "0", "verify", "quotient"],
        ["verify", "everything"],
        ["flow", "torus", "--t", "0.1", "--f", "cos(r)"],
        ["flow", "nil", "--a0", "-1", "--b0", "1", "--c0", "1", "--t", "1"],
        [],
    ],
)
def test_usage_errors_exit_2(tmp_path, argv):
    res = invoke(["--out-dir", str(tmp_path)] + argv)
    assert res.exit_code == 2, res.lines


def test_unknown_scenario_exits_2(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("scenario: spheres\n")
    res = invoke(["run", str(p)])
    assert res.exit_code == 2 and "scenario" in res.lines[0]


def test_internal_error_exits_3(tmp_path, monkeypatch):
    import rfcollapse.cli as cli

    def boom(args):
        raise RuntimeError("unexpected")

    monkeypatch.setitem(cli.COMMANDS, "verify", boom)
    assert invoke(["verify", "quotient"]).exit_code == 3


def test_gh_command(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    write_distance_matrix(a, sample_circle(1.0, 4))
    write_distance_matrix(b, sample_circle(1.0, 4))
    res = invoke(["--out-dir", str(tmp_path), "gh", "--a", str(a), "--b", str(b)])
    assert res.exit_code == 0
    doc = json.loads((tmp_path / "gh.json").read_text())
    assert doc["method"] == "brute" and doc["upper"] == pytest.approx(1e-3)
    res = invoke(["--out-dir", str(tmp_path), "gh", "--a", str(a), "--b", str(b), "--search", "--budget", "50"])
    assert json.loads((tmp_path / "gh.json").read_text())["method"] == "search"
    big = tmp_path / "big.txt"
    write_distance_matrix(big, sample_circle(1.0, 10))
    assert invoke(["gh", "--a", str(big), "--b", str(a), "--brute"]).exit_code == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("nonsense\n")
    assert invoke(["gh", "--a", str(bad), "--b", str(a)]).exit_code == 2


def test_flow_nil_reference(tmp_path):
    res = invoke(["--out-dir", str(tmp_path), "flow", "nil", "--a0", "1", "--b0", str(math.sqrt(3)),
                  "--c0", str(math.sqrt(3)), "--t", "1", "--dt", "1e-3"])
    assert res.exit_code == 0
    doc = json.loads((tmp_path / "flow.json").read_text())
    assert abs(doc["A"] - 2 ** (-1 / 3)) <= 1e-8
    rows = list(csv.reader((tmp_path / "trace.csv").open()))
    assert rows[0] == ["time", "A", "B", "C", "K_max"] and len(rows) == 1002


def test_flow_torus(tmp_path):
    res = invoke(["--out-dir", str(tmp_path), "flow", "torus", "--t", "0.1", "--nr", "32", "--lambda", "0.5"])
    assert res.exit_code == 0
    doc = json.loads((tmp_path / "flow.json").read_text())
    assert doc["c_hat_final"] > doc["c_hat_initial"]
    rows = list(csv.reader((tmp_path / "trace.csv").open()))
    assert all(abs(float(r[3])) < 1e-10 for r in rows[1:])


@pytest.mark.parametrize("suite", ["gh-axioms", "flow-bounds", "nil-residual", "quotient"])
def test_verify_suites_pass(tmp_path, suite):
    res = invoke(["--out-dir", str(tmp_path), "verify", suite])
    assert res.exit_code == 0, res.lines
    assert (tmp_path / f"verify-{suite}.json").exists()


def test_main_prints_and_returns_code(tmp_path, capsys):
    code = main(["--out-dir", str(tmp_path), "verify", "nil-residual"])
    assert code == 0
    assert "nil-residual: PASS" in capsys.readouterr().out


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rfcollapse.cli", "--out-dir", str(tmp_path), "verify", "nil-residual"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "PASS" in proc.stdout


def test_runs_are_byte_identical_modulo_timestamp(tmp_path, smoke):
    texts = []
    for k, jobs in enumerate(["1", "1", "2"]):
        out = tmp_path / f"r{k}"
        assert invoke(["--jobs", jobs, "--out-dir", str(out), "run", str(smoke)]).exit_code == 0
        doc = json.loads((out / "report.json").read_text())
        doc.pop("timestamp")
        texts.append((json.dumps(doc, sort_keys=True), (out / "series.csv").read_bytes()))
    assert texts[0] == texts[1] == texts[2]
