import csv
import io
import json
import subprocess
import sys

import pytest

from reinforced_walk import __version__, cli

SMALL_FLUCT = ["--p", "0.75", "--checkpoints", "16,32", "--horizon", "2048", "--paths", "200", "--seed", "3"]


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def strip_runtime(doc):
    doc = dict(doc)
    doc.pop(cli.RUNTIME_KEY, None)
    return doc


# --- simulate ------------------------------------------------------------------


def test_simulate_degenerate(capsys):
    code, out, _ = run(["simulate", "--dist", "rademacher", "--p", "1.0", "--horizon", "5", "--seed", "7"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    last = rows[-1]
    assert last["n"] == "5" and abs(float(last["S_1"])) == 5.0
    assert last["M_terminal_flag"] == "1"
    assert [r["a_n"] for r in rows] == ["1", "2", "3", "4", "5"]


def test_simulate_byte_identical(tmp_path, capsys):
    argv = ["simulate", "--dist", "lattice:2", "--p", "0.6", "--horizon", "3000", "--seed", "7"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(argv + ["--out", str(a)], capsys)[0] == 0
    assert run(argv + ["--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_json(capsys):
    code, out, _ = run(["simulate", "--p", "0.5", "--horizon", "8", "--format", "json"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["schema"] == 1 and len(doc["rows"]) == 8


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--p", "1.5", "--horizon", "5"],
        ["simulate", "--p", "0.5"],
        ["simulate", "--p", "0.5", "--horizon", "5", "--checkpoints", "6"],
        ["simulate", "--p", "0.5", "--horizon", "5", "--dist", "cauchy"],
        ["simulate", "--p", "0.5", "--horizon", "5", "--checkpoints", "a,b"],
        ["nonsense"],
        [],
    ],
)
def test_usage_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert err


# --- fluct ---------------------------------------------------------------------


def test_fluct_domain(capsys):
    code, _, err = run(["fluct", "--p", "0.4"], capsys)
    assert code == 2 and "p must lie" in err


def test_fluct_ratio_check(capsys):
    assert run(["fluct", "--p", "0.75", "--checkpoints", "64", "--horizon", "1024", "--paths", "50"], capsys)[0] == 2


def test_fluct_pass_and_report(capsys):
    code, out, _ = run(["fluct"] + SMALL_FLUCT + ["--workers", "1"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == 1 and doc["version"] == __version__
    assert doc["master_seed"] == 3 and doc["config"]["seed"] == 3
    assert doc["limit_variance"] == [2.0]
    assert [c["checkpoint_n"] for c in doc["checkpoints"]] == [16, 32]
    assert all(t["seed"] == 3 for t in doc["tests"])
    assert all(0 <= t["p_value"] <= 1 for t in doc["tests"] if t["p_value"] is not None)
    assert doc["all_pass"] is True


def test_fluct_failure_exit(capsys):
    # at level 0.999 a KS test fails unless its p-value exceeds 0.999
    code, out, _ = run(["fluct"] + SMALL_FLUCT + ["--alpha", "0.999"], capsys)
    assert code == 1
    assert json.loads(out)["all_pass"] is False


def test_fluct_worker_independence(capsys):
    _, one, _ = run(["fluct"] + SMALL_FLUCT + ["--dist", "lattice:2", "--workers", "1"], capsys)
    _, four, _ = run(["fluct"] + SMALL_FLUCT + ["--dist", "lattice:2", "--workers", "4"], capsys)
    a, b = json.loads(one), json.loads(four)
    assert a[cli.RUNTIME_KEY]["workers"] == 1 and b[cli.RUNTIME_KEY]["workers"] == 4
    assert json.dumps(strip_runtime(a), sort_keys=True) == json.dumps(strip_runtime(b), sort_keys=True)
    # coordinate KS + moments per checkpoint, plus 8 projection directions
    assert len(a["tests"]) == 2 * (2 * 2 + 8)


def test_budget_guard(capsys, monkeypatch):
    monkeypatch.setenv("REINFORCE_WALK_BUDGET", "1000")
    code, _, err = run(["fluct"] + SMALL_FLUCT, capsys)
    assert code == 2 and "REINFORCE_WALK_BUDGET" in err


# --- config file ---------------------------------------------------------------


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# experiment\np = 0.75\ncheckpoints = 16,32  # two\nhorizon = 2048\npaths = 200\nseed = 99\n")
    code, out, _ = run(["fluct", "--config", str(cfg), "--seed", "3"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["master_seed"] == 3 and doc["config"]["paths"] == 200
    _, direct, _ = run(["fluct"] + SMALL_FLUCT, capsys)
    assert strip_runtime(json.loads(direct)) == strip_runtime(doc) | {"config": json.loads(direct)["config"]}


@pytest.mark.parametrize("text", ["p 0.75\n", "colour = blue\n", "paths = many\n"])
def test_bad_config(tmp_path, capsys, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert run(["exact", "--config", str(cfg), "--p", "0.75"], capsys)[0] == 2


def test_missing_config(capsys):
    assert run(["exact", "--config", "/no/such/file", "--p", "0.75"], capsys)[0] == 2


# --- bridge --------------------------------------------------------------------


def test_bridge_unsorted(capsys):
    assert run(["bridge", "--grid", "0.5,0.25", "--p", "0.6"], capsys)[0] == 2


def test_bridge_requires_grid(capsys):
    assert run(["bridge", "--p", "0.6"], capsys)[0] == 2


def test_bridge_classical(capsys):
    code, out, _ = run(["bridge", "--grid", "0.25,0.5,0.75", "--classical", "--n", "256", "--paths", "1000"], capsys)
    assert code == 0
    assert json.loads(out)["mode"] == "classical"


def test_bridge_small(capsys):
    argv = ["bridge", "--grid", "0.25,0.5,0.75", "--p", "0.6", "--n", "32", "--horizon", "4096", "--paths", "300"]
    code, out, _ = run(argv, capsys)
    doc = json.loads(out)
    assert code == 0 and doc["all_pass"]
    assert len(doc["covariance_table"]) == 6
    assert doc["limit_covariance"][0][0] == pytest.approx(0.1875 / 0.2)


# --- exact ---------------------------------------------------------------------


def test_exact_a_values(capsys):
    code, out, _ = run(["exact", "--p", "0.75", "--n", "1,2,3"], capsys)
    rows = json.loads(out)["rows"]
    assert code == 0
    assert [r["a_n"] for r in rows] == [1.0, 1.75, 2.40625]


def test_exact_m2(capsys):
    _, out, _ = run(["exact", "--p", "0.75", "--n", "2"], capsys)
    doc = json.loads(out)
    assert doc["rows"][0]["m_n"] == pytest.approx(1.1428571, abs=5e-8)
    assert doc["var_W"]["lower"] <= doc["var_W"]["value"] <= doc["var_W"]["upper"]


def test_exact_variance_limit(capsys):
    code, out, _ = run(["exact", "--p", "0.6", "--variance-limit"], capsys)
    assert code == 0
    assert json.loads(out)["variance_limit"] == pytest.approx(5.0, rel=1e-14)


def test_exact_csv(capsys):
    code, out, _ = run(["exact", "--p", "0.75", "--n", "1,2", "--format", "csv"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and rows[1]["a_n"] == "1.75"


@pytest.mark.parametrize(
    "argv",
    [
        ["exact", "--p", "1.5"],
        ["exact", "--p", "0.75", "--n", "0"],
        ["exact", "--p", "0.3", "--variance-limit"],
        ["exact", "--p", "0.75", "--n", "10", "--horizon", "5"],
        ["exact"],
    ],
)
def test_exact_bad_ranges(argv, capsys):
    assert run(argv, capsys)[0] == 2


# --- enumerate -----------------------------------------------------------------


def test_enumerate_example(capsys):
    code, out, err = run(["enumerate", "--dist", "rademacher", "--p", "0.6", "--n", "2"], capsys)
    assert code == 0
    rows = [(float(v), float(w)) for v, w in list(csv.reader(io.StringIO(out)))[1:]]
    assert rows == [(-2.0, pytest.approx(0.4)), (0.0, pytest.approx(0.2)), (2.0, pytest.approx(0.4))]
    assert "covariance" in err and "mismatch" in err


def test_enumerate_n1(capsys):
    code, out, _ = run(["enumerate", "--dist", "lattice:2", "--p", "0.3", "--n", "1"], capsys)
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0
    assert rows[0] == ["v1", "v2", "probability"]
    assert sorted(float(r[2]) for r in rows[1:]) == [0.25] * 4


def test_enumerate_unbounded(capsys):
    assert run(["enumerate", "--dist", "gaussian:0,1", "--p", "0.6", "--n", "2"], capsys)[0] == 2


def test_enumerate_cap(capsys):
    assert run(["enumerate", "--p", "0.6", "--n", "11"], capsys)[0] == 2


def test_enumerate_mismatch_exit(capsys, monkeypatch):
    monkeypatch.setattr(cli, "exact_second_moment", lambda p, n: 1.0 + 1e-9)
    assert run(["enumerate", "--p", "0.6", "--n", "3"], capsys)[0] == 1


# --- equivalence ---------------------------------------------------------------


def test_equivalence_erw(capsys):
    code, out, _ = run(["equivalence", "--p", "0.6", "--q", "0.8", "--n", "3"], capsys)
    assert code == 0 and json.loads(out)["max_abs_difference"] <= 1e-12


def test_equivalence_wrong_q(capsys):
    assert run(["equivalence", "--p", "0.6", "--q", "0.7", "--n", "3"], capsys)[0] == 1


def test_equivalence_merw(capsys):
    code, out, _ = run(["equivalence", "--dist", "lattice:2", "--p", "0.6", "--q", "0.7", "--n", "3"], capsys)
    assert code == 0 and json.loads(out)["q_from_map"] == pytest.approx(0.7)


@pytest.mark.parametrize(
    "argv",
    [
        ["equivalence", "--p", "0.6", "--n", "5"],
        ["equivalence", "--p", "0.6", "--dist", "gaussian:0,1"],
        ["equivalence", "--p", "0.6", "--q", "1.2"],
    ],
)
def test_equivalence_errors(argv, capsys):
    assert run(argv, capsys)[0] == 2


# --- installed entry point -----------------------------------------------------


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "reinforced_walk.cli", "exact", "--p", "0.6", "--variance-limit"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["schema"] == 1
