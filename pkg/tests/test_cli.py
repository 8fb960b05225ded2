import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from bmm_arma.arma_core import make_rng
from bmm_arma.cli import main, read_series


def run(*argv):
    return main([str(a) for a in argv])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def column(path):
    return np.array([float(r["y"]) for r in rows(path)])


@pytest.fixture
def ar1_file(tmp_path):
    out = tmp_path / "ar1.csv"
    assert run("simulate", "--phi", "0.5", "--n", 200, "--seed", 1, "--output", out) == 0
    return out


def test_simulate_deterministic(tmp_path, ar1_file):
    again = tmp_path / "again.csv"
    run("simulate", "--phi", "0.5", "--n", 200, "--seed", 1, "--output", again)
    assert ar1_file.read_bytes() == again.read_bytes()
    raw = ar1_file.read_bytes()
    assert b"\r\n" not in raw and raw.endswith(b"\n")
    assert len(column(ar1_file)) == 200


def test_simulate_white_noise(tmp_path):
    out = tmp_path / "wn.csv"
    run("simulate", "--n", 200, "--seed", 9, "--output", out)
    expected = make_rng(9).standard_normal(700)[500:]
    np.testing.assert_array_equal(column(out), expected)


def test_simulate_rejects_region(tmp_path, capsys):
    code = run("simulate", "--phi", "1.0", "--output", tmp_path / "x.csv")
    assert code == 2
    assert "phi=1" in capsys.readouterr().err


def test_contaminate_counts(tmp_path, ar1_file):
    out = tmp_path / "c.csv"
    assert run("contaminate", "--input", ar1_file, "--epsilon", 0.1, "--size", 6,
               "--output", out) == 0
    x, z = column(ar1_file), column(out)
    assert np.count_nonzero(x != z) == 20
    manifest = json.loads((tmp_path / "c.manifest.json").read_text())
    assert manifest["outlier_indices"] == list(range(10, 201, 10))


def test_fit_clean_ar1(tmp_path, ar1_file, capsys):
    out = tmp_path / "fit.json"
    assert run("fit", "--input", ar1_file, "--p", 1, "--output", out) == 0
    res = json.loads(out.read_text())
    assert res["branch"] == "ARMA"
    assert set(res["params"]) == {"phi1", "mu"}
    assert [s["name"] for s in res["standard_errors"]] == ["phi1", "mu"]
    assert "s* =" in capsys.readouterr().out
    series = rows(tmp_path / "fit.series.csv")
    assert list(series[0]) == ["t", "y", "residual", "cleaned", "flag"]
    assert len(series) == 200
    manifest = json.loads((tmp_path / "fit.manifest.json").read_text())
    assert manifest["inputs"][0]["sha256"]
    assert {"numpy", "scipy", "numba", "bmm_arma"} <= set(manifest["versions"])
    assert manifest["seed"] == 0 and len(manifest["config_hash"]) == 64


def test_fit_white_noise_reports_location_only(tmp_path, ar1_file):
    out = tmp_path / "wn.json"
    assert run("fit", "--input", ar1_file, "--output", out) == 0
    res = json.loads(out.read_text())
    assert list(res["params"]) == ["mu"]
    assert res["s_star"] > 0


def test_fit_large_outliers_cleaned_locally(tmp_path, ar1_file):
    x = column(ar1_file)
    idx = np.array([40, 90, 150])
    x[idx] += 50.0
    src = tmp_path / "out50.csv"
    src.write_text("\n".join(repr(float(v)) for v in x) + "\n")
    out = tmp_path / "f.json"
    assert run("fit", "--input", src, "--p", 1, "--output", out) == 0
    series = rows(tmp_path / "f.series.csv")
    y = np.array([float(r["y"]) for r in series])
    cleaned = np.array([float(r["cleaned"]) for r in series])
    flag = np.array([int(r["flag"]) for r in series])
    changed = np.flatnonzero(cleaned != y)
    np.testing.assert_array_equal(changed, np.flatnonzero(flag))
    assert set(idx) <= set(changed)
    # besides the outliers only isolated clean-data exceedances may be touched
    near = {t + d for t in idx for d in (0, 1)}
    assert len(set(changed) - near) <= 0.1 * len(y)


def test_fit_difference_and_crlf(tmp_path):
    x = np.cumsum(make_rng(2).standard_normal(120))
    src = tmp_path / "rw.csv"
    src.write_bytes(("value\r\n" + "\r\n".join(repr(float(v)) for v in x) + "\r\n").encode())
    np.testing.assert_array_equal(read_series(src), x)
    out = tmp_path / "d.json"
    assert run("fit", "--input", src, "--p", 1, "--difference", 12, "--output", out) == 0
    assert json.loads(out.read_text())["n"] == 108


def test_fit_input_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("y\n1.0\nabc\n")
    assert run("fit", "--input", bad, "--output", tmp_path / "o.json") == 2
    assert run("fit", "--input", tmp_path / "missing.csv") == 2
    short = tmp_path / "short.csv"
    short.write_text("1\n2\n3\n")
    assert run("fit", "--input", short, "--p", 1, "--output", tmp_path / "o.json") == 2


def test_fit_nonconvergence_exit_code(tmp_path, ar1_file):
    out = tmp_path / "nc.json"
    assert run("fit", "--input", ar1_file, "--p", 1, "--max-iter", 1, "--output", out) == 3
    assert json.loads(out.read_text())["converged"] is False


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# simulation settings\nphi = 0.5\nn = 300\nseed = 4\n")
    a = tmp_path / "a.csv"
    assert run("simulate", "--config", cfg, "--output", a) == 0
    assert len(column(a)) == 300
    b = tmp_path / "b.csv"
    assert run("simulate", "--config", cfg, "--n", 50, "--output", b) == 0
    assert len(column(b)) == 50
    cfg.write_text("bogus = 1\n")
    assert run("simulate", "--config", cfg, "--output", b) == 2


def test_replay_reproduces(tmp_path, ar1_file):
    out = tmp_path / "fit.json"
    run("fit", "--input", ar1_file, "--p", 1, "--output", out)
    again = tmp_path / "again.json"
    assert run("replay", tmp_path / "fit.manifest.json", "--output", again) == 0
    assert again.read_bytes() == out.read_bytes()
    assert (tmp_path / "again.series.csv").read_bytes() == (tmp_path / "fit.series.csv").read_bytes()
    m1 = json.loads((tmp_path / "fit.manifest.json").read_text())
    m2 = json.loads((tmp_path / "again.manifest.json").read_text())
    assert m1["config_hash"] == m2["config_hash"]


def test_montecarlo_table(tmp_path):
    out = tmp_path / "mc.csv"
    assert run("montecarlo", "--phi", "0.5", "--reps", 100, "--n", 200, "--size", "6",
               "--estimators", "BMM", "--seed", 7, "--output", out) == 0
    table = rows(out)
    assert list(table[0]) == ["estimator", "scenario", "parameter", "mse"]
    cell = [r for r in table if r["scenario"] == "additive_eps0.1_k6" and r["parameter"] == "phi1"]
    assert float(cell[0]["mse"]) < 0.02


def test_montecarlo_single_rep_and_rerun(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run("montecarlo", "--phi", "0.5", "--reps", 1, "--n", 100, "--output", out) == 0
    assert a.read_bytes() == b.read_bytes()


def test_biascurve(tmp_path):
    out = tmp_path / "bc.csv"
    assert run("biascurve", "--phi", "0.5", "--estimator", "MM", "--k-grid", "0:2:1",
               "--n", 4000, "--output", out) == 0
    curve = rows(out)
    assert list(curve[0]) == ["k", "bias"]
    assert [float(r["k"]) for r in curve] == [0.0, 1.0, 2.0]
    assert float(curve[0]["bias"]) < 0.05
    again = tmp_path / "bc2.csv"
    run("replay", tmp_path / "bc.manifest.json", "--output", again)
    assert again.read_bytes() == out.read_bytes()


def test_module_entry_point(tmp_path):
    out = tmp_path / "s.csv"
    proc = subprocess.run([sys.executable, "-m", "bmm_arma", "simulate", "--n", "30",
                           "--output", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(column(out)) == 30
    proc = subprocess.run([sys.executable, "-m", "bmm_arma", "--help"], capture_output=True,
                          text=True)
    assert "Exit codes" in proc.stdout
