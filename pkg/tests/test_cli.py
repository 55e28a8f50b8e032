import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from dualrail.cli import main

from oracles import uniform_spectrum


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_spectrum_counts(capsys):
    code, out, _ = run(capsys, "spectrum", "--n", "5", "--a", "0.3")
    assert code == 0
    assert len(rows(out)) == 5
    code, out, _ = run(capsys, "spectrum", "--n", "30", "--a", "0.5")
    assert code == 0
    assert max(float(r["residual"]) for r in rows(out)) < 1e-6


def test_spectrum_uniform_chain(capsys):
    code, out, _ = run(capsys, "spectrum", "--n", "30", "--a", "1.0")
    assert code == 0
    analytic = np.sort([float(r["analytic"]) for r in rows(out)])
    np.testing.assert_allclose(analytic, uniform_spectrum(30), atol=1e-10)


def test_spectrum_invalid_input(capsys):
    code, _, err = run(capsys, "spectrum", "--n", "5", "--a", "1.5")
    assert code == 2
    assert "error" in err


def test_sweep_surface_and_max(capsys):
    code, out, err = run(capsys, "sweep", "--n", "150", "--a", "0.05")
    assert code == 0
    table = rows(out)
    assert len(table) == 901 * 101
    assert max(float(r["P"]) for r in table) >= 0.93
    assert "max P" in err


def test_sweep_json_summary(capsys):
    code, out, _ = run(capsys, "sweep", "--n", "20", "--a", "0.3", "--t1", "0:50:1",
                       "--t2", "0:10:1", "--format", "json")
    assert code == 0
    d = json.loads(out)
    assert set(d) == {"N", "a", "t1", "t2", "P"}


def test_sweep_pmax_vs_n(capsys):
    code, out, _ = run(capsys, "sweep", "--pmax-vs-n", "10:300:10", "--a", "0.05")
    assert code == 0
    table = rows(out)
    assert len(table) == 30
    assert [int(r["N"]) for r in table] == list(range(10, 301, 10))


def test_sweep_pmax_vs_a_sorted(capsys):
    code, out, _ = run(capsys, "sweep", "--n", "40", "--pmax-vs-a", "0.1:0.5:0.1",
                       "--t1", "0:200:1", "--t2", "0:20:1", "--sort", "p")
    assert code == 0
    p = [float(r["P"]) for r in rows(out)]
    assert len(p) == 5 and p == sorted(p, reverse=True)


def test_sweep_table(capsys):
    code, out, _ = run(capsys, "sweep", "--table1")
    assert code == 0
    table = rows(out)
    assert len(table) == 13
    assert all(r["within_tol"] == "true" for r in table)


def test_sweep_bad_range(capsys):
    code, _, _ = run(capsys, "sweep", "--t1", "0:10:0")
    assert code == 2


def test_disorder_requires_seed(capsys):
    code, _, err = run(capsys, "disorder", "--n", "10", "--delta", "0.01", "--samples", "2")
    assert code == 2
    assert "--seed" in err


def test_disorder_deterministic_files(tmp_path, capsys):
    argv = ["disorder", "--n", "30", "--delta", "0.01", "--samples", "20", "--seed", "7",
            "--a-grid", "0.1:0.3:0.1", "--t-max", "300"]
    first, second = tmp_path / "one.csv", tmp_path / "two.csv"
    assert run(capsys, *argv, "-o", str(first))[0] == 0
    assert run(capsys, *argv, "-o", str(second))[0] == 0
    assert first.read_bytes() == second.read_bytes()
    assert (tmp_path / "one_samples.csv").read_bytes() == (tmp_path / "two_samples.csv").read_bytes()
    assert len(rows((tmp_path / "one_samples.csv").read_text())) == 3 * 20
    header = first.read_text().splitlines()[0]
    assert header == "a,P_ave,stderr,no_intersection"


def test_disorder_fixture(capsys):
    code, out, _ = run(capsys, "disorder", "--fixture", "--a", "0.11", "--min-p", "0.85")
    assert code == 0
    (row,) = rows(out)
    assert float(row["P_ave"]) >= 0.85


def test_disorder_zero_delta_has_no_spread(capsys):
    code, out, _ = run(capsys, "disorder", "--n", "12", "--delta", "0", "--samples", "3",
                       "--a-grid", "0.2:1:0.4", "--t-max", "100")
    assert code == 0
    assert all(float(r["stderr"]) == 0 for r in rows(out))


def test_disorder_json_embeds_samples(capsys):
    code, out, _ = run(capsys, "disorder", "--n", "10", "--delta", "0.01", "--samples", "2",
                       "--seed", "1", "--a", "0.3", "--t-max", "100", "--format", "json")
    assert code == 0
    d = json.loads(out)
    assert len(d["per_sample"]) == 2
    assert d["ensemble"]["seed"] == 1


def test_init_noise_profile(capsys):
    code, out, _ = run(capsys, "init-noise", "single", "--profile-m", "--n", "30", "--a", "0.06",
                       "--t", "488")
    assert code == 0
    table = rows(out)
    assert [int(r["m"]) for r in table] == list(range(2, 31))
    best = max(table, key=lambda r: float(r["P1"]))
    assert best["m"] == "30"


def test_init_noise_profile_needs_time(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["init-noise", "single", "--profile-m"])
    assert exc.value.code == 2


def test_init_noise_average(capsys):
    code, out, _ = run(capsys, "init-noise", "single", "--avg", "--n", "30", "--x", "0.1",
                       "--a-grid", "0.04:0.08:0.01")
    assert code == 0
    best = max(rows(out), key=lambda r: float(r["P_ave"]))
    assert float(best["P_ave"]) == pytest.approx(0.80, abs=0.05)


def test_init_noise_collective_exact_symmetric(capsys):
    code, out, _ = run(capsys, "init-noise", "collective", "--exact", "--n", "4", "--a", "0.06",
                       "--t", "18")
    assert code == 0
    p = np.array([float(r["P_col"]) for r in rows(out)])
    assert len(p) == 101
    np.testing.assert_allclose(p, p[::-1], atol=1e-12)


def test_init_noise_collective_exact_too_long(capsys):
    code, _, _ = run(capsys, "init-noise", "collective", "--exact", "--n", "20", "--t", "5")
    assert code == 2


def test_init_noise_collective_truncated(capsys):
    code, out, _ = run(capsys, "init-noise", "collective", "--truncated", "--n", "30",
                       "--format", "json")
    assert code == 0
    d = json.loads(out)
    assert d["N"] == 30 and d["t"] > 0
    assert max(r["x"] for r in d["rows"]) < 0.1


def test_mode_mismatch(capsys):
    assert run(capsys, "init-noise", "collective", "--n", "4", "--t", "1")[0] == 2


def test_output_dir_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DUALRAIL_OUTPUT_DIR", str(tmp_path))
    code, out, _ = run(capsys, "spectrum", "--n", "5", "--a", "0.3", "--format", "json")
    assert code == 0 and out == ""
    d = json.loads((tmp_path / "spectrum.json").read_text())
    assert len(d["rows"]) == 5


@pytest.mark.parametrize("cmd", ["spectrum", "sweep", "disorder", "init-noise"])
def test_help(cmd):
    proc = subprocess.run([sys.executable, "-m", "dualrail.cli", cmd, "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "--format" in proc.stdout
