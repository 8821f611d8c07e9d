import json

import pytest

from droplet_lab.cli import EXIT_CONFIG, EXIT_OK, EXIT_VERIFY_FAILED, main
from droplet_lab.io import read_csv, sha256_file

SMALL_VERIFY = """
[simulation]
beta = 8.0
[verify]
identity_dt = 1e-4
identity_paths = 1000
identity_times = 0.5
tv_dt = 5e-4
tv_paths = 2000
tv_times = 0.2, 0.4
window_beta = 6.0, 8.0
window_dt = 1e-3
window_paths = 2000
"""


def _run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path), "--jobs", "1"])


def test_spectrum_outputs(tmp_path):
    assert _run(tmp_path, "spectrum", "--beta", "5,10") == EXIT_OK
    header, rows = read_csv(tmp_path / "spectrum.csv")
    assert len(rows) == 2 and "lambda1" in header
    lam = [float(r[header.index("lambda1")]) for r in rows]
    assert lam[0] > lam[1]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    for name, digest in manifest["outputs"].items():
        assert sha256_file(tmp_path / name) == digest


def test_simulate_is_deterministic(tmp_path):
    args = ["simulate", "--beta", "5", "--paths", "300", "--t-max", "4", "--seed", "7"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(a, *args) == EXIT_OK
    assert main([*args, "--out", str(b), "--jobs", "2"]) == EXIT_OK
    for name in ("survival.csv", "fit.csv", "trajectories.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_invalid_delta_exit_code(tmp_path, capsys):
    assert _run(tmp_path, "spectrum", "--delta", "0.95") == EXIT_CONFIG
    assert "delta" in capsys.readouterr().err


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[system]\ndim = zero\n")
    assert _run(tmp_path, "spectrum", "--config", str(cfg)) == EXIT_CONFIG
    assert "system.dim" in capsys.readouterr().err


def test_env_overrides_out(tmp_path, monkeypatch):
    target = tmp_path / "env"
    monkeypatch.setenv("DROPLET_LAB_OUT", str(target))
    assert _run(tmp_path / "flag", "spectrum", "--beta", "5") == EXIT_OK
    assert (target / "spectrum.csv").exists()
    assert not (tmp_path / "flag" / "spectrum.csv").exists()


def test_sweep_rows(tmp_path):
    assert _run(tmp_path, "sweep", "--run", "spectrum", "--beta", "5,8,10") == EXIT_OK
    _, rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 3
    assert (tmp_path / "beta_8" / "spectrum.csv").exists()


def test_qsd_command(tmp_path):
    cfg = tmp_path / "q.ini"
    cfg.write_text("[qsd]\nn_copies = 200\nburn_in = 1.0\nhorizon = 3.0\n")
    assert _run(tmp_path, "qsd", "--config", str(cfg), "--beta", "5") == EXIT_OK
    assert (tmp_path / "qsd.csv").exists() and (tmp_path / "qsd_histogram.csv").exists()


@pytest.mark.slow
def test_verify_exit_code_matches_report(tmp_path):
    cfg = tmp_path / "v.ini"
    cfg.write_text(SMALL_VERIFY)
    code = _run(tmp_path, "verify", "--config", str(cfg))
    report = json.loads((tmp_path / "report.json").read_text())
    assert code == (EXIT_OK if all(report["verdicts"].values()) else EXIT_VERIFY_FAILED)
    for name in ("identity.csv", "tv_bound.csv", "window.csv", "plot_tv.py"):
        assert (tmp_path / name).exists()
