import json
import subprocess
import sys

import numpy as np
import pytest

from magflow import cli
from magflow import io

INTEGRATE = """\
[system]
surface = TorusFlat
magnetic = constant:1

[integrate]
q = 0, 0
p = 1, 0
t_end = {t_end}
tol = 1e-10
"""

DISPLACE = """\
[system]
surface = SphereRound
magnetic = constant:1
potential = height:1

[displace]
k = -0.5
f = tilted:1,0,0.1
n_samples = 10000
"""

ORBIT = """\
[system]
surface = TorusFlat
magnetic = constant:1

[orbit]
k = 0.5
N = 128
seed_loop = {seed}
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_integrate_pipeline(tmp_path):
    cfg = write(tmp_path, "i.ini", INTEGRATE.format(t_end=2 * np.pi))
    out = tmp_path / "out"
    assert cli.main(["integrate", "--config", cfg, "--out", str(out)]) == cli.EXIT_OK
    for name in ("trajectory.csv", "trajectory.svg", "energy.svg", "integrate.json", "summary.txt"):
        assert (out / name).exists()
    data = io.read_json(out / "integrate.json")
    assert np.allclose(data["final"]["q"], [0, 0], atol=1e-6)
    assert data["max_energy_drift"] <= 1e-8
    assert (out / "trajectory.svg").read_text().lstrip().startswith("<?xml")


def test_integrate_zero_time(tmp_path):
    cfg = write(tmp_path, "i.ini", INTEGRATE.format(t_end=0))
    out = tmp_path / "out"
    assert cli.main(["integrate", "--config", cfg, "--out", str(out)]) == cli.EXIT_OK
    _, rows = io.read_trajectory_csv(out / "trajectory.csv")
    assert rows.shape[0] == 1 and np.array_equal(rows[0, 1:5], [0, 0, 1, 0])


def test_outputs_byte_identical(tmp_path):
    cfg = write(tmp_path, "i.ini", INTEGRATE.format(t_end=3.0))
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name
        cli.main(["integrate", "--config", cfg, "--out", str(out), "--seed", "7"])
        blobs.append([(out / f).read_bytes() for f in ("integrate.json", "trajectory.csv", "trajectory.svg")])
    assert blobs[0] == blobs[1]


def test_displace_pipeline(tmp_path):
    cfg = write(tmp_path, "d.ini", DISPLACE)
    out = tmp_path / "out"
    assert cli.main(["displace-check", "--config", cfg, "--out", str(out)]) == cli.EXIT_OK
    rep = io.read_json(out / "displacement.json")
    assert rep["status"] == "displaced" and rep["margin"] > 0 and rep["n_samples"] >= 10000


def test_displace_failure_exit_code(tmp_path):
    cfg = write(tmp_path, "d.ini", DISPLACE.replace("n_samples = 10000", "n_samples = 500\nT_disp = 0"))
    assert cli.main(["displace-check", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_VERIFY


def test_numeric_failure_exit_code(tmp_path):
    cfg = write(tmp_path, "d.ini", DISPLACE.replace("tilted:1,0,0.1", "height:1"))
    assert cli.main(["displace-check", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_NUMERIC


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "bad.ini", INTEGRATE.format(t_end=1).replace("p = 1, 0", "p = one"))
    assert cli.main(["integrate", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "field integrate.p" in err and "line 7" in err


def test_find_orbit_from_seed_and_reverify(tmp_path):
    t = 2 * np.pi * np.arange(128) / 128
    seed = tmp_path / "seed.json"
    io.write_json(seed, {"surface": "TorusFlat", "T": 6.29,
                         "samples": np.column_stack([0.5 + 1.002 * np.cos(t), 0.5 - 1.002 * np.sin(t)])})
    cfg = write(tmp_path, "o.ini", ORBIT.format(seed=seed))
    out = tmp_path / "out"
    assert cli.main(["find-orbit", "--config", cfg, "--out", str(out)]) == cli.EXIT_OK
    data = io.read_json(out / "orbit.json")
    orb = data["orbit"]
    assert orb["status"] == "verified"
    assert orb["period"] == pytest.approx(2 * np.pi, rel=1e-8)
    assert (out / orb["samples_ref"]).exists() and (out / "orbit.svg").exists()
    close, energy = cli.reverify_orbit_file(out / "orbit.json")
    assert close <= 2 * max(orb["closing_error"], 1e-12)
    assert energy <= 1e-9


def test_seed_loop_surface_mismatch(tmp_path):
    seed = tmp_path / "seed.json"
    io.write_json(seed, {"surface": "SphereRound", "T": 1.0, "samples": [[0, 0, 1.0]] * 16})
    cfg = write(tmp_path, "o.ini", ORBIT.format(seed=seed))
    assert cli.main(["find-orbit", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_threads_env(monkeypatch):
    monkeypatch.setenv("MAGFLOW_THREADS", "3")
    assert 1 <= cli.worker_count() <= 3
    monkeypatch.setenv("MAGFLOW_THREADS", "x")
    with pytest.raises(cli.ConfigError):
        cli.worker_count()


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, "i.ini", INTEGRATE.format(t_end=1.0))
    proc = subprocess.run([sys.executable, "-m", "magflow.cli", "integrate", "--config", cfg,
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "integrate:" in proc.stdout
    summary = (tmp_path / "o" / "summary.txt").read_text()
    assert summary.strip() == proc.stdout.strip()
    assert json.loads((tmp_path / "o" / "integrate.json").read_text())["t_end"] == 1.0
