import json
import os
import subprocess
import sys

import numpy as np
import pytest

from grwflow import cli
from grwflow.config import parse_config
from grwflow.errors import ConfigError, NumericalBlowupError
from grwflow.fieldio import SeriesWriter, read_field, read_series, write_field
from grwflow.flow import SERIES_COLUMNS
from grwflow.report import decay_fit, summarize_series

FIXED = """
mesh.m = 1
mesh.n = 32
warp.kind = sinusoidal
warp.a = 2
warp.b = 0.5
prescribed.kind = slice-matching
prescribed.value = 0.4
init.kind = constant
init.level = 0.4
flow.s_end = 1e9
flow.max_steps = 30
checks.upper_barrier_delta = off
out.dir = {out}
out.fields_every = 10
"""

CAP = """
mesh.m = 1
mesh.topology = dirichlet-rectangle
mesh.n = 33
mesh.L = 1
init.kind = cap
init.amplitude = 0.1
flow.s_end = 0.02
flow.checkpoint_every = 25
checks.upper_barrier_delta = 0.1
out.dir = {out}
"""


def _write(tmp_path, text, name="run.cfg", out="out"):
    p = tmp_path / name
    p.write_text(text.format(out=out))
    return str(p)


# -- configuration

def test_config_collects_every_problem():
    with pytest.raises(ConfigError) as ei:
        parse_config("mesh.m = 3\nmesh.n = x\nbogus = 1\nwarp.kind = cosh\nmesh.m = 1\nno equals sign\n")
    probs = "\n".join(ei.value.problems)
    for needle in ("unknown key 'bogus'", "duplicate key 'mesh.m'", "mesh.n: invalid value", "line 6"):
        assert needle in probs


def test_config_semantic_checks():
    with pytest.raises(ConfigError) as ei:
        parse_config("warp.kind = exponential\nflow.cfl = 2\ninit.kind = cap\nchecks.ricci_sigma = 0\n")
    probs = "\n".join(ei.value.problems)
    assert "unsupported kind 'exponential'" in probs and "flow.cfl" in probs
    assert "cap needs" in probs and "ricci_sigma" in probs
    with pytest.raises(ConfigError) as ei:
        parse_config("prescribed.kind = grid-file\n")
    assert any("prescribed.file" in p for p in ei.value.problems)


def test_config_defaults_and_round_trip(tmp_path):
    cfg = parse_config("mesh.n = 16\nchecks.identities = laplacian_u, h_gradu\n", str(tmp_path))
    assert cfg["mesh.L"] == pytest.approx(2 * np.pi) and cfg["flow.integrator"] == "euler"
    assert cfg["checks.identities"] == ["laplacian_u", "h_gradu"]
    again = parse_config(cfg.to_text(), str(tmp_path))
    assert again.values == {**cfg.values, "out.dir": cfg.path("out.dir")}


def test_bad_config_exit_code(tmp_path, capsys):
    assert cli.main(["run", _write(tmp_path, "mesh.m = 7\nfoo = 1\n")]) == 2
    err = capsys.readouterr().err
    assert "mesh.m" in err and "foo" in err
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == 2


# -- field and series files

def test_field_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(3)
    for shape in [(17,), (5, 7)]:
        a = rng.normal(size=shape) * 10.0 ** rng.integers(-12, 12, size=shape)
        write_field(tmp_path / "f.csv", a, s=0.1 + 0.2, step=4)
        b, meta = read_field(tmp_path / "f.csv")
        assert b.shape == a.shape and np.array_equal(a.view(np.uint64), b.view(np.uint64))
        assert float(meta["s"]) == 0.1 + 0.2 and meta["step"] == "4"


def test_series_round_trip(tmp_path):
    w = SeriesWriter(tmp_path / "s.csv")
    rows = np.random.default_rng(0).normal(size=(4, len(SERIES_COLUMNS)))
    for r in rows:
        w.write(r)
    w.close()
    assert np.array_equal(read_series(tmp_path / "s.csv"), rows)


# -- run and report

def test_fixed_point_run(tmp_path, capsys):
    cfg = _write(tmp_path, FIXED)
    assert cli.main(["run", cfg]) == 0
    out = tmp_path / "out"
    data = read_series(out / "series.csv")
    assert data.shape == (31, len(SERIES_COLUMNS))
    assert np.max(data[:, 4]) <= 1e-14
    assert sorted(os.listdir(out / "fields")) == [f"u_{k:08d}.csv" for k in (0, 10, 20, 30)]
    u, _ = read_field(out / "fields" / "u_00000030.csv")
    assert np.all(u == 0.4)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["steps"] == 30
    assert (out / "config.txt").read_text().startswith("mesh.m = 1")
    capsys.readouterr()
    assert cli.main(["report", str(out)]) == 0
    block = json.loads(capsys.readouterr().out)
    assert block["converged"] and block["verdict"] == "converged at s=0"


def test_report_fits_synthetic_decay(tmp_path, capsys):
    s = np.linspace(0, 10, 101)
    data = np.zeros((101, len(SERIES_COLUMNS)))
    data[:, 0], data[:, 4] = s, 3 * np.exp(-s)
    w = SeriesWriter(tmp_path / "series.csv")
    for r in data:
        w.write(r)
    w.close()
    assert cli.main(["report", str(tmp_path), "--threshold", "1e-3"]) == 0
    block = json.loads(capsys.readouterr().out)
    assert block["fit"]["slope"] == pytest.approx(-1.0, abs=1e-12)
    assert block["fit"]["r2"] == pytest.approx(1.0, abs=1e-12)
    assert block["converged_at"] == pytest.approx(s[np.argmax(3 * np.exp(-s) <= 1e-3)])
    assert (tmp_path / "report.json").exists()


def test_report_needs_ten_rows(tmp_path):
    w = SeriesWriter(tmp_path / "series.csv")
    for k in range(5):
        w.write([k, 0, 0, 1, 1e-3, 0, 0, 1])
    w.close()
    assert cli.main(["report", str(tmp_path)]) == 2
    assert cli.main(["report", str(tmp_path / "nothing")]) == 2


def test_summarize_series_not_converged():
    data = np.zeros((20, len(SERIES_COLUMNS)))
    data[:, 0] = np.arange(20)
    data[:, 4] = 1.0
    block = summarize_series(data)
    assert not block["converged"] and block["fit"]["slope"] == pytest.approx(0.0)
    assert decay_fit([0.0], [1.0]) is None


# -- identity checks

IDENT = """
mesh.m = 1
warp.kind = sinusoidal
warp.a = 2
warp.b = 0.5
prescribed.kind = constant
prescribed.value = 0.1
init.kind = sine
init.amplitude = 0.2
checks.identities = {ids}
checks.ricci_sigma = {sigma}
out.dir = {out}
"""


def test_check_identities_pass(tmp_path, capsys):
    ids = "laplacian_u, h_gradu, gradient_covector, volume_form, ricci_normal, property_suite, " \
          "v_time_derivative, v_evolution_corrected, mean_curvature_evolution"
    cfg = tmp_path / "i.cfg"
    cfg.write_text(IDENT.format(ids=ids, sigma=-1, out="id"))
    assert cli.main(["check-identities", str(cfg)]) == 0
    text = (tmp_path / "id" / "identities.txt").read_text()
    assert "overall: PASS" in text
    lines = (tmp_path / "id" / "identities.csv").read_text().splitlines()
    assert lines[0].startswith("identity,kind,sup_n32,sup_n64,sup_n128")
    assert all(l.endswith("PASS") for l in lines[1:])


def test_check_identities_wrong_sign_fails(tmp_path, capsys):
    cfg = tmp_path / "i.cfg"
    cfg.write_text(IDENT.format(ids="ricci_normal", sigma=1, out="id"))
    assert cli.main(["check-identities", str(cfg)]) == 5
    assert "FAIL (ricci_normal(sigma=+1))" in capsys.readouterr().out


def test_check_identities_fixed_point(tmp_path, capsys):
    cfg = _write(tmp_path, FIXED.replace("out.fields_every = 10", "checks.identities = all"))
    code = cli.main(["check-identities", cfg])
    text = capsys.readouterr().out
    # on a stationary slice every residual is exact except the stated f'' terms
    assert "FAIL" not in text.replace("FAIL (v_evolution)", "").replace("FAIL  v_evolution ", "")
    assert code == 5


def test_check_identities_bad_ladder(tmp_path):
    cfg = _write(tmp_path, FIXED)
    assert cli.main(["check-identities", cfg, "--ladder", "32,64"]) == 2
    assert cli.main(["check-identities", cfg, "--ladder", "a,b,c"]) == 2


def test_check_geometry(tmp_path, capsys):
    cfg = _write(tmp_path, FIXED)
    assert cli.main(["check-geometry", cfg]) == 0
    assert "INFO  Lambda_max" in capsys.readouterr().out


# -- failures and exit codes

def test_spacelike_guard_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "mesh.m = 1\nmesh.L = 1\ninit.kind = sine\ninit.amplitude = 0.5\n"
                           "checks.upper_barrier_delta = off\nout.dir = {out}\n")
    assert cli.main(["run", cfg]) == 3
    assert "space-like" in capsys.readouterr().err


def test_assumption_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "mesh.m = 1\ninit.kind = bump\ninit.amplitude = 0.1\nout.dir = {out}\n")
    assert cli.main(["run", cfg]) == 2
    assert "upper barrier" in capsys.readouterr().err


def test_blowup_exit_code(tmp_path, monkeypatch, capsys):
    def boom(self, *a, **k):
        raise NumericalBlowupError("non-finite height field")
    monkeypatch.setattr("grwflow.flow.FlowEngine.step", boom)
    assert cli.main(["run", _write(tmp_path, FIXED)]) == 4
    assert "blow-up" in capsys.readouterr().err


def test_restart_matches_uninterrupted_run(tmp_path, capsys):
    cfg = _write(tmp_path, CAP)
    assert cli.main(["run", cfg]) == 0
    out = tmp_path / "out"
    full = (out / "series.csv").read_bytes()
    ckpts = sorted(p for p in os.listdir(out) if p.startswith("ckpt_"))
    assert "ckpt_00000050.grwf" in ckpts
    assert cli.main(["restart", str(out / "ckpt_00000050.grwf")]) == 0
    assert (out / "series.csv").read_bytes() == full


def test_restart_rejects_tampered_checkpoint(tmp_path, capsys):
    cfg = _write(tmp_path, CAP)
    assert cli.main(["run", cfg]) == 0
    ck = tmp_path / "out" / "ckpt_00000025.grwf"
    data = bytearray(ck.read_bytes())
    data[-30] ^= 0xFF
    ck.write_bytes(bytes(data))
    assert cli.main(["restart", str(ck)]) == 2
    assert "CorruptCheckpointError" in capsys.readouterr().err


def test_module_entry_point_with_thread_limit(tmp_path):
    cfg = _write(tmp_path, FIXED)
    env = {**os.environ, "GRWFLOW_THREADS": "1"}
    res = subprocess.run([sys.executable, "-m", "grwflow", "run", cfg], capture_output=True, text=True, env=env,
                         cwd=tmp_path)
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["steps"] == 30
    res = subprocess.run([sys.executable, "-c", "import grwflow, os; print(os.environ['OMP_NUM_THREADS'])"],
                         capture_output=True, text=True, env=env)
    assert res.stdout.strip() == "1"
