import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isolandau import io, profiles
from isolandau.cli import main
from isolandau.dynamics import SimState
from isolandau.errors import ChecksumError, ParameterError
from isolandau.fields import CartesianGrid3, RadialGrid

SMALL = """\
# unit Maxwellian, coarse grid
grid.kind = radial
grid.extent = 12
grid.n = 256
t_end = 0.04
output.stride = 3
output.checkpoint_every = 6
init.profile = maxwellian
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL)
    return path


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = base / "run.cfg"
    cfg.write_text(SMALL)
    out = base / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    return out


def test_checkpoint_roundtrip():
    for grid in (RadialGrid(4.0, 64), CartesianGrid3(3.0, 16)):
        state = SimState.initial(profiles.maxwellian(grid), t=0.125, step=7)
        back = io.decode_state(io.encode_state(state))
        assert back.t == 0.125 and back.step == 7
        np.testing.assert_array_equal(back.u.values, state.u.values)
        assert back.u.grid == grid


def test_checkpoint_corruption_is_detected():
    blob = bytearray(io.encode_state(SimState.initial(profiles.maxwellian(RadialGrid(4.0, 32)))))
    blob[40] ^= 0xFF
    with pytest.raises(ChecksumError):
        io.decode_state(bytes(blob))
    with pytest.raises(ChecksumError):
        io.decode_state(b"NOTME" + bytes(blob[5:]))


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_number_format_roundtrips(x):
    assert float(io.format_number(x)) == x


def test_config_parsing():
    cfg = io.parse_config_text(SMALL)
    assert cfg["grid.n"] == "256"
    with pytest.raises(ParameterError):
        io.parse_config_text("grid.cells = 4\n")
    with pytest.raises(ParameterError):
        io.parse_config_text("just words\n")
    with pytest.raises(ParameterError):
        io.sim_config({"grid.n": "many"})
    with pytest.raises(ParameterError):
        io.sim_config({"init.profile": "gaussian"})
    config = io.sim_config(io.apply_overrides(cfg, ["t_end=0.5"]))
    assert config.t_end == 0.5
    assert io.parse_config_text(io.config_text(config)) == {
        k: str(v) for k, v in io.config_echo(config).items()}


def test_json_handles_nonfinite():
    assert json.loads(io.dumps({"x": float("nan"), "y": float("inf")})) == {"x": "nan", "y": "inf"}


def test_run_directory_layout(small_run):
    for name in ("config.txt", "diagnostics.csv", "summary.json", "manifest.json", "run.log"):
        assert (small_run / name).exists()
    assert io.verify_manifest(small_run) == []
    summary = json.loads((small_run / "summary.json").read_text())
    assert summary["H_nonincreasing"] is True
    assert summary["mass_rel_drift_max"] <= 1e-10
    assert list((small_run / "checkpoints").glob("*.lndau"))
    assert "wall_clock_s" not in json.loads((small_run / "manifest.json").read_text())


def test_diagnose_run_directory(small_run, capsys):
    assert main(["diagnose", str(small_run)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["csv_identical"] and not report["mismatches"]


def test_diagnose_detects_tampering(small_run, tmp_path, capsys):
    copy = tmp_path / "copy"
    shutil.copytree(small_run, copy)
    lines = (copy / "diagnostics.csv").read_text().splitlines(keepends=True)
    fields = lines[2].split(",")
    fields[5] = repr(float(fields[5]) * 1.01)
    lines[2] = ",".join(fields)
    (copy / "diagnostics.csv").write_text("".join(lines))
    assert main(["diagnose", str(copy)]) == 3


def test_diagnose_single_checkpoint(small_run, capsys):
    ckpt = sorted((small_run / "checkpoints").glob("*.lndau"))[0]
    assert main(["diagnose", str(ckpt)]) == 0
    assert "record" in json.loads(capsys.readouterr().out)


def test_resume_matches_uninterrupted(small_run, tmp_path):
    copy = tmp_path / "resumed"
    shutil.copytree(small_run, copy)
    ckpt = sorted((copy / "checkpoints").glob("*.lndau"))[0]
    assert main(["run", "--out", str(copy), "--resume", str(ckpt)]) == 0
    for name in ("diagnostics.csv", "summary.json", "manifest.json"):
        assert (copy / name).read_bytes() == (small_run / name).read_bytes()
    for a, b in zip(io.list_slices(copy), io.list_slices(small_run)):
        assert a.read_bytes() == b.read_bytes()


def test_post_processing_commands(small_run, tmp_path):
    assert main(["inequalities", str(small_run), "--out", str(tmp_path / "ineq.json")]) == 0
    data = json.loads((tmp_path / "ineq.json").read_text())
    assert data["verdict"] == "PASS"
    assert main(["barrier", str(small_run), "--g", "constant:1"]) == 3
    assert main(["barrier", str(small_run), "--g", "bogus:1"]) == 2


def test_parameter_errors_exit_2(config_file, tmp_path):
    out = str(tmp_path / "o")
    assert main(["run", str(config_file), "--out", out, "--set", "grid.cells=3"]) == 2
    assert main(["run", str(config_file), "--out", out, "--set", "init.profile=gaussian"]) == 2
    assert main(["run", str(config_file), "--out", out, "--set", "init.sigma=2"]) == 2
    assert main(["run", "--out", out]) == 2


def test_missing_config_is_runtime_error(tmp_path):
    assert main(["run", str(tmp_path / "absent.cfg"), "--out", str(tmp_path / "o")]) == 1


def test_inequalities_rejects_q_before_loading(tmp_path):
    assert main(["inequalities", str(tmp_path / "nowhere"), "--q", str(10 / 3)]) == 2


def _cli(args, threads, cwd):
    env = dict(os.environ, LNDAU_THREADS=str(threads))
    return subprocess.run([sys.executable, "-m", "isolandau", *args], env=env, cwd=cwd,
                          capture_output=True, text=True, check=False)


def test_outputs_independent_of_thread_count(config_file, tmp_path):
    outs = []
    for threads in (1, 2):
        out = tmp_path / f"t{threads}"
        proc = _cli(["run", str(config_file), "--out", str(out)], threads, tmp_path)
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    for name in ("diagnostics.csv", "summary.json", "manifest.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
