import math

import numpy as np
import pandas as pd
import pytest
from typer.testing import CliRunner

from abjm_vortex.cli import app, parse_range
from abjm_vortex.diagnostics import read_field, read_report

runner = CliRunner()


def _torus_yaml(lam, vortices, grid=16):
    return f"""\
schema: abjm-vortex-config/1
model: {{m: 2, a: 0, lambda: {lam}}}
domain: {{kind: torus, L1: 1, L2: 1, grid: {grid}}}
vortices: {vortices}
"""


DISK = """\
schema: abjm-vortex-config/1
model: {m: 2, a: 0, lambda: 4}
domain: {kind: disk, radius: 4, grid: 24}
vortices: [[[0, 0]], []]
"""


# --- matrix --------------------------------------------------------------------
def test_matrix_at_a0_m3():
    result = runner.invoke(app, ["matrix", "--a", "0", "--m", "3"])
    assert result.exit_code == 0, result.output
    assert "r = (3, 2, 1)" in result.output
    assert "minors = (1, 2, 6)" in result.output


def test_matrix_at_a1_m2():
    result = runner.invoke(app, ["matrix", "--a", "1", "--m", "2"])
    assert result.exit_code == 0, result.output
    assert "r = (0.636363636364, 0.454545454545)" in result.output


def test_matrix_reports_lambda0():
    result = runner.invoke(app, ["matrix", "--a", "0", "--m", "2"])
    assert f"lambda0 = {2 * (2 - math.sqrt(2)):.12g}" in result.output
    assert "lambda0 = 1.17157287525" in result.output


def test_matrix_rejects_small_m():
    result = runner.invoke(app, ["matrix", "--a", "0", "--m", "1"])
    assert result.exit_code != 0


# --- check ---------------------------------------------------------------------
def test_check_without_vortices(write_config):
    result = runner.invoke(app, ["check", "--config", write_config(_torus_yaml(1.0, "[[], []]"))])
    assert result.exit_code == 0, result.output


def test_check_names_the_failing_index(write_config):
    result = runner.invoke(app, ["check", "--config", write_config(_torus_yaml(4.5, "[[], [[0.5, 0.5]]]"))])
    assert result.exit_code == 1
    assert "Existence fails at index 2" in result.output


def test_check_refuses_disk_configs(write_config):
    result = runner.invoke(app, ["check", "--config", write_config(DISK)])
    assert result.exit_code == 1


def test_invalid_config_exits_with_failure(write_config):
    result = runner.invoke(app, ["check", "--config", write_config("schema: nope\n")])
    assert result.exit_code == 1
    assert "schema" in result.output


@pytest.mark.parametrize("vortices", ['[[[0.5, "left"]], []]', "[[5], []]"])
def test_malformed_vortex_points_name_the_field(write_config, vortices):
    result = runner.invoke(app, ["check", "--config", write_config(_torus_yaml(12.0, vortices))])
    assert result.exit_code == 1
    assert "vortices[0]" in result.output
    assert "Traceback" not in result.output


# --- solve ---------------------------------------------------------------------
def test_solve_vortex_free_torus(write_config, tmp_path):
    out = tmp_path / "free"
    result = runner.invoke(app, ["solve", "--config", write_config(_torus_yaml(2.0, "[[], []]")), "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = read_report(str(out / "report.txt"))
    assert report["convergence.iterations"] == "0"
    u, dx, dy = read_field(str(out / "u_1.bin"))
    assert u.shape == (16, 16)
    np.testing.assert_allclose(u, math.log(2.0), atol=1e-12)


def test_solve_infeasible_torus_exits_with_certificate(write_config, tmp_path):
    path = write_config(_torus_yaml(9.0, "[[[0.25, 0.5]], []]"))
    result = runner.invoke(app, ["solve", "--config", path, "--out", str(tmp_path / "none")])
    assert result.exit_code == 2
    assert "index 1" in result.output
    assert not (tmp_path / "none").exists()


def test_solve_planar_writes_decay_fit(write_config, tmp_path):
    out = tmp_path / "disk"
    result = runner.invoke(app, ["solve", "--config", write_config(DISK), "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = read_report(str(out / "report.txt"))
    assert report["kind"] == "disk"
    assert report["decay.skipped"] == "false"
    assert "decay.sigma_fit" in report and "quantized_integral_lhs" in report
    assert report["flux_numeric"] == "none"
    profile = pd.read_csv(out / "profile.csv")
    assert list(profile.columns)[0] == "r"


def test_solve_is_deterministic(write_config, tmp_path):
    path = write_config(_torus_yaml(12.0, "[[[0.25, 0.5]], []]"))
    for name in ("a", "b"):
        assert runner.invoke(app, ["solve", "--config", path, "--out", str(tmp_path / name)]).exit_code == 0
    for name in ("report.txt", "u_1.bin", "exp_u_2.bin", "profile.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_solve_timing_is_opt_in(write_config, tmp_path):
    path = write_config(_torus_yaml(2.0, "[[], []]"))
    runner.invoke(app, ["solve", "--config", path, "--out", str(tmp_path / "t"), "--timing"])
    assert "convergence.wall_time" in read_report(str(tmp_path / "t" / "report.txt"))


# --- scan ----------------------------------------------------------------------
def test_scan_flips_once(write_config, tmp_path):
    path = write_config(_torus_yaml(12.0, "[[[0.25, 0.5]], []]"))
    result = runner.invoke(app, ["scan", "--config", path, "--range", "4:12:5", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    table = pd.read_csv(tmp_path / "scan.csv")
    assert table["lambda"].tolist() == [4.0, 6.0, 8.0, 10.0, 12.0]
    assert table["verdict"].tolist() == [False, False, False, True, True]


def test_single_value_scan_matches_solve(write_config, tmp_path):
    path = write_config(_torus_yaml(12.0, "[[[0.25, 0.5]], []]"))
    runner.invoke(app, ["scan", "--config", path, "--range", "12:12:1", "--out", str(tmp_path / "scan")])
    runner.invoke(app, ["solve", "--config", path, "--out", str(tmp_path / "solve")])
    row = pd.read_csv(tmp_path / "scan" / "scan.csv").iloc[0]
    report = read_report(str(tmp_path / "solve" / "report.txt"))
    assert row["functional"] == float(report["torus.functional_value"])
    assert row["iterations"] == int(report["convergence.iterations"])


@pytest.mark.parametrize("bad", ["4:12", "a:b:3", "12:4:3", "0:4:3", "1:2:0"])
def test_malformed_range_is_a_usage_error(write_config, bad):
    path = write_config(_torus_yaml(12.0, "[[[0.25, 0.5]], []]"))
    result = runner.invoke(app, ["scan", "--config", path, "--range", bad])
    assert result.exit_code == 2


def test_parse_range_single_value():
    np.testing.assert_array_equal(parse_range("3:3:1"), [3.0])
    np.testing.assert_allclose(parse_range("1:2:3"), [1.0, 1.5, 2.0])
