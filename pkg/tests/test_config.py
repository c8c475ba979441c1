import math

import pytest

from abjm_vortex.config import AUTO, RunConfig
from abjm_vortex.exceptions import ConfigError
from abjm_vortex.grids import DiskGrid, TorusGrid
from abjm_vortex.matrix_core import coupling_matrix
from abjm_vortex.planar_solver import default_disk_grid
from abjm_vortex.vortex_sources import autotune_nu

TORUS = """\
schema: abjm-vortex-config/1
model: {N: 3, a: 0, mu: 1}
domain: {kind: torus, L1: 1, L2: 2, grid: [16, 8]}
vortices:
  - [[0.25, 0.5], [0.25, 0.5]]
  - []
solver: {tol: 1.0e-9, route: constrained}
output: results
"""


def _base(**overrides):
    raw = {
        "schema": "abjm-vortex-config/1",
        "model": {"m": 2, "a": 0.5, "lambda": 4.0},
        "domain": {"kind": "torus", "L1": 1.0, "L2": 1.0, "grid": 16},
        "vortices": [[[0.1, 0.2]], []],
    }
    raw.update(overrides)
    return raw


def test_torus_config_from_yaml(write_config):
    cfg = RunConfig.from_yaml(write_config(TORUS))
    params = cfg.params()
    assert (params.m, params.a, params.lam) == (2, 0.0, 4.0)
    assert params.nu is None
    assert cfg.solver.route == "constrained"
    assert cfg.solver.tol == 1e-9
    assert cfg.output == "results"
    assert cfg.vortex_config().counts.tolist() == [2.0, 0.0]
    grid = cfg.build_grid()
    assert isinstance(grid, TorusGrid)
    assert (grid.nx, grid.ny, grid.area) == (16, 8, 2.0)


def test_defaults():
    cfg = RunConfig.from_dict(_base())
    assert cfg.model.k == 1.0 and cfg.model.s == -1
    assert cfg.solver.nu == AUTO
    assert cfg.solver.boundary == "exact"
    assert cfg.solver.max_iter == 500


def test_missing_vortices_means_none():
    raw = _base()
    del raw["vortices"]
    cfg = RunConfig.from_dict(raw)
    assert cfg.vortex_config().counts.tolist() == [0.0, 0.0]


def test_disk_config_with_automatic_grid():
    cfg = RunConfig.from_dict(_base(domain={"kind": "disk"}, solver={"nu": 2}))
    params = cfg.params()
    assert params.nu == 2.0
    grid = cfg.build_grid(params)
    assert isinstance(grid, DiskGrid)
    assert grid.n % 2 == 0
    assert grid.contains((0.1, 0.2))


def test_disk_setup_derives_the_radius_after_tuning_nu():
    cfg = RunConfig.from_dict(_base(domain={"kind": "disk"}))
    untuned = cfg.params()
    assert untuned.nu is None
    cm = coupling_matrix(untuned.a, untuned.m)
    vortices = cfg.vortex_config()
    expected_nu = autotune_nu(vortices, default_disk_grid(vortices, untuned, cm), untuned, cm)

    params, grid = cfg.disk_setup()
    assert params.nu == expected_nu
    assert grid.radius >= 5.0 * math.sqrt(params.nu)
    reference = default_disk_grid(vortices, params, cm, params.nu)
    assert (grid.radius, grid.n) == (reference.radius, reference.n)


def test_disk_setup_keeps_a_pinned_nu():
    cfg = RunConfig.from_dict(_base(domain={"kind": "disk", "radius": 6.0, "grid": 30}, solver={"nu": 4}))
    params, grid = cfg.disk_setup()
    assert params.nu == 4.0
    assert (grid.radius, grid.n) == (6.0, 30)


def test_disk_config_with_explicit_grid():
    cfg = RunConfig.from_dict(_base(domain={"kind": "disk", "radius": 5.0, "grid": 40}))
    grid = cfg.build_grid()
    assert (grid.radius, grid.n) == (5.0, 40)


@pytest.mark.parametrize(
    "overrides, field",
    [
        ({"schema": "abjm-vortex-config/0"}, "schema"),
        ({"extra": 1}, "extra"),
        ({"model": {"m": 2, "N": 3, "a": 0, "lambda": 1}}, "model.m"),
        ({"model": {"m": 1, "a": 0, "lambda": 1}}, "model.m"),
        ({"model": {"m": 2, "a": 0, "lambda": 1, "mu": 1}}, "model.lambda"),
        ({"model": {"m": 2, "a": 0, "lambda": -1}}, "model.lambda"),
        ({"model": {"m": 2, "a": -1, "lambda": 1}}, "model.a"),
        ({"model": {"m": 2, "a": 0, "lambda": 1, "s": 0}}, "model.s"),
        ({"model": {"m": 2, "a": 0, "mu": 0}}, "model.mu"),
        ({"domain": {"kind": "sphere"}}, "domain.kind"),
        ({"domain": {"kind": "torus", "L1": 1, "L2": 1, "grid": 15}}, "domain.grid"),
        ({"domain": {"kind": "torus", "L1": 1, "grid": 16}}, "domain.L2"),
        ({"domain": {"kind": "disk", "radius": 0}}, "domain.radius"),
        ({"vortices": [[[0, 0]]]}, "vortices"),
        ({"vortices": [[[0, 0, 0]], []]}, "vortices[0]"),
        ({"solver": {"tol": 0}}, "solver.tol"),
        ({"solver": {"max_iter": 2.5}}, "solver.max_iter"),
        ({"solver": {"nu": -1}}, "solver.nu"),
        ({"solver": {"boundary": "free"}}, "solver.boundary"),
        ({"solver": {"route": "sideways"}}, "solver.route"),
    ],
)
def test_invalid_configs_name_the_field(overrides, field):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict(_base(**overrides))
    assert info.value.field == field


def test_unreadable_files(write_config, tmp_path):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_yaml(write_config("model: [1, 2\n"))
    assert info.value.field == "config"
    with pytest.raises(ConfigError):
        RunConfig.from_yaml(str(tmp_path / "missing.yaml"))
    with pytest.raises(ConfigError):
        RunConfig.from_yaml(write_config("- 1\n- 2\n"))
