import math

import numpy as np
import pytest

from abjm_vortex.exceptions import ConfigError, NonexistenceError
from abjm_vortex.grids import TorusGrid, laplacian_periodic
from abjm_vortex.matrix_core import ModelParams, coupling_matrix, torus_threshold
from abjm_vortex.torus_solver import (
    ConstrainedTorusProblem,
    SpectralPreconditioner,
    TorusProblem,
    b_vector,
    constrained_solve_torus,
    solve_torus,
    threshold_scan,
)
from abjm_vortex.vortex_sources import VortexConfiguration, torus_background

LAMBDA_STAR = 3.0 * math.pi  # m = 2, a = 0, n = (1, 0), |Omega| = 1


@pytest.fixture
def single():
    return VortexConfiguration.from_lists([[(0.25, 0.5)], []])


@pytest.fixture
def unit_torus():
    return lambda n: TorusGrid(1.0, 1.0, n, n)


def _problems(cfg, params, grid):
    cm = coupling_matrix(params.a, params.m)
    bg = torus_background(cfg, grid)
    K = grid.area * cm.r - (4 * math.pi / params.lam) * cm.Rinv @ cfg.counts
    return TorusProblem(bg, cm, params, grid, cfg.counts), ConstrainedTorusProblem(bg, cm, params, grid, K)


# --- functional ----------------------------------------------------------------
def test_b_vector_for_vortex_free_field(cm_a0_m2, params_a0_m2):
    np.testing.assert_allclose(b_vector(cm_a0_m2, params_a0_m2, [0, 0], 1.0), cm_a0_m2.Linv @ np.ones(2))


def test_direct_gradient_matches_finite_differences(single, unit_torus):
    params = ModelParams(m=2, a=0.0, lam=6 * math.pi)
    direct, _ = _problems(single, params, unit_torus(16))
    rng = np.random.default_rng(5)
    x = rng.uniform(-0.3, 0.3, 2 * 16 * 16)
    grad = direct.gradient(x) * direct.cell_area
    eps = 1e-5
    candidates = np.flatnonzero(np.abs(grad) >= 1e-2 * np.max(np.abs(grad)))
    for idx in rng.choice(candidates, size=20, replace=False):
        e = np.zeros_like(x)
        e[idx] = eps
        fd = (direct.value(x + e) - direct.value(x - e)) / (2 * eps)
        assert abs(fd - grad[idx]) <= 1e-6 * abs(grad[idx])


def test_constrained_gradient_matches_finite_differences_along_mean_free_moves(single, unit_torus):
    params = ModelParams(m=2, a=1.0, lam=8 * math.pi)
    _, constrained = _problems(single, params, unit_torus(16))
    rng = np.random.default_rng(8)
    x = rng.uniform(-0.3, 0.3, 2 * 256)
    x -= x.reshape(2, -1).mean(axis=1).repeat(256)
    grad = constrained.gradient(x) * constrained.cell_area
    assert np.allclose(grad.reshape(2, -1).sum(axis=1), 0.0, atol=1e-12)
    eps = 1e-5
    for p, q in rng.choice(256, size=(20, 2), replace=False):
        d = np.zeros_like(x)
        d[p], d[q] = 1.0, -1.0
        fd = (constrained.value(x + eps * d) - constrained.value(x - eps * d)) / (2 * eps)
        assert fd == pytest.approx(grad @ d, abs=1e-6 * np.max(np.abs(grad)))


def test_direct_functional_is_convex(single, unit_torus):
    params = ModelParams(m=2, a=0.0, lam=6 * math.pi)
    direct, _ = _problems(single, params, unit_torus(16))
    rng = np.random.default_rng(1)
    x, y = rng.uniform(-1, 1, 512), rng.uniform(-1, 1, 512)
    assert direct.value(0.5 * (x + y)) < 0.5 * (direct.value(x) + direct.value(y))


def test_spectral_preconditioner_inverts_the_constant_coefficient_operator():
    grid = TorusGrid(2.0, 1.0, 8, 6)
    cm = coupling_matrix(0.5, 3)
    lam, e_bar = 3.0, np.array([0.4, 0.9, 1.3])
    precond = SpectralPreconditioner(grid, cm, lam, e_bar)
    P = np.random.default_rng(4).standard_normal((3,) + grid.shape)
    weights = (cm.L.T @ np.diag(e_bar) @ cm.L)
    applied = -laplacian_periodic(P, grid) / lam + np.tensordot(weights, P, axes=1)
    np.testing.assert_allclose(precond(applied.ravel()), P.ravel(), atol=1e-10)


# --- existence -----------------------------------------------------------------
def test_threshold_closed_form(params_a0_m2):
    assert torus_threshold(params_a0_m2, [1, 0], 1.0) == pytest.approx(LAMBDA_STAR)


def test_infeasible_configuration_is_certified_without_iterating(single, unit_torus):
    params = ModelParams(m=2, a=0.0, lam=0.99 * LAMBDA_STAR)
    for route in (solve_torus, constrained_solve_torus):
        with pytest.raises(NonexistenceError) as info:
            route(single, params, unit_torus(16))
        assert info.value.certificate.failed_indices == [1]
        assert info.value.certificate.K[0] < 0 < info.value.certificate.K[1]


def test_species_count_must_match(unit_torus, params_a0_m2):
    cfg = VortexConfiguration.from_lists([[(0.1, 0.1)], [], []])
    with pytest.raises(ConfigError):
        solve_torus(cfg, params_a0_m2, unit_torus(8))


# --- solves --------------------------------------------------------------------
def test_vortex_free_torus_is_constant(unit_torus, cm_a0_m2):
    params = ModelParams(m=2, a=0.0, lam=2.0)
    grid = TorusGrid(1.5, 2.0, 16, 8)
    state, report = solve_torus(VortexConfiguration.empty(2), params, grid)
    assert report.convergence.iterations == 0
    np.testing.assert_allclose(state.exp_u, cm_a0_m2.r[:, None, None] * np.ones(state.u.shape), rtol=1e-12)
    np.testing.assert_allclose(grid.integrate(state.exp_u), cm_a0_m2.r * grid.area, rtol=1e-12)
    assert not report.torus.near_threshold


def test_feasible_single_vortex(single, unit_torus):
    params = ModelParams(m=2, a=0.0, lam=2.0 * LAMBDA_STAR)
    state, report = solve_torus(single, params, unit_torus(64))
    np.testing.assert_allclose(report.torus.K, [1.0, 2.0 / 3.0])
    assert report.convergence.converged
    assert np.all(report.torus.constraint_residuals < 0.01)
    assert np.all(report.quantized_integral_error < 0.01)
    np.testing.assert_allclose(report.quantized_integral_target, [-4 * math.pi / params.lam, 0.0])
    assert report.torus.route == "direct"
    assert report.extras["background_residual"] < 1e-10
    assert report.magnetic_crosscheck <= 1e-6
    assert np.argmin(state.exp_u[0]) == np.ravel_multi_index(unit_torus(64).nearest_node((0.25, 0.5)), (64, 64))


def test_routes_agree(single, unit_torus):
    params = ModelParams(m=2, a=0.0, lam=2.0 * LAMBDA_STAR)
    grid = unit_torus(32)
    direct, d_report = solve_torus(single, params, grid, tol=1e-10)
    constrained, c_report = constrained_solve_torus(single, params, grid, tol=1e-10)
    assert np.max(np.abs(direct.u - constrained.u)) <= 1e-8
    assert np.all(c_report.torus.constraint_residuals <= 1e-12)
    assert c_report.torus.route == "constrained"
    assert c_report.torus.functional_value == pytest.approx(d_report.torus.functional_value, rel=1e-9, abs=1e-9)
    history = np.array(c_report.torus.mean_history)
    assert history.shape[1] == 2


def test_translating_the_vortex_translates_the_solution(unit_torus):
    params = ModelParams(m=2, a=1.0, lam=8.0 * math.pi)
    grid = unit_torus(32)
    base = VortexConfiguration.from_lists([[(0.25, 0.5)], [(0.5, 0.75)]])
    moved = base.shifted(4 * grid.dx, 2 * grid.dy)
    a, _ = solve_torus(base, params, grid)
    b, _ = solve_torus(moved, params, grid)
    np.testing.assert_allclose(np.roll(a.u, (2, 4), axis=(-2, -1)), b.u, atol=1e-8)


def test_near_threshold_is_flagged(single, unit_torus):
    params = ModelParams(m=2, a=0.0, lam=1.02 * LAMBDA_STAR)
    _, report = solve_torus(single, params, unit_torus(16))
    assert report.torus.near_threshold
    assert report.convergence.converged


# --- scans ---------------------------------------------------------------------
def test_lambda_scan_flips_once(single, unit_torus, params_a0_m2):
    values = [f * LAMBDA_STAR for f in (0.5, 0.9, 1.5, 2.0)]
    table = threshold_scan(single, params_a0_m2, unit_torus(16), values, progress=False)
    assert table["verdict"].tolist() == [False, False, True, True]
    assert table["failed_indices"].tolist()[:2] == ["1 2", "1"]
    infeasible = table[~table["verdict"]]
    assert infeasible["residual_1"].isna().all()
    assert infeasible["iterations"].isna().all()
    feasible = table[table["verdict"]]
    assert (feasible["residual_1"] < 0.01).all()


def test_area_scan_keeps_the_aspect_ratio(single, params_a0_m2):
    grid = TorusGrid(2.0, 1.0, 16, 8)
    table = threshold_scan(single, params_a0_m2, grid, [1.0, 3.0], param="area", progress=False)
    assert table["verdict"].tolist() == [False, True]
    np.testing.assert_allclose(table["area"], [1.0, 3.0])
    np.testing.assert_allclose(table["K_2"], [1.0 * 1.0 - math.pi * 0.5, 3.0 - math.pi * 0.5])


def test_scan_rejects_bad_input(single, unit_torus, params_a0_m2):
    with pytest.raises(ConfigError):
        threshold_scan(single, params_a0_m2, unit_torus(8), [1.0, 2.0], param="mu", progress=False)
    with pytest.raises(ConfigError):
        threshold_scan(single, params_a0_m2, unit_torus(8), [2.0, 1.0], progress=False)


@pytest.mark.slow
@pytest.mark.parametrize("n", [128, 256])
def test_feasible_single_vortex_fine_grids(single, unit_torus, n):
    params = ModelParams(m=2, a=0.0, lam=2.0 * LAMBDA_STAR)
    _, report = solve_torus(single, params, unit_torus(n))
    assert np.all(report.torus.constraint_residuals < 0.01)
    assert np.all(report.quantized_integral_error < 0.01)


@pytest.mark.slow
@pytest.mark.parametrize("n", [128, 256])
@pytest.mark.parametrize("m, a, points", [
    (2, 0.0, [[(0.2, 0.3), (0.7, 0.6)], [(0.4, 0.8)]]),
    (2, 1.0, [[(0.3, 0.3)], [(0.6, 0.2), (0.8, 0.7)]]),
    (3, 0.0, [[(0.2, 0.2)], [(0.5, 0.4), (0.3, 0.75)], [(0.8, 0.6)]]),
    (3, 1.0, [[(0.15, 0.3), (0.65, 0.7)], [(0.4, 0.55)], [(0.85, 0.2)]]),
])
def test_quantized_integrals_and_flux_on_fine_grids(unit_torus, m, a, points, n):
    params = ModelParams(m=m, a=a, lam=80.0)
    cfg = VortexConfiguration.from_lists(points)
    _, report = solve_torus(cfg, params, unit_torus(n))
    limit = 0.01 if n == 128 else 0.0025
    assert report.convergence.converged
    assert report.torus.existence.holds and not report.torus.near_threshold
    assert np.all(report.quantized_integral_error < limit)
    assert report.flux_discrepancy < limit
