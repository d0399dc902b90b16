import json

import numpy as np
import pytest

from singularlab.errors import SolverError
from singularlab.grid import FeFunction, build_interval_mesh, build_square_mesh, l2_norm, \
    p1_interpolate
from singularlab.measures import (atom_measure, boundary_power_density, density_measure, scale,
                                  truncate_to_core)
from singularlab.operators import CoefficientField
from singularlab.potential import d_lambda, linear_solution
from singularlab.singular import (SolverOptions, energy_J, pointwise_ratio, solve_singular,
                                  verify_bounds)


def ones(*c):
    return np.ones_like(c[0])


def sqrt_density(x):
    return 2 * np.sqrt(x * (1 - x))


@pytest.fixture(scope="module")
def mesh():
    return build_interval_mesh(128)


def test_manufactured_lambda_one():
    m = build_interval_mesh(256)
    u, rep = solve_singular(m, None, density_measure(m, lambda x: np.pi**2 * np.sin(np.pi * x) ** 2),
                            1.0)
    err = l2_norm(u - p1_interpolate(lambda x: np.sin(np.pi * x), m, conforming=True))
    assert err < 1e-5
    assert rep.converged
    assert rep.h1_seminorm == pytest.approx(np.pi / np.sqrt(2), abs=1e-3)
    assert rep.stages[-1]["epsilon"] == 0.0


def test_manufactured_lambda_half():
    m = build_interval_mesh(256)
    u, rep = solve_singular(m, None, density_measure(m, sqrt_density), 0.5)
    assert l2_norm(u - p1_interpolate(lambda x: x * (1 - x), m, conforming=True)) < 1e-6
    assert rep.energy_J == pytest.approx(-0.5, abs=1e-4)


def test_lambda_zero_is_linear(mesh):
    sigma = density_measure(mesh, lambda x: 1 + x)
    A = CoefficientField.constant(mesh, 3.0)
    u, rep = solve_singular(mesh, A, sigma, 0.0)
    np.testing.assert_array_equal(u.values, linear_solution(mesh, A, sigma).values)
    assert len(rep.stages) == 1


@pytest.mark.parametrize("lam, message", [(1.5, "out of scope regime")])
def test_rejects_large_lambda(mesh, lam, message):
    with pytest.raises(ValueError, match=message):
        solve_singular(mesh, None, density_measure(mesh, ones), lam)


def test_rejects_zero_measure(mesh):
    with pytest.raises(ValueError, match="existence requires"):
        solve_singular(mesh, None, scale(density_measure(mesh, ones), 0.0), 0.5)


def test_stage_failure_reports_diagnostics(mesh):
    opts = SolverOptions(max_newton=1)
    with pytest.raises(SolverError, match="stage failure") as info:
        solve_singular(mesh, None, density_measure(mesh, ones), 1.0, opts)
    assert "epsilon" in info.value.diagnostics


def test_solution_positive_on_singular_data(mesh):
    for sigma in (atom_measure(mesh, 0.3), boundary_power_density(mesh, 1.5)):
        u, _ = solve_singular(mesh, None, sigma, 0.5)
        assert np.all(u.interior_values > 0)


@pytest.mark.parametrize("lam", [0.25, 0.5, 1.0])
@pytest.mark.parametrize("t", [0.1, 3.0, 10.0])
def test_exact_scaling_law(mesh, lam, t):
    sigma = density_measure(mesh, lambda x: 1 + np.cos(5 * x) ** 2)
    u, _ = solve_singular(mesh, None, sigma, lam)
    ut, _ = solve_singular(mesh, None, scale(sigma, t), lam)
    assert np.abs(ut.values - t ** (1 / (1 + lam)) * u.values).max() <= 10 * 1e-11


@pytest.mark.parametrize("seed", range(5))
def test_comparison_principle_1d(mesh, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, 8)
    b = a + rng.uniform(0, 1, 8)
    lam = rng.uniform(0.1, 1.0)
    sigma = density_measure(mesh, lambda x: a[np.minimum((8 * x).astype(int), 7)])
    nu = density_measure(mesh, lambda x: b[np.minimum((8 * x).astype(int), 7)])
    u, _ = solve_singular(mesh, None, sigma, lam)
    v, _ = solve_singular(mesh, None, nu, lam)
    assert np.all(u.values <= v.values + 1e-9)


def test_comparison_principle_2d_scalar_coefficient():
    m = build_square_mesh(12)
    A = CoefficientField.constant(m, 2.0)
    u, _ = solve_singular(m, A, density_measure(m, ones), 0.5)
    v, _ = solve_singular(m, A, density_measure(m, lambda x, y: 1 + x * y), 0.5)
    assert np.all(u.values <= v.values + 1e-9)


def test_stages_increase_monotonically(mesh):
    opts = SolverOptions(record_stages=True)
    _, rep = solve_singular(mesh, None, density_measure(mesh, lambda x: 1 + x), 0.5, opts)
    stages = rep.stage_solutions
    assert len(stages) >= 2
    for prev, nxt in zip(stages, stages[1:]):
        assert np.all(nxt >= prev - 1e-9)


def test_continuation_schedules_agree(mesh):
    sigma = boundary_power_density(mesh, 0.7)
    u1, _ = solve_singular(mesh, None, sigma, 0.75)
    u2, _ = solve_singular(mesh, None, sigma, 0.75, SolverOptions(decay=0.5, eps0=2.0))
    assert np.abs(u1.values - u2.values).max() <= 1e-9


def test_local_minimality_of_energy(mesh):
    rng = np.random.default_rng(11)
    lam = 0.5
    A = CoefficientField.scalar(mesh, 1 + mesh.midpoints[:, 0])
    sigma = density_measure(mesh, lambda x: 1 + np.sin(7 * x) ** 2)
    u, _ = solve_singular(mesh, A, sigma, lam)
    J = energy_J(u, A, sigma, lam)
    for _ in range(20):
        phi = rng.normal(size=mesh.num_interior)
        for t in (1e-3, -1e-3):
            v = FeFunction.from_interior(mesh, np.maximum(u.interior_values + t * phi, 0.0))
            assert J <= energy_J(v, A, sigma, lam) + 1e-10


def test_energy_J_examples(mesh):
    sigma = density_measure(build_interval_mesh(1024), sqrt_density)
    u = p1_interpolate(lambda x: x * (1 - x), sigma.mesh, conforming=True)
    assert energy_J(u, None, sigma, 0.5) == pytest.approx(-0.5, abs=1e-6)
    zero = FeFunction(mesh, np.zeros(mesh.num_vertices))
    assert energy_J(zero, None, density_measure(mesh, ones), 0.5) == 0.0
    none = scale(density_measure(mesh, ones), 0.0)
    w = p1_interpolate(lambda x: np.sin(np.pi * x), mesh, conforming=True)
    assert energy_J(3.0 * w, None, none, 0.5) == pytest.approx(9 * energy_J(w, None, none, 0.5))


def test_energy_J_errors(mesh):
    u = p1_interpolate(lambda x: x * (1 - x), mesh, conforming=True)
    sigma = density_measure(mesh, ones)
    with pytest.raises(ValueError, match="undefined at λ=1"):
        energy_J(u, None, sigma, 1.0)
    m2 = build_square_mesh(4)
    A = CoefficientField.constant(m2, [[1.0, 1.0], [-1.0, 1.0]])
    with pytest.raises(ValueError, match="requires symmetry"):
        energy_J(FeFunction(m2, np.zeros(25)), A, density_measure(m2, ones), 0.5)


def test_verify_bounds_identity_is_tight(mesh):
    sigma = density_measure(mesh, ones)
    u, _ = solve_singular(mesh, None, sigma, 0.5)
    rep = verify_bounds(u, None, sigma, 0.5, 1.0, 1.0)
    assert rep.passed
    assert rep.energy_lower == pytest.approx(1.0, rel=0.02)
    assert rep.energy_upper == pytest.approx(1.0, rel=0.02)


def test_verify_bounds_general_coefficient(mesh):
    A = CoefficientField.scalar(mesh, np.where(mesh.midpoints[:, 0] < 0.5, 0.5, 2.0))
    assert (A.alpha, A.beta) == (0.5, 2.0)
    sigma = density_measure(mesh, ones)
    u, _ = solve_singular(mesh, A, sigma, 0.5)
    assert verify_bounds(u, A, sigma, 0.5, A.alpha, A.beta).passed


def test_verify_bounds_flags_corrupted_solution(mesh):
    sigma = truncate_to_core(density_measure(mesh, ones), 0.25)
    u, _ = solve_singular(mesh, None, sigma, 0.5)
    good = verify_bounds(u, None, sigma, 0.5, 1.0, 1.0)
    assert good.passed and good.pointwise is not None
    bad = verify_bounds(2.0 * u, None, sigma, 0.5, 1.0, 1.0)
    assert not bad.energy_ok and not bad.pointwise_ok


def test_pointwise_bound_core_measure(mesh):
    sigma = truncate_to_core(density_measure(mesh, lambda x: 1 + 3 * x), 0.25)
    A = CoefficientField.scalar(mesh, 1 + mesh.midpoints[:, 0] ** 2)
    u, _ = solve_singular(mesh, A, sigma, 0.3)
    assert pointwise_ratio(u, A, sigma, 0.3) <= 1.01


def test_stability_estimate_random(mesh):
    rng = np.random.default_rng(2)
    from singularlab.grid import h1_seminorm
    for _ in range(5):
        lam = rng.uniform(0.1, 1.0)
        alpha = rng.uniform(0.5, 2.0)
        A = CoefficientField.scalar(mesh, alpha * rng.uniform(1, 2, mesh.num_elements))
        a, b = rng.uniform(0, 2, 4), rng.uniform(0, 2, 4)
        sigma = density_measure(mesh, lambda x: 0.1 + a[np.minimum((4 * x).astype(int), 3)])
        nu = density_measure(mesh, lambda x: 0.1 + b[np.minimum((4 * x).astype(int), 3)])
        u, _ = solve_singular(mesh, A, sigma, lam)
        v, _ = solve_singular(mesh, A, nu, lam)
        bound = A.alpha ** (-1 / (1 + lam)) * d_lambda(sigma, nu, lam) ** (1 / (1 + lam))
        assert h1_seminorm(u - v) <= 1.02 * bound


def test_report_json_keys(mesh):
    _, rep = solve_singular(mesh, None, density_measure(mesh, ones), 0.5)
    data = json.loads(rep.to_json())
    assert set(data) == {"converged", "stages", "h1_seminorm", "energy_J", "bounds"}


def test_nonsymmetric_coefficient_2d():
    m = build_square_mesh(8)
    A = CoefficientField.constant(m, [[1.0, 0.5], [-0.5, 1.0]])
    u, rep = solve_singular(m, A, density_measure(m, ones), 0.5)
    assert rep.energy_J is None
    assert np.all(u.interior_values > 0)
