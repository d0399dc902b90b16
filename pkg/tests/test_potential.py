import numpy as np
import pytest

from singularlab.grid import build_interval_mesh, build_square_mesh
from singularlab.measures import (add, atom_measure, boundary_power_density, density_measure,
                                  scale, truncate_to_core)
from singularlab.operators import CoefficientField
from singularlab.potential import (cov_energy, d_lambda, direct_trace_sup, energy_report,
                                   green_potential, h_minus1_norm, linear_solution,
                                   potential_weighted_measure, trace_norm)


def ones(*c):
    return np.ones_like(c[0])


@pytest.fixture(scope="module")
def mesh():
    return build_interval_mesh(256)


def test_green_potential_of_dx_nodally_exact():
    mesh = build_interval_mesh(16)
    U = green_potential(mesh, density_measure(mesh, ones))
    x = mesh.vertices[:, 0]
    np.testing.assert_allclose(U.values, x * (1 - x) / 2, atol=1e-14)


def test_green_potential_of_atom():
    mesh = build_interval_mesh(16)
    U = green_potential(mesh, atom_measure(mesh, 0.5))
    x = mesh.vertices[:, 0]
    np.testing.assert_allclose(U.values, np.minimum(x, 1 - x) / 2, atol=1e-14)


def test_green_potential_of_zero():
    mesh = build_interval_mesh(8)
    U = green_potential(mesh, scale(density_measure(mesh, ones), 0.0))
    assert np.all(U.values == 0)


def test_linear_solution_scales_with_coefficient(mesh):
    sigma = density_measure(mesh, ones)
    U1 = linear_solution(mesh, CoefficientField.identity(mesh), sigma)
    U2 = linear_solution(mesh, CoefficientField.constant(mesh, 2.0), sigma)
    np.testing.assert_allclose(U1.values, green_potential(mesh, sigma).values, atol=1e-14)
    np.testing.assert_allclose(U2.values, U1.values / 2, atol=1e-14)


def test_linear_solution_converges_under_refinement():
    def layered(n):
        m = build_interval_mesh(n)
        a = 1 + (m.midpoints[:, 0] > 0.5)
        return m, linear_solution(m, CoefficientField.scalar(m, a), density_measure(m, ones))

    ref_mesh, ref = layered(1024)
    errs = []
    for n in (16, 32, 64):
        m, u = layered(n)
        errs.append(np.abs(u.values - ref.values[:: 1024 // n]).max())
    assert errs[-1] < 1e-12 or errs[0] / errs[-1] > 3


@pytest.mark.parametrize("sigma_fn, expected", [
    (lambda m: atom_measure(m, 0.5), 0.5),
    (lambda m: density_measure(m, ones), np.sqrt(1 / 12)),
])
def test_h_minus1_examples(sigma_fn, expected):
    m = build_interval_mesh(1024)
    assert h_minus1_norm(sigma_fn(m)) == pytest.approx(expected, abs=1e-6)


def test_cov_energy_reductions(mesh):
    sigma = density_measure(mesh, lambda x: 1 + x)
    assert cov_energy(sigma, 1.0) == pytest.approx(sigma.mass)
    assert cov_energy(sigma, 0.0) == pytest.approx(h_minus1_norm(sigma))
    atom = atom_measure(mesh, 0.5)
    assert cov_energy(atom, 0.5) == pytest.approx(0.25**0.25)
    with pytest.raises(ValueError, match="exponent out of range"):
        cov_energy(sigma, 1.5)


def test_trace_norm_manufactured_lambda_one():
    m = build_interval_mesh(512)
    sigma = density_measure(m, lambda x: np.pi**2 * np.sin(np.pi * x) ** 2)
    assert trace_norm(sigma, 1.0) == pytest.approx(np.pi**2 / 2, rel=1e-9)


def test_trace_norm_atom_and_linear(mesh):
    assert trace_norm(atom_measure(mesh, 0.5), 0.5) == pytest.approx(0.707107, abs=1e-6)
    assert trace_norm(density_measure(mesh, ones), 0.0) == pytest.approx(0.288675, abs=1e-5)
    assert trace_norm(scale(atom_measure(mesh, 0.5), 0.0), 0.5) == 0.0


@pytest.mark.parametrize("lam", [0.25, 0.5, 0.75, 1.0])
@pytest.mark.parametrize("kind", ["dx", "power", "atom"])
def test_trace_norm_matches_direct_maximization(lam, kind):
    m = build_interval_mesh(128)
    sigma = {"dx": density_measure(m, ones), "power": boundary_power_density(m, 0.5),
             "atom": atom_measure(m, 0.3)}[kind]
    assert trace_norm(sigma, lam) == pytest.approx(direct_trace_sup(sigma, lam), rel=1e-6)


@pytest.mark.parametrize("t", [0.1, 3.0, 10.0])
def test_trace_norm_one_homogeneous(mesh, t):
    sigma = density_measure(mesh, lambda x: 1 + np.sin(3 * x))
    assert trace_norm(scale(sigma, t), 0.5) == pytest.approx(t * trace_norm(sigma, 0.5), rel=1e-10)


@pytest.mark.parametrize("lam", [0.25, 0.5, 0.75])
def test_cov_bracket(mesh, lam):
    sigma = add(density_measure(mesh, ones), atom_measure(mesh, 0.3))
    t, c = trace_norm(sigma, lam), cov_energy(sigma, lam)
    assert 0.98 * t <= c <= 1.02 * (1 - lam**2) ** (-(1 - lam) / 2) * t


def test_interpolation_inequality(mesh):
    rng = np.random.default_rng(5)
    for _ in range(5):
        a = rng.uniform(0, 2, 4)
        sigma = density_measure(mesh, lambda x: a[np.minimum((4 * x).astype(int), 3)])
        lam = rng.uniform(0.1, 0.9)
        bound = sigma.mass**lam * h_minus1_norm(sigma) ** (1 - lam)
        assert trace_norm(sigma, lam) <= 1.01 * bound


def test_picone_embedding(mesh):
    rng = np.random.default_rng(6)
    from singularlab.grid import FeFunction, h1_seminorm
    sigma = truncate_to_core(density_measure(mesh, lambda x: 1 + x), 0.25)
    U = green_potential(mesh, sigma).values
    c = sigma.charges()
    sup = U[np.unique(c.nodes[c.weights > 0])].max()
    for _ in range(20):
        phi = FeFunction.from_interior(mesh, rng.normal(size=mesh.num_interior))
        lhs = c.weights @ c.interpolate(phi.values) ** 2
        assert lhs <= sup * h1_seminorm(phi) ** 2


def test_d_lambda_examples(mesh):
    one = density_measure(mesh, ones)
    two = density_measure(mesh, lambda x: 2 * np.ones_like(x))
    assert d_lambda(one, one, 0.5) == 0.0
    assert d_lambda(one, two, 1.0) == pytest.approx(1.0)
    assert d_lambda(one, two, 0.0) == pytest.approx(np.sqrt(1 / 12), abs=1e-5)
    assert d_lambda(one, two, 0.5) == pytest.approx(trace_norm(one, 0.5), rel=1e-10)


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_d_lambda_metric_axioms(mesh, lam):
    a = density_measure(mesh, ones)
    b = density_measure(mesh, lambda x: 2 * np.ones_like(x))
    c = add(atom_measure(mesh, 0.3), a)
    dab, dba = d_lambda(a, b, lam), d_lambda(b, a, lam)
    assert dab == pytest.approx(dba, rel=1e-12)
    assert dab <= d_lambda(a, c, lam) + d_lambda(c, b, lam) + 1e-12
    assert d_lambda(c, c, lam) == 0.0


def test_potential_weighted_measure(mesh):
    atom = atom_measure(mesh, 0.5)
    assert potential_weighted_measure(atom, 0.0) is atom
    np.testing.assert_allclose(potential_weighted_measure(atom, 0.5).atom_masses, [0.5])


def test_potential_weighted_measure_negative_power_mesh_stable():
    vals = []
    for n in (64, 256, 1024):
        m = build_interval_mesh(n)
        vals.append(h_minus1_norm(potential_weighted_measure(density_measure(m, ones), -1 / 3)))
    assert np.all(np.isfinite(vals))
    assert abs(vals[2] / vals[1] - 1) < abs(vals[1] / vals[0] - 1) + 1e-6
    assert abs(vals[2] / vals[1] - 1) < 1e-2


def test_potential_weighted_measure_singularity():
    m = build_interval_mesh(8)
    with pytest.raises(ValueError, match="weight singularity"):
        potential_weighted_measure(scale(density_measure(m, ones), 0.0), -0.5)


def test_energy_report_fields():
    m = build_interval_mesh(64)
    rep = energy_report(density_measure(m, ones), 1.0).to_dict()
    assert rep["trace_norm"] == pytest.approx(rep["mass"])
    assert set(rep) >= {"lambda", "trace_norm", "cov_energy", "h_minus1", "mass"}


def test_two_dimensional_norms():
    m = build_square_mesh(16)
    sigma = density_measure(m, ones)
    assert trace_norm(sigma, 1.0) == pytest.approx(1.0, rel=1e-10)
    t = trace_norm(sigma, 0.5)
    assert t <= cov_energy(sigma, 0.5) <= (1 - 0.25) ** -0.25 * t * 1.02
