import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singularlab.grid import (FeFunction, build_interval_mesh, build_mesh, build_square_mesh,
                              field_csv, h1_seminorm, l2_norm, p1_interpolate)


def test_interval_counts():
    mesh = build_interval_mesh(2)
    assert mesh.num_vertices == 3
    assert mesh.num_interior == 1
    assert mesh.h == 0.5


def test_interval_vertices():
    mesh = build_interval_mesh(4)
    np.testing.assert_allclose(mesh.vertices[:, 0], [0, 0.25, 0.5, 0.75, 1])
    assert mesh.boundary.tolist() == [True, False, False, False, True]


@pytest.mark.parametrize("n, vertices, triangles, interior", [(2, 9, 8, 1), (4, 25, 32, 9)])
def test_square_counts(n, vertices, triangles, interior):
    mesh = build_square_mesh(n)
    assert mesh.num_vertices == vertices
    assert mesh.num_elements == triangles
    assert mesh.num_interior == interior


@pytest.mark.parametrize("builder", [build_interval_mesh, build_square_mesh])
def test_single_cell_rejected(builder):
    with pytest.raises(ValueError, match="no interior degrees of freedom"):
        builder(1)


@pytest.mark.parametrize("n", [2, 3, 8])
def test_square_tiles_domain(n):
    mesh = build_square_mesh(n)
    assert np.all(mesh.volumes > 0)
    assert mesh.volumes.sum() == pytest.approx(1.0)


def test_square_distance_affine_on_boundary_triangles():
    mesh = build_square_mesh(8)
    d = mesh.distance_to_boundary(mesh.vertices)
    touching = d[mesh.elements].min(axis=1) == 0
    mids = mesh.midpoints[touching]
    # affine functions are reproduced at the centroid by vertex averaging
    np.testing.assert_allclose(mesh.distance_to_boundary(mids), d[mesh.elements[touching]].mean(1))


def test_mesh_equality_by_key():
    assert build_mesh(1, 8) == build_mesh(1, 8)
    assert build_mesh(1, 8) != build_mesh(2, 8)
    assert len({build_mesh(2, 4), build_mesh(2, 4)}) == 1


def test_interpolate_examples():
    mesh = build_interval_mesh(4)
    np.testing.assert_array_equal(p1_interpolate(lambda x: np.ones_like(x), mesh).values, 1.0)
    np.testing.assert_allclose(p1_interpolate(lambda x: x, mesh).values, mesh.vertices[:, 0])
    u = p1_interpolate(lambda x: np.sin(np.pi * x), mesh)
    assert u.values[2] == pytest.approx(1.0)


def test_interpolate_conforming_zeroes_boundary():
    mesh = build_square_mesh(4)
    u = p1_interpolate(lambda x, y: 1 + x + y, mesh, conforming=True)
    assert np.all(u.values[mesh.boundary] == 0)


def test_interpolate_rejects_nonfinite():
    with pytest.raises(ValueError, match="non-interpolable"):
        with np.errstate(divide="ignore"):
            p1_interpolate(lambda x: 1 / x, build_interval_mesh(4))


def test_conforming_function_validated():
    mesh = build_interval_mesh(4)
    with pytest.raises(ValueError):
        FeFunction(mesh, np.ones(5))
    with pytest.raises(ValueError):
        FeFunction(mesh, np.zeros(4))


def test_norm_examples():
    mesh = build_interval_mesh(8)
    assert h1_seminorm(p1_interpolate(lambda x: x, mesh)) == pytest.approx(1.0)
    hat = FeFunction.from_interior(build_interval_mesh(2), [1.0])
    assert h1_seminorm(hat) == pytest.approx(2.0)
    assert l2_norm(p1_interpolate(lambda x: np.ones_like(x), mesh)) == pytest.approx(1.0)


def test_square_norms_exact_for_linears():
    mesh = build_square_mesh(4)
    u = p1_interpolate(lambda x, y: x + 2 * y, mesh)
    assert h1_seminorm(u) == pytest.approx(np.sqrt(5.0))
    assert l2_norm(u) ** 2 == pytest.approx(1 / 3 + 2 * 0.5 + 4 / 3)


def test_poincare_on_random_functions():
    rng = np.random.default_rng(0)
    mesh = build_interval_mesh(64)
    for _ in range(200):
        u = FeFunction.from_interior(mesh, rng.normal(size=mesh.num_interior))
        assert l2_norm(u) <= h1_seminorm(u) / np.pi


@settings(max_examples=30, deadline=None)
@given(t=st.floats(1e-6, 1e3), sign=st.sampled_from([-1.0, 1.0]),
       seed=st.integers(0, 2**32 - 1))
def test_seminorm_homogeneous(t, sign, seed):
    t *= sign
    mesh = build_square_mesh(4)
    u = FeFunction.from_interior(mesh, np.random.default_rng(seed).normal(size=9))
    assert h1_seminorm(t * u) == pytest.approx(abs(t) * h1_seminorm(u), rel=1e-13, abs=1e-300)


def test_l2_norm_converges_quadratically():
    def f(x):
        return np.exp(x) * np.sin(np.pi * x)

    # int_0^1 e^{2x} sin^2(pi x) dx
    exact = np.sqrt((np.exp(2) - 1) * np.pi**2 / (4 * (1 + np.pi**2)))
    errs = [abs(l2_norm(p1_interpolate(f, build_interval_mesh(n))) - exact) for n in (32, 64, 128)]
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_field_csv_layout():
    mesh = build_square_mesh(2)
    text = field_csv(p1_interpolate(lambda x, y: x, mesh))
    lines = text.splitlines()
    assert lines[0] == "x,y,value"
    assert len(lines) == 10
    assert lines[2] == "0,0.5,0"
    assert field_csv(p1_interpolate(lambda x: x / 3, build_interval_mesh(2))).splitlines()[2] \
        == "0.5,0.16666666666666666"
