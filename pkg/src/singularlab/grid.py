"""Uniform simplicial meshes of (0,1) and (0,1)^2 and nodal P1 functions."""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform mesh of the unit interval or unit square.

    A mesh is fully determined by ``(dim, n)``; equality and hashing use that
    key so meshes can serve as cache keys.  Vertices are ordered
    lexicographically by coordinate.  In 2D each grid square is cut into two
    right triangles along the diagonal that follows the distance-to-boundary
    ridge of its quadrant, so ``dist(x, boundary)`` is affine on every
    triangle touching the boundary.
    """

    dim: int
    n: int
    vertices: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray

    @property
    def key(self):
        return (self.dim, self.n)

    def __eq__(self, other):
        return isinstance(other, Mesh) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"Mesh(dim={self.dim}, n={self.n})"

    @property
    def h(self):
        """Mesh size: largest element diameter."""
        return float(np.sqrt(self.dim)) / self.n

    @property
    def cell_width(self):
        return 1.0 / self.n

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_elements(self):
        return self.elements.shape[0]

    @cached_property
    def interior(self):
        """Vertex indices of interior nodes, in vertex order."""
        return _frozen(np.flatnonzero(~self.boundary))

    @cached_property
    def interior_index(self):
        """Map vertex -> interior unknown index, -1 on the boundary."""
        idx = np.full(self.num_vertices, -1, dtype=np.int64)
        idx[self.interior] = np.arange(self.interior.size)
        return _frozen(idx)

    @property
    def num_interior(self):
        return int(self.interior.size)

    @cached_property
    def volumes(self):
        """Element lengths (1D) or areas (2D)."""
        if self.dim == 1:
            return _frozen(np.full(self.num_elements, 1.0 / self.n))
        p = self.vertices[self.elements]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return _frozen(0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]))

    @cached_property
    def gradients(self):
        """Constant basis gradients, shape (elements, dim + 1, dim)."""
        if self.dim == 1:
            g = np.empty((self.num_elements, 2, 1))
            g[:, 0, 0] = -self.n
            g[:, 1, 0] = self.n
            return _frozen(g)
        p = self.vertices[self.elements]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        inv = np.linalg.inv(jac)  # row r is grad of barycentric coordinate r + 1
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        return _frozen(np.einsum("kr,erd->ekd", ref, inv))

    @cached_property
    def midpoints(self):
        return _frozen(self.vertices[self.elements].mean(axis=1))

    def distance_to_boundary(self, points):
        """dist(x, boundary) for points of shape (m, dim)."""
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return np.minimum(points, 1.0 - points).min(axis=1)

    def coordinates(self, points=None):
        """Tuple of coordinate arrays, ready to splat into ``f(*coords)``."""
        pts = self.vertices if points is None else np.asarray(points).reshape(-1, self.dim)
        return tuple(pts[:, k] for k in range(self.dim))

    def locate(self, points):
        """Containing element and barycentric coordinates (1D only)."""
        if self.dim != 1:
            raise NotImplementedError("point location is implemented for 1D meshes")
        x = np.asarray(points, dtype=float).ravel()
        cell = np.clip(np.floor(x * self.n).astype(np.int64), 0, self.n - 1)
        right = x * self.n - cell
        basis = np.stack([1.0 - right, right], axis=1)
        return cell, basis


def build_interval_mesh(n: int) -> Mesh:
    """n equal cells on [0, 1]."""
    if n < 2:
        raise ValueError("no interior degrees of freedom")
    x = np.linspace(0.0, 1.0, n + 1).reshape(-1, 1)
    elements = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    boundary = np.zeros(n + 1, dtype=bool)
    boundary[[0, n]] = True
    return Mesh(1, n, _frozen(x), _frozen(elements), _frozen(boundary))


def build_square_mesh(n: int) -> Mesh:
    """n x n squares on [0, 1]^2, each cut into two right triangles."""
    if n < 2:
        raise ValueError("no interior degrees of freedom")
    t = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(t, t, indexing="ij")
    vertices = np.stack([xx.ravel(), yy.ravel()], axis=1)

    def vid(i, j):
        return i * (n + 1) + j

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
    cx = (i + 0.5) / n - 0.5
    cy = (j + 0.5) / n - 0.5
    slash = cx * cy >= 0  # diagonal v00-v11 in the lower-left / upper-right quadrants
    tri_a = np.where(slash[:, None], np.stack([v00, v10, v11], 1), np.stack([v00, v10, v01], 1))
    tri_b = np.where(slash[:, None], np.stack([v00, v11, v01], 1), np.stack([v10, v11, v01], 1))
    elements = np.empty((2 * n * n, 3), dtype=np.int64)
    elements[0::2] = tri_a
    elements[1::2] = tri_b
    boundary = (
        np.isclose(vertices, 0.0).any(axis=1) | np.isclose(vertices, 1.0).any(axis=1)
    )
    return Mesh(2, n, _frozen(vertices), _frozen(elements), _frozen(boundary))


def build_mesh(dim: int, n: int) -> Mesh:
    if dim == 1:
        return build_interval_mesh(n)
    if dim == 2:
        return build_square_mesh(n)
    raise ValueError(f"unsupported dimension {dim}")


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Nodal values of a continuous piecewise linear function."""

    mesh: Mesh
    values: np.ndarray
    conforming: bool = True

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.mesh.num_vertices,):
            raise ValueError(
                f"expected {self.mesh.num_vertices} nodal values, got shape {values.shape}"
            )
        if self.conforming and np.any(values[self.mesh.boundary] != 0.0):
            raise ValueError("conforming function must vanish on the boundary")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_interior(cls, mesh, interior_values):
        values = np.zeros(mesh.num_vertices)
        values[mesh.interior] = interior_values
        return cls(mesh, values)

    @property
    def interior_values(self):
        return self.values[self.mesh.interior]

    def __mul__(self, t):
        return FeFunction(self.mesh, t * self.values, self.conforming)

    __rmul__ = __mul__

    def __add__(self, other):
        _check_same_mesh(self, other)
        return FeFunction(self.mesh, self.values + other.values, self.conforming and other.conforming)

    def __sub__(self, other):
        _check_same_mesh(self, other)
        return FeFunction(self.mesh, self.values - other.values, self.conforming and other.conforming)


def _check_same_mesh(u, v):
    if u.mesh != v.mesh:
        raise ValueError("functions live on different meshes")


def p1_interpolate(f: Callable, mesh: Mesh, conforming: bool = False) -> FeFunction:
    """Nodal interpolant of ``f(*coords)``; boundary values zeroed if conforming."""
    values = np.broadcast_to(np.asarray(f(*mesh.coordinates()), dtype=float), (mesh.num_vertices,))
    values = values.copy()
    if conforming:
        values[mesh.boundary] = 0.0
    if not np.all(np.isfinite(values)):
        raise ValueError("non-interpolable")
    return FeFunction(mesh, values, conforming)


def h1_seminorm(u: FeFunction) -> float:
    """||grad u||_{L^2}, integrated exactly element by element."""
    mesh = u.mesh
    grads = np.einsum("ek,ekd->ed", u.values[mesh.elements], mesh.gradients)
    return float(np.sqrt(np.sum(mesh.volumes * np.sum(grads**2, axis=1))))


def l2_norm(u: FeFunction) -> float:
    """||u||_{L^2}, exact for piecewise linears."""
    mesh = u.mesh
    local = u.values[mesh.elements]
    d = mesh.dim
    integrand = (np.sum(local**2, axis=1) + np.sum(local, axis=1) ** 2) / ((d + 1) * (d + 2))
    return float(np.sqrt(np.sum(mesh.volumes * integrand)))


def field_csv(u: FeFunction) -> str:
    """CSV dump ``x[,y],value`` in vertex order, 17 significant digits."""
    header = "x,value" if u.mesh.dim == 1 else "x,y,value"
    buf = io.StringIO()
    buf.write(header + "\n")
    for coords, val in zip(u.mesh.vertices, u.values):
        buf.write(",".join(f"{c:.17g}" for c in (*coords, val)) + "\n")
    return buf.getvalue()


def write_field_csv(u: FeFunction, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(field_csv(u))
