"""Per-cell quadrature rules on a mesh.

A rule is a flat cloud of points with geometric weights, each tagged with
its containing element and the values of the element's P1 basis there.
Boundary-singular integrands use a geometrically graded rule whose panels
shrink toward the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .grid import Mesh

GRADED_POINTS = 12
GRADED_RATIO = 0.5
GRADED_DEPTH = 40
SLICE_POINTS = 4


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Quadrature cloud on a mesh.

    Attributes
    ----------
    points : (q, dim) array
    weights : (q,) geometric weights, summing to |Omega| up to truncation
    elements : (q,) containing element of each point
    depth : (q,) graded panel index, -1 for points of regular cells
    kind : ``"gauss"`` or ``"graded"``
    order : polynomial exactness on regular cells
    """

    mesh: Mesh
    points: np.ndarray
    weights: np.ndarray
    elements: np.ndarray
    depth: np.ndarray
    kind: str
    order: int

    @property
    def key(self):
        return (self.mesh.key, self.kind, self.order)

    @property
    def size(self):
        return self.weights.size

    @property
    def nodes(self):
        """Vertex ids of the containing element, shape (q, dim + 1)."""
        return self.mesh.elements[self.elements]

    @property
    def basis(self):
        """P1 basis values at the points, shape (q, dim + 1)."""
        return barycentric(self.mesh, self.elements, self.points)

    def integrate(self, values):
        return float(np.dot(self.weights, values))


def barycentric(mesh: Mesh, elements, points):
    """Barycentric coordinates of ``points`` in their ``elements``."""
    points = np.asarray(points, dtype=float).reshape(-1, mesh.dim)
    origin = mesh.vertices[mesh.elements[elements, 0]]
    lam = np.einsum("qkd,qd->qk", mesh.gradients[elements], points - origin)
    lam[:, 0] += 1.0
    return lam


def _gauss_01(k):
    x, w = leggauss(k)
    return 0.5 * (x + 1.0), 0.5 * w


def _triangle_reference(k):
    """Collapsed product rule on the unit right triangle, degree 2k - 1."""
    xa, wa = roots_jacobi(k, 1.0, 0.0)
    a = 0.5 * (xa + 1.0)
    b, wb = _gauss_01(k)
    A, B = np.meshgrid(a, b, indexing="ij")
    W = np.outer(wa / 4.0, wb)
    return np.stack([A.ravel(), (B * (1.0 - A)).ravel()], axis=1), W.ravel()


def _map_cells(mesh: Mesh, cells, k):
    """Tensor rule with k points per direction on the given elements."""
    cells = np.asarray(cells, dtype=np.int64)
    if mesh.dim == 1:
        x, w = _gauss_01(k)
        left = mesh.vertices[mesh.elements[cells, 0], 0]
        pts = left[:, None] + mesh.cell_width * x[None, :]
        wts = np.broadcast_to(mesh.cell_width * w, pts.shape)
        return pts.reshape(-1, 1), wts.ravel(), np.repeat(cells, k)
    ref, rw = _triangle_reference(k)
    p = mesh.vertices[mesh.elements[cells]]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    pts = p[:, None, 0] + ref[None, :, :1] * e1[:, None] + ref[None, :, 1:] * e2[:, None]
    wts = 2.0 * mesh.volumes[cells, None] * rw[None, :]
    return pts.reshape(-1, 2), wts.ravel(), np.repeat(cells, rw.size)


def _graded_panels(length):
    """Graded t-nodes on [0, length] refined toward 0; innermost panel dropped."""
    x, w = _gauss_01(GRADED_POINTS)
    hi = length * GRADED_RATIO ** np.arange(GRADED_DEPTH)
    lo = hi * GRADED_RATIO
    t = lo[:, None] + (hi - lo)[:, None] * x[None, :]
    wt = (hi - lo)[:, None] * w[None, :]
    depth = np.repeat(np.arange(GRADED_DEPTH), GRADED_POINTS)
    return t.ravel(), wt.ravel(), depth


@lru_cache(maxsize=32)
def gauss_rule(mesh: Mesh, order: int = 5) -> QuadratureRule:
    """Gauss rule exact for polynomials of degree ``order`` on every cell."""
    if order < 1:
        raise ValueError("quadrature order must be positive")
    k = order // 2 + 1
    pts, wts, cells = _map_cells(mesh, np.arange(mesh.num_elements), k)
    return QuadratureRule(
        mesh, _frozen(pts), _frozen(wts), _frozen(cells),
        _frozen(np.full(wts.size, -1)), "gauss", 2 * k - 1,
    )


def _graded_1d(mesh: Mesh):
    n = mesh.n
    t, wt, depth = _graded_panels(mesh.cell_width)
    pts = [t, 1.0 - t]
    wts = [wt, wt]
    cells = [np.zeros(t.size, np.int64), np.full(t.size, n - 1)]
    deps = [depth, depth]
    inner = np.arange(1, n - 1)
    ridge = n // 2 if n % 2 else -1  # cell holding the kink of dist at x = 1/2
    p, w, c = _map_cells(mesh, inner[inner != ridge], GRADED_POINTS)
    pts.append(p[:, 0])
    wts.append(w)
    cells.append(c)
    if ridge > 0:
        x, wx = _gauss_01(GRADED_POINTS)
        for lo, hi in ((ridge / n, 0.5), (0.5, (ridge + 1) / n)):
            pts.append(lo + (hi - lo) * x)
            wts.append((hi - lo) * wx)
            cells.append(np.full(x.size, ridge))
    deps.append(np.full(sum(a.size for a in wts[2:]), -1))
    return (np.concatenate(pts)[:, None], np.concatenate(wts),
            np.concatenate(cells), np.concatenate(deps))


def _slice_range(p_start, p_end, q_start, q_end, t_lo, t_hi, graded, grad_norm, cells):
    """Integrate over {t_lo < delta < t_hi} of triangles by level-set slices.

    On each slice the endpoints move affinely in t from *_start to *_end.
    """
    if graded:
        t, wt, depth = _graded_panels(1.0)
    else:
        t, wt = _gauss_01(GRADED_POINTS)
        depth = np.full(t.size, -1)
    s, ws = _gauss_01(SLICE_POINTS)
    span = (t_hi - t_lo)[:, None]
    tau = t[None, :]  # fraction of the range
    P = p_start[:, None] + tau[..., None] * (p_end - p_start)[:, None]
    Q = q_start[:, None] + tau[..., None] * (q_end - q_start)[:, None]
    length = np.linalg.norm(Q - P, axis=2)
    pts = P[:, :, None] + s[None, None, :, None] * (Q - P)[:, :, None]
    w = (span * wt[None, :] * length / grad_norm[:, None])[:, :, None] * ws[None, None, :]
    m = cells.size
    return (
        pts.reshape(-1, 2),
        w.ravel(),
        np.repeat(cells, t.size * s.size),
        np.tile(np.repeat(depth, s.size), m),
    )


def _graded_2d(mesh: Mesh):
    dist = mesh.distance_to_boundary(mesh.vertices)
    d_el = dist[mesh.elements]
    touching = np.flatnonzero(d_el.min(axis=1) == 0.0)
    inner = np.setdiff1d(np.arange(mesh.num_elements), touching)
    order = np.argsort(d_el[touching], axis=1, kind="stable")
    tri = np.take_along_axis(mesh.elements[touching], order, axis=1)
    d = np.take_along_axis(d_el[touching], order, axis=1)
    v = mesh.vertices[tri]
    grad = np.einsum("ek,ekd->ed", d_el[touching], mesh.gradients[touching])
    gnorm = np.linalg.norm(grad, axis=1)
    q_mid = v[:, 0] + ((d[:, 1] - d[:, 0]) / (d[:, 2] - d[:, 0]))[:, None] * (v[:, 2] - v[:, 0])

    parts = []
    first = d[:, 1] > d[:, 0]  # lower range [d0, d1], graded since d0 = 0
    if first.any():
        f = first
        parts.append(_slice_range(v[f, 0], v[f, 1], v[f, 0], q_mid[f],
                                  d[f, 0], d[f, 1], True, gnorm[f], touching[f]))
    second = d[:, 2] > d[:, 1]  # upper range [d1, d2], graded only if it starts on the boundary
    for graded in (True, False):
        f = second & ((d[:, 1] == 0.0) == graded)
        if f.any():
            parts.append(_slice_range(v[f, 1], v[f, 2], q_mid[f], v[f, 2],
                                      d[f, 1], d[f, 2], graded, gnorm[f], touching[f]))
    p, w, c = _map_cells(mesh, inner, 6)
    parts.append((p, w, c, np.full(w.size, -1)))
    return tuple(np.concatenate(x) for x in zip(*parts))


@lru_cache(maxsize=32)
def graded_rule(mesh: Mesh) -> QuadratureRule:
    """Rule for densities singular at the boundary.

    Boundary cells are cut into level sets of dist(x, boundary) graded
    geometrically (ratio 1/2, 40 panels of 12 Gauss points); the innermost
    panel, of width h * 2^-40, is dropped.  Other cells get a degree-11 rule.
    """
    build = _graded_1d if mesh.dim == 1 else _graded_2d
    pts, wts, cells, depth = build(mesh)
    return QuadratureRule(
        mesh, _frozen(pts), _frozen(wts), _frozen(cells), _frozen(depth), "graded", 11
    )
