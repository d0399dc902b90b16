"""Green potentials, H^-1 norms, the trace energy norm and the measure distance."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .grid import FeFunction, Mesh
from .measures import DiscreteMeasure, _build, abs_diff
from .operators import (CoefficientField, SparseSpdOperator, assemble_stiffness,
                        conjugate_gradient, solve_linear)


@lru_cache(maxsize=16)
def laplacian(mesh: Mesh) -> SparseSpdOperator:
    """Cached A = I stiffness matrix."""
    return assemble_stiffness(mesh)


def _check_mesh(mesh, sigma):
    if sigma.mesh != mesh:
        raise ValueError("measure lives on a different mesh")


def green_potential(mesh: Mesh, sigma: DiscreteMeasure) -> FeFunction:
    """Discrete G sigma: solve K_I U = b(sigma)."""
    _check_mesh(mesh, sigma)
    return FeFunction.from_interior(mesh, conjugate_gradient(laplacian(mesh),
                                                             sigma.interior_load)[0])


def linear_solution(mesh: Mesh, A: CoefficientField | None, sigma: DiscreteMeasure) -> FeFunction:
    """Solve K_A U = b(sigma)."""
    _check_mesh(mesh, sigma)
    if A is None:
        return green_potential(mesh, sigma)
    return FeFunction.from_interior(mesh, solve_linear(assemble_stiffness(mesh, A),
                                                       sigma.interior_load))


def h_minus1_norm(sigma: DiscreteMeasure) -> float:
    """sqrt(b^T K_I^-1 b), the discrete energy of sigma."""
    b = sigma.interior_load
    U = green_potential(sigma.mesh, sigma).interior_values
    return float(np.sqrt(max(b @ U, 0.0)))


def _check_lambda(lam):
    if not 0.0 <= lam <= 1.0:
        raise ValueError("exponent out of range")


def cov_energy(sigma: DiscreteMeasure, lam: float) -> float:
    """(int U^{(1-lam)/(1+lam)} dsigma)^{(1+lam)/2}, U the Green potential.

    The integral runs over the measure's quadrature cloud and atoms with U
    evaluated through its P1 interpolant.
    """
    _check_lambda(lam)
    if lam == 0.0:
        return h_minus1_norm(sigma)
    c = sigma.charges()
    if lam == 1.0:
        return float(c.weights.sum())
    U = green_potential(sigma.mesh, sigma).values
    Uq = np.maximum(c.interpolate(U), 0.0)
    return float(c.weights @ Uq ** ((1.0 - lam) / (1.0 + lam))) ** ((1.0 + lam) / 2.0)


def trace_norm(sigma: DiscreteMeasure, lam: float, opts=None) -> float:
    """Energy norm of sigma as |grad u|^{1+lam}, u the A = I singular solution."""
    from .singular import solve_singular

    _check_lambda(lam)
    if sigma.is_zero:
        return 0.0
    if lam == 0.0:
        return h_minus1_norm(sigma)
    u, _ = solve_singular(sigma.mesh, None, sigma, lam, opts)
    v = u.interior_values
    return laplacian(sigma.mesh).energy(v) ** ((1.0 + lam) / 2.0)


def direct_trace_sup(sigma: DiscreteMeasure, lam: float, max_dim: int = 2048) -> float:
    """sup over phi of int |phi|^{1-lam} dsigma / |grad phi|^{1-lam}, maximized directly.

    Independent of the singular solver: the ratio is maximized with L-BFGS in
    coordinates whitened by a dense Cholesky factor of the Laplacian, starting
    from the Green potential.  Intended for small meshes.
    """
    _check_lambda(lam)
    mesh = sigma.mesh
    if mesh.num_interior > max_dim:
        raise ValueError("mesh too large for the dense maximization")
    if sigma.is_zero:
        return 0.0
    K = laplacian(mesh).toarray()
    L = np.linalg.cholesky(K)
    c = sigma.charges()
    keep = c.weights > 0.0
    w, basis = c.weights[keep], c.basis[keep]
    slot = np.where(mesh.interior_index[c.nodes[keep]] < 0, mesh.num_interior,
                    mesh.interior_index[c.nodes[keep]])
    p = 1.0 - lam
    m = mesh.num_interior

    def phi_of(z):
        return sla.solve_triangular(L, z, lower=True, trans="T")

    def negative_ratio(z):
        v = phi_of(z)
        vq = np.einsum("qk,qk->q", basis, np.append(v, 0.0)[slot])
        a = np.abs(vq)
        zn = z @ z
        num = w @ a ** p
        val = num / zn ** (p / 2.0)
        with np.errstate(divide="ignore"):
            dq = np.where(a > 0.0, p * w * a ** (p - 1.0) * np.sign(vq), 0.0)
        gv = np.bincount(slot.ravel(), (basis * dq[:, None]).ravel(), minlength=m + 1)[:m]
        gz = sla.solve_triangular(L, gv, lower=True)
        grad = gz / zn ** (p / 2.0) - p * num * z / zn ** (p / 2.0 + 1.0)
        return -val, -grad

    U = green_potential(mesh, sigma).interior_values
    z0 = L.T @ U
    z0 /= np.linalg.norm(z0)
    res = minimize(negative_ratio, z0, jac=True, method="L-BFGS-B",
                   options={"maxiter": 5000, "gtol": 1e-12, "ftol": 1e-15})
    return float(-res.fun)


def d_lambda(sigma: DiscreteMeasure, nu: DiscreteMeasure, lam: float, opts=None) -> float:
    """Distance of measures: energy norm of |sigma - nu|."""
    return trace_norm(abs_diff(sigma, nu), lam, opts)


def potential_weighted_measure(mu: DiscreteMeasure, p: float) -> DiscreteMeasure:
    """Measure (G mu)^p mu, weights applied at quadrature points and atoms."""
    if p == 0.0:
        return mu
    if p < 0.0 and mu.is_zero:
        raise ValueError("weight singularity")
    U = green_potential(mu.mesh, mu).values
    dens = None
    if mu.rule is not None:
        Uq = np.einsum("qk,qk->q", mu.rule.basis, U[mu.rule.nodes])
        charged = mu.density > 0.0
        if p < 0.0 and np.any(Uq[charged] <= 0.0):
            raise ValueError("weight singularity")
        dens = np.where(charged, mu.density * np.where(charged, Uq, 1.0) ** p, 0.0)
    masses = mu.atom_masses
    if mu.atom_positions.size:
        cell, phi = mu.mesh.locate(mu.atom_positions)
        Ua = np.einsum("qk,qk->q", phi, U[mu.mesh.elements[cell]])
        if p < 0.0 and np.any(Ua <= 0.0):
            raise ValueError("weight singularity")
        masses = masses * Ua ** p
    return _build(mu.mesh, mu.rule, dens, mu.atom_positions, masses)


@dataclass(frozen=True)
class EnergyReport:
    lam: float
    trace_norm: float
    cov_energy: float
    h_minus1: float
    mass: float
    h: float

    def to_dict(self):
        return {
            "lambda": self.lam,
            "trace_norm": self.trace_norm,
            "cov_energy": self.cov_energy,
            "h_minus1": self.h_minus1,
            "mass": self.mass if np.isfinite(self.mass) else "inf",
            "h": self.h,
        }


def energy_report(sigma: DiscreteMeasure, lam: float, opts=None) -> EnergyReport:
    return EnergyReport(lam, trace_norm(sigma, lam, opts), cov_energy(sigma, lam),
                        h_minus1_norm(sigma), sigma.mass, sigma.mesh.h)
