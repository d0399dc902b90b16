"""Laminated coefficients, perturbed measure families and the H-convergence driver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import SolverError
from .grid import FeFunction, Mesh, l2_norm, p1_interpolate
from .measures import DiscreteMeasure, _build
from .operators import CoefficientField, assemble_mass, solve_spd
from .potential import d_lambda, green_potential, laplacian, linear_solution
from .singular import SolverOptions, solve_singular

FIELDS = ("epsilon", "l2_err", "pair_1", "pair_2", "pair_3", "pair_4", "hminus1_rhs", "d_lambda")


def _check_epsilon(eps):
    inv = 1.0 / eps
    if eps <= 0 or abs(inv - round(inv)) > 1e-9:
        raise ValueError("epsilon must be the reciprocal of an integer")


def _check_resolved(mesh: Mesh, eps: float):
    if mesh.cell_width > eps / 16.0 * (1.0 + 1e-12):
        raise ValueError("mesh must resolve ε")


@dataclass(frozen=True)
class OscillatingFamily:
    """Periodic profile a(y) > 0 laminated along ``axis`` at scales ``epsilons``."""

    profile: Callable
    epsilons: tuple
    axis: int = 0
    name: str = "profile"

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(sorted(map(float, self.epsilons), reverse=True)))
        for eps in self.epsilons:
            _check_epsilon(eps)
        y = np.linspace(0.0, 1.0, 2049)
        if np.min(self.profile(y)) <= 0.0:
            raise ValueError("profile must be positive")

    def coefficient(self, mesh: Mesh, eps: float) -> CoefficientField:
        return layered_coefficient(self.profile, eps, self.axis, mesh)

    def limit(self, dim: int) -> np.ndarray:
        return h_limit_layered(self.profile, self.axis, dim)


def layered_coefficient(profile: Callable, eps: float, axis: int, mesh: Mesh) -> CoefficientField:
    """A(x) = a(x_axis / eps) I sampled at element midpoints."""
    _check_resolved(mesh, eps)
    if not 0 <= axis < mesh.dim:
        raise ValueError("axis out of range")
    vals = np.asarray(profile(mesh.midpoints[:, axis] / eps), dtype=float)
    vals = np.broadcast_to(vals, (mesh.num_elements,))
    return CoefficientField.scalar(mesh, vals)


def _means(profile):
    opts = {"limit": 200, "epsabs": 1e-14, "epsrel": 1e-13}
    harmonic = 1.0 / quad(lambda y: 1.0 / profile(y), 0.0, 1.0, **opts)[0]
    arithmetic = quad(profile, 0.0, 1.0, **opts)[0]
    return harmonic, arithmetic


def h_limit_layered(profile: Callable, axis: int = 0, dim: int = 1) -> np.ndarray:
    """Homogenized matrix of a laminate: harmonic mean across the layers,
    arithmetic mean along them."""
    harmonic, arithmetic = _means(profile)
    A0 = np.eye(dim) * arithmetic
    A0[axis, axis] = harmonic
    return A0


@dataclass(frozen=True)
class MeasureFamilyEntry:
    epsilon: float
    measure: DiscreteMeasure
    dlambda_nonvanishing: bool


def perturbed_measure_family(sigma: DiscreteMeasure, kind: str,
                             epsilons: Sequence[float]) -> list[MeasureFamilyEntry]:
    """Densities f (1 + eps sin(2 pi x / eps)) ("decaying") or f (1 + sin(2 pi x / eps))
    ("oscillating"); eps = 0 returns sigma itself."""
    if sigma.rule is None or sigma.atom_positions.size:
        raise ValueError("perturbation needs a density measure")
    if kind not in ("decaying", "oscillating"):
        raise ValueError(f"unknown family kind {kind!r}")
    x = sigma.rule.points[:, 0]
    out = []
    for eps in epsilons:
        if eps == 0.0:
            out.append(MeasureFamilyEntry(0.0, sigma, kind == "oscillating"))
            continue
        _check_epsilon(eps)
        _check_resolved(sigma.mesh, eps)
        amp = eps if kind == "decaying" else 1.0
        dens = sigma.density * (1.0 + amp * np.sin(2.0 * np.pi * x / eps))
        out.append(MeasureFamilyEntry(eps, _build(sigma.mesh, sigma.rule, dens),
                                      kind == "oscillating"))
    return out


@dataclass
class ConvergenceTable:
    """Per-epsilon error indicators, rows sorted by decreasing epsilon."""

    rows: list = field(default_factory=list)
    h: float = float("nan")
    lam: float = float("nan")
    dlambda_nonvanishing: bool = False

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def to_csv(self) -> str:
        lines = [",".join(FIELDS)]
        for r in self.rows:
            lines.append(",".join(f"{r[k]:.17g}" for k in FIELDS))
        return "\n".join(lines) + "\n"

    def rates(self) -> dict:
        """Least-squares slopes of log|column| against log(epsilon)."""
        eps = self.column("epsilon")
        out = {}
        for k in FIELDS[1:]:
            v = np.abs(self.column(k))
            if len(eps) >= 2 and np.all(v > 0):
                out[k] = float(np.polyfit(np.log(eps), np.log(v), 1)[0])
            else:
                out[k] = None
        return out

    def summary(self) -> dict:
        return {
            "h": self.h,
            "lambda": self.lam,
            "epsilons": self.column("epsilon").tolist(),
            "rates": self.rates(),
            "dlambda_nonvanishing": self.dlambda_nonvanishing,
        }


def weak_test_functions(mesh: Mesh, count: int = 4) -> list[FeFunction]:
    """Interpolants of sin(j pi x) (tensor sin(j pi x) sin(j pi y) in 2D)."""
    if mesh.dim == 1:
        fs = [lambda x, j=j: np.sin(j * np.pi * x) for j in range(1, count + 1)]
    else:
        fs = [lambda x, y, j=j: np.sin(j * np.pi * x) * np.sin(j * np.pi * y)
              for j in range(1, count + 1)]
    return [p1_interpolate(f, mesh, conforming=True) for f in fs]


def _rhs_vector(mesh, u: FeFunction, sigma: DiscreteMeasure, lam):
    c = sigma.charges()
    uq = c.interpolate(u.values)
    return c.pair(c.weights * uq ** -lam, mesh.num_vertices)[mesh.interior]


def run_h_convergence(family: OscillatingFamily, measures: Sequence[MeasureFamilyEntry],
                      lam: float, mesh: Mesh, tests: Sequence[FeFunction] | None = None,
                      opts: SolverOptions | None = None, sigma: DiscreteMeasure | None = None
                      ) -> ConvergenceTable:
    """Solve the oscillating problems and the homogenized limit on one mesh.

    ``measures`` pairs each epsilon of ``family`` with sigma_eps; the limit
    problem uses ``sigma`` (defaults to the eps = 0 entry if present, else
    the measures are assumed unperturbed and the first one is used).
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError("exponent out of range")
    by_eps = {e.epsilon: e for e in measures}
    if sigma is None:
        sigma = by_eps[0.0].measure if 0.0 in by_eps else measures[0].measure
    for eps in family.epsilons:
        _check_resolved(mesh, eps)
        if eps not in by_eps:
            raise ValueError(f"no measure for epsilon {eps}")
    tests = weak_test_functions(mesh) if tests is None else list(tests)
    K1 = laplacian(mesh)
    A0 = CoefficientField.constant(mesh, family.limit(mesh.dim))
    u0, _ = solve_singular(mesh, A0, sigma, lam, opts)
    r0 = _rhs_vector(mesh, u0, sigma, lam)
    table = ConvergenceTable(h=mesh.h, lam=lam,
                             dlambda_nonvanishing=any(e.dlambda_nonvanishing for e in measures))
    for eps in family.epsilons:
        sig_eps = by_eps[eps].measure
        try:
            ue, _ = solve_singular(mesh, family.coefficient(mesh, eps), sig_eps, lam, opts)
        except SolverError as exc:
            raise SolverError(f"solve failed at epsilon={eps}: {exc}", exc.diagnostics) from exc
        diff = ue - u0
        dv = diff.interior_values
        row = {"epsilon": eps, "l2_err": l2_norm(diff)}
        Kd = K1.matrix @ dv
        for j, phi in enumerate(tests[:4], start=1):
            row[f"pair_{j}"] = float(phi.interior_values @ Kd)
        r = _rhs_vector(mesh, ue, sig_eps, lam) - r0
        w = solve_spd(K1, r)
        row["hminus1_rhs"] = float(np.sqrt(max(r @ w, 0.0)))
        row["d_lambda"] = d_lambda(sigma, sig_eps, lam, opts)
        table.rows.append(row)
    return table


def fit_effective_coefficient(mesh: Mesh, profile: Callable, eps: float,
                              sigma: DiscreteMeasure) -> float:
    """Constant c minimizing ||U / c - u_eps||_L2 for the linear problem.

    U is the A = I solution and u_eps the solution with a(x / eps); both use
    the consistent mass matrix, so c = (U M U) / (U M u_eps).
    """
    if mesh.dim != 1:
        raise ValueError("the fitting oracle is one-dimensional")
    ue = linear_solution(mesh, layered_coefficient(profile, eps, 0, mesh), sigma).interior_values
    U = green_potential(mesh, sigma).interior_values
    M = assemble_mass(mesh)
    return float((U @ (M @ U)) / (U @ (M @ ue)))
