"""Regularized continuation solver for -div(A grad u) = sigma / u^lam."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .grid import FeFunction, Mesh, h1_seminorm
from .measures import DiscreteMeasure
from .operators import CoefficientField, assemble_stiffness


@dataclass(frozen=True)
class SolverOptions:
    """Continuation and Newton parameters.

    ``newton_tol`` bounds the residual sup-norm relative to
    ``max(1, |N(u)|_inf)`` and also the sup-norm change between stages.
    """

    eps0: float = 1.0
    decay: float = 0.25
    eps_min: float = 1e-12
    newton_tol: float = 1e-11
    max_newton: int = 50
    u_min: float = 1e-300
    max_halvings: int = 30
    polish: bool = True
    record_stages: bool = False

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if not 0.0 < self.eps_min < self.eps0:
            raise ValueError("need 0 < eps_min < eps0")
        if self.newton_tol <= 0.0 or self.max_newton < 1:
            raise ValueError("invalid Newton parameters")


@dataclass
class SolveReport:
    converged: bool
    stages: list = field(default_factory=list)
    h1_seminorm: float = float("nan")
    energy_J: float | None = None
    bounds: dict | None = None
    stage_solutions: list | None = None

    def to_dict(self):
        d = asdict(self)
        d.pop("stage_solutions")
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


class _System:
    """Residual and Jacobian of K u - N_eps(u) on interior unknowns."""

    def __init__(self, mesh: Mesh, K: sp.csr_matrix, sigma: DiscreteMeasure, lam: float):
        self.K = K
        self.lam = lam
        self.m = mesh.num_interior
        c = sigma.charges()
        keep = c.weights > 0.0
        self.w = c.weights[keep]
        self.basis = c.basis[keep]
        self.idx = mesh.interior_index[c.nodes[keep]]  # -1 marks boundary vertices
        self.zero_slot = np.where(self.idx < 0, self.m, self.idx)

    def values(self, u):
        ext = np.append(u, 0.0)
        return np.einsum("qk,qk->q", self.basis, ext[self.zero_slot])

    def _pair(self, g):
        r = np.bincount(self.zero_slot.ravel(), (self.basis * g[:, None]).ravel(),
                        minlength=self.m + 1)
        return r[: self.m]

    def source(self, uq, eps):
        return self._pair(self.w * (uq + eps) ** -self.lam)

    def jacobian(self, uq, eps):
        g = self.lam * self.w * (uq + eps) ** (-self.lam - 1.0)
        rows, cols, vals = [], [], []
        k = self.basis.shape[1]
        for a in range(k):
            for b in range(k):
                ok = (self.idx[:, a] >= 0) & (self.idx[:, b] >= 0)
                rows.append(self.idx[ok, a])
                cols.append(self.idx[ok, b])
                vals.append(g[ok] * self.basis[ok, a] * self.basis[ok, b])
        M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.m, self.m))
        return (self.K + M).tocsc()


def _newton(system: _System, u, eps, opts: SolverOptions):
    """Damped Newton for one regularization level; returns (u, steps, residual)."""
    uq = system.values(u)
    N = system.source(uq, eps)
    R = system.K @ u - N
    for step in range(opts.max_newton + 1):
        rnorm = np.abs(R).max()
        if rnorm <= opts.newton_tol * max(1.0, np.abs(N).max()):
            return u, step, float(rnorm)
        if step == opts.max_newton:
            break
        du = spla.spsolve(system.jacobian(uq, eps), -R)
        t = 1.0
        for _ in range(opts.max_halvings + 1):
            trial = u + t * du
            tq = system.values(trial)
            if np.all(tq + eps > 0.0):
                tN = system.source(tq, eps)
                tR = system.K @ trial - tN
                if np.abs(tR).max() < rnorm:
                    break
            t *= 0.5
        else:
            # no descent left: accept if Newton has stalled at rounding level
            if np.abs(du).max() <= 1e-13 * np.abs(u).max():
                return u, step, float(rnorm)
            break
        u, uq, N, R = trial, tq, tN, tR
    raise SolverError("stage failure", {"epsilon": eps, "newton_steps": step,
                                        "residual": float(np.abs(R).max())})


def _check_inputs(sigma: DiscreteMeasure, lam: float):
    if lam > 1.0:
        raise ValueError("out of scope regime")
    if lam < 0.0:
        raise ValueError("exponent out of range")
    if sigma.is_zero:
        raise ValueError("existence requires σ ≠ 0")
    if np.any(sigma.interior_load < 0.0):
        raise ValueError("signed density rejected")


def solve_singular(mesh: Mesh, A: CoefficientField | None, sigma: DiscreteMeasure,
                   lam: float, opts: SolverOptions | None = None):
    """Solve the singular problem by continuation in the regularization eps.

    Each stage solves K u = N_eps(u) with N_eps(u)_i = int phi_i (u + eps)^-lam
    dsigma by damped Newton, warm-started from the previous stage.  Stages
    stop once consecutive solutions agree to ``newton_tol`` in sup-norm or
    ``eps_min`` is reached; a final eps = 0 stage then removes the
    regularization bias.

    Returns
    -------
    (FeFunction, SolveReport)
    """
    from .potential import linear_solution

    opts = SolverOptions() if opts is None else opts
    if sigma.mesh != mesh:
        raise ValueError("measure lives on a different mesh")
    _check_inputs(sigma, lam)
    Kop = assemble_stiffness(mesh, A)
    U = linear_solution(mesh, A, sigma)
    report = SolveReport(converged=False)
    if opts.record_stages:
        report.stage_solutions = []
    if lam == 0.0:
        u = U.interior_values
        report.stages.append({"epsilon": 0.0, "newton_steps": 0, "residual": float(
            np.abs(Kop.matrix @ u - sigma.interior_load).max())})
    else:
        system = _System(mesh, Kop.matrix, sigma, lam)
        u = np.maximum(U.interior_values, opts.eps0)
        eps, prev = opts.eps0, None
        while True:
            u, steps, res = _newton(system, u, eps, opts)
            report.stages.append({"epsilon": eps, "newton_steps": steps, "residual": res})
            if opts.record_stages:
                report.stage_solutions.append(u.copy())
            if prev is not None and np.abs(u - prev).max() < opts.newton_tol:
                break
            if eps * opts.decay < opts.eps_min:
                break
            prev = u.copy()
            eps *= opts.decay
        if opts.polish:
            u, steps, res = _newton(system, u, 0.0, opts)
            report.stages.append({"epsilon": 0.0, "newton_steps": steps, "residual": res})
    if np.any(u <= 0.0):
        raise SolverError("stage failure", {"reason": "nonpositive interior value",
                                            "min": float(u.min())})
    sol = FeFunction.from_interior(mesh, u)
    report.converged = True
    report.h1_seminorm = h1_seminorm(sol)
    if 0.0 < lam < 1.0 and (A is None or A.is_symmetric):
        report.energy_J = energy_J(sol, A, sigma, lam)
    return sol, report


def energy_J(u: FeFunction, A: CoefficientField | None, sigma: DiscreteMeasure,
             lam: float) -> float:
    """J(u) = 1/2 int A grad u . grad u - (1 - lam)^-1 int u_+^{1-lam} dsigma."""
    if lam == 1.0:
        raise ValueError("functional undefined at λ=1")
    if not 0.0 < lam < 1.0:
        raise ValueError("exponent out of range")
    if A is not None and not A.is_symmetric:
        raise ValueError("variational form requires symmetry")
    K = assemble_stiffness(u.mesh, A)
    v = u.interior_values
    c = sigma.charges()
    uq = np.maximum(c.interpolate(u.values), 0.0)
    return 0.5 * K.energy(v) - float(c.weights @ uq ** (1.0 - lam)) / (1.0 - lam)


@dataclass
class BoundReport:
    """Outcome of the energy and pointwise bound checks.

    ``energy_lower``/``energy_upper`` hold the measured ratios
    |u|_H1 / bound; ``pointwise`` is max_i u_i / bound_i or None when the
    measure reaches the boundary layer.
    """

    energy_lower: float
    energy_upper: float
    pointwise: float | None
    slack: float
    pointwise_slack: float

    @property
    def energy_ok(self):
        return (self.energy_lower >= 1.0 - self.slack) and (self.energy_upper <= 1.0 + self.slack)

    @property
    def pointwise_ok(self):
        return self.pointwise is None or self.pointwise <= 1.0 + self.pointwise_slack

    @property
    def passed(self):
        return self.energy_ok and self.pointwise_ok

    def to_dict(self):
        return {
            "energy_lower_ratio": self.energy_lower,
            "energy_upper_ratio": self.energy_upper,
            "energy_ok": self.energy_ok,
            "pointwise_ratio": self.pointwise,
            "pointwise_ok": self.pointwise_ok,
            "passed": self.passed,
        }


def pointwise_ratio(u: FeFunction, A: CoefficientField | None, sigma: DiscreteMeasure,
                    lam: float) -> float:
    """max_i u_i / ((1 + lam) U_i)^{1/(1+lam)} with U the linear solution."""
    from .potential import linear_solution

    p = 1.0 / (1.0 + lam)
    U = linear_solution(u.mesh, A, sigma).interior_values
    bound = ((1.0 + lam) * np.maximum(U, 0.0)) ** p
    vals = u.interior_values
    pos = bound > 0.0
    if np.any(vals[~pos] > 0.0):
        return float("inf")
    return float(np.max(vals[pos] / bound[pos]))


def verify_bounds(u: FeFunction, A: CoefficientField | None, sigma: DiscreteMeasure,
                  lam: float, alpha: float, beta: float, norm: float | None = None,
                  slack: float = 0.02, pointwise_slack: float = 0.01) -> BoundReport:
    """Check the two-sided energy bound and the pointwise bound on u.

    The energy bound reads
    beta^{-1/(1+lam)} T^{1/(1+lam)} <= |u|_H1 <= alpha^{-1/(1+lam)} T^{1/(1+lam)}
    with T the trace norm of sigma (computed here unless ``norm`` is given).
    The pointwise bound u <= ((1+lam) U)^{1/(1+lam)}, U the linear solution,
    is checked only when sigma stays at least one cell away from the boundary.
    """
    from .potential import trace_norm

    T = trace_norm(sigma, lam) if norm is None else norm
    p = 1.0 / (1.0 + lam)
    g = h1_seminorm(u)
    lower = g / (beta ** -p * T ** p)
    upper = g / (alpha ** -p * T ** p)
    pointwise = None
    if sigma.support_distance() >= u.mesh.cell_width:
        pointwise = pointwise_ratio(u, A, sigma, lam)
    return BoundReport(float(lower), float(upper), pointwise, slack, pointwise_slack)
