"""Invariant and acceptance suites run by ``singularlab verify``.

Every check is deterministic given the seed and reports numbers with fixed
formatting, so two runs print byte-identical lines.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import shipped_configs
from .grid import FeFunction, build_mesh, h1_seminorm, l2_norm, p1_interpolate
from .homogenization import (OscillatingFamily, fit_effective_coefficient,
                             perturbed_measure_family, run_h_convergence)
from .measures import (atom_measure, boundary_power_density, density_measure,
                       truncate_to_core)
from .operators import CoefficientField, assemble_stiffness
from .potential import (cov_energy, d_lambda, direct_trace_sup, green_potential,
                        h_minus1_norm, trace_norm)
from .singular import SolverOptions, energy_J, pointwise_ratio, solve_singular


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail}" if self.detail else f"{status} {self.name}"


def _g(x):
    return f"{x:.6g}"


def _orders(hs, errs):
    hs, errs = np.asarray(hs), np.asarray(errs)
    return np.log(errs[:-1] / errs[1:]) / np.log(hs[:-1] / hs[1:])


def _ones(*coords):
    return np.ones_like(coords[0])


def random_piecewise_density(mesh, rng, pieces=8, low=0.0, high=2.0):
    """Measure with a random density, constant on ``pieces`` equal intervals."""
    vals = rng.uniform(low, high, pieces)
    vals[rng.integers(pieces)] = high  # never the zero measure

    def f(x):
        return vals[np.minimum((x * pieces).astype(int), pieces - 1)]

    return density_measure(mesh, f), vals


def random_scalar_field(mesh, rng, alpha, pieces=8):
    """Piecewise constant a(x) I with min a = alpha and max a <= 2 alpha."""
    vals = alpha * rng.uniform(1.0, 2.0, pieces)
    vals[rng.integers(pieces)] = alpha
    x = mesh.midpoints[:, 0]
    return CoefficientField.scalar(mesh, vals[np.minimum((x * pieces).astype(int), pieces - 1)])


def _manufactured(lam, density, exact, ns):
    errs, reports, sols = [], [], []
    for n in ns:
        mesh = build_mesh(1, n)
        sigma = density_measure(mesh, density)
        u, rep = solve_singular(mesh, None, sigma, lam)
        errs.append(l2_norm(u - p1_interpolate(exact, mesh, conforming=True)))
        reports.append(rep)
        sols.append((u, sigma))
    return np.array(errs), reports, sols


# acceptance criteria -------------------------------------------------------

def criterion_1(seed=42):
    start = time.perf_counter()
    ns = [64, 128, 256, 512]
    errs, reps, _ = _manufactured(1.0, lambda x: np.pi**2 * np.sin(np.pi * x) ** 2,
                                  lambda x: np.sin(np.pi * x), ns)
    order = _orders([1 / n for n in ns], errs).min()
    h1err = abs(reps[-1].h1_seminorm - np.pi / np.sqrt(2))
    fast = time.perf_counter() - start < 10.0
    ok = errs[-1] <= 1e-4 and order >= 1.9 and h1err <= 1e-3 and fast
    return CheckResult("criterion_1_manufactured_lambda_1", ok,
                       f"l2_err={_g(errs[-1])} min_order={order:.4f} "
                       f"h1_err={_g(h1err)} under_10s={fast}")


def criterion_2(seed=42):
    ns = [64, 128, 256, 512]
    errs, reps, sols = _manufactured(0.5, lambda x: 2.0 * np.sqrt(x * (1.0 - x)),
                                     lambda x: x * (1.0 - x), ns)
    order = _orders([1 / n for n in ns], errs).min()
    u, sigma = sols[-1]
    jerr = abs(energy_J(u, None, sigma, 0.5) + 0.5)
    ok = order >= 1.9 and jerr <= 1e-4
    return CheckResult("criterion_2_manufactured_lambda_half", ok,
                       f"l2_err={_g(errs[-1])} min_order={order:.4f} J_err={_g(jerr)}")


LAMBDAS = (0.25, 0.5, 0.75, 1.0)


def _bracket_measures(mesh):
    return {
        "dx": density_measure(mesh, _ones),
        "dist^-1/2": boundary_power_density(mesh, 0.5),
        "atom(0.3)": atom_measure(mesh, 0.3),
    }


def criterion_3(seed=42):
    mesh = build_mesh(1, 512)
    worst, parts = 0.0, []
    for name, sigma in _bracket_measures(mesh).items():
        for lam in LAMBDAS:
            t = trace_norm(sigma, lam)
            d = direct_trace_sup(sigma, lam)
            worst = max(worst, abs(t - d) / d)
    fine = build_mesh(1, 1024)
    atom = trace_norm(atom_measure(fine, 0.5), 0.5)
    atom_err = abs(atom - 0.707107)
    ok = worst <= 0.01 and atom_err <= 1e-3
    parts.append(f"max_rel_gap={_g(worst)}")
    parts.append(f"atom_half={atom:.6f}")
    return CheckResult("criterion_3_energy_equality", ok, " ".join(parts))


def criterion_4(seed=42):
    mesh = build_mesh(1, 512)
    low, high = np.inf, 0.0  # min cov / T and max cov / (upper T)
    for sigma in _bracket_measures(mesh).values():
        for lam in LAMBDAS:
            t = trace_norm(sigma, lam)
            c = cov_energy(sigma, lam)
            upper = (1.0 - lam**2) ** (-(1.0 - lam) / 2.0) if lam < 1.0 else 1.0
            low = min(low, c / t)
            high = max(high, c / (upper * t))
    ok = low >= 0.98 and high <= 1.02
    return CheckResult("criterion_4_cov_bracket", bool(ok),
                       f"min_cov_over_norm={low:.6f} max_cov_over_upper={high:.6f}")


def criterion_5(seed=42, cases=50, n=128):
    rng = np.random.default_rng(seed)
    mesh = build_mesh(1, n)
    worst = 0.0
    for _ in range(cases):
        lam = rng.uniform(0.1, 1.0)
        alpha = rng.uniform(0.5, 2.0)
        A = random_scalar_field(mesh, rng, alpha)
        sigma, _ = random_piecewise_density(mesh, rng)
        nu, _ = random_piecewise_density(mesh, rng)
        u, _ = solve_singular(mesh, A, sigma, lam)
        v, _ = solve_singular(mesh, A, nu, lam)
        bound = alpha ** (-1 / (1 + lam)) * d_lambda(sigma, nu, lam) ** (1 / (1 + lam))
        worst = max(worst, h1_seminorm(u - v) / bound)
    # analytic sub-case: sigma = dx, nu = (1 + t) dx, A = I
    sub_ok, sub_gap = True, 0.0
    sigma = density_measure(mesh, _ones)
    for lam in (0.5, 1.0):
        u, rep = solve_singular(mesh, None, sigma, lam)
        for t in (0.1, 1.0):
            v, _ = solve_singular(mesh, None, (1.0 + t) * sigma, lam)
            lhs = h1_seminorm(v - u)
            predicted = ((1.0 + t) ** (1 / (1 + lam)) - 1.0) * rep.h1_seminorm
            bound = d_lambda(sigma, (1.0 + t) * sigma, lam) ** (1 / (1 + lam))
            sub_gap = max(sub_gap, abs(lhs - predicted) / predicted)
            sub_ok &= lhs <= 1.02 * bound
    ok = worst <= 1.02 and sub_ok and sub_gap <= 1e-8
    return CheckResult("criterion_5_stability", bool(ok),
                       f"max_ratio={worst:.6f} analytic_gap={_g(sub_gap)} analytic_ok={sub_ok}")


def criterion_6(seed=42):
    mesh = build_mesh(1, 256)
    cases = {
        "dx": density_measure(mesh, _ones),
        "dist^-1/2": boundary_power_density(mesh, 0.5),
        "atom(0.3)": atom_measure(mesh, 0.3),
    }
    worst = 0.0
    for sigma in cases.values():
        for lam in (0.5, 1.0):
            u, _ = solve_singular(mesh, None, sigma, lam)
            for t in (0.1, 3.0, 10.0):
                ut, _ = solve_singular(mesh, None, t * sigma, lam)
                gap = np.abs(ut.values - t ** (1 / (1 + lam)) * u.values).max()
                worst = max(worst, gap)
    return CheckResult("criterion_6_scaling", worst <= 1e-8, f"max_gap={_g(worst)}")


def criterion_7(seed=42, pairs=20, n=128):
    rng = np.random.default_rng(seed + 7)
    mesh = build_mesh(1, n)
    worst = -np.inf
    for _ in range(pairs):
        lam = rng.uniform(0.1, 1.0)
        A = random_scalar_field(mesh, rng, rng.uniform(0.5, 2.0))
        sigma, vals = random_piecewise_density(mesh, rng)
        extra = rng.uniform(0.0, 1.0, vals.size)
        bigger = vals + extra
        nu = density_measure(mesh, lambda x: bigger[np.minimum((x * 8).astype(int), 7)])
        u, _ = solve_singular(mesh, A, sigma, lam)
        v, _ = solve_singular(mesh, A, nu, lam)
        worst = max(worst, float(np.max(u.values - v.values)))
    comparison_ok = worst <= 1e-9
    point_worst = 0.0
    for _ in range(pairs):
        lam = rng.uniform(0.1, 1.0)
        A = random_scalar_field(mesh, rng, rng.uniform(0.5, 2.0))
        sigma = truncate_to_core(random_piecewise_density(mesh, rng)[0], 0.25)
        u, _ = solve_singular(mesh, A, sigma, lam)
        point_worst = max(point_worst, pointwise_ratio(u, A, sigma, lam))
    ok = comparison_ok and point_worst <= 1.01
    return CheckResult("criterion_7_comparison_and_pointwise", bool(ok),
                       f"max(u-v)={_g(worst)} max_pointwise_ratio={point_worst:.6f}")


def criterion_8(seed=42, count=20, n=256):
    rng = np.random.default_rng(seed + 8)
    mesh = build_mesh(1, n)
    interp_worst = 0.0
    for _ in range(count):
        lam = rng.uniform(0.1, 0.9)
        sigma, _ = random_piecewise_density(mesh, rng)
        bound = sigma.mass ** lam * h_minus1_norm(sigma) ** (1.0 - lam)
        interp_worst = max(interp_worst, trace_norm(sigma, lam) / bound)
    picone_worst = 0.0
    x = mesh.vertices[:, 0]
    for _ in range(count):
        sigma = truncate_to_core(random_piecewise_density(mesh, rng)[0], 0.25)
        U = green_potential(mesh, sigma).values
        c = sigma.charges()
        on_support = np.unique(c.nodes[c.weights > 0.0])
        coef = rng.normal(size=6) / np.arange(1, 7)
        phi = FeFunction(mesh, sum(a * np.sin((j + 1) * np.pi * x) for j, a in enumerate(coef)),
                         conforming=False)
        phi = FeFunction.from_interior(mesh, phi.interior_values)
        lhs = float(c.weights @ c.interpolate(phi.values) ** 2)
        rhs = U[on_support].max() * h1_seminorm(phi) ** 2
        picone_worst = max(picone_worst, lhs / rhs)
    ok = interp_worst <= 1.01 and picone_worst <= 1.0
    return CheckResult("criterion_8_interpolation_and_picone", bool(ok),
                       f"max_interp_ratio={interp_worst:.6f} max_picone_ratio={picone_worst:.6f}")


def laminate_profile(y):
    return 2.0 + np.sin(2.0 * np.pi * y)


EPSILONS = (1 / 8, 1 / 16, 1 / 32, 1 / 64)


def laminate_table(n=8192, lam=0.5, kind="decaying"):
    mesh = build_mesh(1, n)
    sigma = density_measure(mesh, _ones)
    family = OscillatingFamily(laminate_profile, EPSILONS)
    measures = perturbed_measure_family(sigma, kind, (0.0,) + EPSILONS)
    return run_h_convergence(family, measures, lam, mesh), mesh, sigma


def criterion_9(seed=42):
    start = time.perf_counter()
    table, mesh, sigma = laminate_table()
    fit = fit_effective_coefficient(mesh, laminate_profile, 1 / 64, sigma)
    fit_err = abs(fit - np.sqrt(3.0))
    l2 = table.column("l2_err")
    ratios = l2[:-1] / l2[1:]
    rhs = table.column("hminus1_rhs")
    pair_drop = min(abs(table.column(f"pair_{j}")[0] / table.column(f"pair_{j}")[-1])
                    for j in range(1, 5))
    fast = time.perf_counter() - start < 180.0
    ok = (fit_err <= 1e-3 and np.all((ratios >= 1.5) & (ratios <= 2.5))
          and np.all(np.diff(rhs) < 0) and pair_drop >= 4.0 and fast)
    return CheckResult("criterion_9_homogenization", bool(ok),
                       f"fit_err={_g(fit_err)} l2_ratios={','.join(f'{r:.3f}' for r in ratios)} "
                       f"rhs_monotone={bool(np.all(np.diff(rhs) < 0))} "
                       f"min_pair_drop={pair_drop:.3f} under_3min={fast}")


THRESHOLD_CASES = ((1.0, 0.8, "stable"), (1.0, 1.2, "growing"),
                   (0.5, 1.1, "stable"), (0.5, 1.4, "growing"))


def threshold_series(lam, s, ks=range(6, 13)):
    return np.array([trace_norm(boundary_power_density(build_mesh(1, 2**k), s), lam)
                     for k in ks])


def criterion_10(seed=42):
    ok, parts = True, []
    for lam, s, expect in THRESHOLD_CASES:
        series = threshold_series(lam, s)
        change = series[1:] / series[:-1] - 1.0
        if expect == "stable":
            good = bool(np.all(np.abs(change[-2:]) < 0.02))
        else:
            good = bool(np.all(change >= 0.10))
        ok &= good
        parts.append(f"lam={lam:g},s={s:g}:{expect}={good}(last={change[-1]:.4f})")
    return CheckResult("criterion_10_threshold", bool(ok), " ".join(parts))


FULL = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
        criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


# basic suite -------------------------------------------------------------

def _basic_checks(seed):
    out = []
    mesh = build_mesh(1, 4)
    K = assemble_stiffness(mesh).toarray()
    out.append(CheckResult("stiffness_1d_stencil", bool(np.allclose(K[1], [-4, 8, -4]))))
    m2 = build_mesh(2, 4)
    K2 = assemble_stiffness(m2).toarray()
    out.append(CheckResult("stiffness_2d_five_point",
                           bool(np.allclose(K2[4], [0, -1, 0, -1, 4, -1, 0, -1, 0]))))
    mesh = build_mesh(1, 256)
    h = h_minus1_norm(density_measure(mesh, _ones))
    out.append(CheckResult("hminus1_dx", abs(h - np.sqrt(1 / 12)) < 1e-5, f"value={h:.6f}"))
    a = trace_norm(atom_measure(mesh, 0.5), 0.5)
    out.append(CheckResult("trace_norm_atom", abs(a - 0.707107) < 1e-3, f"value={a:.6f}"))
    rng = np.random.default_rng(seed)
    sigma, _ = random_piecewise_density(mesh, rng)
    lam = 0.5
    u, _ = solve_singular(mesh, None, sigma, lam)
    ut, _ = solve_singular(mesh, None, 3.0 * sigma, lam)
    gap = np.abs(ut.values - 3.0 ** (1 / 1.5) * u.values).max()
    out.append(CheckResult("scaling_law", gap <= 1e-8, f"max_gap={_g(gap)}"))
    t, c = trace_norm(sigma, lam), cov_energy(sigma, lam)
    upper = (1 - lam**2) ** (-(1 - lam) / 2)
    out.append(CheckResult("cov_bracket", 0.98 * t <= c <= 1.02 * upper * t,
                           f"ratio={c / t:.6f}"))
    slow, _ = solve_singular(mesh, None, sigma, lam, SolverOptions(decay=0.5))
    gap = np.abs(slow.values - u.values).max()
    out.append(CheckResult("schedule_independence", gap <= 1e-9, f"max_gap={_g(gap)}"))
    return out


def _config_checks():
    from .cli import run_config_smoke

    return [run_config_smoke(p) for p in shipped_configs()]


def run_suite(name: str, seed: int = 42, emit: Callable[[str], None] | None = None):
    """Run a suite, emitting one line per check; returns the list of results."""
    if name not in ("basic", "full"):
        raise ValueError(f"unknown suite {name!r}")
    results = []

    def record(res):
        results.append(res)
        if emit is not None:
            emit(res.line())

    if name == "basic":
        for res in _basic_checks(seed):
            record(res)
        for res in _config_checks():
            record(res)
    else:
        for crit in FULL:
            record(crit(seed))
    return results
