"""Command-line front end: ``singularlab {solve,energy,distance,homogenize,verify}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import ConfigError, SolverError
from .grid import field_csv

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3


def _json_value(x):
    if isinstance(x, dict):
        return {k: _json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_json_value(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def solve_config(cfg: ExperimentConfig):
    """Solve the configured problem; returns (u, report dict)."""
    from .singular import solve_singular, verify_bounds

    mesh = cfg.mesh()
    A = cfg.coefficient(mesh)
    sigma = cfg.measure(mesh)
    try:
        u, rep = solve_singular(mesh, A, sigma, cfg.lam, cfg.options())
    except SolverError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rep.bounds = verify_bounds(u, A, sigma, cfg.lam, A.alpha, A.beta).to_dict()
    return u, rep.to_dict()


def energy_config(cfg: ExperimentConfig) -> dict:
    from .potential import cov_energy, h_minus1_norm, trace_norm

    mesh = cfg.mesh()
    sigma = cfg.measure(mesh)
    lam = cfg.lam
    return {
        "lambda": lam,
        "trace_norm": trace_norm(sigma, lam, cfg.options()),
        "cov_energy": cov_energy(sigma, lam),
        "h_minus1": h_minus1_norm(sigma),
        "mass": sigma.mass,
    }


def distance_configs(cfg_a: ExperimentConfig, cfg_b: ExperimentConfig) -> dict:
    from .potential import d_lambda

    if (cfg_a.dim, cfg_a.cells) != (cfg_b.dim, cfg_b.cells):
        raise ConfigError("incompatible measures: configs use different meshes")
    if cfg_a.lam != cfg_b.lam:
        raise ConfigError("configs disagree on problem.lambda")
    mesh = cfg_a.mesh()
    try:
        return {"d_lambda": d_lambda(cfg_a.measure(mesh), cfg_b.measure(mesh), cfg_a.lam,
                                     cfg_a.options())}
    except SolverError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def homogenize_config(cfg: ExperimentConfig):
    from .config import Expression
    from .homogenization import OscillatingFamily, perturbed_measure_family, run_h_convergence

    block = cfg.raw.get("coefficient", {})
    if block.get("kind") != "layered":
        raise ConfigError("homogenize needs a layered coefficient")
    exp = cfg.experiment
    eps = exp.get("epsilons")
    if not eps:
        raise ConfigError("missing experiment.epsilons")
    mesh = cfg.mesh()
    try:
        family = OscillatingFamily(Expression(block["profile"], ("y",)), eps,
                                   axis=block.get("axis", 0))
        sigma = cfg.measure(mesh)
        measures = perturbed_measure_family(sigma, exp.get("family", "decaying"),
                                            [0.0] + list(family.epsilons))
        return run_h_convergence(family, measures, cfg.lam, mesh, opts=cfg.options())
    except (SolverError, ConfigError):
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def run_config_smoke(path):
    """Parse a shipped config and run the command it is meant for."""
    from .suites import CheckResult

    name = f"config_{Path(path).stem}"
    try:
        cfg = load_config(path)
        again = ExperimentConfig.loads(cfg.dumps())
        if again.raw != cfg.raw:
            return CheckResult(name, False, "round trip changed the config")
        if "epsilons" in cfg.experiment:
            table = homogenize_config(cfg)
            detail = f"rows={len(table.rows)}"
        else:
            _, rep = solve_config(cfg)
            norm = energy_config(cfg)["trace_norm"]
            detail = f"h1_seminorm={rep['h1_seminorm']:.6g} trace_norm={norm:.6g}"
        return CheckResult(name, True, detail)
    except (ConfigError, SolverError, ValueError) as exc:
        return CheckResult(name, False, str(exc))


# commands -----------------------------------------------------------------

def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    u, report = solve_config(cfg)
    out = Path(args.out)
    _write(out / "solution.csv", field_csv(u))
    _write(out / "report.json", dumps(report))
    return EXIT_OK if report["converged"] else EXIT_SOLVER


def cmd_energy(args) -> int:
    sys.stdout.write(dumps(energy_config(load_config(args.config))))
    return EXIT_OK


def cmd_distance(args) -> int:
    result = distance_configs(load_config(args.config_a), load_config(args.config_b))
    sys.stdout.write(dumps(result))
    return EXIT_OK


def cmd_homogenize(args) -> int:
    table = homogenize_config(load_config(args.config))
    out = Path(args.out)
    _write(out / "convergence.csv", table.to_csv())
    _write(out / "summary.json", dumps(table.summary()))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .suites import run_suite

    def emit(line):
        print(line, flush=True)

    results = run_suite(args.suite, args.seed, emit)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED {len(failed)}/{len(results)}: {', '.join(failed)}")
        return EXIT_VERIFY
    print(f"ALL PASSED {len(results)}/{len(results)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="singularlab",
        description="Finite element experiments for -div(A grad u) = sigma / u^lambda.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one configured problem")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("energy", help="print the energy norms of the configured measure")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("distance", help="print d_lambda between two configured measures")
    p.add_argument("--config-a", required=True)
    p.add_argument("--config-b", required=True)
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("homogenize", help="run an H-convergence experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_homogenize)

    p = sub.add_parser("verify", help="run an invariant suite")
    p.add_argument("--suite", choices=("basic", "full"), default="basic")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
