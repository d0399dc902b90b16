"""Experiment configuration: TOML parsing, validation and object builders."""

from __future__ import annotations

import ast
import copy
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .grid import Mesh, build_mesh
from .measures import (DiscreteMeasure, add, atom_measure, boundary_power_density,
                       density_measure)
from .operators import CoefficientField
from .quadrature import graded_rule
from .singular import SolverOptions

# expressions -------------------------------------------------------------

_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}


def _dist_boundary(*coords):
    d = np.minimum(coords[0], 1.0 - coords[0])
    for c in coords[1:]:
        d = np.minimum(d, np.minimum(c, 1.0 - c))
    return d


_FUNCS = {"sin": np.sin, "cos": np.cos, "sqrt": np.sqrt, "dist_boundary": _dist_boundary}
_CONSTS = {"pi": math.pi}


class Expression:
    """Arithmetic expression in + - * / ^, sin, cos, sqrt, dist_boundary and pi.

    >>> Expression("2*x^2", ("x",))(np.array([3.0]))
    array([18.])
    """

    def __init__(self, source: str, variables=("x",)):
        self.source = source
        self.variables = tuple(variables)
        try:
            tree = ast.parse(source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {source!r}") from exc
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            self._check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        elif isinstance(node, ast.Name) and (node.id in self.variables or node.id in _CONSTS):
            pass
        elif (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
              and node.func.id in _FUNCS and not node.keywords):
            for a in node.args:
                self._check(a)
        else:
            raise ConfigError(f"unsupported syntax in expression {self.source!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTS[node.id]
        return _FUNCS[node.func.id](*(self._eval(a, env) for a in node.args))

    def __call__(self, *coords):
        env = {v: np.asarray(c, dtype=float) for v, c in zip(self.variables, coords)}
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, env)
        shape = np.shape(coords[0]) if coords else ()
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()


# config ------------------------------------------------------------------

_COEFF_KINDS = ("constant", "layered", "expression")
_MEASURE_KINDS = ("density", "boundary_power", "atom", "sum")
_SOLVER_KEYS = {"eps0", "decay", "eps_min", "newton_tol", "max_newton", "max_halvings"}


def _require(block, key, name):
    if key not in block:
        raise ConfigError(f"missing key {name}.{key}")
    return block[key]


def _number(value, name, lo=-math.inf, hi=math.inf):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number")
    if not lo <= value <= hi:
        raise ConfigError(f"{name}={value} outside [{lo}, {hi}]")
    return value


def _validate_measure(block, dim, name="measure"):
    kind = _require(block, "kind", name)
    if kind not in _MEASURE_KINDS:
        raise ConfigError(f"unknown {name}.kind {kind!r}")
    if kind == "density":
        Expression(_require(block, "expression", name), ("x", "y")[:dim])
        _number(block.get("quad_order", 5), f"{name}.quad_order", 1, 21)
    elif kind == "boundary_power":
        _number(_require(block, "s", name), f"{name}.s")
    elif kind == "atom":
        if dim != 1:
            raise ConfigError("atoms charge capacity-null sets")
        _number(_require(block, "position", name), f"{name}.position", 0.0, 1.0)
        _number(block.get("mass", 1.0), f"{name}.mass", 0.0)
    else:
        terms = _require(block, "terms", name)
        if not isinstance(terms, list) or not terms:
            raise ConfigError(f"{name}.terms must be a non-empty list")
        for i, t in enumerate(terms):
            if t.get("kind") == "sum":
                raise ConfigError("nested sums are not supported")
            _validate_measure(t, dim, f"{name}.terms[{i}]")


@dataclass
class ExperimentConfig:
    """Parsed experiment file; ``raw`` is the validated TOML mapping."""

    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = copy.deepcopy(data)
        dom = _require(data, "domain", "config")
        dim = _number(_require(dom, "dim", "domain"), "domain.dim", 1, 2)
        if dim not in (1, 2):
            raise ConfigError("domain.dim must be 1 or 2")
        _number(_require(dom, "cells", "domain"), "domain.cells", 2)
        coeff = data.setdefault("coefficient", {"kind": "constant", "value": 1.0})
        kind = _require(coeff, "kind", "coefficient")
        if kind not in _COEFF_KINDS:
            raise ConfigError(f"unknown coefficient.kind {kind!r}")
        if kind == "layered":
            Expression(_require(coeff, "profile", "coefficient"), ("y",))
            _number(_require(coeff, "epsilon", "coefficient"), "coefficient.epsilon", 0.0, 1.0)
            _number(coeff.get("axis", 0), "coefficient.axis", 0, dim - 1)
        elif kind == "expression":
            Expression(_require(coeff, "expression", "coefficient"), ("x", "y")[:dim])
        if "measure" in data:
            _validate_measure(data["measure"], dim)
        prob = data.setdefault("problem", {})
        lam = _number(prob.setdefault("lambda", 1.0), "problem.lambda")
        if lam > 1.0:
            raise ConfigError("out of scope regime")
        if lam < 0.0:
            raise ConfigError("exponent out of range")
        unknown = set(data.get("solver", {})) - _SOLVER_KEYS
        if unknown:
            raise ConfigError(f"unknown solver keys {sorted(unknown)}")
        exp = data.get("experiment", {})
        seed = exp.get("seed", 42)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError("experiment.seed must be a 64-bit unsigned integer")
        if exp.get("family", "decaying") not in ("decaying", "oscillating"):
            raise ConfigError(f"unknown experiment.family {exp.get('family')!r}")
        for e in exp.get("epsilons", []):
            _number(e, "experiment.epsilons", 0.0, 1.0)
        return cls(data)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(tomllib.loads(text))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc

    def dumps(self) -> str:
        return tomli_w.dumps(self.raw)

    # accessors

    @property
    def dim(self) -> int:
        return int(self.raw["domain"]["dim"])

    @property
    def cells(self) -> int:
        return int(self.raw["domain"]["cells"])

    @property
    def lam(self) -> float:
        return float(self.raw["problem"]["lambda"])

    @property
    def seed(self) -> int:
        return int(self.raw.get("experiment", {}).get("seed", 42))

    @property
    def experiment(self) -> dict:
        return self.raw.get("experiment", {})

    def mesh(self) -> Mesh:
        try:
            return build_mesh(self.dim, self.cells)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def options(self) -> SolverOptions:
        try:
            return SolverOptions(**self.raw.get("solver", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def coefficient(self, mesh: Mesh) -> CoefficientField:
        from .homogenization import layered_coefficient

        block = self.raw["coefficient"]
        kind = block["kind"]
        try:
            if kind == "constant":
                return CoefficientField.constant(mesh, block.get("value", 1.0))
            if kind == "layered":
                prof = Expression(block["profile"], ("y",))
                return layered_coefficient(prof, block["epsilon"], block.get("axis", 0), mesh)
            expr = Expression(block["expression"], ("x", "y")[: mesh.dim])
            return CoefficientField.from_function(mesh, expr)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def measure(self, mesh: Mesh) -> DiscreteMeasure:
        if "measure" not in self.raw:
            raise ConfigError("missing measure block")
        try:
            return build_measure(self.raw["measure"], mesh)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _has_power(block):
    if block["kind"] == "sum":
        return any(_has_power(t) for t in block["terms"])
    return block["kind"] == "boundary_power"


def build_measure(block: dict, mesh: Mesh, rule=None) -> DiscreteMeasure:
    """Measure from a config block; sums with a boundary_power term share the graded rule."""
    kind = block["kind"]
    if kind == "sum":
        rule = graded_rule(mesh) if _has_power(block) else None
        terms = [build_measure(t, mesh, rule) for t in block["terms"]]
        total = terms[0]
        for t in terms[1:]:
            total = add(total, t)
        return total
    if kind == "density":
        f = Expression(block["expression"], ("x", "y")[: mesh.dim])
        return density_measure(mesh, f, int(block.get("quad_order", 5)), rule=rule)
    if kind == "boundary_power":
        return boundary_power_density(mesh, float(block["s"]))
    return atom_measure(mesh, float(block["position"]), float(block.get("mass", 1.0)))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return ExperimentConfig.loads(text)


def shipped_configs() -> list[Path]:
    """Example configs bundled with the package, sorted by name."""
    return sorted((Path(__file__).parent / "configs").glob("*.toml"))
