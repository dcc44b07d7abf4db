"""Experiment configuration: a plain dotted ``key = value`` document.

Grammar
-------
One assignment per line, ``#`` starts a comment, blank lines are ignored.
Keys are dotted (``geometry.f``); values are integers, floats, booleans
(``true``/``false``), bare words, or comma-separated lists.  Float values may
use ``pi`` with ``+ - * /`` and parentheses, e.g. ``geometry.cone_angle = pi/6``.

``parse_config`` reports every violation it finds, not just the first.  The
full key table is ``SCHEMA``; ``describe_schema()`` renders it as text.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError, EdgeFlowError
from .geometry import Circle, EdgeConfig, ExplicitSpectrum, FlatTorus, PerturbationDecay, Point, RoundSphere
from .solver import SolverParams

__all__ = [
    "SCENARIOS",
    "SCHEMA",
    "GridSpec",
    "ForcingSpec",
    "ExperimentConfig",
    "parse_config",
    "load_preset",
    "preset_names",
    "describe_schema",
]

SCENARIOS = ("feasibility_audit", "kernel_validation", "schauder_ratio", "flow_solve", "estimate_audit")
REQUIRED = object()

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def _eval_float(text: str) -> float:
    """Float literal or arithmetic in ``pi``; nothing else is evaluated."""

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = walk(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise ValueError(text)

    try:
        return walk(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError) as exc:
        raise ValueError(text) from exc


def _parse_int(text: str) -> int:
    v = text.strip()
    if not v.lstrip("+-").isdigit():
        raise ValueError(text)
    return int(v)


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v not in ("true", "false"):
        raise ValueError(text)
    return v == "true"


def _split(text: str) -> list[str]:
    v = text.strip()
    if v.startswith("[") and v.endswith("]"):
        v = v[1:-1]
    return [p for p in (s.strip() for s in v.split(",")) if p]


def _float_list(text):
    return [_eval_float(p) for p in _split(text)]


def _int_list(text):
    return [_parse_int(p) for p in _split(text)]


def _choice(*options):
    def parse(text):
        v = text.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v

    parse.__name__ = "one of " + "|".join(options)
    return parse


_parse_int.__name__ = "integer"
_eval_float.__name__ = "float"
_parse_bool.__name__ = "boolean"
_float_list.__name__ = "list of floats"
_int_list.__name__ = "list of integers"

# key -> (parser, default, help)
SCHEMA: dict[str, tuple] = {
    "scenario": (_choice(*SCENARIOS), REQUIRED, "pipeline to run"),
    "output_dir": (str, "runs/out", "directory for result files"),
    "seed": (_parse_int, 0, "seed for sampled quantities"),
    "geometry.f": (_parse_int, REQUIRED, "link dimension"),
    "geometry.b": (_parse_int, 0, "base dimension (0 for a point, else the torus dimension)"),
    "geometry.link": (_choice("circle", "round_sphere", "explicit"), REQUIRED, "link variant"),
    "geometry.link_radius": (_eval_float, 1.0, "round_sphere radius"),
    "geometry.link_circumference": (_eval_float, None, "circle length"),
    "geometry.cone_angle": (_eval_float, None, "circle link given by cone angle theta (length 2 pi tan theta)"),
    "geometry.link_spectrum": (_float_list, None, "explicit link eigenvalues, ascending, starting at 0"),
    "geometry.link_multiplicities": (_int_list, None, "explicit link multiplicities"),
    "geometry.link_scal": (_eval_float, None, "explicit link scalar curvature, if constant"),
    "geometry.base": (_choice("point", "flat_torus"), "point", "base variant"),
    "geometry.base_lengths": (_float_list, None, "flat torus side lengths"),
    "geometry.perturbation_decay": (_choice("none", "O(x2)", "O(x4)"), "none", "decay class of the metric perturbation"),
    "solver.k": (_parse_int, 1, "Hölder order"),
    "solver.alpha": (_eval_float, 0.3, "Hölder exponent"),
    "solver.mu": (_eval_float, 0.5, "ball radius"),
    "solver.T": (_eval_float, 0.1, "horizon"),
    "solver.max_iters": (_parse_int, 60, "Picard iteration cap"),
    "solver.tol": (_eval_float, 1e-8, "Picard stopping tolerance"),
    "solver.backend": (_choice("picard", "implicit_oracle"), "picard", "primary backend"),
    "solver.oracle_dt": (_eval_float, 1e-4, "implicit Euler step"),
    "solver.time_convention": (_choice("physical", "rescaled"), "physical", "clock of the flow equation"),
    "grid.N_radial": (_parse_int, 24, "radial intervals"),
    "grid.p_grading": (_eval_float, 2.0, "radial grading exponent"),
    "grid.N_link_modes": (_parse_int, 1, "link nodes (odd; 1 keeps only the constant mode)"),
    "grid.N_base_modes": (_parse_int, 1, "nodes per base direction (odd)"),
    "grid.N_time": (_parse_int, 40, "time steps"),
    "forcing.kind": (_choice("zero", "constant", "bump"), "constant", "initial scalar curvature / Schauder forcing"),
    "forcing.amplitude": (_eval_float, 1.0, "constant value or bump height"),
    "forcing.center": (_eval_float, 0.5, "bump center in x"),
    "forcing.width": (_eval_float, 0.25, "bump width in x"),
    "forcing.link_amplitude": (_eval_float, 0.0, "relative cos(2 pi z / L) modulation of the bump"),
    "kernel.times": (_float_list, [0.01, 0.1], "times for the mass test"),
    "kernel.radii": (_float_list, [0.3, 0.5], "source radii for the mass test"),
    "kernel.tol": (_eval_float, 1e-6, "mass residual tolerance"),
    "kernel.slope_tol": (_eval_float, 0.02, "relative tolerance on near-tip slopes"),
    "kernel.decay_tol": (_eval_float, 1e-4, "eigenmode decay tolerance"),
    "kernel.composition_tol": (_eval_float, 1e-10, "semigroup composition tolerance"),
    "schauder.k": (_parse_int, 0, "order of the Schauder experiment"),
    "schauder.refinements": (_int_list, [1, 2, 4], "refinement factors"),
    "schauder.tolerance": (_eval_float, 0.2, "allowed relative variation of the ratios"),
    "flow.cross_check": (_parse_bool, True, "also run the other backend and compare"),
    "flow.ratio_threshold": (_eval_float, 0.5, "bound on Picard successive-difference ratios"),
    "flow.exact_tol_picard": (_eval_float, 1e-4, "sup error bound vs the exact constant solution"),
    "flow.exact_tol_oracle": (_eval_float, 1e-6, "sup error bound for the implicit oracle"),
    "flow.backend_tol": (_eval_float, 1e-3, "sup bound on the backend difference"),
    "estimates.n_samples": (_parse_int, 8, "sample pairs in the base set (doubled for the check)"),
    "estimates.stability": (_eval_float, 0.25, "allowed relative change under sample doubling"),
}


@dataclass(frozen=True)
class GridSpec:
    N_radial: int = 24
    p_grading: float = 2.0
    N_link_modes: int = 1
    N_base_modes: int = 1
    N_time: int = 40


@dataclass(frozen=True)
class ForcingSpec:
    kind: str = "constant"
    amplitude: float = 1.0
    center: float = 0.5
    width: float = 0.25
    link_amplitude: float = 0.0

    def function(self, link_length: float = 1.0):
        """``F(t, x, z, *y)`` for broadcasting over a space-time mesh."""
        import numpy as np

        kind, a, c, w, la = self.kind, self.amplitude, self.center, self.width, self.link_amplitude

        def fn(t, x, z, *y):
            if kind == "zero":
                return 0.0 * x
            if kind == "constant":
                return a + 0.0 * x
            bump = a * np.exp(-(((x - c) / w) ** 2))
            if la:
                bump = bump * (1 + la * np.cos(2 * np.pi * z / link_length))
            return bump + 0.0 * t

        return fn


@dataclass
class ExperimentConfig:
    geometry: EdgeConfig
    solver: SolverParams
    grid: GridSpec
    forcing: ForcingSpec
    scenario: str
    output_dir: Path
    seed: int
    options: dict = field(default_factory=dict)
    snapshot: dict = field(default_factory=dict)

    def option(self, key: str):
        return self.options[key]


def _read_pairs(text: str, errors: list) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            errors.append(f"line {lineno}: duplicate key {key}")
        raw[key] = value
    return raw


def _build_geometry(v: dict, errors: list) -> EdgeConfig | None:
    link = None
    kind = v.get("geometry.link")
    try:
        if kind == "circle":
            L, theta = v["geometry.link_circumference"], v["geometry.cone_angle"]
            if (L is None) == (theta is None):
                errors.append("circle link needs exactly one of geometry.link_circumference, geometry.cone_angle")
            elif theta is not None:
                link = Circle.from_cone_angle(theta)
            else:
                link = Circle(L)
        elif kind == "round_sphere":
            link = RoundSphere(v["geometry.link_radius"], v["geometry.f"])
        elif kind == "explicit":
            spec = v["geometry.link_spectrum"]
            if spec is None:
                errors.append("explicit link needs geometry.link_spectrum")
            else:
                mult = v["geometry.link_multiplicities"]
                link = ExplicitSpectrum(tuple(spec), v["geometry.f"],
                                        tuple(mult) if mult else None, v["geometry.link_scal"])
    except (EdgeFlowError, ValueError, TypeError) as exc:
        errors.append(f"geometry.link: {exc}")
    base = Point()
    if v.get("geometry.base") == "flat_torus":
        lengths = v["geometry.base_lengths"]
        if not lengths:
            errors.append("flat_torus base needs geometry.base_lengths")
            return None
        if len(lengths) != v["geometry.b"]:
            errors.append(f"geometry.b = {v['geometry.b']} does not match {len(lengths)} base lengths")
        try:
            base = FlatTorus(tuple(lengths))
        except (EdgeFlowError, ValueError) as exc:
            errors.append(f"geometry.base_lengths: {exc}")
            return None
    elif v.get("geometry.b", 0) != 0:
        errors.append("geometry.b > 0 needs geometry.base = flat_torus")
    if link is None:
        return None
    try:
        return EdgeConfig(v["geometry.f"], link, base, PerturbationDecay(v["geometry.perturbation_decay"]))
    except (EdgeFlowError, ValueError) as exc:
        errors.append(f"geometry: {exc}")
        return None


def _check_invariants(v: dict, errors: list):
    def need(cond, msg):
        if not cond:
            errors.append(msg)

    need(v["geometry.f"] >= 1, "geometry.f must be >= 1")
    need(v["geometry.b"] >= 0, "geometry.b must be >= 0")
    need(0 < v["solver.alpha"] < 1, "solver.alpha out of (0,1)")
    need(0 < v["solver.mu"] < 1, "solver.mu out of (0,1)")
    need(v["solver.T"] > 0, "solver.T must be > 0")
    need(v["solver.k"] >= 1, "solver.k must be >= 1")
    need(v["solver.tol"] > 0, "solver.tol must be > 0")
    need(v["solver.oracle_dt"] > 0, "solver.oracle_dt must be > 0")
    need(v["solver.max_iters"] >= 1, "solver.max_iters must be >= 1")
    need(v["grid.N_radial"] >= 3, "grid.N_radial must be >= 3")
    need(v["grid.N_time"] >= 3, "grid.N_time must be >= 3")
    need(v["grid.p_grading"] >= 1, "grid.p_grading must be >= 1")
    for key in ("grid.N_link_modes", "grid.N_base_modes"):
        n = v[key]
        need(n >= 1 and n % 2 == 1 and n != 2, f"{key} must be odd and >= 1")
    need(v["forcing.width"] > 0, "forcing.width must be > 0")
    need(v["schauder.k"] >= 0, "schauder.k must be >= 0")
    need(all(r >= 1 for r in v["schauder.refinements"]), "schauder.refinements must be >= 1")
    need(v["estimates.n_samples"] >= 1, "estimates.n_samples must be >= 1")
    need(all(t > 0 for t in v["kernel.times"]), "kernel.times must be > 0")
    need(all(0 < s <= 1 for s in v["kernel.radii"]), "kernel.radii must lie in (0, 1]")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document; raises ``ConfigError`` listing all violations."""
    errors: list[str] = []
    raw = _read_pairs(text, errors)
    values = {}
    for key, value in raw.items():
        if key not in SCHEMA:
            errors.append(f"unknown key {key}")
            continue
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(value)
        except (ValueError, TypeError):
            errors.append(f"{key}: cannot read {value!r} as {getattr(parser, '__name__', 'value')}")
    for key, (_, default, _) in SCHEMA.items():
        if key not in values:
            if default is REQUIRED:
                if key not in raw:
                    errors.append(f"missing required key {key}")
            else:
                values[key] = default
    if errors:
        raise ConfigError(errors)

    _check_invariants(values, errors)
    geometry = _build_geometry(values, errors)
    if errors:
        raise ConfigError(errors)

    solver = SolverParams(
        k=values["solver.k"], alpha=values["solver.alpha"], mu=values["solver.mu"], T=values["solver.T"],
        max_iters=values["solver.max_iters"], tol=values["solver.tol"], backend=values["solver.backend"],
        n_time=values["grid.N_time"], oracle_dt=values["solver.oracle_dt"],
        time_convention=values["solver.time_convention"],
    )
    grid = GridSpec(values["grid.N_radial"], values["grid.p_grading"], values["grid.N_link_modes"],
                    values["grid.N_base_modes"], values["grid.N_time"])
    forcing = ForcingSpec(values["forcing.kind"], values["forcing.amplitude"], values["forcing.center"],
                          values["forcing.width"], values["forcing.link_amplitude"])
    options = {k: v for k, v in values.items() if k.split(".")[0] in ("kernel", "schauder", "flow", "estimates")}
    return ExperimentConfig(
        geometry=geometry, solver=solver, grid=grid, forcing=forcing,
        scenario=values["scenario"], output_dir=Path(values["output_dir"]), seed=values["seed"],
        options=options, snapshot=dict(sorted(values.items())),
    )


def preset_names() -> list[str]:
    root = resources.files("edgeflow") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> str:
    """Text of a shipped preset config."""
    path = resources.files("edgeflow") / "presets" / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError([f"unknown preset {name!r}; available: {', '.join(preset_names())}"])
    return path.read_text(encoding="utf-8")


def describe_schema() -> str:
    lines = []
    for key, (parser, default, help_) in SCHEMA.items():
        d = "required" if default is REQUIRED else f"default {default}"
        lines.append(f"{key:32s} {getattr(parser, '__name__', 'string'):28s} {d}; {help_}")
    return "\n".join(lines)
