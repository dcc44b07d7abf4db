"""Command line: run one scenario, write CSV/JSON results and a run manifest.

    edgeflow {audit,kernel,schauder,flow,estimates} (--config PATH | --preset NAME)
             [--out DIR] [--seed N]

Exit status is 0 when the scenario passes, 2 on a scientific failure (the
computation ran but a checked property failed) and 1 on an operational error
(bad config, unwritable directory, numerical breakdown).  Every run, including
failed ones, leaves ``manifest.json`` in the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_preset, parse_config, preset_names
from .errors import ConfigError, EdgeFlowError, FeasibilityError, NoConvergenceError
from .geometry import Circle
from .grid import make_grid
from .heat_kernel import ConeKernel, mode_decay_slopes, verify_stochastic_completeness
from .holder import schauder_ratio_experiment
from .semigroup import DiscreteLaplacian, build_laplacian, semigroup_checks
from .solver import ball_samples, estimate_audit, yamabe_flow_run
from .spectral import check_feasibility, indicial_roots, link_eigenvalues

log = logging.getLogger(__name__)

__all__ = ["RunManifest", "run_scenario", "main", "SCHEMA_VERSION", "COMMANDS"]

SCHEMA_VERSION = "1.0"
COMMANDS = {
    "audit": "feasibility_audit",
    "kernel": "kernel_validation",
    "schauder": "schauder_ratio",
    "flow": "flow_solve",
    "estimates": "estimate_audit",
}
EXIT_PASS, EXIT_OPERATIONAL, EXIT_SCIENTIFIC = 0, 1, 2


@dataclass
class RunManifest:
    scenario: str
    config: dict
    seed: int | None
    code_version: str = __version__
    schema_version: str = SCHEMA_VERSION
    files: list = field(default_factory=list)
    passed: bool = False
    exit_code: int = EXIT_OPERATIONAL
    failure_reason: str | None = None
    summary: dict = field(default_factory=dict)
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


# writers ----------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Writer:
    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []

    def json(self, name: str, data) -> None:
        _atomic_write(self.out / name, json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")
        self.files.append(name)

    def csv(self, name: str, columns: list[str], rows) -> None:
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.files.append(name)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return v


# scenarios ----------------------------------------------------------------------

def _feasibility_audit(cfg: ExperimentConfig, w: _Writer) -> tuple[bool, dict]:
    report = check_feasibility(cfg.geometry)
    w.json("feasibility.json", report.to_dict())
    spec = link_eigenvalues(cfg.geometry.link, 6)
    gammas = indicial_roots(cfg.geometry.f, spec)
    w.csv("indicial_roots.csv", ["j", "lambda", "multiplicity", "gamma"],
          zip(range(len(spec)), spec.eigenvalues, spec.multiplicities, gammas))
    summary = {k: v for k, v in report.to_dict().items() if k != "conditions"}
    return report.feasible, summary


def _kernel_validation(cfg: ExperimentConfig, w: _Writer) -> tuple[bool, dict]:
    opt = cfg.options
    link = cfg.geometry.link
    kernel = ConeKernel.build(link)
    samples = [(t, s) for t in opt["kernel.times"] for s in opt["kernel.radii"]]
    mass = verify_stochastic_completeness(kernel, samples, tol=opt["kernel.tol"])
    w.csv("stochastic_completeness.csv",
          ["t", "s", "interior_mass", "reflected_mass", "residual", "previous_residual", "monotone",
           "boundary_heuristic_ok"],
          [[r["t"], r["s"], r["interior_mass"], r["reflected_mass"], r["residual"],
            r["previous_residual"], r["monotone"], r["boundary_heuristic_ok"]] for r in mass])
    slopes = mode_decay_slopes(kernel)
    w.csv("mode_decay.csv", ["level", "gamma", "slope", "rel_error"],
          [[r["level"], r["gamma"], r["slope"], r["rel_error"]] for r in slopes])
    g = cfg.grid
    lap = build_laplacian(cfg.geometry, g.N_radial, g.p_grading, g.N_link_modes, g.N_base_modes,
                          allow_infeasible=True)
    semi = semigroup_checks(lap, seed=cfg.seed)
    w.json("semigroup.json", semi)
    mass_ok = all(r["residual"] <= opt["kernel.tol"] and r["monotone"] for r in mass)
    slope_ok = all(r["rel_error"] <= opt["kernel.slope_tol"] for r in slopes)
    semi_ok = (semi["eigenmode_decay_rel_error"] <= opt["kernel.decay_tol"]
               and semi["composition_error"] <= opt["kernel.composition_tol"])
    summary = {
        "max_mass_residual": max(r["residual"] for r in mass),
        "mass_ok": mass_ok,
        "max_slope_error": max(r["rel_error"] for r in slopes),
        "slope_ok": slope_ok,
        "semigroup_ok": semi_ok,
        **semi,
    }
    return mass_ok and slope_ok and semi_ok, summary


def _schauder_ratio(cfg: ExperimentConfig, w: _Writer) -> tuple[bool, dict]:
    opt = cfg.options
    g = cfg.grid
    link = cfg.geometry.link
    length = link.circumference if isinstance(link, Circle) else 1.0
    rows = schauder_ratio_experiment(
        cfg.forcing.function(length), cfg.solver.alpha, opt["schauder.k"], cfg.geometry,
        refinements=tuple(opt["schauder.refinements"]), n_radial=g.N_radial, n_time=g.N_time,
        T=cfg.solver.T, grading=g.p_grading, n_link=g.N_link_modes, n_base=g.N_base_modes,
    )
    cols = ["refinement", "ratio_2k_plus_2", "ratio_sqrt_t", "n_radial", "n_time", "forcing_norm"]
    w.csv("schauder.csv", cols, [[r[c] for c in cols] for r in rows])
    if any(r["degenerate"] for r in rows):
        return False, {"degenerate": True}
    variation = {}
    for col in ("ratio_2k_plus_2", "ratio_sqrt_t"):
        vals = [r[col] for r in rows]
        variation[col] = (max(vals) - min(vals)) / min(vals)
    ok = all(v <= opt["schauder.tolerance"] for v in variation.values())
    return ok, {"variation": variation, "tolerance": opt["schauder.tolerance"]}


def _exact_constant(S0: float, times: np.ndarray, m: int, convention: str) -> np.ndarray:
    clock = times if convention == "physical" else times / (m - 1)
    return 0.5 * np.log1p(-S0 * clock)


def _flow_solve(cfg: ExperimentConfig, w: _Writer) -> tuple[bool, dict]:
    opt = cfg.options
    g = cfg.grid
    geo = cfg.geometry
    lap = build_laplacian(geo, g.N_radial, g.p_grading, g.N_link_modes, g.N_base_modes)
    length = geo.link.circumference if isinstance(geo.link, Circle) else 1.0
    F = cfg.forcing.function(length)
    scal0 = lambda x, z, *y: F(0.0, x, z, *y)  # noqa: E731
    state = yamabe_flow_run(cfg.solver, geo, scal0, lap)
    u = state.u.values
    scal_g = state.diagnostics["scal_g"]
    grid = lap.grid
    idx = np.indices(u.shape).reshape(u.ndim, -1).T
    extra_cols = [f"y{i}_index" for i in range(len(grid.base))]
    w.csv("trajectory.csv", ["t", "x", "z_index", "u", "scal_g_t", *extra_cols],
          ([state.times[i[0]], grid.x[i[1]], i[2], u[tuple(i)], scal_g[tuple(i)], *i[3:]] for i in idx))
    if state.iteration_log:
        w.csv("iterations.csv", ["iter", "diff_norm", "ratio"],
              [[e["iter"], e["diff_norm"], e["ratio"]] for e in state.iteration_log])
    summary = state.summary()
    summary["flow_residual"] = state.diagnostics["flow_residual"]
    summary["flow_residual_late"] = state.diagnostics["flow_residual_late"]
    summary["admissible"] = state.diagnostics["admissible"]
    checks = {"converged": state.converged, "admissible": state.diagnostics["admissible"]}
    if state.backend == "picard":
        ratios = state.contraction_ratios
        summary["max_ratio"] = max(ratios) if ratios else None
        checks["contraction"] = all(r < opt["flow.ratio_threshold"] for r in ratios)
        checks["fixed_point_residual"] = state.fixed_point_residual <= cfg.solver.tol
    if not state.in_ball:
        summary["ball_note"] = "iterates exceed mu in the discrete norm; see ball_norm"

    tol = {"picard": opt["flow.exact_tol_picard"], "implicit_oracle": opt["flow.exact_tol_oracle"]}
    states = {state.backend: state}
    if opt["flow.cross_check"]:
        other = "implicit_oracle" if state.backend == "picard" else "picard"
        params = replace(cfg.solver, backend=other, T=state.T)
        states[other] = yamabe_flow_run(params, geo, scal0, lap)
        diff = float(np.max(np.abs(states[other].u.values - u)))
        summary["backend_sup_difference"] = diff
        checks["backend_equivalence"] = diff <= opt["flow.backend_tol"]
    if cfg.forcing.kind in ("constant", "zero"):
        S0 = cfg.forcing.amplitude if cfg.forcing.kind == "constant" else 0.0
        for name, st in states.items():
            exact = _exact_constant(S0, st.times, geo.m, cfg.solver.time_convention)
            err_u = float(np.max(np.abs(st.u.values - exact.reshape((-1,) + (1,) * (u.ndim - 1)))))
            scal_exact = S0 * np.exp(-2 * exact)
            err_s = float(np.max(np.abs(st.diagnostics["scal_g"]
                                        - scal_exact.reshape((-1,) + (1,) * (u.ndim - 1)))))
            summary[f"exact_sup_error_{name}"] = err_u
            summary[f"scal_sup_error_{name}"] = err_s
            checks[f"exact_{name}"] = err_u <= tol[name] and err_s <= tol[name]
    summary["checks"] = checks
    w.json("summary.json", summary)
    return all(checks.values()), summary


def _estimate_audit(cfg: ExperimentConfig, w: _Writer) -> tuple[bool, dict]:
    opt = cfg.options
    g = cfg.grid
    geo = cfg.geometry
    lap = build_laplacian(geo, g.N_radial, g.p_grading, g.N_link_modes, g.N_base_modes)
    times = np.linspace(0.0, cfg.solver.T, g.N_time + 1)
    length = geo.link.circumference if isinstance(geo.link, Circle) else 1.0
    F = cfg.forcing.function(length)
    scal0 = lambda x, z, *y: F(0.0, x, z, *y)  # noqa: E731
    n = opt["estimates.n_samples"]
    samples = ball_samples(lap, times, 2 * n, cfg.solver, seed=cfg.seed)
    base = estimate_audit(samples[:n], cfg.solver, lap, scal0, geo.m, times)
    doubled = estimate_audit(samples, cfg.solver, lap, scal0, geo.m, times)
    keys = ("quadratic_Q", "lipschitz_Q", "lipschitz_B", "bound_B")
    change = {}
    for k in keys:
        a, b = base[k], doubled[k]
        if a is None or b is None:
            change[k] = None
        elif a == 0:
            change[k] = 0.0 if b == 0 else math.inf
        else:
            change[k] = abs(b - a) / abs(a)
    w.csv("estimates.csv", ["quantity", "n_samples", "doubled", "relative_change"],
          [[k, base[k], doubled[k], change[k]] for k in keys])
    stable = all(c is None or c <= opt["estimates.stability"] for c in change.values())
    finite = base["all_finite"] and doubled["all_finite"]
    summary = {"base": base, "doubled": doubled, "relative_change": change, "stable": stable,
               "finite": finite, "outside_ball": doubled["outside_ball"]}
    w.json("estimates.json", summary)
    return finite and stable and doubled["outside_ball"] == 0, summary


PIPELINES = {
    "feasibility_audit": _feasibility_audit,
    "kernel_validation": _kernel_validation,
    "schauder_ratio": _schauder_ratio,
    "flow_solve": _flow_solve,
    "estimate_audit": _estimate_audit,
}


def _write_manifest(out: Path, manifest: RunManifest) -> None:
    _atomic_write(out / "manifest.json", json.dumps(_clean(manifest.to_dict()), indent=2, sort_keys=True) + "\n")


def run_scenario(cfg: ExperimentConfig) -> RunManifest:
    """Run ``cfg.scenario``, write its results and the manifest into ``cfg.output_dir``."""
    out = Path(cfg.output_dir)
    manifest = RunManifest(scenario=cfg.scenario, config=_clean(cfg.snapshot), seed=cfg.seed)
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        writer = _Writer(out)
        try:
            passed, summary = PIPELINES[cfg.scenario](cfg, writer)
            manifest.passed = bool(passed)
            manifest.summary = summary
            manifest.exit_code = EXIT_PASS if passed else EXIT_SCIENTIFIC
            if not passed:
                manifest.failure_reason = "scenario checks failed; see summary"
        except (FeasibilityError, NoConvergenceError) as exc:
            manifest.exit_code = EXIT_SCIENTIFIC
            manifest.failure_reason = f"{type(exc).__name__}: {exc}"
        except (EdgeFlowError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            manifest.exit_code = EXIT_OPERATIONAL
            manifest.failure_reason = f"{type(exc).__name__}: {exc}"
        finally:
            manifest.files = list(writer.files)
    except OSError as exc:
        manifest.exit_code = EXIT_OPERATIONAL
        manifest.failure_reason = f"{type(exc).__name__}: {exc}"
        manifest.wall_time_s = time.perf_counter() - start
        return manifest
    manifest.wall_time_s = time.perf_counter() - start
    _write_manifest(out, manifest)
    return manifest


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgeflow", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, scenario in COMMANDS.items():
        p = sub.add_parser(name, help=f"run the {scenario} scenario")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="key = value config file")
        src.add_argument("--preset", choices=preset_names(), help="shipped preset config")
        p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="seed (overrides the config)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    scenario = COMMANDS[args.command]
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else load_preset(args.preset)
        if not any(line.split("#")[0].strip().startswith("scenario") for line in text.splitlines()):
            text += f"\nscenario = {scenario}\n"
        cfg = parse_config(text)
    except (OSError, ConfigError) as exc:
        errors = exc.errors if isinstance(exc, ConfigError) else [str(exc)]
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        if args.out:
            manifest = RunManifest(scenario=scenario, config={}, seed=args.seed,
                                   failure_reason="; ".join(errors))
            try:
                args.out.mkdir(parents=True, exist_ok=True)
                _write_manifest(args.out, manifest)
            except OSError:
                pass
        return EXIT_OPERATIONAL
    if cfg.scenario != scenario:
        print(f"config scenario {cfg.scenario!r} does not match command {args.command!r}", file=sys.stderr)
        return EXIT_OPERATIONAL
    if args.out:
        cfg.output_dir = args.out
        cfg.snapshot["output_dir"] = str(args.out)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.snapshot["seed"] = args.seed
    manifest = run_scenario(cfg)
    status = {EXIT_PASS: "PASS", EXIT_SCIENTIFIC: "FAIL", EXIT_OPERATIONAL: "ERROR"}[manifest.exit_code]
    print(f"{status} {cfg.scenario} -> {cfg.output_dir} ({manifest.wall_time_s:.1f} s)")
    if manifest.failure_reason:
        print(f"  {manifest.failure_reason}", file=sys.stderr)
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
