"""
Command-line front end: ``python -m app <subcommand> --config scenario.json``.
"""
import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from dotenv import load_dotenv

from .core.config import settings
from .core.errors import ConfigError, ConvergenceError, DependencyError, ThinFlowError, exit_code_for
from .services import report_exporter
from .services.approximation import ORDERS, assemble, check_boundary_fit, sample_axisymmetric
from .services.artifact_store import ArtifactStore
from .services.boundary_layer import decay_rate
from .services.cell_solver import build_u1, build_u2, neumann_eigenbasis, section_mesh
from .services.error_study import convergence_study
from .services.limit_solver import limit_residual, solve_limit_problem, solve_w1
from .services.model_config import ModelConfig
from .services.pipeline import build_parts
from .services.reference_solver import flux_balance, mms_self_test, solve_reference
from .services.scenario_service import builtin_scenarios, config_from_dict, load_config_file, require_valid, validate_assumptions

logger = logging.getLogger(__name__)

COMMANDS = ("validate", "limit", "cell", "layers", "assemble", "reference", "study", "mms")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thinflow",
                                     description="Asymptotic approximations of transport in thin cylinders")
    parser.add_argument("command", choices=COMMANDS, help="pipeline stage to run")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="scenario document (JSON, or YAML by extension)")
    source.add_argument("--scenario", help="name of a built-in scenario")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--order", choices=ORDERS, default="first", help="approximation order")
    parser.add_argument("--epsilons", default=None, help="comma-separated decreasing epsilon list")
    parser.add_argument("--beta", type=float, default=None, help="Peclet exponent override")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes over epsilon cases")
    parser.add_argument("--no-timestamp", action="store_true", help="stable output file names")
    parser.add_argument("--pipeline", action="store_true", help="compute missing upstream stages")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def _parse_epsilons(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise ConfigError(f"cannot parse --epsilons: {e}", {"key": "epsilons"}) from e
    if not values:
        raise ConfigError("--epsilons is empty", {"key": "epsilons"})
    return values


def _load(args: argparse.Namespace) -> ModelConfig:
    if args.config is not None:
        cfg = load_config_file(args.config)
    else:
        cfg = builtin_scenarios(args.scenario)
    if args.epsilons is not None or args.beta is not None:
        data = cfg.document.model_dump()
        if args.epsilons is not None:
            data["epsilons"] = _parse_epsilons(args.epsilons)
        if args.beta is not None:
            data["beta"] = args.beta
        cfg = config_from_dict(data)
    return cfg


def _require_artifacts(store: ArtifactStore, cfg: ModelConfig, stages: List[str]) -> None:
    for stage in stages:
        path = store.path(cfg.cache_key(stage))
        if not path.exists():
            raise DependencyError(f"missing {stage} artifact; run the '{stage}' stage first or pass --pipeline",
                                  {"artifact": str(path)})


def _stem(cfg: ModelConfig, kind: str, args: argparse.Namespace) -> str:
    return report_exporter.output_stem(cfg.name, kind, not args.no_timestamp)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def run_validate(cfg: ModelConfig, args, out: Path, store: ArtifactStore) -> Dict[str, Path]:
    report = validate_assumptions(cfg)
    path = report_exporter.write_json(report.model_dump(), out / f"{_stem(cfg, 'validation', args)}.json")
    require_valid(cfg)
    return {"validation": path}


def run_limit(cfg: ModelConfig, args, out: Path, store: ArtifactStore) -> Dict[str, Path]:
    require_valid(cfg)
    mesh = section_mesh(cfg)
    lim = solve_limit_problem(cfg, mesh)
    store.save_limit(cfg, lim)
    stem = _stem(cfg, "limit", args)
    summary = {"T1": lim.T1, "T": cfg.horizon, "mode": lim.mode, "max_w0": float(np.abs(lim.w0).max()),
               "residual": limit_residual(cfg, lim, mesh), "nx": len(lim.x) - 1, "levels": len(lim.t)}
    if lim.fan is not None:
        summary["fan_curves"] = int(len(lim.fan.parameter))
        summary["fan_min_spacing_ratio"] = float(np.min(lim.fan.min_spacing_ratio))
    return {"summary": report_exporter.write_json(summary, out / f"{stem}.json"),
            "csv": report_exporter.dump_limit(lim, out / f"{stem}.csv")}


def run_cell(cfg: ModelConfig, args, out: Path, store: ArtifactStore) -> Dict[str, Path]:
    if not args.pipeline:
        _require_artifacts(store, cfg, ["limit"])
    mesh = section_mesh(cfg)
    lim = store.load_limit(cfg)
    if lim is None:
        require_valid(cfg)
        lim = solve_limit_problem(cfg, mesh)
        store.save_limit(cfg, lim)
    u1 = build_u1(cfg, lim, mesh)
    store.save_cell(cfg, "u1", u1)
    stem = _stem(cfg, "cell", args)
    paths = {"u1": report_exporter.dump_cell(u1, mesh, out / f"{stem}-u1.csv", stride=max(1, cfg.grid.nx // 20))}
    if args.order == "full":
        w1 = solve_w1(cfg, lim, u1, mesh)
        u2 = build_u2(cfg, lim, w1, u1, mesh)
        paths["u2"] = report_exporter.dump_cell(u2, mesh, out / f"{stem}-u2.csv", stride=max(1, cfg.grid.nx // 20))
    basis = neumann_eigenbasis(mesh, cfg.grid.modes)
    paths["eigenbasis"] = report_exporter.dump_eigenbasis(basis, out / f"{stem}-eigenbasis.csv")
    return paths


def _upstream(cfg: ModelConfig, args) -> List[str]:
    return ["limit"] if args.order == "leading" else ["limit", "u1"]


def run_layers(cfg: ModelConfig, args, out: Path, store: ArtifactStore) -> Dict[str, Path]:
    if not args.pipeline:
        _require_artifacts(store, cfg, _upstream(cfg, args))
    parts = build_parts(cfg, args.order, store=store, validate=args.pipeline)
    layers = parts.layers
    stem = _stem(cfg, "layers", args)
    zeta = np.linspace(0.0, 0.5 * cfg.lzeta, 201)
    window = (min(1.0, 0.1 * cfg.lzeta), 0.5 * cfg.lzeta)
    fits = {}
    for term in (layers.pi0, layers.pi1_hat, layers.pi1_tilde, layers.pi2):
        if term is None:
            continue
        fit = decay_rate(term, window)
        fits[term.name] = {"rate": fit.rate, "analytic_rate": float(term.rate), "residual": fit.residual,
                           "zero": fit.zero, "initial_max": term.initial_max(zeta)}
    fits["pi1_tail_bound"] = layers.pi1_tilde.tail_bound()
    return {"decay": report_exporter.write_json(fits, out / f"{stem}.json"),
            "csv": report_exporter.dump_layers(layers, zeta, out / f"{stem}.csv")}


def run_assemble(cfg: ModelConfig, args, out: Path, store: ArtifactStore) -> Dict[str, Path]:
    if not args.pipeline:
        _require_artifacts(store, cfg, _upstream(cfg, args))
    parts = build_parts(cfg, args.order, store=store, validate=args.pipeline)
    stem = _stem(cfg, f"assemble-{args.order}", args)
    fits, paths = {}, {}
    for eps in cfg.epsilons:
        field = assemble(cfg, eps, args.order, parts)
        fits[str(eps)] = check_boundary_fit(field, cfg, eps)
        r = np.linspace(0.0, eps * cfg.cross_section.outer_radius(), 5)
        times = parts.lim.t
        values = np.stack([sample_axisymmetric(field, parts.lim.x, r, float(tk)) for tk in times])
        paths[f"samples-{eps}"] = report_exporter.dump_samples(parts.lim.x, r, times, values,
                                                               out / f"{stem}-eps{eps}.csv")
    paths["boundary_fit"] = report_exporter.write_json(fits, out / f"{stem}.json")
    return paths


def run_reference(cfg: ModelConfig, args, out: Path, store: ArtifactStore) -> Dict[str, Path]:
    require_valid(cfg)
    stem = _stem(cfg, "reference", args)
    meta, paths = {}, {}
    for eps in cfg.epsilons:
        sol = solve_reference(cfg, eps)
        balance = flux_balance(sol, cfg, eps)
        meta[str(eps)] = {**sol.metadata, "scheme": sol.scheme, "dt": sol.dt, "steps": sol.steps,
                          "nx": len(sol.grid.x) - 1, "nr": len(sol.grid.r) - 1,
                          "max_flux_residual": float(balance.max()) if balance.size else 0.0}
        paths[f"snapshots-{eps}"] = report_exporter.dump_reference(sol, out / f"{stem}-eps{eps}.csv")
    paths["metadata"] = report_exporter.write_json(meta, out / f"{stem}.json")
    return paths


def run_study(cfg: ModelConfig, args, out: Path, store: ArtifactStore) -> Dict[str, Path]:
    table = convergence_study(cfg, jobs=args.jobs, store=store)
    return report_exporter.write_report(table, out, timestamp=not args.no_timestamp)


def run_mms(cfg: ModelConfig, args, out: Path, store: ArtifactStore) -> Dict[str, Path]:
    report = mms_self_test(cfg)
    path = report_exporter.write_json(dataclasses.asdict(report), out / f"{_stem(cfg, 'mms', args)}.json")
    if not report.passed:
        raise ConvergenceError("manufactured-solution slopes below the gate",
                               {"spatial": f"{report.spatial_slope:.3f}", "temporal": f"{report.temporal_slope:.3f}"})
    return {"mms": path}


RUNNERS = {
    "validate": run_validate,
    "limit": run_limit,
    "cell": run_cell,
    "layers": run_layers,
    "assemble": run_assemble,
    "reference": run_reference,
    "study": run_study,
    "mms": run_mms,
}


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1", {"key": "jobs"})
        cfg = _load(args)
        out = args.out or Path(settings.OUTPUT_DIR)
        store = ArtifactStore()
        paths = RUNNERS[args.command](cfg, args, out, store)
    except ThinFlowError as e:
        logger.error(f"{args.command} failed: {e.message}", exc_info=args.verbose)
        print(e.diagnostic(), file=sys.stderr)
        return exit_code_for(e)
    for name, path in paths.items():
        logger.info(f"{args.command}: {name} -> {path}")
    return 0
