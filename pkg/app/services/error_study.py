"""
Error functionals between reference solutions and assembled approximations, and the epsilon sweep.
"""
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from ..core.errors import ConfigError, HorizonError
from ..models.scenario_models import ScenarioDocument
from ..models.study_models import ConvergenceTable, ErrorRow, SlopeFit
from .approximation import ApproximationField, ApproximationParts, assemble, sample_axisymmetric
from .artifact_store import ArtifactStore
from .model_config import ModelConfig
from .pipeline import build_parts
from .reference_solver import ReferenceSolution, solve_reference

logger = logging.getLogger(__name__)

# log10 residual above which a slope fit is flagged
UNRELIABLE_RESIDUAL = 0.2
SLOPE_POINTS = 3


def common_levels(ref: ReferenceSolution, horizon: float) -> np.ndarray:
    """Indices of reference snapshots at or before ``horizon``."""
    keep = np.flatnonzero(ref.t <= horizon + 1e-12)
    if horizon < 0.0 or keep.size == 0:
        raise HorizonError("no common time levels between reference and approximation",
                           {"horizon": f"{horizon:.6g}", "reference_end": f"{ref.t[-1]:.6g}"})
    return keep


def _horizon(ref: ReferenceSolution, approx: ApproximationField, horizon: Optional[float]) -> float:
    limit = min(approx.T1, float(ref.t[-1]))
    return limit if horizon is None else min(limit, horizon)


def sup_error(ref: ReferenceSolution, approx: ApproximationField, horizon: Optional[float] = None) -> float:
    """Max |approx - reference| over all reference nodes and snapshots up to the common horizon."""
    grid = ref.grid
    worst = 0.0
    for k in common_levels(ref, _horizon(ref, approx, horizon)):
        values = sample_axisymmetric(approx, grid.x, grid.r, float(ref.t[k]))
        worst = max(worst, float(np.abs(values - ref.u[k]).max()))
    return worst


def reference_gradient(ref: ReferenceSolution, k: int) -> np.ndarray:
    """(d/dx1, d/dr) of snapshot k by second-order differences, one-sided at the edges; (nx+1, nr+1, 2)."""
    u = ref.u[k]
    dx = np.gradient(u, ref.grid.x, axis=0, edge_order=2)
    dr = np.gradient(u, ref.grid.r, axis=1, edge_order=2)
    return np.stack([dx, dr], axis=-1)


def energy_error(ref: ReferenceSolution, approx: ApproximationField, cfg: ModelConfig, eps: float,
                 horizon: Optional[float] = None) -> float:
    """
    |Omega_eps|^(-1/2) * L2 norm over Omega_eps x (0, horizon) of grad(approx) - grad(reference).

    Space uses the control-volume weights dx * 2 pi r dr, time the trapezoid rule.
    """
    grid = ref.grid
    levels = common_levels(ref, _horizon(ref, approx, horizon))
    points = np.column_stack([grid.r, np.zeros(len(grid.r))])
    weights = grid.dx[:, None] * grid.ring_areas[None, :]
    integrals = []
    for k in levels:
        when = float(ref.t[k])
        approx_grad = approx.gradient(grid.x, points, when)
        ref_grad = reference_gradient(ref, k)
        diff = (approx_grad[..., 0] - ref_grad[..., 0]) ** 2 + (approx_grad[..., 1] - ref_grad[..., 1]) ** 2
        diff = diff + approx_grad[..., 2] ** 2
        integrals.append(float((diff * weights).sum()))
    times = ref.t[levels]
    total = float(trapezoid(integrals, times)) if len(times) > 1 else 0.0
    volume = math.pi * (eps * cfg.cross_section.outer_radius()) ** 2 * cfg.length
    return math.sqrt(max(total, 0.0) / volume)


def avg_error(ref: ReferenceSolution, leading: ApproximationField, horizon: Optional[float] = None) -> float:
    """Max over (x1, t) of |cross-section mean of the reference - leading approximation|."""
    if leading.order != "leading":
        raise ConfigError("average error compares against the leading approximation", {"key": "order"})
    grid = ref.grid
    means = ref.mean()
    axis_point = np.zeros((1, 2))
    worst = 0.0
    for k in common_levels(ref, _horizon(ref, leading, horizon)):
        values = leading.evaluate(grid.x, axis_point, float(ref.t[k]))[:, 0]
        worst = max(worst, float(np.abs(means[k] - values).max()))
    return worst


def fit_slope(kind: str, epsilons: Sequence[float], errors: Sequence[float]) -> SlopeFit:
    """Least-squares log-log slope over the finest SLOPE_POINTS epsilons."""
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    if len(eps) < SLOPE_POINTS:
        return SlopeFit(kind=kind, note=f"needs at least {SLOPE_POINTS} epsilon values")
    finest = np.argsort(eps)[:SLOPE_POINTS]
    eps, err = eps[finest], err[finest]
    if np.any(err <= 0.0):
        return SlopeFit(kind=kind, epsilons=eps.tolist(), note="zero error, slope undefined")
    coeffs = np.polyfit(np.log10(eps), np.log10(err), 1)
    residual = float(np.sqrt(np.mean((np.polyval(coeffs, np.log10(eps)) - np.log10(err)) ** 2)))
    reliable = residual <= UNRELIABLE_RESIDUAL
    return SlopeFit(kind=kind, slope=float(coeffs[0]), residual=residual, reliable=reliable,
                    epsilons=eps.tolist(), note=None if reliable else "unreliable")


def evaluate_epsilon(cfg: ModelConfig, eps: float, parts: ApproximationParts, horizon: float) -> ErrorRow:
    """Reference solve and all error functionals for one epsilon."""
    started = time.perf_counter()
    lim = parts.lim
    snapshots = lim.t[lim.t <= horizon + 1e-12]
    ref = solve_reference(cfg, eps, snapshots=snapshots)
    leading = assemble(cfg, eps, "leading", parts)
    first = assemble(cfg, eps, "first", parts)
    row = ErrorRow(
        epsilon=eps,
        sup_first=sup_error(ref, first, horizon),
        sup_leading=sup_error(ref, leading, horizon),
        energy_first=energy_error(ref, first, cfg, eps, horizon),
        avg_leading=avg_error(ref, leading, horizon),
        T1=lim.T1,
    )
    logger.info(f"eps={eps}: sup first {row.sup_first:.3e}, sup leading {row.sup_leading:.3e}, "
                f"energy first {row.energy_first:.3e}, avg leading {row.avg_leading:.3e} "
                f"({time.perf_counter() - started:.1f}s)")
    return row


# parts rebuilt inside worker processes, one set per scenario
_WORKER_PARTS: Dict[str, ApproximationParts] = {}


def _evaluate_task(args) -> ErrorRow:
    document, eps, horizon, cache_dir = args
    cfg = ModelConfig.from_document(ScenarioDocument.model_validate(document))
    key = cfg.cache_key("parts")
    parts = _WORKER_PARTS.get(key)
    if parts is None:
        store = ArtifactStore(cache_dir) if cache_dir else None
        parts = build_parts(cfg, order="first", store=store, validate=False)
        _WORKER_PARTS[key] = parts
    return evaluate_epsilon(cfg, eps, parts, horizon)


def convergence_study(cfg: ModelConfig, jobs: int = 1, store: Optional[ArtifactStore] = None,
                      parts: Optional[ApproximationParts] = None) -> ConvergenceTable:
    """
    Errors of the leading and first-order approximations over the scenario's epsilon list.

    Args:
        cfg: scenario with at least three epsilon values
        jobs: worker processes for the per-epsilon reference solves; rows keep the epsilon order
        store: optional artifact cache used when building parts
        parts: prebuilt parts (built here when omitted)

    Returns:
        ConvergenceTable with fitted slopes
    """
    epsilons = cfg.epsilons
    if len(epsilons) < SLOPE_POINTS:
        raise ConfigError(f"convergence study needs at least {SLOPE_POINTS} epsilon values",
                          {"key": "epsilons", "count": len(epsilons)})
    timings: Dict[str, float] = {}
    if parts is None:
        parts = build_parts(cfg, order="first", store=store, timings=timings)
    horizon = min(parts.lim.T1, cfg.horizon)
    if jobs > 1:
        document = cfg.document.model_dump()
        cache_dir = str(store.root) if store else None
        tasks = [(document, eps, horizon, cache_dir) for eps in epsilons]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows: List[ErrorRow] = list(pool.map(_evaluate_task, tasks))
    else:
        rows = [evaluate_epsilon(cfg, eps, parts, horizon) for eps in epsilons]

    slopes = {kind: fit_slope(kind, epsilons, [getattr(row, kind) for row in rows])
              for kind in ("sup_first", "sup_leading", "energy_first", "avg_leading")}
    for fit in slopes.values():
        if fit.slope is not None:
            logger.info(f"Slope {fit.kind}: {fit.slope:.3f} (residual {fit.residual:.3f})"
                        + ("" if fit.reliable else " UNRELIABLE"))
    return ConvergenceTable(
        scenario=cfg.name,
        beta=cfg.beta,
        mode="high-peclet" if cfg.high_peclet else "standard",
        horizon=horizon,
        rows=rows,
        slopes=slopes,
        metadata={"T": cfg.horizon, "T1": parts.lim.T1, "nx": cfg.grid.nx, "nt": cfg.grid.nt,
                  "reference_nx": cfg.reference.nx, "reference_nr": cfg.reference.nr},
    )
