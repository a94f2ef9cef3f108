"""
Stage orchestration: validation, limit problem, cell correctors, eigenbasis and layer terms.
"""
import logging
import time
from typing import Dict, Optional

from ..core.errors import ConfigError
from .approximation import ORDERS, ApproximationParts
from .artifact_store import ArtifactStore
from .boundary_layer import build_layer_data, build_layers
from .cell_solver import build_u1, build_u2, neumann_eigenbasis, section_mesh
from .limit_solver import solve_limit_problem, solve_w1
from .model_config import ModelConfig
from .scenario_service import require_valid

logger = logging.getLogger(__name__)


def build_parts(cfg: ModelConfig, order: str = "full", store: Optional[ArtifactStore] = None,
                validate: bool = True, timings: Optional[Dict[str, float]] = None) -> ApproximationParts:
    """
    Compute every part the requested approximation order needs.

    The parts do not depend on epsilon, so one call serves a whole convergence study.

    Args:
        cfg: scenario
        order: "leading", "first" or "full"
        store: optional artifact cache for the limit solution and the cell correctors
        validate: refuse scenarios whose required assumptions fail
        timings: optional dict receiving wall-clock seconds per stage

    Returns:
        ApproximationParts
    """
    if order not in ORDERS:
        raise ConfigError(f"unknown approximation order '{order}'", {"key": "order"})
    timings = timings if timings is not None else {}

    def timed(stage, fn):
        started = time.perf_counter()
        result = fn()
        timings[stage] = time.perf_counter() - started
        return result

    if validate:
        timed("validate", lambda: require_valid(cfg))
    mesh = timed("mesh", lambda: section_mesh(cfg))

    lim = store.load_limit(cfg) if store else None
    if lim is None:
        lim = timed("limit", lambda: solve_limit_problem(cfg, mesh))
        if store:
            store.save_limit(cfg, lim)

    w1 = u1 = u2 = None
    if order != "leading":
        u1 = store.load_cell(cfg, "u1") if store else None
        if u1 is None:
            u1 = timed("u1", lambda: build_u1(cfg, lim, mesh))
            if store:
                store.save_cell(cfg, "u1", u1)
        w1 = timed("w1", lambda: solve_w1(cfg, lim, u1, mesh))
    if order == "full":
        u2 = timed("u2", lambda: build_u2(cfg, lim, w1, u1, mesh))

    basis = timed("eigenbasis", lambda: neumann_eigenbasis(mesh, cfg.grid.modes))
    data = build_layer_data(cfg, lim, w1=w1, u1=u1, u2=u2)
    layers = timed("layers", lambda: build_layers(cfg, data, basis, mesh, with_second=order == "full"))
    logger.info(f"Built {order} parts for '{cfg.name}': "
                + ", ".join(f"{stage} {seconds:.2f}s" for stage, seconds in timings.items()))
    return ApproximationParts(mesh=mesh, lim=lim, w1=w1, u1=u1, u2=u2, layers=layers)
