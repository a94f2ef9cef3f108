"""
Scenario loading, the built-in benchmark catalog and sampled assumption checks.
"""
import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import ValidationError

from ..core.config import settings
from ..core.errors import ConfigError
from ..models.scenario_models import ConditionResult, ScenarioDocument, ValidationReport
from .model_config import ModelConfig

logger = logging.getLogger(__name__)

ZERO_TOL = 1e-12

_COMMON: Dict[str, Any] = {
    "length": 4.0,
    "horizon": 1.0,
    "delta1": 0.9,
    "cross_section": {"kind": "disk", "radius": 1.0},
    "boundary": {"catalog": "cubic-ramp", "params": {"a": 1.0, "ramp": 0.5}},
    "epsilons": [0.2, 0.1, 0.05, 0.025],
    "grid": {"nx": 200, "nt": 50},
}

BUILTIN_SCENARIOS: Dict[str, Dict[str, Any]] = {
    # w0 has a closed form along straight characteristics: y = x0 + t, w' = 2a * eta(y) * tau(t)
    "linear-advection": {
        "velocity": {"catalog": "constant", "params": {"c": 1.0}},
        "interaction": {"catalog": "bump-source", "params": {"a": 0.5, "x_start": 1.1, "x_stop": 2.0}},
    },
    "high-peclet-beta3": {
        "beta": 3.0,
        "velocity": {"catalog": "constant", "params": {"c": 1.0}},
        "interaction": {"catalog": "bump-source", "params": {"a": 0.5, "x_start": 1.1, "x_stop": 2.0}},
    },
    "saturating-flux": {
        "velocity": {"catalog": "saturating", "params": {"c": 1.0, "c0": 0.5}},
        "interaction": {"catalog": "bump-source", "params": {"a": 0.5, "x_start": 1.1, "x_stop": 2.0}},
        "grid": {"fan_refinement": 2},
    },
    "axisym-robin": {
        "velocity": {"catalog": "radial-inflow", "params": {"c": 1.0, "a": 0.3, "x_start": 1.1, "x_stop": 2.9}},
        "interaction": {"catalog": "radial-robin",
                        "params": {"a": 0.5, "gamma": 0.5, "a_end": 0.2, "end_start": 2.0, "end_stop": 3.0}},
    },
}


def _deep_merge(base: Dict[str, Any], overlay: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def scenario_document(name: str) -> Dict[str, Any]:
    """Raw document of a built-in scenario."""
    if name not in BUILTIN_SCENARIOS:
        raise ConfigError(f"unknown scenario '{name}'", {"key": "scenario", "known": ",".join(sorted(BUILTIN_SCENARIOS))})
    return _deep_merge({**_COMMON, "name": name}, BUILTIN_SCENARIOS[name])


def _error_key(exc: ValidationError) -> str:
    first = exc.errors()[0]
    return ".".join(str(part) for part in first["loc"]) or "document"


def config_from_dict(data: Dict[str, Any]) -> ModelConfig:
    """
    Validate a parsed document. A ``scenario`` key names a built-in scenario whose
    document the remaining keys overlay.
    """
    if not isinstance(data, dict):
        raise ConfigError("scenario document must be an object", {"key": "document"})
    data = dict(data)
    base = data.pop("scenario", None)
    if base is not None:
        data = _deep_merge(scenario_document(str(base)), data)
    try:
        document = ScenarioDocument.model_validate(data)
    except ValidationError as exc:
        key = _error_key(exc)
        raise ConfigError(f"invalid scenario document at '{key}': {exc.errors()[0]['msg']}", {"key": key}) from exc
    cfg = ModelConfig.from_document(document)
    logger.debug(f"Loaded scenario {cfg.name} (beta={cfg.beta}, epsilons={cfg.epsilons})")
    return cfg


def load_config(document: str) -> ModelConfig:
    """Parse a JSON scenario document."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario document is not valid JSON: {exc.msg}",
                          {"key": "document", "line": exc.lineno}) from exc
    return config_from_dict(data)


def load_config_file(path: Union[str, Path]) -> ModelConfig:
    """Load a scenario file; ``.yaml``/``.yml`` are read as YAML, everything else as JSON."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", {"key": "config"})
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        try:
            return config_from_dict(yaml.safe_load(text))
        except yaml.YAMLError as exc:
            raise ConfigError(f"scenario document is not valid YAML: {exc}", {"key": "document"}) from exc
    return load_config(text)


def builtin_scenarios(name: str) -> ModelConfig:
    return config_from_dict(scenario_document(name))


def list_scenarios() -> List[str]:
    return sorted(BUILTIN_SCENARIOS)


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------

class _Sampler:
    """Deterministic tensor samples of (s, x1, t) plus cross-section points."""

    def __init__(self, cfg: ModelConfig, points: int):
        self.cfg = cfg
        self.s = np.linspace(0.0, cfg.s_max, points)
        self.x = np.linspace(0.0, cfg.length, points)
        self.t = np.linspace(0.0, cfg.horizon, points)
        from .cell_solver import section_mesh

        self.mesh = section_mesh(cfg)
        # interior nodes plus boundary quadrature points
        self.xi = np.vstack([self.mesh.nodes, self.mesh.quad_points])

    def grid(self, x=None, t=None, s=None):
        s = self.s if s is None else s
        x = self.x if x is None else x
        t = self.t if t is None else t
        return np.meshgrid(s, x, t, indexing="ij")


def _worst(values: np.ndarray, coords: Dict[str, np.ndarray]) -> Tuple[float, Dict[str, float]]:
    index = np.unravel_index(int(np.argmax(values)), values.shape)
    return float(values[index]), {name: float(np.broadcast_to(c, values.shape)[index]) for name, c in coords.items()}


def _condition(name: str, violation: np.ndarray, coords: Dict[str, np.ndarray], required: bool = True,
               tol: float = ZERO_TOL, note: Optional[str] = None) -> ConditionResult:
    """``violation`` is a nonnegative array, positive where the condition fails."""
    if violation.size == 0:
        return ConditionResult(name=name, passed=True, required=required, note=note)
    value, point = _worst(violation, coords)
    passed = bool(value <= tol)
    return ConditionResult(name=name, passed=passed, worst_value=value, worst_point=None if passed else point,
                           required=required, note=note)


def _velocity_conditions(cfg: ModelConfig, sm: _Sampler, constants: Dict[str, float]) -> List[ConditionResult]:
    vel, d1, length = cfg.velocity, cfg.delta1, cfg.length
    S, X, T = sm.grid()
    v1 = vel.v1(S, X, T)
    ds = vel.dv1_ds(S, X, T)
    dss = vel.d2v1_ds2(S, X, T)
    constants["C0"] = float(np.max(v1))
    constants["C1"] = float(np.max(np.abs(S * ds) + np.abs(S * dss)))
    coords = {"s": S, "x1": X, "t": T}
    results = [_condition("velocity-bounds", np.where(np.isfinite(v1), np.maximum(-v1, 0.0), np.inf), coords,
                          note="0 <= v1 <= C0 and |s d_s v1| + |s d_ss v1| <= C1 on samples")]

    # transversal field vanishes near both ends
    ends = sm.x[(sm.x <= d1) | (sm.x >= length - d1)]
    Xe, Te = np.meshgrid(ends, sm.t, indexing="ij")
    xi2, xi3 = sm.xi[:, 0], sm.xi[:, 1]
    v2, v3 = vel.transversal(Xe[..., None], xi2, xi3, Te[..., None])
    results.append(_condition("velocity-support", np.hypot(v2, v3),
                              {"x1": Xe[..., None], "t": Te[..., None], "xi2": xi2, "xi3": xi3}))

    # x1-independent on [0, d1] x [0, d1]
    Si, Xi, Ti = sm.grid(x=sm.x[sm.x <= d1], t=sm.t[sm.t <= d1])
    inflow = vel.v1(Si, Xi, Ti)
    results.append(_condition("velocity-inflow-structure", np.abs(inflow - inflow[:, :1, :]),
                              {"s": Si, "x1": Xi, "t": Ti}))

    # right end: v1 = v(t) independent of s and x1, bounded below
    Sr, Xr, Tr = sm.grid(x=sm.x[sm.x >= length - d1])
    right = vel.v1(Sr, Xr, Tr)
    floor = vel.right_end_speed(sm.t)
    constants["varsigma0"] = float(np.min(floor))
    deviation = np.abs(right - floor[None, None, :]) + np.maximum(-floor, 0.0)[None, None, :]
    results.append(_condition("velocity-right-end", deviation, {"s": Sr, "x1": Xr, "t": Tr}))
    if constants["varsigma0"] <= 0.0:
        results[-1] = ConditionResult(name="velocity-right-end", passed=False, worst_value=constants["varsigma0"],
                                      worst_point={"x1": length}, note="right-end speed floor must be positive")

    high = cfg.high_peclet
    # positive characteristic speed at the inflow end
    S0, T0 = np.meshgrid(sm.s, sm.t, indexing="ij")
    from .limit_solver import lambda_speed

    lam = lambda_speed(S0, 0.0, T0, vel)
    results.append(_condition("positive-inflow-speed", np.where(lam > 0.0, 0.0, 1.0 - lam), {"s": S0, "t": T0},
                              required=not high, tol=0.0))
    # cone condition, second half: d_x v1 <= 0 for s >= 0
    dx = vel.dv1_dx(S, X, T)
    results.append(_condition("cone-condition-velocity", np.maximum(dx, 0.0), coords, required=not high))
    return results


def _interaction_conditions(cfg: ModelConfig, sm: _Sampler, constants: Dict[str, float]) -> List[ConditionResult]:
    inter, d1, length = cfg.interaction, cfg.delta1, cfg.length
    results: List[ConditionResult] = []
    left_x = sm.x[sm.x <= d1]
    right_x = sm.x[sm.x >= length - d1]

    support = np.zeros(0)
    support_coords: Dict[str, np.ndarray] = {}
    zero_t = np.zeros(0)
    zero_t_coords: Dict[str, np.ndarray] = {}
    matching2 = np.zeros(0)
    right_dep: List[np.ndarray] = []
    growth_c2, growth_c3, growth_c4 = 0.0, 0.0, 0.0
    hat_max = -np.inf
    hat_point: Dict[str, float] = {}
    all_xi = np.vstack([sm.mesh.nodes, sm.mesh.quad_points])
    ax2, ax3 = all_xi[:, 0], all_xi[:, 1]
    # loop over s to keep the sample tensors small
    for s in sm.s:
        X, T = np.meshgrid(sm.x, sm.t, indexing="ij")
        phi = inter.phi(s, X[..., None], ax2, ax3, T[..., None])
        left = np.abs(phi[sm.x <= d1])
        if left.size and left.max() > (support.max() if support.size else -1.0):
            support = left
            support_coords = {"s": np.full(left.shape, s), "x1": X[sm.x <= d1][..., None],
                              "t": T[sm.x <= d1][..., None], "xi2": ax2, "xi3": ax3}
        start = np.abs(phi[:, 0, :])
        if start.max() > (zero_t.max() if zero_t.size else -1.0):
            zero_t = start
            zero_t_coords = {"s": np.full(start.shape, s), "x1": sm.x[:, None], "xi2": ax2, "xi3": ax3}
        d1t = inter.dphi_dt(s, sm.x[:, None], ax2, ax3, 0.0)
        d2t = inter.d2phi_dt2(s, sm.x[:, None], ax2, ax3, 0.0)
        both = np.abs(d1t) + np.abs(d2t)
        if both.max() > (matching2.max() if matching2.size else -1.0):
            matching2 = both
        if right_x.size:
            Xr, Tr = np.meshgrid(right_x, sm.t, indexing="ij")
            right_dep.append(inter.phi(s, Xr[..., None], ax2, ax3, Tr[..., None]))
        size = np.abs(phi) + np.abs(inter.dphi_dx(s, X[..., None], ax2, ax3, T[..., None])) + \
            np.abs(inter.dphi_dt(s, X[..., None], ax2, ax3, T[..., None]))
        growth_c3 = max(growth_c3, float(size.max())) if s == 0.0 else growth_c3
        if s > 0.0:
            growth_c2 = max(growth_c2, float((size.max() - growth_c3) / s))
        growth_c4 = max(growth_c4, float(np.abs(inter.dphi_ds(s, X[..., None], ax2, ax3, T[..., None])).max()))
        from .cell_solver import reduce_interaction

        hat = reduce_interaction(s, X, T, cfg, sm.mesh)
        k = np.unravel_index(int(np.argmax(hat)), hat.shape)
        if hat[k] > hat_max:
            hat_max = float(hat[k])
            hat_point = {"s": float(s), "x1": float(X[k]), "t": float(T[k])}

    results.append(_condition("interaction-support", support, support_coords))
    if right_dep:
        stack = np.stack(right_dep)
        Xr, Tr = np.meshgrid(right_x, sm.t, indexing="ij")
        coords = {"s": sm.s[:, None, None, None], "x1": Xr[None, ..., None], "t": Tr[None, ..., None],
                  "xi2": ax2, "xi3": ax3}
        results.append(_condition("interaction-right-end", np.abs(stack - stack[:1]), coords))
    constants.update({"C2": growth_c2, "C3": growth_c3, "C4": growth_c4})
    results.append(ConditionResult(name="interaction-growth", passed=True, required=False,
                                   note="C2-C4 recorded in constants"))
    results.append(_condition("matching-conditions-interaction", zero_t, zero_t_coords))
    results.append(_condition("second-order-matching", matching2,
                              {"x1": sm.x[:, None], "xi2": ax2, "xi3": ax3}))
    results.append(ConditionResult(name="cone-condition-interaction", passed=bool(hat_max <= ZERO_TOL),
                                   worst_value=hat_max, worst_point=None if hat_max <= ZERO_TOL else hat_point,
                                   required=not cfg.high_peclet, note="homogenized interaction must be <= 0"))
    return results


def _boundary_conditions(cfg: ModelConfig, sm: _Sampler) -> List[ConditionResult]:
    bd = cfg.boundary
    q = bd.q(sm.t)
    results = [_condition("boundary-data", np.maximum(-q, 0.0), {"t": sm.t})]
    start = np.array([abs(float(bd.q(0.0))), abs(float(bd.dq(0.0)))])
    results.append(_condition("matching-conditions-boundary", start, {"order": np.array([0.0, 1.0])}))
    results.append(_condition("third-order-matching", np.array([abs(float(bd.d2q(0.0)))]), {"t": np.array([0.0])}))
    return results


def _beta_condition(cfg: ModelConfig) -> ConditionResult:
    beta = cfg.beta
    supported = beta == 1.0 or beta >= 3.0
    return ConditionResult(name="beta-mode", passed=supported, worst_value=beta, required=True,
                           note=None if supported else "beta in (1, 3) needs the intermediate correctors")


def validate_assumptions(cfg: ModelConfig, points: Optional[int] = None) -> ValidationReport:
    """
    Check every structural assumption on a deterministic sample grid.

    Conditions that only matter for the characteristic limit problem are informational
    in high-Peclet mode.

    Args:
        cfg: loaded scenario
        points: samples per (s, x1, t) axis; defaults to ``settings.SAMPLE_POINTS``

    Returns:
        ValidationReport with pass/fail per condition and the sampled constants
    """
    sm = _Sampler(cfg, points or settings.SAMPLE_POINTS)
    constants: Dict[str, float] = {}
    conditions = _velocity_conditions(cfg, sm, constants)
    conditions += _interaction_conditions(cfg, sm, constants)
    conditions += _boundary_conditions(cfg, sm)
    conditions.append(_beta_condition(cfg))
    passed = all(c.passed for c in conditions if c.required)
    report = ValidationReport(scenario=cfg.name, passed=passed, s_max=cfg.s_max, conditions=conditions,
                              constants=constants)
    failed = [c.name for c in report.failures()]
    if failed:
        logger.warning(f"Scenario {cfg.name} fails: {', '.join(failed)}")
    else:
        logger.info(f"Scenario {cfg.name} passes all {len(conditions)} assumption checks")
    return report


def require_valid(cfg: ModelConfig) -> ValidationReport:
    """Refuse scenarios whose report has failures."""
    report = validate_assumptions(cfg)
    if not report.passed:
        names = ",".join(c.name for c in report.failures())
        raise ConfigError(f"scenario '{cfg.name}' violates model assumptions", {"failed": names})
    return report
