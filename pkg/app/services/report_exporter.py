import json
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

import numpy as np
import pandas as pd

from ..core.errors import ConfigError
from ..models.study_models import TABLE_COLUMNS, ConvergenceTable
from .boundary_layer import LayerSet
from .cell_solver import CellField, NeumannEigenbasis
from .cross_section import CrossSectionMesh
from .limit_solver import LimitSolution
from .reference_solver import ReferenceSolution

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10e"

PathLike = Union[str, Path]


def output_stem(name: str, kind: str, timestamp: bool) -> str:
    """File stem from the scenario name; the timestamp suffix is optional for reproducible runs."""
    stem = f"{name}-{kind}"
    if timestamp:
        stem += datetime.now().strftime("-%Y%m%d-%H%M%S")
    return stem


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    os.makedirs(path.parent, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def write_json(data: dict, path: PathLike) -> Path:
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def generate_markdown(table: ConvergenceTable, timestamp: bool = True) -> str:
    """
    Human-readable summary of a convergence table.

    Args:
        table: completed study table
        timestamp: include the generation time (omitted for reproducible output)

    Returns:
        String containing the Markdown summary
    """
    lines = [f"# Convergence study: {table.scenario}", ""]
    if timestamp:
        lines += [f"Generated on {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}", ""]
    lines += [f"- mode: {table.mode} (beta = {table.beta:g})",
              f"- common horizon: {table.horizon:.6g}",
              "",
              "## Errors",
              "",
              "| " + " | ".join(TABLE_COLUMNS) + " |",
              "|" + "---|" * len(TABLE_COLUMNS)]
    for row in table.rows:
        lines.append("| " + " | ".join(f"{getattr(row, col):.4e}" for col in TABLE_COLUMNS) + " |")
    lines += ["", "## Slopes", "", "| error | slope | residual | status |", "|---|---|---|---|"]
    for kind, fit in table.slopes.items():
        slope = "-" if fit.slope is None else f"{fit.slope:.3f}"
        residual = "-" if fit.residual is None else f"{fit.residual:.3f}"
        status = "ok" if fit.reliable else (fit.note or "unreliable")
        lines.append(f"| {kind} | {slope} | {residual} | {status} |")
    return "\n".join(lines) + "\n"


def write_report(table: ConvergenceTable, out_dir: PathLike, timestamp: bool = True) -> Dict[str, Path]:
    """
    Write the study table as CSV, the slopes and metadata as JSON and a Markdown summary.

    Returns:
        paths keyed by "csv", "json" and "markdown"
    """
    if not table.rows:
        raise ConfigError("study table is empty, nothing to write", {"scenario": table.scenario})
    out_dir = Path(out_dir)
    stem = output_stem(table.scenario, "study", timestamp)
    frame = pd.DataFrame([row.model_dump() for row in table.rows], columns=list(TABLE_COLUMNS))
    paths = {"csv": _write_frame(frame, out_dir / f"{stem}.csv")}
    summary = {
        "scenario": table.scenario,
        "beta": table.beta,
        "mode": table.mode,
        "horizon": table.horizon,
        "slopes": {kind: fit.model_dump() for kind, fit in table.slopes.items()},
        "metadata": table.metadata,
        "T1": [row.T1 for row in table.rows],
    }
    paths["json"] = write_json(summary, out_dir / f"{stem}.json")
    markdown = out_dir / f"{stem}.md"
    markdown.write_text(generate_markdown(table, timestamp), encoding="utf-8")
    paths["markdown"] = markdown
    return paths


# ---------------------------------------------------------------------------
# Plot-ready dumps
# ---------------------------------------------------------------------------

def dump_limit(lim: LimitSolution, path: PathLike, w1: Optional[np.ndarray] = None) -> Path:
    """Columns x1, t, w0 (and w1)."""
    xx, tt = np.meshgrid(lim.x, lim.t, indexing="ij")
    data = {"x1": xx.ravel(), "t": tt.ravel(), "w0": lim.w0.ravel()}
    if w1 is not None:
        data["w1"] = w1.ravel()
    return _write_frame(pd.DataFrame(data), Path(path))


def dump_cell(cell: CellField, mesh: CrossSectionMesh, path: PathLike, stride: int = 1) -> Path:
    """Columns x1, t, xi2, xi3, value; ``stride`` thins the (x1, t) grid."""
    xs = np.arange(0, len(cell.x), stride)
    ts = np.arange(0, len(cell.axis.t), stride)
    block = cell.values[np.ix_(xs, np.arange(mesh.n_nodes), ts)]  # (x, N, t)
    ii, nn, kk = np.meshgrid(xs, np.arange(mesh.n_nodes), ts, indexing="ij")
    frame = pd.DataFrame({"x1": cell.x[ii].ravel(), "t": cell.axis.t[kk].ravel(),
                          "xi2": mesh.xi2[nn].ravel(), "xi3": mesh.xi3[nn].ravel(), "value": block.ravel()})
    return _write_frame(frame, Path(path))


def dump_eigenbasis(basis: NeumannEigenbasis, path: PathLike) -> Path:
    frame = pd.DataFrame({"p": np.arange(len(basis.eigenvalues)), "lambda": basis.eigenvalues})
    return _write_frame(frame, Path(path))


def dump_layers(layers: LayerSet, zeta: np.ndarray, path: PathLike) -> Path:
    """Columns term, zeta1, t, value: the cross-section maximum of |term| per (zeta1, t)."""
    frames = []
    terms = [layers.pi0, layers.pi1_hat, layers.pi1_tilde] + ([layers.pi2] if layers.pi2 is not None else [])
    for term in terms:
        for tk in term.axis.t:
            values = np.abs(term.values(zeta, float(tk))).max(axis=1)
            frames.append(pd.DataFrame({"term": term.name, "zeta1": zeta, "t": float(tk), "value": values}))
    return _write_frame(pd.concat(frames, ignore_index=True), Path(path))


def dump_reference(sol: ReferenceSolution, path: PathLike) -> Path:
    """Columns x1, r, t, u."""
    tt, xx, rr = np.meshgrid(sol.t, sol.grid.x, sol.grid.r, indexing="ij")
    frame = pd.DataFrame({"x1": xx.ravel(), "r": rr.ravel(), "t": tt.ravel(), "u": sol.u.ravel()})
    return _write_frame(frame, Path(path))


def dump_samples(x: np.ndarray, r: np.ndarray, times: Iterable[float], values: np.ndarray, path: PathLike) -> Path:
    """Columns x1, r, t, value for an approximation sampled as (nt, len(x), len(r))."""
    tt, xx, rr = np.meshgrid(np.asarray(list(times)), x, r, indexing="ij")
    frame = pd.DataFrame({"x1": xx.ravel(), "r": rr.ravel(), "t": tt.ravel(), "value": np.asarray(values).ravel()})
    return _write_frame(frame, Path(path))
