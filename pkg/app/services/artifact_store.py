"""
On-disk cache of expensive pipeline stages, keyed by a content hash of the scenario.
"""
import logging
import os
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from ..core.config import settings
from .cell_solver import CellField
from .gridded import TimeAxis
from .limit_solver import LimitSolution
from .model_config import ModelConfig

logger = logging.getLogger(__name__)


class ArtifactStore:
    """npz files under one directory; a key names one stage of one scenario."""

    def __init__(self, root: Optional[Union[str, Path]] = None):
        self.root = Path(root or settings.CACHE_DIR)

    def path(self, key: str) -> Path:
        return self.root / f"{key}.npz"

    def save(self, key: str, **arrays: np.ndarray) -> Path:
        os.makedirs(self.root, exist_ok=True)
        target = self.path(key)
        np.savez_compressed(target, **arrays)
        logger.debug(f"Stored artifact {target}")
        return target

    def load(self, key: str) -> Optional[Dict[str, np.ndarray]]:
        target = self.path(key)
        if not target.exists():
            return None
        try:
            with np.load(target, allow_pickle=False) as data:
                return {name: data[name] for name in data.files}
        except (OSError, ValueError) as e:
            logger.warning(f"Ignoring unreadable artifact {target}: {e}")
            return None

    def save_limit(self, cfg: ModelConfig, lim: LimitSolution) -> Path:
        return self.save(cfg.cache_key("limit"), x=lim.x, t=lim.t, w0=lim.w0, w0_x=lim.w0_x, w0_t=lim.w0_t,
                         w0_xx=lim.w0_xx, T1=np.array(lim.T1), mode=np.array(lim.mode))

    def load_limit(self, cfg: ModelConfig) -> Optional[LimitSolution]:
        data = self.load(cfg.cache_key("limit"))
        if data is None:
            return None
        logger.info(f"Loaded cached limit solution for '{cfg.name}'")
        return LimitSolution(x=data["x"], axis=TimeAxis(data["t"]), w0=data["w0"], w0_x=data["w0_x"],
                             w0_t=data["w0_t"], w0_xx=data["w0_xx"], T1=float(data["T1"]), mode=str(data["mode"]))

    def save_cell(self, cfg: ModelConfig, stage: str, cell: CellField) -> Path:
        arrays = {"x": cell.x, "t": cell.axis.t, "values": cell.values, "dx": cell.dx, "defects": cell.defects}
        if cell.dt is not None:
            arrays["dt"] = cell.dt
        if cell.coupling is not None:
            arrays["coupling"] = cell.coupling
        return self.save(cfg.cache_key(stage), **arrays)

    def load_cell(self, cfg: ModelConfig, stage: str) -> Optional[CellField]:
        data = self.load(cfg.cache_key(stage))
        if data is None:
            return None
        logger.info(f"Loaded cached {stage} for '{cfg.name}'")
        return CellField(x=data["x"], axis=TimeAxis(data["t"]), values=data["values"], dx=data["dx"],
                         dt=data.get("dt"), defects=data["defects"], coupling=data.get("coupling"))
