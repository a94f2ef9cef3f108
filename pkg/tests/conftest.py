import copy

import pytest

from app.core.config import settings
from app.services.scenario_service import config_from_dict, scenario_document

# coarse enough for the fast suite; h = dt keeps characteristics on grid nodes
SMALL_GRID = {"nx": 40, "nt": 10, "nxi": 8, "modes": 6, "nzeta": 400}
SMALL_REFERENCE = {"nx": 40, "nr": 8, "grading": 1.0}


def make_document(name="linear-advection", **replace):
    """Built-in document with whole top-level keys replaced (no merging of catalog params)."""
    document = scenario_document(name)
    for key, value in replace.items():
        document[key] = copy.deepcopy(value)
    return document


def make_config(name="linear-advection", small=True, **replace):
    if small:
        replace.setdefault("grid", SMALL_GRID)
        replace.setdefault("reference", SMALL_REFERENCE)
    return config_from_dict(make_document(name, **replace))


@pytest.fixture(autouse=True)
def isolated_dirs(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setattr(settings, "OUTPUT_DIR", str(tmp_path / "results"))
    return tmp_path


@pytest.fixture
def small_linear():
    return make_config()


@pytest.fixture
def zero_data():
    return make_config(interaction={"catalog": "zero", "params": {}}, boundary={"catalog": "zero", "params": {}})
