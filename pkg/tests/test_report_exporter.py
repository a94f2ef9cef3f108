import json

import numpy as np
import pandas as pd
import pytest

from app.core.errors import ConfigError
from app.models.study_models import TABLE_COLUMNS, ConvergenceTable, ErrorRow, SlopeFit
from app.services.cell_solver import neumann_eigenbasis, section_mesh
from app.services.limit_solver import solve_limit_problem
from app.services.report_exporter import (dump_eigenbasis, dump_limit, generate_markdown, output_stem,
                                          write_report)

EPSILONS = [0.2, 0.1, 0.05]


def study_table(rows=True):
    return ConvergenceTable(
        scenario="linear-advection",
        beta=1.0,
        mode="standard",
        horizon=1.0,
        rows=[ErrorRow(epsilon=e, sup_first=e ** 2, sup_leading=e, energy_first=e ** 1.5, avg_leading=e,
                       T1=1.0) for e in EPSILONS] if rows else [],
        slopes={"sup_first": SlopeFit(kind="sup_first", slope=2.0, residual=0.0, reliable=True, epsilons=EPSILONS),
                "avg_leading": SlopeFit(kind="avg_leading", note="zero error, slope undefined")},
        metadata={"nx": 200.0},
    )


def test_output_stem():
    assert output_stem("linear-advection", "study", False) == "linear-advection-study"
    stamped = output_stem("linear-advection", "study", True)
    assert stamped.startswith("linear-advection-study-")
    assert len(stamped) == len("linear-advection-study-") + len("20260101-120000")


def test_error_rows_must_be_finite():
    with pytest.raises(ValueError):
        ErrorRow(epsilon=0.1, sup_first=float("nan"), sup_leading=0.0, energy_first=0.0, avg_leading=0.0, T1=1.0)


def test_write_report(tmp_path):
    paths = write_report(study_table(), tmp_path, timestamp=False)
    assert paths["csv"].name == "linear-advection-study.csv"

    frame = pd.read_csv(paths["csv"])
    assert tuple(frame.columns) == TABLE_COLUMNS
    np.testing.assert_allclose(frame["sup_first"], [e ** 2 for e in EPSILONS], rtol=1e-9)

    summary = json.loads(paths["json"].read_text(encoding="utf-8"))
    assert list(summary) == sorted(summary)
    assert summary["slopes"]["sup_first"]["slope"] == 2.0
    assert summary["T1"] == [1.0, 1.0, 1.0]

    markdown = paths["markdown"].read_text(encoding="utf-8")
    assert markdown.startswith("# Convergence study: linear-advection")
    assert "Generated on" not in markdown
    assert "| sup_first | 2.000 | 0.000 | ok |" in markdown
    assert "| avg_leading | - | - | zero error, slope undefined |" in markdown


def test_markdown_with_timestamp():
    assert "Generated on" in generate_markdown(study_table(), timestamp=True)


def test_empty_table_is_refused(tmp_path):
    with pytest.raises(ConfigError):
        write_report(study_table(rows=False), tmp_path)


def test_limit_and_eigenbasis_dumps(small_linear, tmp_path):
    mesh = section_mesh(small_linear)
    lim = solve_limit_problem(small_linear, mesh)
    frame = pd.read_csv(dump_limit(lim, tmp_path / "limit.csv"))
    assert list(frame.columns) == ["x1", "t", "w0"]
    assert len(frame) == len(lim.x) * len(lim.t)

    basis = neumann_eigenbasis(mesh, 4)
    frame = pd.read_csv(dump_eigenbasis(basis, tmp_path / "nested" / "eigen.csv"))
    assert list(frame["p"]) == [0, 1, 2, 3, 4]
    assert frame["lambda"].iloc[0] == 0.0
