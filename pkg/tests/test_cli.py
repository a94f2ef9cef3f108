import json

import pytest

from app.cli import main

from conftest import SMALL_GRID, SMALL_REFERENCE, make_document


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "linear.json"
    path.write_text(json.dumps(make_document(grid=SMALL_GRID, reference=SMALL_REFERENCE)), encoding="utf-8")
    return path


def test_validate_builtin(tmp_path):
    out = tmp_path / "out"
    assert main(["validate", "--scenario", "linear-advection", "--out", str(out), "--no-timestamp"]) == 0
    report = json.loads((out / "linear-advection-validation.json").read_text(encoding="utf-8"))
    assert report["passed"] is True


def test_validate_writes_the_report_before_failing(tmp_path, capsys):
    path = tmp_path / "quadratic.json"
    path.write_text(json.dumps(make_document(boundary={"catalog": "quadratic", "params": {}})), encoding="utf-8")
    out = tmp_path / "out"
    assert main(["validate", "--config", str(path), "--out", str(out), "--no-timestamp"]) == 2
    report = json.loads((out / "linear-advection-validation.json").read_text(encoding="utf-8"))
    assert report["passed"] is False
    assert "error=config" in capsys.readouterr().err


def test_beta_override_is_validated(tmp_path):
    assert main(["validate", "--scenario", "linear-advection", "--beta", "2", "--out", str(tmp_path)]) == 2


def test_bad_epsilon_list(tmp_path, capsys):
    assert main(["validate", "--scenario", "linear-advection", "--epsilons", "0.1,abc", "--out", str(tmp_path)]) == 2
    assert "key=epsilons" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "absent.json")]) == 2


def test_jobs_must_be_positive(tmp_path):
    assert main(["study", "--scenario", "linear-advection", "--jobs", "0", "--out", str(tmp_path)]) == 2


def test_layers_need_upstream_artifacts(small_config, tmp_path, capsys):
    assert main(["layers", "--config", str(small_config), "--out", str(tmp_path)]) == 4
    assert "error=dependency" in capsys.readouterr().err


def test_staged_pipeline(small_config, tmp_path):
    out = tmp_path / "out"
    common = ["--config", str(small_config), "--out", str(out), "--no-timestamp"]
    assert main(["limit"] + common) == 0
    summary = json.loads((out / "linear-advection-limit.json").read_text(encoding="utf-8"))
    assert summary["T1"] == pytest.approx(1.0)
    assert summary["mode"] == "characteristics"

    assert main(["cell"] + common) == 0
    assert (out / "linear-advection-cell-u1.csv").exists()
    assert (out / "linear-advection-cell-eigenbasis.csv").exists()

    assert main(["layers"] + common) == 0
    decay = json.loads((out / "linear-advection-layers.json").read_text(encoding="utf-8"))
    assert decay["pi0"]["rate"] == pytest.approx(decay["pi0"]["analytic_rate"], rel=1e-3)

    assert main(["assemble"] + common) == 0
    fits = json.loads((out / "linear-advection-assemble-first.json").read_text(encoding="utf-8"))
    assert set(fits) == {"0.2", "0.1", "0.05", "0.025"}
    assert all(fit["left"] < 1e-10 for fit in fits.values())


def test_assemble_with_pipeline_flag(small_config, tmp_path):
    args = ["assemble", "--config", str(small_config), "--order", "leading", "--pipeline",
            "--epsilons", "0.1", "--out", str(tmp_path), "--no-timestamp"]
    assert main(args) == 0
    assert (tmp_path / "linear-advection-assemble-leading-eps0.1.csv").exists()


@pytest.mark.slow
def test_study_output_does_not_depend_on_jobs(small_config, tmp_path):
    outputs = []
    for jobs in ("1", "2"):
        out = tmp_path / f"jobs{jobs}"
        args = ["study", "--config", str(small_config), "--jobs", jobs, "--out", str(out), "--no-timestamp"]
        assert main(args) == 0
        outputs.append({path.name: path.read_bytes() for path in sorted(out.iterdir())})
    assert outputs[0]
    assert outputs[0] == outputs[1]
