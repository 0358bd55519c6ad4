import math
import os
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

import validity_domain
from validity_domain import config as config_module
from validity_domain.config import default_config
from validity_domain.datasets import CASE_STUDIES, LagSpec
from validity_domain.errors import ConfigurationError, StageError
from validity_domain.hull import FacetSystem, hull_margin
from validity_domain.ocsvm import OneClassSvmModel, decision
from validity_domain.pipeline import (
    HULL,
    SVM,
    analyze_step,
    generate_step,
    hull_step,
    optimize_step,
    revalidate,
    run_case_study_suite,
    run_pipeline,
    run_sru,
    solve_options,
    sru_inputs,
    train_svm_step,
)
from validity_domain.solver import FS, RS, read_report
from validity_domain.utils import digest_artifacts, write_json


def _config(tmp_path, shape="box", model=HULL, n_points=120, **solver):
    c = default_config()
    return replace(
        c,
        run=replace(c.run, name=shape, out_dir=str(tmp_path)),
        dataset=replace(c.dataset, shape=shape, n_points=n_points),
        tda=replace(c.tda, subsample_cap=60),
        validity=replace(c.validity, model=model),
        svm=replace(c.svm, nu=0.1, gamma=0.5),
        surrogate=replace(c.surrogate, kind="peaks"),
        solver=replace(c.solver, max_nodes=solver.get("max_nodes", 300), mode=solver.get("mode", RS)),
    )


def test_solve_options_forward_the_solver_section():
    c = default_config()
    c = replace(c, solver=replace(c.solver, local_every=0, log_every=50, relax_steps=2, max_nodes=10))
    options = solve_options(c, mode=FS, trace_path="trace.csv")
    assert options.mode == FS
    assert options.local_every == 0 and options.log_every == 50
    assert options.relax_steps == 2 and options.max_nodes == 10
    assert options.seed == c.run.seed and options.trace_path == "trace.csv"
    defaults = solve_options(default_config())
    assert defaults.mode == RS and defaults.local_every == 200 and defaults.log_every == 2000


def test_run_with_hull(tmp_path):
    result = run_pipeline(_config(tmp_path))
    assert result.model_kind == HULL
    assert isinstance(result.validity, FacetSystem)
    assert result.report.x_star is not None
    assert hull_margin(result.validity, result.report.x_star) <= 1e-9
    assert result.model_error < 1e-12
    assert result.revalidation.passed
    for name in ("points.csv", "diagram.csv", "diagram.svg", "summary.json", "facets.csv", "solve.json",
                 "overlay.svg", "table.txt", "table.csv"):
        assert os.path.exists(os.path.join(result.directory, name)), name
    table = pd.read_csv(os.path.join(result.directory, "table.csv"))
    assert table.loc[0, "model"] == HULL
    assert bool(table.loc[0, "revalidated"])


def test_run_with_svm(tmp_path):
    result = run_pipeline(_config(tmp_path, shape="two_ovals", model=SVM))
    assert result.model_kind == SVM
    assert isinstance(result.validity, OneClassSvmModel)
    assert result.validity.gamma == 0.5
    assert result.validity_details["gamma_diagnostics"] == [[0.5, result.validity.n_support]]
    assert decision(result.validity, result.report.x_star) >= -1e-6 - 1e-12
    assert result.revalidation.passed
    assert os.path.exists(os.path.join(result.directory, "model.json"))


def test_runs_are_reproducible(tmp_path):
    first = run_pipeline(_config(tmp_path / "a", shape="two_ovals", model=SVM))
    second = run_pipeline(_config(tmp_path / "b", shape="two_ovals", model=SVM))
    assert digest_artifacts(first.directory) == digest_artifacts(second.directory)
    a = read_report(os.path.join(first.directory, "solve.json"))
    b = read_report(os.path.join(second.directory, "solve.json"))
    assert a.to_dict(timings=False) == b.to_dict(timings=False)


def test_revalidation_detects_tampering(tmp_path):
    result = run_pipeline(_config(tmp_path))
    solve_path = os.path.join(result.directory, "solve.json")
    facets_path = os.path.join(result.directory, "facets.csv")
    assert revalidate(solve_path, facets_path).passed
    payload = result.report.to_dict()
    payload["f_star"] = result.report.f_star + 1.0
    tampered = os.path.join(result.directory, "tampered.json")
    write_json(tampered, payload)
    check = revalidate(tampered, facets_path)
    assert not check.passed
    assert check.f_recomputed == pytest.approx(result.report.f_star, abs=1e-12)


def test_single_steps(tmp_path):
    c = _config(tmp_path)
    cloud = generate_step(c)
    assert cloud.n_points == 120
    topology = analyze_step(c)
    assert topology.analysed.n_points == 60
    fs = hull_step(c)
    assert fs.f >= 3
    report = optimize_step(c)
    assert report.x_star is not None
    assert hull_margin(fs, report.x_star) <= 1e-9
    model = train_svm_step(c)
    assert os.path.exists(os.path.join(tmp_path, "box", "svm.json"))
    report = optimize_step(c, validity_path=os.path.join(tmp_path, "box", "model.json"))
    assert decision(model, report.x_star) >= -1e-6 - 1e-12


def test_optimize_needs_a_validity_model(tmp_path):
    with pytest.raises(StageError) as e:
        optimize_step(_config(tmp_path))
    assert isinstance(e.value.cause, ConfigurationError)
    assert e.value.exit_code == 2


def test_stage_errors_name_the_stage(tmp_path):
    c = _config(tmp_path)
    c = replace(c, dataset=replace(c.dataset, csv=str(tmp_path / "missing.csv")))
    with pytest.raises(StageError) as e:
        run_pipeline(c)
    assert e.value.stage == "Loading the training inputs"
    assert e.value.exit_code == 3


def test_sru_inputs():
    inputs, fixed = sru_inputs(LagSpec(("a1", "a2", "a3", "a4", "a5")))
    assert len(inputs) == 20
    assert len(fixed) == 19
    assert "a3[k]" not in fixed
    with pytest.raises(ConfigurationError):
        sru_inputs(LagSpec(("a1", "a2")))


def test_sru_needs_data(tmp_path):
    c = default_config()
    with pytest.raises(ConfigurationError):
        run_sru(replace(c, run=replace(c.run, out_dir=str(tmp_path))))


@pytest.mark.slow
@pytest.mark.skipif("VALIDITY_DOMAIN_SRU_CSV" not in os.environ, reason="SRU plant data not available")
def test_sru_control_step(tmp_path):
    c = default_config()
    c = replace(
        c,
        run=replace(c.run, out_dir=str(tmp_path)),
        tda=replace(c.tda, subsample_cap=200),
        svm=replace(c.svm, gamma=0.5, nu=0.05),
        sru=replace(c.sru, csv=os.environ["VALIDITY_DOMAIN_SRU_CSV"], max_epochs=50, max_train_rows=1000),
    )
    result = run_sru(c)
    assert result.report.x_star is not None
    assert 0.0 <= result.control <= 1.0
    assert result.objective >= 0.0
    assert result.objective == pytest.approx(abs(result.h2s - 2.0 * result.so2), abs=1e-9)
    assert os.path.exists(os.path.join(result.directory, "sru.txt"))


@pytest.mark.slow
def test_case_study_suite(tmp_path):
    c = default_config()
    c = replace(
        c,
        run=replace(c.run, out_dir=str(tmp_path)),
        dataset=replace(c.dataset, n_points=200),
        svm=replace(c.svm, gamma=0.5, nu=0.05),
        surrogate=replace(c.surrogate, max_epochs=200),
        solver=replace(c.solver, time_limit=120.0),
    )
    result = run_case_study_suite(7, c)
    assert list(result.models["shape"]) == list(CASE_STUDIES)
    assert len(result.solutions) == len(result.timings) == 2 * len(CASE_STUDIES)
    assert result.revalidated
    for name in ("models", "solutions", "timings"):
        assert os.path.exists(os.path.join(result.directory, f"{name}.txt"))
    for (shape, kind, mode), report in result.reports.items():
        assert mode in (RS, FS)
        if report.x_star is not None:
            assert np.all(np.isfinite(report.x_star))


def test_main_exit_codes(tmp_path, monkeypatch):
    monkeypatch.setattr(config_module, "config_file_path", str(tmp_path / "absent.conf"))
    common = ["-q", "-o", str(tmp_path), "--n-points", "60", "--model", "hull", "--surrogate", "peaks"]

    with pytest.raises(SystemExit) as e:
        validity_domain.main(["run", "--shape", "nope"] + common)
    assert e.value.code == 2

    with pytest.raises(SystemExit) as e:
        validity_domain.main(["run", "--time-limit", "1e-9"] + common)
    assert e.value.code == 4

    with pytest.raises(SystemExit) as e:
        validity_domain.main(["run", "--csv", str(tmp_path / "missing.csv")] + common)
    assert e.value.code == 3

    validity_domain.main(["run", "--max-nodes", "50"] + common)
    assert os.path.exists(os.path.join(tmp_path, "run", "solve.json"))
    assert not math.isnan(read_report(os.path.join(tmp_path, "run", "solve.json")).f_star)
