"""
Orchestration of the three-step method: topology, validity model, global optimization.

A run writes its artifacts to ``<out_dir>/<name>/``::

    points.csv      training inputs
    diagram.csv     persistence pairs
    diagram.svg     persistence diagram
    summary.json    topology summary and the validity model actually used
    facets.csv      convex-hull validity model, or
    model.json      one-class SVM validity model
    ann.json        surrogate network (when the surrogate is trained)
    solve.json      solve report
    overlay.svg     validity boundary and optimum (two-dimensional runs)
    table.txt       human-readable summary (also as table.csv)
"""

import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .ann import MlpModel, TrainConfig, load_mlp, mlp_expression, peaks, peaks_expression, save_mlp, train_mlp
from .config import RunConfig, default_config
from .datasets import (
    CASE_STUDIES,
    DatasetSpec,
    LagSpec,
    PointCloud,
    build_lag_features,
    generate_dataset,
    lagged_targets,
    load_timeseries_csv,
    read_cloud_csv,
    split_train,
    write_cloud_csv,
)
from .errors import ConfigurationError, DataFormatError, StageError, ValidityDomainError
from .hull import FacetSystem, build_hull, export_facets, import_facets
from .log import info, stage, warn
from .ocsvm import KernelSpec, OneClassSvmModel, load_model, save_model, select_gamma, train, validate_nu_property
from .plots import plot_persistence_diagram, plot_validity_overlay
from .relax import Box, Const, Expr, Var, absolute, evaluate
from .solver import FS, INFEASIBLE, RS, Problem, SolveOptions, SolveReport, read_report, solve, write_report
from .tda import CONVEX_HULL, ONE_CLASS_SVM, TdaSettings, TopologyReport, analyze, write_diagram_csv
from .utils import ensure_dir, write_json

Validity = Union[FacetSystem, OneClassSvmModel]

AUTO = "auto"
HULL = "hull"
SVM = "svm"
MODEL_KINDS = (AUTO, HULL, SVM)

_RECOMMENDED = {CONVEX_HULL: HULL, ONE_CLASS_SVM: SVM}

SUITE_SUBSAMPLE_CAP = 160
"""TDA subsample cap of the case-study suite"""

REVALIDATION_TOL = 1e-9

SRU_DATASET_URL = "https://www.openml.org/d/23515"

SRU_OPERATING_POINT: Tuple[Tuple[Optional[float], ...], ...] = (
    (0.627, 0.6215, 0.623, 0.622),
    (0.770, 0.769, 0.754, 0.769),
    (None, 0.174, 0.192, 0.198),
    (0.376, 0.399, 0.415, 0.410),
    (0.513, 0.512, 0.511, 0.504),
)
"""Observed lags (0, 5, 7, 9) of the five SRU inputs; ``None`` marks the free control input"""

SRU_ANCHOR_POINTS = 201


@contextmanager
def _stage(name: str):
    """Log a stage and wrap its failures into :class:`StageError`."""
    try:
        with stage(name):
            yield
    except StageError:
        raise
    except (ValidityDomainError, ValueError, ArithmeticError, OSError) as e:
        raise StageError(name, e) from e


# ---------------------------------------------------------------------------
# Settings conversion
# ---------------------------------------------------------------------------


def tda_settings(config: RunConfig, subsample_cap: Optional[int] = None) -> TdaSettings:
    """TDA settings of a run configuration, with an optional tighter subsample cap."""
    t = config.tda
    cap = t.subsample_cap if subsample_cap is None else min(t.subsample_cap, subsample_cap)
    return TdaSettings(t.max_eps, cap, t.threshold, config.run.seed, t.method, t.max_edges)


def solve_options(config: RunConfig, mode: Optional[str] = None, trace_path: Optional[str] = None) -> SolveOptions:
    """Solver settings of a run configuration; ``mode`` overrides the configured one."""
    s = config.solver
    return SolveOptions(
        mode=mode or s.mode,
        abs_tol=s.abs_tol,
        rel_tol=s.rel_tol,
        time_limit=s.time_limit,
        feas_tol=s.feas_tol,
        max_nodes=s.max_nodes,
        relax_steps=s.relax_steps,
        local_starts=s.local_starts,
        local_every=s.local_every,
        seed=config.run.seed,
        trace_path=trace_path,
        log_every=s.log_every,
    )


def train_config(config: RunConfig, max_epochs: Optional[int] = None) -> TrainConfig:
    """Network training settings of a run configuration."""
    s = config.surrogate
    return TrainConfig(
        batch_size=s.batch_size,
        max_epochs=max_epochs or s.max_epochs,
        learning_rate=s.learning_rate,
        seed=config.run.seed,
    )


def run_directory(config: RunConfig, name: Optional[str] = None) -> str:
    """Create and return ``<out_dir>/<name>``."""
    return ensure_dir(os.path.join(config.run.out_dir, name or config.run.name))


# ---------------------------------------------------------------------------
# Stage building blocks
# ---------------------------------------------------------------------------


def load_cloud(config: RunConfig) -> PointCloud:
    """Training inputs: the configured CSV, or a generated case study."""
    d = config.dataset
    if d.csv:
        try:
            return read_cloud_csv(d.csv)
        except FileNotFoundError:
            raise DataFormatError(f'Point-cloud file "{d.csv}" not found.') from None
    return generate_dataset(DatasetSpec(d.shape, d.n_points, d.noise_sigma, config.run.seed))


def choose_model(config: RunConfig, topology: TopologyReport) -> str:
    """
    Validity model kind: the configured override, or the topology's recommendation.

    >>> from validity_domain.tda import TopologySummary
    >>> summary = TopologySummary(2, 0, 1.0, (), ONE_CLASS_SVM)
    >>> report = TopologyReport(None, summary, None)
    >>> choose_model(default_config(), report)
    'svm'
    """
    kind = config.validity.model
    if kind not in MODEL_KINDS:
        raise ConfigurationError(f'Unknown validity model "{kind}"; expected one of {", ".join(MODEL_KINDS)}.')
    if kind == AUTO:
        return _RECOMMENDED[topology.summary.recommendation]
    if kind != _RECOMMENDED[topology.summary.recommendation]:
        info(f"Using the {kind} model; the topology recommends {topology.summary.recommendation}.")
    return kind


def fit_validity(cloud: PointCloud, kind: str, config: RunConfig) -> Tuple[Validity, dict]:
    """
    Fit a validity model of the given kind to the training cloud.

    Parameters
    ----------
    cloud : PointCloud
        Training inputs.
    kind : str
        ``hull`` or ``svm``.
    config : RunConfig
        Facet import path and SVM settings are read from here.

    Returns
    -------
    (FacetSystem or OneClassSvmModel, dict)
        The model and JSON-friendly details (facet count, or gamma selection
        and the nu-property check).
    """
    if kind == HULL:
        if config.validity.facets:
            fs = import_facets(config.validity.facets, cloud)
        else:
            fs, _ = build_hull(cloud)
        return fs, {"model": HULL, "n_facets": fs.f}
    if kind != SVM:
        raise ConfigurationError(f'Cannot fit a validity model of kind "{kind}".')
    s = config.svm
    if s.gamma is not None:
        model = train(cloud, s.nu, KernelSpec(s.gamma), s.tol, s.max_passes)
        diagnostics, plateau_reached = [(s.gamma, model.n_support)], True
    else:
        selection = select_gamma(cloud, s.nu, s.gamma_schedule, s.plateau, s.tol, s.max_passes)
        model, diagnostics, plateau_reached = selection.model, selection.diagnostics, selection.plateau_reached
    nu_check = validate_nu_property(model, cloud, s.tol)
    if not nu_check.passed:
        warn(
            f"nu-property check failed: outlier fraction {nu_check.outlier_fraction:.4f}, "
            f"support-vector fraction {nu_check.sv_fraction:.4f} for nu={model.nu:g}."
        )
    details = {
        "model": SVM,
        "gamma": model.gamma,
        "n_support": model.n_support,
        "gamma_diagnostics": [list(d) for d in diagnostics],
        "plateau_reached": plateau_reached,
        "nu_check": nu_check.to_dict(),
    }
    return model, details


def save_validity(directory: str, validity: Validity, stem: Optional[str] = None) -> str:
    """Write a validity model (``facets.csv`` or ``model.json`` unless ``stem`` is given); return its path."""
    if isinstance(validity, FacetSystem):
        path = os.path.join(directory, f"{stem or 'facets'}.csv")
        export_facets(path, validity)
    else:
        path = os.path.join(directory, f"{stem or 'model'}.json")
        save_model(path, validity)
    return path


def load_validity(path: str) -> Validity:
    """Read a validity model written by :func:`save_validity`."""
    if path.endswith(".json"):
        return load_model(path)
    return import_facets(path)


def build_surrogate(cloud: PointCloud, config: RunConfig, directory: Optional[str] = None) -> Tuple[Expr, Optional[MlpModel]]:
    """
    Objective of a two-dimensional case study.

    With ``kind = peaks`` this is the analytic peaks function. With
    ``kind = ann`` a network is trained on peaks sampled at the training
    inputs (and written to ``<directory>/ann.json``).
    """
    if cloud.dim != 2:
        raise ConfigurationError(f"The peaks surrogate needs two-dimensional inputs, got {cloud.dim}.")
    x = [Var(0), Var(1)]
    kind = config.surrogate.kind
    if kind == "peaks":
        return peaks_expression(*x), None
    if kind != "ann":
        raise ConfigurationError(f'Unknown surrogate "{kind}"; expected "peaks" or "ann".')
    targets = peaks(cloud.points[:, 0], cloud.points[:, 1])
    log_path = os.path.join(directory, "training.csv") if directory else None
    model = train_mlp(cloud.points, targets, config.surrogate.hidden, train_config(config), log_path=log_path)
    if directory:
        save_mlp(os.path.join(directory, "ann.json"), model)
    return mlp_expression(model, x), model


def cloud_box(cloud: PointCloud) -> Box:
    """Bounding box of the training inputs."""
    return Box(cloud.points.min(axis=0), cloud.points.max(axis=0))


def model_error(objective: Expr, x_star) -> float:
    """
    Surrogate error ``|f(x*) - peaks(x*)|`` at a two-dimensional point.

    >>> model_error(peaks_expression(Var(0), Var(1)), [0.3, -0.2]) < 1e-12
    True
    """
    if x_star is None:
        return math.nan
    x = np.asarray(x_star, dtype=float)
    return abs(evaluate(objective, x)[0] - float(peaks(x[0], x[1])))


# ---------------------------------------------------------------------------
# Re-validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Revalidation:
    """Comparison of a reported optimum with a re-evaluation from the emitted model files."""

    f_star: float
    f_recomputed: float
    margin: float
    margin_recomputed: float
    feasible: bool
    passed: bool


def revalidate(
    solve_path: str,
    validity_path: Optional[str] = None,
    surrogate_path: Optional[str] = None,
    tol: float = REVALIDATION_TOL,
) -> Revalidation:
    """
    Reload a solve report and its model files and re-evaluate the optimum.

    The objective is the network in ``surrogate_path``, or the analytic peaks
    function when it is omitted. The check passes when objective value and
    constraint margin agree with the report within ``tol`` (relative to their
    magnitude) and the point satisfies the constraint within the feasibility
    tolerance recorded by the solver. An infeasible report passes trivially.
    """
    report = read_report(solve_path)
    if report.x_star is None:
        return Revalidation(report.f_star, math.nan, math.nan, math.nan, False, report.status == INFEASIBLE)
    x = np.asarray(report.x_star, dtype=float)
    variables = [Var(k) for k in range(x.size)]
    if surrogate_path is None:
        objective = peaks_expression(*variables)
    else:
        objective = mlp_expression(load_mlp(surrogate_path), variables)
    validity = load_validity(validity_path) if validity_path else None
    problem = Problem(Box(x, x), objective, validity)
    value, margin = problem.assess(x)
    feas_tol = report.diagnostics.get("feasibility_tolerance", problem.feasibility_tolerance)
    feasible = margin >= -float(feas_tol)

    def close(a: float, b: float) -> bool:
        if math.isinf(a) or math.isinf(b):
            return a == b
        return abs(a - b) <= tol * max(1.0, abs(a), abs(b))

    passed = feasible and close(value, report.f_star) and close(margin, report.constraint_margin)
    if not passed:
        warn(f'Re-validation of "{solve_path}" failed: f*={report.f_star:.12g} vs {value:.12g}, '
             f"margin={report.constraint_margin:.6g} vs {margin:.6g}.")
    return Revalidation(report.f_star, value, report.constraint_margin, margin, feasible, passed)


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


def write_table(directory: str, stem: str, frame: pd.DataFrame) -> str:
    """
    Write a table as ``<stem>.csv`` and as aligned text ``<stem>.txt``; return the text.

    >>> import tempfile
    >>> with tempfile.TemporaryDirectory() as d:
    ...     text = write_table(d, "t", pd.DataFrame([{"shape": "box", "f_star": -1.5}]))
    ...     sorted(os.listdir(d))
    ['t.csv', 't.txt']
    >>> text.split()
    ['shape', 'f_star', 'box', '-1.5']
    """
    frame.to_csv(os.path.join(directory, f"{stem}.csv"), index=False, float_format="%.10g")
    text = frame.to_string(index=False, float_format=lambda v: f"{v:.6g}")
    with open(os.path.join(directory, f"{stem}.txt"), "w") as f:
        f.write(text + "\n")
    return text


def _x(report: SolveReport, k: int) -> float:
    return math.nan if report.x_star is None else float(report.x_star[k])


# ---------------------------------------------------------------------------
# Single steps (one command-line subcommand each)
# ---------------------------------------------------------------------------


def generate_step(config: RunConfig) -> PointCloud:
    """Generate the configured case study and write ``points.csv``."""
    out = run_directory(config)
    with _stage("Generating the dataset"):
        d = config.dataset
        cloud = generate_dataset(DatasetSpec(d.shape, d.n_points, d.noise_sigma, config.run.seed))
        write_cloud_csv(os.path.join(out, "points.csv"), cloud)
    return cloud


def analyze_step(config: RunConfig) -> TopologyReport:
    """Persistence diagram (CSV and SVG) and topology summary of the training inputs."""
    out = run_directory(config)
    with _stage("Topological data analysis"):
        topology = analyze(load_cloud(config), tda_settings(config))
        write_diagram_csv(os.path.join(out, "diagram.csv"), topology.diagram)
        plot_persistence_diagram(os.path.join(out, "diagram.svg"), topology.diagram, config.run.name)
        write_json(os.path.join(out, "summary.json"), topology.summary.to_dict())
    return topology


def hull_step(config: RunConfig) -> FacetSystem:
    """Convex-hull facets of the training inputs, written to ``facets.csv``."""
    out = run_directory(config)
    with _stage("Convex hull"):
        fs, _ = fit_validity(load_cloud(config), HULL, config)
        save_validity(out, fs)
    return fs


def train_svm_step(config: RunConfig) -> OneClassSvmModel:
    """One-class SVM of the training inputs, written to ``model.json`` (selection details to ``svm.json``)."""
    out = run_directory(config)
    with _stage("Training the one-class SVM"):
        model, details = fit_validity(load_cloud(config), SVM, config)
        save_validity(out, model)
        write_json(os.path.join(out, "svm.json"), details)
    return model


def train_ann_step(config: RunConfig) -> MlpModel:
    """Surrogate network trained on peaks at the training inputs, written to ``ann.json``."""
    out = run_directory(config)
    with _stage("Training the surrogate network"):
        ann_config = replace(config, surrogate=replace(config.surrogate, kind="ann"))
        _, model = build_surrogate(load_cloud(config), ann_config, out)
    return model


def optimize_step(
    config: RunConfig, validity_path: Optional[str] = None, surrogate_path: Optional[str] = None
) -> SolveReport:
    """
    Solve with previously written model files and write ``solve.json``.

    The validity model defaults to ``model.json`` or ``facets.csv`` of the
    run directory. The objective is the network in ``surrogate_path``, the
    run directory's ``ann.json`` when the surrogate kind is ``ann``, or the
    analytic peaks function when it is ``peaks``.
    """
    out = run_directory(config)
    with _stage("Loading the models"):
        if validity_path is None:
            candidates = [os.path.join(out, name) for name in ("model.json", "facets.csv")]
            existing = [path for path in candidates if os.path.exists(path)]
            if not existing:
                raise ConfigurationError(
                    f'No validity model in "{out}"; run "hull" or "train-svm" first, or pass --validity.'
                )
            validity_path = existing[0]
        validity = load_validity(validity_path)
        cloud = load_cloud(config)
        variables = [Var(k) for k in range(cloud.dim)]
        if surrogate_path is None and config.surrogate.kind == "ann":
            surrogate_path = os.path.join(out, "ann.json")
        if surrogate_path is not None:
            objective = mlp_expression(load_mlp(surrogate_path), variables)
        elif cloud.dim == 2:
            objective = peaks_expression(*variables)
        else:
            raise ConfigurationError(f"The peaks objective needs two-dimensional inputs, got {cloud.dim}.")
    with _stage("Global optimization"):
        trace = os.path.join(out, "trace.csv") if config.solver.trace else None
        problem = Problem(cloud_box(cloud), objective, validity, anchors=cloud.points, name=config.run.name)
        report = solve(problem, solve_options(config, trace_path=trace))
        write_report(os.path.join(out, "solve.json"), report)
    return report


# ---------------------------------------------------------------------------
# Single run
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    """What :func:`run_pipeline` produced."""

    directory: str
    cloud: PointCloud
    topology: TopologyReport
    model_kind: str
    validity: Validity
    validity_details: dict
    report: SolveReport
    model_error: float
    revalidation: Revalidation
    table: str = ""


def run_pipeline(config: RunConfig) -> RunResult:
    """
    Run the three steps on one dataset and write the artifacts.

    The topology of the training inputs decides the validity model (unless
    overridden): a convex hull when there are no clusters or holes, a
    one-class SVM otherwise. The surrogate objective is then optimized
    globally inside the validity domain.

    Raises
    ------
    StageError
        Naming the failed stage; artifacts already written stay on disk.
    """
    name = config.run.name
    out = run_directory(config)

    with _stage("Loading the training inputs"):
        cloud = load_cloud(config)
        write_cloud_csv(os.path.join(out, "points.csv"), cloud)

    with _stage("Topological data analysis"):
        topology = analyze(cloud, tda_settings(config))
        write_diagram_csv(os.path.join(out, "diagram.csv"), topology.diagram)
        plot_persistence_diagram(os.path.join(out, "diagram.svg"), topology.diagram, f"{name}: persistence")
        kind = choose_model(config, topology)
        summary = topology.summary.to_dict()
        summary.update(
            n_points=cloud.n_points,
            n_analysed=topology.analysed.n_points,
            hausdorff=topology.hausdorff,
            validity_model=kind,
        )

    with _stage(f"Fitting the {kind} validity model"):
        validity, details = fit_validity(cloud, kind, config)
        validity_path = save_validity(out, validity)
        summary["validity"] = details
        write_json(os.path.join(out, "summary.json"), summary)

    with _stage("Building the surrogate"):
        objective, network = build_surrogate(cloud, config, out)

    with _stage("Global optimization"):
        trace = os.path.join(out, "trace.csv") if config.solver.trace else None
        problem = Problem(cloud_box(cloud), objective, validity, anchors=cloud.points, name=name)
        report = solve(problem, solve_options(config, trace_path=trace))
        solve_path = os.path.join(out, "solve.json")
        write_report(solve_path, report)

    with _stage("Writing the report"):
        delta = model_error(objective, report.x_star)
        surrogate_path = os.path.join(out, "ann.json") if network is not None else None
        check = revalidate(solve_path, validity_path, surrogate_path)
        plot_validity_overlay(
            os.path.join(out, "overlay.svg"), cloud, problem.box, validity, objective, report.x_star,
            f"{name}: {kind} validity domain",
        )
        frame = pd.DataFrame([{
            "name": name,
            "recommendation": topology.summary.recommendation,
            "model": kind,
            "mode": report.mode,
            "status": report.status,
            "x1": _x(report, 0),
            "x2": _x(report, 1),
            "f_star": report.f_star,
            "lower_bound": report.lower_bound,
            "delta": delta,
            "nodes": report.nodes_processed,
            "revalidated": check.passed,
        }])
        table = write_table(out, "table", frame)
        info("Result:\n" + table)

    return RunResult(out, cloud, topology, kind, validity, details, report, delta, check, table)


# ---------------------------------------------------------------------------
# Case-study suite
# ---------------------------------------------------------------------------


@dataclass
class SuiteResult:
    """Tables of the case-study suite and the underlying reports."""

    directory: str
    models: pd.DataFrame
    """Per dataset: topology, selected gamma, support vectors, facets"""
    solutions: pd.DataFrame
    """Per dataset and constraint: optimum, model error, reference optimum"""
    timings: pd.DataFrame
    """Per dataset and constraint: status, nodes and CPU time per mode, speedup"""
    reports: Dict[Tuple[str, str, str], SolveReport] = field(default_factory=dict)
    """(shape, constraint, mode) to report"""
    revalidated: bool = True


def run_case_study_suite(
    seed: int = 7,
    config: Optional[RunConfig] = None,
    shapes: Sequence[str] = CASE_STUDIES,
    modes: Sequence[str] = (RS, FS),
) -> SuiteResult:
    """
    Optimize the surrogate under both validity models, in both solver modes, for each case study.

    Time-limited cells are recorded with their status and do not stop the
    suite. For each dataset the analytic peaks function is also optimized
    under the SVM constraint as the reference solution.

    Parameters
    ----------
    seed : int
        Seed of data generation, SVM subsampling and network training.
    config : RunConfig, optional
        Settings (defaults when omitted); ``run.out_dir`` receives a
        ``suite`` directory.
    shapes : sequence of str
        Case studies to run.
    modes : sequence of str
        Solver modes to compare.

    Returns
    -------
    SuiteResult
        The ``models``, ``solutions`` and ``timings`` tables, also written as
        CSV and aligned text.
    """
    config = config or default_config()
    config = replace(config, run=replace(config.run, seed=seed))
    root = run_directory(config, "suite")
    models: List[dict] = []
    solutions: List[dict] = []
    timings: List[dict] = []
    reports: Dict[Tuple[str, str, str], SolveReport] = {}
    all_revalidated = True

    for shape in shapes:
        shape_dir = ensure_dir(os.path.join(root, shape))
        with _stage(f"{shape}: data and topology"):
            cloud = generate_dataset(DatasetSpec(shape, config.dataset.n_points, config.dataset.noise_sigma, seed))
            write_cloud_csv(os.path.join(shape_dir, "points.csv"), cloud)
            topology = analyze(cloud, tda_settings(config, SUITE_SUBSAMPLE_CAP))
            write_diagram_csv(os.path.join(shape_dir, "diagram.csv"), topology.diagram)
            plot_persistence_diagram(os.path.join(shape_dir, "diagram.svg"), topology.diagram, shape)
        with _stage(f"{shape}: validity models"):
            hull, hull_details = fit_validity(cloud, HULL, config)
            svm, svm_details = fit_validity(cloud, SVM, config)
            validity = {HULL: hull, SVM: svm}
            paths = {HULL: save_validity(shape_dir, hull), SVM: save_validity(shape_dir, svm)}
            summary = topology.summary.to_dict()
            summary.update(hull=hull_details, svm=svm_details)
            write_json(os.path.join(shape_dir, "summary.json"), summary)
        with _stage(f"{shape}: surrogate"):
            objective, network = build_surrogate(cloud, config, shape_dir)
            surrogate_path = os.path.join(shape_dir, "ann.json") if network is not None else None
        models.append({
            "shape": shape,
            "recommendation": topology.summary.recommendation,
            "clusters": topology.summary.n_long_clusters,
            "holes": topology.summary.n_long_holes,
            "gamma": svm_details["gamma"],
            "support_vectors": svm_details["n_support"],
            "outlier_fraction": svm_details["nu_check"]["outlier_fraction"],
            "facets": hull_details["n_facets"],
        })

        box = cloud_box(cloud)
        for kind in (HULL, SVM):
            problem = Problem(box, objective, validity[kind], anchors=cloud.points, name=f"{shape}/{kind}")
            for mode in modes:
                with _stage(f"{shape}: {kind} {mode.upper()}"):
                    report = solve(problem, solve_options(config, mode))
                    path = os.path.join(shape_dir, f"solve_{kind}_{mode}.json")
                    write_report(path, report)
                    all_revalidated &= revalidate(path, paths[kind], surrogate_path).passed
                reports[(shape, kind, mode)] = report
            plot_validity_overlay(
                os.path.join(shape_dir, f"overlay_{kind}.svg"), cloud, box, validity[kind], objective,
                reports[(shape, kind, modes[0])].x_star, f"{shape}: {kind}",
            )

        with _stage(f"{shape}: reference"):
            reference_problem = Problem(box, peaks_expression(Var(0), Var(1)), svm, anchors=cloud.points,
                                        name=f"{shape}/reference")
            reference = solve(reference_problem, solve_options(config, RS))
            write_report(os.path.join(shape_dir, "solve_reference_rs.json"), reference)

        for kind in (HULL, SVM):
            shown = reports[(shape, kind, modes[0])]
            solutions.append({
                "shape": shape,
                "constraint": kind,
                "x1": _x(shown, 0),
                "x2": _x(shown, 1),
                "f_star": shown.f_star,
                "delta": model_error(objective, shown.x_star),
                "status": shown.status,
                "reference_x1": _x(reference, 0),
                "reference_x2": _x(reference, 1),
                "reference_f": reference.f_star,
            })
            row = {"shape": shape, "constraint": kind}
            for mode in modes:
                r = reports[(shape, kind, mode)]
                row.update({f"{mode}_status": r.status, f"{mode}_nodes": r.nodes_processed,
                            f"{mode}_cpu": r.cpu_seconds, f"{mode}_f": r.f_star})
            if RS in modes and FS in modes:
                rs, fs = reports[(shape, kind, RS)], reports[(shape, kind, FS)]
                row["speedup"] = fs.cpu_seconds / rs.cpu_seconds if rs.cpu_seconds > 0 else math.inf
                row["f_difference"] = abs(rs.f_star - fs.f_star)
            timings.append(row)

    result = SuiteResult(root, pd.DataFrame(models), pd.DataFrame(solutions), pd.DataFrame(timings), reports,
                         all_revalidated)
    with _stage("Writing the suite tables"):
        info("Validity models:\n" + write_table(root, "models", result.models))
        info("Solutions:\n" + write_table(root, "solutions", result.solutions))
        info("Timings:\n" + write_table(root, "timings", result.timings))
    if not all_revalidated:
        warn("At least one reported optimum did not re-validate from its model files.")
    return result


# ---------------------------------------------------------------------------
# Sulfur recovery unit
# ---------------------------------------------------------------------------


@dataclass
class SruResult:
    """Outcome of the open-loop SRU control step."""

    directory: str
    report: SolveReport
    control: float
    """Optimal secondary air flow (scaled), NaN when infeasible"""
    objective: float
    """``|c_H2S - 2 c_SO2|`` at the optimum"""
    h2s: float
    so2: float
    topology: Optional[TopologyReport] = None
    svm_details: dict = field(default_factory=dict)


def sru_inputs(lag_spec: LagSpec) -> Tuple[List[Expr], Dict[str, float]]:
    """
    Lagged SRU input vector with the observed lags fixed and the current control input free.

    Returns
    -------
    (list of Expr, dict)
        One expression per lagged feature (``Var(0)`` for the control
        input, constants otherwise) and the fixed values by feature name.

    >>> inputs, fixed = sru_inputs(LagSpec(("a1", "a2", "a3", "a4", "a5")))
    >>> len(inputs), len(fixed), fixed["a1[k-5]"], inputs[8]
    (20, 19, 0.6215, x0)
    """
    n_signals, n_lags = len(SRU_OPERATING_POINT), len(SRU_OPERATING_POINT[0])
    if len(lag_spec.base_signals) != n_signals or len(lag_spec.lags) != n_lags:
        raise ConfigurationError(
            f"The SRU operating point covers {n_signals} signals at {n_lags} lags, "
            f"got {len(lag_spec.base_signals)} signal(s) at lags {list(lag_spec.lags)}."
        )
    names = lag_spec.feature_names()
    inputs: List[Expr] = []
    fixed: Dict[str, float] = {}
    for s, row in enumerate(SRU_OPERATING_POINT):
        for lag, value in enumerate(row):
            if value is None:
                inputs.append(Var(0))
            else:
                inputs.append(Const(value))
                fixed[names[s * n_lags + lag]] = value
    return inputs, fixed


def run_sru(config: RunConfig) -> SruResult:
    """
    One open-loop control step of the sulfur recovery unit.

    Builds lagged inputs from the plant data, analyses their topology, trains
    a one-class SVM on them and networks for the H2S and SO2 concentrations,
    then chooses the current secondary air flow in [0, 1] minimizing
    ``|c_H2S - 2 c_SO2|`` with the other inputs fixed at the operating point,
    inside the validity domain.

    Raises
    ------
    ConfigurationError
        No data file configured.
    StageError
        Any stage failure, including a missing data file.
    """
    s = config.sru
    if not s.csv:
        raise ConfigurationError(
            f"The SRU step needs the plant data: download it from {SRU_DATASET_URL} (CSV export) "
            'and set "csv" in the [sru] section or pass --csv.'
        )
    out = run_directory(config, config.run.name if config.run.name != "run" else "sru")
    lag_spec = LagSpec(tuple(s.inputs), tuple(s.lags))

    with _stage("Loading the SRU data"):
        if not os.path.exists(s.csv):
            raise DataFormatError(f'SRU data "{s.csv}" not found; download it from {SRU_DATASET_URL} (CSV export).')
        table = load_timeseries_csv(s.csv, list(s.inputs) + list(s.outputs))
        features = build_lag_features(table, lag_spec)
        targets = lagged_targets(table, s.outputs, lag_spec)
        n_train = split_train(features.n_points, s.train_fraction)
        train_x, train_y = features.points[:n_train], targets[:n_train]
        info(f"{n_train} training row(s) of {features.dim} lagged input(s).")

    with _stage("Topological data analysis"):
        topology = analyze(PointCloud(train_x), tda_settings(config))
        write_diagram_csv(os.path.join(out, "diagram.csv"), topology.diagram)
        plot_persistence_diagram(os.path.join(out, "diagram.svg"), topology.diagram, "SRU: persistence")

    with _stage("Training the one-class SVM"):
        rows = train_x[-s.max_train_rows:] if s.max_train_rows else train_x
        svm, svm_details = fit_validity(PointCloud(rows), SVM, config)
        validity_path = save_validity(out, svm)
        summary = topology.summary.to_dict()
        summary.update(n_points=n_train, n_analysed=topology.analysed.n_points, hausdorff=topology.hausdorff,
                       validity_model=SVM, validity=svm_details)
        write_json(os.path.join(out, "summary.json"), summary)

    with _stage("Training the concentration networks"):
        settings = train_config(config, s.max_epochs)
        h2s_model = train_mlp(train_x, train_y[:, 0], s.hidden_h2s, settings,
                              log_path=os.path.join(out, "training_h2s.csv"))
        save_mlp(os.path.join(out, "ann_h2s.json"), h2s_model)
        so2_model = train_mlp(train_x, train_y[:, 1], s.hidden_so2, settings,
                              log_path=os.path.join(out, "training_so2.csv"))
        save_mlp(os.path.join(out, "ann_so2.json"), so2_model)

    with _stage("Open-loop control step"):
        inputs, fixed = sru_inputs(lag_spec)
        h2s = mlp_expression(h2s_model, inputs)
        so2 = mlp_expression(so2_model, inputs)
        objective = absolute(h2s - 2.0 * so2)
        problem = Problem(
            Box([0.0], [1.0]),
            objective,
            svm,
            validity_inputs=tuple(inputs),
            fixed_parameters=fixed,
            anchors=np.linspace(0.0, 1.0, SRU_ANCHOR_POINTS)[:, None],
            name="sru",
        )
        report = solve(problem, solve_options(config))
        solve_path = os.path.join(out, "solve.json")
        write_report(solve_path, report)
        check = revalidate_sru(report, problem)

    if report.x_star is None:
        control = value = c_h2s = c_so2 = math.nan
    else:
        control = float(report.x_star[0])
        value = evaluate(objective, report.x_star)[0]
        c_h2s = evaluate(h2s, report.x_star)[0]
        c_so2 = evaluate(so2, report.x_star)[0]
    frame = pd.DataFrame([{
        "status": report.status,
        "control": control,
        "objective": value,
        "h2s": c_h2s,
        "so2": c_so2,
        "nodes": report.nodes_processed,
        "cpu_seconds": report.cpu_seconds,
        "revalidated": check,
    }])
    info("SRU control step:\n" + write_table(out, "sru", frame))
    return SruResult(out, report, control, value, c_h2s, c_so2, topology, svm_details)


def revalidate_sru(report: SolveReport, problem: Problem, tol: float = REVALIDATION_TOL) -> bool:
    """Whether the reported optimum of the SRU step reproduces from the problem within ``tol``."""
    if report.x_star is None:
        return report.status == INFEASIBLE
    value, margin = problem.assess(report.x_star)
    tolerance = float(report.diagnostics.get("feasibility_tolerance", problem.feasibility_tolerance))
    return margin >= -tolerance and abs(value - report.f_star) <= tol * max(1.0, abs(value))


if __name__ == "__main__":
    import doctest

    doctest.testmod()
