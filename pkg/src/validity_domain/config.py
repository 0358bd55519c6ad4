"""Loading and parsing of the config file."""

import configparser
import os
from copy import copy
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Type

from .errors import ConfigurationError
from .log import debug


@dataclass
class RunSection:
    """Where and under which name a run writes its artifacts."""

    name: Optional[str] = None
    """Run name; artifacts go to ``<out_dir>/<name>``"""
    out_dir: Optional[str] = None
    seed: Optional[int] = None
    """Seed shared by every stochastic stage"""


@dataclass
class DatasetSection:
    """Training inputs: a generated shape, or a CSV of points."""

    shape: Optional[str] = None
    n_points: Optional[int] = None
    noise_sigma: Optional[float] = None
    csv: Optional[str] = None
    """Point-cloud CSV (``x1..xD[,label]``); replaces the generator when set"""


@dataclass
class TdaSection:
    """Topological data analysis."""

    max_eps: Optional[float] = None
    subsample_cap: Optional[int] = None
    threshold: Optional[float] = None
    method: Optional[str] = None
    max_edges: Optional[int] = None


@dataclass
class ValiditySection:
    """Choice of validity model."""

    model: Optional[str] = None
    """``auto``, ``hull`` or ``svm``"""
    facets: Optional[str] = None
    """Facet CSV computed externally (hull model in more than three dimensions)"""


@dataclass
class SvmSection:
    """One-class SVM training."""

    nu: Optional[float] = None
    gamma: Optional[float] = None
    """Fixed kernel parameter; the schedule is used when unset"""
    gamma_schedule: Optional[List[float]] = None
    plateau: Optional[float] = None
    tol: Optional[float] = None
    max_passes: Optional[int] = None


@dataclass
class SurrogateSection:
    """Objective: analytic peaks or a network trained on peaks."""

    kind: Optional[str] = None
    """``peaks`` or ``ann``"""
    hidden: Optional[List[int]] = None
    batch_size: Optional[int] = None
    max_epochs: Optional[int] = None
    learning_rate: Optional[float] = None


@dataclass
class SolverSection:
    """Branch-and-bound settings."""

    mode: Optional[str] = None
    abs_tol: Optional[float] = None
    rel_tol: Optional[float] = None
    time_limit: Optional[float] = None
    feas_tol: Optional[float] = None
    max_nodes: Optional[int] = None
    relax_steps: Optional[int] = None
    local_starts: Optional[int] = None
    local_every: Optional[int] = None
    """Nodes between local searches; 0 disables them"""
    log_every: Optional[int] = None
    trace: Optional[bool] = None
    """Write a per-node trace CSV next to the report"""


@dataclass
class SruSection:
    """Sulfur recovery unit control step."""

    csv: Optional[str] = None
    inputs: Optional[List[str]] = None
    outputs: Optional[List[str]] = None
    lags: Optional[List[int]] = None
    train_fraction: Optional[float] = None
    hidden_h2s: Optional[List[int]] = None
    hidden_so2: Optional[List[int]] = None
    max_epochs: Optional[int] = None
    max_train_rows: Optional[int] = None
    """Cap on the rows used to train the SVM (most recent rows of the training split)"""


@dataclass
class RunConfig:
    """Complete configuration of a pipeline run, one attribute per section."""

    run: RunSection = field(default_factory=RunSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    tda: TdaSection = field(default_factory=TdaSection)
    validity: ValiditySection = field(default_factory=ValiditySection)
    svm: SvmSection = field(default_factory=SvmSection)
    surrogate: SurrogateSection = field(default_factory=SurrogateSection)
    solver: SolverSection = field(default_factory=SolverSection)
    sru: SruSection = field(default_factory=SruSection)


SECTIONS: Dict[str, Type] = {f.name: f.type for f in fields(RunConfig)}
"""Section name to section dataclass"""


def _merge_configs(first, second):
    """
    Merge two sections of the same type; set values of ``second`` win.

    >>> _merge_configs(SolverSection(mode="rs", abs_tol=0.001),  # doctest: +NORMALIZE_WHITESPACE
    ...                SolverSection(mode="fs"))
    SolverSection(mode='fs', abs_tol=0.001, rel_tol=None, time_limit=None, feas_tol=None,
                  max_nodes=None, relax_steps=None, local_starts=None, local_every=None,
                  log_every=None, trace=None)
    """
    merged = copy(first)
    for attr in first.__dataclass_fields__:  # type: ignore
        if getattr(second, attr) is not None:
            setattr(merged, attr, getattr(second, attr))
    return merged


def merge_run_configs(first: RunConfig, second: RunConfig) -> RunConfig:
    """Merge every section of two run configurations."""
    return RunConfig(**{name: _merge_configs(getattr(first, name), getattr(second, name)) for name in SECTIONS})


_default_config = RunConfig(
    run=RunSection(name="run", out_dir="runs", seed=7),
    dataset=DatasetSection(shape="box", n_points=600, noise_sigma=0.1),
    tda=TdaSection(subsample_cap=512, threshold=3.0, method="cohomology", max_edges=3_000_000),
    validity=ValiditySection(model="auto"),
    svm=SvmSection(
        nu=0.03,
        gamma_schedule=[2.0, 1.5, 1.0, 0.75, 0.5, 0.35, 0.25, 0.18, 0.12, 0.08, 0.05],
        plateau=0.05,
        tol=1e-6,
        max_passes=200,
    ),
    surrogate=SurrogateSection(kind="ann", hidden=[6, 8], batch_size=128, max_epochs=4000, learning_rate=1e-3),
    solver=SolverSection(mode="rs", abs_tol=1e-3, rel_tol=1e-3, time_limit=1000.0, relax_steps=5, local_starts=8,
                         local_every=200, log_every=2000, trace=False),
    sru=SruSection(
        inputs=["a1", "a2", "a3", "a4", "a5"],
        outputs=["y1", "y2"],
        lags=[0, 5, 7, 9],
        train_fraction=0.9,
        hidden_h2s=[8, 8],
        hidden_so2=[8],
        max_epochs=300,
        max_train_rows=3000,
    ),
)
"""Default configuration"""


def default_config() -> RunConfig:
    """A fresh copy of the defaults."""
    return merge_run_configs(_default_config, RunConfig())


def _parse_value(parser: configparser.ConfigParser, section: str, key: str, type_hint):
    try:
        if type_hint == Optional[bool]:
            return parser.getboolean(section, key)
        if type_hint == Optional[int]:
            return parser.getint(section, key)
        if type_hint == Optional[float]:
            return parser.getfloat(section, key)
        raw = parser.get(section, key)
        if type_hint == Optional[List[str]]:
            return raw.split()
        if type_hint == Optional[List[int]]:
            return [int(v) for v in raw.split()]
        if type_hint == Optional[List[float]]:
            return [float(v) for v in raw.split()]
        return raw
    except ValueError:
        raise ConfigurationError(
            f'Invalid value "{parser.get(section, key)}" for "{key}" in section [{section}].'
        ) from None


def load_config(config_contents: str) -> RunConfig:
    '''
    Parse a config file and merge it over the defaults.

    Parameters
    ----------
    config_contents : str
        The contents of the config file

    Returns
    -------
    RunConfig
        The parsed config

    >>> c = load_config("""[run]
    ... name = ovals
    ...
    ... [dataset]
    ... shape = two_ovals
    ...
    ... [svm]
    ... gamma_schedule = 1.0 0.5 0.25
    ...
    ... [solver]
    ... mode = fs
    ... trace = yes
    ... """)
    >>> c.run.name, c.run.seed, c.dataset.shape, c.dataset.n_points
    ('ovals', 7, 'two_ovals', 600)
    >>> c.svm.gamma_schedule, c.svm.nu
    ([1.0, 0.5, 0.25], 0.03)
    >>> c.solver.mode, c.solver.trace, c.solver.abs_tol
    ('fs', True, 0.001)
    '''
    parser = configparser.ConfigParser()
    try:
        parser.read_string(config_contents)
    except configparser.Error as e:
        raise ConfigurationError(f"Malformed config file: {e}") from None
    parsed = RunConfig()
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f'Unknown config section [{section}]; known sections: {", ".join(SECTIONS)}.')
        cls = SECTIONS[section]
        hints = {f.name: f.type for f in fields(cls)}
        values = {}
        for key in parser.options(section):
            if key not in hints:
                raise ConfigurationError(f'Unknown key "{key}" in section [{section}].')
            values[key] = _parse_value(parser, section, key, hints[key])
        setattr(parsed, section, cls(**values))
    return merge_run_configs(_default_config, parsed)


config_file_path_unexpanded = "~/.config/validity-domain.conf"
config_file_path = os.path.expanduser(config_file_path_unexpanded)


def load_config_file(config_file: Optional[str]) -> RunConfig:
    """
    Load the config file.

    Parameters
    ----------
    config_file : str, optional
        The path to the config file. When None, the default path is tried
        and the defaults are used if it does not exist.

    Returns
    -------
    RunConfig
        The parsed config

    Raises
    ------
    ConfigurationError
        If an explicitly given file does not exist, or the file is invalid.
    """
    if config_file is None:
        if not os.path.exists(config_file_path):
            debug(f'No config file at "{config_file_path}", using the defaults.')
            return default_config()
        config_file = config_file_path
    debug(f"Loading config file from {config_file}")
    if not os.path.exists(config_file):
        raise ConfigurationError(f'Config file "{config_file}" not found. Run again with "--help" for more info.')
    with open(config_file, "r") as f:
        return load_config(f.read())


if __name__ == "__main__":
    import doctest

    doctest.testmod()
