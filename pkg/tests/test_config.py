import pytest

from validity_domain import config
from validity_domain.config import (
    RunConfig,
    SolverSection,
    SvmSection,
    default_config,
    load_config,
    load_config_file,
    merge_run_configs,
)
from validity_domain.errors import ConfigurationError


def test_defaults():
    c = default_config()
    assert c.run.name == "run" and c.run.seed == 7
    assert c.dataset.shape == "box" and c.dataset.n_points == 600
    assert c.validity.model == "auto"
    assert c.svm.nu == 0.03 and c.svm.gamma is None
    assert c.solver.mode == "rs" and c.solver.abs_tol == 1e-3
    assert c.solver.local_every == 200 and c.solver.log_every == 2000
    assert c.sru.lags == [0, 5, 7, 9]


def test_default_config_is_a_fresh_copy():
    first = default_config()
    first.solver.mode = "fs"
    assert default_config().solver.mode == "rs"


def test_load_config_parses_every_type():
    c = load_config(
        """[tda]
max_eps = 2.5
subsample_cap = 100

[svm]
gamma = 0.5

[surrogate]
hidden = 4 4 2

[solver]
trace = no
max_nodes = 50
local_every = 0
log_every = 100

[sru]
inputs = u1 u2
"""
    )
    assert c.tda.max_eps == 2.5 and c.tda.subsample_cap == 100
    assert c.svm.gamma == 0.5
    assert c.surrogate.hidden == [4, 4, 2]
    assert c.solver.trace is False and c.solver.max_nodes == 50
    assert c.solver.local_every == 0 and c.solver.log_every == 100
    assert c.sru.inputs == ["u1", "u2"]
    assert c.sru.outputs == ["y1", "y2"]


def test_empty_config_gives_defaults():
    assert load_config("") == default_config()


@pytest.mark.parametrize(
    "contents",
    [
        "[plotting]\ndpi = 300\n",
        "[solver]\nmodee = fs\n",
        "[solver]\nabs_tol = small\n",
        "[surrogate]\nhidden = 4 x\n",
        "[solver]\ntrace = perhaps\n",
        "abs_tol = 0.1\n",
    ],
)
def test_invalid_config(contents):
    with pytest.raises(ConfigurationError):
        load_config(contents)


def test_merge_prefers_set_values():
    first = RunConfig(solver=SolverSection(mode="rs", abs_tol=1e-2), svm=SvmSection(nu=0.1))
    second = RunConfig(solver=SolverSection(mode="fs"))
    merged = merge_run_configs(first, second)
    assert merged.solver.mode == "fs"
    assert merged.solver.abs_tol == 1e-2
    assert merged.svm.nu == 0.1
    assert first.solver.mode == "rs"


def test_load_config_file(tmp_path):
    path = tmp_path / "vd.conf"
    path.write_text("[run]\nname = ovals\n")
    assert load_config_file(str(path)).run.name == "ovals"
    with pytest.raises(ConfigurationError):
        load_config_file(str(tmp_path / "missing.conf"))


def test_missing_default_config_file_uses_defaults(tmp_path, monkeypatch):
    monkeypatch.setattr(config, "config_file_path", str(tmp_path / "absent.conf"))
    assert load_config_file(None) == default_config()
