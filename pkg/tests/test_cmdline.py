import pytest

from validity_domain.cmdline import COMMANDS, help_message, parse


def test_defaults_are_left_unset():
    o = parse(["run"])
    assert o.command == "run"
    assert o.quietness == 0
    assert o.config_file is None
    assert o.overrides.solver.mode is None
    assert o.overrides.solver.trace is None
    assert o.overrides.dataset.csv is None


def test_values():
    o = parse(["suite", "--seed", "11", "--n-points=200", "--noise", "0.05", "--nu", "0.1", "--gamma", "0.5",
               "--model", "svm", "--surrogate", "peaks", "--abs-tol", "1e-4", "--max-nodes", "10", "-o", "out"])
    assert o.overrides.run.seed == 11
    assert o.overrides.run.out_dir == "out"
    assert o.overrides.dataset.n_points == 200
    assert o.overrides.dataset.noise_sigma == 0.05
    assert o.overrides.svm.nu == 0.1 and o.overrides.svm.gamma == 0.5
    assert o.overrides.validity.model == "svm"
    assert o.overrides.surrogate.kind == "peaks"
    assert o.overrides.solver.abs_tol == 1e-4
    assert o.overrides.solver.max_nodes == 10


def test_csv_goes_to_the_dataset_except_for_sru():
    assert parse(["run", "--csv", "points.csv"]).overrides.dataset.csv == "points.csv"
    o = parse(["sru", "--csv", "plant.csv"])
    assert o.overrides.sru.csv == "plant.csv"
    assert o.overrides.dataset.csv is None


@pytest.mark.parametrize("args", [[], ["-h"], ["run", "--help"]])
def test_help_exits(args, capsys):
    with pytest.raises(SystemExit) as e:
        parse(args)
    assert e.value.code == 0
    assert "Usage:" in capsys.readouterr().out


@pytest.mark.parametrize("args", [["fly"], ["run", "--mode", "xs"], ["run", "--seed", "one"]])
def test_invalid_arguments(args):
    with pytest.raises(SystemExit) as e:
        parse(args)
    assert e.value.code == 2


def test_help_lists_every_command():
    text = help_message()
    assert all(command in text for command in COMMANDS)
