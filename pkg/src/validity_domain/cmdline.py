"""Parse command line arguments."""

from argparse import ArgumentParser
from dataclasses import dataclass, field
from typing import List, Optional

from .config import (
    DatasetSection,
    RunConfig,
    RunSection,
    SolverSection,
    SruSection,
    SurrogateSection,
    SvmSection,
    ValiditySection,
    config_file_path_unexpanded,
)

COMMANDS = ("generate", "analyze", "hull", "train-svm", "train-ann", "optimize", "suite", "sru", "run")


@dataclass
class CmdlineOptions:
    """Command line options."""

    command: str = None
    quietness: int = 0
    config_file: str = None
    overrides: RunConfig = field(default_factory=RunConfig)
    """Values given on the command line, merged over the config file"""
    validity_path: str = None
    surrogate_path: str = None
    help: bool = False


def _overrides(parsed) -> RunConfig:
    csv = parsed.csv
    return RunConfig(
        run=RunSection(name=parsed.name, out_dir=parsed.out, seed=parsed.seed),
        dataset=DatasetSection(
            shape=parsed.shape,
            n_points=parsed.n_points,
            noise_sigma=parsed.noise,
            csv=csv if parsed.command != "sru" else None,
        ),
        validity=ValiditySection(model=parsed.model, facets=parsed.facets),
        svm=SvmSection(nu=parsed.nu, gamma=parsed.gamma),
        surrogate=SurrogateSection(kind=parsed.surrogate),
        solver=SolverSection(
            mode=parsed.mode,
            abs_tol=parsed.abs_tol,
            rel_tol=parsed.rel_tol,
            time_limit=parsed.time_limit,
            max_nodes=parsed.max_nodes,
            trace=True if parsed.trace else None,
        ),
        sru=SruSection(csv=csv if parsed.command == "sru" else None),
    )


def parse(args: List[str]) -> CmdlineOptions:
    """
    Parse command line arguments.

    Parameters
    ----------
    args : List[str]
        List of command line arguments.

    Returns
    -------
    CmdlineOptions
        Command line options.

    >>> o = parse(['-C', 'myconf', '-qqv', 'run', '--shape=banana', '--mode', 'fs', '--time-limit=60'])
    >>> o.command, o.quietness, o.config_file
    ('run', 1, 'myconf')
    >>> o.overrides.dataset.shape, o.overrides.solver.mode, o.overrides.solver.time_limit, o.overrides.run.seed
    ('banana', 'fs', 60.0, None)
    >>> o = parse(['sru', '--csv', 'sru.csv', '-vv', '--seed', '3'])
    >>> o.overrides.sru.csv, o.overrides.dataset.csv, o.overrides.run.seed, o.quietness
    ('sru.csv', None, 3, -2)
    >>> o = parse(['optimize', '--validity', 'runs/run/model.json', '--ann', 'runs/run/ann.json', '--trace'])
    >>> o.validity_path, o.surrogate_path, o.overrides.solver.trace, o.overrides.solver.mode
    ('runs/run/model.json', 'runs/run/ann.json', True, None)
    """
    argparser = ArgumentParser(
        description="Validity domains for optimization with data-driven models.",
        add_help=False,
    )
    argparser.add_argument("command", nargs="?", choices=COMMANDS)
    argparser.add_argument("-C", "--config-file", default=None)
    argparser.add_argument("-v", "--verbose", action="count", default=0)
    argparser.add_argument("-q", "--quiet", action="count", default=0)
    argparser.add_argument("-h", "--help", action="store_true", default=False)
    argparser.add_argument("--name")
    argparser.add_argument("-o", "--out")
    argparser.add_argument("--seed", type=int)
    argparser.add_argument("--shape")
    argparser.add_argument("--n-points", type=int)
    argparser.add_argument("--noise", type=float)
    argparser.add_argument("--csv")
    argparser.add_argument("--model", choices=("auto", "hull", "svm"))
    argparser.add_argument("--facets")
    argparser.add_argument("--nu", type=float)
    argparser.add_argument("--gamma", type=float)
    argparser.add_argument("--surrogate", choices=("peaks", "ann"))
    argparser.add_argument("--mode", choices=("rs", "fs"))
    argparser.add_argument("--abs-tol", type=float)
    argparser.add_argument("--rel-tol", type=float)
    argparser.add_argument("--time-limit", type=float)
    argparser.add_argument("--max-nodes", type=int)
    argparser.add_argument("--trace", action="store_true", default=False)
    argparser.add_argument("--validity")
    argparser.add_argument("--ann")
    parsed = argparser.parse_args(args)

    if parsed.help or parsed.command is None:
        print(help_message())
        exit(0)

    return CmdlineOptions(
        command=parsed.command,
        quietness=parsed.quiet - parsed.verbose,
        config_file=parsed.config_file,
        overrides=_overrides(parsed),
        validity_path=parsed.validity,
        surrogate_path=parsed.ann,
        help=parsed.help,
    )


def help_message() -> str:
    """
    Return help message.

    Returns
    -------
    str
        Help message.
    """
    msg = f"""validity-domain
Validity domains for optimization with data-driven models.

Usage:

    validity-domain [-C CONFIG] [-v|-q]... COMMAND [options]


  Commands:
      generate            Generate the configured case study (points.csv).
      analyze             Persistence diagram and topology summary
                          (diagram.csv, diagram.svg, summary.json).
      hull                Convex-hull facets of the training inputs (facets.csv).
      train-svm           One-class SVM of the training inputs (model.json).
      train-ann           Surrogate network trained on peaks (ann.json).
      optimize            Global optimization with the written models (solve.json).
      run                 All three steps: topology, validity model, optimization.
      suite               The eight case studies under both validity models and
                          both solver modes, with comparison tables.
      sru                 One open-loop control step of the sulfur recovery unit.

  Options:
      -C CONFIG_FILE      Path to the config file to use.
                          (defaults to "{config_file_path_unexpanded}".)
      --name NAME         Run name; artifacts go to OUT/NAME.
      -o, --out OUT       Output directory.                     [default: runs]
      --seed SEED         Seed of every stochastic stage.          [default: 7]
      --shape SHAPE       Case study: box, oval, box2, banana, two_circles,
                          two_ovals, box_with_hole, circle_with_hole.
      --n-points N        Number of generated points.            [default: 600]
      --noise SIGMA       Noise of the generated points.         [default: 0.1]
      --csv PATH          Point-cloud CSV (x1..xD); for "sru", the plant data.
      --model MODEL       auto, hull or svm.                    [default: auto]
      --facets PATH       Facet CSV computed elsewhere (hull in more than
                          three dimensions).
      --nu NU             SVM outlier bound.                    [default: 0.03]
      --gamma GAMMA       Fixed SVM kernel parameter (skips the schedule).
      --surrogate KIND    peaks or ann.                          [default: ann]
      --mode MODE         rs (reduced space) or fs (full space). [default: rs]
      --abs-tol TOL       Absolute optimality tolerance.       [default: 0.001]
      --rel-tol TOL       Relative optimality tolerance.       [default: 0.001]
      --time-limit SECS   CPU time limit per solve.             [default: 1000]
      --max-nodes N       Node limit per solve.            [default: unbounded]
      --trace             Write a per-node trace CSV.
      --validity PATH     Validity model for "optimize" (model.json or facets.csv).
      --ann PATH          Surrogate network for "optimize".

      -v                  Verbose output.
      -q                  Quiet output.
      -h, --help          Show this help message and exit.


Config file:

    The config file is an ini file, located at "{config_file_path_unexpanded}".
    Command-line options override its values. Lists are separated by spaces.

    Sections and keys:

        [run]       name, out_dir, seed
        [dataset]   shape, n_points, noise_sigma, csv
        [tda]       max_eps, subsample_cap, threshold, method, max_edges
        [validity]  model, facets
        [svm]       nu, gamma, gamma_schedule, plateau, tol, max_passes
        [surrogate] kind, hidden, batch_size, max_epochs, learning_rate
        [solver]    mode, abs_tol, rel_tol, time_limit, feas_tol, max_nodes,
                    relax_steps, local_starts, local_every, log_every, trace
        [sru]       csv, inputs, outputs, lags, train_fraction, hidden_h2s,
                    hidden_so2, max_epochs, max_train_rows

  Example config:

        [run]
        name = ovals

        [dataset]
        shape = two_ovals

        [svm]
        gamma_schedule = 1.0 0.5 0.35 0.25

        [solver]
        mode = rs
        time_limit = 300


Exit codes:

    0 success, 2 configuration error, 3 stage failure, 4 time limit reached."""
    return msg


if __name__ == "__main__":
    import doctest

    doctest.testmod()
