"""Validity domains for optimization with data-driven models."""

import sys
from typing import List, Optional

from . import cmdline, pipeline
from .colors import status
from .config import RunConfig, load_config_file, merge_run_configs
from .errors import TimeLimitReached, ValidityDomainError
from .log import fatal, info, set_quietness
from .solver import TIME_LIMIT


def _dispatch(opts: cmdline.CmdlineOptions, conf: RunConfig):
    """Run one subcommand; return the final solve report, if it made one."""
    command = opts.command
    if command == "generate":
        pipeline.generate_step(conf)
    elif command == "analyze":
        pipeline.analyze_step(conf)
    elif command == "hull":
        pipeline.hull_step(conf)
    elif command == "train-svm":
        pipeline.train_svm_step(conf)
    elif command == "train-ann":
        pipeline.train_ann_step(conf)
    elif command == "optimize":
        return pipeline.optimize_step(conf, opts.validity_path, opts.surrogate_path)
    elif command == "run":
        return pipeline.run_pipeline(conf).report
    elif command == "suite":
        pipeline.run_case_study_suite(conf.run.seed, conf)
    elif command == "sru":
        return pipeline.run_sru(conf).report
    else:
        raise RuntimeError(f"Unknown command {command}.")
    return None


def main(args: Optional[List[str]] = None):
    """Program entry-point."""
    cmdline_opts = cmdline.parse(sys.argv[1:] if args is None else args)
    set_quietness(cmdline_opts.quietness)

    try:
        conf = merge_run_configs(load_config_file(cmdline_opts.config_file), cmdline_opts.overrides)
        report = _dispatch(cmdline_opts, conf)
        if report is not None:
            info(f"Final solve: {status(report.status)}, f* = {report.f_star:.6g}.")
            if report.status == TIME_LIMIT:
                raise TimeLimitReached(f"The final solve stopped at its time limit with gap {report.gap_abs:.3g}.")
    except ValidityDomainError as e:
        fatal(str(e))
        exit(e.exit_code)


if __name__ == "__main__":
    main()
