"""Command-line driver: ``run`` convergence studies and ``verify`` the oracle suites."""
import argparse
import dataclasses
import logging
import os
import sys

from . import adaptivity
from .boundary import (JUMP_POLICIES, NAMED_DATA, REGULARIZERS, IncompatibleDatumError,
                       NoAdmissibleNodeError, SingularSystemError)
from .config import ConfigError, RunConfig, load_config
from .mesh import MeshError
from .solver import SolverBreakdownError
from .verification import DEFAULT_SUITES, SUITES
from .vtk import write_solution_vtk

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4

_FLAGS = {
    "datum": str, "regularizer": str, "jump_policy": str, "method": str, "mode": str,
    "theta": float, "n": int, "mesh_file": str, "levels": int, "max_dofs": int,
    "max_iters": int, "csv": str, "vtk_dir": str,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="stokes-roughbc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log every level as it is solved")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="uniform or adaptive convergence study")
    run.add_argument("--config", help="key = value file; flags given on the command line override it")
    helps = {
        "datum": f"named datum {tuple(NAMED_DATA)} or a file with one 'ux, uy' line per side",
        "regularizer": f"one of {tuple(REGULARIZERS)}",
        "jump_policy": f"corner value rule, one of {JUMP_POLICIES}",
        "method": "mini or hood-taylor",
        "mode": "uniform or adaptive",
        "theta": "bulk marking fraction in (0, 1); adaptive mode only",
        "n": "initial structured mesh has n x n squares (default 16 uniform, 6 adaptive)",
        "mesh_file": "initial mesh in the text mesh format instead of --n",
        "levels": "number of tabulated uniform levels",
        "max_dofs": "adaptive: stop before a mesh with more vertices than this",
        "max_iters": "adaptive: maximum number of solves",
        "csv": "output table (default <datum>_<method>_<mode>.csv)",
        "vtk_dir": "write one VTK file per level into this directory",
    }
    for name, typ in _FLAGS.items():
        run.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None, help=helps[name])

    ver = sub.add_parser("verify", help="run the oracle suites")
    ver.add_argument("--suite", action="append", choices=sorted(SUITES),
                     help=f"suite to run (repeatable); default {', '.join(DEFAULT_SUITES)}")
    return p


def config_from_args(args):
    base = load_config(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in _FLAGS if getattr(args, k) is not None}
    if "n" in overrides and base.mesh_file is not None and "mesh_file" not in overrides:
        base.mesh_file = None
    if "mesh_file" in overrides and "n" not in overrides:
        base.n = None
    return dataclasses.replace(base, **overrides).validated()


def cmd_run(config, out=None):
    out = out or sys.stdout
    csv_path = config.csv or f"{os.path.basename(config.datum)}_{config.method}_{config.mode}.csv"
    callback = None
    if config.vtk_dir:
        os.makedirs(config.vtk_dir, exist_ok=True)

        def callback(level, sol, ind):
            write_solution_vtk(os.path.join(config.vtk_dir, f"level_{level:03d}.vtk"), sol, ind)

    try:
        rec = adaptivity.run(config, callback)
    except (SolverBreakdownError, IncompatibleDatumError, NoAdmissibleNodeError, SingularSystemError,
            MeshError, MemoryError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    adaptivity.write_csv(rec, csv_path)
    print(f"# {config.datum}, {config.method}, {config.mode}"
          + (f", theta={config.theta}" if config.theta is not None else "")
          + f", {config.regularizer}, jump policy {config.jump_policy}", file=out)
    print(adaptivity.format_table(rec), file=out)
    print(f"# table written to {csv_path}", file=out)
    return EXIT_OK


def cmd_verify(suites=None, out=None):
    out = out or sys.stdout
    failed = []
    for name in suites or DEFAULT_SUITES:
        try:
            checks = SUITES[name]()
            problems = [c for c in checks if not c.ok]
        except Exception as exc:  # a crashing suite is a failing suite
            checks, problems = [], [f"{type(exc).__name__}: {exc}"]
        status = "PASS" if not problems else "FAIL"
        print(f"{status} {name} ({len(checks)} checks)", file=out)
        for c in problems:
            print(f"    {c.name}: {c.detail}" if hasattr(c, "name") else f"    {c}", file=out)
        if problems:
            failed.append(name)
    if failed:
        print(f"failed suites: {', '.join(failed)}", file=out)
        return EXIT_VERIFY
    print("all suites passed", file=out)
    return EXIT_OK


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        return cmd_verify(args.suite)
    try:
        config = config_from_args(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return cmd_run(config)

