"""Command line entry point ``solver``.

Exit codes: 0 success, 1 configuration/input error, 2 numerical failure
(tangling, solver breakdown, step restriction), 3 IO error.
"""
import argparse
import logging
import sys

import numpy as np

from . import driver, scenario
from .mesh import MeshError, load_mesh

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("alesupg")


def _build_parser():
    p = argparse.ArgumentParser(prog="solver", description="Conservative ALE-SUPG convection-diffusion solver")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario from a config file or a preset")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("config", nargs="?", help="INI scenario file")
    src.add_argument("--preset", choices=sorted(scenario.PRESETS))
    run.add_argument("--delta0", type=float)
    run.add_argument("--scheme", choices=("be", "cn"))
    run.add_argument("--dt", type=float)
    run.add_argument("--T", type=float, dest="T")
    run.add_argument("--mesh", help="mesh source override, e.g. builtin:channel_disc:2500")
    run.add_argument("--out", help="output directory")

    conv = sub.add_parser("converge", help="manufactured-solution convergence study")
    conv.add_argument("config")
    conv.add_argument("--levels", type=int, default=3)

    chk = sub.add_parser("check-mesh", help="validate a mesh file and print statistics")
    chk.add_argument("file")

    cfg = sub.add_parser("write-config", help="write a preset as an editable config file")
    cfg.add_argument("preset", choices=sorted(scenario.PRESETS))
    cfg.add_argument("path")
    return p


def _load_scenario(args):
    if args.preset:
        s = scenario.preset(args.preset)
    else:
        s = scenario.parse_config(args.config)
    overrides = {"delta0": args.delta0, "scheme": args.scheme, "dt": args.dt, "T": args.T, "mesh": args.mesh}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.T is not None and s.snapshot_times:
        overrides["snapshot_times"] = tuple(t for t in s.snapshot_times if t <= args.T) or (args.T,)
    return scenario.with_overrides(s, **overrides)


def _cmd_run(args):
    s = _load_scenario(args)
    out = s.out_dir or f"{s.name}_out"
    report = driver.run_scenario(s, out_dir=out)
    print(report.summary())
    return EXIT_OK


def _cmd_converge(args):
    s = scenario.parse_config(args.config)
    table = driver.run_convergence_study(s, args.levels)
    print(table.format())
    return EXIT_OK


def _cmd_check_mesh(args):
    mesh = load_mesh(args.file)
    areas = mesh.areas()
    h = mesh.diameters()
    tags, counts = np.unique(mesh.boundary_tags, return_counts=True)
    print(f"nodes           {mesh.node_count}")
    print(f"cells           {mesh.cell_count}")
    print(f"area            {areas.sum():.10g}")
    print(f"cell area       min {areas.min():.4e}  max {areas.max():.4e}")
    print(f"cell diameter   min {h.min():.4e}  max {h.max():.4e}")
    print("boundary tags   " + ", ".join(f"{t}: {c} facets" for t, c in zip(tags, counts)))
    return EXIT_OK


def _cmd_write_config(args):
    scenario.write_config(scenario.preset(args.preset), args.path)
    print(f"wrote {args.path}")
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {
        "run": _cmd_run,
        "converge": _cmd_converge,
        "check-mesh": _cmd_check_mesh,
        "write-config": _cmd_write_config,
    }[args.command]
    try:
        return handler(args)
    except (scenario.ConfigError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except driver.RunError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.cause, driver.NUMERICAL_ERRORS) else EXIT_CONFIG
    except driver.NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
