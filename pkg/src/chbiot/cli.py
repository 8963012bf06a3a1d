"""Command-line entry point ``chbiot``.

Subcommands::

    chbiot converge --levels 2..5 --tau 1e-5 --T 0.01
    chbiot run CONFIG.yaml [--level K]
    chbiot compare-chl CONFIG.yaml [--level K]

Outputs go below ``$CHBIOT_OUTPUT_ROOT`` (default: the working directory).
The exit status is 0 only when every structure-preservation check passed.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .experiments import compare_chb_chl, run_convergence, run_named_experiment
from .scheme import RunError

log = logging.getLogger("chbiot")


def parse_levels(text: str) -> list:
    """``"2..5"`` or ``"2,3,4,5"`` -> [2, 3, 4, 5]."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            levels = list(range(lo, hi + 1))
        else:
            levels = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse levels {text!r}") from None
    if not levels:
        raise argparse.ArgumentTypeError("empty level range")
    return levels


def _output_root() -> Path:
    return Path(os.environ.get(cfgmod.OUTPUT_ROOT_ENV, "."))


def cmd_converge(args) -> int:
    out = _output_root() / args.output
    try:
        report = run_convergence(args.levels, args.tau, args.T, output_dir=out)
    except RunError as exc:
        print(f"convergence run failed: {exc}", file=sys.stderr)
        return 1
    print(report.format_table())
    print(f"written {out / 'convergence.csv'}")
    return 0 if report.structure_preserved else 1


def _summarise(summary) -> None:
    print(f"steps: {summary.steps}")
    print(f"worst normalised energy residual: {summary.worst_energy_residual:.3e}")
    print(f"cumulative mass residuals: phi {summary.mass_phi_cumulative:.3e}, "
          f"theta {summary.mass_theta_cumulative:.3e}")
    print(f"structure preserved: {summary.structure_preserved}")


def cmd_run(args) -> int:
    cfg = cfgmod.load(args.config)
    res = run_named_experiment(cfg, level=args.level)
    _summarise(res.summary)
    print(f"output: {res.output_dir}")
    if res.error:
        print(f"run failed: {res.error}", file=sys.stderr)
    return 0 if res.passed else 1


def cmd_compare(args) -> int:
    cfg = cfgmod.load(args.config)
    cmp = compare_chb_chl(cfg, level=args.level)
    print(f"max |phi_CHB - phi_CHL| over time: {cmp.max_over_time:.3e}")
    print(f"at final time: {cmp.final_difference:.3e}")
    print(f"output: {cmp.output_dir}")
    ok = cmp.chb.structure_preserved and cmp.chl.structure_preserved
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chbiot", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("converge", help="spatial convergence study")
    c.add_argument("--levels", type=parse_levels, default=parse_levels("2..5"),
                   help="coarse levels, e.g. 2..5 or 2,3,4 (default 2..5)")
    c.add_argument("--tau", type=float, default=1e-5, help="time step (default 1e-5)")
    c.add_argument("--T", type=float, default=0.01, help="final time (default 0.01)")
    c.add_argument("--output", default="convergence", help="directory below the output root")
    c.set_defaults(func=cmd_converge)

    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("config", help="YAML experiment file")
    r.add_argument("--level", type=int, default=None, help="override the mesh level")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("compare-chl", help="compare the CHB and CHL variants")
    m.add_argument("config", help="YAML experiment file")
    m.add_argument("--level", type=int, default=None, help="override the mesh level")
    m.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (cfgmod.ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
