# HeraldComb: runs in a standard CPython 3.9+ environment.
"""Command-line front end: ``python HeraldComb/run.py [global flags] <command> [flags]``."""

import argparse
import logging
import os
import sys

from heraldcomb_errors import HeraldCombError
from heraldcomb_logging import configure_logging, debug_mode_from_env
from HeraldComb_CLI.commands import (
    cmd_analytic, cmd_correlate, cmd_g2, cmd_init_config, cmd_preset, cmd_resonance, cmd_simulate, format_report,
)
from HeraldComb_CLI.config import OUTPUT_DIR_ENV, load_config
from HeraldComb_CLI.presets import PRESETS
from HeraldComb_Correlator.g2_estimator import FIT_FORMS

logger = logging.getLogger('HeraldComb.CLI')

SCENARIO_CHOICES = ("a", "b", "c", "direct", "absorption-cell", "split-signal")


def _add_global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON run configuration (see init-config).")
    parser.add_argument("--output", default=default,
                        help="Output directory (default: run.output_dir, then ${}).".format(OUTPUT_DIR_ENV))
    parser.add_argument("--seed", type=int, default=default, help="Override run.seed.")
    parser.add_argument("--debug", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="Log at DEBUG level to the console as well as the log file.")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="heraldcomb",
        description="Simulate and analyze heralded single-photon experiments from a multimode pair source.",
    )
    _add_global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, help_text):
        command_parser = sub.add_parser(name, help=help_text, description=help_text)
        _add_global_flags(command_parser, suppress=True)
        return command_parser

    p = add("analytic", "Tabulate the multimode and single-mode correlation curves to CSV.")
    p.add_argument("--m-max", type=int, help="Mode truncation (default: envelope weight below 1e-3).")
    p.add_argument("--range-ns", type=float, help="Half width of the delay grid, ns.")
    p.add_argument("--points", type=int, help="Number of grid points.")

    p = add("simulate", "Simulate one scenario and write a tag file.")
    p.add_argument("--scenario", choices=SCENARIO_CHOICES, help="a=direct, b=absorption-cell, c=split-signal.")
    p.add_argument("--od", type=float, help="Cell optical density (scenario b).")
    p.add_argument("--pair-rate", type=float, help="Pair generation rate, 1/s.")
    p.add_argument("--duration", type=float, help="Run duration, s.")

    p = add("correlate", "Coincidence histogram of a tag file to CSV.")
    p.add_argument("tagfile", help="Tag file to read.")
    p.add_argument("--ref", type=int, help="Reference (start) channel.")
    p.add_argument("--sig", type=int, help="Signal (stop) channel.")
    p.add_argument("--bin-ns", type=float, help="Bin width, ns.")
    p.add_argument("--range-ns", type=float, help="Half range of the histogram, ns.")
    p.add_argument("--workers", type=int, help="Threads for the in-memory histogram.")

    p = add("g2", "Heralded auto-correlation g2 of a three-channel tag file.")
    p.add_argument("tagfile", help="Tag file to read.")
    p.add_argument("--trigger", type=int, help="Trigger (idler) channel.")
    p.add_argument("--arm-a", type=int, help="First signal arm channel.")
    p.add_argument("--arm-b", type=int, help="Second signal arm channel.")
    p.add_argument("--window-ns", type=float, help="Coincidence window, ns.")
    p.add_argument("--max-window-ns", type=float, help="Largest extrapolation window, ns (below the smallest: no fit).")
    p.add_argument("--window-step-ns", type=float, help="Step between extrapolation windows, ns.")
    p.add_argument("--fit-form", choices=sorted(FIT_FORMS), help="Model of N23 against the window.")
    p.add_argument("--bunching", type=float, help="Factor applied to N23 (2 for thermal pair statistics).")
    p.add_argument("--n23-csv", help="Also write N23 per extrapolation window to this CSV.")

    p = add("resonance", "Resonant fraction from tag files at a low and a high optical density.")
    p.add_argument("tagfile_low", help="Tag file at the low optical density.")
    p.add_argument("tagfile_high", help="Tag file at the high optical density.")
    p.add_argument("--ref", type=int, help="Reference channel.")
    p.add_argument("--sig", type=int, help="Signal channel.")
    p.add_argument("--od-low", type=float, help="Low optical density.")
    p.add_argument("--od-high", type=float, help="High optical density.")
    p.add_argument("--window-ns", type=float, help="Coincidence window, ns.")

    p = add("preset", "Run a named pipeline.")
    p.add_argument("name", choices=sorted(PRESETS), help="Preset to run.")

    p = add("init-config", "Write the default configuration document.")
    p.add_argument("path", nargs="?", help="Destination (default: <output>/heraldcomb_config.json).")
    return parser


def _dispatch(args, config, output_dir):
    if args.command == "analytic":
        return cmd_analytic(config, output_dir, args.m_max, args.range_ns, args.points)
    if args.command == "simulate":
        return cmd_simulate(config, output_dir, args.scenario, args.od, args.pair_rate, args.duration)
    if args.command == "correlate":
        return cmd_correlate(config, args.tagfile, output_dir, args.ref, args.sig, args.bin_ns, args.range_ns,
                             args.workers)
    if args.command == "g2":
        return cmd_g2(config, args.tagfile, output_dir, args.trigger, args.arm_a, args.arm_b, args.window_ns,
                      args.max_window_ns, args.window_step_ns, args.fit_form, args.bunching, args.n23_csv)
    if args.command == "resonance":
        return cmd_resonance(config, args.tagfile_low, args.tagfile_high, output_dir, args.ref, args.sig,
                             args.od_low, args.od_high, args.window_ns)
    if args.command == "preset":
        return cmd_preset(config, args.name, output_dir)
    return cmd_init_config(args.path or os.path.join(output_dir, "heraldcomb_config.json"))


def main(argv=None):
    """Run one command; returns the process exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(debug_mode=args.debug or debug_mode_from_env())
    try:
        config = load_config(args.config)
        config = config.with_section("run", seed=args.seed, output_dir=args.output)
    except HeraldCombError as e:
        logger.error("Configuration rejected: %s", e, exc_info=True)
        print("error: {}".format(e), file=sys.stderr)
        return e.exit_code

    response, code = _dispatch(args, config, config.output_dir())
    stream = sys.stdout if code == 0 else sys.stderr
    for line in format_report(response):
        print(line, file=stream)
    return code
