"""Command-line entry point: ``farmpc run | solve-once | validate <scenario>``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .chamber import INPUT_NAMES, STATE_NAMES, box_violation
from .disturbance import WeatherFormatError, load_weather_csv
from .harness import (RunAborted, ScenarioError, load_scenario, run_closed_loop,
                      write_outputs)
from .mpc import SolverError, control_step
from .params import ParameterError, check_params, load_params

OUT_ENV = "FARMPC_OUT"
EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2

logger = logging.getLogger("farmpc")


def _output_dir(args, scenario):
    if args.out:
        return Path(args.out)
    if scenario.output_dir is not None:
        return scenario.output_dir
    return Path(os.environ.get(OUT_ENV, "farmpc_out"))


def _load(path):
    scenario = load_scenario(path)
    p, pp = load_params(scenario.params_path)
    return scenario, p, pp


def cmd_run(args):
    scenario = load_scenario(args.scenario)
    out = _output_dir(args, scenario)
    hour = max(1, int(round(3600.0 / scenario.dt)))

    def progress(k, n, record):
        if not args.quiet and (k % hour == 0 or k == n):
            print(f"t = {record.t + scenario.dt:8.0f} s  T = {record.x_next[0]:6.2f} degC  "
                  f"({k}/{n} ticks)", file=sys.stderr)

    try:
        records, summary = run_closed_loop(scenario, progress=progress)
    except RunAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_outputs(records, summary, out)
    if not args.quiet:
        print(summary.to_text(), end="")
        print(f"wrote run.csv, summary.txt, summary.json, plot.gp to {out}")
    return EXIT_OK


def cmd_solve_once(args):
    scenario, p, pp = _load(args.scenario)
    weather = load_weather_csv(scenario.weather_path)
    if scenario.C_out is not None:
        weather = weather.with_C_out(scenario.C_out)
    cfg = scenario.ocp_config().validate()
    x0 = np.array(scenario.x0)
    try:
        u, sol = control_step(x0, float(args.t), weather, cfg, p, pp)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    np.set_printoptions(precision=6, suppress=False, linewidth=120)
    print(f"t_k: {args.t:g}")
    print("x0: " + ", ".join(f"{n}={v:.6g}" for n, v in zip(STATE_NAMES, x0)))
    print("applied: " + ", ".join(f"{n}={v:.6g}" for n, v in zip(INPUT_NAMES, u)))
    print("u_seq:")
    for i, row in enumerate(sol.u_seq):
        print(f"  {i}: " + " ".join(f"{v:10.4g}" for v in row))
    print(f"eps_star: {sol.eps_star:.6g}")
    print(f"objective: {sol.objective:.10g}")
    print(f"iterations: {sol.iterations}")
    print(f"converged: {sol.converged}")
    print(f"predicted_T: " + " ".join(f"{v:.4f}" for v in sol.predicted_states[:, 0]))
    return EXIT_OK


def cmd_validate(args):
    try:
        scenario = load_scenario(args.scenario, check_paths=False)
    except FileNotFoundError as exc:
        print(f"FAIL scenario: {exc}")
        return EXIT_INPUT
    failures = []
    if not scenario.params_path.exists():
        failures.append(f"parameters: file not found: {scenario.params_path}")
    else:
        failures += [f"parameters: {msg}" for msg in check_params(scenario.params_path)]
    weather = None
    if not scenario.weather_path.exists():
        failures.append(f"weather: file not found: {scenario.weather_path}")
    else:
        try:
            weather = load_weather_csv(scenario.weather_path)
        except WeatherFormatError as exc:
            failures.append(f"weather: {exc}")
    warnings = []
    viol = box_violation(scenario.x0)
    for name, v, x in zip(STATE_NAMES, viol, scenario.x0):
        if v > 0:
            warnings.append(f"x0: {name} = {x:g} lies {v:.3g} outside the operating box")
    if weather is not None:
        end = scenario.start_time + scenario.duration + scenario.ocp_config().N * scenario.dt
        if end > weather.end_time + weather.sample_interval:
            warnings.append(f"weather: series ends at {weather.end_time:g} s, run needs {end:g} s "
                            "(last value will be held)")
        if scenario.start_time < weather.start_time:
            failures.append(f"weather: series starts at {weather.start_time:g} s, "
                            f"after the run start {scenario.start_time:g} s")
    for msg in failures:
        print(f"FAIL {msg}")
    for msg in warnings:
        print(f"WARN {msg}")
    print("PASS" if not failures else f"{len(failures)} check(s) failed")
    return EXIT_OK if not failures else EXIT_INPUT


def build_parser():
    parser = argparse.ArgumentParser(prog="farmpc", description=__doc__)
    parser.add_argument("--quiet", action="store_true", help="only print errors")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="closed-loop simulation")
    run.add_argument("scenario")
    run.add_argument("--out", help=f"output directory (default: scenario, then ${OUT_ENV})")
    run.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    run.set_defaults(func=cmd_run)

    once = sub.add_parser("solve-once", help="solve one control step at time --t")
    once.add_argument("scenario")
    once.add_argument("--t", type=float, default=0.0, help="time since midnight [s]")
    once.add_argument("--out", help=argparse.SUPPRESS)
    once.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    once.set_defaults(func=cmd_solve_once)

    val = sub.add_parser("validate", help="check scenario, parameters and weather file")
    val.add_argument("scenario")
    val.add_argument("--out", help=argparse.SUPPRESS)
    val.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ScenarioError, ParameterError, WeatherFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
