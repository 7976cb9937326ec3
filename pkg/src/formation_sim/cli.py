"""Command-line surface.

Subcommands:

* ``simulate``: run a scenario and write trajectory/edge tables plus a
  JSON summary.
* ``check``: validate a scenario and print the admissibility certificate,
  reachability verdict, gain bound, and sampling bound.
* ``probe``: sweep sampling periods and report the fraction of
  near-formation starts that converge.
* ``consensus``: integrate the scalar consensus diagnostic on the
  scenario's graph.

Exit codes: 0 success/converged, 2 validation failure, 3 non-convergence
where convergence was asserted, 64 usage error.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from .analysis import consensus_check, report, sampled_stability_probe
from .output import write_trace
from .scenario import ScenarioError, load_scenario
from .simulation import (
    DegenerateStateError,
    NumericalDivergenceError,
    SimulationWarning,
    run,
)
from .topology import has_directed_spanning_tree

EX_OK = 0
EX_RUNTIME = 1
EX_VALIDATION = 2
EX_NOT_CONVERGED = 3
EX_USAGE = 64

CONSENSUS_TOL = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EX_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="formation-sim",
        description="deterministic simulator for target-encirclement formation control",
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p_sim = sub.add_parser("simulate", help="run a scenario and write outputs")
    p_sim.add_argument("--config", required=True, help="scenario YAML file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--mode", choices=["continuous", "sampled"],
                       help="override the scenario stepping mode")
    p_sim.add_argument("--seed", type=int, help="override the scenario seed")
    p_sim.add_argument("--tol-radial", type=float, default=1e-3,
                       help="radial convergence tolerance (default 1e-3)")
    p_sim.add_argument("--tol-spacing", type=float, default=1e-2,
                       help="spacing convergence tolerance in rad (default 1e-2)")
    p_sim.add_argument("--require-convergence", action="store_true",
                       help="exit 3 if the run does not converge")

    p_check = sub.add_parser("check", help="validate a scenario and print diagnostics")
    p_check.add_argument("--config", required=True, help="scenario YAML file")

    p_probe = sub.add_parser("probe", help="stability sweep over sampling periods")
    p_probe.add_argument("--config", required=True, help="scenario YAML file")
    p_probe.add_argument("--h-grid", required=True, metavar="A:B:STEP",
                         help="inclusive sampling-period grid, e.g. 0.01:0.1:0.01")
    p_probe.add_argument("--trials", type=int, default=5,
                         help="trials per period (default 5)")
    p_probe.add_argument("--out", required=True, help="output directory")
    p_probe.add_argument("--t-end", type=float, default=200.0,
                         help="duration of each trial in seconds (default 200)")

    p_cons = sub.add_parser("consensus", help="scalar consensus diagnostic")
    p_cons.add_argument("--config", required=True, help="scenario YAML file")
    p_cons.add_argument("--t-end", type=float, required=True,
                        help="integration horizon in seconds")
    p_cons.add_argument("--dt", type=float, default=0.02,
                        help="integration step (default 0.02)")
    return parser


def _parse_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("grid must be A:B:STEP")
    a, b, step = (float(p) for p in parts)
    if step <= 0 or b < a:
        raise ValueError("grid requires B >= A and STEP > 0")
    count = int(np.floor((b - a) / step + 1e-9)) + 1
    return [a + k * step for k in range(count)]


def _cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(args.config).with_overrides(args.mode, args.seed)
    except ScenarioError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EX_VALIDATION
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SimulationWarning)
        try:
            trace = run(scenario.config, scenario.formation, scenario.topology,
                        scenario.params, scenario.target)
        except (DegenerateStateError, NumericalDivergenceError) as exc:
            print(f"run aborted: {exc}", file=sys.stderr)
            return EX_RUNTIME
    rep = report(trace, scenario.formation, scenario.params,
                 tol_radial=args.tol_radial, tol_spacing=args.tol_spacing)
    paths = write_trace(trace, args.out, report=rep, validation=scenario.validation)
    for note in scenario.validation.warnings:
        print(f"note: {note}")
    print(f"samples: {trace.times.size}  t_end: {trace.times[-1]:g}")
    print(f"converged: {rep.converged}  "
          f"(radial tol {rep.tol_radial:g}, spacing tol {rep.tol_spacing:g} rad)")
    print(f"max radial error: {rep.radial_errors_final.max():.3e}")
    if rep.spacing_errors_final.size:
        print(f"max spacing error: {rep.spacing_errors_final.max():.3e} rad")
    print(f"steady rotation rate: {np.mean(rep.steady_angular_rates):.6g} rad/s")
    print(f"min pairwise distance: {rep.min_pairwise_distance:.6g}")
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    if args.require_convergence and not rep.converged:
        return EX_NOT_CONVERGED
    return EX_OK


def _cmd_check(args) -> int:
    try:
        scenario = load_scenario(args.config)
    except ScenarioError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EX_VALIDATION
    v = scenario.validation
    n = scenario.topology.n
    print(f"scenario: {scenario.path}")
    print(f"agents: {n}  sensing edges: {len(scenario.topology.observation_pairs())}")
    print(f"admissible: {v.admissible}")
    print("certificate (rad):")
    for i, d in enumerate(v.certificate):
        print(f"  agent {i + 1}: {d:.9g}")
    print(f"directed spanning tree: {v.has_spanning_tree}")
    print(f"coupling gain c = {v.coupling_gain:g} "
          f"(must exceed {v.gain_lower_bound:g})")
    print(f"sampling stability bound h_max = {v.sampling_stability_bound:.9g} s")
    if scenario.config.mode == "sampled":
        h = scenario.config.h or scenario.params.h
        print(f"sampling period h = {h:g} s")
    for note in v.warnings:
        print(f"note: {note}")
    return EX_OK


def _cmd_probe(args) -> int:
    try:
        scenario = load_scenario(args.config)
        h_values = _parse_grid(args.h_grid)
    except ScenarioError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EX_VALIDATION
    except ValueError as exc:
        print(f"invalid grid: {exc}", file=sys.stderr)
        return EX_USAGE
    points = sampled_stability_probe(
        scenario.formation, scenario.topology, scenario.params,
        h_values, trials=args.trials, seed=scenario.config.seed,
        t_end=args.t_end,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = out_dir / "probe.csv"
    with table.open("w") as handle:
        handle.write("h,fraction_converged,trials\n")
        for point in points:
            handle.write(f"{point.h:.15g},{point.fraction_converged:.15g},"
                         f"{len(point.outcomes)}\n")
    h_max = scenario.validation.sampling_stability_bound
    print(f"h_max = {h_max:.9g} s; {args.trials} trials per period")
    for point in points:
        marker = "<" if point.h < h_max else ">="
        print(f"h = {point.h:<10.6g} ({marker} h_max)  "
              f"converged {point.fraction_converged:.0%}")
    print(f"wrote table: {table}")
    return EX_OK


def _cmd_consensus(args) -> int:
    try:
        scenario = load_scenario(args.config)
    except ScenarioError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EX_VALIDATION
    rng = np.random.default_rng(scenario.config.seed)
    xi0 = rng.uniform(-np.pi, np.pi, scenario.topology.n)
    spread = consensus_check(scenario.topology, scenario.params, xi0,
                             t_end=args.t_end, dt=args.dt)
    tree = has_directed_spanning_tree(scenario.topology)
    print(f"directed spanning tree: {tree}")
    print(f"final disagreement after {args.t_end:g} s: {spread:.6e}")
    if tree and spread >= CONSENSUS_TOL:
        print(f"consensus asserted by graph structure but disagreement >= "
              f"{CONSENSUS_TOL:g}", file=sys.stderr)
        return EX_NOT_CONVERGED
    return EX_OK


def cli(argv=None) -> int:
    """Parse and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EX_USAGE
    if args.command is None:
        parser.print_help()
        return EX_USAGE
    handlers = {
        "simulate": _cmd_simulate,
        "check": _cmd_check,
        "probe": _cmd_probe,
        "consensus": _cmd_consensus,
    }
    return handlers[args.command](args)


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
