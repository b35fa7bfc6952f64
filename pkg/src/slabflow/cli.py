"""Command line front end.

Subcommands::

    slabflow run <scenario>             solve and write frames + manifest
    slabflow refine <scenario>          refinement study across halved steps
    slabflow check-flux <scenario>      sampled structure-condition report
    slabflow geometry <scenario>        knots, sections and jump summary
    slabflow verify <scenario>          a-posteriori estimate reports

Exit codes: 0 success, 1 a verification report failed, 2 bad input,
3 the nonlinear solver stalled.
"""

import argparse
import sys

from .diagnostics import (
    energy_report,
    l1_contraction_report,
    max_principle_report,
    refinement_study,
)
from .errors import InapplicableDiagnosticError, ScenarioError, SlabflowError, SolverStallError
from .expressions import parse_expr
from .flux import check_structure
from .geometry import classify_jump, section, side_limits
from .scenario_io import load_scenario, scenario_hash, write_frames
from .stitcher import run_scheme


def _load(path):
    scenario = load_scenario(path)
    return scenario


def _cmd_run(args):
    scenario = _load(args.scenario)
    field, report = run_scheme(scenario)
    out = scenario.output
    paths = write_frames(
        field, out.directory, mode=out.frames_mode, scenario_digest=scenario_hash(scenario)
    )
    print(f"slices={len(report.knots) - 1} delta={report.delta:.6g} "
          f"newton={report.total_newton()} wall={report.wall_time:.3f}s")
    print(f"wrote {len(paths)} files to {out.directory}")
    return 0


def _cmd_refine(args):
    scenario = _load(args.scenario)
    study = refinement_study(scenario, levels=args.levels)
    for line in study.summary_lines():
        print(line)
    return 0


def _cmd_check_flux(args):
    scenario = _load(args.scenario)
    report = check_structure(scenario.flux, samples=args.samples, seed=args.seed)
    for line in report.summary_lines():
        print(line)
    return 0 if report.passed else 1


def _cmd_geometry(args):
    scenario = _load(args.scenario)
    dom = scenario.domain
    jumps = dom.jump_times()
    print(f"kind={dom.kind} horizon={dom.horizon:.6g} jumps={len(jumps)}")
    for t in (0.0, *jumps, dom.horizon):
        before, after = side_limits(dom, t)
        if t in (0.0, dom.horizon):
            reg = section(dom, t) if t == 0.0 else before
            print(f"t={t:.6g} section={_fmt_region(reg)}")
        else:
            grow, shrink = classify_jump(dom, t)
            print(f"t={t:.6g} before={_fmt_region(before)} after={_fmt_region(after)} "
                  f"new={_fmt_region(grow)} lost={_fmt_region(shrink)}")
    return 0


def _fmt_region(region):
    if not region.intervals:
        return "(empty)"
    return " ".join(f"({lo:.6g}, {hi:.6g})" for lo, hi in region.intervals)


def _cmd_verify(args):
    scenario = _load(args.scenario)
    reports = []
    reports.append(max_principle_report(scenario))
    reports.append(energy_report(scenario))
    if args.u0b is not None:
        u0b = parse_expr(args.u0b, ("x", "y") if scenario.grid.dim == 2 else ("x",))
        try:
            reports.append(l1_contraction_report(scenario, scenario.u0, u0b))
        except InapplicableDiagnosticError as exc:
            print(f"SKIP l1_contraction: {exc}")
    for report in reports:
        print(report.line())
    return 0 if all(r.passed for r in reports) else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="slabflow",
        description="Time-sliced solver for nonlinear diffusion on moving domains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a scenario and write frames")
    run.add_argument("scenario")
    run.set_defaults(func=_cmd_run)

    refine = sub.add_parser("refine", help="compare runs under halved time steps")
    refine.add_argument("scenario")
    refine.add_argument("--levels", type=int, default=3)
    refine.set_defaults(func=_cmd_refine)

    check = sub.add_parser("check-flux", help="sampled structure-condition check")
    check.add_argument("scenario")
    check.add_argument("--samples", type=int, default=10000)
    check.add_argument("--seed", type=int, default=0)
    check.set_defaults(func=_cmd_check_flux)

    geom = sub.add_parser("geometry", help="print knots, sections and jumps")
    geom.add_argument("scenario")
    geom.set_defaults(func=_cmd_geometry)

    verify = sub.add_parser("verify", help="run a-posteriori estimate reports")
    verify.add_argument("scenario")
    verify.add_argument("--u0b", default=None,
                        help="second initial datum for the L1 comparison report")
    verify.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverStallError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SlabflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
