"""Command-line entry point: ``mmtransport plan | simulate | validate``.

Exit codes: 0 success, 2 validation failure, 3 planning failure,
4 simulation failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np
import yaml

from . import __version__
from .global_planner import GlobalPlan, NoGoalFormation, NoPath, NoStartFormation, plan_global
from .mmr_model import formation_from_dict
from .nmpc_planner import PlannerParams
from .sim_harness import GOAL_REACHED, audit, run
from .svg import margin_svg, plan_svg, snapshot_svg
from .world import ParseError, ValidationError, load_scenario, parse_scenario, validate_scenario

EXIT_OK, EXIT_INVALID, EXIT_PLAN, EXIT_SIM = 0, 2, 3, 4

# overrides accepted by --set beyond the planner parameters
GLOBAL_KEYS = {"coverage_target": float, "max_regions": int, "timeout_factor": float}

log = logging.getLogger("mmtransport")


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise CliError(EXIT_INVALID, f"--set expects key=value, got {item!r}")
        out[key.strip()] = yaml.safe_load(val)
    return out


def split_overrides(scenario_params: dict, overrides: dict):
    """Planner parameters from scenario defaults plus overrides, and global options."""
    merged = {**scenario_params, **overrides}
    glob = {k: GLOBAL_KEYS[k](merged.pop(k)) for k in list(merged) if k in GLOBAL_KEYS}
    try:
        params = PlannerParams.from_dict(merged)
    except (TypeError, ValueError) as e:
        raise CliError(EXIT_INVALID, f"bad parameter override: {e}") from e
    return params, glob


def load_world(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise CliError(EXIT_INVALID, f"cannot read scenario: {e}") from e
    try:
        return load_scenario(text)
    except ValidationError as e:
        raise CliError(EXIT_INVALID, "invalid scenario:\n  " + "\n  ".join(e.violations)) from e
    except ParseError as e:
        raise CliError(EXIT_INVALID, f"invalid scenario: {e}") from e


def _stamp(world, params, seed) -> dict:
    return {"scenario_hash": world.source_hash, "seed": int(seed),
            "params": params.to_dict(), "version": __version__}


def _comment(stamp) -> str:
    return json.dumps(stamp, sort_keys=True)


def _write(out_dir, name, text):
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def make_plan(world, params, glob, seed):
    spec = formation_from_dict(world.formation)
    try:
        plan = plan_global(world, spec, rng=np.random.default_rng(seed), d_safe=params.d_safe,
                           v_op=params.v_op,
                           coverage_target=glob.get("coverage_target", 0.95),
                           max_regions=glob.get("max_regions", 40))
    except (NoPath, NoStartFormation, NoGoalFormation) as e:
        raise CliError(EXIT_PLAN, f"{type(e).__name__}: {e}") from e
    plan.meta.update(_stamp(world, params, seed))
    return spec, plan


def cmd_plan(args) -> int:
    world = load_world(args.scenario)
    params, glob = split_overrides(world.planner_params, args.overrides)
    _, plan = make_plan(world, params, glob, args.seed)
    os.makedirs(args.out, exist_ok=True)
    p = _write(args.out, "plan.json", plan.dumps())
    _write(args.out, "regions.svg", plan_svg(world, plan, _comment(_stamp(world, params, args.seed))))
    print(f"plan: {len(plan.regions)} regions, path length {plan.path_length:.3f} m -> {p}")
    return EXIT_OK


def _load_plan(path, world):
    try:
        with open(path, encoding="utf-8") as fh:
            plan = GlobalPlan.loads(fh.read())
    except (OSError, ValueError, KeyError) as e:
        raise CliError(EXIT_INVALID, f"cannot read plan: {e}") from e
    if plan.meta.get("scenario_hash") != world.source_hash:
        raise CliError(EXIT_INVALID, "plan file does not match the scenario (hash differs)")
    return plan


def cmd_simulate(args) -> int:
    world = load_world(args.scenario)
    params, glob = split_overrides(world.planner_params, args.overrides)
    if args.plan:
        plan = _load_plan(args.plan, world)
        spec = formation_from_dict(world.formation)
    else:
        spec, plan = make_plan(world, params, glob, args.seed)
    os.makedirs(args.out, exist_ok=True)
    stamp = _stamp(world, params, args.seed)
    if not args.plan:
        _write(args.out, "plan.json", plan.dumps())
        _write(args.out, "regions.svg", plan_svg(world, plan, _comment(stamp)))

    def progress(t0, hp):
        log.info("t0 %.2f  com %s  %s", t0, np.round(hp.states[0].p, 3), hp.status)

    simlog = run(world, plan, params, spec, seed=args.seed,
                 timeout_factor=glob.get("timeout_factor", 3.0), progress=progress)
    _write(args.out, "log.csv", simlog.to_csv())
    times = simlog.times
    dyn = np.array([s.margin_dynamic for s in simlog.steps]).reshape(len(times), -1).T
    _write(args.out, "margins.svg",
           margin_svg(times, [s.margin_static for s in simlog.steps], dyn,
                      lines=(params.d_safe, params.d_safe_dyn), comment=_comment(stamp)))
    com = simlog.com
    for t in args.snapshot_times or []:
        k = int(np.argmin(np.abs(times - t)))
        _write(args.out, f"snapshot_{t:07.2f}.svg",
               snapshot_svg(world, spec, simlog.steps[k].config, float(times[k]),
                            trail=com[:k + 1], comment=_comment(stamp)))
    report = audit(simlog, world, spec, params)
    rep = {**report.to_dict(), **stamp, "message": simlog.message}
    _write(args.out, "audit.json", json.dumps(rep, indent=2, sort_keys=True, default=float) + "\n")
    print(f"simulate: {simlog.status} at t={times[-1]:.2f} s, "
          f"min static margin {report.min_static_margin:.4f} m, "
          f"min dynamic margin {min(report.min_dynamic_margin, default=float('inf')):.4f} m")
    if simlog.status != GOAL_REACHED:
        print(f"simulation failed: {simlog.status} {simlog.message}", file=sys.stderr)
        return EXIT_SIM
    if report.violations:
        print("audit flagged:\n  " + "\n  ".join(report.violations[:20]), file=sys.stderr)
        return EXIT_SIM
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        with open(args.scenario, encoding="utf-8") as fh:
            doc = parse_scenario(fh.read())
    except OSError as e:
        raise CliError(EXIT_INVALID, f"cannot read scenario: {e}") from e
    except ParseError as e:
        raise CliError(EXIT_INVALID, str(e)) from e
    violations = validate_scenario(doc)
    if violations:
        raise CliError(EXIT_INVALID, "invalid scenario:\n  " + "\n  ".join(violations))
    print(f"{args.scenario}: ok")
    return EXIT_OK


def _times(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated times: {text}") from e


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmtransport",
                                 description="Cooperative object transport planning for mobile manipulators.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    p = sub.add_parser("plan", help="global planning: regions, graph and reference path")
    common(p)
    p.set_defaults(func=cmd_plan)
    p = sub.add_parser("simulate", help="closed-loop receding-horizon simulation")
    common(p)
    p.add_argument("--plan", help="plan file from a previous `plan` run")
    p.add_argument("--snapshot-times", type=_times, default=[])
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("validate", help="check a scenario file without planning")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if hasattr(args, "overrides"):
            args.overrides = parse_overrides(args.overrides)
        if getattr(args, "seed", 0) < 0:
            raise CliError(EXIT_INVALID, "--seed must be non-negative")
        return args.func(args)
    except CliError as e:
        print(str(e), file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
