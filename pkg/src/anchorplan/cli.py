"""Command line: run, batch, report, validate-map."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .envmodel import LaneMap, MapError, default_map
from .harness import (MODES, Scenario, ScenarioError, compute_metrics, ego_gap_at_object_crossing,
                      load_logs, log_name, min_clearance, relative_motion, run_batch, run_scenario,
                      vil_scenario, write_report)
from .orchestrator import OrchestratorConfig, RunMode, format_log
from .policy import WeightsError, make_policy

EXIT_OK, EXIT_FAILURE, EXIT_BAD_INPUT = 0, 1, 2


class BadInput(Exception):
    pass


def _map(path):
    if path in (None, "default"):
        return default_map()
    try:
        return LaneMap.load(path)
    except (OSError, json.JSONDecodeError, MapError) as exc:
        raise BadInput(f"cannot load map {path}: {exc}") from None


def _policy(spec):
    try:
        return make_policy(spec)
    except (OSError, ValueError, WeightsError) as exc:
        raise BadInput(str(exc)) from None


def _modes(arg):
    return list(MODES) if arg == "both" else [RunMode(arg)]


def cmd_run(args) -> int:
    lane_map = _map(args.map)
    policy = _policy(args.policy)
    try:
        if args.scenario:
            scenario = Scenario.load(args.scenario)
            scenario.validate(lane_map)
        else:
            scenario = vil_scenario(lane_map, args.object_speed, args.ego_s0, args.ego_speed)
    except (OSError, json.JSONDecodeError, ScenarioError, KeyError) as exc:
        raise BadInput(f"bad scenario: {exc}") from None
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    failed = False
    for mode in _modes(args.mode):
        dump = str(Path(args.dump_rollout) / mode.value) if args.dump_rollout else None
        cfg = dataclasses.replace(OrchestratorConfig(), dump_rollout=dump)
        res = run_scenario(scenario, lane_map, mode, policy, cfg)
        failed |= res.status == "planner_failure"
        line = (f"{scenario.name} {mode.value}: {res.status}, {res.duration:.2f} s, "
                f"{len(res.runs)} planning runs, {len(res.collisions)} collisions")
        if scenario.type == "vil":
            rows = relative_motion(res.world, 1, 2, lane_map)
            gap = ego_gap_at_object_crossing(rows)
            line += f", min clearance {min_clearance(res.world, 1, 2):.2f} m"
            if gap is not None:
                line += f", ego at {gap:.2f} m when the object crosses"
            if out:
                (out / f"relative_motion_{mode.value}.txt").write_text(
                    "t|s_ego|s_obj\n" + "".join(f"{t:.2f}|{e:.3f}|{o:.3f}\n" for t, e, o in rows))
        print(line)
        if res.error:
            print(f"  planner failure: {res.error}", file=sys.stderr)
        if out:
            (out / log_name(scenario.name, mode.value)).write_text(format_log(res))
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_batch(args) -> int:
    if args.scenarios < 1:
        raise BadInput("--scenarios must be >= 1")
    _map(args.map)
    _policy(args.policy)
    rep, statuses = run_batch(args.scenarios, args.seed, args.out, args.policy, args.map, args.jobs)
    print((Path(args.out) / "summary.md").read_text(), end="")
    return EXIT_FAILURE if "planner_failure" in statuses else EXIT_OK


def cmd_report(args) -> int:
    paired = load_logs(args.logs)
    if not paired:
        raise BadInput(f"no episode logs in {args.logs}")
    rep = compute_metrics(paired, _map(args.map).intersection_polygon())
    out = args.out or args.logs
    write_report(rep, out)
    print((Path(out) / "summary.md").read_text(), end="")
    return EXIT_OK


def cmd_validate_map(args) -> int:
    path = args.path or args.map
    lane_map = _map(path)
    print(f"{path or 'default'}: {len(lane_map.lanes)} lanes, {len(lane_map.entries)} access lanes, "
          f"{len(lane_map.conflict_points)} conflict points")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--map", default=None, help="lane map file (default: shipped four-arm map)")
    common.add_argument("--policy", default="heuristic", help="'heuristic' or 'gnn:<weights file>'")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="anchorplan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run one scenario")
    r.add_argument("--scenario", help="scenario file; without it a scripted crossing is run")
    r.add_argument("--mode", choices=["single", "cyclic", "both"], default="both")
    r.add_argument("--object-speed", type=float, default=8.0)
    r.add_argument("--ego-s0", type=float, default=-55.0, help="ego start relative to the conflict point")
    r.add_argument("--ego-speed", type=float, default=8.0)
    r.add_argument("--seed", type=int, default=0, help="unused by deterministic runs; kept for symmetry")
    r.add_argument("--out", help="directory for episode logs and traces")
    r.add_argument("--dump-rollout", metavar="DIR", help="write per-step rollout traces")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("batch", parents=[common], help="random scenarios in both modes")
    b.add_argument("--scenarios", type=int, default=40)
    b.add_argument("--seed", type=int, default=7)
    b.add_argument("--out", required=True)
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(func=cmd_batch)

    rp = sub.add_parser("report", parents=[common], help="metrics from episode logs")
    rp.add_argument("logs", help="directory with paired episode logs")
    rp.add_argument("--out", help="report directory (default: the log directory)")
    rp.set_defaults(func=cmd_report)

    v = sub.add_parser("validate-map", parents=[common], help="check a lane map file")
    v.add_argument("path", nargs="?")
    v.set_defaults(func=cmd_validate_map)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BadInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
