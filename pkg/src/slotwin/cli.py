"""Command-line entry point: ``slotwin {simulate,run,evaluate,plot}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, PipelineConfig, dump_config, load_config
from .evaluation import EvaluationError, dead_reckoning, format_table, relative_errors
from .io import BundleError, load_bundle, read_trajectory, save_bundle, write_trajectory, from_scenario
from .pipeline import PipelineError, run_pipeline
from .plotting import plot_trajectories
from .simulator import TEMPLATES, NoiseSpec, ScenarioError, ScenarioSpec, build_scenario, suggested_config

log = logging.getLogger("slotwin")

FRAME_BUDGET_MS = 20.0


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    noise = NoiseSpec.noise_free() if args.noise_free else None
    spec = ScenarioSpec(args.template, seed=args.seed, frames=args.frames, noise=noise)
    scenario = build_scenario(spec)
    out = save_bundle(from_scenario(scenario), args.out)
    (out / "config.txt").write_text(dump_config(suggested_config(spec)))
    n_det = sum(len(d) for d in scenario.detections)
    print(f"wrote {scenario.name}: {scenario.frames} frames, {len(scenario.objects)} objects, "
          f"{n_det} detections -> {out}")
    return 0


def _pose_record(tid, frame, pose, gt_id, motion) -> dict:
    x, y, z = (float(v) for v in pose.translation)
    rec = {"track": tid, "frame": frame, "x": x, "y": y, "z": z, "yaw": pose.yaw,
           "motion": motion, "row": [float(v) for v in pose.to_row()]}
    if gt_id is not None:
        rec["gt_id"] = gt_id
    return rec


def cmd_run(args) -> int:
    bundle = load_bundle(args.data)
    cfg = load_config(args.config) if args.config else PipelineConfig()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_pipeline(bundle, cfg)

    write_trajectory(out / "ego_poses.txt", result.ego)
    lines = []
    for tid in sorted(result.objects):
        for frame, pose, gt_id in result.objects[tid]:
            lines.append(json.dumps(_pose_record(tid, frame, pose, gt_id, result.motion[tid]), sort_keys=True))
    (out / "objects.jsonl").write_text("".join(l + "\n" for l in lines))
    (out / "association.jsonl").write_text("".join(r.to_json() + "\n" for r in result.reports))
    _dump_json(out / "graph.json", result.graph.snapshot())

    metrics = {"sequence": bundle.name, "frames": bundle.frames}
    if result.metrics is not None:
        metrics["optimized"] = result.metrics.to_dict()
        metrics["odometry-only"] = result.baseline.to_dict()
        table = format_table([(bundle.name, {"odometry-only": result.baseline, "optimized": result.metrics})])
        (out / "metrics.txt").write_text(table + "\n")
        print(table)
    if result.association is not None:
        metrics["association"] = result.association.to_dict()
    _dump_json(out / "metrics.json", metrics)

    mean_ms = result.mean_frame_ms()
    # wall-clock numbers change run to run, so they live apart from the deterministic outputs
    _dump_json(out / "timing.json", {
        "mean_frame_ms": mean_ms,
        "mean_tracking_ms": sum(t["tracking_ms"] for t in result.timing) / len(result.timing),
        "mean_optimization_ms": sum(t["optimization_ms"] for t in result.timing) / len(result.timing),
        "frames": result.timing,
    })
    if mean_ms > FRAME_BUDGET_MS:
        log.warning("mean frame time %.1f ms exceeds the %.0f ms budget", mean_ms, FRAME_BUDGET_MS)

    odo = dead_reckoning(bundle.odometry, (bundle.ground_truth or {}).get(0))
    plot_trajectories(out / "trajectory.svg", result.ego, bundle.ground_truth, odo,
                      {tid: e for tid, e in result.objects.items()}, title=bundle.name)
    print(f"{bundle.frames} frames, {len(result.objects)} tracked objects, {mean_ms:.1f} ms/frame -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    est = read_trajectory(args.est)
    gt = read_trajectory(args.gt)
    report = relative_errors(est, gt)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        print(format_table([(Path(args.est).stem, {"estimate": report})], columns=("estimate",)))
        print(f"RRE {report.rre_deg:.6g} deg, ATE {report.ate:.6g} m")
    return 0


def cmd_plot(args) -> int:
    est = read_trajectory(args.traj)
    gt = read_trajectory(args.gt) if args.gt else None
    plot_trajectories(args.out, est, gt, title=args.title)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slotwin", description="Sliding-window SLAM with object tracking.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset bundle")
    s.add_argument("--template", required=True, choices=TEMPLATES)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True, help="output bundle directory")
    s.add_argument("--frames", type=int, default=50)
    s.add_argument("--noise-free", action="store_true", help="exact odometry and detections")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("run", help="run the pipeline on a bundle")
    s.add_argument("--data", required=True, help="bundle directory")
    s.add_argument("--config", help="key = value config file (defaults if omitted)")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("evaluate", help="RTE / RRE / ATE of a pose file against ground truth")
    s.add_argument("--est", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--json", action="store_true", help="print the report as JSON")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("plot", help="render a pose file as a top-down SVG")
    s.add_argument("--traj", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--gt", help="optional ground-truth pose file to overlay")
    s.add_argument("--title")
    s.set_defaults(func=cmd_plot)
    return p


_EXPECTED = (BundleError, ConfigError, EvaluationError, PipelineError, ScenarioError, OSError, ValueError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except _EXPECTED as exc:
        print(f"slotwin {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
