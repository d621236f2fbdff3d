"""Command-line entry point: ``geotrack {simulate,track,register,selfcheck}``.

Exit codes: 0 success, 1 run or suite failure, 2 usage error (bad arguments,
unknown config keys, unreadable inputs).
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .formats import (FormatError, read_feature_map, read_point_cloud, read_rig, volume_csv,
                      write_feature_map, write_trajectory_csv)
from .geodesy import Pose2
from .projection import FeatureMap, GridSpec, pad_aerial, sample_point_features
from .registration import HypothesisGrid, NoFixError, best_hypothesis, correlate, rotation_schedule
from .scenario import fix_csv, run_scenario
from .selfcheck import run_selfcheck
from .world import generate_world

log = logging.getLogger("geotrack")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _load(args):
    if args.config and not Path(args.config).is_file():
        raise UsageError(f"config file {args.config} not found")
    cfg = load_config(args.config, _overrides(args.set))
    if getattr(args, "workers", None):
        cfg.registration.workers = args.workers
    return cfg


def _setup_logging(log_file=None, verbose=False):
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file is not None:
        handlers.append(logging.FileHandler(log_file, mode="w", encoding="utf-8"))
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", handlers=handlers, force=True)


def _metrics_text(m) -> str:
    return "".join(f"{k} = {v}\n" for k, v in (
        ("mean_ape", repr(m.mean_ape)), ("max_ape", repr(m.max_ape)), ("fixes", m.fixes),
        ("fix_acceptance_rate", repr(m.fix_acceptance_rate)), ("argmax_hit_rate", repr(m.argmax_hit_rate)),
        ("translation_hit_rate", repr(m.translation_hit_rate))))


def _run(cfg):
    log.info("config:\n%s", cfg.echo())
    world = generate_world(cfg, workers=cfg.registration.workers)
    log.info("world digest %s", world.digest())
    result = run_scenario(world, cfg)
    log.info("%s", result.metrics.summary())
    return world, result


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _setup_logging(out / "run.log", args.verbose)
    world, result = _run(cfg)
    write_feature_map(out / "aerial.fgmap", FeatureMap(world.texture))
    s = world.texture_spec
    (out / "aerial.txt").write_text(f"resolution = {s.resolution!r}\norigin_x = {s.origin_x!r}\n"
                                    f"origin_y = {s.origin_y!r}\n", encoding="utf-8")
    np.savetxt(out / "truth.csv", np.column_stack([world.times, world.truth]), delimiter=",",
               header="timestamp,x,y,yaw,v,a,omega", comments="", fmt="%.17g")
    np.savetxt(out / "imu.csv", np.column_stack([world.times[1:], world.imu_measured]), delimiter=",",
               header="timestamp,acceleration,turn_rate", comments="", fmt="%.17g")
    write_trajectory_csv(out / "trajectory.csv", result.rows)
    (out / "metrics.txt").write_text(_metrics_text(result.metrics), encoding="utf-8")
    (out / "fixes.csv").write_text(fix_csv(result.fixes), encoding="utf-8")
    if args.dump_plot_data:
        rows = np.asarray(result.rows)
        steps = np.rint(rows[:, 0] * cfg.world.imu_rate).astype(int)
        truth = world.truth[steps]
        np.savetxt(out / "plot_trajectory.csv",
                   np.column_stack([rows[:, 0], rows[:, 1:3], truth[:, :2], result.metrics.per_step_errors]),
                   delimiter=",", header="timestamp,est_x,est_y,true_x,true_y,ape", comments="", fmt="%.9g")
    print(result.metrics.summary())
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = _load(args)
    _setup_logging(None, args.verbose)
    _, result = _run(cfg)
    write_trajectory_csv(args.trajectory, result.rows)
    print(result.metrics.summary())
    return EXIT_OK


def _parse_prior(text) -> Pose2:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError("--pose-prior expects x,y,phi")
    try:
        x, y, phi = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"--pose-prior: cannot parse {text!r}") from None
    return Pose2(phi, x, y)


def cmd_register(args) -> int:
    cfg = _load(args)
    _setup_logging(None, args.verbose)
    prior = _parse_prior(args.pose_prior)
    fa = read_feature_map(args.aerial)
    ground = [read_feature_map(p) for p in args.ground.split(",") if p]
    cams = read_rig(args.rig)
    cloud = read_point_cloud(args.cloud)
    if len(ground) != len(cams):
        raise UsageError(f"{len(ground)} ground maps but {len(cams)} cameras in the rig")
    r = cfg.registration
    if fa.height != fa.width:
        raise UsageError("the aerial tile must be square")
    size = r.grid_size or fa.height + 2 * r.max_shift
    spec = GridSpec.centered(size, size, r.resolution)
    grid = HypothesisGrid(rotation_schedule(r.rotation_count, r.rotation_range), r.max_shift, r.max_shift, r.alpha)
    ma = pad_aerial(fa, spec)
    pf = sample_point_features(ground, cams, cloud)
    vol = correlate(ma, pf, cloud, grid, spec, workers=r.workers)
    Path(args.out).write_text(volume_csv(vol), encoding="utf-8")
    try:
        angle, (dx, dy), score = best_hypothesis(vol)
    except NoFixError as err:
        log.error("%s", err)
        return EXIT_FAILURE
    best = prior.compose(Pose2(angle, dx * r.resolution, -dy * r.resolution))
    print(f"best hypothesis: rotation={math.degrees(angle):.4f} deg dx={dx} px dy={dy} px score={score:.6f}")
    print(f"pose: x={best.tx:.4f} y={best.ty:.4f} phi={best.angle:.6f}")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    results = run_selfcheck(seed=args.seed)
    for res in results:
        print(res.line())
    ok = all(r.passed for r in results)
    print("selfcheck: " + ("all suites passed" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geotrack", description="Aerial-image registration and IMU tracking.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--workers", type=int, help="registration threads (results do not depend on it)")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("simulate", help="generate a synthetic world and run the tracker on it")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dump-plot-data", action="store_true", help="also write plot_trajectory.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run the tracking scenario and write its trajectory")
    common(p)
    p.add_argument("--trajectory", required=True, help="output trajectory CSV")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("register", help="score all pose hypotheses for one set of sensor data")
    common(p)
    p.add_argument("--aerial", required=True, help="FGMAP1 aerial tile centered on the prior pose")
    p.add_argument("--ground", required=True, help="comma-separated FGMAP1 camera feature maps")
    p.add_argument("--cloud", required=True, help="FPCL1 point cloud in the vehicle frame")
    p.add_argument("--rig", required=True, help="camera rig file")
    p.add_argument("--pose-prior", required=True, help="prior pose x,y,phi")
    p.add_argument("--out", required=True, help="volume CSV")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("selfcheck", help="run the oracle suites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, FormatError, FileNotFoundError, IsADirectoryError) as err:
        print(f"geotrack: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:  # reported, not re-raised: the exit code carries the outcome
        log.exception("run failed: %s", err)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
