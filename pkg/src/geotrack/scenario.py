"""End-to-end geo-tracking runs on synthetic worlds and APE metrics."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .calibration import GateThresholds, PoseObservation, calibrate
from .config import PipelineConfig
from .formats import trajectory_csv
from .geodesy import wrap_angle
from .projection import GridSpec, pad_aerial, sample_point_features
from .registration import HypothesisGrid, NoFixError, best_hypothesis, correlate, rotation_schedule
from .tracking import EkfState, ImuSample, Tracker, observation_to_world, prior_for_registration, relative_prior
from .world import SyntheticWorld, check_coverage
from .providers import SyntheticAerialProvider, SyntheticGroundProvider, tile_window

log = logging.getLogger(__name__)

ASSOCIATION_TOLERANCE = 0.01  # s
CELL_BORDER_TOLERANCE = 0.01  # px; true offsets this close to a cell border count for both cells


@dataclass
class RunMetrics:
    mean_ape: float
    max_ape: float
    per_step_errors: np.ndarray
    fix_acceptance_rate: float = 0.0
    fixes: int = 0
    argmax_hit_rate: float = float("nan")  # argmax on the true (rotation, dx, dy) cell
    translation_hit_rate: float = float("nan")  # argmax on the true (dx, dy) cell, any rotation

    def summary(self) -> str:
        return (f"mean_ape={self.mean_ape:.4f} m max_ape={self.max_ape:.4f} m "
                f"fixes={self.fixes} accepted={self.fix_acceptance_rate:.3f} "
                f"argmax_hits={self.argmax_hit_rate:.3f} translation_hits={self.translation_hit_rate:.3f}")


@dataclass
class FixRecord:
    timestamp: float
    accepted: bool
    reason: str
    true_offset: tuple  # (rotation_deg, dx_px, dy_px) of the true hypothesis, continuous
    argmax: tuple | None  # (rotation_deg, dx, dy) of the best-scoring hypothesis
    hit: bool
    translation_hit: bool = False
    z: np.ndarray | None = None
    best_score: float = float("nan")


@dataclass
class ScenarioResult:
    metrics: RunMetrics
    rows: list
    fixes: list = field(default_factory=list)

    def trajectory_csv(self) -> str:
        return trajectory_csv(self.rows)


def compute_ape(estimated, truth_times, truth_xy) -> RunMetrics:
    """2-D absolute position error after nearest-timestamp association (10 ms)."""
    est = np.asarray(estimated, dtype=float)
    truth_times = np.asarray(truth_times, dtype=float)
    truth_xy = np.asarray(truth_xy, dtype=float)
    if est.size == 0 or truth_times.size == 0:
        raise ValueError("empty trajectory")
    idx = np.clip(np.searchsorted(truth_times, est[:, 0]), 1, len(truth_times) - 1) if len(truth_times) > 1 \
        else np.zeros(len(est), dtype=int)
    if len(truth_times) > 1:
        left = idx - 1
        idx = np.where(np.abs(truth_times[left] - est[:, 0]) <= np.abs(truth_times[idx] - est[:, 0]), left, idx)
    matched = np.abs(truth_times[idx] - est[:, 0]) <= ASSOCIATION_TOLERANCE
    if not matched.any():
        raise ValueError("no estimated pose lies within 10 ms of a ground-truth pose")
    err = np.linalg.norm(est[matched, 1:3] - truth_xy[idx[matched]], axis=1)
    return RunMetrics(float(err.mean()), float(err.max()), err)


def hypothesis_grid(cfg: PipelineConfig, training: bool = False) -> HypothesisGrid:
    r = cfg.registration
    return HypothesisGrid(rotation_schedule(r.rotation_count, r.rotation_range), r.max_shift, r.max_shift,
                          r.alpha_train if training else r.alpha)


def grid_spec(cfg: PipelineConfig) -> GridSpec:
    r = cfg.registration
    size = r.grid_size or r.aerial_size + 2 * r.max_shift
    return GridSpec.centered(size, size, r.resolution)


class Registrar:
    """One registration fix: providers -> grid-maps -> volume -> calibrated observation."""

    def __init__(self, world: SyntheticWorld, cfg: PipelineConfig):
        self.world = world
        self.cfg = cfg
        self.grid = hypothesis_grid(cfg)
        self.spec = grid_spec(cfg)
        self.aerial = SyntheticAerialProvider(world)
        self.ground = SyntheticGroundProvider(world)
        g = cfg.gate
        self.thresholds = GateThresholds(g.max_variance, g.min_score, g.max_mahalanobis)
        q = cfg.registration.resolution
        self.floor = np.diag([q**2, q**2, math.radians(g.floor_yaw_deg) ** 2])
        self.rng = np.random.default_rng([world.config.seed, 5])

    def volume(self, state: EkfState, k: int):
        world, r = self.world, self.cfg.registration
        t_a, prior_world = prior_for_registration(state)
        offset = (0, 0)
        if r.randomize_aerial_center and r.aerial_center_shift > 0:
            lim = int(r.aerial_center_shift * r.aerial_size)
            room = (self.spec.height - r.aerial_size) // 2
            lim = min(lim, room)
            offset = tuple(int(v) for v in self.rng.integers(-lim, lim + 1, size=2))
        fa = self.aerial.aerial_features(t_a, self.spec, r.aerial_size, offset)
        ma = pad_aerial(fa, self.spec, offset)
        cloud = world.scan(k)
        t = float(world.times[k])
        maps = [self.ground.ground_features(i, t) for i in range(len(world.cameras))]
        pf = sample_point_features(maps, world.cameras, cloud)
        vol = correlate(ma, pf, cloud, self.grid, self.spec, workers=r.workers)
        return vol, t_a, prior_world

    def fix(self, state: EkfState, k: int):
        vol, t_a, prior_world = self.volume(state, k)
        obs_rel = calibrate(vol, relative_prior(t_a, prior_world), self.thresholds, self.floor)
        obs = observation_to_world(obs_rel, t_a)

        q = self.cfg.registration.resolution
        true_rel = t_a.inverse().compose(self.world.pose_at(k))
        true_offset = (math.degrees(true_rel.angle), true_rel.tx / q, -true_rel.ty / q)
        argmax, hit, t_hit = None, False, False
        try:
            angle, (dx, dy), score = best_hypothesis(vol)
            argmax = (math.degrees(angle), dx, dy)
            rot_err = np.abs(wrap_angle(vol.rotations - true_rel.angle))
            t_hit = (abs(dx - true_offset[1]) <= 0.5 + CELL_BORDER_TOLERANCE
                     and abs(dy - true_offset[2]) <= 0.5 + CELL_BORDER_TOLERANCE)
            hit = t_hit and abs(wrap_angle(angle - true_rel.angle)) <= rot_err.min() + 1e-12
        except NoFixError:
            pass
        record = FixRecord(float(self.world.times[k]), obs.accepted, obs.reason, true_offset, argmax, hit,
                           t_hit, obs.z, obs.diagnostics.best_score)
        return obs, record


def run_scenario(world: SyntheticWorld, cfg: PipelineConfig) -> ScenarioResult:
    """Predict with every IMU sample; register every ``registration.period`` seconds."""
    r = cfg.registration
    truth0 = world.truth[0]
    state = EkfState.initial(truth0[0], truth0[1], truth0[2], truth0[3], cfg.ekf.initial_sigma_xy,
                             cfg.ekf.initial_sigma_yaw, cfg.ekf.initial_sigma_v)
    tracker = Tracker(state, float(world.times[0]))
    tracker.record()
    registrar = None
    if r.enabled:
        registrar = Registrar(world, cfg)
        half = registrar.spec.width * r.resolution / 2
        check_coverage(world, half)
    steps_per_fix = max(1, int(round(r.period * world.config.imu_rate)))
    fixes: list[FixRecord] = []
    for k, (a, w) in enumerate(world.imu_measured, start=1):
        tracker.predict(ImuSample(float(world.times[k]), float(w), float(a), cfg.ekf.sigma_omega, cfg.ekf.sigma_a))
        if registrar is not None and k % steps_per_fix == 0:
            try:
                obs, record = registrar.fix(tracker.state, k)
                tracker.update(obs, float(world.times[k]))
                fixes.append(record)
            except Exception as err:  # keep tracking IMU-only, as for a rejected fix
                log.warning("registration at t=%.2f failed: %s", world.times[k], err)
                fixes.append(FixRecord(float(world.times[k]), False, f"error: {err}", (), None, False))
        tracker.record()
    metrics = compute_ape(np.array(tracker.rows), world.times, world.truth[:, :2])
    if fixes:
        metrics.fixes = len(fixes)
        metrics.fix_acceptance_rate = sum(f.accepted for f in fixes) / len(fixes)
        metrics.argmax_hit_rate = sum(f.hit for f in fixes) / len(fixes)
        metrics.translation_hit_rate = sum(f.translation_hit for f in fixes) / len(fixes)
    return ScenarioResult(metrics, tracker.rows, fixes)


def fix_csv(fixes) -> str:
    lines = ["timestamp,accepted,best_score,true_rot_deg,true_dx_px,true_dy_px,argmax_rot_deg,argmax_dx,argmax_dy,"
             "hit,translation_hit"]
    for f in fixes:
        true = f.true_offset if f.true_offset else (float("nan"),) * 3
        arg = f.argmax if f.argmax else (float("nan"),) * 3
        lines.append(",".join(str(v) for v in (f.timestamp, int(f.accepted), f.best_score, *true, *arg, int(f.hit),
                                                 int(f.translation_hit))))
    return "\n".join(lines) + "\n"
