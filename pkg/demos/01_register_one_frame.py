"""Register one lidar/camera frame against an aerial tile and calibrate the result.

The aerial tile is cut around a prior pose that is off the true pose by a
few pixels and a degree. The correlation volume should peak at the hypothesis
that undoes that error, and the calibrated observation should sit close to it.
The likelihood (s + 1) is flat, so the prior has to be wider than the error
for the fix to carry information; a tight prior is rejected as uninformative.
"""
import math
from pathlib import Path

import numpy as np

from geotrack.calibration import GateThresholds, GaussianPrior, calibrate
from geotrack.config import load_config
from geotrack.geodesy import Pose2
from geotrack.projection import pad_aerial, sample_point_features
from geotrack.providers import SyntheticAerialProvider, SyntheticGroundProvider
from geotrack.registration import best_hypothesis, correlate
from geotrack.scenario import grid_spec, hypothesis_grid
from geotrack.world import generate_world

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "tracking_5min.cfg", {"world.duration": "30"})
world = generate_world(cfg)
k = 1500
truth = world.pose_at(k)
prior_pose = truth.compose(Pose2(math.radians(-1.0), -0.8, 0.6))
print(f"true pose   x={truth.tx:8.3f} y={truth.ty:8.3f} yaw={math.degrees(truth.angle):7.3f} deg")
print(f"prior pose  x={prior_pose.tx:8.3f} y={prior_pose.ty:8.3f} yaw={math.degrees(prior_pose.angle):7.3f} deg")

spec = grid_spec(cfg)
fa = SyntheticAerialProvider(world).aerial_features(prior_pose, spec, cfg.registration.aerial_size)
ma = pad_aerial(fa, spec)
ground = SyntheticGroundProvider(world)
maps = [ground.ground_features(i, float(world.times[k])) for i in range(len(world.cameras))]
cloud = world.scan(k)
pf = sample_point_features(maps, world.cameras, cloud)
print(f"{len(cloud)} lidar points, {pf.valid.sum()} seen by a camera")

vol = correlate(ma, pf, cloud, hypothesis_grid(cfg), spec)
angle, (dx, dy), score = best_hypothesis(vol)
expected = prior_pose.inverse().compose(truth)
q = cfg.registration.resolution
print(f"volume {vol.scores.shape}, {vol.valid.mean():.0%} of hypotheses pass the overlap gate")
print(f"argmax      rot={math.degrees(angle):6.3f} deg dx={dx:+d} px dy={dy:+d} px score={score:.3f}")
print(f"true offset rot={math.degrees(expected.angle):6.3f} deg dx={expected.tx / q:+.2f} px "
      f"dy={-expected.ty / q:+.2f} px")

# prior in the tile frame, wider than the initial error; gate from the scenario config
g = cfg.gate
for sd_xy in (1.0, 2.0):
    prior = GaussianPrior(np.zeros(3), np.diag([sd_xy**2, sd_xy**2, math.radians(1.0) ** 2]))
    obs = calibrate(vol, prior, GateThresholds(g.max_variance, g.min_score, g.max_mahalanobis))
    sd = np.sqrt(np.diag(obs.R))
    print(f"prior sd {sd_xy} m: calibrated z=({obs.z[0]:+.2f} m, {obs.z[1]:+.2f} m, {math.degrees(obs.z[2]):+.2f} deg), "
          f"sd=({sd[0]:.2f} m, {sd[1]:.2f} m, {math.degrees(sd[2]):.2f} deg)")
    print(f"gate: accepted={obs.accepted} variance={obs.diagnostics.translational_variance:.2f} m^2 "
          f"mahalanobis={obs.diagnostics.mahalanobis:.2f} {obs.reason}")
