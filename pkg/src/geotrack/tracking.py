"""Extended Kalman filter with a constant turn-rate and acceleration (CTRA) model.

State order is ``(x, y, phi, v, a, omega)``: position (m), heading (rad,
counterclockwise from +x), speed (m/s), longitudinal acceleration (m/s^2) and
yaw rate (rad/s). IMU turn rate and acceleration act as control inputs: each
prediction overwrites ``a`` and ``omega`` with the measured values and
integrates the CTRA equations in closed form over ``dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .calibration import GaussianPrior, PoseObservation
from .geodesy import Pose2, wrap_angle

X, Y, PHI, V, A, OMEGA = range(6)
OMEGA_EPS = 1e-4


class OutOfOrderError(ValueError):
    pass


@dataclass
class EkfState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(6).copy()
        self.mean[PHI] = wrap_angle(self.mean[PHI])
        self.cov = np.asarray(self.cov, dtype=float).reshape(6, 6).copy()

    @classmethod
    def initial(cls, x=0.0, y=0.0, phi=0.0, v=0.0, sigma_xy=0.1, sigma_phi=0.005, sigma_v=0.1):
        cov = np.diag([sigma_xy**2, sigma_xy**2, sigma_phi**2, sigma_v**2, 1e-4, 1e-6])
        return cls(np.array([x, y, phi, v, 0.0, 0.0]), cov)

    @property
    def pose(self) -> Pose2:
        return Pose2(self.mean[PHI], self.mean[X], self.mean[Y])


@dataclass
class ImuSample:
    timestamp: float
    turn_rate: float
    acceleration: float
    sigma_omega: float = 0.01
    sigma_a: float = 0.1


def ctra_motion(x, y, phi, v, a, omega, dt):
    """Closed-form CTRA step; returns ``(x, y, phi, v)`` after ``dt`` seconds.

    For ``|omega| <= 1e-4`` a first-order expansion in ``omega`` about the
    straight-line solution is used (exact at ``omega == 0``).
    """
    return _ctra(x, y, phi, v, a, omega, dt, jacobian=False)


def _ctra(x, y, phi, v, a, w, T, jacobian):
    phi1 = phi + w * T
    v1 = v + a * T
    s0, c0 = math.sin(phi), math.cos(phi)
    s1, c1 = math.sin(phi1), math.cos(phi1)
    if abs(w) > OMEGA_EPS:
        x1 = x + (v1 * s1 - v * s0) / w + a * (c1 - c0) / w**2
        y1 = y + (-v1 * c1 + v * c0) / w + a * (s1 - s0) / w**2
        if not jacobian:
            return x1, y1, phi1, v1
        # columns: phi, v, a, omega
        dx = [
            (v1 * c1 - v * c0) / w + a * (s0 - s1) / w**2,
            (s1 - s0) / w,
            T * s1 / w + (c1 - c0) / w**2,
            v1 * T * c1 / w - (v1 * s1 - v * s0) / w**2 - a * T * s1 / w**2 - 2 * a * (c1 - c0) / w**3,
        ]
        dy = [
            (v1 * s1 - v * s0) / w + a * (c1 - c0) / w**2,
            (c0 - c1) / w,
            -T * c1 / w + (s1 - s0) / w**2,
            v1 * T * s1 / w + (v1 * c1 - v * c0) / w**2 + a * T * c1 / w**2 - 2 * a * (s1 - s0) / w**3,
        ]
    else:
        dist = v * T + 0.5 * a * T**2  # integral of speed
        mom = v * T**2 / 2 + a * T**3 / 3  # integral of speed * t
        x1 = x + dist * c0 - w * mom * s0
        y1 = y + dist * s0 + w * mom * c0
        if not jacobian:
            return x1, y1, phi1, v1
        dx = [-dist * s0 - w * mom * c0, T * c0 - w * T**2 / 2 * s0, T**2 / 2 * c0 - w * T**3 / 3 * s0, -mom * s0]
        dy = [dist * c0 - w * mom * s0, T * s0 + w * T**2 / 2 * c0, T**2 / 2 * s0 + w * T**3 / 3 * c0, mom * c0]
    return (x1, y1, phi1, v1), np.array(dx), np.array(dy)


def ctra_jacobians(mean, dt):
    """Jacobians of one CTRA step w.r.t. the state and w.r.t. the (a, omega) inputs.

    ``a`` and ``omega`` are replaced by the inputs, so their state columns are zero.
    """
    x, y, phi, v, a, w = mean
    _, dx, dy = _ctra(x, y, phi, v, a, w, dt, jacobian=True)
    F = np.zeros((6, 6))
    F[X, X] = F[Y, Y] = F[PHI, PHI] = F[V, V] = 1.0
    F[X, PHI], F[X, V] = dx[0], dx[1]
    F[Y, PHI], F[Y, V] = dy[0], dy[1]
    G = np.zeros((6, 2))
    G[X] = dx[2:]
    G[Y] = dy[2:]
    G[PHI, 1] = dt
    G[V, 0] = dt
    G[A, 0] = 1.0
    G[OMEGA, 1] = 1.0
    return F, G


def ctra_predict(state: EkfState, imu: ImuSample, dt: float) -> EkfState:
    if dt <= 0:
        raise ValueError("prediction step must have dt > 0")
    mean = state.mean.copy()
    mean[A] = imu.acceleration
    mean[OMEGA] = imu.turn_rate
    F, G = ctra_jacobians(mean, dt)
    x1, y1, phi1, v1 = ctra_motion(*mean, dt)
    mean[X], mean[Y], mean[PHI], mean[V] = x1, y1, phi1, v1
    noise = np.diag([imu.sigma_a**2, imu.sigma_omega**2])
    cov = F @ state.cov @ F.T + G @ noise @ G.T
    return EkfState(mean, 0.5 * (cov + cov.T))


def ekf_update(state: EkfState, obs: PoseObservation) -> EkfState:
    """Fuse an ``(x, y, phi)`` observation; rejected observations change nothing."""
    if not obs.accepted:
        return state
    H = np.zeros((3, 6))
    H[0, X] = H[1, Y] = H[2, PHI] = 1.0
    innov = np.asarray(obs.z, dtype=float) - state.mean[:3]
    innov[2] = wrap_angle(innov[2])
    S = H @ state.cov @ H.T + obs.R
    K = np.linalg.solve(S, H @ state.cov).T
    mean = state.mean + K @ innov
    IKH = np.eye(6) - K @ H
    cov = IKH @ state.cov @ IKH.T + K @ obs.R @ K.T
    return EkfState(mean, 0.5 * (cov + cov.T))


def prior_for_registration(state: EkfState):
    """Prior pose T_A and the world-frame marginal Gaussian over ``(x, y, phi)``."""
    return state.pose, GaussianPrior(state.mean[:3], state.cov[:3, :3])


def _frame_jacobian(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def relative_prior(t_a: Pose2, prior: GaussianPrior) -> GaussianPrior:
    """Express a world-frame pose prior in the registration frame T_A."""
    rel = t_a.inverse().compose(Pose2(prior.mean[2], prior.mean[0], prior.mean[1]))
    J = _frame_jacobian(-t_a.angle)
    return GaussianPrior(rel.as_array(), J @ prior.cov @ J.T)


def observation_to_world(obs: PoseObservation, t_a: Pose2) -> PoseObservation:
    """Map a T_A-relative observation into the world frame."""
    if not np.all(np.isfinite(obs.z)):
        return obs
    world = t_a.compose(Pose2(obs.z[2], obs.z[0], obs.z[1]))
    R = obs.R
    if np.all(np.isfinite(R)):
        J = _frame_jacobian(t_a.angle)
        R = J @ R @ J.T
    return PoseObservation(world.as_array(), R, obs.accepted, obs.diagnostics, obs.reason)


@dataclass
class Tracker:
    """Sequential filter owner; enforces timestamp order and records a trajectory."""

    state: EkfState
    time: float = 0.0
    rows: list = field(default_factory=list)

    def predict(self, imu: ImuSample) -> None:
        if imu.timestamp <= self.time:
            raise OutOfOrderError(f"IMU sample at {imu.timestamp} is not after {self.time}")
        self.state = ctra_predict(self.state, imu, imu.timestamp - self.time)
        self.time = imu.timestamp

    def update(self, obs: PoseObservation, timestamp: float) -> None:
        if timestamp < self.time:
            raise OutOfOrderError(f"observation at {timestamp} is older than filter time {self.time}")
        self.state = ekf_update(self.state, obs)

    def record(self) -> None:
        m, P = self.state.mean, self.state.cov
        self.rows.append((self.time, m[X], m[Y], m[PHI], P[X, X], P[Y, Y], P[PHI, PHI]))
