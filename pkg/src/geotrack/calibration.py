"""Turn a confidence volume into a Gaussian pose observation for the tracker.

Scores become a likelihood ``L(h) = (s + 1) / sum(s' + 1)`` over valid
hypotheses. The observation mean is the MAP hypothesis under the tracker's
Gaussian prior. Its covariance is measured on the prior-windowed posterior
and then un-windowed in information form::

    P      = L * N(prior) / Z
    S_post = sum_h P(h) (h - z)(h - z)^T          (angle residuals wrapped)
    R      = (S_post^-1 - S_prior^-1)^-1

which returns exactly ``cov(L)`` when ``L`` is itself Gaussian.

All poses here are ``(x, y, phi)`` relative to the registration frame T_A.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geodesy import wrap_angle
from .registration import ConfidenceVolume


class CalibrationError(ValueError):
    """The volume carries no usable pose information."""


@dataclass
class Likelihood:
    values: np.ndarray  # (K,)
    poses: np.ndarray  # (K, 3) metric (x, y, phi)
    scores: np.ndarray | None = None  # (K,) raw scores, when derived from a volume

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, 3)
        if self.values.shape != (len(self.poses),):
            raise ValueError("one likelihood value per hypothesis pose is required")


@dataclass
class GaussianPrior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(3)
        self.cov = np.asarray(self.cov, dtype=float).reshape(3, 3)
        if not np.allclose(self.cov, self.cov.T, rtol=1e-9, atol=1e-15):
            raise ValueError("prior covariance must be symmetric")
        try:
            np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError:
            raise ValueError("prior covariance must be positive definite") from None

    def residuals(self, poses) -> np.ndarray:
        r = np.asarray(poses, dtype=float) - self.mean
        r[..., 2] = wrap_angle(r[..., 2])
        return r

    def log_density(self, poses) -> np.ndarray:
        """Unnormalized log density (the constant is irrelevant for MAP)."""
        r = self.residuals(poses)
        return -0.5 * np.einsum("ki,ij,kj->k", r, np.linalg.inv(self.cov), r)


@dataclass
class Diagnostics:
    translational_variance: float = np.inf
    best_score: float = -1.0
    mahalanobis: float = np.inf


@dataclass
class PoseObservation:
    z: np.ndarray
    R: np.ndarray
    accepted: bool = False
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    reason: str = ""


@dataclass
class GateThresholds:
    max_variance: float = 4.0
    min_score: float = 0.05
    max_mahalanobis: float = 3.0


def scores_to_likelihood(vol: ConfidenceVolume) -> Likelihood:
    if vol.empty:
        raise CalibrationError("no valid hypotheses")
    scores = vol.scores[vol.valid]
    weights = scores + 1.0
    total = weights.sum()
    if not total > 0:
        raise CalibrationError("all valid scores are -1")
    return Likelihood(weights / total, vol.hypothesis_poses()[vol.valid], scores)


def _posterior(lik: Likelihood, prior: GaussianPrior) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logp = np.log(lik.values) + prior.log_density(lik.poses)
    logp -= logp.max()
    p = np.exp(logp)
    return p / p.sum()


def map_estimate(lik: Likelihood, prior: GaussianPrior) -> np.ndarray:
    """Grid hypothesis maximizing ``L(h) * N(h; prior)``; ties go to the first one."""
    return lik.poses[_map_index(lik, prior)].copy()


def _map_index(lik, prior) -> int:
    with np.errstate(divide="ignore"):
        logp = np.log(lik.values) + prior.log_density(lik.poses)
    return int(np.argmax(logp))


def windowed_covariance(lik: Likelihood, prior: GaussianPrior, z) -> np.ndarray:
    """Covariance of the prior-windowed posterior about ``z``."""
    p = _posterior(lik, prior)
    r = lik.poses - np.asarray(z, dtype=float)
    r[:, 2] = wrap_angle(r[:, 2])
    return np.einsum("k,ki,kj->ij", p, r, r)


def estimate_covariance(lik: Likelihood, prior: GaussianPrior, z) -> np.ndarray:
    """Un-windowed observation covariance ``(S_post^-1 - S_prior^-1)^-1``."""
    post = windowed_covariance(lik, prior, z)
    try:
        info = np.linalg.inv(post) - np.linalg.inv(prior.cov)
    except np.linalg.LinAlgError:
        raise CalibrationError("posterior covariance is singular") from None
    info = 0.5 * (info + info.T)
    if np.linalg.eigvalsh(info).min() <= 0:
        raise CalibrationError("posterior is not narrower than the prior")
    r = np.linalg.inv(info)
    return 0.5 * (r + r.T)


def floor_covariance(r, floor) -> np.ndarray:
    """Smallest inflation of ``r`` that dominates ``floor`` (both SPD)."""
    lf = np.linalg.cholesky(floor)
    lf_inv = np.linalg.inv(lf)
    w, v = np.linalg.eigh(lf_inv @ r @ lf_inv.T)
    m = lf @ (v * np.maximum(w, 1.0)) @ v.T @ lf.T
    return 0.5 * (m + m.T)


def reliability_gate(obs: PoseObservation, thresholds: GateThresholds) -> bool:
    d = obs.diagnostics
    return bool(
        d.translational_variance <= thresholds.max_variance
        and d.best_score >= thresholds.min_score
        and d.mahalanobis <= thresholds.max_mahalanobis
    )


def calibrate(
    vol: ConfidenceVolume,
    prior: GaussianPrior,
    thresholds: GateThresholds | None = None,
    floor=None,
) -> PoseObservation:
    """Full chain: likelihood, MAP, covariance, floor and gate.

    ``floor`` defaults to ``diag(q^2, q^2, (0.25 deg)^2)`` with ``q`` the
    volume's resolution. Failures yield a rejected observation, never raise.
    """
    thresholds = thresholds or GateThresholds()
    if floor is None:
        floor = np.diag([vol.resolution**2, vol.resolution**2, np.radians(0.25) ** 2])
    nan3 = np.full(3, np.nan)
    try:
        lik = scores_to_likelihood(vol)
    except CalibrationError as err:
        return PoseObservation(nan3, np.full((3, 3), np.nan), False, reason=str(err))
    k = _map_index(lik, prior)
    z = lik.poses[k].copy()
    r = prior.residuals(z[None])[0]
    diag = Diagnostics(best_score=float(lik.scores[k]),
                       mahalanobis=float(np.sqrt(r @ np.linalg.solve(prior.cov, r))))
    try:
        R = floor_covariance(estimate_covariance(lik, prior, z), floor)
    except CalibrationError as err:
        return PoseObservation(z, np.full((3, 3), np.nan), False, diag, str(err))
    diag.translational_variance = float(np.trace(R[:2, :2]))
    obs = PoseObservation(z, R, False, diag)
    obs.accepted = reliability_gate(obs, thresholds)
    if not obs.accepted:
        obs.reason = "gated"
    return obs
