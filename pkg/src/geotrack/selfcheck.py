"""Oracle suites: every fast path checked against an independent slow one.

Each suite draws random instances from a seeded generator and reports the
largest disagreement it saw against its tolerance:

* correlation   FFT volume vs. direct masked-cosine evaluation
* gradients     analytic soft-loss gradient vs. central differences
* soft_hard     soft loss at a tiny temperature vs. the hard loss
* calibration   covariance recovery from discretized Gaussian likelihoods
* ctra          closed-form motion vs. RK4 integration of the kinematics
* mercator      local-frame distances vs. haversine
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .calibration import GaussianPrior, Likelihood, estimate_covariance, map_estimate
from .geodesy import EARTH_RADIUS, GeoPose, LocalFrame, haversine
from .loss import LossConfig, L_hard, L_soft, TripletBatch, grad_L_soft, l_soft, similarity_and_grads
from .projection import GridSpec, SparseGridMap
from .registration import HypothesisGrid, correlate_direct, correlate_maps
from .tracking import OMEGA_EPS, ctra_motion


@dataclass
class SuiteResult:
    name: str
    max_error: float
    tolerance: float
    passed: bool
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = "".join(f" {k}={v}" for k, v in self.detail.items())
        return f"{status} {self.name}: max_error={self.max_error:.3e} tol={self.tolerance:.1e} ({self.seconds:.1f}s){extra}"


# -- correlation ---------------------------------------------------------------

def random_sparse_map(rng, height, width, channels, density, resolution=0.2) -> SparseGridMap:
    spec = GridSpec.centered(width, height, resolution)
    valid = rng.random((height, width)) < density
    feats = rng.standard_normal((height, width, channels)) * valid[..., None]
    return SparseGridMap(spec, feats, valid)


def random_correlation_instance(rng, max_size=32, max_channels=8):
    """Aerial map with a valid central window plus one sparse ground map per rotation."""
    h = int(rng.integers(8, max_size + 1))
    w = int(rng.integers(8, max_size + 1))
    c = int(rng.integers(1, max_channels + 1))
    ma = random_sparse_map(rng, h, w, c, 1.0)
    top, left = int(rng.integers(0, h // 4 + 1)), int(rng.integers(0, w // 4 + 1))
    ma.valid[:top] = False
    ma.valid[:, :left] = False
    ma.valid[h - int(rng.integers(0, h // 4 + 1)):] = False
    ma.features[~ma.valid] = 0.0
    n_rot = int(rng.integers(1, 4))
    grid = HypothesisGrid(np.radians(rng.uniform(-8, 8, n_rot)), int(rng.integers(0, min(h, 12))),
                          int(rng.integers(0, min(w, 12))), float(rng.choice([0.3, 0.6])))
    ground = [random_sparse_map(rng, h, w, c, rng.uniform(0.05, 0.6)) for _ in range(n_rot)]
    return ma, ground, grid


def check_correlation(n=100, seed=0, correlate_fn=None, tolerance=1e-5) -> SuiteResult:
    """FFT scores against direct evaluation at every hypothesis; gating must agree exactly."""
    correlate_fn = correlate_fn or correlate_maps
    rng = np.random.default_rng([seed, 11])
    start = time.perf_counter()
    worst, gate_mismatch = 0.0, 0
    for _ in range(n):
        ma, ground, grid = random_correlation_instance(rng)
        fast = correlate_fn(ma, ground, grid)
        slow = correlate_direct(ma, ground, grid)
        gate_mismatch += int(np.sum(fast.valid != slow.valid))
        both = fast.valid & slow.valid
        if both.any():
            worst = max(worst, float(np.max(np.abs(fast.scores[both] - slow.scores[both]))))
    return SuiteResult("correlation", worst, tolerance, worst < tolerance and gate_mismatch == 0,
                       time.perf_counter() - start, {"gate_mismatches": gate_mismatch})


# -- loss gradients ----------------------------------------------------------------

def random_loss_instance(rng, size=6, channels=4, hypotheses=5, config=None):
    """Small maps whose triplet deltas sit in the sigmoid's sensitive range."""
    config = config or LossConfig()
    while True:
        ma = random_sparse_map(rng, size, size, channels, 0.9)
        base = ma.features + 0.0
        ground = []
        for h in range(hypotheses):
            mix = 0.9 if h == 0 else rng.uniform(0.3, 0.95)
            feats = mix * base + (1 - mix) * rng.standard_normal(base.shape)
            valid = ma.valid & (rng.random(ma.valid.shape) < 0.8)
            ground.append(SparseGridMap(ma.spec, feats * valid[..., None], valid))
        scores = [similarity_and_grads(ma, g)[0] for g in ground]
        d = TripletBatch.from_scores(scores, 0)
        deltas = d.positive_distance + config.margin - d.negative_distances
        if np.all(np.abs(deltas / config.temperature) < 5) and np.any(np.abs(deltas) > 1e-3):
            return ma, ground


def _soft_parts(ma, ground, positive, config):
    scores = np.array([similarity_and_grads(ma, g)[0] for g in ground])
    batch = TripletBatch.from_scores(scores, positive)
    d = batch.positive_distance + config.margin - batch.negative_distances
    numer = float(np.sum(l_soft(d, config.temperature)))
    denom = float(np.sum(1.0 / (1.0 + np.exp(-d / config.temperature))))
    return numer, denom


def _perturbed(maps, which, index, step):
    m = maps[which]
    feats = m.features.copy()
    feats[index] += step
    out = list(maps)
    out[which] = SparseGridMap(m.spec, feats, m.valid)
    return out


def gradient_errors(ma, ground, config, step=1e-4, positive=0):
    """Relative errors of the analytic gradient against numerator-only and full-quotient FD.

    Relative error is ``max |analytic - fd| / max |fd|`` over all valid entries.
    """
    res = grad_L_soft(ma, ground, positive, config)
    _, denom0 = _soft_parts(ma, ground, positive, config)
    maps = [ma] + list(ground)
    analytic = [res.grad_aerial] + list(res.grad_ground)
    diffs_num, diffs_full, scale_num, scale_full = [], [], [], []
    for which, m in enumerate(maps):
        for idx in zip(*np.nonzero(m.valid)):
            for ch in range(m.features.shape[-1]):
                index = (*idx, ch)
                plus = _perturbed(maps, which, index, step)
                minus = _perturbed(maps, which, index, -step)
                np_, dp = _soft_parts(plus[0], plus[1:], positive, config)
                nm, dm = _soft_parts(minus[0], minus[1:], positive, config)
                fd_num = (np_ - nm) / (2 * step) / denom0
                fd_full = (np_ / dp - nm / dm) / (2 * step)
                a = analytic[which][index]
                diffs_num.append(abs(a - fd_num))
                diffs_full.append(abs(a - fd_full))
                scale_num.append(abs(fd_num))
                scale_full.append(abs(fd_full))
    return max(diffs_num) / max(scale_num), max(diffs_full) / max(scale_full)


def check_gradients(n=20, seed=0, tolerance=1e-4) -> SuiteResult:
    rng = np.random.default_rng([seed, 12])
    config = LossConfig()
    start = time.perf_counter()
    worst, min_full = 0.0, np.inf
    for _ in range(n):
        ma, ground = random_loss_instance(rng, size=8, channels=4, hypotheses=6, config=config)
        rel, rel_full = gradient_errors(ma, ground, config)
        worst, min_full = max(worst, rel), min(min_full, rel_full)
    # the full quotient must disagree, otherwise the stop-gradient is not in effect
    ok = worst < tolerance and min_full > 10 * tolerance
    return SuiteResult("gradients", worst, tolerance, ok, time.perf_counter() - start,
                       {"min_full_quotient_error": f"{min_full:.2e}"})


def check_soft_hard(n=100, seed=0, tolerance=1e-3, temperature=1e-4, exclusion=1e-2) -> SuiteResult:
    rng = np.random.default_rng([seed, 13])
    start = time.perf_counter()
    worst, done = 0.0, 0
    while done < n:
        scores = rng.uniform(-1, 1, int(rng.integers(2, 30)))
        batch = TripletBatch.from_scores(scores, int(rng.integers(0, len(scores))))
        cfg_soft = LossConfig(0.1, temperature)
        d = batch.positive_distance + cfg_soft.margin - batch.negative_distances
        if np.min(np.abs(d)) < exclusion:
            continue
        worst = max(worst, abs(L_soft(batch, cfg_soft).value - L_hard(batch, LossConfig()).value))
        done += 1
    return SuiteResult("soft_hard", worst, tolerance, worst < tolerance, time.perf_counter() - start)


# -- calibration ----------------------------------------------------------------

def _random_spd(rng, stds, max_corr=0.5):
    c = rng.uniform(-max_corr, max_corr, 3)
    corr = np.array([[1, c[0], c[1]], [c[0], 1, c[2]], [c[1], c[2], 1]])
    while np.linalg.eigvalsh(corr).min() < 0.2:
        corr[np.triu_indices(3, 1)] *= 0.8
        corr = np.triu(corr) + np.triu(corr, 1).T
    return corr * np.outer(stds, stds)


def gaussian_recovery_instance(rng, span_sigmas=4.0, spacing_fraction=0.25):
    """Discretized Gaussian likelihood and Gaussian prior on a grid of (x, y, phi)."""
    scale = np.array([1.0, 1.0, 0.02])
    cov_l = _random_spd(rng, scale * rng.uniform(0.8, 1.5, 3))
    # prior wider than the likelihood in every direction, as when a fix is informative
    cov_p = rng.uniform(1.5, 3.0) * cov_l + _random_spd(rng, scale * rng.uniform(0.2, 1.0, 3))
    mean_p = np.zeros(3)
    mean_l = scale * rng.uniform(-0.5, 0.5, 3)
    # the windowed posterior is the narrowest distribution involved; its
    # conditional stds set the grid spacing
    info_post = np.linalg.inv(cov_l) + np.linalg.inv(cov_p)
    step = spacing_fraction / np.sqrt(np.diag(info_post))
    half = span_sigmas * np.sqrt(np.diag(cov_l)) + np.abs(mean_l)
    axes = [np.arange(-math.ceil(hf / st), math.ceil(hf / st) + 1) * st for hf, st in zip(half, step)]
    poses = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    r = poses - mean_l
    logl = -0.5 * np.einsum("ki,ij,kj->k", r, np.linalg.inv(cov_l), r)
    values = np.exp(logl - logl.max())
    lik = Likelihood(values / values.sum(), poses)
    return lik, GaussianPrior(mean_p, cov_p), cov_l


def check_calibration(n=50, seed=0, tolerance=0.05) -> SuiteResult:
    rng = np.random.default_rng([seed, 14])
    start = time.perf_counter()
    worst = 0.0
    for _ in range(n):
        lik, prior, cov_l = gaussian_recovery_instance(rng)
        z = map_estimate(lik, prior)
        rec = estimate_covariance(lik, prior, z)
        worst = max(worst, float(np.linalg.norm(rec - cov_l) / np.linalg.norm(cov_l)))
    return SuiteResult("calibration", worst, tolerance, worst < tolerance, time.perf_counter() - start)


# -- CTRA ----------------------------------------------------------------------

def rk4_ctra(states, controls, duration=1.0, step=1e-4):
    """Vectorized RK4 of x' = v cos(phi), y' = v sin(phi), phi' = omega, v' = a."""
    s = np.array(states, dtype=float)
    a, w = controls[:, 0], controls[:, 1]

    def f(s):
        return np.stack([s[:, 3] * np.cos(s[:, 2]), s[:, 3] * np.sin(s[:, 2]), w, a], axis=1)

    for _ in range(int(round(duration / step))):
        k1 = f(s)
        k2 = f(s + 0.5 * step * k1)
        k3 = f(s + 0.5 * step * k2)
        k4 = f(s + step * k3)
        s = s + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return s


def random_ctra_states(rng, n, small_fraction=0.2):
    states = np.column_stack([rng.uniform(-100, 100, n), rng.uniform(-100, 100, n),
                              rng.uniform(-math.pi, math.pi, n), rng.uniform(0, 30, n)])
    controls = np.column_stack([rng.uniform(-3, 3, n), rng.uniform(-1, 1, n)])
    small = rng.random(n) < small_fraction
    controls[small, 1] = rng.uniform(-OMEGA_EPS, OMEGA_EPS, small.sum())
    controls[small & (rng.random(n) < 0.25), 1] = 0.0
    return states, controls


def check_ctra(n=1000, seed=0, tolerance=1e-6) -> SuiteResult:
    rng = np.random.default_rng([seed, 15])
    start = time.perf_counter()
    states, controls = random_ctra_states(rng, n)
    ref = rk4_ctra(states, controls)
    closed = np.array([ctra_motion(*s, a, w, 1.0) for s, (a, w) in zip(states, controls)])
    err = np.hypot(closed[:, 0] - ref[:, 0], closed[:, 1] - ref[:, 1])
    small = np.abs(controls[:, 1]) <= OMEGA_EPS
    return SuiteResult("ctra", float(err.max()), tolerance, float(err.max()) < tolerance,
                       time.perf_counter() - start,
                       {"small_omega_cases": int(small.sum()), "small_omega_max": f"{err[small].max():.2e}"})


# -- Mercator ------------------------------------------------------------------

def mercator_errors(latitude, n=500, radius=2000.0, seed=0):
    """Relative distance errors for random point pairs inside ``radius`` of the origin."""
    rng = np.random.default_rng([seed, 16, int(latitude * 1000)])
    frame = LocalFrame(GeoPose(latitude, float(rng.uniform(-180, 180)), 0.0))
    r = radius * np.sqrt(rng.random((2, n)))
    theta = rng.uniform(0, 2 * math.pi, (2, n))
    north, east = r * np.sin(theta), r * np.cos(theta)
    lat = latitude + np.degrees(north / EARTH_RADIUS)
    lon = frame.origin.longitude + np.degrees(east / (EARTH_RADIUS * math.cos(math.radians(latitude))))
    # pairs: origin to each point, and point to point
    p = frame.to_local_points(lat, lon)
    d_origin = np.hypot(p[0, :, 0], p[0, :, 1])
    h_origin = haversine(frame.origin.latitude, frame.origin.longitude, lat[0], lon[0])
    d_pair = np.hypot(*(p[0] - p[1]).T)
    h_pair = haversine(lat[0], lon[0], lat[1], lon[1])
    keep = h_pair > 1.0
    return np.concatenate([np.abs(d_origin / h_origin - 1), np.abs(d_pair[keep] / h_pair[keep] - 1)])


def check_mercator(seed=0, tolerance=1e-4, latitudes=(0.0, 49.0)) -> SuiteResult:
    start = time.perf_counter()
    worst = max(float(mercator_errors(lat, seed=seed).max()) for lat in latitudes)
    return SuiteResult("mercator", worst, tolerance, worst < tolerance, time.perf_counter() - start)


SUITES = ("correlation", "gradients", "soft_hard", "calibration", "ctra", "mercator")


def run_selfcheck(seed=0, correlate_fn=None, suites=SUITES) -> list[SuiteResult]:
    runners = {
        "correlation": lambda: check_correlation(seed=seed, correlate_fn=correlate_fn),
        "gradients": lambda: check_gradients(seed=seed),
        "soft_hard": lambda: check_soft_hard(seed=seed),
        "calibration": lambda: check_calibration(seed=seed),
        "ctra": lambda: check_ctra(seed=seed),
        "mercator": lambda: check_mercator(seed=seed),
    }
    return [runners[name]() for name in suites]
