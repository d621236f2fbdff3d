"""Soft triplet loss with soft online hard example mining, plus analytic gradients.

Distances are negated grid-map similarities ``d_h = -S(M_A, M_G(h))``. For a
positive hypothesis and a set of negatives::

    delta_n  = d_p + margin - d_n
    L_hard   = sum relu(delta_n)        / sg[ sum 1[delta_n > 0] ]
    L_soft   = sum softplus_T(delta_n)  / sg[ sum sigmoid(delta_n / T) ]

``sg`` marks a stop-gradient: gradients flow through the numerators only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .projection import SparseGridMap
from .registration import NORM_EPS

# below this soft-OHEM denominator the loss is reported as a degenerate 0
DEGENERATE_DENOMINATOR = 1e-30
# every sigmoid weight below this: all triplets satisfied, gradients are zeroed
SATISFIED_EPS = 1e-12


@dataclass
class LossConfig:
    margin: float = 0.1
    temperature: float = 0.1

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


@dataclass
class TripletBatch:
    positive_distance: float
    negative_distances: np.ndarray
    positive_index: int = 0
    negative_indices: np.ndarray | None = None

    def __post_init__(self):
        self.negative_distances = np.atleast_1d(np.asarray(self.negative_distances, dtype=float))

    @classmethod
    def from_scores(cls, scores, positive: int) -> "TripletBatch":
        scores = np.asarray(scores, dtype=float)
        neg = np.array([i for i in range(len(scores)) if i != positive])
        return cls(-scores[positive], -scores[neg], positive, neg)


@dataclass
class LossValue:
    value: float
    degenerate: bool = False


def deltas(batch: TripletBatch, config: LossConfig) -> np.ndarray:
    return batch.positive_distance + config.margin - batch.negative_distances


def delta(batch: TripletBatch, config: LossConfig, n: int) -> float:
    return float(deltas(batch, config)[n])


def l_hard(d):
    return np.maximum(d, 0.0)


def l_soft(d, temperature: float):
    """``T * ln(1 + exp(d / T))``, overflow-safe for large ``|d| / T``."""
    out = temperature * np.logaddexp(0.0, np.asarray(d, dtype=float) / temperature)
    return out if out.ndim else float(out)


def L_hard(batch: TripletBatch, config: LossConfig) -> LossValue:
    d = deltas(batch, config)
    hard = d > 0
    if not hard.any():
        return LossValue(0.0, degenerate=True)
    return LossValue(float(l_hard(d).sum() / hard.sum()))


def L_soft(batch: TripletBatch, config: LossConfig) -> LossValue:
    if batch.negative_distances.size == 0:
        raise ValueError("soft OHEM needs at least one negative hypothesis")
    d = deltas(batch, config)
    denom = expit(d / config.temperature).sum()
    if denom < DEGENERATE_DENOMINATOR:
        return LossValue(0.0, degenerate=True)
    return LossValue(float(np.sum(l_soft(d, config.temperature)) / denom))


def _normalize(m: SparseGridMap):
    norm = np.linalg.norm(m.features, axis=-1)
    unit = np.zeros_like(m.features)
    ok = norm > NORM_EPS
    unit[ok] = m.features[ok] / norm[ok, None]
    return unit, norm, m.valid & ok


def similarity_and_grads(ma: SparseGridMap, mg: SparseGridMap):
    """Masked mean cosine similarity and its gradients w.r.t. both maps' features."""
    ua, na, va = _normalize(ma)
    ug, ng, vg = _normalize(mg)
    x = va & vg
    n = int(x.sum())
    if n == 0:
        raise ValueError("hypothesis has no valid overlap")
    cos = np.einsum("ijc,ijc->ij", ua, ug)
    score = float(cos[x].sum() / n)
    ga = np.zeros_like(ma.features)
    gg = np.zeros_like(mg.features)
    ga[x] = (ug[x] - cos[x, None] * ua[x]) / (n * na[x, None])
    gg[x] = (ua[x] - cos[x, None] * ug[x]) / (n * ng[x, None])
    return score, ga, gg


@dataclass
class LossGradients:
    value: float
    degenerate: bool
    scores: np.ndarray
    grad_aerial: np.ndarray
    grad_ground: list


def _grad(ma, ground_maps, positive, config, hard):
    parts = [similarity_and_grads(ma, mg) for mg in ground_maps]
    scores = np.array([p[0] for p in parts])
    batch = TripletBatch.from_scores(scores, positive)
    d = deltas(batch, config)
    if hard:
        weights_raw = (d > 0).astype(float)
        numer = l_hard(d).sum()
    else:
        weights_raw = expit(d / config.temperature)
        numer = np.sum(l_soft(d, config.temperature))
    denom = weights_raw.sum()
    grad_aerial = np.zeros_like(ma.features)
    grad_ground = [np.zeros_like(mg.features) for mg in ground_maps]
    if hard and denom == 0:
        return LossGradients(0.0, True, scores, grad_aerial, grad_ground)
    if not hard and denom < DEGENERATE_DENOMINATOR:
        return LossGradients(0.0, True, scores, grad_aerial, grad_ground)
    if weights_raw.max() < SATISFIED_EPS:
        # every triplet satisfied by a wide margin: no training signal
        return LossGradients(float(numer / denom), False, scores, grad_aerial, grad_ground)
    # dL/dS_h: d(delta_n)/dS_n = +1, d(delta_n)/dS_p = -1
    dscore = np.zeros(len(ground_maps))
    dscore[batch.negative_indices] = weights_raw / denom
    dscore[positive] = -weights_raw.sum() / denom
    for h, (_, ga, gg) in enumerate(parts):
        if dscore[h] != 0.0:
            grad_aerial += dscore[h] * ga
            grad_ground[h] = dscore[h] * gg
    return LossGradients(float(numer / denom), False, scores, grad_aerial, grad_ground)


def grad_L_soft(ma: SparseGridMap, ground_maps, positive: int, config: LossConfig) -> LossGradients:
    """L_soft and its numerator-only gradient w.r.t. every aerial and ground feature."""
    return _grad(ma, ground_maps, positive, config, hard=False)


def grad_L_hard(ma: SparseGridMap, ground_maps, positive: int, config: LossConfig) -> LossGradients:
    return _grad(ma, ground_maps, positive, config, hard=True)


def batch_from_maps(ma: SparseGridMap, ground_maps, positive: int) -> TripletBatch:
    scores = [similarity_and_grads(ma, mg)[0] for mg in ground_maps]
    return TripletBatch.from_scores(scores, positive)
