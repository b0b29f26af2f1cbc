"""Combining per-centerline candidates into the final prediction set.

Candidates arrive with probabilities conditioned on their centerline;
marginalizing against a prior over centerlines yields unconditional
probabilities, and one of several selection strategies reduces the K*N
candidates to a fixed-size output set.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .centerlines import assign_gt_centerline
from .scene import Scene, Trajectory

STRATEGIES = ("greedy_sampling", "lane_scoring", "kmeans",
              "uniform", "privileged", "all")
PRIOR_SOURCES = ("uniform", "scorer", "privileged")
DEFAULT_NMS_RADIUS = 1.0


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class AggregationConfig:
    strategy: str = "greedy_sampling"
    k_hat: int = 6
    nms_radius: float = DEFAULT_NMS_RADIUS
    prior_source: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise AggregationError(f"unknown strategy {self.strategy!r}")
        if self.prior_source not in PRIOR_SOURCES:
            raise AggregationError(f"unknown prior source {self.prior_source!r}")
        if not (self.nms_radius > 0):
            raise AggregationError("nms_radius must be positive")


@dataclass(frozen=True)
class PredictionSet:
    """Final trajectories with normalized probabilities.

    ``refilled`` marks members re-admitted after greedy suppression ran out
    of spaced candidates; those may violate the endpoint-spacing guarantee.
    """

    trajectories: tuple
    refilled: tuple = ()

    def __post_init__(self):
        if not self.refilled:
            object.__setattr__(self, "refilled",
                               tuple(False for _ in self.trajectories))

    @property
    def probs(self) -> np.ndarray:
        return np.array([t.probability for t in self.trajectories])

    @property
    def endpoints(self) -> np.ndarray:
        return np.stack([t.endpoint for t in self.trajectories])


def _renormalized(trajectories) -> tuple:
    total = sum(t.probability for t in trajectories)
    if total <= 0:
        raise AggregationError("zero total probability after selection")
    return tuple(replace(t, probability=t.probability / total)
                 for t in trajectories)


def marginalize(candidates, priors) -> list:
    """cond. probability * centerline prior -> unconditional probability.

    Validates that the priors and each centerline's conditional
    probabilities are normalized; the output mass sums to the prior mass
    covered by the candidates (1 when every centerline is represented).
    """
    priors = np.asarray(priors, dtype=float)
    if abs(float(priors.sum()) - 1.0) > 1e-6:
        raise AggregationError(f"priors sum to {priors.sum():.8f}, expected 1")
    by_cl = {}
    for t in candidates:
        if t.source_centerline is None:
            raise AggregationError("candidate without source centerline")
        by_cl.setdefault(t.source_centerline, []).append(t)
    for idx, group in by_cl.items():
        total = sum(t.probability for t in group)
        if abs(total - 1.0) > 1e-6:
            raise AggregationError(
                f"conditional probabilities for centerline {idx} sum to {total:.8f}")
    return [replace(t, probability=t.probability * priors[t.source_centerline])
            for t in candidates]


def greedy_select(candidates, k_hat: int, nms_radius: float = DEFAULT_NMS_RADIUS) -> PredictionSet:
    """Greedy non-maximum suppression on trajectory endpoints.

    Repeatedly takes the highest-probability remaining candidate and drops
    all candidates whose endpoint lies within ``nms_radius`` of it.  If the
    pool is exhausted before k_hat picks, the highest-probability suppressed
    candidates fill the remaining slots (flagged via ``refilled``).
    """
    if not candidates:
        raise AggregationError("empty candidate set")
    order = sorted(range(len(candidates)),
                   key=lambda i: (-candidates[i].probability, i))
    endpoints = np.stack([candidates[i].endpoint for i in order])
    pool = [candidates[i] for i in order]

    selected, suppressed = [], []
    alive = np.ones(len(pool), dtype=bool)
    for i in range(len(pool)):
        if not alive[i]:
            continue
        selected.append(pool[i])
        if len(selected) == k_hat:
            alive[i] = False
            suppressed.extend(p for p, a in zip(pool[i + 1:], alive[i + 1:]) if a)
            break
        dist = np.linalg.norm(endpoints - endpoints[i], axis=1)
        kill = alive & (dist <= nms_radius)
        for j in np.nonzero(kill)[0]:
            if j != i:
                suppressed.append(pool[j])
        alive &= ~kill

    n_refill = min(k_hat, len(candidates)) - len(selected)
    refilled = [False] * len(selected)
    if n_refill > 0:
        suppressed.sort(key=lambda t: -t.probability)   # stable
        selected.extend(suppressed[:n_refill])
        refilled.extend([True] * n_refill)
    return PredictionSet(_renormalized(selected), tuple(refilled))


def top_k_select(candidates, k_hat: int) -> PredictionSet:
    """Highest-probability k_hat candidates, renormalized, no suppression."""
    if not candidates:
        raise AggregationError("empty candidate set")
    order = sorted(range(len(candidates)),
                   key=lambda i: (-candidates[i].probability, i))[:k_hat]
    return PredictionSet(_renormalized([candidates[i] for i in order]))


def _harmonic(n: int) -> float:
    return sum(1.0 / r for r in range(1, n + 1))


def _inverse_rank_set(ranked) -> PredictionSet:
    h = _harmonic(len(ranked))
    return PredictionSet(tuple(
        replace(t, probability=(1.0 / (rank + 1)) / h)
        for rank, t in enumerate(ranked)))


def kmeans_select(candidates, k_hat: int, seed: int = 0) -> PredictionSet:
    """Cluster candidate endpoints and keep one representative per cluster.

    Deterministic k-means++ initialisation from ``seed``; clusters are
    ranked by member count (ties by probability mass) and the
    representative of the rank-r cluster gets probability (1/r)/H(k_hat).
    With fewer candidates than k_hat, falls back to ranking the candidates
    by probability.
    """
    if not candidates:
        raise AggregationError("empty candidate set")
    if len(candidates) < k_hat:
        order = sorted(candidates, key=lambda t: -t.probability)
        return _inverse_rank_set(order)

    pts = np.stack([t.endpoint for t in candidates])
    probs = np.array([t.probability for t in candidates])
    centers = _kmeanspp_init(pts, k_hat, np.random.default_rng(seed))
    labels = np.zeros(len(pts), dtype=int)
    for _ in range(100):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for c in range(k_hat):
            members = labels == c
            if np.any(members):
                new_centers[c] = pts[members].mean(axis=0)
            else:
                # deterministic rescue: grab the point farthest from its center
                far = int(np.argmax(d2[np.arange(len(pts)), labels]))
                new_centers[c] = pts[far]
                labels[far] = c
        shift = np.linalg.norm(new_centers - centers, axis=1).max()
        centers = new_centers
        if shift < 1e-6:
            break

    clusters = []
    for c in range(k_hat):
        members = np.nonzero(labels == c)[0]
        d = np.linalg.norm(pts[members] - centers[c], axis=1)
        rep = int(members[np.argmin(d)])
        clusters.append((len(members), float(probs[members].sum()), rep))
    clusters.sort(key=lambda item: (-item[0], -item[1], item[2]))
    return _inverse_rank_set([candidates[rep] for _, _, rep in clusters])


def _kmeanspp_init(pts: np.ndarray, k: int, rng) -> np.ndarray:
    centers = [pts[int(rng.integers(len(pts)))]]
    for _ in range(1, k):
        d2 = np.min(((pts[:, None, :] - np.stack(centers)[None, :, :]) ** 2)
                    .sum(axis=2), axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(pts[int(rng.integers(len(pts)))])
            continue
        idx = int(np.searchsorted(np.cumsum(d2 / total), rng.random()))
        centers.append(pts[min(idx, len(pts) - 1)])
    return np.stack(centers)


def privileged_prior(scene: Scene, seqs) -> np.ndarray:
    """All prior mass on the centerline the ground truth actually follows."""
    prior = np.zeros(len(seqs))
    prior[assign_gt_centerline(scene, seqs)] = 1.0
    return prior


def compute_prior(scene: Scene, seqs, source: str, scorer=None) -> np.ndarray:
    if source == "uniform":
        return np.full(len(seqs), 1.0 / len(seqs))
    if source == "privileged":
        return privileged_prior(scene, seqs)
    if source == "scorer":
        if scorer is None:
            raise AggregationError("prior source 'scorer' needs a scorer model")
        return scorer.predict_proba(scene, seqs)
    raise AggregationError(f"unknown prior source {source!r}")


def aggregate(scene: Scene, candidates, config: AggregationConfig,
              seqs=None, scorer=None) -> PredictionSet:
    """Dispatch prior computation and selection strategy.

    The ``uniform`` / ``privileged`` / ``lane_scoring`` strategies force the
    matching prior and select the top k_hat candidates; ``greedy_sampling``
    honours ``config.prior_source``; ``all`` returns every marginalized
    candidate.
    """
    strategy = config.strategy
    forced = {"uniform": "uniform", "privileged": "privileged",
              "lane_scoring": "scorer"}
    prior_source = forced.get(strategy, config.prior_source)

    if all(t.source_centerline is None for t in candidates):
        # plain (unwrapped) predictor: a single implicit centerline
        marginalized = list(candidates)
    else:
        if seqs is None:
            raise AggregationError("need the centerline sequences to marginalize")
        priors = compute_prior(scene, seqs, prior_source, scorer)
        marginalized = marginalize(candidates, priors)

    if strategy == "all":
        return PredictionSet(tuple(marginalized))
    if strategy == "kmeans":
        return kmeans_select(marginalized, config.k_hat, config.seed)
    if strategy == "greedy_sampling":
        return greedy_select(marginalized, config.k_hat, config.nms_radius)
    return top_k_select(marginalized, config.k_hat)
