"""Coarse video-level pseudo-labels via divisive two-component clustering.

Videos are points in the (mu, sigma) summary plane. Starting from a single
"normal" cluster holding every video, the loop repeatedly splits the normal
cluster with a two-component Gaussian mixture, merges the smaller child into
the growing "anomalous" cluster, and keeps the larger child as normal. It
stops once the anomalous-to-normal size ratio exceeds ``eta``, a safety limit
is reached, or the normal cluster can no longer be split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSplitError, InsufficientDataError
from .features import VideoSummary
from .seeding import derive_seed

EM_MAX_ITERS = 200
EM_REL_TOL = 1e-6
COV_REG = 1e-6  # added to covariance diagonals every M-step
DEFAULT_MAX_SPLITS = 50


@dataclass
class GmmModel:
    """A fitted two-component Gaussian mixture over 2-d points."""

    weights: np.ndarray  # (2,)
    means: np.ndarray  # (2, 2)
    covariances: np.ndarray  # (2, 2, 2)
    log_likelihood_trace: np.ndarray  # one total log-likelihood per EM iteration


@dataclass
class CoarseLabels:
    """Video-level pseudo-labels (0 normal, 1 anomalous) plus loop diagnostics."""

    labels: dict[str, int]
    iterations_used: int
    final_ratio: float

    def to_dict(self) -> dict:
        return {
            "labels": {vid: int(lab) for vid, lab in self.labels.items()},
            "iterations_used": self.iterations_used,
            "final_ratio": self.final_ratio,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CoarseLabels":
        return cls(
            labels={str(k): int(v) for k, v in payload["labels"].items()},
            iterations_used=int(payload["iterations_used"]),
            final_ratio=float(payload["final_ratio"]),
        )


def _log_gaussian(points: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log density of each row of ``points`` under N(mean, cov)."""
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise DegenerateSplitError("covariance matrix is not positive definite")
    inv = np.linalg.inv(cov)
    diff = points - mean
    maha = np.einsum("ni,ij,nj->n", diff, inv, diff)
    dim = points.shape[1]
    return -0.5 * (maha + logdet + dim * math.log(2.0 * math.pi))


def _log_responsibilities(model: GmmModel, points: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-point log posterior over the two components, and the total log-likelihood."""
    log_joint = np.stack(
        [
            np.log(model.weights[k]) + _log_gaussian(points, model.means[k], model.covariances[k])
            for k in range(2)
        ],
        axis=1,
    )
    peak = log_joint.max(axis=1, keepdims=True)
    log_norm = peak[:, 0] + np.log(np.exp(log_joint - peak).sum(axis=1))
    return log_joint - log_norm[:, None], float(log_norm.sum())


def fit_gmm_2(points: np.ndarray, seed: int) -> GmmModel:
    """Fit a two-component full-covariance Gaussian mixture with EM.

    Means are seeded kmeans++-style from the data (first uniformly, second
    proportional to squared distance), both covariances start at the data
    covariance, and weights start equal. Runs until the relative
    log-likelihood improvement drops below ``EM_REL_TOL`` or ``EM_MAX_ITERS``
    iterations. Deterministic for a given seed and input.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be 2-d, got shape {points.shape}")
    n = points.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 points to fit a mixture, got {n}")
    if np.ptp(points, axis=0).max() == 0.0:
        raise DegenerateSplitError("all points are identical; no two-component split exists")

    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    sq_dist = ((points - points[first]) ** 2).sum(axis=1)
    # sq_dist sums to > 0 because the points are not all identical, and the
    # selection probabilities are scale-invariant.
    second = int(rng.choice(n, p=sq_dist / sq_dist.sum()))

    data_cov = np.cov(points.T, ddof=1).reshape(2, 2) + COV_REG * np.eye(2)
    model = GmmModel(
        weights=np.array([0.5, 0.5]),
        means=points[[first, second]].copy(),
        covariances=np.stack([data_cov, data_cov.copy()]),
        log_likelihood_trace=np.empty(0),
    )

    trace: list[float] = []
    prev_ll = -np.inf
    for _ in range(EM_MAX_ITERS):
        log_resp, ll = _log_responsibilities(model, points)
        trace.append(ll)
        if np.isfinite(prev_ll) and abs(ll - prev_ll) < EM_REL_TOL * max(1.0, abs(prev_ll)):
            break
        prev_ll = ll

        resp = np.exp(log_resp)
        counts = resp.sum(axis=0)
        if counts.min() < 1e-9:
            raise DegenerateSplitError("a mixture component collapsed to zero weight")
        model.weights = counts / n
        model.means = (resp.T @ points) / counts[:, None]
        for k in range(2):
            diff = points - model.means[k]
            cov = (resp[:, k, None] * diff).T @ diff / counts[k]
            model.covariances[k] = cov + COV_REG * np.eye(2)

    model.log_likelihood_trace = np.asarray(trace)
    return model


def assign_clusters(model: GmmModel, points: np.ndarray) -> np.ndarray:
    """Hard assignment of each point to the component with larger posterior.

    Exact ties go to component 0.
    """
    points = np.asarray(points, dtype=np.float64)
    log_resp, _ = _log_responsibilities(model, points)
    return (log_resp[:, 1] > log_resp[:, 0]).astype(np.int64)


def generate_coarse_labels(
    summaries: Sequence[VideoSummary],
    eta: float,
    seed: int,
    max_iters: int = DEFAULT_MAX_SPLITS,
) -> CoarseLabels:
    """Run the divisive loop over video summaries.

    Splitting continues while anomalous/normal <= ``eta``. Each applied split
    moves the smaller child into the anomalous cluster; a size tie sends the
    child with the larger mean ``mu`` there. The loop also stops when
    ``max_iters`` splits were applied, when a further split would leave fewer
    than 2 normal videos, or when the normal cluster cannot be split
    (identical points, or a mixture putting everything on one side).
    """
    if len(summaries) < 2:
        raise InsufficientDataError(
            f"need at least 2 video summaries, got {len(summaries)}"
        )
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")

    ids = [s.video_id for s in summaries]
    points = np.array([[s.mu, s.sigma] for s in summaries], dtype=np.float64)

    normal = list(range(len(ids)))
    anomalous: list[int] = []
    iterations = 0
    while iterations < max_iters and len(anomalous) / len(normal) <= eta:
        if len(normal) < 2:
            break
        try:
            model = fit_gmm_2(points[normal], derive_seed(seed, "split", iterations))
        except DegenerateSplitError:
            break
        side = assign_clusters(model, points[normal])
        child0 = [idx for idx, s in zip(normal, side) if s == 0]
        child1 = [idx for idx, s in zip(normal, side) if s == 1]
        if not child0 or not child1:
            break  # one-sided assignment, nothing to peel off
        if len(child0) == len(child1):
            # Tie: treat the higher-magnitude child as the anomalous side.
            if points[child1, 0].mean() >= points[child0, 0].mean():
                smaller, larger = child1, child0
            else:
                smaller, larger = child0, child1
        elif len(child0) < len(child1):
            smaller, larger = child0, child1
        else:
            smaller, larger = child1, child0
        if len(larger) < 2:
            break  # applying this split would shrink the normal cluster below 2
        anomalous.extend(smaller)
        normal = larger
        iterations += 1

    labels = {vid: 0 for vid in ids}
    for idx in anomalous:
        labels[ids[idx]] = 1
    ratio = len(anomalous) / len(normal) if normal else math.inf
    return CoarseLabels(labels=labels, iterations_used=iterations, final_ratio=ratio)
