"""Fine segment-level pseudo-labels from a Gaussian null model.

Segments of coarse-normal videos define a Gaussian model of "usual" segment
statistics. Every segment of a coarse-anomalous video is scored by its density
under that model, and the contiguous window of segments whose mean density is
lowest (the least usual stretch) is labelled anomalous. Everything else stays
normal.

The default segment representation is the 1-d feature magnitude; a different
representation can be plugged in as long as it maps a feature vector to a
fixed-length 1-d array.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .cpl import CoarseLabels
from .errors import DataInvariantError, InsufficientDataError
from .features import FeatureBundle, VideoRecord

VARIANCE_FLOOR = 1e-12  # keeps all-equal-norm null models usable

Representation = Callable[[np.ndarray], np.ndarray]


def segment_representation(feature: np.ndarray) -> np.ndarray:
    """Default representation: the segment's feature magnitude as a length-1 vector."""
    return np.array(
        [np.linalg.norm(np.asarray(feature, dtype=np.float64))], dtype=np.float64
    )


@dataclass
class NullModel:
    """Gaussian fit of segment representations from coarse-normal videos."""

    gamma: np.ndarray  # (dim,) mean
    sigma: np.ndarray  # (dim, dim) sample covariance, diagonal floored
    dim: int


@dataclass
class FineLabels:
    """Segment-level pseudo-labels plus the selected windows.

    ``segment_labels`` maps video id to a 0/1 array in temporal order.
    ``windows`` maps each video that carries anomalous segments to its
    (start, length) pair, with 0-indexed start.
    """

    video_labels: dict[str, int]
    segment_labels: dict[str, np.ndarray]
    windows: dict[str, tuple[int, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        videos = {}
        for vid, segs in self.segment_labels.items():
            start, length = self.windows.get(vid, (None, None))
            videos[vid] = {
                "label": int(self.video_labels[vid]),
                "window_start": start,
                "window_length": length,
                "segment_labels": [int(x) for x in segs],
            }
        return {"videos": videos}

    @classmethod
    def from_dict(cls, payload: dict) -> "FineLabels":
        video_labels: dict[str, int] = {}
        segment_labels: dict[str, np.ndarray] = {}
        windows: dict[str, tuple[int, int]] = {}
        for vid, entry in payload["videos"].items():
            video_labels[vid] = int(entry["label"])
            segment_labels[vid] = np.asarray(entry["segment_labels"], dtype=np.int64)
            if entry.get("window_start") is not None:
                windows[vid] = (int(entry["window_start"]), int(entry["window_length"]))
        return cls(video_labels=video_labels, segment_labels=segment_labels, windows=windows)


def _video_representations(video: VideoRecord, representation: Representation) -> np.ndarray:
    """Stack one representation row per segment, shape (m, dim)."""
    if representation is segment_representation:
        norms = np.linalg.norm(video.features.astype(np.float64, copy=False), axis=1)
        return norms[:, None]
    rows = [np.asarray(representation(row), dtype=np.float64) for row in video.features]
    return np.stack(rows)


def fit_null_model(
    bundle: FeatureBundle,
    coarse: CoarseLabels,
    representation: Representation = segment_representation,
) -> NullModel:
    """Fit the Gaussian null model on all segments of coarse-normal videos.

    The mean is the plain average; the covariance uses the (count - 1)
    denominator and its diagonal is floored at ``VARIANCE_FLOOR`` so an
    all-equal representation still yields a usable density.
    """
    blocks = []
    for video in bundle.videos:
        label = coarse.labels.get(video.video_id)
        if label is None:
            raise DataInvariantError(
                f"video {video.video_id!r} has no coarse label"
            )
        if label == 0:
            blocks.append(_video_representations(video, representation))
    count = sum(len(b) for b in blocks)
    if count < 2:
        raise InsufficientDataError(
            f"need at least 2 segments from coarse-normal videos, got {count}"
        )
    stacked = np.concatenate(blocks, axis=0)
    dim = stacked.shape[1]
    gamma = stacked.mean(axis=0)
    diff = stacked - gamma
    sigma = diff.T @ diff / (count - 1)
    for i in range(dim):
        sigma[i, i] = max(sigma[i, i], VARIANCE_FLOOR)
    return NullModel(gamma=gamma, sigma=sigma, dim=dim)


def p_values(model: NullModel, reps: np.ndarray) -> np.ndarray:
    """Gaussian density of each representation row under the null model."""
    reps = np.atleast_2d(np.asarray(reps, dtype=np.float64))
    if reps.shape[1] != model.dim:
        raise DataInvariantError(
            f"representation dim {reps.shape[1]} does not match null model dim {model.dim}"
        )
    sign, logdet = np.linalg.slogdet(model.sigma)
    if sign <= 0:
        raise InsufficientDataError("null model covariance is not positive definite")
    inv = np.linalg.inv(model.sigma)
    diff = reps - model.gamma
    maha = np.einsum("ni,ij,nj->n", diff, inv, diff)
    log_density = -0.5 * (maha + logdet + model.dim * math.log(2.0 * math.pi))
    return np.exp(log_density)


def p_value(model: NullModel, rep: np.ndarray) -> float:
    """Density of a single segment representation under the null model.

    Higher means more usual. This is a density, not a tail probability, so
    values above 1 are possible for tightly concentrated models.
    """
    return float(p_values(model, np.asarray(rep, dtype=np.float64)[None, :])[0])


def window_length(beta: float, m: int) -> int:
    """ceil(beta * m), clamped to [1, m], with a guard against float noise."""
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    # The 1e-9 slack keeps products like 0.2 * 10 (stored as 2.0000000000000004)
    # from rounding the window up one beyond the intended ceil.
    return min(m, max(1, math.ceil(beta * m - 1e-9)))


def select_window(values: np.ndarray, beta: float) -> tuple[int, int]:
    """Pick the length-ceil(beta*m) window with the smallest mean value.

    Returns (start, length) with a 0-indexed start. Ties go to the smallest
    start. Window sums are taken directly per window so that windows holding
    identical values compare exactly equal.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 1:
        raise ValueError("values must be a non-empty 1-d array")
    m = values.size
    w = window_length(beta, m)
    sums = np.lib.stride_tricks.sliding_window_view(values, w).sum(axis=1)
    return int(np.argmin(sums)), w


def generate_fine_labels(
    bundle: FeatureBundle,
    coarse: CoarseLabels,
    beta: float,
    representation: Representation = segment_representation,
) -> FineLabels:
    """Label one low-density window per coarse-anomalous video.

    Coarse-normal videos get all-zero segment labels. For every
    coarse-anomalous video the window of length ceil(beta * m) whose mean
    density is lowest becomes the anomalous stretch.
    """
    model = fit_null_model(bundle, coarse, representation)
    video_labels: dict[str, int] = {}
    segment_labels: dict[str, np.ndarray] = {}
    windows: dict[str, tuple[int, int]] = {}
    for video in bundle.videos:
        label = int(coarse.labels[video.video_id])
        video_labels[video.video_id] = label
        segs = np.zeros(video.num_segments, dtype=np.int64)
        if label == 1:
            densities = p_values(model, _video_representations(video, representation))
            start, length = select_window(densities, beta)
            segs[start : start + length] = 1
            windows[video.video_id] = (start, length)
        segment_labels[video.video_id] = segs
    return FineLabels(
        video_labels=video_labels, segment_labels=segment_labels, windows=windows
    )


def per_video_p_values(
    bundle: FeatureBundle,
    coarse: CoarseLabels,
    representation: Representation = segment_representation,
) -> dict[str, np.ndarray]:
    """Densities for every segment of every video, keyed by video id.

    Diagnostic companion to :func:`generate_fine_labels`; uses the same null
    model but scores all videos, not just the coarse-anomalous ones.
    """
    model = fit_null_model(bundle, coarse, representation)
    return {
        video.video_id: p_values(model, _video_representations(video, representation))
        for video in bundle.videos
    }


def write_p_values_csv(path: str | Path, values_by_video: dict[str, np.ndarray]) -> None:
    """Write per-segment densities as (video_id, segment_index, p_value) rows."""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["video_id", "segment_index", "p_value"])
        for vid, values in values_by_video.items():
            for idx, value in enumerate(values):
                writer.writerow([vid, idx, repr(float(value))])
