"""Frame-level evaluation: scoring, expansion to frames, and ROC-AUC.

Segment scores expand to frame scores by repeating each score once per frame
the segment covers. AUC pools frames across all scored videos and uses the
rank-sum formulation with average ranks, so ties count one half, matching a
pairwise comparison exactly.
"""

from __future__ import annotations

import csv
import warnings as _warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .detector import DetectorModel, forward
from .errors import DataInvariantError, DimensionMismatchError, UndefinedAucError
from .features import FeatureBundle


@dataclass
class ScoredVideo:
    """Per-segment scores and their frame-level expansion for one video.

    ``segment_scores`` is None for scores re-read from a frame-level CSV,
    where the original segmentation is no longer known.
    """

    video_id: str
    segment_scores: np.ndarray | None
    frame_scores: np.ndarray


@dataclass
class RocResult:
    auc: float
    num_positive: int
    num_negative: int

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "num_positive": self.num_positive,
            "num_negative": self.num_negative,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RocResult":
        return cls(
            auc=float(payload["auc"]),
            num_positive=int(payload["num_positive"]),
            num_negative=int(payload["num_negative"]),
        )


def expand_to_frames(segment_scores: np.ndarray, frames_per_segment: int) -> np.ndarray:
    """Repeat each segment score once per covered frame."""
    if frames_per_segment < 1:
        raise ValueError(f"frames_per_segment must be >= 1, got {frames_per_segment}")
    return np.repeat(np.asarray(segment_scores, dtype=np.float64), frames_per_segment)


def score_bundle(model: DetectorModel, bundle: FeatureBundle) -> list[ScoredVideo]:
    """Score every segment of every video with the detector (dropout off).

    Each video is scored as one forward batch. For the feature-axis attention
    modes this matches segment-by-segment scoring exactly; for the batch-axis
    modes the video is the batch the attention normalises over.
    """
    if model.d != bundle.d:
        raise DimensionMismatchError(
            f"model expects dimension {model.d}, bundle has {bundle.d}"
        )
    scored = []
    for video in bundle.videos:
        segment_scores = forward(model, video.features.astype(np.float64, copy=False))
        scored.append(
            ScoredVideo(
                video_id=video.video_id,
                segment_scores=segment_scores,
                frame_scores=expand_to_frames(segment_scores, video.frames_per_segment),
            )
        )
    return scored


def _align_truth(video_id: str, labels: np.ndarray, num_frames: int) -> np.ndarray:
    """Truncate or pad (repeating the last label) truth to the scored length."""
    if labels.size == num_frames:
        return labels
    _warnings.warn(
        f"video {video_id!r}: truth has {labels.size} frame labels but "
        f"{num_frames} frames were scored; aligning to the scored length",
        stacklevel=3,
    )
    if labels.size > num_frames:
        return labels[:num_frames]
    return np.concatenate([labels, np.full(num_frames - labels.size, labels[-1])])


def frame_auc(
    scored: Sequence[ScoredVideo], truth: Mapping[str, Sequence[int]]
) -> RocResult:
    """Pooled frame-level ROC-AUC over all scored videos.

    Ties contribute one half. Raises UndefinedAucError when the pooled truth
    has no positive or no negative frames.
    """
    all_scores = []
    all_labels = []
    for video in scored:
        if video.video_id not in truth:
            raise DataInvariantError(
                f"video {video.video_id!r} has no ground-truth frame labels"
            )
        labels = np.asarray(truth[video.video_id], dtype=np.int64)
        if labels.size == 0:
            raise DataInvariantError(f"video {video.video_id!r} has empty truth labels")
        all_scores.append(np.asarray(video.frame_scores, dtype=np.float64))
        all_labels.append(_align_truth(video.video_id, labels, video.frame_scores.size))
    scores = np.concatenate(all_scores)
    labels = np.concatenate(all_labels)

    positive = labels == 1
    num_pos = int(positive.sum())
    num_neg = int(labels.size - num_pos)
    if num_pos == 0 or num_neg == 0:
        raise UndefinedAucError(
            f"AUC undefined: {num_pos} positive and {num_neg} negative frames"
        )
    ranks = _average_ranks(scores)
    auc = (ranks[positive].sum() - num_pos * (num_pos + 1) / 2.0) / (num_pos * num_neg)
    return RocResult(auc=float(auc), num_positive=num_pos, num_negative=num_neg)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their group's mean rank."""
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)  # last 1-based rank in each tie group
    return (ends - (counts - 1) / 2.0)[inverse]


def per_video_auc(
    scored: Sequence[ScoredVideo], truth: Mapping[str, Sequence[int]]
) -> dict[str, float | None]:
    """Diagnostic per-video AUC; None for videos whose truth is single-class."""
    out: dict[str, float | None] = {}
    for video in scored:
        try:
            out[video.video_id] = frame_auc([video], truth).auc
        except UndefinedAucError:
            out[video.video_id] = None
    return out


def threshold_frames(scored: ScoredVideo, threshold: float) -> np.ndarray:
    """Binary frame labels: 1 where the frame score strictly exceeds the threshold."""
    return (scored.frame_scores > threshold).astype(np.int64)


def write_frame_scores_csv(path: str | Path, scored: Sequence[ScoredVideo]) -> None:
    """Write (video_id, frame_index, score) rows with full-precision scores."""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["video_id", "frame_index", "score"])
        for video in scored:
            for index, score in enumerate(video.frame_scores):
                writer.writerow([video.video_id, index, repr(float(score))])


def read_frame_scores_csv(path: str | Path) -> list[ScoredVideo]:
    """Read a frame score CSV back into ScoredVideo objects (frames only)."""
    per_video: dict[str, list[tuple[int, float]]] = {}
    with Path(path).open(newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["video_id", "frame_index", "score"]:
            raise DataInvariantError(f"{path}: unexpected frame score CSV header {header}")
        for row in reader:
            if len(row) != 3:
                raise DataInvariantError(f"{path}: malformed row {row}")
            per_video.setdefault(row[0], []).append((int(row[1]), float(row[2])))
    scored = []
    for video_id, pairs in per_video.items():
        pairs.sort()
        frames = np.array([score for _, score in pairs], dtype=np.float64)
        scored.append(
            ScoredVideo(video_id=video_id, segment_scores=None, frame_scores=frames)
        )
    return scored
