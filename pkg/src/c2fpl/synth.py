"""Synthetic feature bundles with planted anomalies and known ground truth.

Each segment feature is a random unit direction scaled by a sampled magnitude.
Normal segments draw their magnitude from N(normal_mean, normal_std); each
anomalous video carries exactly one contiguous window whose magnitudes are
shifted up by ``anomaly_shift`` normal standard deviations. Directions carry
no class information, so the magnitude is the only signal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FeatureBundle, VideoRecord


@dataclass
class SynthConfig:
    n_videos: int = 100
    anomaly_video_fraction: float = 0.5
    d: int = 384
    m_min: int = 20
    m_max: int = 50
    normal_mean: float = 10.0
    normal_std: float = 1.0
    anomaly_shift: float = 6.0  # in units of normal_std
    window_fraction: float = 0.2
    frames_per_segment: int = 16
    seed: int = 0
    # Optional explicit per-video segment counts; overrides m_min/m_max and
    # must match n_videos when given.
    segment_counts: tuple[int, ...] | None = None

    def validate(self) -> None:
        if self.n_videos < 1:
            raise ValueError(f"n_videos must be >= 1, got {self.n_videos}")
        if not 0.0 <= self.anomaly_video_fraction <= 1.0:
            raise ValueError(
                f"anomaly_video_fraction must be in [0, 1], got {self.anomaly_video_fraction}"
            )
        if not 0.0 < self.window_fraction < 1.0:
            raise ValueError(
                f"window_fraction must be in (0, 1), got {self.window_fraction}"
            )
        if self.anomaly_shift <= 0.0:
            raise ValueError(f"anomaly_shift must be positive, got {self.anomaly_shift}")
        if self.normal_std <= 0.0:
            raise ValueError(f"normal_std must be positive, got {self.normal_std}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.frames_per_segment < 1:
            raise ValueError(
                f"frames_per_segment must be >= 1, got {self.frames_per_segment}"
            )
        if self.segment_counts is not None:
            if len(self.segment_counts) != self.n_videos:
                raise ValueError(
                    f"segment_counts has {len(self.segment_counts)} entries "
                    f"for {self.n_videos} videos"
                )
            if min(self.segment_counts) < 2:
                raise ValueError("every segment count must be >= 2")
        elif not 2 <= self.m_min <= self.m_max:
            raise ValueError(
                f"need 2 <= m_min <= m_max, got m_min={self.m_min}, m_max={self.m_max}"
            )

    def to_dict(self) -> dict:
        out = {
            "n_videos": self.n_videos,
            "anomaly_video_fraction": self.anomaly_video_fraction,
            "d": self.d,
            "m_min": self.m_min,
            "m_max": self.m_max,
            "normal_mean": self.normal_mean,
            "normal_std": self.normal_std,
            "anomaly_shift": self.anomaly_shift,
            "window_fraction": self.window_fraction,
            "frames_per_segment": self.frames_per_segment,
            "seed": self.seed,
        }
        if self.segment_counts is not None:
            out["segment_counts"] = list(self.segment_counts)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "SynthConfig":
        known = {f: payload[f] for f in payload if f in cls.__dataclass_fields__}
        if known.get("segment_counts") is not None:
            known["segment_counts"] = tuple(int(m) for m in known["segment_counts"])
        return cls(**known)


@dataclass
class GroundTruth:
    """Planted labels at all three granularities."""

    video_labels: dict[str, int]
    segment_labels: dict[str, np.ndarray]
    frame_labels: dict[str, np.ndarray] = field(repr=False)

    def to_manifest(self) -> dict[str, list[int]]:
        """The evaluation manifest form: video id to per-frame labels."""
        return {vid: [int(x) for x in labs] for vid, labs in self.frame_labels.items()}

    def save_manifest(self, path: str | Path) -> None:
        with Path(path).open("w") as handle:
            json.dump(self.to_manifest(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def load_manifest(path: str | Path) -> dict[str, np.ndarray]:
    """Read an evaluation manifest back as id -> int frame-label array."""
    with Path(path).open() as handle:
        payload = json.load(handle)
    return {str(vid): np.asarray(labs, dtype=np.int64) for vid, labs in payload.items()}


def generate(config: SynthConfig) -> tuple[FeatureBundle, GroundTruth]:
    """Deterministically generate a bundle and its ground truth from the seed."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n_anomalous = round(config.n_videos * config.anomaly_video_fraction)
    anomalous_set = set(rng.permutation(config.n_videos)[:n_anomalous].tolist())

    videos = []
    video_labels: dict[str, int] = {}
    segment_labels: dict[str, np.ndarray] = {}
    frame_labels: dict[str, np.ndarray] = {}
    for index in range(config.n_videos):
        video_id = f"video{index:04d}"
        if config.segment_counts is not None:
            m = int(config.segment_counts[index])
        else:
            m = int(rng.integers(config.m_min, config.m_max + 1))
        magnitudes = config.normal_mean + config.normal_std * rng.standard_normal(m)
        segs = np.zeros(m, dtype=np.int64)
        if index in anomalous_set:
            length = min(m, max(1, math.ceil(config.window_fraction * m - 1e-9)))
            start = int(rng.integers(0, m - length + 1))
            magnitudes[start : start + length] += config.anomaly_shift * config.normal_std
            segs[start : start + length] = 1
        magnitudes = np.maximum(magnitudes, 1e-6)  # norms must stay positive
        directions = rng.standard_normal((m, config.d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        features = (directions * magnitudes[:, None]).astype(np.float32)
        features.flags.writeable = False
        videos.append(
            VideoRecord(
                video_id=video_id,
                features=features,
                frames_per_segment=config.frames_per_segment,
            )
        )
        video_labels[video_id] = 1 if index in anomalous_set else 0
        segment_labels[video_id] = segs
        frame_labels[video_id] = np.repeat(segs, config.frames_per_segment)

    bundle = FeatureBundle(
        d=config.d, videos=tuple(videos), source_tag=f"synth-seed{config.seed}"
    )
    truth = GroundTruth(
        video_labels=video_labels,
        segment_labels=segment_labels,
        frame_labels=frame_labels,
    )
    return bundle, truth
