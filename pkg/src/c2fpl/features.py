"""Segment feature bundles: in-memory model, binary file format, summaries.

A bundle holds pre-extracted per-segment feature vectors for a set of videos.
Each video contributes an (m_i, d) float32 matrix in temporal order plus the
number of raw frames every segment covers. Videos are summarised for
clustering by the mean and sample standard deviation of their segment feature
magnitudes.

On-disk layout (all little-endian):

    magic          4 bytes  b"C2FB"
    format version u32      currently 1
    d              u32      feature dimension
    n              u32      number of videos
    per video:
        id length  u16      byte length of the UTF-8 id
        id         bytes
        m          u32      segment count
        r          u32      frames per segment
        features   m*d*4 bytes, float32, row major, temporal order

Writes are byte-deterministic: the same bundle always produces the same file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BundleFormatError,
    DimensionMismatchError,
    DuplicateVideoIdError,
    InsufficientDataError,
    MalformedHeaderError,
    NonFiniteValueError,
)

MAGIC = b"C2FB"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIII")
_ID_LEN = struct.Struct("<H")
_VIDEO_DIMS = struct.Struct("<II")


@dataclass(frozen=True)
class VideoRecord:
    """One video's segment features, in temporal order."""

    video_id: str
    features: np.ndarray  # (m, d) float32
    frames_per_segment: int

    @property
    def num_segments(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True)
class FeatureBundle:
    """A set of videos sharing one feature dimension."""

    d: int
    videos: tuple[VideoRecord, ...]
    source_tag: str = ""

    @property
    def num_videos(self) -> int:
        return len(self.videos)

    def total_segments(self) -> int:
        return sum(v.num_segments for v in self.videos)

    def video_ids(self) -> list[str]:
        return [v.video_id for v in self.videos]

    def validate(self) -> None:
        """Raise a BundleFormatError subclass if any invariant is broken."""
        if self.d < 1:
            raise BundleFormatError("feature dimension must be a positive integer")
        seen: set[str] = set()
        for video in self.videos:
            if video.video_id in seen:
                raise DuplicateVideoIdError(f"duplicate video id {video.video_id!r}")
            seen.add(video.video_id)
            feats = video.features
            if feats.ndim != 2 or feats.shape[1] != self.d:
                raise DimensionMismatchError(
                    f"video {video.video_id!r} has feature shape {feats.shape}, "
                    f"expected (m, {self.d})"
                )
            if feats.shape[0] < 1:
                raise BundleFormatError(
                    f"video {video.video_id!r} must have at least one segment"
                )
            if video.frames_per_segment < 1:
                raise BundleFormatError(
                    f"video {video.video_id!r} must cover at least one frame per segment"
                )
            if not np.isfinite(feats).all():
                raise NonFiniteValueError(
                    f"video {video.video_id!r} contains a non-finite feature value"
                )


@dataclass(frozen=True)
class VideoSummary:
    """Magnitude statistics used for video-level clustering."""

    video_id: str
    mu: float  # mean of segment feature norms
    sigma: float  # sample std of segment feature norms (0.0 for single-segment videos)


def segment_norm(feature: np.ndarray) -> float:
    """Euclidean norm of one segment feature, accumulated in double precision."""
    return float(np.linalg.norm(np.asarray(feature, dtype=np.float64)))


def summarize_video(video: VideoRecord) -> VideoSummary:
    """Summarise a video by the mean and sample std of its segment norms."""
    norms = np.linalg.norm(video.features.astype(np.float64, copy=False), axis=1)
    mu = float(norms.mean())
    sigma = float(norms.std(ddof=1)) if norms.size > 1 else 0.0
    return VideoSummary(video_id=video.video_id, mu=mu, sigma=sigma)


def summarize_bundle(bundle: FeatureBundle) -> list[VideoSummary]:
    if bundle.num_videos == 0:
        raise InsufficientDataError("cannot summarise an empty bundle")
    return [summarize_video(video) for video in bundle.videos]


def write_bundle(bundle: FeatureBundle, path: str | Path) -> None:
    """Serialise a validated bundle to ``path``.

    The byte stream depends only on the bundle contents, never on write time.
    """
    bundle.validate()
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, bundle.d, bundle.num_videos)]
    for video in bundle.videos:
        id_bytes = video.video_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise BundleFormatError(
                f"video id {video.video_id!r} exceeds the 65535-byte id limit"
            )
        parts.append(_ID_LEN.pack(len(id_bytes)))
        parts.append(id_bytes)
        parts.append(_VIDEO_DIMS.pack(video.num_segments, video.frames_per_segment))
        parts.append(np.ascontiguousarray(video.features, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_bundle(path: str | Path) -> FeatureBundle:
    """Parse and validate a bundle file written by :func:`write_bundle`."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise MalformedHeaderError(f"{path}: file shorter than the bundle header")
    magic, version, d, n = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise MalformedHeaderError(
            f"{path}: unsupported format version {version}, expected {FORMAT_VERSION}"
        )
    if d < 1:
        raise MalformedHeaderError(f"{path}: feature dimension must be positive")

    offset = _HEADER.size
    videos: list[VideoRecord] = []
    seen: set[str] = set()
    for _ in range(n):
        if offset + _ID_LEN.size > len(raw):
            raise MalformedHeaderError(f"{path}: truncated video header")
        (id_len,) = _ID_LEN.unpack_from(raw, offset)
        offset += _ID_LEN.size
        if offset + id_len + _VIDEO_DIMS.size > len(raw):
            raise MalformedHeaderError(f"{path}: truncated video header")
        try:
            video_id = raw[offset : offset + id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedHeaderError(f"{path}: video id is not valid UTF-8") from exc
        offset += id_len
        m, r = _VIDEO_DIMS.unpack_from(raw, offset)
        offset += _VIDEO_DIMS.size
        if m < 1 or r < 1:
            raise BundleFormatError(
                f"{path}: video {video_id!r} declares m={m}, r={r}; both must be >= 1"
            )
        block = m * d * 4
        if offset + block > len(raw):
            raise DimensionMismatchError(
                f"{path}: feature block for video {video_id!r} is truncated "
                f"(need {block} bytes)"
            )
        feats = (
            np.frombuffer(raw, dtype="<f4", count=m * d, offset=offset)
            .reshape(m, d)
            .copy()
        )
        offset += block
        if not np.isfinite(feats).all():
            raise NonFiniteValueError(
                f"{path}: video {video_id!r} contains a non-finite feature value"
            )
        if video_id in seen:
            raise DuplicateVideoIdError(f"{path}: duplicate video id {video_id!r}")
        seen.add(video_id)
        feats.flags.writeable = False
        videos.append(
            VideoRecord(video_id=video_id, features=feats, frames_per_segment=r)
        )
    if offset != len(raw):
        raise DimensionMismatchError(
            f"{path}: {len(raw) - offset} unexpected trailing bytes"
        )
    bundle = FeatureBundle(d=d, videos=tuple(videos))
    bundle.validate()
    return bundle
