"""Builders for small hand-made bundles used across the test modules."""

import numpy as np

from c2fpl.features import FeatureBundle, VideoRecord


def axis_video(video_id, norms, d=4, frames_per_segment=2):
    """Segments lying on the first axis, so segment norms equal ``norms`` exactly."""
    feats = np.zeros((len(norms), d), dtype=np.float32)
    feats[:, 0] = norms
    return VideoRecord(
        video_id=video_id, features=feats, frames_per_segment=frames_per_segment
    )


def direction_video(video_id, norms, d=6, frames_per_segment=2, seed=0):
    """Random unit directions scaled to the given norms (up to float32 rounding)."""
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((len(norms), d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    feats = (directions * np.asarray(norms, dtype=np.float64)[:, None]).astype(
        np.float32
    )
    return VideoRecord(
        video_id=video_id, features=feats, frames_per_segment=frames_per_segment
    )


def bundle_of(*videos):
    return FeatureBundle(d=int(videos[0].features.shape[1]), videos=tuple(videos))
