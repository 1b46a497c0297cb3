import math
import struct

import numpy as np
import pytest

from c2fpl.errors import (
    BundleFormatError,
    DimensionMismatchError,
    DuplicateVideoIdError,
    InsufficientDataError,
    MalformedHeaderError,
    NonFiniteValueError,
)
from c2fpl.features import (
    FORMAT_VERSION,
    MAGIC,
    FeatureBundle,
    VideoRecord,
    read_bundle,
    segment_norm,
    summarize_bundle,
    summarize_video,
    write_bundle,
)
from c2fpl.synth import SynthConfig, generate

from helpers import axis_video, bundle_of, direction_video


def test_segment_norm_hand_case():
    assert segment_norm(np.array([3.0, 4.0], dtype=np.float32)) == 5.0


def test_summary_two_segments_exact():
    # norms 2 and 4: mean 3, sample std sqrt(((2-3)^2 + (4-3)^2) / 1) = sqrt(2)
    summary = summarize_video(axis_video("v", [2.0, 4.0]))
    assert summary.mu == 3.0
    assert summary.sigma == math.sqrt(2.0)


def test_summary_single_segment_has_zero_sigma():
    summary = summarize_video(axis_video("v", [7.0]))
    assert summary.mu == 7.0
    assert summary.sigma == 0.0


def test_summary_matches_plain_loop():
    rng = np.random.default_rng(42)
    for _ in range(20):
        m = int(rng.integers(2, 12))
        video = VideoRecord(
            video_id="v",
            features=rng.standard_normal((m, 6)).astype(np.float32),
            frames_per_segment=2,
        )
        summary = summarize_video(video)
        norms = [
            math.sqrt(math.fsum(float(x) ** 2 for x in row))
            for row in video.features
        ]
        mu = math.fsum(norms) / m
        sigma = math.sqrt(math.fsum((n - mu) ** 2 for n in norms) / (m - 1))
        assert summary.mu == pytest.approx(mu, rel=1e-12)
        assert summary.sigma == pytest.approx(sigma, rel=1e-10)


def test_summary_invariant_under_rotation():
    """Norms only see the magnitude, so any orthogonal map leaves them alone."""
    rng = np.random.default_rng(3)
    video = direction_video("v", 10.0 + rng.standard_normal(8), d=12, seed=5)
    q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    rotated = VideoRecord(
        video_id="v",
        features=(video.features.astype(np.float64) @ q).astype(np.float32),
        frames_per_segment=2,
    )
    base = summarize_video(video)
    other = summarize_video(rotated)
    assert other.mu == pytest.approx(base.mu, rel=1e-5)
    assert other.sigma == pytest.approx(base.sigma, abs=1e-4)


def test_summary_scales_exactly_with_power_of_two():
    video = direction_video("v", [3.0, 9.0, 5.0], d=8, seed=1)
    doubled = VideoRecord(
        video_id="v", features=video.features * np.float32(2.0), frames_per_segment=2
    )
    base = summarize_video(video)
    other = summarize_video(doubled)
    assert other.mu == 2.0 * base.mu
    assert other.sigma == 2.0 * base.sigma


def test_summarize_bundle_keeps_order_and_rejects_empty():
    bundle = bundle_of(axis_video("b", [1.0]), axis_video("a", [2.0, 2.0]))
    summaries = summarize_bundle(bundle)
    assert [s.video_id for s in summaries] == ["b", "a"]
    with pytest.raises(InsufficientDataError):
        summarize_bundle(FeatureBundle(d=4, videos=()))


def test_roundtrip_is_identity(tmp_path, small_synth):
    bundle, _ = small_synth
    path = tmp_path / "bundle.c2fb"
    write_bundle(bundle, path)
    back = read_bundle(path)
    assert back.d == bundle.d
    assert back.video_ids() == bundle.video_ids()
    for orig, read in zip(bundle.videos, back.videos):
        assert read.frames_per_segment == orig.frames_per_segment
        assert np.array_equal(read.features, orig.features)
        assert read.features.dtype == np.float32


def test_write_is_byte_deterministic(tmp_path, small_synth):
    bundle, _ = small_synth
    a, b = tmp_path / "a.c2fb", tmp_path / "b.c2fb"
    write_bundle(bundle, a)
    write_bundle(bundle, b)
    assert a.read_bytes() == b.read_bytes()


def test_hand_packed_file_parses(tmp_path):
    """Pack a one-video file straight from the documented layout."""
    feats = np.array([[1.5, -2.0], [0.0, 4.0]], dtype="<f4")
    raw = b"".join(
        [
            struct.pack("<4sIII", MAGIC, FORMAT_VERSION, 2, 1),
            struct.pack("<H", 3),
            b"vid",
            struct.pack("<II", 2, 16),
            feats.tobytes(),
        ]
    )
    path = tmp_path / "hand.c2fb"
    path.write_bytes(raw)
    bundle = read_bundle(path)
    assert bundle.d == 2
    assert bundle.videos[0].video_id == "vid"
    assert bundle.videos[0].frames_per_segment == 16
    assert np.array_equal(bundle.videos[0].features, feats)


def test_unicode_id_roundtrips(tmp_path):
    bundle = bundle_of(axis_video("vidéo ✓", [1.0, 2.0]))
    path = tmp_path / "b.c2fb"
    write_bundle(bundle, path)
    assert read_bundle(path).video_ids() == ["vidéo ✓"]


def test_empty_bundle_roundtrips(tmp_path):
    path = tmp_path / "empty.c2fb"
    write_bundle(FeatureBundle(d=5, videos=()), path)
    back = read_bundle(path)
    assert back.num_videos == 0
    assert back.d == 5


def test_corrupted_magic_rejected(tmp_path, small_synth):
    bundle, _ = small_synth
    path = tmp_path / "bad.c2fb"
    write_bundle(bundle, path)
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(MalformedHeaderError):
        read_bundle(path)


def test_unknown_version_rejected(tmp_path):
    path = tmp_path / "v9.c2fb"
    write_bundle(bundle_of(axis_video("v", [1.0])), path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 9)
    path.write_bytes(bytes(raw))
    with pytest.raises(MalformedHeaderError):
        read_bundle(path)


def test_truncated_features_rejected(tmp_path):
    path = tmp_path / "cut.c2fb"
    write_bundle(bundle_of(axis_video("v", [1.0, 2.0, 3.0])), path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(DimensionMismatchError):
        read_bundle(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "extra.c2fb"
    write_bundle(bundle_of(axis_video("v", [1.0])), path)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(DimensionMismatchError):
        read_bundle(path)


def test_nan_rejected_on_write_and_read(tmp_path):
    feats = np.array([[1.0, 2.0]], dtype=np.float32)
    video = VideoRecord(video_id="v", features=feats, frames_per_segment=2)
    nan_video = VideoRecord(
        video_id="v",
        features=np.array([[np.nan, 2.0]], dtype=np.float32),
        frames_per_segment=2,
    )
    with pytest.raises(NonFiniteValueError):
        write_bundle(bundle_of(nan_video), tmp_path / "never.c2fb")

    path = tmp_path / "patched.c2fb"
    write_bundle(bundle_of(video), path)
    raw = bytearray(path.read_bytes())
    # header 16 + id length field 2 + id "v" 1 + (m, r) 8 = first feature float
    raw[27:31] = struct.pack("<f", float("nan"))
    path.write_bytes(bytes(raw))
    with pytest.raises(NonFiniteValueError):
        read_bundle(path)


def test_duplicate_ids_rejected_in_memory(tmp_path):
    bundle = bundle_of(axis_video("same", [1.0]), axis_video("same", [2.0]))
    with pytest.raises(DuplicateVideoIdError):
        write_bundle(bundle, tmp_path / "dup.c2fb")


def test_duplicate_ids_rejected_on_read(tmp_path):
    feats = np.zeros((1, 2), dtype="<f4")
    video_block = b"".join(
        [struct.pack("<H", 1), b"x", struct.pack("<II", 1, 4), feats.tobytes()]
    )
    raw = struct.pack("<4sIII", MAGIC, FORMAT_VERSION, 2, 2) + video_block * 2
    path = tmp_path / "dup.c2fb"
    path.write_bytes(raw)
    with pytest.raises(DuplicateVideoIdError):
        read_bundle(path)


def test_zero_segment_video_rejected_on_read(tmp_path):
    raw = struct.pack("<4sIII", MAGIC, FORMAT_VERSION, 2, 1) + b"".join(
        [struct.pack("<H", 1), b"x", struct.pack("<II", 0, 4)]
    )
    path = tmp_path / "m0.c2fb"
    path.write_bytes(raw)
    with pytest.raises(BundleFormatError):
        read_bundle(path)


def test_validate_catches_dimension_mismatch():
    video = axis_video("v", [1.0], d=3)
    with pytest.raises(DimensionMismatchError):
        FeatureBundle(d=4, videos=(video,)).validate()


def test_synth_bundle_validates(small_synth):
    bundle, _ = small_synth
    bundle.validate()
    assert bundle.total_segments() == sum(v.num_segments for v in bundle.videos)
