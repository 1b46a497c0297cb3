import json
import math
from fractions import Fraction

import numpy as np
import pytest

from c2fpl.features import write_bundle
from c2fpl.synth import GroundTruth, SynthConfig, generate, load_manifest


def _runs_of_ones(segs):
    runs = 0
    previous = 0
    for value in segs:
        if value == 1 and previous == 0:
            runs += 1
        previous = value
    return runs


def test_generation_is_deterministic(tmp_path):
    config = SynthConfig(n_videos=8, d=12, m_min=4, m_max=7, seed=99)
    bundle_a, truth_a = generate(config)
    bundle_b, truth_b = generate(config)
    a, b = tmp_path / "a.c2fb", tmp_path / "b.c2fb"
    write_bundle(bundle_a, a)
    write_bundle(bundle_b, b)
    assert a.read_bytes() == b.read_bytes()
    assert json.dumps(truth_a.to_manifest(), sort_keys=True) == json.dumps(
        truth_b.to_manifest(), sort_keys=True
    )


def test_shapes_ids_and_anomaly_count(small_synth):
    bundle, truth = small_synth
    assert bundle.num_videos == 12
    assert bundle.d == 16
    assert bundle.video_ids() == [f"video{i:04d}" for i in range(12)]
    for video in bundle.videos:
        assert 5 <= video.num_segments <= 9
        assert video.frames_per_segment == 4
        assert video.features.dtype == np.float32
    assert sum(truth.video_labels.values()) == round(12 * 0.5)
    bundle.validate()


def test_segment_counts_override():
    config = SynthConfig(n_videos=3, d=8, seed=1, segment_counts=(4, 7, 2))
    bundle, _ = generate(config)
    assert [v.num_segments for v in bundle.videos] == [4, 7, 2]


def test_planted_windows_are_contiguous_and_sized(small_synth):
    bundle, truth = small_synth
    for video in bundle.videos:
        segs = truth.segment_labels[video.video_id]
        assert len(segs) == video.num_segments
        if truth.video_labels[video.video_id] == 0:
            assert segs.sum() == 0
        else:
            m = video.num_segments
            expected = min(m, max(1, math.ceil(Fraction("0.2") * m)))
            assert segs.sum() == expected
            assert _runs_of_ones(segs) == 1


def test_planted_magnitudes_are_shifted():
    config = SynthConfig(n_videos=40, d=32, m_min=10, m_max=20, seed=7)
    bundle, truth = generate(config)
    anomalous, normal = [], []
    for video in bundle.videos:
        norms = np.linalg.norm(video.features.astype(np.float64), axis=1)
        segs = truth.segment_labels[video.video_id]
        anomalous.extend(norms[segs == 1])
        normal.extend(norms[segs == 0])
    assert np.mean(normal) == pytest.approx(10.0, abs=0.3)
    assert np.mean(anomalous) == pytest.approx(16.0, abs=0.5)


def test_frame_labels_expand_segment_labels(small_synth):
    bundle, truth = small_synth
    for video in bundle.videos:
        segs = truth.segment_labels[video.video_id]
        frames = truth.frame_labels[video.video_id]
        assert np.array_equal(frames, np.repeat(segs, video.frames_per_segment))


def test_fraction_bounds():
    none, truth = generate(SynthConfig(n_videos=5, d=8, anomaly_video_fraction=0.0, seed=2))
    assert sum(truth.video_labels.values()) == 0
    assert all(v.sum() == 0 for v in truth.segment_labels.values())
    _, truth = generate(SynthConfig(n_videos=5, d=8, anomaly_video_fraction=1.0, seed=2))
    assert sum(truth.video_labels.values()) == 5


def test_manifest_roundtrip(tmp_path, small_synth):
    _, truth = small_synth
    path = tmp_path / "truth.json"
    truth.save_manifest(path)
    back = load_manifest(path)
    assert set(back) == set(truth.frame_labels)
    for vid, frames in truth.frame_labels.items():
        assert np.array_equal(back[vid], frames)


def test_source_tag_names_the_seed(small_synth):
    bundle, _ = small_synth
    assert bundle.source_tag == "synth-seed11"


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_videos=0).validate()
    with pytest.raises(ValueError):
        SynthConfig(anomaly_video_fraction=1.5).validate()
    with pytest.raises(ValueError):
        SynthConfig(window_fraction=0.0).validate()
    with pytest.raises(ValueError):
        SynthConfig(m_min=1).validate()
    with pytest.raises(ValueError):
        SynthConfig(n_videos=3, segment_counts=(4, 5)).validate()
    with pytest.raises(ValueError):
        SynthConfig(n_videos=2, segment_counts=(4, 1)).validate()
    with pytest.raises(ValueError):
        SynthConfig(anomaly_shift=0.0).validate()


def test_config_dict_roundtrip():
    config = SynthConfig(n_videos=6, d=10, seed=3, segment_counts=(3, 3, 3, 4, 4, 4))
    back = SynthConfig.from_dict(json.loads(json.dumps(config.to_dict())))
    assert back == config
