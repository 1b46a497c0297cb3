import json
import math
from fractions import Fraction

import numpy as np
import pytest

from c2fpl.cpl import CoarseLabels
from c2fpl.errors import DataInvariantError, InsufficientDataError
from c2fpl.fpl import (
    VARIANCE_FLOOR,
    FineLabels,
    NullModel,
    fit_null_model,
    generate_fine_labels,
    p_value,
    p_values,
    per_video_p_values,
    segment_representation,
    select_window,
    window_length,
    write_p_values_csv,
)

from helpers import axis_video, bundle_of


def _coarse(bundle, labels):
    return CoarseLabels(
        labels={vid: labels[i] for i, vid in enumerate(bundle.video_ids())},
        iterations_used=0,
        final_ratio=0.0,
    )


def test_default_representation_is_the_norm():
    rep = segment_representation(np.array([3.0, 4.0], dtype=np.float32))
    assert rep.shape == (1,)
    assert rep[0] == 5.0


def test_null_model_hand_case():
    # norms 1, 2, 3: mean 2, sample variance ((1)+(0)+(1)) / 2 = 1
    bundle = bundle_of(axis_video("n", [1.0, 2.0, 3.0]), axis_video("a", [9.0, 9.0]))
    model = fit_null_model(bundle, _coarse(bundle, [0, 1]))
    assert model.dim == 1
    assert model.gamma[0] == 2.0
    assert model.sigma[0, 0] == 1.0


def test_null_model_matches_fsum_loop():
    rng = np.random.default_rng(6)
    videos = [
        axis_video(f"v{i}", 10.0 + rng.standard_normal(int(rng.integers(3, 8))))
        for i in range(4)
    ]
    bundle = bundle_of(*videos)
    model = fit_null_model(bundle, _coarse(bundle, [0, 0, 0, 0]))
    norms = [float(n) for v in bundle.videos for n in np.abs(v.features[:, 0])]
    mean = math.fsum(norms) / len(norms)
    var = math.fsum((n - mean) ** 2 for n in norms) / (len(norms) - 1)
    assert model.gamma[0] == pytest.approx(mean, rel=1e-12)
    assert model.sigma[0, 0] == pytest.approx(var, rel=1e-12)


def test_null_model_needs_two_normal_segments():
    bundle = bundle_of(axis_video("n", [5.0]), axis_video("a", [9.0, 9.0]))
    with pytest.raises(InsufficientDataError):
        fit_null_model(bundle, _coarse(bundle, [0, 1]))


def test_null_model_requires_complete_coarse_labels():
    bundle = bundle_of(axis_video("n", [5.0, 6.0]), axis_video("a", [9.0]))
    coarse = CoarseLabels(labels={"n": 0}, iterations_used=0, final_ratio=0.0)
    with pytest.raises(DataInvariantError):
        fit_null_model(bundle, coarse)


def test_variance_floor_keeps_constant_norms_usable():
    bundle = bundle_of(axis_video("n", [5.0, 5.0, 5.0]), axis_video("a", [9.0]))
    model = fit_null_model(bundle, _coarse(bundle, [0, 1]))
    assert model.sigma[0, 0] == VARIANCE_FLOOR
    value = p_value(model, np.array([5.0]))
    assert np.isfinite(value) and value > 1.0  # a density, not a probability


def test_p_value_standard_normal_values():
    model = NullModel(gamma=np.zeros(1), sigma=np.eye(1), dim=1)
    assert p_value(model, np.array([0.0])) == pytest.approx(
        1.0 / math.sqrt(2.0 * math.pi), abs=1e-12
    )
    assert p_value(model, np.array([1.0])) == pytest.approx(
        math.exp(-0.5) / math.sqrt(2.0 * math.pi), abs=1e-12
    )


def test_p_value_symmetric_and_decaying():
    model = NullModel(gamma=np.array([2.0]), sigma=np.array([[0.7]]), dim=1)
    offsets = [0.1, 0.5, 1.0, 3.0]
    values = [p_value(model, np.array([2.0 + t])) for t in offsets]
    for t, val in zip(offsets, values):
        assert val == pytest.approx(p_value(model, np.array([2.0 - t])), rel=1e-12)
    assert all(a > b for a, b in zip(values, values[1:]))


def test_p_values_match_closed_form_2d():
    rng = np.random.default_rng(14)
    a = rng.standard_normal((2, 2))
    sigma = a @ a.T + np.eye(2)
    gamma = rng.standard_normal(2)
    model = NullModel(gamma=gamma, sigma=sigma, dim=2)
    reps = rng.standard_normal((20, 2)) * 2.0
    got = p_values(model, reps)
    det = sigma[0, 0] * sigma[1, 1] - sigma[0, 1] * sigma[1, 0]
    inv = np.array([[sigma[1, 1], -sigma[0, 1]], [-sigma[1, 0], sigma[0, 0]]]) / det
    for row, value in zip(reps, got):
        diff = row - gamma
        quad = float(diff @ inv @ diff)
        expected = math.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(det))
        assert value == pytest.approx(expected, rel=1e-10)
    single = [p_value(model, row) for row in reps]
    assert np.allclose(got, single, rtol=1e-15, atol=0.0)


def test_p_values_reject_wrong_dimension():
    model = NullModel(gamma=np.zeros(2), sigma=np.eye(2), dim=2)
    with pytest.raises(DataInvariantError):
        p_values(model, np.zeros((3, 3)))


def _window_oracle(beta, m):
    return min(m, max(1, math.ceil(Fraction(str(beta)) * m)))


def test_window_length_examples():
    assert window_length(0.2, 10) == 2  # not 3: 0.2 * 10 floats a hair above 2
    assert window_length(0.2, 11) == 3
    assert window_length(0.1, 5) == 1
    assert window_length(0.3, 200) == 60
    assert window_length(0.99, 3) == 3
    assert window_length(0.001, 2) == 1


def test_window_length_matches_exact_arithmetic():
    for beta in (0.1, 0.2, 0.25, 0.3, 0.5, 0.75):
        for m in range(1, 400):
            assert window_length(beta, m) == _window_oracle(beta, m), (beta, m)


def test_window_length_validation():
    with pytest.raises(ValueError):
        window_length(0.0, 10)
    with pytest.raises(ValueError):
        window_length(1.0, 10)
    with pytest.raises(ValueError):
        window_length(0.2, 0)


def test_select_window_constant_values_pick_start():
    start, length = select_window(np.full(10, 0.1), beta=0.2)
    assert (start, length) == (0, 2)


def test_select_window_finds_the_minimum():
    values = np.array([5.0, 1.0, 1.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0])
    assert select_window(values, beta=0.2) == (1, 2)


def test_select_window_tie_takes_smallest_start():
    values = np.array([5.0, 1.0, 1.0, 5.0, 5.0, 1.0, 1.0, 5.0])
    assert select_window(values, beta=0.2) == (1, 2)


def test_select_window_matches_brute_force():
    rng = np.random.default_rng(77)
    betas = (0.1, 0.2, 0.3)
    for case in range(200):
        m = int(rng.integers(2, 201))
        beta = betas[case % 3]
        if case % 2:
            values = rng.integers(0, 5, size=m).astype(np.float64)
        else:
            values = rng.random(m)
        start, length = select_window(values, beta)
        assert length == _window_oracle(beta, m)
        best = min(
            (float(np.sum(values[l : l + length])), l)
            for l in range(m - length + 1)
        )[1]
        assert start == best


def test_fine_labels_normal_videos_stay_zero_for_any_beta():
    bundle = bundle_of(
        axis_video("n1", [10.0, 11.0, 9.0, 10.0]),
        axis_video("n2", [10.5, 9.5, 10.0]),
        axis_video("a", [10.0, 30.0, 30.0, 10.0, 10.0]),
    )
    coarse = _coarse(bundle, [0, 0, 1])
    for beta in (0.2, 0.5):
        fine = generate_fine_labels(bundle, coarse, beta)
        assert fine.segment_labels["n1"].sum() == 0
        assert fine.segment_labels["n2"].sum() == 0
        assert "n1" not in fine.windows


def test_fine_labels_mark_one_window_of_the_right_size():
    bundle = bundle_of(
        axis_video("n1", [10.0, 11.0, 9.0, 10.0, 10.0]),
        axis_video("n2", [10.5, 9.5, 10.0, 10.2]),
        axis_video("a", [10.0, 10.0, 30.0, 30.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0]),
    )
    fine = generate_fine_labels(bundle, _coarse(bundle, [0, 0, 1]), beta=0.2)
    segs = fine.segment_labels["a"]
    start, length = fine.windows["a"]
    assert length == 2
    assert (start, length) == (2, 2)  # the planted high-norm stretch
    assert segs.sum() == length
    assert segs[start : start + length].all()
    assert fine.video_labels == {"n1": 0, "n2": 0, "a": 1}


def test_fine_labels_json_roundtrip():
    fine = FineLabels(
        video_labels={"a": 1, "n": 0},
        segment_labels={"a": np.array([0, 1, 1, 0]), "n": np.zeros(3, dtype=np.int64)},
        windows={"a": (1, 2)},
    )
    back = FineLabels.from_dict(json.loads(json.dumps(fine.to_dict())))
    assert back.video_labels == fine.video_labels
    assert back.windows == fine.windows
    for vid in fine.segment_labels:
        assert np.array_equal(back.segment_labels[vid], fine.segment_labels[vid])


def test_per_video_p_values_scores_everything():
    bundle = bundle_of(
        axis_video("n", [10.0, 11.0, 9.0]), axis_video("a", [10.0, 30.0])
    )
    densities = per_video_p_values(bundle, _coarse(bundle, [0, 1]))
    assert set(densities) == {"n", "a"}
    assert densities["n"].shape == (3,)
    assert densities["a"].shape == (2,)
    # the shifted segment is less usual than its in-model neighbour
    assert densities["a"][1] < densities["a"][0]


def test_p_values_csv_roundtrip(tmp_path):
    import csv

    values = {"v1": np.array([0.25, 1.5e-7]), "v2": np.array([0.125])}
    path = tmp_path / "p.csv"
    write_p_values_csv(path, values)
    with path.open(newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["video_id", "segment_index", "p_value"]
    parsed = [(r[0], int(r[1]), float(r[2])) for r in rows[1:]]
    assert parsed == [("v1", 0, 0.25), ("v1", 1, 1.5e-7), ("v2", 0, 0.125)]
