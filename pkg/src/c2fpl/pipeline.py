"""End-to-end pipeline: summaries -> coarse labels -> fine labels -> detector.

Besides the full unsupervised path, the runner supports ablation modes that
swap a stage for ground truth, random labels, or nothing, so the value of each
stage can be measured on data with known truth:

    full                   coarse clustering + window refinement + detector
    wscoarse               ground-truth video labels + window refinement + detector
    random_video_labels    random video labels + window refinement + detector
    cpl_only               coarse clustering copied to segments + detector
    ws_segments            ground-truth video labels copied to segments + detector
    random_segment_labels  random segment labels + detector
    no_detector            coarse + refinement; score = 1 - normalised density
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .cpl import DEFAULT_MAX_SPLITS, CoarseLabels, generate_coarse_labels
from .detector import DetectorModel, TrainConfig, train
from .errors import DataInvariantError
from .evaluate import RocResult, ScoredVideo, expand_to_frames, frame_auc, score_bundle
from .features import FeatureBundle, summarize_bundle
from .fpl import FineLabels, fit_null_model, generate_fine_labels, per_video_p_values
from .seeding import derive_seed
from .synth import GroundTruth

ABLATION_MODES = (
    "full",
    "wscoarse",
    "random_video_labels",
    "cpl_only",
    "ws_segments",
    "random_segment_labels",
    "no_detector",
)

_MODES_NEEDING_TRUTH = ("wscoarse", "ws_segments")
THREADS_ENV_VAR = "C2FPL_THREADS"


@dataclass
class PipelineConfig:
    eta: float = 1.0
    beta: float = 0.2
    train: TrainConfig = field(default_factory=TrainConfig)
    mode: str = "full"
    seed: int = 0
    max_iters: int = DEFAULT_MAX_SPLITS
    attention_mode: str = "residual_fd"
    dropout_rate: float = 0.6

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "beta": self.beta,
            "train": self.train.to_dict(),
            "mode": self.mode,
            "seed": self.seed,
            "max_iters": self.max_iters,
            "attention_mode": self.attention_mode,
            "dropout_rate": self.dropout_rate,
        }


@dataclass
class PipelineResult:
    fine_labels: FineLabels
    detector: DetectorModel | None
    metrics: RocResult | None
    coarse_labels: CoarseLabels | None
    scored: list[ScoredVideo]
    manifest: dict


def _truth_video_labels(truth: GroundTruth | Mapping[str, Sequence[int]]) -> dict[str, int]:
    """Video labels from ground truth; a video is anomalous if any frame is."""
    if isinstance(truth, GroundTruth):
        return dict(truth.video_labels)
    return {vid: int(np.any(np.asarray(labs) == 1)) for vid, labs in truth.items()}


def _truth_frame_labels(
    truth: GroundTruth | Mapping[str, Sequence[int]],
) -> Mapping[str, Sequence[int]]:
    return truth.frame_labels if isinstance(truth, GroundTruth) else truth


def _coarse_from_video_labels(bundle: FeatureBundle, labels: dict[str, int]) -> CoarseLabels:
    missing = [vid for vid in bundle.video_ids() if vid not in labels]
    if missing:
        raise DataInvariantError(f"no video label for {missing[0]!r}")
    used = {vid: int(labels[vid]) for vid in bundle.video_ids()}
    anomalous = sum(used.values())
    normal = len(used) - anomalous
    ratio = anomalous / normal if normal else float("inf")
    return CoarseLabels(labels=used, iterations_used=0, final_ratio=ratio)


def _labels_to_segments(bundle: FeatureBundle, coarse: CoarseLabels) -> FineLabels:
    """Copy each video's label onto all of its segments (no window selection)."""
    segment_labels = {}
    windows = {}
    for video in bundle.videos:
        label = int(coarse.labels[video.video_id])
        segment_labels[video.video_id] = np.full(video.num_segments, label, dtype=np.int64)
        if label == 1:
            windows[video.video_id] = (0, video.num_segments)
    return FineLabels(
        video_labels={vid: int(lab) for vid, lab in coarse.labels.items()},
        segment_labels=segment_labels,
        windows=windows,
    )


def _random_segment_labels(bundle: FeatureBundle, seed: int) -> FineLabels:
    rng = np.random.default_rng(seed)
    segment_labels = {}
    video_labels = {}
    for video in bundle.videos:
        segs = rng.integers(0, 2, size=video.num_segments).astype(np.int64)
        segment_labels[video.video_id] = segs
        video_labels[video.video_id] = int(segs.any())
    return FineLabels(video_labels=video_labels, segment_labels=segment_labels, windows={})


def _density_scores(bundle: FeatureBundle, coarse: CoarseLabels) -> list[ScoredVideo]:
    """Detector-free scoring: 1 - density normalised by the dataset maximum."""
    densities = per_video_p_values(bundle, coarse)
    peak = max(float(vals.max()) for vals in densities.values())
    if peak <= 0.0:
        raise DataInvariantError("all segment densities are zero; cannot normalise")
    scored = []
    for video in bundle.videos:
        segment_scores = 1.0 - densities[video.video_id] / peak
        scored.append(
            ScoredVideo(
                video_id=video.video_id,
                segment_scores=segment_scores,
                frame_scores=expand_to_frames(segment_scores, video.frames_per_segment),
            )
        )
    return scored


def run(
    bundle: FeatureBundle,
    truth: GroundTruth | Mapping[str, Sequence[int]] | None,
    config: PipelineConfig,
) -> PipelineResult:
    """Run the configured pipeline mode over one bundle.

    ``truth`` is optional except for the ws modes; when present it also
    drives frame-level evaluation of the resulting scores.
    """
    if config.mode not in ABLATION_MODES:
        raise ValueError(f"unknown mode {config.mode!r}, expected one of {ABLATION_MODES}")
    if truth is None and config.mode in _MODES_NEEDING_TRUTH:
        raise DataInvariantError(f"mode {config.mode!r} requires ground truth")

    timings: dict[str, float] = {}
    started = time.perf_counter()

    def mark(stage: str) -> None:
        nonlocal started
        now = time.perf_counter()
        timings[stage] = now - started
        started = now

    coarse: CoarseLabels | None = None
    if config.mode in ("full", "cpl_only", "no_detector"):
        summaries = summarize_bundle(bundle)
        mark("summaries")
        coarse = generate_coarse_labels(
            summaries, config.eta, derive_seed(config.seed, "cpl"), config.max_iters
        )
        mark("coarse")
    elif config.mode in _MODES_NEEDING_TRUTH:
        coarse = _coarse_from_video_labels(bundle, _truth_video_labels(truth))
        mark("coarse")
    elif config.mode == "random_video_labels":
        rng = np.random.default_rng(derive_seed(config.seed, "random_video_labels"))
        labels = {vid: int(rng.integers(0, 2)) for vid in bundle.video_ids()}
        coarse = _coarse_from_video_labels(bundle, labels)
        mark("coarse")

    if config.mode in ("full", "wscoarse", "random_video_labels", "no_detector"):
        fine = generate_fine_labels(bundle, coarse, config.beta)
    elif config.mode in ("cpl_only", "ws_segments"):
        fine = _labels_to_segments(bundle, coarse)
    else:  # random_segment_labels
        fine = _random_segment_labels(
            bundle, derive_seed(config.seed, "random_segment_labels")
        )
    mark("fine")

    model: DetectorModel | None = None
    if config.mode == "no_detector":
        scored = _density_scores(bundle, coarse)
        mark("score")
    else:
        train_config = replace(config.train, seed=derive_seed(config.seed, "train"))
        report = train(
            bundle,
            fine,
            train_config,
            attention_mode=config.attention_mode,
            dropout_rate=config.dropout_rate,
        )
        model = report.model
        mark("train")
        scored = score_bundle(model, bundle)
        mark("score")

    metrics: RocResult | None = None
    if truth is not None:
        metrics = frame_auc(scored, _truth_frame_labels(truth))
        mark("eval")

    segments_total = bundle.total_segments()
    segments_anomalous = int(sum(int(s.sum()) for s in fine.segment_labels.values()))
    manifest = {
        "mode": config.mode,
        "config": config.to_dict(),
        "bundle": {
            "n_videos": bundle.num_videos,
            "d": bundle.d,
            "segments_total": segments_total,
            "source_tag": bundle.source_tag,
        },
        "stage_seconds": timings,
        "label_stats": {
            "videos_labeled_anomalous": int(sum(fine.video_labels.values())),
            "segments_labeled_anomalous": segments_anomalous,
            "segments_total": segments_total,
            "coarse_iterations_used": coarse.iterations_used if coarse else None,
            "coarse_final_ratio": coarse.final_ratio if coarse else None,
        },
        "metrics": metrics.to_dict() if metrics else None,
    }
    return PipelineResult(
        fine_labels=fine,
        detector=model,
        metrics=metrics,
        coarse_labels=coarse,
        scored=scored,
        manifest=manifest,
    )


def max_workers_from_env(grid_size: int) -> int:
    """Worker cap for sweep points: C2FPL_THREADS when set, else 1."""
    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if not raw:
        return 1
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from exc
    return max(1, min(cap, grid_size))


def sweep(
    bundle: FeatureBundle,
    truth: GroundTruth | Mapping[str, Sequence[int]],
    base_config: PipelineConfig,
    param: str,
    grid: Sequence[float],
    max_workers: int | None = None,
) -> list[dict]:
    """Run the pipeline once per grid value of ``param`` ("eta" or "beta").

    Each point gets an independent derived seed, so results do not depend on
    execution order or on how many workers run them.
    """
    if param not in ("eta", "beta"):
        raise ValueError(f"param must be 'eta' or 'beta', got {param!r}")
    if not grid:
        raise ValueError("grid must contain at least one value")
    if max_workers is None:
        max_workers = max_workers_from_env(len(grid))

    def point(value: float) -> dict:
        config = replace(
            base_config,
            seed=derive_seed(base_config.seed, "sweep", param, repr(float(value))),
            **{param: float(value)},
        )
        result = run(bundle, truth, config)
        stats = result.manifest["label_stats"]
        row = {
            "param": param,
            "value": float(value),
            "auc": result.metrics.auc if result.metrics else None,
            "num_positive": result.metrics.num_positive if result.metrics else None,
            "num_negative": result.metrics.num_negative if result.metrics else None,
            "videos_labeled_anomalous": stats["videos_labeled_anomalous"],
            "segments_labeled_anomalous": stats["segments_labeled_anomalous"],
            "coarse_iterations_used": stats["coarse_iterations_used"],
            "coarse_final_ratio": stats["coarse_final_ratio"],
        }
        return row

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(point, grid))
    return [point(value) for value in grid]
