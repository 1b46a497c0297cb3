"""Command line interface.

Subcommands cover the whole pipeline: synthesise data, generate pseudo-labels,
train, score, evaluate, run end to end, compare ablation modes, and sweep a
parameter grid. Primary outputs are JSON and CSV; passing ``--figures-dir``
additionally renders PNG figures next to them.

Exit codes: 0 success, 2 usage, 3 I/O failure, 4 violated data invariant,
5 numerically degenerate input. Failures print a single machine-parsable line
to stderr of the form ``error: kind=<kind> exit=<code> message=<text>``.

All randomness flows from the ``--seed`` flag; stages hash it with their own
name, so two subcommands given the same seed stay independent.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .cpl import generate_coarse_labels
from .detector import ATTENTION_MODES, TrainConfig, load_model, save_model, train
from .errors import C2FPLError, DataInvariantError
from .evaluate import (
    frame_auc,
    read_frame_scores_csv,
    write_frame_scores_csv,
)
from .features import read_bundle, summarize_bundle, write_bundle
from .fpl import FineLabels, generate_fine_labels, per_video_p_values, write_p_values_csv
from .pipeline import ABLATION_MODES, PipelineConfig, run, sweep
from .seeding import derive_seed
from .synth import GroundTruth, SynthConfig, generate, load_manifest


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0.0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _unit_open_float(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {text}")
    return value


def _write_json(path: str | Path, payload: dict) -> None:
    with Path(path).open("w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _read_json(path: str | Path) -> dict:
    with Path(path).open() as handle:
        return json.load(handle)


def _load_fine_labels(path: Path) -> FineLabels:
    payload = _read_json(path)
    if "fine" in payload:
        payload = payload["fine"]
    if "videos" not in payload:
        raise DataInvariantError(f"{path}: not a labels file (no 'videos' entry)")
    return FineLabels.from_dict(payload)


def _labels_payload(args_seed: int, eta: float, beta: float, coarse, fine) -> dict:
    return {
        "eta": eta,
        "beta": beta,
        "seed": args_seed,
        "coarse": coarse.to_dict() if coarse is not None else None,
        "fine": fine.to_dict(),
    }


# --- subcommand handlers ----------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    if args.config is not None:
        payload = _read_json(args.config)
        if "seed" not in payload:
            payload["seed"] = derive_seed(args.seed, "synth")
        config = SynthConfig.from_dict(payload)
    else:
        config = SynthConfig(seed=derive_seed(args.seed, "synth"))
    try:
        config.validate()
    except ValueError as exc:
        raise DataInvariantError(str(exc)) from exc
    bundle, truth = generate(config)
    write_bundle(bundle, args.out)
    truth_path = args.truth_out if args.truth_out else f"{args.out}.truth.json"
    truth.save_manifest(truth_path)
    print(
        f"wrote {bundle.num_videos} videos "
        f"({bundle.total_segments()} segments, d={bundle.d}) to {args.out}; "
        f"truth manifest at {truth_path}"
    )
    return 0


def cmd_labels(args: argparse.Namespace) -> int:
    bundle = read_bundle(args.bundle)
    summaries = summarize_bundle(bundle)
    coarse = generate_coarse_labels(
        summaries, args.eta, derive_seed(args.seed, "cpl"), args.max_iters
    )
    fine = generate_fine_labels(bundle, coarse, args.beta)
    _write_json(args.out, _labels_payload(args.seed, args.eta, args.beta, coarse, fine))

    densities = None
    if args.pvalues_out or args.figures_dir:
        densities = per_video_p_values(bundle, coarse)
    if args.pvalues_out:
        write_p_values_csv(args.pvalues_out, densities)
    if args.figures_dir:
        from . import plots

        anomalous = [vid for vid, lab in fine.video_labels.items() if lab == 1]
        for vid in anomalous[: args.figures_limit]:
            plots.save_p_value_figure(
                vid,
                densities[vid],
                fine.windows.get(vid),
                Path(args.figures_dir) / f"pvalues_{vid}.png",
                alpha=args.alpha,
            )
    anomalous_count = sum(fine.video_labels.values())
    print(
        f"labelled {anomalous_count}/{bundle.num_videos} videos anomalous "
        f"in {coarse.iterations_used} splits (ratio {coarse.final_ratio:.3f}); "
        f"labels at {args.out}"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    bundle = read_bundle(args.bundle)
    fine = _load_fine_labels(args.labels)
    if args.config is not None:
        payload = _read_json(args.config)
        if "seed" not in payload:
            payload["seed"] = derive_seed(args.seed, "train")
        config = TrainConfig.from_dict(payload)
    else:
        config = TrainConfig(seed=derive_seed(args.seed, "train"))
    report = train(
        bundle,
        fine,
        config,
        attention_mode=args.attention_mode,
        dropout_rate=args.dropout,
    )
    save_model(report.model, config, args.out)
    for note in report.warnings:
        print(f"warning: {note}", file=sys.stderr)
    if args.figures_dir:
        from . import plots

        plots.save_loss_curve(report.epoch_losses, Path(args.figures_dir) / "loss_curve.png")
    final = report.epoch_losses[-1] if report.epoch_losses else float("nan")
    print(
        f"trained {config.epochs} epochs on {bundle.total_segments()} segments "
        f"(final loss {final:.6f}); checkpoint at {args.out}"
    )
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    model, _ = load_model(args.model)
    bundle = read_bundle(args.bundle)
    from .evaluate import score_bundle

    scored = score_bundle(model, bundle)
    write_frame_scores_csv(args.out, scored)
    if args.figures_dir:
        from . import plots

        truth = load_manifest(args.truth) if args.truth else {}
        for video in scored[: args.figures_limit]:
            plots.save_frame_score_figure(
                video,
                truth.get(video.video_id),
                Path(args.figures_dir) / f"scores_{video.video_id}.png",
            )
    total_frames = sum(v.frame_scores.size for v in scored)
    print(f"scored {len(scored)} videos ({total_frames} frames); scores at {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    scored = read_frame_scores_csv(args.scores)
    truth = load_manifest(args.truth)
    result = frame_auc(scored, truth)
    _write_json(args.out, result.to_dict())
    print(
        f"auc={result.auc:.6f} over {result.num_positive} positive / "
        f"{result.num_negative} negative frames; metrics at {args.out}"
    )
    return 0


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    train_config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        l2_lambda=args.l2_lambda,
        seed=args.seed,  # replaced by a derived seed inside run()
    )
    return PipelineConfig(
        eta=args.eta,
        beta=args.beta,
        train=train_config,
        mode=getattr(args, "mode", "full"),
        seed=args.seed,
        max_iters=args.max_iters,
        attention_mode=args.attention_mode,
        dropout_rate=args.dropout,
    )


def cmd_run(args: argparse.Namespace) -> int:
    bundle = read_bundle(args.bundle)
    truth = load_manifest(args.truth) if args.truth else None
    config = _pipeline_config(args)
    result = run(bundle, truth, config)
    _write_json(args.out, result.manifest)
    if args.labels_out:
        _write_json(
            args.labels_out,
            _labels_payload(args.seed, args.eta, args.beta, result.coarse_labels,
                            result.fine_labels),
        )
    if args.model_out:
        if result.detector is None:
            print("note: no detector trained in this mode; skipping --model-out",
                  file=sys.stderr)
        else:
            used = replace(config.train, seed=derive_seed(config.seed, "train"))
            save_model(result.detector, used, args.model_out)
    if args.scores_out:
        write_frame_scores_csv(args.scores_out, result.scored)
    if args.metrics_out:
        if result.metrics is None:
            print("note: no ground truth given; skipping --metrics-out", file=sys.stderr)
        else:
            _write_json(args.metrics_out, result.metrics.to_dict())
    if args.figures_dir:
        from . import plots

        frame_truth = truth if truth is not None else {}
        for video in result.scored[: args.figures_limit]:
            plots.save_frame_score_figure(
                video,
                frame_truth.get(video.video_id),
                Path(args.figures_dir) / f"scores_{video.video_id}.png",
            )
    if result.metrics is not None:
        print(f"mode={config.mode} auc={result.metrics.auc:.6f}; manifest at {args.out}")
    else:
        print(f"mode={config.mode} complete (no truth, no AUC); manifest at {args.out}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    bundle = read_bundle(args.bundle)
    truth = load_manifest(args.truth)
    modes = args.modes.split(",") if args.modes else list(ABLATION_MODES)
    for mode in modes:
        if mode not in ABLATION_MODES:
            raise DataInvariantError(
                f"unknown mode {mode!r}, expected one of {ABLATION_MODES}"
            )
    base = _pipeline_config(args)
    rows = []
    for mode in modes:
        result = run(bundle, truth, replace(base, mode=mode))
        stats = result.manifest["label_stats"]
        rows.append(
            {
                "mode": mode,
                "auc": result.metrics.auc if result.metrics else None,
                "num_positive": result.metrics.num_positive if result.metrics else None,
                "num_negative": result.metrics.num_negative if result.metrics else None,
                "videos_labeled_anomalous": stats["videos_labeled_anomalous"],
                "segments_labeled_anomalous": stats["segments_labeled_anomalous"],
            }
        )
        print(f"mode={mode} auc={rows[-1]['auc']}")
    _write_csv(args.out, rows)
    if args.figures_dir:
        from . import plots

        plots.save_ablation_figure(rows, Path(args.figures_dir) / "ablation.png")
    print(f"ablation table at {args.out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    bundle = read_bundle(args.bundle)
    truth = load_manifest(args.truth)
    grid = [float(part) for part in args.grid.split(",") if part.strip()]
    if not grid:
        raise DataInvariantError("empty --grid")
    base = _pipeline_config(args)
    rows = sweep(bundle, truth, base, args.param, grid)
    _write_csv(args.out, rows)
    if args.figures_dir:
        from . import plots

        plots.save_sweep_figure(rows, Path(args.figures_dir) / f"sweep_{args.param}.png")
    for row in rows:
        print(f"{args.param}={row['value']} auc={row['auc']}")
    print(f"sweep table at {args.out}")
    return 0


def _write_csv(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        raise DataInvariantError("no rows to write")
    with Path(path).open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()}
            )


# --- parser wiring -----------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser, figures: bool = True) -> None:
    parser.add_argument("--seed", type=int, default=0,
                        help="root seed; every stage derives its own from it")
    if figures:
        parser.add_argument("--figures-dir", default=None,
                            help="also render PNG figures into this directory")
        parser.add_argument("--figures-limit", type=int, default=8,
                            help="maximum per-video figures to render")


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--eta", type=_positive_float, default=1.0,
                        help="anomalous/normal stop ratio for the divisive loop")
    parser.add_argument("--beta", type=_unit_open_float, default=0.2,
                        help="anomalous window fraction per video")
    parser.add_argument("--max-iters", type=int, default=50,
                        help="safety cap on divisive splits")
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--batch-size", type=int, default=128)
    parser.add_argument("--learning-rate", type=_positive_float, default=0.01)
    parser.add_argument("--l2-lambda", type=float, default=1e-3)
    parser.add_argument("--attention-mode", choices=ATTENTION_MODES,
                        default="residual_fd")
    parser.add_argument("--dropout", type=float, default=0.6)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="c2fpl",
        description="Coarse-to-fine pseudo-labels for video anomaly detection "
                    "over segment features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic bundle with ground truth")
    p.add_argument("--config", default=None,
                   help="JSON file of generator settings (defaults apply otherwise)")
    p.add_argument("--out", required=True, help="bundle file to write")
    p.add_argument("--truth-out", default=None,
                   help="truth manifest path (default: <out>.truth.json)")
    _add_common(p, figures=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("labels", help="generate coarse and fine pseudo-labels")
    p.add_argument("--bundle", required=True)
    p.add_argument("--eta", type=_positive_float, default=1.0)
    p.add_argument("--beta", type=_unit_open_float, default=0.2)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--out", required=True, help="labels JSON to write")
    p.add_argument("--pvalues-out", default=None,
                   help="also write per-segment densities as CSV")
    p.add_argument("--alpha", type=float, default=None,
                   help="diagnostic density level drawn on figures")
    _add_common(p)
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("train", help="train the detector on fine labels")
    p.add_argument("--bundle", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--config", default=None,
                   help="JSON file of training settings")
    p.add_argument("--attention-mode", choices=ATTENTION_MODES, default="residual_fd")
    p.add_argument("--dropout", type=float, default=0.6)
    p.add_argument("--out", required=True, help="checkpoint file to write")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a bundle with a trained detector")
    p.add_argument("--model", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--truth", default=None,
                   help="optional manifest, used only to shade figures")
    p.add_argument("--out", required=True, help="frame score CSV to write")
    _add_common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="frame-level ROC-AUC of a score CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True, help="metrics JSON to write")
    _add_common(p, figures=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="run the full pipeline (or an ablation mode)")
    p.add_argument("--mode", choices=ABLATION_MODES, default="full")
    p.add_argument("--bundle", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--out", required=True, help="run manifest JSON to write")
    p.add_argument("--labels-out", default=None)
    p.add_argument("--model-out", default=None)
    p.add_argument("--scores-out", default=None)
    p.add_argument("--metrics-out", default=None)
    _add_pipeline_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run several modes over one bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--modes", default=None,
                   help="comma-separated mode list (default: all modes)")
    p.add_argument("--out", required=True, help="ablation CSV to write")
    _add_pipeline_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="sweep eta or beta over a grid")
    p.add_argument("--param", choices=("eta", "beta"), required=True)
    p.add_argument("--grid", required=True, help="comma-separated values")
    p.add_argument("--bundle", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True, help="sweep CSV to write")
    _add_pipeline_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def _fail(kind: str, code: int, exc: BaseException) -> int:
    message = " ".join(str(exc).split())
    print(f"error: kind={kind} exit={code} message={message}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.func(args) or 0)
    except C2FPLError as exc:
        return _fail(exc.kind, exc.exit_code, exc)
    except FileNotFoundError as exc:
        return _fail("io", 3, exc)
    except OSError as exc:
        return _fail("io", 3, exc)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail("data", 4, exc)


if __name__ == "__main__":
    sys.exit(main())
