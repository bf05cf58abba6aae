"""Command-line interface.

Subcommands: generate, pretrain-angle, finetune-angle, train-imu, score,
evaluate, pca. Every command exits 0 on success; on failure it prints a
single machine-parseable line `error: <Type>: <message>` to stderr and
exits 1.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__, angle, datagen, harness, imaging, imu
from .fusion import FusionWeights

IMAGE_EXTENSIONS = (".png", ".pgm", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg")


def _load_corpus_dir(path: Path) -> list[np.ndarray]:
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
    if not files:
        raise ValueError(f"no image files found in corpus directory {path}")
    corpus = []
    for f in files:
        gray = imaging.to_grayscale(imaging.load_image(f))
        side = min(gray.shape)
        corpus.append(np.clip(imaging.center_crop(gray, side), 0.0, 1.0))
    return corpus


def _write_frames(frames, directory: Path, log: harness.SensorLog, rel_prefix: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        name = f"{i:06d}.png"
        imaging.save_image_gray(directory / name, frame.pixels)
        log.frames.append(harness.FrameRef(timestamp=frame.timestamp,
                                           path=f"{rel_prefix}/{name}"))


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    faults = datagen.FaultMenu(tilt_low=args.tilt_low, tilt_high=args.tilt_high,
                               gyro_bias=args.gyro_bias, accel_bias=args.accel_bias,
                               mag_spike=args.mag_spike)
    base = datagen.texture_corpus(1, size=args.image_size, seed=args.seed)[0]
    imaging.save_image_gray(out / "base.png", base)

    runs = [("train", args.train_duration, 0.0, args.seed),
            ("eval", args.duration, args.abnormal_fraction, args.seed + 1)]
    for name, duration, fraction, seed in runs:
        spec = datagen.SyntheticRunSpec(seed=seed, duration=duration,
                                        abnormal_fraction=fraction, faults=faults,
                                        dt=args.dt)
        data, mag, labels = datagen.make_imu_stream(spec)
        frames = datagen.make_frame_stream(base, labels, seed=seed)
        log = harness.SensorLog(data=data, mag=mag, root=out)
        _write_frames(frames, out / f"frames_{name}", log, f"frames_{name}")
        harness.write_log(log, out / f"{name}.log")
        if name == "eval":
            harness.write_truth_csv(out / "truth.csv", labels)
    print(f"generated train.log ({args.train_duration} timestamps), "
          f"eval.log ({args.duration} timestamps, "
          f"abnormal_fraction={args.abnormal_fraction}) in {out}")
    return 0


def cmd_train_imu(args) -> int:
    log = harness.load_log(args.log)
    rows, _ = harness.align(log, args.tolerance)
    paired = [(r.data, r.mag) for r in rows if r.mag is not None]
    config = imu.ImuTrainConfig(seed=args.seed, epochs=args.epochs, lr=args.lr,
                                optimizer=args.optimizer)
    model = imu.train_joint([d for d, _ in paired], [m for _, m in paired], config)
    imu.save_model(args.out, model)
    print(f"trained on {len(paired)} paired samples: joint loss "
          f"{model.meta['initial_loss']:.6g} -> {model.meta['final_loss']:.6g}, "
          f"L_max_data={model.l_max_data:.6g} L_max_mag={model.l_max_mag:.6g}")
    print(f"saved {args.out}")
    return 0


def _angle_config(args, default_pairs: int) -> angle.AngleTrainConfig:
    return angle.AngleTrainConfig(seed=args.seed, pairs=args.pairs or default_pairs,
                                     epochs=args.epochs, batch_size=args.batch_size,
                                     lr=args.lr, optimizer=args.optimizer)


def cmd_pretrain_angle(args) -> int:
    if args.corpus_dir:
        corpus = _load_corpus_dir(Path(args.corpus_dir))
    else:
        corpus = datagen.texture_corpus(args.corpus_size, size=args.image_size,
                                        seed=args.seed)
    model = angle.pretrain(corpus, _angle_config(args, default_pairs=4000))
    angle.save_model(args.out, model)
    meta = model.meta
    print(f"pretrained on {meta.get('train_pairs', 0)} pairs: "
          f"validation MAE {meta.get('val_mae_degrees', float('nan')):.2f} deg, "
          f"MSE {meta.get('val_mse_degrees', float('nan')):.2f} deg^2")
    print(f"saved {args.out}")
    return 0


def cmd_finetune_angle(args) -> int:
    model = angle.load_model(args.model)
    log = harness.load_log(args.log)
    frames = [imaging.FrameSample(ref.timestamp,
                                  imaging.preprocess_array(
                                      imaging.load_image(log.resolve_frame(ref))))
              for ref in log.frames]
    tuned = angle.finetune(model, frames, _angle_config(args, default_pairs=1200))
    angle.save_model(args.out, tuned)
    meta = tuned.meta
    print(f"finetuned on {len(frames)} frames: validation MAE "
          f"{meta.get('val_mae_degrees', float('nan')):.2f} deg")
    print(f"saved {args.out}")
    return 0


def cmd_score(args) -> int:
    config = harness.PipelineConfig(
        log=args.log, imu_model=args.imu_model, angle_model=args.angle_model,
        reference=args.reference,
        weights=FusionWeights(w_d=args.w_d, w_m=args.w_m, w_l=args.w_l),
        threshold=args.fusion_threshold, tolerance=args.tolerance,
        truth=harness.read_truth_csv(args.truth) if args.truth else None,
        scores_csv=args.out, report_csv=args.report, angles_csv=args.angles_out)
    result = harness.run_pipeline(config)
    n_abn = sum(1 for s in result.scores if s.label == "abnormal")
    print(f"scored {len(result.scores)} timestamps ({n_abn} abnormal, "
          f"{len(result.unscorable)} unscorable) -> {args.out}")
    if args.angle_threshold is not None:
        over = sum(1 for s in result.scores
                   if s.sigma_l * 90.0 >= args.angle_threshold)
        print(f"angle-only classification at {args.angle_threshold} deg: "
              f"{over} abnormal of {len(result.scores)}")
    if result.report is not None:
        r = result.report
        print(f"accuracy={r.accuracy:.4f} f1={r.f1:.4f} "
              f"fn={r.fn} fp={r.fp} tp={r.tp} tn={r.tn}")
    return 0


def cmd_evaluate(args) -> int:
    scores, unscorable = harness.read_scores_csv(args.scores)
    truth = {lab.timestamp: lab.label for lab in harness.read_truth_csv(args.truth)}
    missing = [s.timestamp for s in scores if s.timestamp not in truth]
    if missing:
        raise ValueError(f"{len(missing)} scored timestamps missing from truth, "
                         f"first: {missing[0]}")
    report = harness.evaluate([s.label for s in scores],
                              [truth[s.timestamp] for s in scores])
    if unscorable:
        print(f"skipped {len(unscorable)} unscorable timestamps")
    r = report.as_dict()
    print(f"accuracy={r['accuracy']:.4f} precision={r['precision']:.4f} "
          f"recall={r['recall']:.4f} f1={r['f1']:.4f} "
          f"tp={r['tp']} fp={r['fp']} tn={r['tn']} fn={r['fn']}")
    if args.out:
        harness.write_report_csv(args.out, report)
        print(f"saved {args.out}")
    return 0


def cmd_pca(args) -> int:
    with open(args.features, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if not rows:
        raise ValueError(f"feature CSV {args.features} has no data rows")
    ts_col = header.index("timestamp") if "timestamp" in header else None
    feat_cols = [i for i in range(len(header)) if i != ts_col]
    x = np.array([[float(row[i]) for i in feat_cols] for row in rows])
    result = harness.pca_diagnostic(x, k=args.components)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        cols = [f"pc{i + 1}" for i in range(args.components)]
        if ts_col is not None:
            w.writerow(["timestamp"] + cols)
            for row, proj in zip(rows, result.projected):
                w.writerow([row[ts_col]] + [repr(float(v)) for v in proj])
        else:
            w.writerow(cols)
            for proj in result.projected:
                w.writerow([repr(float(v)) for v in proj])
    ratios = " ".join(f"{v:.6f}" for v in result.explained_variance_ratio)
    print(f"explained variance ratios: {ratios}")
    print(f"saved {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dronewatch",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic train/eval corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=int, default=1000)
    p.add_argument("--train-duration", type=int, default=900)
    p.add_argument("--abnormal-fraction", type=float, default=0.3)
    p.add_argument("--image-size", type=int, default=96)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--tilt-low", type=float, default=30.0)
    p.add_argument("--tilt-high", type=float, default=90.0)
    p.add_argument("--gyro-bias", type=float, default=2.0)
    p.add_argument("--accel-bias", type=float, default=5.0)
    p.add_argument("--mag-spike", type=float, default=250000.0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-imu", help="train the joint IMU autoencoders")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="sgd")
    p.add_argument("--tolerance", type=float, default=harness.DEFAULT_TOLERANCE)
    p.set_defaults(func=cmd_train_imu)

    for name, fn, help_text in (
            ("pretrain-angle", cmd_pretrain_angle, "pretrain the angle regressor"),
            ("finetune-angle", cmd_finetune_angle, "finetune on a deployment log")):
        p = sub.add_parser(name, help=help_text)
        if name == "pretrain-angle":
            p.add_argument("--corpus-dir", help="directory of images; default is the "
                                                "built-in procedural corpus")
            p.add_argument("--corpus-size", type=int, default=400)
            p.add_argument("--image-size", type=int, default=96)
        else:
            p.add_argument("--model", required=True)
            p.add_argument("--log", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--pairs", type=int, default=None)
        p.add_argument("--epochs", type=int, default=16 if name == "pretrain-angle" else 4)
        p.add_argument("--batch-size", type=int, default=32)
        p.add_argument("--lr", type=float, default=2e-3)
        p.add_argument("--optimizer", choices=["sgd", "adam"], default="adam")
        p.set_defaults(func=fn)

    p = sub.add_parser("score", help="score a log with trained checkpoints")
    p.add_argument("--log", required=True)
    p.add_argument("--imu-model", required=True)
    p.add_argument("--angle-model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reference", default="first",
                   help="reference frame image path, or 'first' for the log's "
                        "first frame")
    p.add_argument("--w-d", type=float, default=1.0)
    p.add_argument("--w-m", type=float, default=0.9)
    p.add_argument("--w-l", type=float, default=0.75)
    p.add_argument("--fusion-threshold", type=float, default=1.0)
    p.add_argument("--angle-threshold", type=float, default=None,
                   help="also report angle-only classification at this threshold")
    p.add_argument("--angles-out", default=None,
                   help="optional CSV of per-frame angle predictions")
    p.add_argument("--tolerance", type=float, default=harness.DEFAULT_TOLERANCE)
    p.add_argument("--truth", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="compare a scores CSV against ground truth")
    p.add_argument("--scores", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pca", help="project a feature CSV onto principal components")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--components", type=int, default=2)
    p.set_defaults(func=cmd_pca)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # single machine-parseable error line
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
