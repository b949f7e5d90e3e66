"""Command-line entry points: synth, train, eval, roc, sweep-lambda,
bench-metric, detect. Exit codes: 0 success, 1 usage error, 2 runtime error."""

import argparse
import sys
import time

import numpy as np

from . import evaluate, signal, synthdata
from .cpn import TrainConfig, load_cpn, save_cpn
from .lda import lda_fit, load_lda, save_lda
from .openset import calibrate_threshold
from .spdmetric import MetricKind, led_squared, lift, sled_squared


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_model(path: str):
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == b"CPN1":
        return load_cpn(path)
    if magic == b"LDA1":
        return load_lda(path)
    raise ValueError(f"{path}: unrecognized model file")


def _method_metric(method: str) -> MetricKind:
    return {"sled": MetricKind.SLED, "ed": MetricKind.ED, "md": MetricKind.MD}[method.split("-")[1]]


def _target_maps(recs, window_cfg):
    """Upsample-ready feature maps and contiguous labels for target trials."""
    target_ids = sorted({r.motion_id for r in recs if r.is_target})
    label_of = {mid: i for i, mid in enumerate(target_ids)}
    maps, labels = [], []
    for rec in sorted(recs, key=lambda r: (r.motion_id, r.repetition)):
        if rec.is_target:
            ms = signal.recording_feature_maps(rec, window_cfg)
            maps.extend(ms)
            labels.extend([label_of[rec.motion_id]] * len(ms))
    return maps, np.array(labels), target_ids


# ------------------------------------------------------------------ commands

def _cmd_synth(args):
    if args.targets < 2:
        raise UsageError("--targets must be at least 2")
    if args.reps < 5:
        raise UsageError("--reps must be at least 5")
    cfg = synthdata.SynthConfig(n_target=args.targets, n_novel=args.novels,
                                reps=args.reps, seed=args.seed)
    recs = synthdata.generate(cfg)
    synthdata.write_dataset(recs, args.out)
    print(f"wrote {len(recs)} trials ({args.targets} target + {args.novels} novel motions, "
          f"{args.reps} reps) to {args.out}")
    return 0


def _train_config(args, method):
    kwargs = {"seed": args.seed}
    if getattr(args, "epochs", None) is not None:
        kwargs["epochs"] = args.epochs
    if getattr(args, "lambda_loss", None) is not None:
        kwargs["lambda_loss"] = args.lambda_loss
    cfg = TrainConfig(**kwargs)
    print(f"lambda_loss = {cfg.resolve_lambda(_method_metric(method))}"
          f" ({'explicit' if args.lambda_loss is not None else 'default for ' + method})")
    return cfg


def _cmd_train(args):
    recs = synthdata.read_dataset(args.data)
    maps, labels, _ = _target_maps(recs, signal.WindowConfig())
    metric = _method_metric(args.method)
    if args.method.startswith("cpn"):
        cfg = _train_config(args, args.method)
        model = evaluate.train_extractor(args.method, maps, labels, evaluate.ExperimentConfig(train=cfg, seed=args.seed))
        save_cpn(model, args.out)
        print(f"final epoch mean loss: {model.history['epoch_losses'][-1]:.6g}")
        print(f"training accuracy: {model.history['train_accuracy']:.4f}")
    else:
        flats = np.stack([signal.flatten_map(m) for m in maps])
        model = lda_fit(flats, labels)
        save_lda(model, args.out)
        feats = model.project(flats)
        pred, _ = evaluate.nearest_distances(model, metric, feats)
        acc = float(np.mean(pred == labels))
        print(f"training accuracy: {acc:.4f}")
    print(f"model written to {args.out}")
    return 0


def _experiment_config(args, method):
    train = TrainConfig(
        seed=args.seed,
        **({"epochs": args.epochs} if getattr(args, "epochs", None) is not None else {}),
        **({"lambda_loss": args.lambda_loss} if getattr(args, "lambda_loss", None) is not None else {}),
    )
    return evaluate.ExperimentConfig(folds=args.folds, tpr_goal=args.tpr, seed=args.seed, train=train)


def _cmd_eval(args):
    recs = synthdata.read_dataset(args.data)
    cfg = _experiment_config(args, args.method)
    report = evaluate.run_experiment(recs, args.method, cfg)
    if args.out_dir:
        evaluate.write_all_artifacts(report, args.out_dir, svg=not args.no_svg)
        print(f"artifacts written to {args.out_dir}")
    print(f"mean AUC: {report.mean_auc:.4f}")
    print(f"novel-detection accuracy @ TPR={args.tpr}: {report.mean_novel_detection:.4f}")
    print(f"target accuracy @ TPR={args.tpr}: {report.mean_target_accuracy:.4f}")
    return 0


def _cmd_roc(args):
    recs = synthdata.read_dataset(args.data)
    model = _load_model(args.model)
    metric = MetricKind(args.metric) if args.metric else getattr(model, "metric", MetricKind.SLED)
    window_cfg = signal.WindowConfig()
    target_d, novel_d = [], []
    for rec in sorted(recs, key=lambda r: (r.motion_id, r.repetition)):
        maps = signal.recording_feature_maps(rec, window_cfg)
        feats = evaluate.extract_features(model, maps)
        _, dists = evaluate.nearest_distances(model, metric, feats)
        (target_d if rec.is_target else novel_d).extend(dists)
    curve = evaluate.roc_curve(target_d, novel_d)
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        f.write("threshold,fpr,tpr\n")
        for t, fpr, tpr in curve.points:
            f.write(f"{t:.12g},{fpr:.12g},{tpr:.12g}\n")
    print(f"AUC: {evaluate.auc(curve):.4f}")
    print(f"ROC written to {args.out}")
    return 0


def _cmd_sweep_lambda(args):
    if not args.method.startswith("cpn"):
        raise UsageError("sweep-lambda requires a CPN method")
    try:
        grid = [float(x) for x in args.grid.split(",") if x.strip() != ""]
    except ValueError as e:
        raise UsageError(f"non-numeric --grid value: {e}") from e
    if not grid:
        raise UsageError("--grid must list at least one value")
    deduped = sorted(set(grid))
    if len(deduped) != len(grid):
        print("warning: duplicate grid values deduplicated", file=sys.stderr)
    recs = synthdata.read_dataset(args.data)
    rows = []
    for lam in deduped:
        cfg_args = argparse.Namespace(folds=args.folds, tpr=args.tpr, seed=args.seed,
                                      epochs=args.epochs, lambda_loss=lam)
        report = evaluate.run_experiment(recs, args.method, _experiment_config(cfg_args, args.method))
        rows.append((lam, report.mean_auc))
        print(f"lambda={lam:g}: AUC={report.mean_auc:.4f}")
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        f.write("lambda,auc\n")
        for lam, a in rows:
            f.write(f"{lam:.12g},{a:.12g}\n")
    print(f"sweep written to {args.out}")
    return 0


def _cmd_bench_metric(args):
    try:
        dims = [int(x) for x in args.dims.split(",") if x.strip() != ""]
    except ValueError as e:
        raise UsageError(f"non-numeric --dims value: {e}") from e
    rng = np.random.default_rng(args.seed)
    lines = ["n,sled_ns,led_ns,speedup"]
    for n in dims:
        pairs = [(rng.standard_normal(n), rng.standard_normal(n)) for _ in range(args.reps)]
        sled_t, led_t = [], []
        for a, b in pairs:
            t0 = time.perf_counter_ns()
            sled_squared(a, b)
            sled_t.append(time.perf_counter_ns() - t0)
        for a, b in pairs:
            t0 = time.perf_counter_ns()
            led_squared(lift(a), lift(b))
            led_t.append(time.perf_counter_ns() - t0)
        sled_ns = float(np.median(sled_t))
        led_ns = float(np.median(led_t))
        lines.append(f"{n},{sled_ns:.0f},{led_ns:.0f},{led_ns / sled_ns:.2f}")
    out = "\n".join(lines)
    print(out)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(out + "\n")
    return 0


def _cmd_detect(args):
    model = _load_model(args.model)
    metric = MetricKind(args.metric) if args.metric else getattr(model, "metric", MetricKind.SLED)
    recs = synthdata.read_dataset(args.data)
    window_cfg = signal.WindowConfig()
    rows = []  # (trial, window, predicted, distance)
    target_dists = []
    for rec in sorted(recs, key=lambda r: (r.motion_id, r.repetition)):
        maps = signal.recording_feature_maps(rec, window_cfg)
        feats = evaluate.extract_features(model, maps)
        labels, dists = evaluate.nearest_distances(model, metric, feats)
        trial = f"m{rec.motion_id}_r{rec.repetition}"
        for w, (lab, dist) in enumerate(zip(labels, dists)):
            rows.append((trial, w, int(lab), float(dist)))
        if rec.is_target:
            target_dists.extend(dists)
    if args.threshold is not None:
        threshold = args.threshold
    else:
        threshold = calibrate_threshold(target_dists, args.calibrate_tpr)
        print(f"calibrated threshold: {threshold:.6g}")
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        f.write("trial,window,predicted,distance,novel_flag\n")
        for trial, w, lab, dist in rows:
            f.write(f"{trial},{w},{lab},{dist:.12g},{int(dist > threshold)}\n")
    print(f"outcomes written to {args.out}")
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> _Parser:
    p = _Parser(prog="emg-open", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset directory")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--targets", type=int, default=6)
    s.add_argument("--novels", type=int, default=8)
    s.add_argument("--reps", type=int, default=15)
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("train", help="train an extractor on target classes")
    s.add_argument("--data", required=True)
    s.add_argument("--method", required=True, choices=evaluate.METHODS)
    s.add_argument("--out", required=True)
    s.add_argument("--lambda-loss", type=float, default=None, dest="lambda_loss")
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("eval", help="run the k-fold open-set experiment")
    s.add_argument("--data", required=True)
    s.add_argument("--method", required=True, choices=evaluate.METHODS)
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--tpr", type=float, default=0.9)
    s.add_argument("--out-dir", default=None, dest="out_dir")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--lambda-loss", type=float, default=None, dest="lambda_loss")
    s.add_argument("--no-svg", action="store_true")
    s.set_defaults(func=_cmd_eval)

    s = sub.add_parser("roc", help="ROC of a trained model over a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--metric", choices=[m.value for m in MetricKind], default=None)
    s.set_defaults(func=_cmd_roc)

    s = sub.add_parser("sweep-lambda", help="AUC over a grid of loss weights")
    s.add_argument("--data", required=True)
    s.add_argument("--method", required=True, choices=("cpn-sled", "cpn-ed"))
    s.add_argument("--grid", required=True)
    s.add_argument("--out", default="lambda_sweep.csv")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--tpr", type=float, default=0.9)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=None)
    s.set_defaults(func=_cmd_sweep_lambda)

    s = sub.add_parser("bench-metric", help="closed form vs eigendecomposition timing")
    s.add_argument("--dims", default="8,32,128,256")
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(func=_cmd_bench_metric)

    s = sub.add_parser("detect", help="per-window outcomes for a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    group = s.add_mutually_exclusive_group(required=True)
    group.add_argument("--threshold", type=float, default=None)
    group.add_argument("--calibrate-tpr", type=float, default=None, dest="calibrate_tpr")
    s.add_argument("--metric", choices=[m.value for m in MetricKind], default=None)
    s.add_argument("--out", default="detections.csv")
    s.set_defaults(func=_cmd_detect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
