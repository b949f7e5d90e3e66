"""ROC/AUC, k-fold protocol and the open-set experiment orchestrator.

An experiment trains an extractor on target-class windows of each
training fold, calibrates the rejection threshold on a held-out slice
of training repetitions at the requested TPR, then scores test-fold
target windows and all novel-class windows. Results are averaged over
folds; novel data never reaches training or calibration.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import signal
from .cpn import CpnModel, TrainConfig, cpn_distances, cpn_forward, cpn_train
from .lda import LdaModel, lda_fit
from .openset import calibrate_threshold, nearest_prototype
from .spdmetric import MetricKind

METHODS = ("cpn-sled", "cpn-ed", "lda-sled", "lda-ed", "lda-md")

_METHOD_METRIC = {
    "cpn-sled": MetricKind.SLED,
    "cpn-ed": MetricKind.ED,
    "lda-sled": MetricKind.SLED,
    "lda-ed": MetricKind.ED,
    "lda-md": MetricKind.MD,
}


@dataclass(frozen=True)
class RocCurve:
    points: list  # (threshold, fpr, tpr), threshold ascending


@dataclass(frozen=True)
class FoldSplit:
    folds: list  # per fold: {motion_id: [test repetition indices]}


@dataclass
class EvalReport:
    method: str
    fold_aucs: list
    fold_thresholds: list
    fold_tpr_accept: list  # fraction of test target windows accepted
    fold_target_accuracy: list  # accepted AND correctly labeled
    fold_novel_detection: list  # fraction of novel windows rejected
    per_novel_detection: dict  # novel motion id -> mean detection accuracy
    confusion_matrix: np.ndarray  # rows: targets then novels; cols: targets + Novel
    confusion_row_ids: list
    target_ids: list
    roc_curves: list = field(default_factory=list)
    pooled_roc: RocCurve | None = None  # all folds' distances pooled

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.fold_aucs))

    @property
    def mean_target_accuracy(self) -> float:
        return float(np.mean(self.fold_target_accuracy))

    @property
    def mean_novel_detection(self) -> float:
        return float(np.mean(self.fold_novel_detection))


# ----------------------------------------------------------------- ROC / AUC

def roc_curve(target_distances, novel_distances) -> RocCurve:
    """Acceptance ROC: TPR/FPR = fraction of target/novel distances <= t."""
    td = np.asarray(target_distances, dtype=np.float64)
    nd = np.asarray(novel_distances, dtype=np.float64)
    if td.size == 0 or nd.size == 0:
        raise ValueError("need non-empty target and novel distance lists")
    td = np.sort(td)
    nd = np.sort(nd)
    thresholds = np.concatenate(([-np.inf], np.unique(np.concatenate((td, nd)))))
    points = []
    for t in thresholds:
        tpr = np.searchsorted(td, t, side="right") / td.size
        fpr = np.searchsorted(nd, t, side="right") / nd.size
        points.append((float(t), float(fpr), float(tpr)))
    return RocCurve(points)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area of the ROC over FPR in [0, 1]."""
    fpr = np.array([p[1] for p in curve.points])
    tpr = np.array([p[2] for p in curve.points])
    return float(np.trapezoid(tpr, fpr))


# -------------------------------------------------------------------- k-fold

def kfold_by_repetition(recs, k: int = 5, seed: int = 0) -> FoldSplit:
    """Deal each target motion's repetitions round-robin into k test folds."""
    reps = {}
    for rec in recs:
        if rec.is_target:
            reps.setdefault(rec.motion_id, set()).add(rec.repetition)
    if not reps:
        raise ValueError("dataset has no target motions")
    for mid, rset in reps.items():
        if len(rset) < k:
            raise ValueError(f"motion {mid} has {len(rset)} repetitions < {k} folds")
    rng = np.random.default_rng(seed)
    folds = [{} for _ in range(k)]
    for mid in sorted(reps):
        perm = rng.permutation(sorted(reps[mid]))
        for j in range(k):
            folds[j][mid] = sorted(int(r) for r in perm[j::k])
    return FoldSplit(folds)


def confusion(predicted, truths, target_ids, novel_ids) -> np.ndarray:
    """Row-normalized confusion over true classes x (targets + Novel).

    predicted holds the target-class index per sample, or -1 for a
    rejected (Novel) outcome.
    """
    predicted = list(predicted)
    truths = list(truths)
    if len(predicted) != len(truths):
        raise ValueError("predicted and truths length mismatch")
    row_ids = list(target_ids) + list(novel_ids)
    row_index = {mid: i for i, mid in enumerate(row_ids)}
    mat = np.zeros((len(row_ids), len(target_ids) + 1))
    for pred, true in zip(predicted, truths):
        col = len(target_ids) if pred < 0 else pred
        mat[row_index[true], col] += 1
    sums = mat.sum(axis=1, keepdims=True)
    sums[sums == 0] = 1.0
    return mat / sums


# ------------------------------------------------------------ feature plumbing

def _collect_maps(recs, cfg: signal.WindowConfig):
    """(motion_id, repetition) -> list of FeatureMap for every recording."""
    return {(rec.motion_id, rec.repetition): signal.recording_feature_maps(rec, cfg) for rec in recs}


def extract_features(extractor, maps, batch: int = 128) -> np.ndarray:
    """Feature vectors for a list of FeatureMap, chunked for the CPN path."""
    if isinstance(extractor, CpnModel):
        out = []
        ups = np.stack([signal.upsample_nearest(m) for m in maps])
        for start in range(0, len(maps), batch):
            out.append(cpn_forward(extractor, ups[start : start + batch]))
        return np.concatenate(out)
    flats = np.stack([signal.flatten_map(m) for m in maps])
    return extractor.project(flats)


def nearest_distances(extractor, metric: MetricKind, feats: np.ndarray):
    """Per-sample (nearest target label, distance) arrays."""
    if isinstance(extractor, CpnModel):
        dmat = cpn_distances(extractor, feats)
        labels = np.argmin(dmat, axis=1)
        return labels, dmat[np.arange(len(feats)), labels]
    lda = extractor if isinstance(extractor, LdaModel) else None
    protos = extractor.class_means
    labels = np.empty(len(feats), dtype=np.int64)
    dists = np.empty(len(feats))
    for i, f in enumerate(feats):
        labels[i], dists[i] = nearest_prototype(f, protos, metric, lda)
    return labels, dists


@dataclass(frozen=True)
class ExperimentConfig:
    folds: int = 5
    tpr_goal: float = 0.9
    seed: int = 0
    calibration_fraction: float = 0.2
    window: signal.WindowConfig = signal.WindowConfig()
    train: TrainConfig = TrainConfig()


def train_extractor(method: str, maps, labels, cfg: ExperimentConfig):
    """Fit the method's extractor on target-class feature maps."""
    metric = _METHOD_METRIC[method]
    if method.startswith("cpn"):
        ups = np.stack([signal.upsample_nearest(m) for m in maps])
        return cpn_train(ups, labels, cfg.train, metric=metric)
    flats = np.stack([signal.flatten_map(m) for m in maps])
    return lda_fit(flats, np.asarray(labels))


def run_experiment(recs, method: str, cfg: ExperimentConfig = ExperimentConfig()) -> EvalReport:
    """The full k-fold open-set protocol for one method."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    metric = _METHOD_METRIC[method]
    target_ids = sorted({r.motion_id for r in recs if r.is_target})
    novel_ids = sorted({r.motion_id for r in recs if not r.is_target})
    if len(target_ids) < 2 or not novel_ids:
        raise ValueError("need at least 2 target classes and 1 novel class")
    label_of = {mid: i for i, mid in enumerate(target_ids)}

    maps_by_trial = _collect_maps(recs, cfg.window)
    split = kfold_by_repetition(recs, cfg.folds, cfg.seed)
    novel_maps = [
        (mid, m)
        for (mid, _rep), ms in sorted(maps_by_trial.items())
        if mid in novel_ids
        for m in ms
    ]

    fold_aucs, fold_thresholds = [], []
    fold_tpr_accept, fold_target_acc, fold_novel_det = [], [], []
    per_novel = {mid: [] for mid in novel_ids}
    confusions = []
    roc_curves = []
    pooled_target, pooled_novel = [], []
    for fold_idx, fold in enumerate(split.folds):
        rng = np.random.default_rng((cfg.seed, fold_idx))
        train_maps, train_labels = [], []
        calib_maps = []
        test_maps, test_labels = [], []
        for mid in target_ids:
            test_reps = set(fold[mid])
            all_reps = sorted({rep for (m, rep) in maps_by_trial if m == mid})
            train_reps = [r for r in all_reps if r not in test_reps]
            n_cal = max(1, int(round(cfg.calibration_fraction * len(train_reps))))
            perm = rng.permutation(train_reps)
            cal_reps = set(int(r) for r in perm[:n_cal])
            for rep in all_reps:
                ms = maps_by_trial[(mid, rep)]
                if rep in test_reps:
                    test_maps.extend(ms)
                    test_labels.extend([label_of[mid]] * len(ms))
                elif rep in cal_reps:
                    calib_maps.extend(ms)
                else:
                    train_maps.extend(ms)
                    train_labels.extend([label_of[mid]] * len(ms))

        extractor = train_extractor(method, train_maps, np.array(train_labels), cfg)

        cal_feats = extract_features(extractor, calib_maps)
        _, cal_dists = nearest_distances(extractor, metric, cal_feats)
        threshold = calibrate_threshold(cal_dists, cfg.tpr_goal)

        test_feats = extract_features(extractor, test_maps)
        pred_labels, target_dists = nearest_distances(extractor, metric, test_feats)
        nov_feats = extract_features(extractor, [m for _, m in novel_maps])
        nov_pred, novel_dists = nearest_distances(extractor, metric, nov_feats)

        curve = roc_curve(target_dists, novel_dists)
        roc_curves.append(curve)
        fold_aucs.append(auc(curve))
        fold_thresholds.append(threshold)
        pooled_target.extend(target_dists)
        pooled_novel.extend(novel_dists)

        accepted = target_dists <= threshold
        correct = accepted & (pred_labels == np.asarray(test_labels))
        rejected = novel_dists > threshold
        fold_tpr_accept.append(float(np.mean(accepted)))
        fold_target_acc.append(float(np.mean(correct)))
        fold_novel_det.append(float(np.mean(rejected)))
        nov_ids_arr = np.array([mid for mid, _ in novel_maps])
        for mid in novel_ids:
            per_novel[mid].append(float(np.mean(rejected[nov_ids_arr == mid])))

        predicted = [(-1 if not acc else int(p)) for acc, p in zip(accepted, pred_labels)]
        truths = [target_ids[t] for t in test_labels]
        predicted += [(-1 if rej else int(p)) for rej, p in zip(rejected, nov_pred)]
        truths += [int(mid) for mid in nov_ids_arr]
        confusions.append(confusion(predicted, truths, target_ids, novel_ids))

    return EvalReport(
        method=method,
        fold_aucs=fold_aucs,
        fold_thresholds=fold_thresholds,
        fold_tpr_accept=fold_tpr_accept,
        fold_target_accuracy=fold_target_acc,
        fold_novel_detection=fold_novel_det,
        per_novel_detection={mid: float(np.mean(v)) for mid, v in per_novel.items()},
        confusion_matrix=np.mean(confusions, axis=0),
        confusion_row_ids=target_ids + novel_ids,
        target_ids=target_ids,
        roc_curves=roc_curves,
        pooled_roc=roc_curve(pooled_target, pooled_novel),
    )


# ----------------------------------------------------------------- artifacts

def _fmt(v: float) -> str:
    return f"{v:.12g}"


def write_roc_csv(report: EvalReport, path: str) -> None:
    curve = report.pooled_roc if report.pooled_roc is not None else report.roc_curves[0]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("threshold,fpr,tpr\n")
        for t, fpr, tpr in curve.points:
            f.write(f"{_fmt(t)},{_fmt(fpr)},{_fmt(tpr)}\n")


def write_report_csv(report: EvalReport, path: str) -> None:
    rows = [("method", report.method), ("mean_auc", _fmt(report.mean_auc))]
    rows += [(f"fold{i}_auc", _fmt(v)) for i, v in enumerate(report.fold_aucs)]
    rows.append(("mean_tpr_accept", _fmt(float(np.mean(report.fold_tpr_accept)))))
    rows.append(("mean_target_accuracy", _fmt(report.mean_target_accuracy)))
    rows.append(("mean_novel_detection", _fmt(report.mean_novel_detection)))
    rows += [(f"fold{i}_threshold", _fmt(v)) for i, v in enumerate(report.fold_thresholds)]
    rows += [
        (f"novel_motion_{mid}_detection", _fmt(v))
        for mid, v in sorted(report.per_novel_detection.items())
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("metric,value\n")
        for name, value in rows:
            f.write(f"{name},{value}\n")


def write_confusion_csv(report: EvalReport, path: str) -> None:
    cols = [f"T{i + 1}" for i in range(len(report.target_ids))] + ["Novel"]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("true_motion," + ",".join(cols) + "\n")
        for mid, row in zip(report.confusion_row_ids, report.confusion_matrix):
            f.write(str(mid) + "," + ",".join(_fmt(v) for v in row) + "\n")


def write_roc_svg(report: EvalReport, path: str, size: int = 400) -> None:
    """Dependency-free SVG of the per-fold ROC curves."""
    pad = 40
    span = size - 2 * pad

    def xy(fpr, tpr):
        return pad + fpr * span, pad + (1.0 - tpr) * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{pad}" y1="{size - pad}" x2="{size - pad}" y2="{pad}" '
        'stroke="#bbb" stroke-dasharray="4"/>',
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" '
        'fill="none" stroke="black"/>',
    ]
    for i, curve in enumerate(report.roc_curves):
        pts = " ".join(
            f"{xy(fpr, tpr)[0]:.2f},{xy(fpr, tpr)[1]:.2f}" for _, fpr, tpr in curve.points
        )
        hue = int(360 * i / max(len(report.roc_curves), 1))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="hsl({hue},60%,45%)"/>')
    parts.append(
        f'<text x="{size // 2}" y="{size - 8}" text-anchor="middle" font-size="12">FPR</text>'
    )
    parts.append(
        f'<text x="12" y="{size // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 12 {size // 2})">TPR</text>'
    )
    parts.append(
        f'<text x="{size // 2}" y="20" text-anchor="middle" font-size="12">'
        f"{report.method} mean AUC {report.mean_auc:.3f}</text>"
    )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(parts) + "\n")


def write_all_artifacts(report: EvalReport, out_dir: str, svg: bool = True) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_report_csv(report, os.path.join(out_dir, "report.csv"))
    write_roc_csv(report, os.path.join(out_dir, "roc.csv"))
    write_confusion_csv(report, os.path.join(out_dir, "confusion.csv"))
    if svg:
        write_roc_svg(report, os.path.join(out_dir, "roc.svg"))
