"""Detection (image-level) and localization (pixel-level) evaluation."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import FORGED, ForgeryMask, SizeClass, SoftMask
from .errors import DegenerateLabels, NoDetectedForgeries, NoPositives
from .inference import classify, detection_score, estimate_masks


@dataclass(frozen=True)
class ScoredSample:
    score: float
    label: int  # 1 = forged / positive
    id: str = ""


def as_arrays(samples: Sequence[ScoredSample]) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.array([s.score for s in samples], dtype=np.float64),
        np.array([s.label for s in samples], dtype=np.int64),
    )


def _sweep(scores, labels):
    """Cumulative TP/FP counts at each distinct score, walking from the highest score down."""
    scores = np.asarray(scores)
    labels = np.asarray(labels).astype(np.int64, copy=False)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    order = np.argsort(-scores, kind="stable")
    ranked = scores[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(ranked)), ranked.size - 1]
    tps = np.cumsum(labels[order])[last_of_group]
    fps = last_of_group + 1 - tps
    return ranked[last_of_group], tps, fps


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray  # first entry is +inf (nothing flagged)
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def best_threshold(self) -> float:
        """Threshold of the point maximizing TPR - FPR; ties go to the highest threshold."""
        j = self.tpr[1:] - self.fpr[1:]
        return float(self.thresholds[1:][int(np.argmax(j))])


@dataclass(frozen=True)
class PrCurve:
    thresholds: np.ndarray
    recall: np.ndarray
    precision: np.ndarray
    average_precision: float

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def roc_curve(scores, labels) -> RocCurve:
    """ROC over all distinct thresholds; equal scores form one step, so tied pairs count 1/2 in the AUC."""
    thresholds, tps, fps = _sweep(scores, labels)
    positives, negatives = int(tps[-1]), int(fps[-1])
    if positives == 0 or negatives == 0:
        raise DegenerateLabels(f"ROC needs both classes; got {positives} positives and {negatives} negatives")
    tpr = np.r_[0.0, tps / positives]
    fpr = np.r_[0.0, fps / negatives]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)
    return RocCurve(np.r_[np.inf, thresholds], fpr, tpr, auc)


def pr_curve(scores, labels) -> PrCurve:
    """Precision/recall sweep; AP = sum over steps of (R_n - R_{n-1}) * P_n."""
    thresholds, tps, fps = _sweep(scores, labels)
    positives = int(tps[-1])
    if positives == 0:
        raise NoPositives("precision-recall needs at least one positive sample")
    recall = tps / positives
    precision = tps / (tps + fps)
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return PrCurve(np.r_[np.inf, thresholds], np.r_[0.0, recall], np.r_[1.0, precision], ap)


# ------------------------------------------------------------ protocols


@dataclass(frozen=True)
class Prediction:
    id: str
    size_class: SizeClass
    truth: ForgeryMask
    estimate: SoftMask

    @property
    def label(self) -> int:
        return int(self.size_class is not SizeClass.PRISTINE)


def predict_split(model, manifest, split: str, batch_size: int = 8) -> list[Prediction]:
    records = manifest.split(split)
    out: list[Prediction] = []
    for start in range(0, len(records), batch_size):
        chunk = [manifest.load_pair(r) for r in records[start : start + batch_size]]
        estimates = estimate_masks(model, [p.image for p in chunk], batch_size=batch_size)
        out.extend(Prediction(p.id, p.size_class, p.mask, e) for p, e in zip(chunk, estimates))
    return out


@dataclass(frozen=True)
class DetectionReport:
    ids: list[str]
    scores: np.ndarray
    labels: np.ndarray
    roc: RocCurve
    pr: PrCurve
    threshold: float


def evaluate_detection(predictions: Sequence[Prediction], threshold: float | None = None) -> DetectionReport:
    """Image-level evaluation of the mean-mask score; ``threshold`` defaults to the max TPR-FPR point."""
    if not predictions:
        raise DegenerateLabels("no images to evaluate")
    scores = np.array([detection_score(p.estimate) for p in predictions])
    labels = np.array([p.label for p in predictions])
    roc = roc_curve(scores, labels)
    pr = pr_curve(scores, labels)
    chosen = roc.best_threshold() if threshold is None else float(threshold)
    return DetectionReport([p.id for p in predictions], scores, labels, roc, pr, chosen)


@dataclass(frozen=True)
class LocalizationReport:
    detected_ids: list[str]
    roc: RocCurve
    pr: PrCurve
    pixel_count: int


def pooled_pixels(predictions: Sequence[Prediction]) -> tuple[np.ndarray, np.ndarray]:
    scores = np.concatenate([p.estimate.data.ravel() for p in predictions])
    labels = np.concatenate([(p.truth.data == FORGED).ravel() for p in predictions]).astype(np.int8)
    return scores, labels


def evaluate_localization(predictions: Sequence[Prediction], threshold: float) -> LocalizationReport:
    """Pixel ROC/PR pooled over the images classified forged at ``threshold``."""
    detected = [p for p in predictions if classify(detection_score(p.estimate), threshold).label.value == "forged"]
    if not detected:
        raise NoDetectedForgeries(f"no image scored at or above T={threshold}")
    scores, labels = pooled_pixels(detected)
    return LocalizationReport([p.id for p in detected], roc_curve(scores, labels), pr_curve(scores, labels), scores.size)


def pixel_auc(predictions: Sequence[Prediction]) -> float:
    """Pooled pixel AUC over every prediction, no detection gate (model selection signal)."""
    scores, labels = pooled_pixels(predictions)
    return roc_curve(scores, labels).auc


@dataclass(frozen=True)
class EvaluationReport:
    detection: DetectionReport
    localization: LocalizationReport
    loss_mode: str
    split: str = "test"

    def summary(self) -> dict:
        return {
            "split": self.split,
            "loss_mode": self.loss_mode,
            "auc_detection": self.detection.roc.auc,
            "ap_detection": self.detection.pr.average_precision,
            "auc_localization": self.localization.roc.auc,
            "ap_localization": self.localization.pr.average_precision,
            "threshold": self.detection.threshold,
            "n_images": len(self.detection.ids),
            "n_detected": len(self.localization.detected_ids),
        }


def evaluate_predictions(
    predictions: Sequence[Prediction], loss_mode: str, split: str = "test", threshold: float | None = None
) -> EvaluationReport:
    detection = evaluate_detection(predictions, threshold)
    localization = evaluate_localization(predictions, detection.threshold)
    return EvaluationReport(detection, localization, loss_mode, split)


def evaluate(checkpoint, manifest, split: str = "test", threshold: float | None = None) -> EvaluationReport:
    predictions = predict_split(checkpoint, manifest, split)
    return evaluate_predictions(predictions, checkpoint.recon_mode, split, threshold)


# ---------------------------------------------------------------- output


def thin(thresholds, xs, ys, max_points: int = 2000):
    """Evenly subsample a long curve for output, always keeping both endpoints."""
    n = len(xs)
    if n <= max_points:
        return thresholds, xs, ys
    keep = np.unique(np.linspace(0, n - 1, max_points).round().astype(int))
    return thresholds[keep], xs[keep], ys[keep]


def _fmt(value: float) -> str:
    return repr(float(value))


def write_roc_csv(path, roc: RocCurve, max_points: int | None = None) -> None:
    t, x, y = (roc.thresholds, roc.fpr, roc.tpr)
    if max_points:
        t, x, y = thin(t, x, y, max_points)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        writer.writerows((_fmt(a), _fmt(b), _fmt(c)) for a, b, c in zip(t, x, y))


def write_pr_csv(path, pr: PrCurve, max_points: int | None = None) -> None:
    t, x, y = (pr.thresholds, pr.recall, pr.precision)
    if max_points:
        t, x, y = thin(t, x, y, max_points)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "recall", "precision"])
        writer.writerows((_fmt(a), _fmt(b), _fmt(c)) for a, b, c in zip(t, x, y))


def read_curve_csv(path) -> tuple[str, np.ndarray, np.ndarray]:
    """Returns (kind, x, y) where kind is "roc" or "pr"."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    kind = "roc" if header[1:] == ["fpr", "tpr"] else "pr" if header[1:] == ["recall", "precision"] else None
    if kind is None:
        raise ValueError(f"{path}: not a curve CSV (header {header})")
    data = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    return kind, data[:, 0], data[:, 1]


def write_scores_csv(path, report: DetectionReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "score", "predicted"])
        for id_, label, score in zip(report.ids, report.labels, report.scores):
            writer.writerow([id_, int(label), _fmt(score), classify(score, report.threshold).label.value])


def write_report(out_dir, report: EvaluationReport, prefix: str = "") -> dict:
    """Curves as CSV + SVG, per-image scores, and ``summary.json``; returns the summary."""
    from .plotting import plot_curves

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    p = prefix
    write_roc_csv(out_dir / f"{p}roc_detection.csv", report.detection.roc)
    write_pr_csv(out_dir / f"{p}pr_detection.csv", report.detection.pr)
    write_roc_csv(out_dir / f"{p}roc_localization.csv", report.localization.roc, max_points=2000)
    write_pr_csv(out_dir / f"{p}pr_localization.csv", report.localization.pr, max_points=2000)
    write_scores_csv(out_dir / f"{p}scores.csv", report.detection)
    mode = report.loss_mode.upper()
    plot_curves(out_dir / f"{p}roc_detection.svg", "roc", {mode: (report.detection.roc.fpr, report.detection.roc.tpr)},
                title="Detection ROC")
    plot_curves(out_dir / f"{p}pr_detection.svg", "pr", {mode: (report.detection.pr.recall, report.detection.pr.precision)},
                title="Detection PR")
    _, fx, fy = thin(report.localization.roc.thresholds, report.localization.roc.fpr, report.localization.roc.tpr)
    plot_curves(out_dir / f"{p}roc_localization.svg", "roc", {mode: (fx, fy)}, title="Localization ROC")
    _, rx, ry = thin(report.localization.pr.thresholds, report.localization.pr.recall, report.localization.pr.precision)
    plot_curves(out_dir / f"{p}pr_localization.svg", "pr", {mode: (rx, ry)}, title="Localization PR")
    summary = report.summary()
    (out_dir / f"{p}summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
