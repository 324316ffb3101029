"""Salient object detection metrics: P-R curve, F-measure, MAE, S-measure.

Saliency maps are float arrays in [0, 1]; ground truths are binary arrays.
Fixed-threshold statistics quantize the map to integers 0..255 first and
binarize with ``S_q >= t``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

BETA2 = 0.3
ALPHA = 0.5
THRESHOLDS = np.arange(256)
_EPS = np.finfo(np.float64).eps


@dataclass
class PRCurve:
    precision: np.ndarray
    recall: np.ndarray
    empty_gt: bool = False

    @property
    def thresholds(self) -> np.ndarray:
        return THRESHOLDS


def quantize(pred: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(pred, dtype=np.float64), 0.0, 1.0) * 255).astype(np.int64)


def pr_curve(pred: np.ndarray, gt: np.ndarray) -> PRCurve:
    """Precision and recall at every threshold 0..255 (0/0 counts as 1)."""
    q = quantize(pred).ravel()
    g = np.asarray(gt).astype(bool).ravel()
    fg = np.bincount(q[g], minlength=256)
    bg = np.bincount(q[~g], minlength=256)
    # counts of pixels with quantized value >= t
    tp = np.cumsum(fg[::-1])[::-1].astype(np.float64)
    fp = np.cumsum(bg[::-1])[::-1].astype(np.float64)
    npos = float(g.sum())
    predicted = tp + fp
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 1.0)
    recall = tp / npos if npos > 0 else np.ones(256)
    return PRCurve(precision, recall, empty_gt=npos == 0)


def f_beta(precision, recall, beta2: float = BETA2):
    """Weighted harmonic mean; a zero denominator gives 0."""
    p = np.asarray(precision, dtype=np.float64)
    r = np.asarray(recall, dtype=np.float64)
    den = beta2 * p + r
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(den > 0, (1 + beta2) * p * r / den, 0.0)
    return f if f.ndim else float(f)


def f_measure(pred: np.ndarray, gt: np.ndarray) -> float:
    """Max F over the 256 fixed thresholds of one image."""
    c = pr_curve(pred, gt)
    return float(np.max(f_beta(c.precision, c.recall)))


def adaptive_f_measure(pred: np.ndarray, gt: np.ndarray) -> float:
    """F at the adaptive threshold min(2 * mean(S), 1)."""
    s = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt).astype(bool)
    thr = min(2.0 * s.mean(), 1.0)
    b = s >= thr
    tp = float((b & g).sum())
    precision = tp / b.sum() if b.sum() else 1.0
    recall = tp / g.sum() if g.sum() else 1.0
    return float(f_beta(precision, recall))


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    s = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt).astype(np.float64)
    return float(np.abs(s - g).mean())


# --- S-measure ---------------------------------------------------------------
# Object/region structural similarity with the usual special cases:
# all-background GT scores 1 - mean(S), all-foreground GT scores mean(S).


def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return float(2.0 * x / (x * x + 1.0 + sigma + _EPS))


def s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    g = gt.astype(bool)
    u = g.mean()
    o_fg = _object_score(pred[g])
    o_bg = _object_score(1.0 - pred[~g])
    return float(u * o_fg + (1 - u) * o_bg)


def _centroid(gt: np.ndarray) -> tuple[int, int]:
    """Foreground centroid as 1-based (column, row) split points, rounded half up."""
    rows, cols = gt.shape
    total = gt.sum()
    if total == 0:
        return int(np.floor(cols / 2 + 0.5)), int(np.floor(rows / 2 + 0.5))
    x = (gt.sum(axis=0) * np.arange(1, cols + 1)).sum() / total
    y = (gt.sum(axis=1) * np.arange(1, rows + 1)).sum() / total
    return int(np.floor(x + 0.5)), int(np.floor(y + 0.5))


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    x, y = pred.mean(), gt.mean()
    sx = ((pred - x) ** 2).sum() / (n - 1 + _EPS)
    sy = ((gt - y) ** 2).sum() / (n - 1 + _EPS)
    sxy = ((pred - x) * (gt - y)).sum() / (n - 1 + _EPS)
    a = 4 * x * y * sxy
    b = (x * x + y * y) * (sx + sy)
    if a != 0:
        return float(a / (b + _EPS))
    return 1.0 if b == 0 else 0.0


def s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    x, y = _centroid(gt)
    area = h * w
    weights = [x * y / area, (w - x) * y / area, x * (h - y) / area]
    weights.append(1.0 - sum(weights))
    quads = [(slice(0, y), slice(0, x)), (slice(0, y), slice(x, w)),
             (slice(y, h), slice(0, x)), (slice(y, h), slice(x, w))]
    score = 0.0
    for wt, (rs, cs) in zip(weights, quads):
        # zero-area quadrants carry zero weight
        if pred[rs, cs].size:
            score += wt * _ssim(pred[rs, cs], gt[rs, cs])
    return float(score)


def s_measure(pred: np.ndarray, gt: np.ndarray, alpha: float = ALPHA) -> float:
    s = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt).astype(np.float64)
    y = g.mean()
    if y == 0:
        q = 1.0 - s.mean()
    elif y == 1:
        q = s.mean()
    else:
        q = alpha * s_object(s, g) + (1 - alpha) * s_region(s, g)
    return float(min(max(q, 0.0), 1.0))


# --- dataset evaluation ------------------------------------------------------


@dataclass
class ImageMetrics:
    name: str
    f_beta: float
    adaptive_f: float
    mae: float
    s_measure: float
    empty_gt: bool


@dataclass
class MetricsReport:
    f_beta: float  # max-F on the dataset-mean P-R curve
    mean_f: float
    adaptive_f: float
    mae: float
    s_measure: float
    pr: PRCurve
    per_image: list[ImageMetrics] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"images = {len(self.per_image)}",
            f"f_beta_max = {self.f_beta:.6f}",
            f"f_beta_mean = {self.mean_f:.6f}",
            f"f_beta_adaptive = {self.adaptive_f:.6f}",
            f"mae = {self.mae:.6f}",
            f"s_measure = {self.s_measure:.6f}",
            f"empty_gt = {sum(m.empty_gt for m in self.per_image)}",
        ]
        return "\n".join(lines) + "\n"

    def pr_table(self) -> str:
        rows = ["threshold,precision,recall"]
        rows += [f"{t},{p:.6f},{r:.6f}" for t, p, r in zip(THRESHOLDS, self.pr.precision, self.pr.recall)]
        return "\n".join(rows) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.to_text())
        (out / "pr_curve.csv").write_text(self.pr_table())


def evaluate_pairs(pairs) -> MetricsReport:
    """Aggregate metrics over ``(name, pred, gt)`` triples in the given order."""
    per_image, precisions, recalls = [], [], []
    for name, pred, gt in pairs:
        c = pr_curve(pred, gt)
        precisions.append(c.precision)
        recalls.append(c.recall)
        per_image.append(ImageMetrics(name, float(np.max(f_beta(c.precision, c.recall))),
                                      adaptive_f_measure(pred, gt), mae(pred, gt), s_measure(pred, gt),
                                      c.empty_gt))
    if not per_image:
        raise ValueError("no images to evaluate")
    p = np.mean(precisions, axis=0)
    r = np.mean(recalls, axis=0)
    f = f_beta(p, r)
    return MetricsReport(
        f_beta=float(f.max()),
        mean_f=float(f.mean()),
        adaptive_f=float(np.mean([m.adaptive_f for m in per_image])),
        mae=float(np.mean([m.mae for m in per_image])),
        s_measure=float(np.mean([m.s_measure for m in per_image])),
        pr=PRCurve(p, r, empty_gt=any(m.empty_gt for m in per_image)),
        per_image=per_image,
    )


def load_prediction(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0


def load_ground_truth(path) -> np.ndarray:
    return (np.asarray(Image.open(path).convert("L")) >= 128).astype(np.uint8)


def _png_stems(directory: Path) -> dict[str, Path]:
    return {p.stem: p for p in sorted(directory.glob("*.png"))}


def evaluate_dataset(pred_dir, gt_dir) -> MetricsReport:
    preds, gts = _png_stems(Path(pred_dir)), _png_stems(Path(gt_dir))
    missing = sorted(set(preds) ^ set(gts))
    if missing:
        raise ValueError(f"unmatched prediction/ground-truth files: {missing}")

    def pairs():
        for stem in sorted(gts):
            pred, gt = load_prediction(preds[stem]), load_ground_truth(gts[stem])
            if pred.shape != gt.shape:
                log.warning("resizing prediction %s from %s to %s", stem, pred.shape, gt.shape)
                img = Image.fromarray(np.round(pred * 255).astype(np.uint8))
                pred = np.asarray(img.resize(gt.shape[::-1], Image.BILINEAR), dtype=np.float64) / 255.0
            yield stem, pred, gt

    return evaluate_pairs(pairs())
