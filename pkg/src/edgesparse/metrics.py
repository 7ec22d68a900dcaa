"""Superpixel quality metrics and binary segmentation scores."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .clustering import label_components
from .errors import InvalidParameterError, InvalidShapeError


def _check_same(*arrays: np.ndarray) -> None:
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise InvalidShapeError(f"dimension mismatch: {sorted(shapes)}")


def _contingency(sp: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Overlap counts, rows = superpixels, columns = ground-truth segments."""
    _, s = np.unique(sp, return_inverse=True)
    _, g = np.unique(gt, return_inverse=True)
    s, g = s.ravel(), g.ravel()
    ng = g.max() + 1
    return np.bincount(s * ng + g, minlength=(s.max() + 1) * ng).reshape(-1, ng)


def count_regions(labels: np.ndarray) -> int:
    """Number of 4-connected components; split labels count once per island."""
    return label_components(np.asarray(labels))[1]


def undersegmentation_error(sp: np.ndarray, gt: np.ndarray, variant: str = "total",
                            min_overlap: float = 0.0) -> float:
    """Leakage of superpixels across ground-truth segments.

    ``variant="total"`` charges the full area of every superpixel touching a segment;
    superpixels whose overlap is at most ``min_overlap`` of their area are ignored.
    ``variant="min"`` charges ``min(inside, outside)`` per overlapping pair instead.
    """
    sp, gt = np.asarray(sp), np.asarray(gt)
    _check_same(sp, gt)
    n = sp.size
    table = _contingency(sp, gt)
    sizes = table.sum(axis=1)
    if variant == "total":
        touching = table > min_overlap * sizes[:, None]
        return float(((touching * sizes[:, None]).sum() - n) / n)
    if variant == "min":
        inside = table
        outside = sizes[:, None] - table
        return float(np.where(table > 0, np.minimum(inside, outside), 0).sum() / n)
    raise InvalidParameterError(f"unknown USE variant {variant!r}")


def boundary_map(labels: np.ndarray, thin: bool = False) -> np.ndarray:
    """Pixels with at least one 4-neighbour carrying a different label.

    With ``thin`` only the pixel below or right of each label change is marked,
    which draws every boundary exactly one pixel wide.
    """
    lab = np.asarray(labels)
    b = np.zeros(lab.shape, dtype=bool)
    dx = lab[:, 1:] != lab[:, :-1]
    dy = lab[1:, :] != lab[:-1, :]
    b[:, 1:] |= dx
    b[1:, :] |= dy
    if not thin:
        b[:, :-1] |= dx
        b[:-1, :] |= dy
    return b


def boundary_recall(sp: np.ndarray, gt: np.ndarray, tolerance: int = 2) -> float:
    sp, gt = np.asarray(sp), np.asarray(gt)
    _check_same(sp, gt)
    gt_b = boundary_map(gt)
    if not gt_b.any():
        return 1.0
    near = ndimage.binary_dilation(boundary_map(sp), structure=np.ones((2 * tolerance + 1,) * 2, bool))
    return float((gt_b & near).sum() / gt_b.sum())


def achievable_segmentation_accuracy(sp: np.ndarray, gt: np.ndarray) -> float:
    sp, gt = np.asarray(sp), np.asarray(gt)
    _check_same(sp, gt)
    return float(_contingency(sp, gt).max(axis=1).sum() / sp.size)


def perimeters(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Area and perimeter (unit edges to other labels or the image border) per dense label."""
    _, lab = np.unique(labels, return_inverse=True)
    lab = lab.reshape(np.shape(labels))
    k = lab.max() + 1
    area = np.bincount(lab.ravel(), minlength=k)
    padded = np.pad(lab, 1, constant_values=-1)
    core = padded[1:-1, 1:-1]
    per = np.zeros(k, dtype=np.int64)
    for shifted in (padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:]):
        diff = core != shifted
        per += np.bincount(core[diff], minlength=k)
    return area, per


def compactness(sp: np.ndarray) -> float:
    area, per = perimeters(np.asarray(sp))
    q = np.minimum(1.0, 4 * math.pi * area / per.astype(np.float64) ** 2)
    return float((area * q).sum() / area.sum())


@dataclass
class MetricReport:
    use: float
    br: float
    asa: float
    co: float
    num_regions: int
    per_gt: list[dict] = field(default_factory=list)

    def rows(self, image: str = "") -> list[dict]:
        out = []
        for i, entry in enumerate(self.per_gt):
            for name in ("use", "br", "asa"):
                out.append({"image": image, "gt": str(i), "metric": name, "value": entry[name]})
        for name in ("use", "br", "asa", "co", "num_regions"):
            out.append({"image": image, "gt": "mean", "metric": name, "value": getattr(self, name)})
        return out


def evaluate(sp: np.ndarray, gts: list[np.ndarray], **use_kwargs) -> MetricReport:
    """USE/BR/ASA averaged over the ground truths; CO and region count computed once."""
    if len(gts) == 0:
        raise InvalidParameterError("need at least one ground truth")
    sp = np.asarray(sp)
    _check_same(sp, *gts)
    per_gt = [
        {
            "use": undersegmentation_error(sp, g, **use_kwargs),
            "br": boundary_recall(sp, g),
            "asa": achievable_segmentation_accuracy(sp, g),
        }
        for g in gts
    ]
    mean = {k: float(np.mean([e[k] for e in per_gt])) for k in ("use", "br", "asa")}
    return MetricReport(mean["use"], mean["br"], mean["asa"], compactness(sp), count_regions(sp), per_gt)


def write_report_csv(reports: dict[str, MetricReport], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=["image", "gt", "metric", "value"])
        wr.writeheader()
        for image, rep in reports.items():
            wr.writerows(rep.rows(image))
        if len(reports) > 1:
            for name in ("use", "br", "asa", "co", "num_regions"):
                vals = [getattr(r, name) for r in reports.values()]
                wr.writerow({"image": "ALL", "gt": "mean", "metric": name, "value": float(np.mean(vals))})


# -- binary masks ----------------------------------------------------------


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int


def confusion(pred: np.ndarray, gold: np.ndarray) -> ConfusionCounts:
    pred, gold = np.asarray(pred, bool), np.asarray(gold, bool)
    _check_same(pred, gold)
    return ConfusionCounts(
        int(np.sum(pred & gold)), int(np.sum(~pred & ~gold)),
        int(np.sum(pred & ~gold)), int(np.sum(~pred & gold)),
    )


def binary_metrics(pred: np.ndarray, gold: np.ndarray) -> tuple[float, float, float, float]:
    """Sensitivity, specificity, Dice coefficient and Jaccard index.

    A zero denominator scores 1 if the prediction is empty for that quantity too
    (e.g. no gold positives and no predicted positives), else 0.
    """
    c = confusion(pred, gold)
    se = c.tp / (c.tp + c.fn) if c.tp + c.fn else float(c.fp == 0)
    sp = c.tn / (c.tn + c.fp) if c.tn + c.fp else float(c.fn == 0)
    union = c.tp + c.fp + c.fn
    dc = 2 * c.tp / (2 * c.tp + c.fp + c.fn) if union else 1.0
    ji = c.tp / union if union else 1.0
    return se, sp, dc, ji
