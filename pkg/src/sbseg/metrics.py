"""Binary panoptic quality and centroid-radius detection scores."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

__all__ = [
    "MatchResult",
    "PQResult",
    "CentroidResult",
    "iou_matching",
    "panoptic_quality",
    "centroid_metrics",
    "centroids",
    "evaluate_pairs",
]


@dataclass
class MatchResult:
    matches: list[tuple[int, int, float]]  # (pred id, gt id, IoU)
    false_positives: list[int]
    false_negatives: list[int]


@dataclass
class PQResult:
    bpq: float
    sq: float
    dq: float
    tp: int
    fp: int
    fn: int
    iou_sum: float = field(default=0.0, repr=False)


@dataclass
class CentroidResult:
    precision: float
    recall: float
    f1: float
    tp: int
    n_pred: int
    n_gt: int


def _ids(labels):
    ids = np.unique(labels)
    return ids[ids > 0]


def iou_matching(pred: np.ndarray, gt: np.ndarray, threshold: float = 0.5) -> MatchResult:
    """Pair instances whose pixel-set IoU exceeds ``threshold``.

    Above 0.5 the pairing is necessarily one-to-one; for lower thresholds pairs
    are accepted greedily in descending IoU so each instance is used once.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"pred {pred.shape} and gt {gt.shape} differ")
    p_ids = _ids(pred)
    g_ids = _ids(gt)
    p_area = np.bincount(pred.ravel(), minlength=1)
    g_area = np.bincount(gt.ravel(), minlength=1)

    both = (pred > 0) & (gt > 0)
    pairs = np.stack([pred[both], gt[both]], axis=1)
    cand = []
    if pairs.size:
        uniq, inter = np.unique(pairs, axis=0, return_counts=True)
        for (p, g), i in zip(uniq.tolist(), inter.tolist()):
            iou = i / (p_area[p] + g_area[g] - i)
            if iou > threshold:
                cand.append((p, g, float(iou)))
    cand.sort(key=lambda m: (-m[2], m[0], m[1]))

    used_p, used_g, matches = set(), set(), []
    for p, g, iou in cand:
        if p in used_p or g in used_g:
            continue
        used_p.add(p)
        used_g.add(g)
        matches.append((p, g, iou))
    matches.sort(key=lambda m: m[1])
    assert len({m[0] for m in matches}) == len(matches) and len({m[1] for m in matches}) == len(matches)
    fp = [int(p) for p in p_ids if p not in used_p]
    fn = [int(g) for g in g_ids if g not in used_g]
    return MatchResult(matches, fp, fn)


def panoptic_quality(pred: np.ndarray, gt: np.ndarray, threshold: float = 0.5) -> PQResult:
    """bPQ = SQ * DQ; both empty counts as perfect agreement."""
    m = iou_matching(pred, gt, threshold)
    tp, fp, fn = len(m.matches), len(m.false_positives), len(m.false_negatives)
    iou_sum = math.fsum(x[2] for x in m.matches)
    if tp == fp == fn == 0:
        return PQResult(1.0, 1.0, 1.0, 0, 0, 0, 0.0)
    sq = iou_sum / tp if tp else 0.0
    denom = tp + 0.5 * fp + 0.5 * fn
    dq = tp / denom if denom else 0.0
    return PQResult(sq * dq, sq, dq, tp, fp, fn, iou_sum)


def centroids(labels: np.ndarray) -> dict[int, np.ndarray]:
    """Mean (row, col) pixel coordinate per instance id."""
    labels = np.asarray(labels)
    n = int(labels.max(initial=0))
    if n <= 0:
        return {}
    rows, cols = np.indices(labels.shape)
    flat = labels.ravel()
    count = np.bincount(flat, minlength=n + 1)
    sr = np.bincount(flat, weights=rows.ravel(), minlength=n + 1)
    sc = np.bincount(flat, weights=cols.ravel(), minlength=n + 1)
    return {k: np.array([sr[k] / count[k], sc[k] / count[k]]) for k in range(1, n + 1) if count[k]}


def centroid_metrics(pred: np.ndarray, gt: np.ndarray, radius: float = 12.0) -> CentroidResult:
    """Greedy one-to-one centroid matching by ascending distance within ``radius``."""
    pc = centroids(pred)
    gc = centroids(gt)
    n_pred, n_gt = len(pc), len(gc)
    if n_pred == 0 and n_gt == 0:
        return CentroidResult(1.0, 1.0, 1.0, 0, 0, 0)
    cand = []
    for p, cp in pc.items():
        for g, cg in gc.items():
            d = float(np.hypot(*(cp - cg)))
            if d <= radius:
                cand.append((d, p, g))
    cand.sort()
    used_p, used_g = set(), set()
    for _, p, g in cand:
        if p in used_p or g in used_g:
            continue
        used_p.add(p)
        used_g.add(g)
    tp = len(used_p)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gt if n_gt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return CentroidResult(precision, recall, f1, tp, n_pred, n_gt)


def evaluate_pairs(pairs, radius: float = 12.0, iou_threshold: float = 0.5):
    """Score (name, pred, gt) triples in order.

    Returns per-image rows and a summary holding both the per-image means and
    the pooled values (counts summed over the whole set before the ratios).
    """
    rows = []
    tp = fp = fn = 0
    iou_sum = 0.0
    c_tp = c_pred = c_gt = 0
    for name, pred, gt in pairs:
        pq = panoptic_quality(pred, gt, iou_threshold)
        cm = centroid_metrics(pred, gt, radius)
        rows.append({
            "image": name, "bpq": pq.bpq, "sq": pq.sq, "dq": pq.dq,
            "tp": pq.tp, "fp": pq.fp, "fn": pq.fn,
            "precision": cm.precision, "recall": cm.recall, "f1": cm.f1,
        })
        tp, fp, fn, iou_sum = tp + pq.tp, fp + pq.fp, fn + pq.fn, iou_sum + pq.iou_sum
        c_tp, c_pred, c_gt = c_tp + cm.tp, c_pred + cm.n_pred, c_gt + cm.n_gt

    summary = {"n_images": len(rows)}
    for key in ("bpq", "sq", "dq", "precision", "recall", "f1"):
        summary[key] = float(np.mean([r[key] for r in rows])) if rows else 0.0
    sq = iou_sum / tp if tp else 0.0
    denom = tp + 0.5 * (fp + fn)
    dq = tp / denom if denom else 1.0
    if not denom:
        sq = 1.0
    p = c_tp / c_pred if c_pred else (1.0 if not c_gt else 0.0)
    r = c_tp / c_gt if c_gt else (1.0 if not c_pred else 0.0)
    summary["pooled"] = {
        "bpq": sq * dq, "sq": sq, "dq": dq, "tp": tp, "fp": fp, "fn": fn,
        "precision": p, "recall": r, "f1": 2 * p * r / (p + r) if p + r > 0 else 0.0,
    }
    return rows, summary
