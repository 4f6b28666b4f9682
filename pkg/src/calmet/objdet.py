"""Calibration metrics for object detectors: IOU matching and the detection family."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from .binning import equal_width_index
from .core import NONNEG, UNIT, MetricResult, result
from .errors import NegativeExtent, NoDetections, TooFewDetections

DIMS = ("score", "x", "y", "w", "h")


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float
    cls: int = 0
    score: Optional[float] = None
    image: str = "0"

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise NegativeExtent(f"box extent ({self.w}, {self.h}) is negative")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


def iou(a: Box, b: Box) -> float:
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    if union <= 0:
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))


@dataclass
class MatchedSet:
    """Detections with their TP flag and matched IOU (0 for false positives)."""

    dets: List[Box]
    tp: np.ndarray
    ious: np.ndarray
    fn_count: int
    fn_by_class: Dict[int, int] = field(default_factory=dict)
    gt_by_class: Dict[int, int] = field(default_factory=dict)
    image_sizes: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    @property
    def scores(self) -> np.ndarray:
        return np.array([d.score for d in self.dets], dtype=float)

    @property
    def classes(self) -> np.ndarray:
        return np.array([d.cls for d in self.dets], dtype=int)

    def class_set(self) -> List[int]:
        return sorted(set(self.classes.tolist()) | set(self.gt_by_class))


def match(dets: Iterable[Box], gts: Iterable[Box], iou_threshold: float = 0.5,
          same_class: bool = True, image_sizes=None) -> MatchedSet:
    """Greedy matching in descending score order, one detection per ground truth."""
    dets = list(dets)
    gts = list(gts)
    if any(d.score is None for d in dets):
        raise ValueError("every detection needs a score")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    by_image: Dict[str, List[int]] = {}
    for j, g in enumerate(gts):
        by_image.setdefault(g.image, []).append(j)
    used = np.zeros(len(gts), dtype=bool)
    tp = np.zeros(len(dets), dtype=bool)
    ious = np.zeros(len(dets))
    for i in order:
        d = dets[i]
        best, best_j = -1.0, -1
        for j in by_image.get(d.image, []):
            if used[j] or (same_class and gts[j].cls != d.cls):
                continue
            v = iou(d, gts[j])
            if v >= iou_threshold and v > best:
                best, best_j = v, j
        if best_j >= 0:
            used[best_j] = True
            tp[i] = True
            ious[i] = best
    gt_by_class: Dict[int, int] = {}
    fn_by_class: Dict[int, int] = {}
    for j, g in enumerate(gts):
        gt_by_class[g.cls] = gt_by_class.get(g.cls, 0) + 1
        if not used[j]:
            fn_by_class[g.cls] = fn_by_class.get(g.cls, 0) + 1
    return MatchedSet(dets, tp, ious, int((~used).sum()), fn_by_class, gt_by_class,
                      dict(image_sizes or {}))


def _features(m: MatchedSet, dims: Sequence[str]) -> np.ndarray:
    cols = []
    for dim in dims:
        if dim == "score":
            cols.append(m.scores)
            continue
        vals = []
        for d in m.dets:
            iw, ih = m.image_sizes.get(d.image, (1.0, 1.0))
            if dim == "x":
                vals.append((d.x + d.w / 2) / iw)
            elif dim == "y":
                vals.append((d.y + d.h / 2) / ih)
            elif dim == "w":
                vals.append(d.w / iw)
            elif dim == "h":
                vals.append(d.h / ih)
            else:
                raise ValueError(f"unknown D-ECE dimension {dim!r}")
        cols.append(np.clip(vals, 0.0, 1.0))
    return np.column_stack(cols)


def _cell_gaps(cells, outcome, conf, n_cells, min_count):
    cnt = np.bincount(cells, minlength=n_cells)
    sy = np.bincount(cells, weights=outcome, minlength=n_cells)
    sc = np.bincount(cells, weights=conf, minlength=n_cells)
    keep = cnt >= max(min_count, 1)
    gaps = np.abs(sy[keep] - sc[keep]) / cnt[keep]
    return cnt[keep], gaps


def det_binned(m: MatchedSet, kind: str = "dece", dims: Sequence[str] = ("score",),
               bins: int = 10, min_count: int = 8, score_threshold: float = 0.0) -> MetricResult:
    """ACE, D-ECE over box properties, or LAECE (class-macro, IOU-weighted precision).

    ``laece0`` is LAECE with no score threshold.
    """
    if not m.dets:
        raise NoDetections("no detections to evaluate")
    scores = m.scores
    tp = m.tp.astype(float)
    if kind == "ace":
        idx = equal_width_index(scores, bins)
        cnt, gaps = _cell_gaps(idx, tp, scores, bins, 1)
        return result("ace", float(gaps.mean()), UNIT, bins=bins)
    if kind == "dece":
        feats = _features(m, dims)
        idx = np.zeros(len(scores), dtype=np.int64)
        for j in range(feats.shape[1]):
            idx = idx * bins + equal_width_index(feats[:, j], bins)
        n_cells = bins ** feats.shape[1]
        cnt, gaps = _cell_gaps(idx, tp, scores, n_cells, min_count)
        value = float(np.sum(cnt * gaps) / len(scores))
        return result("dece", value, UNIT, dims=list(dims), cells=n_cells,
                      used_cells=int(cnt.size), used_points=int(cnt.sum()))
    if kind in ("laece", "laece0"):
        thr = 0.0 if kind == "laece0" else score_threshold
        classes = m.class_set()
        total = 0.0
        target = tp * m.ious
        for k in classes:
            sel = (m.classes == k) & (scores >= thr)
            if not np.any(sel):
                continue
            idx = equal_width_index(scores[sel], bins)
            cnt, gaps = _cell_gaps(idx, target[sel], scores[sel], bins, 1)
            total += float(np.sum(cnt * gaps) / sel.sum())
        return result(kind, total / len(classes), UNIT, bins=bins, score_threshold=thr,
                      classes=len(classes))
    raise ValueError(f"unknown detection binned kind {kind!r}")


def laace0(m: MatchedSet) -> MetricResult:
    """Class-macro mean |IOU - score| over detections; false positives have IOU 0."""
    classes = m.class_set()
    if not m.dets:
        raise NoDetections("no detections to evaluate")
    err = np.abs(m.tp * m.ious - m.scores)
    cls = m.classes
    total = sum(float(err[cls == k].mean()) for k in classes if np.any(cls == k))
    return result("laace0", total / len(classes), UNIT, classes=len(classes))


def _log_beta_kernel(x, centres, h):
    a = centres / h + 1.0
    b = (1.0 - centres) / h + 1.0
    lnorm = gammaln(a + b) - gammaln(a) - gammaln(b)
    return (np.log(x)[:, None] * (a - 1.0)[None, :] + np.log1p(-x)[:, None] * (b - 1.0)[None, :]
            + lnorm[None, :])


def loo_bandwidth(scores, grid=None) -> float:
    """Beta-kernel width maximising the leave-one-out log likelihood of the scores."""
    s = np.clip(np.asarray(scores, dtype=float), 1e-6, 1 - 1e-6)
    grid = np.logspace(-3, 0, 31) if grid is None else np.asarray(grid, dtype=float)
    best, best_ll = grid[0], -math.inf
    for h in grid:
        lk = _log_beta_kernel(s, s, h)
        np.fill_diagonal(lk, -np.inf)
        mx = lk.max(axis=1)
        ll = float(np.sum(mx + np.log(np.exp(lk - mx[:, None]).sum(axis=1))))
        if ll > best_ll:
            best, best_ll = h, ll
    return float(best)


def l1cbod(m: MatchedSet, link="identity", bandwidth: Optional[float] = None) -> MetricResult:
    """Leave-one-out beta-kernel L1 calibration error against psi(IOU).

    ``link`` is ``"identity"`` or ``("threshold", t)``.
    """
    v = len(m.dets)
    if v < 2:
        raise TooFewDetections("need at least two detections")
    iouv = m.tp * m.ious
    if link == "identity":
        target = iouv
    elif isinstance(link, (tuple, list)) and link[0] == "threshold":
        target = (iouv >= float(link[1])).astype(float)
    else:
        raise ValueError(f"unknown link {link!r}")
    s = np.clip(m.scores, 1e-6, 1 - 1e-6)
    h = loo_bandwidth(s) if bandwidth is None else float(bandwidth)
    lk = _log_beta_kernel(s, s, h)
    np.fill_diagonal(lk, -np.inf)
    k = np.exp(lk - lk.max(axis=1, keepdims=True))
    est = (k @ target) / k.sum(axis=1)
    value = float(np.mean(np.abs(est - m.scores)))
    return result("l1cbod", value, UNIT, bandwidth=h, link=str(link))


def global_det(m: MatchedSet, kind: str = "qgc", normalized: bool = False,
               bins: int = 15, score_floor: float = 0.1) -> MetricResult:
    """EGCE, QGC or SGC, which all account for missed ground truth."""
    scores = m.scores
    tp = m.tp
    n_tp, n_fp, n_fn = int(tp.sum()), int((~tp).sum()), m.fn_count
    n = n_tp + n_fp + n_fn
    if kind == "egce":
        c = np.concatenate([scores, np.ones(n_fn)])
        y = np.concatenate([tp.astype(float), np.zeros(n_fn)])
        keep = c >= score_floor
        c, y = c[keep], y[keep]
        if c.size == 0:
            return result("egce", 0.0, UNIT if normalized else NONNEG, normalized=normalized)
        cnt, gaps = _cell_gaps(equal_width_index(c, bins), y, c, bins, 1)
        total = float(np.sum(cnt * gaps))
        value = total / c.size if normalized else total
        return result("egce", value, UNIT if normalized else NONNEG, normalized=normalized,
                      injected=n_fn)
    if kind == "qgc":
        # missed objects carry confidence 0, the maximal penalty
        total = float(np.sum((scores[tp] - 1.0) ** 2) + n_fn + np.sum(scores[~tp] ** 2))
    elif kind == "sgc":
        r = np.sqrt(scores ** 2 + (1.0 - scores) ** 2)
        total = float(n - np.sum(scores[tp] / r[tp]) + np.sum((1.0 - scores[~tp]) / r[~tp]))
    else:
        raise ValueError(f"unknown global detection kind {kind!r}")
    if normalized:
        return result(kind, total / n if n else 0.0, NONNEG, normalized=True, n=n)
    return result(kind, total, NONNEG, normalized=False, n=n)
