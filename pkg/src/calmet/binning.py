"""Bin-assignment schemes shared by the binned metrics and the diagram tables.

Edge convention: bins are half-open ``[lo, hi)`` with the last bin closed, so
a confidence of exactly 1 lands in the top bin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .core import BinaryView, as_view
from .errors import CalmetError, MissingFeatures

SCHEMES = ("equal-width", "equal-mass", "equal-area", "sweep", "sliding", "knn",
           "mvms", "proximity-grid")


@dataclass(frozen=True)
class BinningSpec:
    scheme: str = "equal-width"
    bins: int = 15
    window: Optional[int] = None  # sliding(s)
    k: Optional[int] = None  # knn(k)
    min_count: int = 1000  # mvms
    proximity_bins: int = 10  # proximity-grid H

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown binning scheme {self.scheme!r}")
        if self.bins < 1:
            raise ValueError("bin count must be >= 1")
        if self.window is not None and self.window < 1:
            raise ValueError("sliding window must be >= 1")
        if self.k is not None and self.k < 1:
            raise ValueError("knn k must be >= 1")

    def label(self) -> str:
        short = {"equal-width": "EW", "equal-mass": "EM", "equal-area": "EA"}
        return f"{short.get(self.scheme, self.scheme)},{self.bins}"


@dataclass
class Bin:
    """One bin: its members plus summary statistics.

    ``mean_conf`` and ``mean_outcome`` are NaN for empty bins.
    """

    index: int
    members: np.ndarray
    count: int
    mass: float
    mean_conf: float
    mean_outcome: float
    lo: float = float("nan")
    hi: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.mean_outcome - self.mean_conf


def summarize(view: BinaryView, groups, edges=None, n_total=None) -> List[Bin]:
    """Turn member-index groups into :class:`Bin` records."""
    n_total = view.n if n_total is None else n_total
    out = []
    for b, idx in enumerate(groups):
        idx = np.asarray(idx, dtype=np.int64)
        cnt = int(idx.size)
        if cnt:
            cb = float(np.mean(view.c[idx]))
            yb = float(np.mean(view.y[idx]))
        else:
            cb = yb = float("nan")
        lo, hi = (edges[b] if edges is not None else (float("nan"), float("nan")))
        out.append(Bin(b, idx, cnt, cnt / n_total if n_total else 0.0, cb, yb,
                       float(lo), float(hi)))
    return out


def equal_width_index(c, n_bins: int) -> np.ndarray:
    idx = np.floor(np.asarray(c, dtype=float) * n_bins).astype(np.int64)
    return np.clip(idx, 0, n_bins - 1)


def bin_equal_width(view, n_bins: int = 15) -> List[Bin]:
    view = as_view(view)
    if n_bins < 1:
        raise ValueError("bin count must be >= 1")
    idx = equal_width_index(view.c, n_bins)
    order = np.argsort(idx, kind="stable")
    splits = np.searchsorted(idx[order], np.arange(1, n_bins))
    groups = np.split(order, splits)
    edges = [(b / n_bins, (b + 1) / n_bins) for b in range(n_bins)]
    return summarize(view, groups, edges)


def _edges_from_sorted(cs: np.ndarray, bounds: List[int]):
    """Cut edges half-way between neighbouring sorted confidences."""
    edges = []
    for j in range(len(bounds) - 1):
        a, b = bounds[j], bounds[j + 1]
        lo = 0.0 if j == 0 else 0.5 * (cs[a - 1] + cs[a])
        hi = 1.0 if j == len(bounds) - 2 else 0.5 * (cs[b - 1] + cs[b])
        edges.append((lo, hi))
    return edges


def equal_mass_bounds(n: int, n_bins: int) -> List[int]:
    base, rem = divmod(n, n_bins)
    sizes = [base + (1 if b < rem else 0) for b in range(n_bins)]
    return [0] + list(np.cumsum(sizes))


def bin_equal_mass(view, n_bins: int = 15) -> List[Bin]:
    """Contiguous groups of the confidence-sorted data, sizes within one.

    The first ``N mod B`` bins take one extra point; ties keep input order.
    """
    view = as_view(view)
    if n_bins < 1:
        raise ValueError("bin count must be >= 1")
    if n_bins > view.n:
        raise CalmetError(f"{n_bins} equal-mass bins requested for {view.n} points")
    order = np.argsort(view.c, kind="stable")
    bounds = equal_mass_bounds(view.n, n_bins)
    groups = [order[bounds[j]:bounds[j + 1]] for j in range(n_bins)]
    return summarize(view, groups, _edges_from_sorted(view.c[order], bounds))


def bin_equal_area(view, n_bins: int = 15) -> List[Bin]:
    """Greedy cuts giving each bin roughly the same width x mass product.

    Scanning the sorted confidences, a bin is closed at the member count whose
    (width x mass) lies nearest the running target
    ``remaining_width * remaining_mass / remaining_bins**2``.  Width is
    measured from the previous cut to the last member.  The final bin takes
    whatever is left, so fewer than ``n_bins`` bins come back when the data
    are degenerate.
    """
    view = as_view(view)
    n = view.n
    order = np.argsort(view.c, kind="stable")
    cs = view.c[order]
    bounds = [0]
    lo = 0.0
    start = 0
    for left in range(n_bins, 1, -1):
        if start >= n:
            break
        target = (1.0 - lo) * ((n - start) / n) / left ** 2
        best, best_err = None, np.inf
        for j in range(start + 1, n):
            prod = (cs[j - 1] - lo) * ((j - start) / n)
            err = abs(prod - target)
            if err < best_err and cs[j] > cs[j - 1]:
                best, best_err = j, err
            if prod > target and best is not None:
                break
        if best is None:
            break
        bounds.append(best)
        lo = 0.5 * (cs[best - 1] + cs[best])
        start = best
    bounds.append(n)
    groups = [order[bounds[j]:bounds[j + 1]] for j in range(len(bounds) - 1)]
    return summarize(view, groups, _edges_from_sorted(cs, bounds))


def is_monotone_counts(sums: np.ndarray, sizes: np.ndarray) -> bool:
    """Exact non-decreasing check of sums/sizes without division."""
    return bool(np.all(sums[:-1] * sizes[1:] <= sums[1:] * sizes[:-1]))


def sweep_bin_count(view) -> int:
    """Largest equal-mass bin count whose bin accuracies are non-decreasing."""
    view = as_view(view)
    n = view.n
    order = np.argsort(view.c, kind="stable")
    ys = view.y[order]
    integral = bool(np.all(ys == np.round(ys)))
    cum = np.concatenate([[0.0], np.cumsum(ys)])
    best = 1
    for b in range(2, n + 1):
        bounds = np.asarray(equal_mass_bounds(n, b))
        sums = cum[bounds[1:]] - cum[bounds[:-1]]
        sizes = np.diff(bounds).astype(float)
        if integral:
            ok = is_monotone_counts(sums, sizes)
        else:
            means = sums / sizes
            ok = bool(np.all(np.diff(means) >= -1e-12))
        if ok:
            best = b
    return best


def bin_sweep(view) -> List[Bin]:
    view = as_view(view)
    if view.n < 2:
        return bin_equal_mass(view, 1) if view.n else []
    return bin_equal_mass(view, sweep_bin_count(view))


def sliding_windows(view, window: int) -> List[Bin]:
    """Overlapping windows of ``window`` consecutive sorted points."""
    view = as_view(view)
    order = np.argsort(view.c, kind="stable")
    groups = [order[s:s + window] for s in range(view.n - window + 1)]
    return summarize(view, groups)


def knn_neighbourhoods(view, k: int) -> List[Bin]:
    """One bin per point: the point plus its k nearest confidences."""
    view = as_view(view)
    tree = cKDTree(view.c[:, None])
    _, nbr = tree.query(view.c[:, None], k=min(k + 1, view.n))
    nbr = np.atleast_2d(nbr)
    if nbr.shape[0] != view.n:
        nbr = nbr.T
    return summarize(view, list(nbr))


def bin_mvms(probs, min_count: int = 1000) -> List[np.ndarray]:
    """Max-variance mean-split partition of probability vectors.

    A cell splits at the mean of its highest-variance coordinate; a split is
    refused when either child would hold fewer than ``min_count`` rows.
    Returns member-index arrays in depth-first order.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim == 1:
        probs = probs[:, None]
    if min_count < 1:
        raise ValueError("min_count must be >= 1")

    cells = []
    stack = [np.arange(probs.shape[0])]
    while stack:
        idx = stack.pop()
        sub = probs[idx]
        if idx.size < 2 * min_count:
            cells.append(idx)
            continue
        var = sub.var(axis=0)
        d = int(np.argmax(var))
        if var[d] <= 0.0:
            cells.append(idx)
            continue
        left = sub[:, d] < sub[:, d].mean()
        a, b = idx[left], idx[~left]
        if a.size < min_count or b.size < min_count or a.size == 0 or b.size == 0:
            cells.append(idx)
            continue
        stack.append(b)
        stack.append(a)
    return cells


def proximity(features, n_neighbours: int = 10) -> np.ndarray:
    """Mean Euclidean distance from each row to its nearest other rows."""
    if features is None:
        raise MissingFeatures("proximity binning needs feature vectors")
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    kk = min(n_neighbours, n - 1)
    if kk < 1:
        return np.zeros(n)
    dist, _ = cKDTree(x).query(x, k=kk + 1)
    # column 0 is the point itself (distance 0); duplicates may displace it
    # but then the displaced neighbour also sits at distance 0
    return dist[:, 1:].mean(axis=1)


def bin_proximity_grid(view, features, n_bins: int = 15, h_bins: int = 10):
    """Confidence x proximity grid from independent equal-mass marginals.

    Returns ``(cells, conf_bins)``: ``cells[b][h]`` is a :class:`Bin` for
    confidence bin ``b`` and proximity bin ``h``; ``conf_bins`` is the
    marginal confidence binning the grid refines.
    """
    view = as_view(view)
    if features is None:
        raise MissingFeatures("proximity binning needs feature vectors")
    feats = np.asarray(features, dtype=float)
    if feats.shape[0] != view.n:
        raise MissingFeatures("one feature row per data point is required")
    prox = proximity(feats)
    conf_bins = bin_equal_mass(view, n_bins)
    porder = np.argsort(prox, kind="stable")
    pbounds = equal_mass_bounds(view.n, h_bins)
    prox_bin = np.empty(view.n, dtype=np.int64)
    for h in range(h_bins):
        prox_bin[porder[pbounds[h]:pbounds[h + 1]]] = h
    cells = []
    for cb in conf_bins:
        groups = [cb.members[prox_bin[cb.members] == h] for h in range(h_bins)]
        row = summarize(view, groups)
        for h, cell in enumerate(row):
            cell.index = cb.index * h_bins + h
            cell.lo, cell.hi = cb.lo, cb.hi
            cell.extra = {"conf_bin": cb.index, "prox_bin": h}
        cells.append(row)
    return cells, conf_bins


def apply_binning(view, spec: BinningSpec) -> List[Bin]:
    view = as_view(view)
    s = spec.scheme
    if s == "equal-width":
        return bin_equal_width(view, spec.bins)
    if s == "equal-mass":
        return bin_equal_mass(view, min(spec.bins, max(view.n, 1)))
    if s == "equal-area":
        return bin_equal_area(view, spec.bins)
    if s == "sweep":
        return bin_sweep(view)
    if s == "sliding":
        return sliding_windows(view, spec.window or max(1, view.n // 10))
    if s == "knn":
        if spec.k is None:
            raise ValueError("knn binning needs an explicit k")
        return knn_neighbourhoods(view, spec.k)
    if s == "mvms":
        cells = bin_mvms(view.c, spec.min_count)
        return summarize(view, cells)
    raise ValueError(f"scheme {s!r} needs extra inputs; call its function directly")


def is_partition(bins: List[Bin], n: int) -> bool:
    if not bins:
        return n == 0
    allm = np.concatenate([b.members for b in bins])
    return allm.size == n and np.unique(allm).size == n
