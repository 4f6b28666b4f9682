"""Diagram data: reliability tables, simplex arrows, Brier and cost curves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .binned import BinningArg, get_bins
from .core import Dataset, as_dataset, as_view
from .errors import SingleClass, WrongClassCount

STYLES = ("line", "bar", "tilted-roof")


@dataclass(frozen=True)
class DiagramTable:
    rows: List[dict]
    meta: dict = field(default_factory=dict)


def reliability_table(view, binning: BinningArg = None, style: str = "line") -> DiagramTable:
    """Per-bin rows with markers at the mean confidence (never the bin centre)."""
    if style not in STYLES:
        raise ValueError(f"unknown style {style!r}")
    view = as_view(view)
    bins = get_bins(view, binning)
    rows = []
    for b in bins:
        row = {"bin": b.index, "lo": b.lo, "hi": b.hi, "count": b.count, "marker": b.count > 0,
               "mean_conf": None, "mean_outcome": None, "stderr": None}
        if b.count:
            yb = b.mean_outcome
            row.update(mean_conf=b.mean_conf, mean_outcome=yb,
                       stderr=math.sqrt(yb * (1.0 - yb) / b.count))
            if style == "tilted-roof":
                row["roof_lo"] = yb + (b.lo - b.mean_conf)
                row["roof_hi"] = yb + (b.hi - b.mean_conf)
        rows.append(row)
    spec = binning if binning is not None else "equal-width(15)"
    meta = {"style": style, "n": view.n, "bins": len(bins), "mode": view.mode,
            "scheme": spec.label() if hasattr(spec, "label") else str(spec)}
    return DiagramTable(rows, meta)


def simplex_cell(p, depth: int):
    """(i, j, up) triangle of a depth-d subdivision holding probability vector p."""
    a, b = p[0] * depth, p[1] * depth
    i, j = min(int(math.floor(a)), depth - 1), min(int(math.floor(b)), depth - 1)
    if i + j > depth - 1:
        j = depth - 1 - i
        return i, j, True
    up = (a - i) + (b - j) < 1.0 or i + j == depth - 1
    return i, j, up


def simplex_table(ds, depth: int = 5) -> DiagramTable:
    """Arrow rows (tail = mean one-hot label, head = mean prediction) per simplex cell."""
    ds = as_dataset(ds)
    if ds.k != 3:
        raise WrongClassCount(f"simplex diagrams need K=3, got K={ds.k}")
    groups = {}
    for n_, p in enumerate(ds.probs):
        groups.setdefault(simplex_cell(p, depth), []).append(n_)
    onehot = ds.one_hot()
    rows = []
    for key in sorted(groups, key=lambda t: (t[0], t[1], not t[2])):
        idx = np.array(groups[key])
        i, j, up = key
        rows.append({"cell": f"{i}-{j}-{'u' if up else 'd'}", "count": int(idx.size),
                     "tail": onehot[idx].mean(axis=0).tolist(),
                     "head": ds.probs[idx].mean(axis=0).tolist()})
    return DiagramTable(rows, {"depth": depth, "cells": depth * depth, "n": ds.n})


@dataclass(frozen=True)
class BrierCurve:
    grid: np.ndarray
    brier: np.ndarray
    cost: np.ndarray
    pi0: float
    pi1: float

    @property
    def area(self) -> float:
        return float(np.trapezoid(self.brier, self.grid))

    def table(self) -> DiagramTable:
        rows = [{"cost_proportion": float(t), "brier_curve": float(b), "cost_curve": float(c)}
                for t, b, c in zip(self.grid, self.brier, self.cost)]
        return DiagramTable(rows, {"pi0": self.pi0, "pi1": self.pi1, "area": self.area,
                                   "points": int(self.grid.size)})


def _cdf(sorted_scores, t):
    # right-continuous: fraction of scores <= t
    return np.searchsorted(sorted_scores, t, side="right") / max(sorted_scores.size, 1)


def brier_curve(view, grid: int = 1001) -> BrierCurve:
    """Brier curve over cost proportion and the optimal-threshold cost curve."""
    view = as_view(view)
    s0 = np.sort(view.c[view.y == 0])
    s1 = np.sort(view.c[view.y == 1])
    if s0.size == 0 or s1.size == 0:
        raise SingleClass("Brier curves need both classes")
    pi0, pi1 = s0.size / view.n, s1.size / view.n
    t = np.linspace(0.0, 1.0, grid)
    bc = 2 * t * pi0 * (1 - _cdf(s0, t)) + 2 * (1 - t) * pi1 * _cdf(s1, t)
    thr = np.unique(view.c)
    f0 = np.concatenate([[0.0], _cdf(s0, thr)])
    f1 = np.concatenate([[0.0], _cdf(s1, thr)])
    cost = np.min(2 * t[:, None] * pi0 * (1 - f0[None, :])
                  + 2 * (1 - t[:, None]) * pi1 * f1[None, :], axis=1)
    return BrierCurve(t, bc, cost, pi0, pi1)
