"""Cumulative-difference calibration statistics with Brownian-motion p-values."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .core import UNIT, MetricResult, as_dataset, as_view, binary_view, result
from .errors import DegenerateNull

SERIES_TOL = 1e-12


@dataclass(frozen=True)
class CumulativeTrace:
    cdp: np.ndarray
    order: np.ndarray
    sigma_n: float


def cdp(view) -> CumulativeTrace:
    """Running mean of y - c over points sorted by ascending confidence (stable)."""
    view = as_view(view)
    order = np.argsort(view.c, kind="stable")
    steps = (view.y[order] - view.c[order]) / view.n
    trace = np.concatenate([[0.0], np.cumsum(steps)])
    sigma = math.sqrt(float(np.sum(view.c * (1.0 - view.c)))) / view.n
    return CumulativeTrace(trace, order, sigma)


def max_abs_bm_sf(x: float) -> float:
    """P(max_{t<=1} |B_t| >= x) for standard Brownian motion."""
    if x <= 0:
        return 1.0
    if x < 0.1:
        return 1.0
    total, k = 0.0, 0
    while True:
        term = norm.sf((2 * k + 1) * x)
        total += term if k % 2 == 0 else -term
        if term < SERIES_TOL:
            break
        k += 1
    return float(min(1.0, max(0.0, 4.0 * total)))


def bm_range_sf(r: float) -> float:
    """P(max B - min B >= r) on [0, 1]; Feller's alternating series."""
    if r < 0.05:
        return 1.0
    total, k = 0.0, 1
    while True:
        term = k * norm.sf(k * r)
        total += term if k % 2 == 1 else -term
        if term < SERIES_TOL:
            break
        k += 1
    return float(min(1.0, max(0.0, 8.0 * total)))


def ecce(view, kind: str = "mad") -> MetricResult:
    """Maximum absolute deviation (ECCE-MAD) or range (ECCE-R) of the cumulative trace.

    The p-value refers the statistic over sigma_n to the matching Brownian
    functional; it is omitted when every confidence is 0 or 1.
    """
    tr = cdp(view)
    if kind == "mad":
        stat = float(np.max(np.abs(tr.cdp)))
        sf = max_abs_bm_sf
    elif kind == "range":
        stat = float(tr.cdp.max() - tr.cdp.min())
        sf = bm_range_sf
    else:
        raise ValueError(f"unknown ECCE kind {kind!r}")
    name = f"ecce_{kind}" if kind == "mad" else "ecce_r"
    if tr.sigma_n <= 0:
        return result(name, stat, UNIT, sigma_n=0.0, null="degenerate")
    return result(name, stat, UNIT, p_value=sf(stat / tr.sigma_n), sigma_n=tr.sigma_n)


def ecce_strict(view, kind: str = "mad") -> MetricResult:
    """Like :func:`ecce` but raises when the null is degenerate."""
    r = ecce(view, kind)
    if r.p_value is None:
        raise DegenerateNull("all confidences are 0 or 1; sigma_n = 0")
    return r


def ks_top_r(data, r: int = 1, event: str = "rank") -> MetricResult:
    """ECCE-MAD for the r-th most likely class (``rank``) or the top-r set (``top``)."""
    ds = as_dataset(data)
    if not 1 <= r < ds.k or (event == "rank" and r > ds.k):
        raise ValueError(f"r must lie in 1..{ds.k - 1}")
    order = np.argsort(-ds.probs, axis=1, kind="stable")
    rows = np.arange(ds.n)
    if event == "rank":
        cls = order[:, r - 1]
        y = (cls == ds.labels).astype(float)
        c = ds.probs[rows, cls]
    elif event == "top":
        top = order[:, :r]
        y = np.any(top == ds.labels[:, None], axis=1).astype(float)
        c = np.clip(ds.probs[rows[:, None], top].sum(axis=1), 0.0, 1.0)
    else:
        raise ValueError(f"unknown event {event!r}")
    res = ecce(binary_view(y, c, f"{event}-{r}"), "mad")
    return result("ks_top_r", res.value, UNIT, p_value=res.p_value, r=r, event=event,
                  **res.details)
