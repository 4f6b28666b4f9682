"""Point-based metrics: per-datum scores averaged over the dataset."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from .core import (
    NONNEG,
    ONE_IS_PERFECT,
    REAL,
    SIGNED_ZERO,
    UNIT,
    MetricResult,
    as_dataset,
    as_view,
    result,
    top_label_view,
)
from .errors import BoundaryConfidence, DegenerateDenominator, ZeroDenominator


@dataclass(frozen=True)
class PointConfig:
    gamma: float = 2.0
    alpha: float = 2.0
    p: float = 1.0
    eps: float = 1e-4
    fcl_lambda: float = 1.0
    clamp_eps: Optional[float] = None


def _clamp(c, clamp_eps):
    if clamp_eps is None:
        return c
    return np.clip(c, clamp_eps, 1.0 - clamp_eps)


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def brier(data) -> MetricResult:
    """Mean squared difference of probability vectors and one-hot labels, scaled by 1/(NK)."""
    ds = as_dataset(data)
    sq = np.sum((ds.probs - ds.one_hot()) ** 2)
    value = sq / (ds.n * ds.k)
    details = {"k": ds.k}
    if ds.k == 2:
        details["classical"] = float(sq / ds.n)
    return result("brier", value, UNIT, **details)


def rbs(data) -> MetricResult:
    b = brier(data)
    return result("rbs", math.sqrt(b.value), UNIT)


def nll(data, multiclass: bool = False, clamp_eps=None) -> MetricResult:
    """Binary cross-entropy on a view, or the 1/(NK) multiclass log loss."""
    if multiclass:
        ds = as_dataset(data)
        c = _clamp(ds.probs[np.arange(ds.n), ds.labels], clamp_eps)
        terms = -_safe_log(c)
        value = float(np.sum(terms) / (ds.n * ds.k))
    else:
        v = as_view(data)
        c = _clamp(v.c, clamp_eps)
        with np.errstate(invalid="ignore"):
            pos = np.where(v.y == 1, -_safe_log(c), 0.0)
            neg = np.where(v.y == 0, -_safe_log(1.0 - c), 0.0)
        terms = pos + neg
        value = float(np.mean(terms))
    return result("nll", value, NONNEG, infinite=bool(np.isinf(value)),
                  multiclass=multiclass)


def focal_loss(data, gamma: float = 2.0, variant: str = "standard", full_class=False,
               fcl_lambda: float = 1.0, clamp_eps=None) -> MetricResult:
    """Focal loss on the top-label view (default) or over all classes.

    ``variant`` is ``standard``, ``dual`` (factor ``1 - c1 + c2`` from the two
    most confident classes) or ``fcl`` (standard plus ``fcl_lambda`` times the
    Brier score).
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    ds = as_dataset(data)
    if variant == "fcl":
        base = focal_loss(ds, gamma, "standard", full_class, clamp_eps=clamp_eps).value
        b = brier(ds).value
        return result("fcl", base + fcl_lambda * b, NONNEG, focal=base, brier=b,
                      fcl_lambda=fcl_lambda)
    if variant not in ("standard", "dual"):
        raise ValueError(f"unknown focal variant {variant!r}")

    if full_class:
        probs = _clamp(ds.probs, clamp_eps)
        ck = probs[np.arange(ds.n), ds.labels]
        if variant == "dual":
            srt = np.sort(ds.probs, axis=1)
            weight = 1.0 - srt[:, -1] + srt[:, -2]
        else:
            weight = 1.0 - ck
        terms = -(weight ** gamma) * _safe_log(ck)
        value = float(np.sum(terms) / (ds.n * ds.k))
    else:
        v = top_label_view(ds)
        c = _clamp(v.c, clamp_eps)
        if variant == "dual":
            srt = np.sort(ds.probs, axis=1)
            lead = 1.0 - srt[:, -1] + srt[:, -2]
        else:
            lead = 1.0 - c
        with np.errstate(invalid="ignore"):
            pos = np.where(v.y == 1, -(lead ** gamma) * _safe_log(c), 0.0)
            neg = np.where(v.y == 0, -(c ** gamma) * _safe_log(1.0 - c), 0.0)
        value = float(np.mean(pos + neg))
    name = "focal" if variant == "standard" else "dual_focal"
    return result(name, value, NONNEG, gamma=gamma, full_class=full_class)


def _check_open(c, clamp_eps, what):
    c = _clamp(np.asarray(c, dtype=float), clamp_eps)
    if np.any((c <= 0.0) | (c >= 1.0)):
        raise BoundaryConfidence(f"{what} needs confidences strictly inside (0, 1)")
    return c


def ecd(data, clamp_eps=None) -> MetricResult:
    """Entropic calibration difference; positive means over-confident."""
    v = as_view(data)
    c = _check_open(v.c, clamp_eps, "ECD")
    value = np.mean((c - v.y) * np.log(c / (1.0 - c)))
    return result("ecd", value, REAL, SIGNED_ZERO)


def global_bias(data, kind: str = "gsb") -> MetricResult:
    """Global (single-bin) comparisons of mean confidence and mean outcome.

    ``gsb`` and ``mdca`` average over all K classes of a dataset; ``eo`` and
    ``oe`` are ratios on a binary view.
    """
    if kind in ("gsb", "mdca"):
        ds = as_dataset(data)
        gaps = ds.probs.mean(axis=0) - ds.one_hot().mean(axis=0)
        if kind == "gsb":
            return result("gsb", np.mean(gaps ** 2), UNIT)
        return result("mdca", np.mean(np.abs(gaps)), UNIT)
    v = as_view(data)
    sc, sy = float(np.sum(v.c)), float(np.sum(v.y))
    if kind == "eo":
        if sy == 0:
            raise ZeroDenominator("EO needs at least one positive outcome")
        return result("eo", sc / sy, NONNEG, ONE_IS_PERFECT)
    if kind == "oe":
        if sc == 0:
            raise ZeroDenominator("OE needs non-zero total confidence")
        return result("oe", sy / sc, NONNEG, ONE_IS_PERFECT)
    raise ValueError(f"unknown global metric {kind!r}")


def success_rate(data) -> MetricResult:
    ds = as_dataset(data)
    top = ds.probs == ds.probs.max(axis=1, keepdims=True)
    hits = top[np.arange(ds.n), ds.labels]
    value = np.mean(hits / top.sum(axis=1))
    return result("success_rate", value, UNIT, ONE_IS_PERFECT)


def normalized_square(data, kind: str = "nses", clamp_eps=None) -> MetricResult:
    """Dawid-Sebastiani score or normalised squared error with Bernoulli moments."""
    v = as_view(data)
    c = _check_open(v.c, clamp_eps, kind.upper())
    var = c * (1.0 - c)
    z2 = (v.y - c) ** 2 / var
    if kind == "nses":
        return result("nses", np.mean(z2), NONNEG, ONE_IS_PERFECT)
    if kind == "dss":
        # log(sigma) with sigma the standard deviation
        return result("dss", np.mean(z2 + np.log(var)), NONNEG)
    raise ValueError(f"unknown normalised-square kind {kind!r}")


def pnorm_error(data, p=1.0, kind: str = "pwe", eps: float = 1e-4) -> MetricResult:
    """Pointwise l_p error; ``kind`` may also be ``hinge`` or ``l1eps``."""
    v = as_view(data)
    err = np.abs(v.y - v.c)
    if kind == "l1eps":
        if eps <= 0:
            raise ValueError("eps must be positive")
        value = np.mean(np.sqrt(err ** 2 + eps))
        return result("l1eps", value, (math.sqrt(eps), math.sqrt(1 + eps)), eps=eps)
    if kind == "hinge":
        # margin on the signed score 2c - 1, halved back onto [0, 1]
        value = np.mean(0.5 * (1.0 - (2.0 * v.y - 1.0) * (2.0 * v.c - 1.0)))
        return result("hinge", value, UNIT)
    if p == math.inf or p == "inf":
        return result("pwe_inf", float(err.max()) if err.size else 0.0, UNIT, p="inf")
    p = float(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    if p == 1:
        value = np.mean(err)
        return result("mae", value, UNIT, p=1.0)
    value = np.mean(err ** p) ** (1.0 / p)
    return result(f"pwe_{p:g}", value, UNIT, p=p)


def mae(data) -> MetricResult:
    return pnorm_error(data, 1)


def spiegelhalter_z(data) -> MetricResult:
    v = as_view(data)
    w = 1.0 - 2.0 * v.c
    den = float(np.sum(w ** 2 * v.c * (1.0 - v.c)))
    if den <= 0.0:
        raise DegenerateDenominator("Spiegelhalter z needs some confidence outside {0, 0.5, 1}")
    z = float(np.sum((v.y - v.c) * w) / math.sqrt(den))
    p = 2.0 * norm.sf(abs(z))
    return result("spiegelhalter_z", z, REAL, SIGNED_ZERO, p_value=p)


def alpha_score(data, alpha: float = 2.0, kind: str = "pss", corrected: bool = False) -> MetricResult:
    """Pseudo-spherical or power score.

    The power score is evaluated as printed,
    ``sum_l (alpha-1) c_l^alpha - alpha c_y`` per point.  With ``corrected``
    each point gets ``+1`` and the mean is divided by K, which is the
    quadratic score and equals :func:`brier` at ``alpha = 2``.
    """
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    ds = as_dataset(data)
    cy = ds.probs[np.arange(ds.n), ds.labels]
    if kind == "pss":
        norms = np.sum(ds.probs ** alpha, axis=1) ** (1.0 / alpha)
        value = np.mean(cy ** (alpha - 1) / norms ** (alpha - 1))
        return result("pss", value, NONNEG, ONE_IS_PERFECT, alpha=alpha)
    if kind == "power":
        per = np.sum((alpha - 1) * ds.probs ** alpha, axis=1) - alpha * cy
        if corrected:
            value = np.mean(per + 1.0) / ds.k
            return result("power", value, UNIT, alpha=alpha, corrected=True)
        return result("power", np.mean(per), REAL, alpha=alpha, corrected=False)
    raise ValueError(f"unknown alpha score {kind!r}")


def soft_f1(data) -> MetricResult:
    v = as_view(data)
    den = float(np.sum(2.0 - v.c - v.y))
    if den <= 0.0:
        raise DegenerateDenominator("soft F1 undefined when every y and c equals 1")
    value = 2.0 * float(np.dot(1.0 - v.c, 1.0 - v.y)) / den
    return result("soft_f1", value, UNIT, ONE_IS_PERFECT)


def rps(data, kind: str = "rps") -> MetricResult:
    """Ranked probability score over index-ordered classes, or its SARPS variant."""
    ds = as_dataset(data)
    cum = np.cumsum(ds.one_hot() - ds.probs, axis=1)[:, :-1]
    if kind == "rps":
        value = np.sum(cum ** 2) / (ds.n * (ds.k - 1))
    elif kind == "sarps":
        value = np.sum(np.sum(np.abs(cum), axis=1) ** 2) / (ds.n * (ds.k - 1))
    else:
        raise ValueError(f"unknown ranked score {kind!r}")
    return result(kind, value, UNIT)
