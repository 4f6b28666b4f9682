"""Synthetic predictions with known calibration maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import expit, logit, softmax
from scipy.stats import beta as beta_dist

from .core import Dataset, binary_dataset, make_dataset, make_rng

EDGE = 1e-12


@dataclass(frozen=True)
class SynthSpec:
    """Confidence distribution, true map and sample size.

    ``confidence_dist`` is ``("uniform",)`` or ``("beta", a, b)``;
    ``true_map`` one of ``("identity",)``, ``("temperature", tau)``,
    ``("beta-family", a, b, m)``, ``("parabola", t0, t1, t2)`` or
    ``("constant", v)``.  For ``k > 2`` scores are Gaussian with scale
    ``score_scale`` and only identity / temperature maps apply.
    """

    n: int = 1000
    seed: int = 0
    confidence_dist: Tuple = ("uniform",)
    true_map: Tuple = ("identity",)
    k: int = 2
    score_scale: float = 2.0


@dataclass(frozen=True, eq=False)
class SyntheticDataset(Dataset):
    true_map: Optional[Callable] = field(default=None)


def map_function(true_map: Tuple) -> Callable:
    kind = true_map[0]
    if kind == "identity":
        return lambda c: np.asarray(c, dtype=float)
    if kind == "temperature":
        tau = float(true_map[1])
        if tau <= 0:
            raise ValueError("temperature must be positive")
        return lambda c: expit(logit(np.clip(c, EDGE, 1 - EDGE)) / tau)
    if kind == "beta-family":
        a, b, m = map(float, true_map[1:4])

        def f(c):
            c = np.clip(np.asarray(c, dtype=float), EDGE, 1 - EDGE)
            return expit(m + a * np.log(c) - b * np.log1p(-c))
        return f
    if kind == "parabola":
        t0, t1, t2 = map(float, true_map[1:4])
        return lambda c: np.clip(t0 + t1 * np.asarray(c) + t2 * np.asarray(c) ** 2, 0.0, 1.0)
    if kind == "constant":
        v = float(true_map[1])
        return lambda c: np.full(np.shape(c), v)
    raise ValueError(f"unknown true map {kind!r}")


def _draw_conf(dist: Tuple, n: int, rng) -> np.ndarray:
    if dist[0] == "uniform":
        return rng.random(n)
    if dist[0] == "beta":
        return rng.beta(float(dist[1]), float(dist[2]), size=n)
    raise ValueError(f"unknown confidence distribution {dist[0]!r}")


def generate(spec: SynthSpec) -> SyntheticDataset:
    """Draw c from the confidence distribution and outcomes from the true map."""
    if spec.n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(spec.seed)
    if spec.k == 2:
        c = _draw_conf(spec.confidence_dist, spec.n, rng)
        f = map_function(spec.true_map)
        y = (rng.random(spec.n) < f(c)).astype(int)
        ds = binary_dataset(y, c)
        return SyntheticDataset(ds.labels, ds.probs, f)
    if spec.true_map[0] not in ("identity", "temperature"):
        raise ValueError("k > 2 supports identity and temperature maps only")
    tau = 1.0 if spec.true_map[0] == "identity" else float(spec.true_map[1])
    z = spec.score_scale * rng.standard_normal((spec.n, spec.k))
    probs = softmax(z, axis=1)
    truth = softmax(z / tau, axis=1)
    u = rng.random(spec.n)[:, None]
    labels = np.minimum((u > np.cumsum(truth, axis=1)).sum(axis=1), spec.k - 1)
    ds = make_dataset(labels, probs)

    def f(p):
        return softmax(np.log(np.clip(p, EDGE, 1.0)) / tau, axis=-1)

    return SyntheticDataset(ds.labels, ds.probs, f)


def confidence_density(dist: Tuple, c) -> np.ndarray:
    if dist[0] == "uniform":
        return np.ones_like(np.asarray(c, dtype=float))
    if dist[0] == "beta":
        return beta_dist.pdf(c, float(dist[1]), float(dist[2]))
    raise ValueError(f"unknown confidence distribution {dist[0]!r}")


def true_ce(spec: SynthSpec, p: float = 1.0, grid: int = 100_000) -> float:
    """Integral of |map(c) - c|^p over the confidence density (midpoint rule)."""
    if spec.k != 2:
        raise ValueError("true_ce is defined for binary specs")
    c = (np.arange(grid) + 0.5) / grid
    w = confidence_density(spec.confidence_dist, c)
    f = map_function(spec.true_map)
    return float(np.sum(np.abs(f(c) - c) ** p * w) / np.sum(w))
