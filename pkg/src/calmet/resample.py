"""Bootstrap and consistency resampling for metric confidence intervals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import binning as bn
from .binned import binned_mean_map
from .binning import BinningSpec
from .core import BinaryView, Dataset, MetricResult, as_view, binary_view, make_dataset, result
from .errors import CalmetError, ResampleFailure

MAX_FAIL_FRACTION = 0.10


@dataclass(frozen=True)
class ResampleSpec:
    kind: str = "bootstrap"
    rounds: int = 1000
    seed: Optional[int] = None
    ci_level: float = 0.95
    map: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("bootstrap", "consistency"):
            raise ValueError(f"unknown resampling kind {self.kind!r}")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0 < self.ci_level < 1:
            raise ValueError("ci_level must lie in (0, 1)")
        if self.seed is None:
            raise ValueError("resampling needs a seed")


def round_rng(seed: int, r: int) -> np.random.Generator:
    """Independent stream for round r, so parallel and serial runs agree."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(r)])))


def default_map(view: BinaryView) -> Callable:
    bins = bn.bin_equal_mass(view, min(15, view.n))
    return binned_mean_map(bins)


def draw(data, spec: ResampleSpec, rng, fmap=None):
    """One resampled copy of ``data``."""
    n = data.n
    idx = rng.integers(0, n, size=n)
    if isinstance(data, Dataset):
        if spec.kind == "bootstrap":
            return data.subset(idx)
        probs = data.probs[idx]
        u = rng.random(n)[:, None]
        labels = np.minimum((u > np.cumsum(probs, axis=1)).sum(axis=1), data.k - 1)
        return make_dataset(labels, probs)
    if spec.kind == "bootstrap":
        return data.subset(idx)
    c = data.c[idx]
    y = (rng.random(n) < np.clip(fmap(c), 0.0, 1.0)).astype(float)
    return binary_view(y, c, data.mode)


def resample_ci(metric_fn: Callable, data, spec: ResampleSpec) -> MetricResult:
    """Percentile interval of ``metric_fn`` over resampled copies of ``data``.

    Consistency resampling of a dataset draws labels from its own probability
    rows; for a binary view labels follow ``spec.map`` (default: 15-bin
    equal-mass binned map of the original data).
    """
    if not isinstance(data, (Dataset, BinaryView)):
        data = as_view(data)
    base = metric_fn(data)
    base_res = base if isinstance(base, MetricResult) else None
    fmap = None
    if spec.kind == "consistency" and isinstance(data, BinaryView):
        fmap = spec.map if spec.map is not None else default_map(data)
    values, failures = [], 0
    for r in range(spec.rounds):
        sample = draw(data, spec, round_rng(spec.seed, r), fmap)
        try:
            v = metric_fn(sample)
        except CalmetError:
            failures += 1
            continue
        values.append(float(v))
    if failures > MAX_FAIL_FRACTION * spec.rounds:
        raise ResampleFailure(f"{failures} of {spec.rounds} resampling rounds failed")
    vals = np.asarray(values)
    a = (1.0 - spec.ci_level) / 2.0
    lo = float(np.quantile(vals, a, method="inverted_cdf"))
    hi = float(np.quantile(vals, 1.0 - a, method="inverted_cdf"))
    extra = dict(resample=spec.kind, rounds=spec.rounds, failed_rounds=failures,
                 ci_level=spec.ci_level, seed=spec.seed)
    if base_res is None:
        base_res = result("metric", float(base))
    return base_res.with_ci(lo, hi, **extra)
