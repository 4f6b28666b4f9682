"""Data model: labelled probability predictions, binary views, metric results."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ClassIndexOutOfRange,
    DimensionMismatch,
    LabelOutOfRange,
    NonStochasticRow,
    OutOfRangeProbability,
)

RENORM_TOL = 1e-6
ROW_TOL = 1e-9

ZERO_IS_PERFECT = "zero-is-perfect"
ONE_IS_PERFECT = "one-is-perfect"
SIGNED_ZERO = "signed-zero-perfect"
ORIENTATIONS = (ZERO_IS_PERFECT, ONE_IS_PERFECT, SIGNED_ZERO)

INF = math.inf
UNIT = (0.0, 1.0)
NONNEG = (0.0, INF)
REAL = (-INF, INF)


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """N labels with an N x K row-stochastic probability matrix.

    Build with :func:`make_dataset`; the constructor does not validate.
    """

    labels: np.ndarray
    probs: np.ndarray

    @property
    def n(self) -> int:
        return int(self.probs.shape[0])

    @property
    def k(self) -> int:
        return int(self.probs.shape[1])

    def one_hot(self) -> np.ndarray:
        out = np.zeros(self.probs.shape)
        out[np.arange(self.n), self.labels] = 1.0
        return out

    def argmax(self) -> np.ndarray:
        # np.argmax returns the first maximum: lowest class index wins ties
        return np.argmax(self.probs, axis=1)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(_frozen(self.labels[idx]), _frozen(self.probs[idx]))

    def class_proportions(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k) / self.n


@dataclass(frozen=True, eq=False)
class BinaryView:
    """Outcomes ``y`` in {0, 1} paired with confidences ``c`` in [0, 1]."""

    y: np.ndarray
    c: np.ndarray
    mode: str = "native-binary"

    @property
    def n(self) -> int:
        return int(self.c.shape[0])

    def subset(self, idx) -> "BinaryView":
        idx = np.asarray(idx)
        return BinaryView(_frozen(self.y[idx]), _frozen(self.c[idx]), self.mode)


@dataclass(frozen=True)
class MetricResult:
    name: str
    value: float
    range: Tuple[float, float] = UNIT
    orientation: str = ZERO_IS_PERFECT
    p_value: Optional[float] = None
    ci: Optional[Tuple[float, float]] = None
    details: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)

    def with_ci(self, low, high, **extra) -> "MetricResult":
        details = dict(self.details)
        details.update(extra)
        return replace(self, ci=(float(low), float(high)), details=details)


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    kind: str
    entries: np.ndarray

    @property
    def shape(self):
        return self.entries.shape


def make_dataset(labels, probs) -> Dataset:
    """Validate and freeze labels plus probabilities.

    ``labels`` may be integer class indices or one-hot rows.  Rows of
    ``probs`` within 1e-6 of summing to one are renormalised; anything
    further off raises :class:`NonStochasticRow`.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2:
        raise DimensionMismatch(f"probs must be 2-D, got shape {probs.shape}")
    n, k = probs.shape
    if k < 2:
        raise DimensionMismatch("need at least two classes")

    labels = np.asarray(labels)
    if labels.ndim == 2:
        if labels.shape != probs.shape:
            raise DimensionMismatch(
                f"one-hot labels shape {labels.shape} != probs shape {probs.shape}")
        if not np.all((labels == 0) | (labels == 1)) or not np.all(labels.sum(axis=1) == 1):
            raise LabelOutOfRange("one-hot label rows must contain a single 1")
        labels = np.argmax(labels, axis=1)
    if labels.ndim != 1 or labels.shape[0] != n:
        raise DimensionMismatch(f"{labels.shape[0] if labels.ndim else 0} labels for {n} rows")
    if labels.size and not np.all(np.equal(np.mod(labels, 1), 0)):
        raise LabelOutOfRange("labels must be integers")
    labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        bad = labels[(labels < 0) | (labels >= k)][0]
        raise LabelOutOfRange(f"label {bad} outside 0..{k - 1}")

    if not np.all(np.isfinite(probs)):
        raise OutOfRangeProbability("non-finite probability")
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise OutOfRangeProbability("probabilities must lie in [0, 1]")
    sums = probs.sum(axis=1)
    dev = np.abs(sums - 1.0)
    if np.any(dev > RENORM_TOL):
        row = int(np.argmax(dev))
        raise NonStochasticRow(f"row {row} sums to {sums[row]!r}")
    probs = probs / sums[:, None]
    assert np.all(np.abs(probs.sum(axis=1) - 1.0) <= ROW_TOL)
    return Dataset(_frozen(labels), _frozen(probs))


def binary_dataset(y, c) -> Dataset:
    """Two-class dataset from outcomes and class-1 confidences."""
    c = np.asarray(c, dtype=float)
    return make_dataset(np.asarray(y).astype(int), np.column_stack([1.0 - c, c]))


def binary_view(y, c, mode="native-binary") -> BinaryView:
    y = np.asarray(y, dtype=float)
    c = np.asarray(c, dtype=float)
    if y.shape != c.shape or y.ndim != 1:
        raise DimensionMismatch("y and c must be equal-length vectors")
    if not np.all((y == 0) | (y == 1)):
        raise LabelOutOfRange("binary outcomes must be 0 or 1")
    if c.size and (not np.all(np.isfinite(c)) or c.min() < 0 or c.max() > 1):
        raise OutOfRangeProbability("confidences must lie in [0, 1]")
    return BinaryView(_frozen(y), _frozen(c), mode)


def top_label_view(ds: Dataset) -> BinaryView:
    top = ds.argmax()
    c = ds.probs[np.arange(ds.n), top]
    y = (top == ds.labels).astype(float)
    return BinaryView(_frozen(y), _frozen(c), "top-label")


def ovr_view(ds: Dataset, k: int) -> BinaryView:
    if not 0 <= k < ds.k:
        raise ClassIndexOutOfRange(f"class {k} outside 0..{ds.k - 1}")
    y = (ds.labels == k).astype(float)
    mode = "native-binary" if ds.k == 2 and k == 1 else f"one-vs-rest({k})"
    return BinaryView(_frozen(y), _frozen(ds.probs[:, k]), mode)


def as_view(data) -> BinaryView:
    """Coerce input to a binary view.

    Two-class datasets give the native class-1 view; wider ones the
    top-label view.  A ``(y, c)`` tuple is accepted too.
    """
    if isinstance(data, BinaryView):
        return data
    if isinstance(data, Dataset):
        return ovr_view(data, 1) if data.k == 2 else top_label_view(data)
    if isinstance(data, tuple) and len(data) == 2:
        return binary_view(*data)
    raise TypeError(f"cannot build a binary view from {type(data).__name__}")


def as_dataset(data) -> Dataset:
    if isinstance(data, Dataset):
        return data
    if isinstance(data, BinaryView):
        return binary_dataset(data.y, data.c)
    if isinstance(data, tuple) and len(data) == 2:
        return binary_dataset(*data)
    raise TypeError(f"cannot build a dataset from {type(data).__name__}")


def code_matrix(kind: str, k: int) -> CodeMatrix:
    """One-vs-rest (K x K) or exhaustive pairwise (K x K(K-1)/2) coding."""
    if k < 2:
        raise DimensionMismatch("code matrices need k >= 2")
    if kind == "ovr":
        m = -np.ones((k, k), dtype=int)
        np.fill_diagonal(m, 1)
    elif kind == "pairwise":
        cols = []
        for a in range(k):
            for b in range(a + 1, k):
                col = np.zeros(k, dtype=int)
                col[a], col[b] = 1, -1
                cols.append(col)
        m = np.column_stack(cols)
    else:
        raise ValueError(f"unknown code matrix kind {kind!r}")
    return CodeMatrix(kind, _frozen(m))


def accuracy(ds: Dataset) -> float:
    return float(np.mean(ds.argmax() == ds.labels))


def result(name, value, range=UNIT, orientation=ZERO_IS_PERFECT, p_value=None,
           **details: Any) -> MetricResult:
    return MetricResult(name, float(value), tuple(range), orientation,
                        None if p_value is None else float(p_value), None, details)


def as_float_array(x: Sequence[float]) -> np.ndarray:
    return np.asarray(x, dtype=float)


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; equal seeds give equal streams."""
    if seed is None:
        raise ValueError("a seed is required for Monte Carlo evaluation")
    return np.random.Generator(np.random.Philox(int(seed)))
