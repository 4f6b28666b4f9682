"""Bin-based calibration metrics, their variants and the binned hypothesis tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp
from scipy.stats import chi2

from . import binning as bn
from .binning import Bin, BinningSpec
from .core import (
    ONE_IS_PERFECT,
    REAL,
    SIGNED_ZERO,
    UNIT,
    Dataset,
    MetricResult,
    accuracy,
    make_rng,
    as_dataset,
    as_view,
    binary_view,
    ovr_view,
    result,
    top_label_view,
)
from .errors import (
    DegenerateBinConfidence,
    DegenerateDenominator,
    EmptyAfterFilter,
    IncompletePartition,
    NoEligibleBins,
    SingletonBin,
    TooFewBins,
    WindowTooLarge,
)

EW15 = BinningSpec("equal-width", 15)
EM15 = BinningSpec("equal-mass", 15)

BinningArg = Union[BinningSpec, List[Bin], None]


@dataclass(frozen=True)
class BinnedConfig:
    p: float = 1.0
    bins: int = 15
    tace_threshold: float = 0.01
    rbece_min_count: int = 10
    tau: float = 0.001
    mc_runs: int = 1000
    seed: Optional[int] = None
    sice_eps: float = 0.01
    hcs_beta: float = 1.0


def get_bins(view, binning: BinningArg = None) -> List[Bin]:
    if binning is None:
        binning = EW15
    if isinstance(binning, BinningSpec):
        return bn.apply_binning(view, binning)
    return list(binning)


def _occupied(bins):
    return [b for b in bins if b.count > 0]


def _is_inf(p):
    return p == math.inf or p == "inf"


def bin_table(bins: Sequence[Bin]) -> list:
    return [{"bin": b.index, "count": b.count, "mass": b.mass,
             "mean_conf": None if b.count == 0 else b.mean_conf,
             "mean_outcome": None if b.count == 0 else b.mean_outcome,
             "lo": b.lo, "hi": b.hi} for b in bins]


def ce_from_bins(bins: Sequence[Bin], p=1.0) -> float:
    occ = _occupied(bins)
    if not occ:
        return 0.0
    gaps = np.array([abs(b.gap) for b in occ])
    if _is_inf(p):
        return float(gaps.max())
    w = np.array([b.mass for b in occ])
    if p == 1:
        return float(np.sum(w * gaps))
    return float(np.sum(w * gaps ** p) ** (1.0 / p))


def binned_ce(view, binning: BinningArg = None, p=1.0) -> MetricResult:
    """l_p calibration error over bins; p=1 is ECE, p=inf is MCE."""
    view = as_view(view)
    bins = get_bins(view, binning)
    value = ce_from_bins(bins, p)
    name = "mce" if _is_inf(p) else ("ece" if p == 1 else f"ce_{p:g}")
    return result(name, value, UNIT, p="inf" if _is_inf(p) else float(p),
                  bins=bin_table(bins))


def ece(view, binning: BinningArg = None) -> MetricResult:
    return binned_ce(view, binning, 1)


def mce(view, binning: BinningArg = None) -> MetricResult:
    return binned_ce(view, binning, math.inf)


def classwise_ce(ds, binning: BinningArg = None, p=1.0, weights="equal") -> MetricResult:
    """Weighted sum of per-class one-vs-rest calibration errors.

    ``weights`` is ``"equal"`` (class-wise ECE / SCE), ``"proportional"``
    (WSECE) or an explicit vector summing to one.
    """
    ds = as_dataset(ds)
    if isinstance(weights, str):
        if weights == "equal":
            w = np.full(ds.k, 1.0 / ds.k)
        elif weights == "proportional":
            w = ds.class_proportions()
        else:
            raise ValueError(f"unknown weighting {weights!r}")
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (ds.k,) or abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
            raise ValueError("class weights must be K non-negative numbers summing to 1")
    per = np.zeros(ds.k)
    for k in range(ds.k):
        if w[k] == 0:
            continue
        v = ovr_view(ds, k)
        per[k] = ce_from_bins(get_bins(v, binning), p)
    return result("classwise_ce", float(np.dot(w, per)), UNIT, per_class=per.tolist(),
                  weights=w.tolist())


def tace(view, n_bins: int = 15, threshold: float = 0.01, topk: Optional[int] = None,
         avg_upto: Optional[int] = None, avg_points: int = 10) -> MetricResult:
    """Thresholded adaptive (equal-mass) ECE, ECE@k and Avg-ECE@l.

    ``topk`` keeps the k most confident points and uses
    ``max(1, floor(log10 k))`` bins.  ``avg_upto`` averages ECE@k over
    ``avg_points`` evenly spaced k up to that value.
    """
    view = as_view(view)
    if avg_upto is not None:
        ks = np.unique(np.linspace(avg_upto / avg_points, avg_upto, avg_points).round().astype(int))
        ks = ks[ks >= 1]
        vals = [tace(view, topk=int(k), threshold=0.0).value for k in ks]
        return result("avg_ece_at", float(np.mean(vals)), UNIT, ks=ks.tolist(), values=vals)
    if topk is not None:
        if topk < 1:
            raise ValueError("topk must be >= 1")
        order = np.argsort(-view.c, kind="stable")[:topk]
        sub = view.subset(np.sort(order))
        b = max(1, int(math.floor(math.log10(topk))))
        value = ce_from_bins(bn.bin_equal_mass(sub, min(b, sub.n)))
        return result("ece_at_k", value, UNIT, k=topk, bins_used=b)
    keep = view.c >= threshold if threshold > 0 else np.ones(view.n, dtype=bool)
    if not np.any(keep):
        raise EmptyAfterFilter(f"no confidences at or above {threshold}")
    sub = view.subset(np.flatnonzero(keep))
    value = ce_from_bins(bn.bin_equal_mass(sub, min(n_bins, sub.n)))
    return result("tace", value, UNIT, threshold=threshold, kept=int(sub.n))


def imbalance_alpha(class_props) -> float:
    g = np.asarray(class_props, dtype=float)
    k = g.size
    g = g[g > 0]
    if k < 2:
        return 0.0
    return float(-np.sum(g * np.log(g)) / math.log(k))


def ice_imbalanced(view, binning: BinningArg = None, class_props=None) -> MetricResult:
    """Bin gaps weighted by p_b**alpha, alpha the normalised class entropy."""
    view = as_view(view)
    if class_props is None:
        pos = float(np.mean(view.y)) if view.n else 0.0
        class_props = [1.0 - pos, pos]
    alpha = imbalance_alpha(class_props)
    occ = _occupied(get_bins(view, binning))
    w = np.array([b.mass for b in occ]) ** alpha
    gaps = np.array([abs(b.gap) for b in occ])
    value = float(np.sum(w * gaps) / np.sum(w)) if occ else 0.0
    return result("ice_imbalanced", value, UNIT, alpha=alpha)


def rbece(view, binning: BinningArg = None, min_count: int = 10) -> MetricResult:
    view = as_view(view)
    elig = [b for b in get_bins(view, binning) if b.count >= max(min_count, 1)]
    if not elig:
        raise NoEligibleBins(f"no bin holds at least {min_count} points")
    value = float(np.mean([abs(b.gap) for b in elig]))
    return result("rbece", value, UNIT, eligible=len(elig), min_count=min_count)


def ece_lb(view, binning: BinningArg = None, p=1.0) -> MetricResult:
    """Label-binned error: bin accuracy against each member's own confidence."""
    view = as_view(view)
    bins = get_bins(view, binning)
    devs = np.concatenate([np.abs(b.mean_outcome - view.c[b.members]) for b in _occupied(bins)]
                          or [np.zeros(0)])
    if _is_inf(p):
        value = float(devs.max()) if devs.size else 0.0
    else:
        value = float((np.sum(devs ** p) / view.n) ** (1.0 / p)) if view.n else 0.0
    return result("ece_lb", value, UNIT, p="inf" if _is_inf(p) else float(p))


def cece(per_class, binning: BinningArg = None) -> MetricResult:
    """Contraharmonic mean of per-class ECEs.

    ``per_class`` is either the ECE values themselves or a dataset, in which
    case one-vs-rest ECEs are computed with ``binning``.
    """
    if isinstance(per_class, Dataset):
        ds = per_class
        e = np.array([ce_from_bins(get_bins(ovr_view(ds, k), binning)) for k in range(ds.k)])
    else:
        e = np.asarray(per_class, dtype=float)
    s = float(e.sum())
    value = float(np.sum(e ** 2) / s) if s > 0 else 0.0
    return result("cece", value, UNIT, per_class=e.tolist())


ESCE_WIDTHS = np.linspace(0.005, 0.05, 10)


def esce(view, binning: BinningArg = None, averaged: bool = False) -> MetricResult:
    """Expected signed calibration error; positive means under-confident.

    ``averaged`` takes the mean over equal-width binnings whose widths span
    0.005 to 0.05 on a 10-point grid.
    """
    view = as_view(view)
    if averaged:
        vals = []
        for w in ESCE_WIDTHS:
            bins = bn.bin_equal_width(view, int(round(1.0 / w)))
            vals.append(sum(b.mass * b.gap for b in _occupied(bins)))
        return result("esce", float(np.mean(vals)), (-1.0, 1.0), SIGNED_ZERO, averaged=True)
    bins = get_bins(view, binning)
    value = sum(b.mass * b.gap for b in _occupied(bins))
    return result("esce", float(value), (-1.0, 1.0), SIGNED_ZERO, averaged=False)


def wsmcs(ds, binning: BinningArg = None) -> MetricResult:
    """Weighted-subset miscalibration score.

    Classes are split by the sign of their one-vs-rest ESCE; each group is a
    class-size weighted mean and the groups combine weighted by class count.
    Classes with ESCE exactly zero join neither group.
    """
    ds = as_dataset(ds)
    sizes = np.bincount(ds.labels, minlength=ds.k).astype(float)
    mcs = np.array([esce(ovr_view(ds, k), binning).value for k in range(ds.k)])
    total, count = 0.0, 0
    for mask in (mcs > 0, mcs < 0):
        if not np.any(mask):
            continue
        sz = sizes[mask]
        group = float(np.dot(sz, mcs[mask]) / sz.sum()) if sz.sum() > 0 else float(mcs[mask].mean())
        total += mask.sum() * group
        count += int(mask.sum())
    value = total / count if count else 0.0
    return result("wsmcs", value, (-1.0, 1.0), SIGNED_ZERO, per_class=mcs.tolist())


def soft_memberships(c, n_bins: int, tau: float, kind: str = "sbece") -> np.ndarray:
    """N x B soft bin membership matrix (rows sum to one)."""
    c = np.asarray(c, dtype=float)[:, None]
    if tau <= 0:
        raise ValueError("tau must be positive")
    if kind == "sbece":
        centres = (np.arange(n_bins) + 0.5) / n_bins
        logits = -(c - centres[None, :]) ** 2 / tau
    elif kind == "dece":
        cuts = np.arange(1, n_bins) / n_bins
        w1 = np.arange(1, n_bins + 1, dtype=float)
        w0 = -np.concatenate([[0.0], np.cumsum(cuts)])
        logits = (c * w1[None, :] + w0[None, :]) / tau
    else:
        raise ValueError(f"unknown soft binning {kind!r}")
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


def soft_binned_ece(view, n_bins: int = 15, tau: float = 0.001, p=1.0,
                    kind: str = "sbece") -> MetricResult:
    view = as_view(view)
    u = soft_memberships(view.c, n_bins, tau, kind)
    s = u.sum(axis=0)
    occ = s > 0
    cb = (u.T @ view.c)[occ] / s[occ]
    ab = (u.T @ view.y)[occ] / s[occ]
    w = s[occ] / view.n
    gaps = np.abs(ab - cb)
    if _is_inf(p):
        value = float(gaps.max())
    else:
        value = float(np.sum(w * gaps ** p) ** (1.0 / p))
    return result(kind, value, UNIT, tau=tau, sizes=s.tolist())


def debiased_ce(view, binning: BinningArg = None, kind: str = "ce2_db",
                mc_runs: int = 1000, seed: Optional[int] = None) -> MetricResult:
    """De-biased binned estimators: ``ce2_db``, ``ece_db`` (Monte Carlo) or ``dpe``.

    Values may come out slightly negative.
    """
    view = as_view(view)
    occ = _occupied(get_bins(view, binning))
    p = np.array([b.mass for b in occ])
    n = np.array([b.count for b in occ], dtype=float)
    cb = np.array([b.mean_conf for b in occ])
    yb = np.array([b.mean_outcome for b in occ])
    rng_range = (-1.0, 1.0)
    if kind == "ce2_db":
        if np.any(n < 2):
            raise SingletonBin("every occupied bin needs at least two points")
        value = np.sum(p * ((yb - cb) ** 2 - cb * (1.0 - cb) / (n - 1.0)))
        return result("ce2_db", value, rng_range, plugin=float(np.sum(p * (yb - cb) ** 2)))
    if kind == "dpe":
        resid = np.array([np.sum((view.y[b.members] - view.c[b.members]) ** 2) for b in occ])
        value = np.sum(p * ((yb - cb) ** 2 - resid / n ** 2))
        return result("dpe", value, rng_range)
    if kind == "ece_db":
        if seed is None:
            raise ValueError("ece_db is Monte Carlo and needs an explicit seed")
        rng = make_rng(seed)
        plugin = float(np.sum(p * np.abs(yb - cb)))
        sd = np.sqrt(yb * (1.0 - yb) / n)
        draws = rng.normal(yb[None, :], sd[None, :], size=(mc_runs, yb.size))
        expected = float(np.mean(np.sum(p[None, :] * np.abs(draws - cb[None, :]), axis=1)))
        value = plugin - (expected - plugin)
        return result("ece_db", value, rng_range, plugin=plugin, mc_runs=mc_runs, seed=seed)
    raise ValueError(f"unknown de-biased kind {kind!r}")


def piece(view, features, n_bins: int = 15, h_bins: int = 10) -> MetricResult:
    """Proximity-informed ECE over a confidence x proximity grid."""
    view = as_view(view)
    cells, conf_bins = bn.bin_proximity_grid(view, features, n_bins, h_bins)
    value = sum(cell.mass * abs(cell.gap) for row in cells for cell in row if cell.count)
    return result("piece", float(value), UNIT, marginal_ece=ce_from_bins(conf_bins),
                  n_bins=n_bins, h_bins=h_bins)


def pce(view, partitions, loss: str = "abs", weights=None) -> MetricResult:
    """Partitioned calibration error averaged over groupings of the data.

    ``partitions`` is a list of length-N group-label arrays; ``weights`` the
    probability of each partition (uniform by default).
    """
    view = as_view(view)
    if loss == "abs":
        lf = np.abs
    elif loss == "sq":
        lf = np.square
    else:
        raise ValueError(f"unknown loss {loss!r}")
    parts = [np.asarray(q) for q in partitions]
    if not parts:
        raise IncompletePartition("at least one partition is required")
    pq = np.full(len(parts), 1.0 / len(parts)) if weights is None else np.asarray(weights, float)
    total = 0.0
    for q, labels in zip(pq, parts):
        if labels.shape != (view.n,):
            raise IncompletePartition("each partition must assign every point to a group")
        _, inv, counts = np.unique(labels, return_inverse=True, return_counts=True)
        ys = np.bincount(inv, weights=view.y) / counts
        cs = np.bincount(inv, weights=view.c) / counts
        total += q * float(np.sum(counts / view.n * lf(ys - cs)))
    return result("pce", total, UNIT, loss=loss, partitions=len(parts))


def hl_statistic(view, binning: BinningArg = None, scheme: str = "c-statistic-em",
                 n_bins: int = 10, strict: bool = True, dof_offset: int = 2) -> MetricResult:
    """Hosmer-Lemeshow statistic with a chi-squared (B - 2 dof) p-value.

    B counts occupied bins.  With ``strict=False`` fewer than three bins
    yields the statistic without a p-value instead of raising.  The B - 2
    reference suits probabilities fitted on the same data; for externally
    fixed probabilities ``dof_offset=0`` gives the better-matched null.
    """
    view = as_view(view)
    if binning is None:
        binning = BinningSpec("equal-mass" if scheme == "c-statistic-em" else "equal-width",
                              min(n_bins, view.n) if scheme == "c-statistic-em" else n_bins)
    occ = _occupied(get_bins(view, binning))
    cb = np.array([b.mean_conf for b in occ])
    if np.any((cb <= 0) | (cb >= 1)):
        raise DegenerateBinConfidence("a bin has mean confidence 0 or 1")
    n = np.array([b.count for b in occ], dtype=float)
    yb = np.array([b.mean_outcome for b in occ])
    stat = float(np.sum(n * (yb - cb) ** 2 / (cb * (1.0 - cb))))
    dof = len(occ) - dof_offset
    if dof < 1:
        if strict:
            raise TooFewBins("Hosmer-Lemeshow needs at least three occupied bins")
        return result("hosmer_lemeshow", stat, (0.0, math.inf), bins=len(occ))
    p = float(chi2.sf(stat, dof))
    return result("hosmer_lemeshow", stat, (0.0, math.inf), p_value=p, dof=dof,
                  bins=len(occ))


def _dpe_counts(y, c, n_bins):
    """DPE on equal-width bins for a batch of (y, c) rows (R x N arrays)."""
    r, n = c.shape
    idx = bn.equal_width_index(c, n_bins) + (np.arange(r) * n_bins)[:, None]
    size = r * n_bins
    cnt = np.bincount(idx.ravel(), minlength=size).reshape(r, n_bins)
    sy = np.bincount(idx.ravel(), weights=y.ravel(), minlength=size).reshape(r, n_bins)
    sc = np.bincount(idx.ravel(), weights=c.ravel(), minlength=size).reshape(r, n_bins)
    sr = np.bincount(idx.ravel(), weights=((y - c) ** 2).ravel(), minlength=size).reshape(r, n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        term = (sy - sc) ** 2 / cnt ** 2 - sr / cnt ** 2
        term = np.where(cnt > 0, cnt / n * term, 0.0)
    return term.sum(axis=1)


def tcal_ladder(n: int) -> List[int]:
    top = max(1, math.ceil(math.log2(max(math.sqrt(n), 2.0))))
    return [2 ** j for j in range(1, top + 1)]


def tcal(view, alpha: float = 0.05, mc_runs: int = 1000, seed: Optional[int] = None,
         bin_range: Optional[Sequence[int]] = None, chunk: int = 200) -> MetricResult:
    """Adaptive T-Cal test on the de-biased plug-in l2 estimator.

    Each bin count in the ladder gets a Monte Carlo null from consistency
    resampling under the identity map; the overall p-value is the Bonferroni
    bound over the ladder.
    """
    if seed is None:
        raise ValueError("tcal is Monte Carlo and needs an explicit seed")
    view = as_view(view)
    ladder = list(bin_range) if bin_range is not None else tcal_ladder(view.n)
    obs = {b: float(_dpe_counts(view.y[None, :], view.c[None, :], b)[0]) for b in ladder}
    exceed = {b: 0 for b in ladder}
    rng = make_rng(seed)
    done = 0
    while done < mc_runs:
        r = min(chunk, mc_runs - done)
        idx = rng.integers(0, view.n, size=(r, view.n))
        cs = view.c[idx]
        ys = (rng.random((r, view.n)) < cs).astype(float)
        for b in ladder:
            exceed[b] += int(np.sum(_dpe_counts(ys, cs, b) >= obs[b]))
        done += r
    pvals = {b: (1 + exceed[b]) / (mc_runs + 1) for b in ladder}
    best = min(ladder, key=lambda b: pvals[b])
    p = min(1.0, len(ladder) * pvals[best])
    return result("tcal", obs[best], (-1.0, 1.0), p_value=p, reject=bool(p < alpha),
                  bins=best, dpe={str(b): obs[b] for b in ladder},
                  p_by_bins={str(b): pvals[b] for b in ladder}, mc_runs=mc_runs, seed=seed)


def random_interval_bins(c, width: float, offset: float) -> np.ndarray:
    """Bin index for edges ``0, r, r+w, r+2w, ..., 1``."""
    c = np.asarray(c, dtype=float)
    idx = np.where(c < offset, 0, np.floor((c - offset) / width).astype(np.int64) + 1)
    return idx


def rice(view, k: int, offsets) -> float:
    """Random interval calibration error averaged over the supplied offsets."""
    view = as_view(view)
    w = 2.0 ** (-k)
    resid = view.y - view.c
    vals = []
    for r in offsets:
        idx = random_interval_bins(view.c, w, r)
        sums = np.bincount(idx, weights=resid)
        vals.append(np.sum(np.abs(sums)) / view.n)
    return float(np.mean(vals))


def sice(view, eps: float = 0.01, mc_runs: int = 100, seed: Optional[int] = None) -> MetricResult:
    """Surrogate interval calibration error: min over k of RICE(k) + 2**-k."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if seed is None:
        raise ValueError("sice is Monte Carlo and needs an explicit seed")
    view = as_view(view)
    kstar = int(math.floor(-math.log2(eps / 2.0)))
    rng = make_rng(seed)
    rices = []
    for k in range(kstar + 1):
        offsets = rng.uniform(0.0, 2.0 ** (-k), size=mc_runs)
        rices.append(rice(view, k, offsets))
    scores = [r + 2.0 ** (-k) for k, r in enumerate(rices)]
    best = int(np.argmin(scores))
    return result("sice", scores[best], UNIT, k_star=kstar, k_best=best, rice=rices,
                  mc_runs=mc_runs, seed=seed)


def tilted_roof_map(bins: Sequence[Bin]) -> Callable:
    """Unit-slope bin map c -> c + (ybar_b - cbar_b); recovers ECE under FOTT."""
    occ = _occupied(bins)
    his = np.array([b.hi for b in occ])
    gaps = np.array([b.gap for b in occ])

    def f(c):
        c = np.asarray(c, dtype=float)
        j = np.clip(np.searchsorted(his, c, side="right"), 0, len(occ) - 1)
        return c + gaps[j]

    return f


def binned_mean_map(bins: Sequence[Bin]) -> Callable:
    occ = _occupied(bins)
    his = np.array([b.hi for b in occ])
    ys = np.array([b.mean_outcome for b in occ])

    def f(c):
        c = np.asarray(c, dtype=float)
        j = np.clip(np.searchsorted(his, c, side="right"), 0, len(occ) - 1)
        return ys[j]

    return f


def ece_fott(cal_map, view, alpha: float = 1.0) -> MetricResult:
    """Mean |map(c) - c|**alpha over the sample."""
    view = as_view(view)
    f = cal_map if callable(cal_map) else cal_map.evaluate
    value = float(np.mean(np.abs(np.asarray(f(view.c)) - view.c) ** alpha))
    return result("ece_fott", value, UNIT, alpha=alpha)


def cv_bin_count(view, candidates=range(2, 41), folds: int = 5, seed: int = 0,
                 scheme: str = "equal-mass") -> dict:
    """Pick a bin count by cross-validated squared error of the tilted-roof map."""
    view = as_view(view)
    rng = make_rng(seed)
    fold = rng.permutation(view.n) % folds
    losses = {}
    for b in candidates:
        sq = 0.0
        for f in range(folds):
            train = view.subset(np.flatnonzero(fold != f))
            test = view.subset(np.flatnonzero(fold == f))
            bins = bn.apply_binning(train, BinningSpec(scheme, int(b)))
            pred = np.clip(tilted_roof_map(bins)(test.c), 0.0, 1.0)
            sq += float(np.sum((pred - test.y) ** 2))
        losses[int(b)] = sq / view.n
    best = min(losses, key=losses.get)
    return {"bins": best, "losses": losses}


def overlapping_ce(view, kind: str = "calbin", s: Optional[int] = None,
                   k: Optional[int] = None) -> MetricResult:
    """CalBin over sliding equal-mass windows, or ECE-KNN over neighbourhoods.

    CalBin averages, over the N - s + 1 windows of the sorted data, the mean
    |window accuracy - c_i| of the window's members.
    """
    view = as_view(view)
    order = np.argsort(view.c, kind="stable")
    ys, cs = view.y[order], view.c[order]
    if kind == "calbin":
        s = max(1, view.n // 10) if s is None else int(s)
        if s > view.n or s < 1:
            raise WindowTooLarge(f"window {s} exceeds {view.n} points")
        win = np.lib.stride_tricks.sliding_window_view
        ywin = win(ys, s).mean(axis=1)
        cwin = win(cs, s)
        value = float(np.mean(np.abs(ywin[:, None] - cwin).mean(axis=1)))
        return result("calbin", value, UNIT, s=s)
    if kind == "knn":
        if k is None:
            raise ValueError("ECE-KNN needs k")
        if k >= view.n:
            raise WindowTooLarge(f"k={k} must be below N={view.n}")
        bins = bn.knn_neighbourhoods(view, k)
        value = float(np.mean([abs(b.gap) for b in bins]))
        return result("ece_knn", value, UNIT, k=k)
    raise ValueError(f"unknown overlapping kind {kind!r}")


def hcs_value(acc: float, ece_value: float, beta: float = 1.0) -> float:
    den = beta * acc + (1.0 - ece_value)
    if den <= 0:
        raise DegenerateDenominator("HCS denominator is zero")
    return (1.0 + beta) * acc * (1.0 - ece_value) / den


def hcs(ds, binning: BinningArg = None, beta: float = 1.0) -> MetricResult:
    ds = as_dataset(ds)
    a = accuracy(ds)
    e = ce_from_bins(get_bins(top_label_view(ds), binning))
    return result("hcs", hcs_value(a, e, beta), UNIT, ONE_IS_PERFECT, accuracy=a, ece=e,
                  beta=beta)


def wcr(ds) -> MetricResult:
    """Well-calibration ratio over argmax groups, plus the combined measure."""
    from .point import brier

    ds = as_dataset(ds)
    top = ds.argmax()
    onehot = ds.one_hot()
    diffs = []
    for k in range(ds.k):
        m = top == k
        if not np.any(m):
            continue
        diffs.append(np.sum(np.abs(ds.probs[m].mean(axis=0) - onehot[m].mean(axis=0))))
    value = 1.0 - float(np.sum(diffs)) / (ds.k * len(diffs))
    cal = math.sqrt(max(0.0, (1.0 - math.sqrt(brier(ds).value)) * value))
    return result("wcr", value, UNIT, ONE_IS_PERFECT, groups=len(diffs), cal=cal)
