"""Kernel-smoothed and fitted-curve calibration metrics and their tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import expit, gammaln, logit, logsumexp
from scipy.stats import chi2, gamma, norm

from .core import (
    NONNEG,
    ONE_IS_PERFECT,
    REAL,
    UNIT,
    Dataset,
    MetricResult,
    as_dataset,
    as_view,
    make_rng,
    result,
)
from .errors import (
    BoundaryConfidence,
    FitFailure,
    NoFixedPoint,
    SeparationFailure,
    SingularDesign,
    TooFewPoints,
)

CLAMP = 1e-6
MAP_CLIP = (0.001, 0.999)

# ---------------------------------------------------------------- kernels


def _gaussian(u):
    return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def _laplace(u):
    return 0.5 * np.exp(-np.abs(u))


def _epanechnikov(u):
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)


def _triweight(u):
    return np.where(np.abs(u) < 1.0, 35.0 / 32.0 * (1.0 - u * u) ** 3, 0.0)


KERNELS = {
    "gaussian": _gaussian,
    "laplace": _laplace,
    "epanechnikov": _epanechnikov,
    "triweight": _triweight,
}


def rule_of_thumb(x) -> float:
    """1.06 * sample standard deviation * N**(-1/5)."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise TooFewPoints("bandwidth rule needs at least two points")
    return 1.06 * float(np.std(x, ddof=1)) * x.size ** (-0.2)


def median_heuristic(x, seed: int = 0, max_points: int = 10_000) -> float:
    """Median pairwise Euclidean distance; rows are points."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] > max_points:
        x = x[make_rng(seed).choice(x.shape[0], max_points, replace=False)]
    n = x.shape[0]
    if n < 2:
        raise TooFewPoints("median heuristic needs at least two points")
    iu = np.triu_indices(n, 1)
    d = np.sqrt(np.sum((x[iu[0]] - x[iu[1]]) ** 2, axis=1)) if n <= 3000 else _chunked_dists(x)
    return float(np.median(d))


def _chunked_dists(x):
    out = []
    for i in range(x.shape[0] - 1):
        out.append(np.sqrt(np.sum((x[i + 1:] - x[i]) ** 2, axis=1)))
    return np.concatenate(out)


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    bandwidth: Union[float, str] = "rule-of-thumb"
    grid: int = 1024

    def resolve(self, c) -> float:
        h = self.bandwidth
        if isinstance(h, str):
            if h == "rule-of-thumb":
                h = rule_of_thumb(c)
            elif h == "median-heuristic":
                h = median_heuristic(c)
            else:
                raise ValueError(f"unknown bandwidth rule {h!r}")
        h = float(h)
        if not h > 0:
            raise ValueError("bandwidth must be positive")
        return h


@dataclass(frozen=True)
class CalibrationMap:
    evaluate: Callable
    provenance: str
    details: dict = field(default_factory=dict)

    def __call__(self, c):
        return self.evaluate(np.asarray(c, dtype=float))


# ------------------------------------------------------------ kernel maps


def _nw(xs, ys, xq, kern, h, chunk=2048):
    """Nadaraya-Watson estimate at xq; NaN where every weight is zero."""
    out = np.empty(len(xq))
    for s in range(0, len(xq), chunk):
        q = xq[s:s + chunk]
        w = kern((q[:, None] - xs[None, :]) / h)
        den = w.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[s:s + chunk] = (w @ ys) / den
    return out


def _fill_nearest(xq, vals, xs, ys):
    bad = ~np.isfinite(vals)
    if np.any(bad):
        nearest = np.abs(xq[bad][:, None] - xs[None, :]).argmin(axis=1)
        vals = vals.copy()
        vals[bad] = ys[nearest]
    return vals


def kernel_calibration_map(view, spec: KernelSpec = KernelSpec()) -> CalibrationMap:
    """Local-average map sum(y k) / sum(k); always inside [0, 1]."""
    view = as_view(view)
    if view.n < 1:
        raise TooFewPoints("kernel map needs data")
    kern = KERNELS[spec.family]
    h = spec.resolve(view.c) if view.n > 1 or not isinstance(spec.bandwidth, str) else 1.0
    xs, ys = view.c.copy(), view.y.copy()

    def f(c):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return _fill_nearest(c, _nw(xs, ys, c, kern, h), xs, ys)

    return CalibrationMap(f, "kernel", {"family": spec.family, "bandwidth": h})


def kernel_curve_ce(view, kind: str = "msce", bandwidth: Optional[float] = None,
                    family: str = "gaussian") -> MetricResult:
    """MSCE (squared, width 0.08) or SECE (absolute, width 0.01)."""
    view = as_view(view)
    if kind == "msce":
        p, h = 2, 0.08 if bandwidth is None else bandwidth
    elif kind == "sece":
        p, h = 1, 0.01 if bandwidth is None else bandwidth
    else:
        raise ValueError(f"unknown kernel curve metric {kind!r}")
    m = kernel_calibration_map(view, KernelSpec(family, h))
    value = float(np.mean(np.abs(m(view.c) - view.c) ** p))
    return result(kind, value, UNIT, bandwidth=h, family=family)


# ------------------------------------------------------------------ SMECE


def _reflected_gauss(c, t, sigma):
    """Reflected Gaussian density on [0, 1] for centres c at points t (len(t) x len(c))."""
    reach = int(math.ceil((1.0 + 8.0 * sigma) / 2.0))
    d = t[:, None] - c[None, :]
    s = t[:, None] + c[None, :]
    out = np.zeros(d.shape)
    for m in range(-reach, reach + 1):
        out += _gaussian((d - 2 * m) / sigma) + _gaussian((s - 2 * m) / sigma)
    return out / sigma


def smece_at(view, sigma: float, grid: int = 1024) -> float:
    view = as_view(view)
    t = np.arange(1, grid + 1) / grid
    r = view.y - view.c
    total = np.zeros(grid)
    for s in range(0, view.n, 512):
        total += _reflected_gauss(view.c[s:s + 512], t, sigma) @ r[s:s + 512]
    return float(np.mean(np.abs(total)) / view.n)


def smece_at_fast(view, sigma: float, grid: int = 1024, refine: int = 4) -> float:
    """FFT evaluation of smece_at on residuals spread linearly onto a fine grid.

    The reflected kernel is a period-2 convolution of the mirrored residual
    measure, so one circular convolution gives every grid value at once.
    """
    view = as_view(view)
    m = grid * refine
    size = 2 * m
    pos = view.c * m
    left = np.minimum(np.floor(pos).astype(int), m - 1)
    frac = pos - left
    r = view.y - view.c
    mass = np.bincount(left, weights=r * (1.0 - frac), minlength=m + 1)
    mass += np.bincount(left + 1, weights=r * frac, minlength=m + 1)
    idx = np.arange(m + 1)
    arr = np.zeros(size)
    np.add.at(arr, idx, mass)
    np.add.at(arr, (size - idx) % size, mass)
    d = np.arange(size) / m
    d = np.where(d >= 1.0, d - 2.0, d)
    reach = int(math.ceil((1.0 + 8.0 * sigma) / 2.0))
    kern = sum(_gaussian((d - 2 * j) / sigma) for j in range(-reach, reach + 1)) / sigma
    smooth = np.fft.irfft(np.fft.rfft(arr) * np.fft.rfft(kern), n=size)
    total = smooth[refine * np.arange(1, grid + 1)]
    return float(np.mean(np.abs(total)) / view.n)


def smece(view, grid: int = 1024, lo: float = 1e-6, hi: float = 1.0,
          iters: int = 60, method: str = "auto") -> MetricResult:
    """Smooth ECE at the bandwidth sigma* solving sigma = SMECE(sigma).

    ``method="auto"`` evaluates directly up to 500 points and by FFT on the
    aggregated node grid beyond that.
    """
    view = as_view(view)
    if method == "auto":
        method = "direct" if view.n <= 500 else "fast"
    if method == "direct":
        at = smece_at
    elif method == "fast":
        at = smece_at_fast
    else:
        raise ValueError(f"unknown SMECE method {method!r}")
    # the grid sum misses mass once sigma drops below 1/grid, so the lower
    # bracket is judged by the sigma -> 0 limit: total variation of the residuals
    _, inv = np.unique(view.c, return_inverse=True)
    limit = float(np.sum(np.abs(np.bincount(inv, weights=view.y - view.c)))) / view.n
    if limit <= lo:
        return result("smece", limit, UNIT, sigma=lo, grid=grid, method=method)
    if at(view, hi, grid) - hi > 0:
        raise NoFixedPoint("SMECE exceeds the bandwidth over the whole bracket")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if at(view, mid, grid) > mid:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    sigma = 0.5 * (lo + hi)
    return result("smece", at(view, sigma, grid), UNIT, sigma=sigma, grid=grid, method=method)


# --------------------------------------------------------- KDE estimators


def _log_dirichlet_kernel(targets, centres, h):
    """log k(target_j, centre_i) for the Dirichlet kernel (J x I)."""
    a = centres / h + 1.0
    lognorm = gammaln(a.sum(axis=1)) - gammaln(a).sum(axis=1)
    return np.log(targets) @ (a - 1.0).T + lognorm[None, :]


def kde_ce(data, kind: str = "dkde", p: float = 1.0, bandwidth: float = 0.05,
           chunk: int = 1000) -> MetricResult:
    """Leave-one-out beta / Dirichlet kernel calibration error.

    ``bkde`` is the partially de-biased squared error on the class-1 view;
    ``dkde`` is the plug-in p-norm over full probability vectors.
    """
    ds = as_dataset(data)
    if ds.n < 2:
        raise TooFewPoints("kernel density estimators need at least two points")
    probs = np.clip(ds.probs, CLAMP, 1.0)
    probs = probs / probs.sum(axis=1, keepdims=True)
    onehot = ds.one_hot()
    n = ds.n
    if kind == "bkde":
        if ds.k != 2:
            raise ValueError("bkde is a binary estimator")
        y, c = onehot[:, 1], probs[:, 1]
        terms = np.empty(n)
        for s in range(0, n, chunk):
            lk = _log_dirichlet_kernel(probs[s:s + chunk], probs, bandwidth)
            rows = np.arange(s, min(s + chunk, n))
            lk[rows - s, rows] = -np.inf
            k = np.exp(lk - lk.max(axis=1, keepdims=True))
            r = y[None, :] - c[rows][:, None]
            num = (k * r).sum(axis=1) ** 2 - (k * k * r * r).sum(axis=1)
            den = k.sum(axis=1) ** 2 - (k * k).sum(axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                terms[rows] = np.where(den > 0, num / den, 0.0)
        return result("bkde", float(terms.mean()), (-1.0, 1.0), bandwidth=bandwidth)
    if kind == "dkde":
        terms = np.empty(n)
        for s in range(0, n, chunk):
            lk = _log_dirichlet_kernel(probs[s:s + chunk], probs, bandwidth)
            rows = np.arange(s, min(s + chunk, n))
            lk[rows - s, rows] = -np.inf
            k = np.exp(lk - lk.max(axis=1, keepdims=True))
            yhat = (k @ onehot) / k.sum(axis=1, keepdims=True)
            terms[rows] = np.sum(np.abs(yhat - probs[rows]) ** p, axis=1)
        return result("dkde", float(terms.mean()), NONNEG, bandwidth=bandwidth, p=p)
    raise ValueError(f"unknown KDE kind {kind!r}")


# ------------------------------------------------------- pairwise kernels


def _pairwise_sum(r, x, h, chunk=2048):
    """sum_ij r_i . r_j exp(-||x_i - x_j|| / h) with rows as points."""
    total = 0.0
    for s in range(0, x.shape[0], chunk):
        d = np.sqrt(np.sum((x[s:s + chunk, None, :] - x[None, :, :]) ** 2, axis=2))
        total += float(np.sum((r[s:s + chunk] @ r.T) * np.exp(-d / h)))
    return total


def pairwise_kernel_ce(data, kind: str = "mmce", bandwidth: Optional[float] = None,
                       shuffle_seed: Optional[int] = None) -> MetricResult:
    """MMCE / LKCE on a binary view or SKCE (biased, quadratic, linear) on a dataset."""
    if kind in ("mmce", "lkce"):
        view = as_view(data)
        h = bandwidth if bandwidth is not None else (0.4 if kind == "mmce" else 1.0)
        r = (view.y - view.c)[:, None]
        value = _pairwise_sum(r, view.c[:, None], h) / view.n ** 2
        return result(kind, value, UNIT, bandwidth=h)
    ds = as_dataset(data)
    probs, r = ds.probs, ds.one_hot() - ds.probs
    h = bandwidth if bandwidth is not None else median_heuristic(probs)
    if h <= 0:
        h = 1.0
    n = ds.n
    if kind == "skce_b":
        value = _pairwise_sum(r, probs, h) / n ** 2
        return result(kind, max(value, 0.0), UNIT, bandwidth=h)
    if kind == "skce_uq":
        if n < 2:
            raise TooFewPoints("SKCE-UQ needs two points")
        diag = float(np.sum(r * r))
        value = (_pairwise_sum(r, probs, h) - diag) / (n * (n - 1))
        return result(kind, value, (-1.0, 1.0), bandwidth=h)
    if kind == "skce_ul":
        m = n // 2
        if m < 2:
            raise TooFewPoints("SKCE-UL needs at least four points")
        order = np.arange(n) if shuffle_seed is None else make_rng(shuffle_seed).permutation(n)
        a, b = order[0:2 * m:2], order[1:2 * m:2]
        d = np.sqrt(np.sum((probs[a] - probs[b]) ** 2, axis=1))
        terms = np.sum(r[a] * r[b], axis=1) * np.exp(-d / h)
        value = float(terms.mean())
        sd = float(np.std(terms, ddof=1))
        z = value * math.sqrt(m) / sd if sd > 0 else (math.inf if value > 0 else 0.0)
        return result(kind, value, (-1.0, 1.0), p_value=float(norm.sf(z)), bandwidth=h,
                      pairs=m, z=z)
    raise ValueError(f"unknown pairwise kernel kind {kind!r}")


# ------------------------------------------------------------------- SKDE


def skde(view, grid: int = 1024, p: float = 1.0) -> MetricResult:
    """Grid integral of |yhat(t) - t|^p weighted by the confidence density.

    Both the density and the map use a triweight kernel at the normal
    rule-of-thumb width.
    """
    view = as_view(view)
    if view.n < 2:
        raise TooFewPoints("SKDE needs two points")
    h = rule_of_thumb(view.c)
    if h <= 0:
        h = 1e-3
    t = np.arange(1, grid + 1) / grid
    w = _triweight((t[:, None] - view.c[None, :]) / h)
    dens = w.sum(axis=1) / (view.n * h)
    with np.errstate(invalid="ignore", divide="ignore"):
        yhat = (w @ view.y) / w.sum(axis=1)
    terms = np.where(dens > 0, np.abs(yhat - t) ** p * dens, 0.0)
    return result("skde", float(terms.mean()), UNIT, bandwidth=h, grid=grid, p=p)


# -------------------------------------------------------- reliability map


def local_linear(xs, ys, xq, h, kern=_epanechnikov):
    """Kernel-weighted local linear regression, falling back to local mean then nearest."""
    xs, ys, xq = (np.asarray(a, dtype=float) for a in (xs, ys, xq))
    out = np.empty(xq.size)
    for j, x0 in enumerate(xq):
        w = kern((xs - x0) / h)
        sw = w.sum()
        if sw <= 0:
            out[j] = ys[np.argmin(np.abs(xs - x0))]
            continue
        dx = xs - x0
        s1, s2 = np.dot(w, dx), np.dot(w, dx * dx)
        det = sw * s2 - s1 * s1
        if det <= 1e-12 * max(sw * s2, 1e-300):
            out[j] = np.dot(w, ys) / sw
        else:
            out[j] = (s2 * np.dot(w, ys) - s1 * np.dot(w, dx * ys)) / det
    return out


def reliability_value(ysum: float, m: int, yhat: float) -> float:
    return 1.0 + 1.0 / (m - 1) - (ysum - m * yhat) ** 2 / (m * (m - 1) * yhat * (1.0 - yhat))


@dataclass(frozen=True)
class ReliabilityMap:
    centres: np.ndarray
    estimates: np.ndarray
    calibration: CalibrationMap
    reliability: CalibrationMap


def reliability_map(view, m: int = 10, cal_bandwidth: float = 0.01,
                    rel_bandwidth: float = 0.1) -> ReliabilityMap:
    """Cluster-wise unbiased reliability estimates and their smoothed map.

    Points are sorted by confidence and cut into consecutive clusters of
    ``m``; a short remainder joins the last cluster.
    """
    view = as_view(view)
    if m < 2 or view.n < m:
        raise TooFewPoints(f"need at least m={m} >= 2 points")
    xs, ys = view.c.copy(), view.y.copy()

    def cal(c):
        return np.clip(local_linear(xs, ys, np.atleast_1d(c), cal_bandwidth), *MAP_CLIP)

    order = np.argsort(view.c, kind="stable")
    nclus = view.n // m
    groups = [order[i * m:(i + 1) * m] for i in range(nclus)]
    if view.n % m:
        groups[-1] = np.concatenate([groups[-1], order[nclus * m:]])
    centres = np.array([view.c[g].mean() for g in groups])
    yhat = cal(centres)
    est = np.array([reliability_value(float(view.y[g].sum()), g.size, yh)
                    for g, yh in zip(groups, yhat)])

    def rel(c):
        return np.clip(local_linear(centres, est, np.atleast_1d(c), rel_bandwidth), *MAP_CLIP)

    return ReliabilityMap(centres, est, CalibrationMap(cal, "kernel", {"bandwidth": cal_bandwidth}),
                          CalibrationMap(rel, "kernel", {"bandwidth": rel_bandwidth}))


# --------------------------------------------------- smooth calibration


def smooth_ce(view) -> MetricResult:
    """Exact LP for max (1/N) sum (y-c) z over 1-Lipschitz z bounded by 1."""
    view = as_view(view)
    u, inv = np.unique(view.c, return_inverse=True)
    w = np.bincount(inv, weights=view.y - view.c) / view.n
    m = u.size
    signed = float(w.sum())
    if m == 1:
        return result("smooth_ce", abs(signed), UNIT, signed=signed)
    gaps = np.diff(u)
    a = np.zeros((2 * (m - 1), m))
    idx = np.arange(m - 1)
    a[idx, idx + 1], a[idx, idx] = 1.0, -1.0
    a[m - 1 + idx, idx + 1], a[m - 1 + idx, idx] = -1.0, 1.0
    res = linprog(-w, A_ub=a, b_ub=np.concatenate([gaps, gaps]), bounds=[(-1.0, 1.0)] * m,
                  method="highs")
    if res.status != 0:
        raise FitFailure(f"LP solver failed: {res.message}")
    return result("smooth_ce", max(-float(res.fun), 0.0), UNIT, signed=signed)


# ---------------------------------------------------------------- LS-ECE


def lsece(view, sigma: float = 0.1, mc_runs: Optional[int] = None,
          seed: Optional[int] = None) -> MetricResult:
    """Logit-smoothed ECE with Gaussian logit jitter of scale sigma."""
    view = as_view(view)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rng = make_rng(seed)
    m = view.n if mc_runs is None else int(mc_runs)
    lc = logit(np.clip(view.c, CLAMP, 1.0 - CLAMP))
    pick = rng.integers(0, view.n, size=m)
    t = lc[pick] + sigma * rng.standard_normal(m)
    yhat = np.empty(m)
    for s in range(0, m, 1024):
        lw = -0.5 * ((lc[None, :] - t[s:s + 1024, None]) / sigma) ** 2
        lw -= lw.max(axis=1, keepdims=True)
        w = np.exp(lw)
        yhat[s:s + 1024] = (w @ view.y) / w.sum(axis=1)
    value = float(np.mean(np.abs(yhat - expit(t))))
    return result("lsece", value, UNIT, sigma=sigma, mc_runs=m, seed=seed)


# ------------------------------------------------------------------ LOESS


def loess(x, y, xq, span: float = 0.75, degree: int = 2):
    """Tricube-weighted local polynomial regression over the nearest span*N points."""
    x, y, xq = (np.asarray(a, dtype=float) for a in (x, y, xq))
    n = x.size
    q = max(degree + 1, int(math.ceil(span * n)))
    q = min(q, n)
    out = np.empty(xq.size)
    for j, x0 in enumerate(xq):
        d = np.abs(x - x0)
        dmax = np.partition(d, q - 1)[q - 1]
        if dmax <= 0:
            out[j] = y[d == 0].mean()
            continue
        w = np.clip(1.0 - (d / (dmax * 1.0000001)) ** 3, 0.0, None) ** 3
        keep = w > 0
        dx = x[keep] - x0
        design = np.vander(dx, degree + 1, increasing=True)
        sw = np.sqrt(w[keep])
        coef, *_ = np.linalg.lstsq(design * sw[:, None], y[keep] * sw, rcond=None)
        out[j] = coef[0]
    return out


def loess_metrics(view, span: float = 0.75) -> dict:
    """ICI, E50, E90 and Emax from a degree-2 LOESS calibration curve."""
    view = as_view(view)
    if view.n < 10:
        raise TooFewPoints("LOESS needs at least ten points")
    u, inv = np.unique(view.c, return_inverse=True)
    fit = loess(view.c, view.y, u, span)[inv]
    err = np.abs(view.c - fit)
    return {
        "ici": result("ici", float(err.mean()), UNIT),
        "e50": result("e50", float(np.percentile(err, 50)), UNIT),
        "e90": result("e90", float(np.percentile(err, 90)), UNIT),
        "emax": result("emax", float(err.max()), UNIT),
    }


# -------------------------------------------------------------------- ECI


def spline_basis(x, knots):
    """Restricted (natural) cubic spline basis: x plus len(knots)-2 columns."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(knots, dtype=float)
    k = t.size
    scale = (t[-1] - t[0]) ** 2 or 1.0

    def cube(v):
        return np.clip(v, 0.0, None) ** 3

    cols = [x]
    for j in range(k - 2):
        cols.append((cube(x - t[j])
                     - cube(x - t[-2]) * (t[-1] - t[j]) / (t[-1] - t[-2])
                     + cube(x - t[-1]) * (t[-2] - t[j]) / (t[-1] - t[-2])) / scale)
    return np.column_stack(cols)


def _softmax_fit(x, labels, k, ridge=1e-6):
    n, d = x.shape
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0

    def obj(wflat):
        w = wflat.reshape(d + 1, k)
        z = x @ w[1:] + w[0]
        lse = logsumexp(z, axis=1, keepdims=True)
        p = np.exp(z - lse)
        loss = -np.sum(onehot * (z - lse)) / n + ridge * np.sum(w[1:] ** 2)
        g = (p - onehot) / n
        grad = np.vstack([g.sum(axis=0), x.T @ g + 2 * ridge * w[1:]])
        return loss, grad.ravel()

    res = minimize(obj, np.zeros((d + 1) * k), jac=True, method="L-BFGS-B",
                   options={"maxiter": 2000, "gtol": 1e-9})
    if not np.all(np.isfinite(res.x)):
        raise FitFailure("multinomial spline fit diverged")
    w = res.x.reshape(d + 1, k)
    z = x @ w[1:] + w[0]
    return np.exp(z - logsumexp(z, axis=1, keepdims=True))


def eci(data, knots: int = 3) -> MetricResult:
    """Estimated calibration index from a multinomial spline recalibration fit."""
    ds = as_dataset(data)
    if ds.n < 30:
        raise TooFewPoints("ECI needs at least 30 points")
    lc = logit(np.clip(ds.probs, CLAMP, 1.0 - CLAMP))
    cols = ds.k - 1 if ds.k == 2 else ds.k
    feats = []
    for j in range(ds.k - cols, ds.k):
        qs = np.quantile(lc[:, j], np.linspace(0.25, 0.75, knots))
        if np.unique(qs).size < knots:
            feats.append(lc[:, j:j + 1])
        else:
            feats.append(spline_basis(lc[:, j], qs))
    x = np.hstack(feats)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    x = (x - x.mean(axis=0)) / sd
    yhat = _softmax_fit(x, ds.labels, ds.k)
    value = float(np.sum((ds.probs - yhat) ** 2) / (ds.n * ds.k))
    return result("eci", value, UNIT, knots=knots)


# ---------------------------------------------------- logistic utilities


def _irls(x, y, tol=1e-8, max_iter=100):
    beta = np.zeros(x.shape[1])
    for it in range(max_iter):
        p = expit(x @ beta)
        w = np.clip(p * (1 - p), 1e-12, None)
        hess = x.T @ (w[:, None] * x)
        try:
            step = np.linalg.solve(hess, x.T @ (y - p))
        except np.linalg.LinAlgError as exc:
            raise FitFailure("singular information matrix") from exc
        beta = beta + step
        if not np.all(np.isfinite(beta)):
            raise FitFailure("logistic fit diverged")
        if np.max(np.abs(step)) < tol:
            p = expit(x @ beta)
            hess = x.T @ ((p * (1 - p))[:, None] * x)
            return beta, hess, it + 1
    raise FitFailure("logistic fit did not converge")


def _separated(score, y):
    pos, neg = score[y == 1], score[y == 0]
    if pos.size == 0 or neg.size == 0:
        return True
    return pos.min() > neg.max() or neg.min() > pos.max()


@dataclass(frozen=True)
class CoxFit:
    a: float
    b: float
    se_a: float
    se_b: float
    p_a: float
    p_b: float


def cox_intercept_slope(view) -> CoxFit:
    """Logistic regression of y on logit(c) with Wald tests of a=0 and b=1."""
    view = as_view(view)
    if np.any((view.c <= 0) | (view.c >= 1)):
        raise BoundaryConfidence("Cox calibration needs confidences strictly inside (0, 1)")
    lc = logit(view.c)
    if _separated(lc, view.y):
        raise SeparationFailure("outcomes are perfectly separated by the confidence")
    x = np.column_stack([np.ones(view.n), lc])
    beta, hess, _ = _irls(x, view.y)
    cov = np.linalg.inv(hess)
    se = np.sqrt(np.diag(cov))
    za, zb = beta[0] / se[0], (beta[1] - 1.0) / se[1]
    return CoxFit(float(beta[0]), float(beta[1]), float(se[0]), float(se[1]),
                  float(2 * norm.sf(abs(za))), float(2 * norm.sf(abs(zb))))


def cox_results(view) -> dict:
    fit = cox_intercept_slope(view)
    return {
        "cox_intercept": result("cox_intercept", fit.a, REAL, "signed-zero-perfect",
                                p_value=fit.p_a, se=fit.se_a),
        "cox_slope": result("cox_slope", fit.b, REAL, ONE_IS_PERFECT, p_value=fit.p_b,
                            se=fit.se_b),
    }


# --------------------------------------------------------------- FOTT fits


def _hinge_design(x, knots):
    return np.column_stack([np.ones_like(x), x] + [np.clip(x - k, 0, None) for k in knots])


def _fit_pl(x, y, segments, family):
    knots = np.quantile(x, np.arange(1, segments) / segments) if segments > 1 else np.array([])
    knots = np.unique(knots)
    d = _hinge_design(x, knots)
    if family == "pl":
        coef, *_ = np.linalg.lstsq(d, y, rcond=None)
        return lambda v: np.clip(_hinge_design(v, knots) @ coef, *MAP_CLIP)
    if _separated(x, y) and segments == 1:
        raise FitFailure("outcomes are perfectly separated")
    beta, _, _ = _irls_ridge(d, y)
    return lambda v: np.clip(expit(_hinge_design(v, knots) @ beta), *MAP_CLIP)


def _irls_ridge(x, y, ridge=1e-6):
    try:
        return _irls(x, y)
    except FitFailure:
        pass
    # penalised fallback for near-separated folds
    def obj(b):
        z = x @ b
        loss = np.sum(np.logaddexp(0, z) - y * z) + ridge * np.sum(b[1:] ** 2) * len(y)
        grad = x.T @ (expit(z) - y)
        grad[1:] += 2 * ridge * b[1:] * len(y)
        return loss, grad

    res = minimize(obj, np.zeros(x.shape[1]), jac=True, method="L-BFGS-B")
    if not np.all(np.isfinite(res.x)):
        raise FitFailure("penalised logistic fit diverged")
    return res.x, None, res.nit


def fott_fit(view, family: str = "pl", segments: Optional[int] = None, folds: int = 5,
             max_segments: int = 8, seed: int = 0) -> CalibrationMap:
    """Continuous piecewise-linear calibration map, ensemble-averaged over folds.

    ``pl`` fits least squares in probability space; ``pl3`` fits a logistic
    model that is piecewise linear in logit(c).  Without ``segments`` the
    count minimising held-out squared error against the labels is chosen.
    """
    view = as_view(view)
    if family not in ("pl", "pl3"):
        raise ValueError(f"unknown FOTT family {family!r}")
    if view.n < 10 * folds:
        raise TooFewPoints(f"need at least {10 * folds} points for {folds} folds")
    x = view.c if family == "pl" else logit(np.clip(view.c, CLAMP, 1 - CLAMP))
    fold = make_rng(seed).permutation(view.n) % folds

    def tr(v):
        return v if family == "pl" else logit(np.clip(v, CLAMP, 1 - CLAMP))

    cands = [segments] if segments is not None else list(range(1, max_segments + 1))
    losses, fitted = {}, {}
    for s in cands:
        maps, sq = [], 0.0
        for f in range(folds):
            tr_idx, te_idx = fold != f, fold == f
            g = _fit_pl(x[tr_idx], view.y[tr_idx], s, family)
            maps.append(g)
            sq += float(np.sum((g(x[te_idx]) - view.y[te_idx]) ** 2))
        losses[s] = sq / view.n
        fitted[s] = maps
    best = min(losses, key=losses.get)
    maps = fitted[best]

    def f(c):
        v = tr(np.atleast_1d(np.asarray(c, dtype=float)))
        return np.mean([g(v) for g in maps], axis=0)

    return CalibrationMap(f, "piecewise-linear" if family == "pl" else "pl3-logit",
                          {"segments": best, "cv_loss": losses})


# --------------------------------------------------------- hypothesis tests


def beta_fit(view):
    """Three-parameter beta calibration map fitted by maximum likelihood."""
    view = as_view(view)
    c = np.clip(view.c, CLAMP, 1 - CLAMP)
    x = np.column_stack([np.ones(view.n), np.log(c), -np.log1p(-c)])
    beta, _, _ = _irls_ridge(x, view.y)
    m, a, b = beta

    def f(t):
        t = np.clip(np.asarray(t, dtype=float), 1e-12, 1 - 1e-12)
        return expit(m + a * np.log(t) - b * np.log1p(-t))

    return CalibrationMap(f, "beta-fit", {"m": float(m), "a": float(a), "b": float(b)})


def area_to_identity(f, grid: int = 1001) -> float:
    t = np.linspace(0.0, 1.0, grid)
    return float(np.trapezoid(np.abs(f(t) - t), t))


def sbct_pvalue(area: float, n: int) -> float:
    return float(gamma.sf(area, 4.74, scale=1.0 / math.sqrt(91.0 * n)))


def sbct(view, grid: int = 1001) -> MetricResult:
    """Statistical beta calibration test: area between fitted map and identity."""
    view = as_view(view)
    fmap = beta_fit(view)
    a = area_to_identity(fmap, grid)
    return result("sbct", a, UNIT, p_value=sbct_pvalue(a, view.n), grid=grid, **fmap.details)


def pws_statistic(theta, cov) -> float:
    d = np.asarray(theta, dtype=float) - np.array([0.0, 1.0, 0.0])
    return float(d @ np.linalg.solve(cov, d))


def pws(view, cov: str = "ols") -> MetricResult:
    """Parabolic Wald statistic for (0, 1, 0) with a chi-squared(3) p-value.

    ``cov`` selects the classical least-squares covariance or the
    heteroskedasticity-robust HC0 sandwich.
    """
    view = as_view(view)
    if np.unique(view.c).size < 3:
        raise SingularDesign("need at least three distinct confidences")
    x = np.column_stack([np.ones(view.n), view.c, view.c ** 2])
    theta, *_ = np.linalg.lstsq(x, view.y, rcond=None)
    resid = view.y - x @ theta
    xtx_inv = np.linalg.inv(x.T @ x)
    if cov == "ols":
        dof = max(view.n - 3, 1)
        v = xtx_inv * float(resid @ resid) / dof
    elif cov == "hc0":
        v = xtx_inv @ (x.T @ (resid[:, None] ** 2 * x)) @ xtx_inv
    else:
        raise ValueError(f"unknown covariance {cov!r}")
    stat = pws_statistic(theta, v)
    return result("pws", stat, NONNEG, p_value=float(chi2.sf(stat, 3)), theta=theta.tolist(),
                  cov=cov)
