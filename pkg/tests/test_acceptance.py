"""Acceptance suite: one recorded pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; the
terminal summary lists them in any case.
"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import expit, logit, softmax
from scipy.stats import chi2, kstest

import oracles
from calmet import binned as bd
from calmet import cumulative as cu
from calmet import kernelcurve as kc
from calmet import objdet as od
from calmet import point as pt
from calmet.binning import BinningSpec, sweep_bin_count
from calmet.cli import main
from calmet.core import binary_view, make_dataset, make_rng, ovr_view, top_label_view
from calmet.report import brier_curve
from calmet.synth import SynthSpec, generate, true_ce

EW15 = BinningSpec("equal-width", 15)
EM15 = BinningSpec("equal-mass", 15)


def _view(spec):
    ds = generate(spec)
    return binary_view((ds.labels == 1).astype(float), ds.probs[:, 1])


def _bernoulli_view(seed, n):
    rng = make_rng(seed)
    c = rng.random(n)
    return binary_view((rng.random(n) < c).astype(float), c)


def _random_dataset(seed, n, k):
    rng = np.random.default_rng(seed)
    probs = softmax(2.0 * rng.standard_normal((n, k)), axis=1)
    labels = rng.integers(0, k, size=n)
    return make_dataset(labels, probs)


# --------------------------------------------------------------- criterion 1


def test_equivalences(criterion):
    start = time.perf_counter()
    gaps = {}
    for seed in range(5):
        b2 = _random_dataset(seed, 250, 2)
        k3 = _random_dataset(100 + seed, 250, 3)
        v3 = top_label_view(k3)
        gaps.setdefault("rbs=sqrt(brier)", []).append(
            abs(pt.rbs(k3).value - math.sqrt(pt.brier(k3).value)))
        gaps.setdefault("rps=brier at K=2", []).append(
            abs(pt.rps(b2).value - pt.brier(b2).value))
        gaps.setdefault("sarps=rps at K=2", []).append(
            abs(pt.rps(b2, "sarps").value - pt.rps(b2).value))
        gaps.setdefault("focal(0)=nll", []).append(
            abs(pt.focal_loss(k3, 0.0).value - pt.nll(v3).value))
        gaps.setdefault("hinge=pnorm(1)", []).append(
            abs(pt.pnorm_error(v3, kind="hinge").value - pt.pnorm_error(v3, 1.0).value))
        single = [bd.ece(ovr_view(k3, k), BinningSpec("equal-width", 1)).value for k in range(3)]
        gaps.setdefault("gsb=mean single-bin ECE^2", []).append(
            abs(pt.global_bias(k3, "gsb").value - float(np.mean(np.square(single)))))
        groups = np.zeros(v3.n, dtype=int)
        for b in bd.get_bins(v3, EW15):
            groups[b.members] = b.index
        gaps.setdefault("pce(bins, abs)=ece", []).append(
            abs(bd.pce(v3, [groups]).value - bd.ece(v3, EW15).value))
        gaps.setdefault("pce(singletons, sq)=brier", []).append(
            abs(bd.pce(b2, [np.arange(b2.n)], "sq").value - pt.brier(b2).value))
        balanced = binary_view(np.repeat([0.0, 1.0], 125), ovr_view(b2, 1).c)
        gaps.setdefault("ice_imbalanced=ece (balanced)", []).append(
            abs(bd.ice_imbalanced(balanced, EW15).value - bd.ece(balanced, EW15).value))

    # detection degenerate cases
    rng = np.random.default_rng(0)
    gts, dets = [], []
    for i in range(80):
        gts.append(od.Box(i * 20.0, 0.0, 10.0, 10.0, cls=i % 2))
        shift = 0.0 if rng.random() < 0.7 else 9.0
        dets.append(od.Box(i * 20.0 + shift, 0.0, 10.0, 10.0, cls=i % 2,
                           score=float(rng.uniform(0.05, 0.95))))
    m = od.match(dets, gts)
    flat = bd.ece(binary_view(m.tp.astype(float), m.scores), BinningSpec("equal-width", 10)).value
    gaps["dece(score only)=ece"] = [abs(
        od.det_binned(m, "dece", dims=("score",), bins=10, min_count=1).value - flat)]
    exact = [od.Box(i * 20.0, 0.0, 10.0, 10.0, cls=i % 2, score=d.score)
             if m.tp[i] else d for i, d in enumerate(dets)]
    mu = od.match(exact, gts)
    per = [bd.ece(binary_view(mu.tp[mu.classes == k].astype(float), mu.scores[mu.classes == k]),
                  BinningSpec("equal-width", 10)).value for k in (0, 1)]
    gaps["laece0(unit IOU)=class ECE"] = [abs(
        od.det_binned(mu, "laece0", bins=10).value - float(np.mean(per)))]

    elapsed = time.perf_counter() - start
    worst = {k: max(v) for k, v in gaps.items()}
    ok = all(g <= 1e-12 for g in worst.values()) and elapsed < 10
    bad = [k for k, g in worst.items() if g > 1e-12]
    criterion(1, "equivalences", ok, f"max gap {max(worst.values()):.2e}, {elapsed:.1f}s {bad}")
    assert ok, worst


# --------------------------------------------------------------- criterion 2


def _ordering_case(i):
    rng = np.random.default_rng(10_000 + i)
    n = int(rng.integers(20, 301))
    c = rng.beta(rng.uniform(0.5, 5), rng.uniform(0.5, 5), size=n)
    tau = rng.uniform(0.4, 2.5)
    f = expit(logit(np.clip(c, 1e-9, 1 - 1e-9)) / tau)
    v = binary_view((rng.random(n) < f).astype(float), c)
    spec = BinningSpec(str(rng.choice(["equal-width", "equal-mass"])), int(rng.integers(2, 21)))
    feats = rng.standard_normal((n, 2))
    return v, spec, feats


def test_orderings(criterion):
    start = time.perf_counter()
    tol = 1e-12
    violations = {}

    def check(label, cond):
        if not cond:
            violations[label] = violations.get(label, 0) + 1

    for i in range(500):
        v, spec, feats = _ordering_case(i)
        c1, c2, cinf = (bd.binned_ce(v, spec, p).value for p in (1, 2, math.inf))
        check("CE1<=CE2<=CEinf", c1 <= c2 + tol and c2 <= cinf + tol)
        e, m = bd.ece(v, spec).value, bd.mce(v, spec).value
        check("|ESCE|<=ECE<=MCE", abs(bd.esce(v, spec).value) <= e + tol and e <= m + tol)
        check("ECE_LB>=ECE", bd.ece_lb(v, spec).value >= e - tol)
        r = bd.piece(v, feats, spec.bins, 5)
        check("PIECE>=marginal ECE", r.value >= r.details["marginal_ece"] - tol)
        mad, rng_ = cu.ecce(v).value, cu.ecce(v, "range").value
        check("mad<=range<=2mad", mad <= rng_ + tol and rng_ <= 2 * mad + tol)
        check("mae>=brier", pt.mae(v).value >= pt.brier(v).value - tol)
        lo = kc.loess_metrics(v)
        check("emax>=e90>=e50", lo["emax"].value >= lo["e90"].value - tol
              and lo["e90"].value >= lo["e50"].value - tol)
    elapsed = time.perf_counter() - start
    ok = not violations and elapsed < 60
    criterion(2, "orderings", ok, f"500 cases, violations {violations}, {elapsed:.1f}s")
    assert ok, violations


# --------------------------------------------------------------- criterion 3


def test_oracles(criterion):
    checks = {}

    # smooth_ce LP against exhaustive z lattice (lattice c keeps the optimum on the grid)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(12):
        n = int(rng.integers(1, 4))
        c = rng.integers(0, 11, size=n) / 10
        y = rng.integers(0, 2, size=n).astype(float)
        lp = kc.smooth_ce(binary_view(y, c)).value
        worst = max(worst, abs(lp - oracles.smooth_ce_grid(y.tolist(), c.tolist())))
    checks["smooth_ce LP vs grid"] = (worst <= 0.1, f"{worst:.1e}")

    # SMECE direct vs fast path, and fixed-point residual
    diff, resid = 0.0, 0.0
    for seed in range(3):
        c = np.random.default_rng(seed).beta(2, 3, size=400)
        v = binary_view((np.random.default_rng(seed + 50).random(400) < c ** 1.3).astype(float), c)
        d = kc.smece(v, method="direct")
        f = kc.smece(v, method="fast")
        diff = max(diff, abs(d.value - f.value))
        sigma = d.details["sigma"]
        resid = max(resid, abs(kc.smece_at(v, sigma) - sigma))
    checks["smece direct vs fast"] = (diff < 1e-4, f"{diff:.1e}")
    checks["smece fixed point"] = (resid < 1e-6, f"{resid:.1e}")

    # RICE and SICE against a naive re-implementation with shared seeds
    gap = 0.0
    for seed in range(5):
        v = _bernoulli_view(seed, 50)
        offsets = make_rng(seed).uniform(0, 0.25, size=20)
        gap = max(gap, abs(bd.rice(v, 2, offsets)
                           - oracles.naive_rice(v.c.tolist(), v.y.tolist(), 2, offsets.tolist())))
        r = bd.sice(v, eps=0.05, mc_runs=10, seed=seed)
        gen = np.random.Generator(np.random.Philox(seed))
        naive = []
        for k in range(r.details["k_star"] + 1):
            offs = gen.uniform(0.0, 2.0 ** -k, size=10)
            naive.append(oracles.naive_rice(v.c.tolist(), v.y.tolist(), k, offs.tolist()) + 2.0 ** -k)
        gap = max(gap, abs(r.value - min(naive)))
    checks["rice/sice vs naive"] = (gap <= 1e-12, f"{gap:.1e}")

    # sweep against brute force
    mism = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        c = np.sort(rng.random(n))
        y = (rng.random(n) < c).astype(float)
        mism += sweep_bin_count(binary_view(y, c)) != oracles.brute_sweep(y.tolist())
    checks["sweep vs brute force"] = (mism == 0, f"{mism} mismatches")

    # hand-derived examples, library vs scripted oracle
    one = make_dataset([1], [[0.3, 0.7]])
    v07 = binary_view([1], [0.7])
    v08 = binary_view([1], [0.8])
    fp = binary_view([0, 1, 1, 1], [0.2, 0.3, 0.8, 0.9])
    ew2 = BinningSpec("equal-width", 2)
    pairs = [
        (pt.brier(one).value * 2, oracles.brier_onehot(1, [0.3, 0.7])),
        (pt.nll(v07).value, oracles.nll_point(1, 0.7)),
        (pt.focal_loss(v07, 2.0).value, oracles.focal_point(0.7, 2)),
        (pt.ecd(v07).value, oracles.ecd_point(1, 0.7)),
        (pt.normalized_square(v08).value, oracles.nses_point(1, 0.8)),
        (pt.normalized_square(v08, "dss").value, oracles.dss_point(1, 0.8)),
        (pt.spiegelhalter_z(binary_view([0, 1], [0.2, 0.8])).value,
         oracles.spiegelhalter([0, 1], [0.2, 0.8])),
        (pt.alpha_score(one, 2.0).value, oracles.pss([0.3, 0.7], 1, 2.0)),
        (pt.alpha_score(one, 2.0, "power").value, oracles.power_verbatim([0.3, 0.7], 1, 2.0)),
        (pt.rps(make_dataset([0], [[0.5, 0.3, 0.2]])).value, oracles.rps_point([0.5, 0.3, 0.2], 0)),
        (bd.ece(fp, ew2).value, oracles.ece_ew(fp.c.tolist(), fp.y.tolist(), 2)),
        (bd.mce(fp, ew2).value, oracles.ece_ew(fp.c.tolist(), fp.y.tolist(), 2, math.inf)),
        (bd.hl_statistic(fp, ew2, strict=False).value,
         oracles.hosmer_lemeshow(fp.c.tolist(), fp.y.tolist(), 2)),
        (bd.imbalance_alpha([0.9, 0.1]), oracles.entropy_alpha([0.9, 0.1])),
        (bd.hcs_value(0.8, 0.2, 1.0), oracles.hcs(0.8, 0.2, 1.0)),
        (cu.ecce(binary_view([1], [0.6])).value, max(abs(t) for t in oracles.cdp([1], [0.6]))),
        (cu.ecce(binary_view([1], [0.6])).details["sigma_n"], oracles.sigma_n([0.6])),
        (od.iou(od.Box(0, 0, 1, 1), od.Box(0.5, 0, 1, 1)),
         oracles.iou((0, 0, 1, 1), (0.5, 0, 1, 1))),
        (true_ce(SynthSpec(true_map=("parabola", 0, 0, 1))),
         oracles.midpoint_integral(lambda t: t - t * t, 20_000)),
    ]
    worst = max(abs(a - b) for a, b in pairs)
    checks["hand-derived examples"] = (worst <= 1e-8, f"{len(pairs)} values, max gap {worst:.1e}")

    ok = all(v[0] for v in checks.values())
    for label, (good, detail) in checks.items():
        criterion(3, label, good, detail)
    assert ok, checks


# --------------------------------------------------------------- criterion 4


@pytest.fixture(scope="module")
def null_draws():
    start = time.perf_counter()
    out = {k: [] for k in ("hl", "hl_stat", "z", "ecce", "ecce_r", "skce", "sbct", "pws")}
    for seed in range(1000):
        v = _bernoulli_view(seed, 1000)
        hl = bd.hl_statistic(v)
        out["hl"].append(hl.p_value)
        out["hl_stat"].append(hl.value)
        out["z"].append(pt.spiegelhalter_z(v).value)
        out["ecce"].append(cu.ecce(v).p_value)
        out["ecce_r"].append(cu.ecce(v, "range").p_value)
        out["skce"].append(kc.pairwise_kernel_ce(v, "skce_ul").p_value)
        out["sbct"].append(kc.sbct(v).p_value)
        out["pws"].append(kc.pws(v).p_value)
    out = {k: np.asarray(v) for k, v in out.items()}
    out["elapsed"] = time.perf_counter() - start
    return out


def test_null_suite(null_draws, criterion):
    d = null_draws
    z = d["z"]
    checks = {
        "spiegelhalter moments": (abs(z.mean()) <= 0.1 and 0.85 <= z.var() <= 1.15,
                                  f"mean {z.mean():.3f}, var {z.var():.3f}"),
    }
    for key in ("ecce", "ecce_r"):
        ks = kstest(d[key], "uniform").statistic
        checks[f"{key} uniform"] = (ks < 0.05, f"KS {ks:.3f}")
    rate = np.mean(d["skce"] < 0.05)
    checks["skce_ul rate"] = (0.03 <= rate <= 0.08, f"{rate:.3f}")
    for key in ("sbct", "pws"):
        rate = np.mean(d[key] < 0.05)
        checks[f"{key} rate"] = (0.02 <= rate <= 0.10, f"{rate:.3f}")
    checks["runtime"] = (d["elapsed"] < 900, f"{d['elapsed']:.0f}s")
    for label, (good, detail) in checks.items():
        criterion(4, label, good, detail)
    assert all(v[0] for v in checks.values()), checks


@pytest.mark.xfail(strict=True, reason="B-2 reference null does not hold for fixed probabilities")
def test_null_hosmer_lemeshow(null_draws, criterion):
    ks = kstest(null_draws["hl"], "uniform").statistic
    rate = np.mean(null_draws["hl"] < 0.05)
    alt = kstest(chi2.sf(null_draws["hl_stat"], 10), "uniform").statistic
    criterion(4, "hosmer-lemeshow uniform (B-2 dof)", ks < 0.05,
              f"KS {ks:.3f}, rate {rate:.3f}; with B dof KS {alt:.3f}")
    assert ks < 0.05


# --------------------------------------------------------------- criterion 5


def test_bias_equal_mass_vs_width(criterion):
    rows, ok = [], True
    for dist in (("beta", 5, 1), ("beta", 0.5, 0.5)):
        for tau in (0.7, 1.5):
            for n in (1000, 10_000):
                specs = [SynthSpec(n, s, dist, ("temperature", tau)) for s in range(200)]
                truth = true_ce(specs[0])
                views = [_view(s) for s in specs]
                ew = np.mean([bd.ece(v, EW15).value for v in views]) - truth
                em = np.mean([bd.ece(v, EM15).value for v in views]) - truth
                good = abs(em) < abs(ew)
                ok &= good
                rows.append(f"{dist[1]},{dist[2]} tau={tau} N={n}: EM {em:+.5f} EW {ew:+.5f}")
    criterion(5, "EM bias below EW", ok, "; ".join(rows))
    assert ok, rows


def test_bias_skde_vs_binned(criterion):
    rows, ok = [], True
    for tau in (0.7, 1.5):
        specs = [SynthSpec(100, s, ("uniform",), ("temperature", tau)) for s in range(200)]
        truth = true_ce(specs[0])
        views = [_view(s) for s in specs]
        sk = np.mean([kc.skde(v).value for v in views]) - truth
        ew = np.mean([bd.ece(v, EW15).value for v in views]) - truth
        good = abs(sk) < abs(ew)
        ok &= good
        rows.append(f"tau={tau}: SKDE {sk:+.4f} binned {ew:+.4f}")
    criterion(5, "SKDE bias below binned", ok, "; ".join(rows))
    assert ok, rows


def _tau_for(target):
    return brentq(lambda t: true_ce(SynthSpec(true_map=("temperature", t)), grid=20_000) - target,
                  0.2, 0.999)


@pytest.mark.parametrize("target,n,runs,tcal_runs", [(0.10, 500, 200, 100), (0.02, 10_000, 100, 40)])
def test_detection_power(target, n, runs, tcal_runs, criterion):
    tau = _tau_for(target)
    views = [_view(SynthSpec(n, 5000 + s, ("uniform",), ("temperature", tau))) for s in range(runs)]
    ecce_power = float(np.mean([cu.ecce(v).p_value < 0.05 for v in views]))
    tcal_power = float(np.mean([bd.tcal(v, 0.05, 200, seed=s).details["reject"]
                                for s, v in enumerate(views[:tcal_runs])]))
    ok = max(ecce_power, tcal_power) >= 0.80
    criterion(5, f"power at CE {target:.2f}, N={n}", ok,
              f"ECCE {ecce_power:.2f}, T-Cal {tcal_power:.2f} (tau {tau:.3f})")
    assert ok


# --------------------------------------------------------------- criterion 6


def test_consistency_vs_n(criterion):
    start = time.perf_counter()
    sizes = (500, 2000, 10_000, 50_000)
    means = {"rbs": [], "ecce": [], "ece": []}
    for n in sizes:
        views = [_view(SynthSpec(n, s, ("beta", 5, 1), ("temperature", 0.7)))
                 for s in range(max(20, 100_000 // n))]
        means["rbs"].append(np.mean([pt.rbs(v).value for v in views]))
        means["ecce"].append(np.mean([cu.ecce(v).value for v in views]))
        means["ece"].append(np.mean([bd.ece(v, EW15).value for v in views]))
    drift = {k: abs(v[0] - v[-1]) / v[-1] for k, v in means.items()}
    falling = bool(np.all(np.diff(means["ece"]) < 0))
    elapsed = time.perf_counter() - start
    ok = drift["rbs"] < 0.05 and drift["ecce"] < 0.05 and falling and drift["ece"] > 0.05 \
        and elapsed < 300
    criterion(6, "stable vs N", ok,
              f"drift rbs {drift['rbs']:.3f}, ecce {drift['ecce']:.3f}, ece {drift['ece']:.3f}, "
              f"ece means {[round(float(x), 4) for x in means['ece']]}, {elapsed:.0f}s")
    assert ok, means


# --------------------------------------------------------------- criterion 7


def test_brier_curve_area(criterion):
    worst = 0.0
    grid = 1001
    for seed in range(5):
        v = _view(SynthSpec(3000, seed, ("beta", 2, 2), ("temperature", 0.8)))
        area = brier_curve(v, grid).area
        worst = max(worst, abs(area - float(np.mean((v.y - v.c) ** 2))))
    ok = worst <= 2.0 / grid
    criterion(7, "brier curve area", ok, f"max gap {worst:.2e} vs {2.0 / grid:.1e}")
    assert ok


def test_cli_reports_identical(tmp_path, criterion):
    ds = generate(SynthSpec(400, 3, ("beta", 3, 2), ("temperature", 0.8), k=3))
    src = tmp_path / "in.csv"
    lines = ["label,p0,p1,p2"] + [f"{l}," + ",".join(repr(float(p)) for p in row)
                                  for l, row in zip(ds.labels, ds.probs)]
    src.write_text("\n".join(lines) + "\n")
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        code = main(["--input", str(src), "--suite", "classic", "--metrics",
                     "ece_db,sice,skce_ul,tcal(mc_runs=100)", "--seed", "11",
                     "--bootstrap", "30", "--diagrams", "reliability,brier", "--out", str(out)])
        assert code == 0
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1]
    criterion(7, "byte-identical reports", ok, f"{len(outs[0])} bytes")
    assert ok
