"""Command-line front end and the metric registry it draws on."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import binned as bd
from . import cumulative as cu
from . import kernelcurve as kc
from . import objdet as od
from . import point as pt
from . import report as rp
from .binning import BinningSpec
from .core import (
    NONNEG,
    ONE_IS_PERFECT,
    REAL,
    SIGNED_ZERO,
    UNIT,
    ZERO_IS_PERFECT,
    Dataset,
    MetricResult,
    as_view,
    make_dataset,
    ovr_view,
    result,
    top_label_view,
)
from .errors import CalmetError, ConfigError, MissingFeatures, ParseError
from .resample import ResampleSpec, resample_ci

SCHEMA_VERSION = 1
SIGNED = (-1.0, 1.0)


# ---------------------------------------------------------------- registry


@dataclass(frozen=True)
class MetricEntry:
    name: str
    fn: Callable
    level: str  # "view", "dataset" or "detect"
    range: Tuple[float, float] = UNIT
    orientation: str = ZERO_IS_PERFECT
    stochastic: bool = False


REGISTRY: Dict[str, MetricEntry] = {}


def _reg(name, fn, level="view", range=UNIT, orientation=ZERO_IS_PERFECT, stochastic=False):
    REGISTRY[name] = MetricEntry(name, fn, level, range, orientation, stochastic)


def _binning(params, default_scheme="equal-width"):
    return BinningSpec(str(params.pop("binning", default_scheme)), int(params.pop("bins", 15)))


def _p(params, default=1.0):
    p = params.pop("p", default)
    return math.inf if p in ("inf", math.inf) else float(p)


# point metrics
_reg("brier", lambda d, q: pt.brier(d), "dataset")
_reg("rbs", lambda d, q: pt.rbs(d), "dataset")
_reg("nll", lambda v, q: pt.nll(v, clamp_eps=q.pop("clamp_eps", None)), "view", NONNEG)
_reg("focal", lambda d, q: pt.focal_loss(d, float(q.pop("gamma", 2.0))), "dataset", NONNEG)
_reg("dual_focal", lambda d, q: pt.focal_loss(d, float(q.pop("gamma", 2.0)), "dual"),
     "dataset", NONNEG)
_reg("fcl", lambda d, q: pt.focal_loss(d, float(q.pop("gamma", 2.0)), "fcl",
                                        fcl_lambda=float(q.pop("fcl_lambda", 1.0))),
     "dataset", NONNEG)
_reg("ecd", lambda v, q: pt.ecd(v, q.pop("clamp_eps", None)), "view", REAL, SIGNED_ZERO)
_reg("gsb", lambda d, q: pt.global_bias(d, "gsb"), "dataset")
_reg("mdca", lambda d, q: pt.global_bias(d, "mdca"), "dataset")
_reg("eo", lambda v, q: pt.global_bias(v, "eo"), "view", NONNEG, ONE_IS_PERFECT)
_reg("oe", lambda v, q: pt.global_bias(v, "oe"), "view", NONNEG, ONE_IS_PERFECT)
_reg("success_rate", lambda d, q: pt.success_rate(d), "dataset", UNIT, ONE_IS_PERFECT)
_reg("nses", lambda v, q: pt.normalized_square(v, "nses"), "view", NONNEG, ONE_IS_PERFECT)
_reg("dss", lambda v, q: pt.normalized_square(v, "dss"), "view", NONNEG)
_reg("mae", lambda v, q: pt.pnorm_error(v, 1), "view")
_reg("pwe", lambda v, q: pt.pnorm_error(v, _p(q, 2.0)), "view")
_reg("hinge", lambda v, q: pt.pnorm_error(v, kind="hinge"), "view")
_reg("l1eps", lambda v, q: pt.pnorm_error(v, kind="l1eps", eps=float(q.pop("eps", 1e-4))), "view")
_reg("spiegelhalter_z", lambda v, q: pt.spiegelhalter_z(v), "view", REAL, SIGNED_ZERO)
_reg("pss", lambda d, q: pt.alpha_score(d, float(q.pop("alpha", 2.0)), "pss"), "dataset",
     NONNEG, ONE_IS_PERFECT)
_reg("power", lambda d, q: pt.alpha_score(d, float(q.pop("alpha", 2.0)), "power",
                                          bool(q.pop("corrected", True))), "dataset")
_reg("soft_f1", lambda v, q: pt.soft_f1(v), "view", UNIT, ONE_IS_PERFECT)
_reg("rps", lambda d, q: pt.rps(d, "rps"), "dataset")
_reg("sarps", lambda d, q: pt.rps(d, "sarps"), "dataset")

# bin metrics
_reg("ece", lambda v, q: bd.binned_ce(v, _binning(q), 1))
_reg("mce", lambda v, q: bd.binned_ce(v, _binning(q), math.inf))
_reg("ce", lambda v, q: bd.binned_ce(v, _binning(q), _p(q)))
_reg("classwise_ce", lambda d, q: bd.classwise_ce(d, _binning(q), _p(q),
                                                  q.pop("weights", "equal")), "dataset")
_reg("wsece", lambda d, q: bd.classwise_ce(d, _binning(q), _p(q), "proportional"), "dataset")
_reg("tace", lambda v, q: bd.tace(v, int(q.pop("bins", 15)), float(q.pop("threshold", 0.01))))
_reg("ece_at_k", lambda v, q: bd.tace(v, topk=int(q.pop("k"))))
_reg("avg_ece_at", lambda v, q: bd.tace(v, avg_upto=int(q.pop("l"))))
_reg("ice_imbalanced", lambda d, q: bd.ice_imbalanced(
    top_label_view(d) if d.k > 2 else ovr_view(d, 1), _binning(q), d.class_proportions()),
     "dataset")
_reg("rbece", lambda v, q: bd.rbece(v, _binning(q), int(q.pop("min_count", 10))))
_reg("ece_lb", lambda v, q: bd.ece_lb(v, _binning(q), _p(q)))
_reg("cece", lambda d, q: bd.cece(d, _binning(q)), "dataset")
_reg("esce", lambda v, q: bd.esce(v, _binning(q), bool(q.pop("averaged", False))), "view",
     SIGNED, SIGNED_ZERO)
_reg("wsmcs", lambda d, q: bd.wsmcs(d, _binning(q)), "dataset", SIGNED, SIGNED_ZERO)
_reg("sbece", lambda v, q: bd.soft_binned_ece(v, int(q.pop("bins", 15)),
                                              float(q.pop("tau", 0.001)), _p(q), "sbece"))
_reg("dece_soft", lambda v, q: bd.soft_binned_ece(v, int(q.pop("bins", 15)),
                                                  float(q.pop("tau", 0.001)), _p(q), "dece"))
_reg("ce2_db", lambda v, q: bd.debiased_ce(v, _binning(q), "ce2_db"), "view", SIGNED)
_reg("dpe", lambda v, q: bd.debiased_ce(v, _binning(q), "dpe"), "view", SIGNED)
_reg("ece_db", lambda v, q: bd.debiased_ce(v, _binning(q), "ece_db",
                                           int(q.pop("mc_runs", 1000)), q.pop("seed")),
     "view", SIGNED, stochastic=True)
_reg("pce", lambda v, q: _pce_bins(v, q))
_reg("hosmer_lemeshow", lambda v, q: bd.hl_statistic(v, n_bins=int(q.pop("bins", 10)),
                                                     scheme=q.pop("scheme", "c-statistic-em"),
                                                     dof_offset=int(q.pop("dof_offset", 2))),
     "view", NONNEG)
_reg("tcal", lambda v, q: bd.tcal(v, float(q.pop("alpha", 0.05)), int(q.pop("mc_runs", 1000)),
                                  q.pop("seed")), "view", SIGNED, stochastic=True)
_reg("sice", lambda v, q: bd.sice(v, float(q.pop("eps", 0.01)), int(q.pop("mc_runs", 100)),
                                  q.pop("seed")), "view", UNIT, stochastic=True)
_reg("calbin", lambda v, q: bd.overlapping_ce(v, "calbin", s=q.pop("s", None)))
_reg("ece_knn", lambda v, q: bd.overlapping_ce(v, "knn", k=int(q.pop("k", 10))))
_reg("ece_sweep", lambda v, q: bd.binned_ce(v, BinningSpec("sweep"), 1))
_reg("hcs", lambda d, q: bd.hcs(d, _binning(q), float(q.pop("beta", 1.0))), "dataset", UNIT,
     ONE_IS_PERFECT)
_reg("wcr", lambda d, q: bd.wcr(d), "dataset", UNIT, ONE_IS_PERFECT)
_reg("piece", lambda v, q: _no_features(), "view")

# kernel and curve metrics
_reg("msce", lambda v, q: kc.kernel_curve_ce(v, "msce", q.pop("bandwidth", None)))
_reg("sece", lambda v, q: kc.kernel_curve_ce(v, "sece", q.pop("bandwidth", None)))
_reg("smece", lambda v, q: kc.smece(v))
_reg("bkde", lambda d, q: kc.kde_ce(d, "bkde", bandwidth=float(q.pop("bandwidth", 0.05))),
     "dataset", SIGNED)
_reg("dkde", lambda d, q: kc.kde_ce(d, "dkde", _p(q), float(q.pop("bandwidth", 0.05))),
     "dataset", NONNEG)
_reg("mmce", lambda v, q: kc.pairwise_kernel_ce(v, "mmce", q.pop("bandwidth", None)))
_reg("lkce", lambda v, q: kc.pairwise_kernel_ce(v, "lkce", q.pop("bandwidth", None)))
_reg("skce_b", lambda d, q: kc.pairwise_kernel_ce(d, "skce_b"), "dataset")
_reg("skce_uq", lambda d, q: kc.pairwise_kernel_ce(d, "skce_uq"), "dataset", SIGNED)
_reg("skce_ul", lambda d, q: kc.pairwise_kernel_ce(d, "skce_ul"), "dataset", SIGNED)
_reg("skde", lambda v, q: kc.skde(v, int(q.pop("grid", 1024)), _p(q)))
_reg("smooth_ce", lambda v, q: kc.smooth_ce(v))
_reg("lsece", lambda v, q: kc.lsece(v, float(q.pop("sigma", 0.1)), q.pop("mc_runs", None),
                                    q.pop("seed")), "view", UNIT, stochastic=True)
for _name in ("ici", "e50", "e90", "emax"):
    _reg(_name, (lambda key: lambda v, q: kc.loess_metrics(v)[key])(_name))
_reg("eci", lambda d, q: kc.eci(d), "dataset")
_reg("ece_fott_pl", lambda v, q: bd.ece_fott(kc.fott_fit(v, "pl"), v))
_reg("ece_fott_pl3", lambda v, q: bd.ece_fott(kc.fott_fit(v, "pl3"), v))
_reg("cox_intercept", lambda v, q: kc.cox_results(v)["cox_intercept"], "view", REAL, SIGNED_ZERO)
_reg("cox_slope", lambda v, q: kc.cox_results(v)["cox_slope"], "view", REAL, ONE_IS_PERFECT)
_reg("sbct", lambda v, q: kc.sbct(v))
_reg("pws", lambda v, q: kc.pws(v), "view", NONNEG)

# cumulative
_reg("ecce_mad", lambda v, q: cu.ecce(v, "mad"))
_reg("ecce_r", lambda v, q: cu.ecce(v, "range"))
_reg("ks_top_r", lambda d, q: cu.ks_top_r(d, int(q.pop("r", 1)), q.pop("event", "rank")),
     "dataset")

# detection
_reg("ace", lambda m, q: od.det_binned(m, "ace", bins=int(q.pop("bins", 10))), "detect")
_reg("dece", lambda m, q: od.det_binned(m, "dece", dims=tuple(q.pop("dims", "score").split("+")),
                                        bins=int(q.pop("bins", 10)),
                                        min_count=int(q.pop("min_count", 8))), "detect")
_reg("laece", lambda m, q: od.det_binned(m, "laece", bins=int(q.pop("bins", 25)),
                                         score_threshold=float(q.pop("threshold", 0.0))),
     "detect")
_reg("laece0", lambda m, q: od.det_binned(m, "laece0", bins=int(q.pop("bins", 25))), "detect")
_reg("laace0", lambda m, q: od.laace0(m), "detect")
_reg("l1cbod", lambda m, q: od.l1cbod(m, _link(q.pop("link", "identity"))), "detect")
_reg("egce", lambda m, q: od.global_det(m, "egce", bool(q.pop("normalized", True))), "detect")
_reg("qgc", lambda m, q: od.global_det(m, "qgc", bool(q.pop("normalized", False))), "detect",
     NONNEG)
_reg("sgc", lambda m, q: od.global_det(m, "sgc", bool(q.pop("normalized", False))), "detect",
     NONNEG)

SUITES = {
    "classic": ["brier", "nll", "ece(binning=equal-width,bins=15)",
                "ece(binning=equal-mass,bins=15)", "mce", "ecce_mad"],
    "detect": ["ace", "dece", "laece0", "laace0", "egce", "qgc", "sgc"],
}


def _pce_bins(v, q):
    from .binned import get_bins
    groups = np.zeros(v.n, dtype=int)
    for b in get_bins(v, _binning(q)):
        groups[b.members] = b.index
    return bd.pce(v, [groups], q.pop("loss", "abs"))


def _no_features():
    raise MissingFeatures("piece needs per-point features, which file input does not carry")


def _link(s):
    if s == "identity":
        return s
    if s.startswith("threshold"):
        return ("threshold", float(s.split(":")[1]) if ":" in s else 0.5)
    raise ConfigError(f"unknown link {s!r}")


# ------------------------------------------------------------ metric specs


def _coerce(v: str):
    low = v.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("inf", "+inf"):
        return "inf"
    for t in (int, float):
        try:
            return t(v)
        except ValueError:
            pass
    return v


def split_top(s: str) -> List[str]:
    out, depth, cur = [], 0, ""
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    if depth != 0:
        raise ConfigError(f"unbalanced parentheses in {s!r}")
    if cur:
        out.append(cur)
    return [x.strip() for x in out if x.strip()]


def parse_metric(spec: str) -> Tuple[str, dict]:
    spec = spec.strip()
    if "(" in spec:
        if not spec.endswith(")"):
            raise ConfigError(f"bad metric spec {spec!r}")
        name, body = spec[:-1].split("(", 1)
        params = {}
        for item in split_top(body):
            if "=" not in item:
                raise ConfigError(f"metric parameter {item!r} needs key=value")
            k, v = item.split("=", 1)
            params[k.strip()] = _coerce(v.strip())
    else:
        name, params = spec, {}
    name = name.strip()
    if name not in REGISTRY:
        raise ConfigError(f"unknown metric {name!r}")
    return name, params


# ------------------------------------------------------------------ ingest


def ingest_classification(path: str, fmt: str = "csv") -> Dataset:
    """Read ``label,p0,...`` / ``label,confidence`` CSV or ``{"label", "probs"}`` JSONL."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    labels, rows = [], []
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        header = None
        for lineno, rec in enumerate(reader, start=1):
            if not rec or all(not x.strip() for x in rec):
                continue
            if header is None:
                header = [h.strip() for h in rec]
                if header[0] != "label" or len(header) < 2:
                    raise ParseError("header must start with 'label'", lineno)
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", lineno)
            try:
                lab = int(rec[0])
                vals = [float(x) for x in rec[1:]]
            except ValueError as exc:
                raise ParseError(f"bad number: {exc}", lineno) from None
            if len(vals) == 1:
                vals = [1.0 - vals[0], vals[0]]
            labels.append(lab)
            rows.append(vals)
        if header is None:
            raise ParseError("empty file")
    elif fmt == "jsonl":
        width = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                lab, probs = int(rec["label"]), [float(x) for x in rec["probs"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"bad record: {exc}", lineno) from None
            if width is not None and len(probs) != width:
                raise ParseError(f"expected {width} probabilities, got {len(probs)}", lineno)
            width = len(probs)
            labels.append(lab)
            rows.append(probs)
    else:
        raise ConfigError(f"unknown classification format {fmt!r}")
    if not rows:
        raise ParseError("no data rows")
    return make_dataset(np.array(labels), np.array(rows, dtype=float))


@dataclass
class DetectionInput:
    detections: List[od.Box]
    ground_truth: List[od.Box]
    image_sizes: Dict[str, Tuple[float, float]] = field(default_factory=dict)


def ingest_detections(path: str) -> DetectionInput:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.lineno) from None
    dets, gts, sizes = [], [], {}
    try:
        for img in doc["images"]:
            iid = str(img["id"])
            sizes[iid] = (float(img.get("width", 1.0)), float(img.get("height", 1.0)))
            for d in img.get("detections", []):
                dets.append(od.Box(float(d["x"]), float(d["y"]), float(d["w"]), float(d["h"]),
                                   int(d["class"]), float(d["score"]), iid))
            for g in img.get("ground_truth", []):
                gts.append(od.Box(float(g["x"]), float(g["y"]), float(g["w"]), float(g["h"]),
                                  int(g["class"]), None, iid))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad detection document: missing or invalid {exc}") from None
    return DetectionInput(dets, gts, sizes)


def dump_detections(inp: DetectionInput) -> dict:
    images = {}
    for iid, (w, h) in inp.image_sizes.items():
        images[iid] = {"id": iid, "width": w, "height": h, "detections": [], "ground_truth": []}
    for d in inp.detections:
        images.setdefault(d.image, {"id": d.image, "width": 1.0, "height": 1.0,
                                    "detections": [], "ground_truth": []})
        images[d.image]["detections"].append(
            {"x": d.x, "y": d.y, "w": d.w, "h": d.h, "class": d.cls, "score": d.score})
    for g in inp.ground_truth:
        images.setdefault(g.image, {"id": g.image, "width": 1.0, "height": 1.0,
                                    "detections": [], "ground_truth": []})
        images[g.image]["ground_truth"].append(
            {"x": g.x, "y": g.y, "w": g.w, "h": g.h, "class": g.cls})
    return {"images": list(images.values())}


# ------------------------------------------------------------------- runner


@dataclass
class RunConfig:
    input: str
    format: str = "csv"
    task: str = "classify"
    metrics: List[str] = field(default_factory=list)
    view: str = "top-label"
    bins: Optional[int] = None
    binning: Optional[str] = None
    seed: Optional[int] = None
    bootstrap: int = 0
    consistency: int = 0
    out_format: str = "json"
    diagrams: List[str] = field(default_factory=list)
    iou_threshold: float = 0.5


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def _views(ds: Dataset, mode: str):
    if mode == "top-label":
        return [top_label_view(ds)]
    if mode == "native-binary":
        if ds.k != 2:
            raise ConfigError("native-binary view needs K=2")
        return [ovr_view(ds, 1)]
    if mode == "classwise":
        return [ovr_view(ds, k) for k in range(ds.k)]
    raise ConfigError(f"unknown view {mode!r}")


def _evaluate(entry: MetricEntry, params: dict, subject, views) -> MetricResult:
    if entry.level in ("dataset", "detect"):
        return entry.fn(subject, dict(params))
    if len(views) == 1:
        return entry.fn(views[0], dict(params))
    per = [entry.fn(v, dict(params)) for v in views]
    return result(per[0].name, float(np.mean([r.value for r in per])), per[0].range,
                  per[0].orientation, per_class=[r.value for r in per])


def _resolve_params(entry, params, cfg):
    params = dict(params)
    if entry.level != "detect":
        if cfg.binning is not None and "binning" not in params:
            params["binning"] = cfg.binning
        if cfg.bins is not None and "bins" not in params:
            params["bins"] = cfg.bins
    if entry.stochastic:
        if "seed" not in params:
            if cfg.seed is None:
                raise ConfigError(f"metric {entry.name} is stochastic and needs --seed")
            params["seed"] = cfg.seed
    return params


def run_suite(cfg: RunConfig) -> Tuple[dict, int]:
    """Evaluate every requested metric; returns (report, exit code)."""
    specs = [parse_metric(m) for m in cfg.metrics]
    if not specs:
        raise ConfigError("no metrics requested")
    if (cfg.bootstrap or cfg.consistency) and cfg.seed is None:
        raise ConfigError("resampling needs --seed")
    resolved = []
    for name, params in specs:
        entry = REGISTRY[name]
        if (entry.level == "detect") != (cfg.task == "detect"):
            raise ConfigError(f"metric {name} does not apply to task {cfg.task}")
        resolved.append((entry, _resolve_params(entry, params, cfg)))

    if cfg.task == "detect":
        inp = ingest_detections(cfg.input)
        subject = od.match(inp.detections, inp.ground_truth, cfg.iou_threshold,
                           image_sizes=inp.image_sizes)
        views = []
        dataset_info = {"images": len(inp.image_sizes), "detections": len(inp.detections),
                        "ground_truth": len(inp.ground_truth), "tp": int(subject.tp.sum()),
                        "fp": int((~subject.tp).sum()), "fn": subject.fn_count,
                        "iou_threshold": cfg.iou_threshold}
    elif cfg.task == "classify":
        subject = ingest_classification(cfg.input, cfg.format)
        views = _views(subject, cfg.view)
        dataset_info = {"n": subject.n, "k": subject.k, "view": cfg.view,
                        "class_counts": np.bincount(subject.labels, minlength=subject.k).tolist()}
    else:
        raise ConfigError(f"unknown task {cfg.task!r}")

    metrics, failed = [], False
    for entry, params in resolved:
        shown = {k: v for k, v in params.items()}
        try:
            res = _evaluate(entry, params, subject, views)
            if cfg.task == "classify" and (cfg.bootstrap or cfg.consistency):
                kind = "bootstrap" if cfg.bootstrap else "consistency"
                rounds = cfg.bootstrap or cfg.consistency
                rs = ResampleSpec(kind, rounds, cfg.seed)
                if entry.level == "dataset":
                    res = resample_ci(lambda d: entry.fn(d, dict(params)), subject, rs)
                elif len(views) == 1:
                    res = resample_ci(lambda v: entry.fn(v, dict(params)), views[0], rs)
            rec = {"name": entry.name, "value": res.value, "range": list(entry.range),
                   "orientation": entry.orientation}
            if res.p_value is not None:
                rec["p_value"] = res.p_value
            if res.ci is not None:
                rec["ci"] = list(res.ci)
            rec["params"] = shown
        except CalmetError as exc:
            failed = True
            rec = {"name": entry.name, "error": f"{type(exc).__name__}: {exc}", "params": shown}
        metrics.append(rec)

    diagrams = {}
    for dname in cfg.diagrams:
        if cfg.task != "classify":
            raise ConfigError("diagrams are available for classification input only")
        try:
            diagrams[dname] = _diagram(dname, subject, views, cfg)
        except CalmetError as exc:
            failed = True
            diagrams[dname] = {"error": f"{type(exc).__name__}: {exc}"}

    report = {"schema_version": SCHEMA_VERSION, "task": cfg.task, "dataset": dataset_info,
              "metrics": metrics}
    if cfg.diagrams:
        report["diagrams"] = diagrams
    return _jsonable(report), (2 if failed else 0)


def _diagram(name, ds, views, cfg):
    if name == "reliability" or name.startswith("reliability:"):
        style = name.split(":", 1)[1] if ":" in name else "line"
        spec = BinningSpec(cfg.binning or "equal-width", cfg.bins or 15)
        t = rp.reliability_table(views[0], spec, style)
        return {"meta": t.meta, "rows": t.rows}
    if name == "simplex":
        t = rp.simplex_table(ds)
        return {"meta": t.meta, "rows": t.rows}
    if name == "brier":
        view = views[0]
        t = rp.brier_curve(view).table()
        return {"meta": t.meta, "rows": t.rows}
    raise ConfigError(f"unknown diagram {name!r}")


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, allow_nan=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "value", "range_lo", "range_hi", "orientation", "p_value",
                    "ci_lo", "ci_hi", "error"])
        for m in report["metrics"]:
            ci = m.get("ci", ["", ""])
            rng = m.get("range", ["", ""])
            w.writerow([m["name"], _csv_num(m.get("value", "")), _csv_num(rng[0]),
                        _csv_num(rng[1]), m.get("orientation", ""), _csv_num(m.get("p_value", "")),
                        _csv_num(ci[0]), _csv_num(ci[1]), m.get("error", "")])
        return buf.getvalue()
    raise ConfigError(f"unknown output format {fmt!r}")


def _csv_num(x):
    return repr(x) if isinstance(x, float) else x


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="calmet", description="Probability calibration metrics.")
    ap.add_argument("--input", required=True)
    ap.add_argument("--format", default="csv", choices=["csv", "jsonl", "json"])
    ap.add_argument("--task", default="classify", choices=["classify", "detect"])
    ap.add_argument("--metrics", default=None, help="comma list, e.g. ece(bins=10),brier")
    ap.add_argument("--suite", default=None, choices=sorted(SUITES))
    ap.add_argument("--view", default="top-label",
                    choices=["top-label", "classwise", "native-binary"])
    ap.add_argument("--bins", type=int, default=None)
    ap.add_argument("--binning", default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--bootstrap", type=int, default=0, metavar="R")
    ap.add_argument("--consistency", type=int, default=0, metavar="R")
    ap.add_argument("--out", default=None)
    ap.add_argument("--out-format", default="json", choices=["json", "csv"])
    ap.add_argument("--diagrams", default=None, help="comma list: reliability[:style],brier,simplex")
    ap.add_argument("--iou-threshold", type=float, default=0.5)
    return ap


def config_from_args(args) -> RunConfig:
    metrics = []
    if args.suite:
        metrics += SUITES[args.suite]
    if args.metrics:
        metrics += split_top(args.metrics)
    if not metrics:
        metrics = list(SUITES["detect" if args.task == "detect" else "classic"])
    seed = args.seed
    if seed is None and os.environ.get("CALMET_SEED", "").strip():
        try:
            seed = int(os.environ["CALMET_SEED"])
        except ValueError:
            raise ConfigError("CALMET_SEED must be an integer") from None
    if args.bootstrap and args.consistency:
        raise ConfigError("choose --bootstrap or --consistency, not both")
    return RunConfig(args.input, args.format, args.task, metrics, args.view, args.bins,
                     args.binning, seed, args.bootstrap, args.consistency, args.out_format,
                     split_top(args.diagrams) if args.diagrams else [], args.iou_threshold)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        report, code = run_suite(cfg)
        text = render(report, cfg.out_format)
    except (ConfigError, ParseError, CalmetError, OSError) as exc:
        print(f"calmet: error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
