"""Regression and lesion-classification metrics."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from vffr import hemosolver as hs
from vffr import pcops
from vffr.vesselgen import CAD_RADS_BINS, grade_bin

LESION_WINDOW = 0.005  # m downstream of the lesion end


def _pair(y, yhat):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    if y.shape != yhat.shape:
        raise ValueError(f"misaligned sizes: {y.size} labels vs {yhat.size} predictions")
    if y.size == 0:
        raise ValueError("empty label set")
    return y, yhat


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def nmae(y, yhat, y_max) -> float:
    """MAE divided by the test-set-wide maximum absolute label."""
    if not y_max > 0:
        raise ValueError("y_max must be positive")
    return mae(y, yhat) / float(y_max)


def r2_score(y, yhat) -> float:
    """Coefficient of determination; a constant target scores 1 only if matched exactly."""
    y, yhat = _pair(y, yhat)
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def summary_stats(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return {"mean": None, "median": None, "p75": None}
    return {"mean": float(np.mean(v)), "median": float(np.median(v)),
            "p75": float(np.percentile(v, 75))}


def classification(truth, pred) -> dict:
    """Counts and rates with the significant class as positive.

    An empty denominator (no predicted or no actual positives) scores 1 when
    it reflects a correct outcome, which keeps perfect predictions at 1.
    """
    t = np.asarray(truth, dtype=bool)
    p = np.asarray(pred, dtype=bool)
    tp = int(np.sum(t & p))
    tn = int(np.sum(~t & ~p))
    fp = int(np.sum(~t & p))
    fn = int(np.sum(t & ~p))
    n = tp + tn + fp + fn
    precision = tp / (tp + fp) if tp + fp else (1.0 if fn == 0 else 0.0)
    recall = tp / (tp + fn) if tp + fn else (1.0 if fp == 0 else 0.0)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "tp": tp, "tn": tn, "fp": fp, "fn": fn, "n": n,
        "accuracy": (tp + tn) / n if n else None,
        "precision": precision if n else None,
        "recall": recall if n else None,
        "f1": f1 if n else None,
    }


def lesion_vertices(sample, spec, nearest_node=None, window=LESION_WINDOW) -> np.ndarray:
    """Surface vertices whose nearest centerline node lies on the lesion's
    branch within ``[end, end + window]`` of arclength."""
    tree = sample.tree
    if nearest_node is None:
        nearest_node = pcops.knn(tree.positions, sample.mesh.vertices, 1)[0][:, 0]
    nodes, s = tree.branch_arclength(spec.branch_id)
    step = s[1] - s[0] if len(s) > 1 else 1.0
    tol = 1e-9 * step
    sel = nodes[(s >= spec.end - tol) & (s <= spec.end + window + tol)]
    return np.flatnonzero(np.isin(nearest_node, sel))


@dataclass
class LesionRecord:
    sample: str
    index: int
    grade: float
    cad_rads_bin: int
    n_vertices: int
    vffr_true: float
    vffr_pred: float

    @property
    def abs_error(self):
        return abs(self.vffr_true - self.vffr_pred)


@dataclass
class MetricsReport:
    variant: str
    inflow: float
    n_samples: int
    n_points: int
    y_max: float | None
    mae: float | None
    nmae: float | None
    r2: float | None
    per_sample_mae: dict = field(default_factory=dict)
    per_sample_nmae: dict = field(default_factory=dict)
    mae_stats: dict = field(default_factory=dict)
    nmae_stats: dict = field(default_factory=dict)
    vffr_mae: dict = field(default_factory=dict)  # p_in -> stats over samples
    classification: dict = field(default_factory=dict)
    lesions: list = field(default_factory=list)
    grade_errors: dict = field(default_factory=dict)
    n_lesions: int = 0
    n_lesion_inflow_pairs: int = 0
    threshold: float = 0.8
    lesion_p_in: float = 100.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lesions"] = [asdict(r) for r in self.lesions]
        return d


def evaluate(predictions: dict, samples, inflow, variant="msg", p_in_list=(80.0, 100.0, 120.0),
             lesion_p_in=100.0, threshold=0.8, fluid=hs.FluidModel()) -> MetricsReport:
    """Score predicted drop fields against the stored labels of ``samples``."""
    samples = list(samples)
    rep = MetricsReport(variant=variant, inflow=float(inflow), n_samples=len(samples), n_points=0,
                        y_max=None, mae=None, nmae=None, r2=None, threshold=threshold,
                        lesion_p_in=float(lesion_p_in))
    if not samples:
        return rep
    labels = {s.name: s.mesh.channels[f"drop_q{int(inflow)}"] for s in samples}
    for s in samples:
        _pair(labels[s.name], predictions[s.name])
    y_all = np.concatenate([labels[s.name] for s in samples])
    p_all = np.concatenate([np.asarray(predictions[s.name], dtype=np.float64) for s in samples])
    y_max = float(np.max(np.abs(y_all)))
    rep.n_points = int(y_all.size)
    rep.y_max = y_max
    rep.mae = mae(y_all, p_all)
    rep.nmae = rep.mae / y_max if y_max > 0 else None
    rep.r2 = r2_score(y_all, p_all)
    vffr_err = {float(p): [] for p in p_in_list}
    truth, pred = [], []
    for s in samples:
        y, yh = labels[s.name], np.asarray(predictions[s.name], dtype=np.float64)
        m = mae(y, yh)
        rep.per_sample_mae[s.name] = m
        rep.per_sample_nmae[s.name] = m / y_max if y_max > 0 else None
        for p in p_in_list:
            vt, _ = hs.compute_vffr(y, p, fluid)
            vp, _ = hs.compute_vffr(yh, p, fluid)
            vffr_err[float(p)].append(mae(vt, vp))
        vt, _ = hs.compute_vffr(y, lesion_p_in, fluid)
        vp, _ = hs.compute_vffr(yh, lesion_p_in, fluid)
        nearest = pcops.knn(s.tree.positions, s.mesh.vertices, 1)[0][:, 0]
        for k, spec in enumerate(s.tree.stenoses):
            ids = lesion_vertices(s, spec, nearest)
            if ids.size == 0:
                continue
            rec = LesionRecord(s.name, k, float(spec.grade), grade_bin(spec.grade), int(ids.size),
                               float(np.mean(vt[ids])), float(np.mean(vp[ids])))
            rep.lesions.append(rec)
            truth.append(rec.vffr_true <= threshold)
            pred.append(rec.vffr_pred <= threshold)
    rep.mae_stats = summary_stats(list(rep.per_sample_mae.values()))
    rep.nmae_stats = summary_stats([v for v in rep.per_sample_nmae.values() if v is not None])
    rep.vffr_mae = {str(p): summary_stats(v) for p, v in vffr_err.items()}
    rep.classification = classification(truth, pred)
    rep.n_lesions = len(rep.lesions)
    rep.n_lesion_inflow_pairs = len(rep.lesions)
    for b, (lo, hi) in enumerate(CAD_RADS_BINS):
        errs = [r.abs_error for r in rep.lesions if r.cad_rads_bin == b]
        stats = summary_stats(errs)
        if errs:
            stats.update({"p25": float(np.percentile(errs, 25)), "min": float(np.min(errs)),
                          "max": float(np.max(errs))})
        rep.grade_errors[f"{lo}-{hi}"] = {"count": len(errs), **stats}
    return rep
