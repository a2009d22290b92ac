"""Markdown summary and CSV bundles from stored metrics."""
from __future__ import annotations

import csv
import json
from pathlib import Path

METRICS_GLOB = "metrics_*_q*.json"


def _fmt(x, digits=4):
    if x is None:
        return "n/a"
    if isinstance(x, float):
        return f"{x:.{digits}g}"
    return str(x)


def _pct(x):
    return "n/a" if x is None else f"{100.0 * x:.2f}"


def load_metrics(run_dir) -> list:
    out = []
    for p in sorted(Path(run_dir).glob(METRICS_GLOB)):
        out.append(json.loads(p.read_text()))
    return out


def write_report(metrics: list, report_dir) -> Path:
    """Write ``summary.md``, ``scatter_q{Q}.csv`` and ``grade_errors.csv``."""
    out = Path(report_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = out / "summary.md"
    evaluated = [m for m in metrics if m["n_samples"] > 0]
    if not evaluated:
        summary.write_text("# vFFR surrogate report\n\nno samples: the test set is empty, nothing was evaluated.\n")
        return summary
    lines = ["# vFFR surrogate report", ""]
    lines += ["## Pressure-drop regression (per-sample statistics over the test set)", "",
              "| variant | Q (ml/s) | samples | MAE mean | MAE median | MAE p75 | NMAE mean (%) | NMAE median (%) | NMAE p75 (%) | pooled NMAE (%) | R2 |",
              "|---|---|---|---|---|---|---|---|---|---|---|"]
    for m in evaluated:
        a, n = m["mae_stats"], m["nmae_stats"]
        lines.append(
            f"| {m['variant']} | {_fmt(m['inflow'])} | {m['n_samples']} | {_fmt(a['mean'])} | "
            f"{_fmt(a['median'])} | {_fmt(a['p75'])} | {_pct(n['mean'])} | {_pct(n['median'])} | "
            f"{_pct(n['p75'])} | {_pct(m['nmae'])} | {_fmt(m['r2'])} |")
    lines += ["", "## vFFR MAE by inlet pressure", "",
              "| variant | Q (ml/s) | p_in (mmHg) | mean | median | p75 |", "|---|---|---|---|---|---|"]
    for m in evaluated:
        for p, st in m["vffr_mae"].items():
            lines.append(f"| {m['variant']} | {_fmt(m['inflow'])} | {_fmt(float(p))} | "
                         f"{_fmt(st['mean'])} | {_fmt(st['median'])} | {_fmt(st['p75'])} |")
    lines += ["", f"## Lesion classification (significant if vFFR <= threshold)", "",
              "| variant | Q (ml/s) | p_in | threshold | lesions | TP | TN | FP | FN | accuracy (%) | F1 (%) | precision (%) | recall (%) |",
              "|---|---|---|---|---|---|---|---|---|---|---|---|---|"]
    for m in evaluated:
        c = m["classification"]
        lines.append(
            f"| {m['variant']} | {_fmt(m['inflow'])} | {_fmt(m['lesion_p_in'])} | {_fmt(m['threshold'])} | "
            f"{c['n']} | {c['tp']} | {c['tn']} | {c['fp']} | {c['fn']} | {_pct(c['accuracy'])} | "
            f"{_pct(c['f1'])} | {_pct(c['precision'])} | {_pct(c['recall'])} |")
    lesions = {m["n_lesions"] for m in evaluated}
    pairs = {}
    for m in evaluated:
        pairs.setdefault(m["variant"], 0)
        pairs[m["variant"]] += m["n_lesion_inflow_pairs"]
    lines += ["", "## Lesion counts", "",
              f"- distinct lesions in the test set: {', '.join(str(x) for x in sorted(lesions))}",
              "- lesion-inflow pairs evaluated: "
              + ", ".join(f"{v}: {n}" for v, n in sorted(pairs.items())), ""]
    lines += ["## Absolute vFFR error per CAD-RADS bin", "",
              "| variant | Q (ml/s) | grade bin (%) | lesions | mean | median | p75 |", "|---|---|---|---|---|---|---|"]
    for m in evaluated:
        for b, st in m["grade_errors"].items():
            lines.append(f"| {m['variant']} | {_fmt(m['inflow'])} | {b} | {st['count']} | "
                         f"{_fmt(st['mean'])} | {_fmt(st['median'])} | {_fmt(st['p75'])} |")
    summary.write_text("\n".join(lines) + "\n")

    by_q = {}
    for m in evaluated:
        by_q.setdefault(int(m["inflow"]), []).append(m)
    for q, ms in sorted(by_q.items()):
        with open(out / f"scatter_q{q}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variant", "sample", "lesion", "grade", "cad_rads_bin", "vffr_cfd", "vffr_ai"])
            for m in ms:
                for r in m["lesions"]:
                    w.writerow([m["variant"], r["sample"], r["index"], r["grade"], r["cad_rads_bin"],
                                repr(r["vffr_true"]), repr(r["vffr_pred"])])
    with open(out / "grade_errors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "inflow", "grade_bin", "count", "mean", "median", "p25", "p75", "min", "max"])
        for m in evaluated:
            for b, st in m["grade_errors"].items():
                w.writerow([m["variant"], m["inflow"], b, st["count"]]
                           + [repr(st.get(k)) if st.get(k) is not None else ""
                              for k in ("mean", "median", "p25", "p75", "min", "max")])
    return summary
