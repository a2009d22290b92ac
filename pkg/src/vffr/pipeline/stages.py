"""Stage functions shared by the CLI and the end-to-end desk run."""
from __future__ import annotations

import json
import logging
import time
from pathlib import Path

from vffr.nnet import load_checkpoint
from vffr.pipeline import dataset as ds
from vffr.pipeline.config import RunConfig
from vffr.pipeline.evaluate import evaluate
from vffr.pipeline.infer import infer_samples, load_predictions, save_predictions
from vffr.pipeline.report import load_metrics, write_report
from vffr.pipeline.train import train

log = logging.getLogger(__name__)


def _tag(variant, inflow):
    return f"{variant}_q{int(inflow)}"


def predictions_path(cfg: RunConfig, variant, inflow) -> Path:
    return Path(cfg.run_dir) / f"pred_{_tag(variant, inflow)}.npz"


def metrics_path(cfg: RunConfig, variant, inflow) -> Path:
    return Path(cfg.run_dir) / f"metrics_{_tag(variant, inflow)}.json"


def test_samples(cfg: RunConfig) -> list:
    man = ds.load_manifest(cfg.dataset_dir)
    return [ds.load_sample(cfg.dataset_dir, n) for n in man["splits"]["test"]]


def stage_generate(cfg: RunConfig) -> dict:
    return ds.build_dataset(cfg)


def stage_train(cfg: RunConfig, variant, inflow):
    return train(cfg, variant=variant, inflow=inflow)


def stage_infer(cfg: RunConfig, variant, inflow) -> dict:
    model, _, _ = load_checkpoint(cfg.checkpoint_path(variant, inflow))
    preds = infer_samples(model, test_samples(cfg), cfg, inflow)
    save_predictions(predictions_path(cfg, variant, inflow), preds)
    return preds


def stage_evaluate(cfg: RunConfig, variant, inflow):
    samples = test_samples(cfg)
    preds = load_predictions(predictions_path(cfg, variant, inflow)) if samples else {}
    rep = evaluate(preds, samples, inflow, variant=variant, p_in_list=cfg.p_in,
                   lesion_p_in=cfg.lesion_p_in, threshold=cfg.threshold)
    path = metrics_path(cfg, variant, inflow)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(rep.to_dict(), indent=1, sort_keys=True) + "\n")
    return rep


def stage_report(cfg: RunConfig) -> Path:
    return write_report(load_metrics(cfg.run_dir), cfg.report_dir)


def run_all(cfg: RunConfig, variants=("msg", "evg"), inflows=None, generate=True) -> dict:
    """generate -> (train -> infer -> evaluate) per variant/inflow -> report.

    Wall-clock timings go to ``runtime.json`` in the report directory, kept
    apart from the metric files so that those stay reproducible.
    """
    inflows = tuple(inflows or cfg.inflows)
    times = {}
    t0 = time.perf_counter()
    if generate:
        stage_generate(cfg)
        times["generate"] = time.perf_counter() - t0
    reports = {}
    for v in variants:
        for q in inflows:
            t = time.perf_counter()
            stage_train(cfg, v, q)
            times[f"train_{_tag(v, q)}"] = time.perf_counter() - t
            t = time.perf_counter()
            stage_infer(cfg, v, q)
            reports[(v, q)] = stage_evaluate(cfg, v, q)
            times[f"infer_eval_{_tag(v, q)}"] = time.perf_counter() - t
    stage_report(cfg)
    times["total"] = time.perf_counter() - t0
    Path(cfg.report_dir).mkdir(parents=True, exist_ok=True)
    (Path(cfg.report_dir) / "runtime.json").write_text(json.dumps(times, indent=1, sort_keys=True) + "\n")
    return {"reports": reports, "seconds": times}
