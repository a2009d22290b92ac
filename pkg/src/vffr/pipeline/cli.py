"""Command line entry point: ``vffr <stage> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys

from vffr.hemosolver import INFLOWS_ML_S
from vffr.pipeline import stages
from vffr.pipeline.config import RunConfig

STAGES = ("generate", "featurize", "train", "infer", "evaluate", "report")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vffr", description="Synthetic vFFR surrogate pipeline")
    ap.add_argument("stage", choices=STAGES)
    ap.add_argument("--config", help="TOML file with RunConfig fields")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--variant", choices=("msg", "evg"))
    ap.add_argument("--inflow", type=int, choices=INFLOWS_ML_S,
                    help="inflow in ml/s (default: every configured inflow)")
    ap.add_argument("--p-in", type=float, action="append", dest="p_in",
                    help="inlet pressure in mmHg for vFFR reports (repeatable)")
    ap.add_argument("--out", help="output directory (dataset for generate, run dir otherwise)")
    ap.add_argument("--dataset", help="dataset directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def make_config(args) -> RunConfig:
    over = {"seed": args.seed, "variant": args.variant,
            "p_in": tuple(args.p_in) if args.p_in else None, "dataset_dir": args.dataset}
    if args.out:
        key = "dataset_dir" if args.stage in ("generate", "featurize") else (
            "report_dir" if args.stage == "report" else "run_dir")
        over[key] = args.out
    if args.config:
        return RunConfig.from_toml(args.config, **over)
    return RunConfig(**{k: v for k, v in over.items() if v is not None})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
    except (ValueError, OSError) as exc:
        print(f"vffr: configuration error: {exc}", file=sys.stderr)
        return 2
    inflows = (args.inflow,) if args.inflow else cfg.inflows
    if args.stage == "generate":
        man = stages.stage_generate(cfg)
        print(f"{len(man['samples'])} samples written to {cfg.dataset_dir} "
              f"({len(man['failures'])} failures, {len(man['rejections'])} redraws)")
    elif args.stage == "featurize":
        from vffr.pipeline.dataset import featurize_dataset
        changed = featurize_dataset(cfg.dataset_dir)
        print(f"{len(changed)} samples re-featurized")
    elif args.stage == "train":
        for q in inflows:
            res = stages.stage_train(cfg, cfg.variant, q)
            print(f"{cfg.variant} Q={q}: final train MSE {res.train_mse[-1] if res.train_mse else float('nan'):.6g}"
                  f" -> {res.checkpoint}")
    elif args.stage == "infer":
        for q in inflows:
            preds = stages.stage_infer(cfg, cfg.variant, q)
            print(f"{cfg.variant} Q={q}: predicted {len(preds)} samples")
    elif args.stage == "evaluate":
        for q in inflows:
            rep = stages.stage_evaluate(cfg, cfg.variant, q)
            if rep.n_samples == 0:
                print(f"{cfg.variant} Q={q}: no samples in the test split")
            else:
                print(f"{cfg.variant} Q={q}: NMAE {100 * rep.nmae:.2f}% R2 {rep.r2:.4f} "
                      f"lesion accuracy {rep.classification['accuracy']}")
    elif args.stage == "report":
        print(stages.stage_report(cfg))
    return 0


if __name__ == "__main__":
    sys.exit(main())
