"""Mini-batch training with per-item subsampling and rotation augmentation."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from vffr.features import subsample
from vffr.nnet import Adam, NetConfig, PointNetRegressor, mse_loss, no_grad, random_rotation
from vffr.nnet.autograd import mul
from vffr.nnet.checkpoint import save_checkpoint
from vffr.pipeline.config import RunConfig
from vffr.pipeline.dataset import load_manifest, load_sample

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch, sample_ids):
        super().__init__(f"non-finite loss at epoch {epoch}; batch samples {sample_ids}")
        self.epoch = epoch
        self.sample_ids = list(sample_ids)


@dataclass
class TrainResult:
    checkpoint: Path
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    best_epoch: int = -1
    seconds: float = 0.0


def item_seed(seed, epoch, idx, stream):
    return [int(seed), int(epoch), int(idx), int(stream)]


def augmented(cloud, cfg: RunConfig, epoch: int, idx: int):
    c = subsample(cloud, cfg.subsample, item_seed(cfg.seed, epoch, idx, 0))
    return random_rotation(c, item_seed(cfg.seed, epoch, idx, 1))


def model_seed(cfg: RunConfig, inflow) -> list:
    return [int(cfg.seed), 7, int(inflow)]


def fit(model: PointNetRegressor, clouds: dict, cfg: RunConfig, val_clouds=None,
        checkpoint=None, epochs=None, log_path=None, optimizer=None) -> TrainResult:
    """Train on ``clouds`` (name -> labelled FeaturedPointCloud).

    The loss of a batch is the mean of its per-sample MSEs.  When a
    validation set is given the best-validation parameters are checkpointed,
    otherwise the final ones are.
    """
    epochs = cfg.epochs if epochs is None else epochs
    opt = optimizer or Adam(model.params, lr=cfg.lr)
    names = sorted(clouds)
    index = {n: i for i, n in enumerate(names)}
    res = TrainResult(checkpoint=Path(checkpoint) if checkpoint else None)
    best = np.inf
    t0 = time.perf_counter()
    rows = []
    for epoch in range(epochs):
        order = np.random.default_rng([int(cfg.seed), int(epoch)]).permutation(len(names))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = [names[k] for k in order[lo:lo + cfg.batch_size]]
            opt.zero_grad()
            for name in batch:
                c = augmented(clouds[name], cfg, epoch, index[name])
                loss = mse_loss(model.forward(c.features), c.labels)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDiverged(epoch, batch)
                losses.append(value)
                mul(loss, 1.0 / len(batch)).backward()
            opt.step()
        train = float(np.mean(losses)) if losses else float("nan")
        res.train_mse.append(train)
        val = float("nan")
        if val_clouds:
            val = validation_mse(model, val_clouds, cfg)
            res.val_mse.append(val)
            if val < best:
                best = val
                res.best_epoch = epoch
                if checkpoint:
                    save_checkpoint(checkpoint, model, opt, extra={"epoch": epoch, "val_mse": val})
        rows.append((epoch, train, val))
        log.info("epoch %d train %.6g val %.6g", epoch, train, val)
    if checkpoint and not val_clouds:
        res.best_epoch = epochs - 1
        save_checkpoint(checkpoint, model, opt, extra={"epoch": epochs - 1})
    res.seconds = time.perf_counter() - t0
    if log_path:
        with open(log_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_mse", "val_mse"])
            for e, tr, va in rows:
                w.writerow([e, repr(tr), repr(va)])
    return res


def validation_mse(model, clouds: dict, cfg: RunConfig) -> float:
    """Mean per-sample MSE on fixed, unrotated subsamples."""
    out = []
    with no_grad():
        for i, name in enumerate(sorted(clouds)):
            c = subsample(clouds[name], cfg.subsample, item_seed(cfg.seed, 0, i, 2))
            out.append(float(mse_loss(model.forward(c.features), c.labels).data))
    return float(np.mean(out))


def train(cfg: RunConfig, variant=None, inflow=3, dataset_dir=None) -> TrainResult:
    variant = variant or cfg.variant
    root = Path(dataset_dir or cfg.dataset_dir)
    man = load_manifest(root)
    clouds = {n: load_sample(root, n).cloud(inflow) for n in man["splits"]["train"]}
    val = {n: load_sample(root, n).cloud(inflow) for n in man["splits"]["val"]}
    if not clouds:
        raise ValueError("training split is empty")
    run = Path(cfg.run_dir)
    run.mkdir(parents=True, exist_ok=True)
    model = PointNetRegressor(NetConfig.preset(cfg.net_preset, variant), seed=model_seed(cfg, inflow))
    return fit(model, clouds, cfg, val_clouds=val or None,
               checkpoint=cfg.checkpoint_path(variant, inflow),
               log_path=run / f"train_log_{variant}_q{int(inflow)}.csv")
