"""Chunked, repeated whole-cloud inference."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from vffr import hemosolver as hs


def _entropy(seed, *more) -> list:
    return [int(x) for x in np.atleast_1d(seed)] + [int(m) for m in more]


def chunk_partition(n: int, chunk_size: int, seed) -> list:
    """Random partition of ``range(n)`` into chunks of ``chunk_size`` (last may be smaller)."""
    if n <= chunk_size:
        return [np.arange(n)]
    perm = np.random.default_rng(_entropy(seed)).permutation(n)
    return [perm[lo:lo + chunk_size] for lo in range(0, n, chunk_size)]


def infer_cloud(model, features, chunk_size: int, repetitions: int, seed=0,
                return_counts=False):
    """Mean over ``repetitions`` random partitions of per-chunk predictions.

    ``model`` only needs ``predict(features) -> (n,)``.  A cloud no larger
    than one chunk is predicted in a single pass.
    """
    features = np.asarray(features, dtype=np.float64)
    n = len(features)
    total = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    reps = 1 if n <= chunk_size else repetitions
    for rep in range(reps):
        for idx in chunk_partition(n, chunk_size, _entropy(seed, rep)):
            total[idx] += model.predict(features[idx])
            counts[idx] += 1
    pred = total / counts
    return (pred, counts) if return_counts else pred


def infer_samples(model, samples, cfg, inflow) -> dict:
    """Predicted per-vertex drops (kinematic units) keyed by sample name."""
    out = {}
    for i, s in enumerate(samples):
        cloud = s.cloud()
        out[s.name] = infer_cloud(model, cloud.features, cfg.chunk_size, cfg.repetitions,
                                  seed=[cfg.seed, 1000 + i])
    return out


def reconstruct_vffr(drops, p_in_list=(80.0, 100.0, 120.0), fluid=hs.FluidModel()) -> dict:
    """vFFR per inlet pressure (mmHg) from a drop field."""
    return {float(p): hs.compute_vffr(drops, p, fluid)[0] for p in p_in_list}


def save_predictions(path, preds: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **preds)


def load_predictions(path) -> dict:
    with np.load(path) as z:
        return {k: z[k].copy() for k in z.files}
