"""Run configuration, loadable from TOML with the same field names."""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from vffr.hemosolver import INFLOWS_ML_S


@dataclass
class RunConfig:
    dataset_dir: str = "dataset"
    run_dir: str = "run"
    report_dir: str = "report"
    n_train: int = 30
    n_val: int = 0
    n_test: int = 5
    inflows: tuple = INFLOWS_ML_S
    variant: str = "msg"
    net_preset: str = "desk"
    epochs: int = 200
    batch_size: int = 8
    lr: float = 0.001
    subsample: int = 4096
    chunk_size: int = 4096
    repetitions: int = 10
    seed: int = 0
    p_in: tuple = (80.0, 100.0, 120.0)
    lesion_p_in: float = 100.0
    threshold: float = 0.8
    rings_per_node: int = 24
    reject_p_in: float = 80.0
    reject_inflow: float = 3.0
    max_resamples: int = 20
    generator: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inflows = tuple(self.inflows)
        self.p_in = tuple(float(p) for p in self.p_in)
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise ValueError("split sizes must be non-negative")
        if self.variant not in ("msg", "evg"):
            raise ValueError(f"variant must be msg or evg, got {self.variant!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.subsample < 1 or self.chunk_size < 1:
            raise ValueError("epochs >= 0, batch_size, subsample and chunk_size >= 1 required")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        bad = [q for q in self.inflows if q not in INFLOWS_ML_S]
        if bad:
            raise ValueError(f"unsupported inflow(s) {bad}; choose from {INFLOWS_ML_S}")

    @property
    def n_samples(self) -> int:
        return self.n_train + self.n_val + self.n_test

    @classmethod
    def thesis_scale(cls, **kw) -> "RunConfig":
        """Full-size settings: 1500/100/100 split, 20000 points, 500 epochs."""
        base = dict(n_train=1500, n_val=100, n_test=100, epochs=500, subsample=20000,
                    chunk_size=20000, net_preset="default")
        base.update(kw)
        return cls(**base)

    @classmethod
    def from_toml(cls, path, **overrides) -> "RunConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def checkpoint_path(self, variant=None, inflow=3) -> Path:
        return Path(self.run_dir) / f"model_{variant or self.variant}_q{int(inflow)}.ckpt"
