"""PointNet++ regressor: seven set-abstraction levels, seven feature-propagation
levels and a two-layer shared-MLP head producing one scalar per point."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from vffr import pcops
from vffr.nnet import autograd as ag
from vffr.nnet.autograd import Tensor

VARIANTS = ("msg", "evg")
N_LEVELS = 7
F_IN = 5
F_OUT = 1

# grouping radii per level in normalised units; None groups every point
RADII_1 = (0.04, 0.04, 0.08, 0.16, 0.24, 0.6, None)
RADII_2 = (0.08, 0.08, 0.16, 0.24, 0.32, 0.8, None)
EVG_HALF_LENGTH = (0.001, 0.002)
EVG_K = (64, 64)


def _widths(x):
    return tuple(tuple(tuple(int(c) for c in s) for s in blk) for blk in x)


@dataclass(frozen=True)
class NetConfig:
    variant: str = "msg"
    n_ref: int = 4096
    sample_counts: tuple = (1024, 512, 256, 128, 64, 16, 1)
    radii: tuple = (RADII_1, RADII_2)
    max_k: tuple = (32, 64)
    evg_half_length: tuple = EVG_HALF_LENGTH
    evg_k: tuple = EVG_K
    sa_widths: tuple = (
        ((32, 32, 64), (32, 32, 64)),
        ((32, 32, 64), (32, 32, 64)),
        ((64, 64, 128), (64, 64, 128)),
        ((64, 64, 128), (64, 64, 128)),
        ((128, 128, 128), (128, 128, 128)),
        ((128, 128, 128), (128, 128, 128)),
        ((128, 128, 128), (128, 128, 128)),
    )
    fp_widths: tuple = ((256, 256), (256, 256), (256, 256), (256, 128), (128, 128), (128, 128), (128, 128))
    head: tuple = (64, F_OUT)
    normalize_offsets: bool = False
    input_gain: tuple = (1.0,) * F_IN
    zero_head: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if len(self.sample_counts) != N_LEVELS or len(self.sa_widths) != N_LEVELS:
            raise ValueError("seven SA levels are required")
        if len(self.fp_widths) != N_LEVELS:
            raise ValueError("seven FP levels are required")
        if any(b >= a for a, b in zip(self.sample_counts, self.sample_counts[1:])):
            raise ValueError("sample counts must strictly decrease")
        if self.sample_counts[-1] != 1 or self.radii[0][-1] is not None:
            raise ValueError("the last SA level must group all points")
        if self.head[-1] != F_OUT:
            raise ValueError("head must end in a single output channel")

    @property
    def bottleneck(self) -> int:
        return sum(s[-1] for s in self.sa_widths[-1])

    def evg_params(self, level: int, scale: int, n_points: int) -> pcops.EvgParams:
        """EVG grouping at ``level``; k is capped by the level's point count."""
        return pcops.EvgParams(
            k=min(self.evg_k[scale], n_points),
            half_length=self.evg_half_length[scale],
            radius=self.radii[scale][level],
            max_k=self.max_k[scale],
        )

    def counts_for(self, n: int) -> list[int]:
        """Per-level sample counts for an ``n``-point cloud.

        Reference counts scale with ``n / n_ref``; the schedule is then made
        strictly decreasing from the single group-all center upwards, and
        capped at ``n``.
        """
        scaled = [max(1, int(round(c * n / self.n_ref))) for c in self.sample_counts]
        out = [1] * N_LEVELS
        for i in range(N_LEVELS - 2, -1, -1):
            out[i] = max(scaled[i], out[i + 1] + 1)
        prev = n
        for i in range(N_LEVELS):
            out[i] = min(out[i], prev)
            prev = out[i]
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        for key in ("sample_counts", "max_k", "evg_half_length", "evg_k", "head", "input_gain"):
            if key in d:
                d[key] = tuple(d[key])
        if "radii" in d:
            d["radii"] = tuple(tuple(r) for r in d["radii"])
        if "sa_widths" in d:
            d["sa_widths"] = _widths(d["sa_widths"])
        if "fp_widths" in d:
            d["fp_widths"] = tuple(tuple(int(c) for c in f) for f in d["fp_widths"])
        return cls(**d)

    @classmethod
    def preset(cls, name: str, variant: str = "msg") -> "NetConfig":
        if name == "default":
            return cls(variant=variant)
        if name == "desk":
            return cls(
                variant=variant,
                sa_widths=(
                    ((16, 16, 32), (16, 16, 32)),
                    ((16, 16, 32), (16, 16, 32)),
                    ((32, 32, 64), (32, 32, 64)),
                    ((32, 32, 64), (32, 32, 64)),
                    ((64, 64, 128), (64, 64, 128)),
                    ((64, 64, 128), (64, 64, 128)),
                    ((128, 128, 128), (128, 128, 128)),
                ),
                fp_widths=((256, 256), (256, 256), (256, 128), (128, 128), (128, 64), (64, 64), (64, 64)),
                # small-data settings: scale-free offsets, a louder radius channel
                # and a head that starts at zero train noticeably better here
                normalize_offsets=True,
                input_gain=(1.0, 1.0, 1.0, 30.0, 1.0),
                zero_head=True,
            )
        if name == "toy":
            return cls(
                variant=variant,
                n_ref=64,
                sample_counts=(16, 8, 6, 4, 3, 2, 1),
                max_k=(4, 6),
                evg_k=(8, 8),
                evg_half_length=(0.05, 0.1),
                sa_widths=(
                    ((3,), (4,)),
                    ((4,), (3,)),
                    ((3, 4), (4,)),
                    ((4,), (4,)),
                    ((3,), (3,)),
                    ((4,), (3,)),
                    ((4, 3), (3,)),
                ),
                fp_widths=((4,), (3,), (4,), (3,), (4,), (3, 3), (4,)),
                head=(3, F_OUT),
            )
        raise ValueError(f"unknown preset {name!r}")


@dataclass
class LevelGeometry:
    """Grouping and interpolation indices for one cloud (parameter-free)."""

    xyz: list = field(default_factory=list)  # per level, level 0 = input
    groups: list = field(default_factory=list)  # per SA level: list of (idx, rel)
    interp: list = field(default_factory=list)  # per FP level: (idx, w) fine <- coarse
    evg_fallback: int = 0


def shared_mlp(x: Tensor, layers, final_relu=True) -> Tensor:
    """Apply the same affine+ReLU stack to every row (any leading shape)."""
    for j, (w, b) in enumerate(layers):
        x = ag.linear(x, w, b, relu=final_relu or j < len(layers) - 1)
    return x


class PointNetRegressor:
    """Parameters live in ``self.params`` (ordered name -> Tensor)."""

    def __init__(self, config: NetConfig, seed=0):
        self.config = config
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        self._init(rng)

    @property
    def variant(self) -> str:
        return self.config.variant

    # -- parameters -------------------------------------------------------
    def _add(self, name, shape, rng, fan_in, scale=None):
        if scale is None:
            scale = np.sqrt(2.0 / fan_in)
        data = rng.standard_normal(shape) * scale if scale else np.zeros(shape)
        self.params[name] = Tensor(data, requires_grad=True, name=name)

    def _init(self, rng):
        cfg = self.config
        c_prev = F_IN
        level_channels = [F_IN]
        for i, blk in enumerate(cfg.sa_widths):
            out = 0
            for s, widths in enumerate(blk):
                p = f"sa{i + 1}.s{s + 1}"
                fan = c_prev + 3
                self._add(f"{p}.l1.wp", (3, widths[0]), rng, fan)
                self._add(f"{p}.l1.wf", (c_prev, widths[0]), rng, fan)
                self._add(f"{p}.l1.b", (widths[0],), rng, fan, 0)
                for j in range(1, len(widths)):
                    self._add(f"{p}.l{j + 1}.w", (widths[j - 1], widths[j]), rng, widths[j - 1])
                    self._add(f"{p}.l{j + 1}.b", (widths[j],), rng, 1, 0)
                out += widths[-1]
            c_prev = out
            level_channels.append(out)
        c_coarse = level_channels[-1]
        for t, widths in enumerate(cfg.fp_widths):
            lvl = N_LEVELS - t  # coarse level, propagating to lvl - 1
            p = f"fp{lvl}"
            c_skip = level_channels[lvl - 1]
            fan = c_coarse + c_skip
            self._add(f"{p}.l1.wc", (c_coarse, widths[0]), rng, fan)
            self._add(f"{p}.l1.ws", (c_skip, widths[0]), rng, fan)
            self._add(f"{p}.l1.b", (widths[0],), rng, fan, 0)
            for j in range(1, len(widths)):
                self._add(f"{p}.l{j + 1}.w", (widths[j - 1], widths[j]), rng, widths[j - 1])
                self._add(f"{p}.l{j + 1}.b", (widths[j],), rng, 1, 0)
            c_coarse = widths[-1]
        h = cfg.head
        self._add("head.l1.w", (c_coarse, h[0]), rng, c_coarse)
        self._add("head.l1.b", (h[0],), rng, 1, 0)
        for j in range(1, len(h)):
            last = j == len(h) - 1
            if last and cfg.zero_head:
                self._add(f"head.l{j + 1}.w", (h[j - 1], h[j]), rng, 1, 0)
            else:
                self._add(f"head.l{j + 1}.w", (h[j - 1], h[j]), rng, h[j - 1],
                          np.sqrt(1.0 / h[j - 1]) if last else None)
            self._add(f"head.l{j + 1}.b", (h[j],), rng, 1, 0)

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict:
        return {k: v.data for k, v in self.params.items()}

    def load_arrays(self, arrays: dict):
        missing = set(self.params) ^ set(arrays)
        if missing:
            raise ValueError(f"parameter mismatch: {sorted(missing)[:5]}")
        for k, p in self.params.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != p.data.shape:
                raise ValueError(f"{k}: shape {a.shape} != {p.data.shape}")
            p.data = a.copy()

    # -- geometry ---------------------------------------------------------
    def geometry(self, xyz) -> LevelGeometry:
        cfg = self.config
        xyz = np.ascontiguousarray(xyz, dtype=np.float64)
        counts = cfg.counts_for(len(xyz))
        geo = LevelGeometry(xyz=[xyz])
        cur = xyz
        for i in range(N_LEVELS):
            scales = len(cfg.sa_widths[i])
            if cfg.radii[0][i] is None:
                centers = np.zeros((1, 3))
                idx = np.arange(len(cur))[None, :]
                rel = cur[None, :, :] - centers[:, None, :]
                geo.groups.append([(idx, rel)] * scales)
            else:
                sel = pcops.farthest_point_sampling(cur, counts[i], pcops.fps_start(cur))
                centers = cur[sel]
                per = []
                for s in range(scales):
                    r = cfg.radii[s][i]
                    if cfg.variant == "evg" and i > 0:
                        grp = pcops.evg_query(cur, centers, cfg.evg_params(i, s, len(cur)))
                        geo.evg_fallback += int(grp.fallback.sum())
                    else:
                        grp = pcops.ball_query(cur, centers, r, cfg.max_k[s])
                    idx = grp.indices
                    rel = cur[idx] - centers[:, None, :]
                    if cfg.normalize_offsets:
                        rel = rel / r
                    per.append((idx, rel))
                geo.groups.append(per)
            geo.xyz.append(centers)
            cur = centers
        for lvl in range(N_LEVELS, 0, -1):
            coarse, fine = geo.xyz[lvl], geo.xyz[lvl - 1]
            k = min(3, len(coarse))
            geo.interp.append(pcops.interpolation_weights(coarse, fine, k))
        return geo

    # -- forward ----------------------------------------------------------
    def _layers(self, prefix, n):
        return [(self.params[f"{prefix}.l{j}.w"], self.params[f"{prefix}.l{j}.b"]) for j in range(2, n + 1)]

    def sa_forward(self, i, feats: Tensor, groups) -> Tensor:
        outs = []
        for s, widths in enumerate(self.config.sa_widths[i]):
            p = f"sa{i + 1}.s{s + 1}"
            idx, rel = groups[s]
            # (rel, f) @ W split: the feature part runs once per point
            pf = ag.linear(feats, self.params[f"{p}.l1.wf"])
            h = ag.group_affine_relu(pf, idx, rel, self.params[f"{p}.l1.wp"], self.params[f"{p}.l1.b"])
            h = shared_mlp(h, self._layers(p, len(widths)))
            outs.append(ag.max_pool(h))
        return outs[0] if len(outs) == 1 else ag.concat(outs, axis=-1)

    def fp_forward(self, lvl, coarse: Tensor, skip: Tensor, interp) -> Tensor:
        p = f"fp{lvl}"
        idx, w = interp
        n_layers = len(self.config.fp_widths[N_LEVELS - lvl])
        # interpolation is linear with weights summing to one, so project first
        hc = ag.linear(coarse, self.params[f"{p}.l1.wc"])
        h = ag.add(ag.interpolate(hc, idx, w), ag.linear(skip, self.params[f"{p}.l1.ws"], self.params[f"{p}.l1.b"]))
        h = ag.relu(h)
        return shared_mlp(h, self._layers(p, n_layers))

    def forward(self, features, geometry: LevelGeometry | None = None) -> Tensor:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != F_IN:
            raise ValueError(f"expected (n, {F_IN}) features, got {features.shape}")
        if geometry is None:
            geometry = self.geometry(features[:, :3])
        gain = np.asarray(self.config.input_gain, dtype=np.float64)
        level_feats = [Tensor(features * gain if np.any(gain != 1.0) else features)]
        for i in range(N_LEVELS):
            level_feats.append(self.sa_forward(i, level_feats[-1], geometry.groups[i]))
        x = level_feats[-1]
        for t, lvl in enumerate(range(N_LEVELS, 0, -1)):
            x = self.fp_forward(lvl, x, level_feats[lvl - 1], geometry.interp[t])
        h = self.config.head
        x = ag.linear(x, self.params["head.l1.w"], self.params["head.l1.b"], relu=True)
        return shared_mlp(x, self._layers("head", len(h)), final_relu=False)

    def predict(self, features) -> np.ndarray:
        with ag.no_grad():
            return self.forward(features).data[:, 0].copy()
