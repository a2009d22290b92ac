"""Synthetic dataset construction and loading.

Layout::

    <root>/manifest.json
    <root>/sample_%04d/{centerline.json, mesh.ply, meta.json}
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from vffr import features as feat
from vffr import hemosolver as hs
from vffr import vesselgen as vg
from vffr.pipeline.config import RunConfig
from vffr.pipeline.plyio import read_mesh_ply, write_mesh_ply

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class SampleRejected(RuntimeError):
    pass


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def sample_dir(root, i) -> Path:
    return Path(root) / f"sample_{i:04d}"


def derived_seed(*parts) -> int:
    """Stable 63-bit seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0] >> 1)


def feature_hash(vertices, radius, geodesic) -> str:
    h = hashlib.sha256()
    for a in (vertices, radius, geodesic):
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()


def featurize_mesh(mesh: vg.SurfaceMesh, tree: vg.CenterlineTree) -> dict:
    """Fill the radius/geodesic channels; return the normalisation record."""
    mesh.channels["radius"] = feat.radius_feature(mesh, tree)
    mesh.channels["geodesic"] = feat.geodesic_from_inlet(mesh)
    center, scale = feat.normalization(mesh.vertices)
    return {
        "center": [float(c) for c in center],
        "scale": float(scale),
        "feature_hash": feature_hash(mesh.vertices, mesh.channels["radius"], mesh.channels["geodesic"]),
    }


def synthesize(gen: vg.GeneratorConfig, seed: int, rings_per_node: int,
               fluid: hs.FluidModel, reject_inflow: float, reject_p_in: float):
    """One candidate sample; raises :class:`SampleRejected` on degenerate labels."""
    tree = vg.generate_centerline(gen, seed)
    specs = vg.sample_stenoses(tree, gen, seed)
    tree = vg.insert_stenoses(tree, specs)
    mesh = vg.loft_surface(tree, rings_per_node).validate()
    fields = hs.solve_all_inflows(tree, fluid)
    check = fields.get(reject_inflow)
    if check is None:
        check = hs.solve_pressure_drops(tree, hs.split_flows(tree, reject_inflow * hs.ML_PER_S), fluid)
    _, degenerate = hs.compute_vffr(check, reject_p_in, fluid)
    if degenerate:
        raise SampleRejected(
            f"non-positive pressure at Q={reject_inflow} ml/s, p_in={reject_p_in} mmHg")
    for q, field in fields.items():
        mesh.channels[f"drop_q{q}"] = hs.map_drops_to_surface(mesh, tree, field).values
    norm = featurize_mesh(mesh, tree)
    return tree, mesh, norm


def write_sample(path: Path, tree, mesh, meta) -> None:
    path.mkdir(parents=True, exist_ok=True)
    (path / "centerline.json").write_text(tree.dumps() + "\n")
    write_mesh_ply(path / "mesh.ply", mesh)
    _dump_json(path / "meta.json", meta)


def assign_splits(ids, cfg: RunConfig) -> dict:
    ids = list(ids)
    order = np.random.default_rng([cfg.seed, 99]).permutation(len(ids))
    shuffled = [ids[k] for k in order]
    a, b = cfg.n_train, cfg.n_train + cfg.n_val
    return {"train": sorted(shuffled[:a]), "val": sorted(shuffled[a:b]), "test": sorted(shuffled[b:])}


def build_dataset(cfg: RunConfig, root=None, gen: vg.GeneratorConfig | None = None,
                  fluid: hs.FluidModel = hs.FluidModel()) -> dict:
    """Generate ``cfg.n_samples`` labelled vessels and write the manifest.

    A candidate whose labels are degenerate (non-positive absolute pressure at
    the reference inflow and inlet pressure) or whose generation fails is
    redrawn with the next derived seed, up to ``cfg.max_resamples`` times.
    Failures are listed in the manifest; the build goes on regardless.
    """
    root = Path(root or cfg.dataset_dir)
    root.mkdir(parents=True, exist_ok=True)
    if gen is None:
        gen = vg.GeneratorConfig.from_dict(cfg.generator) if cfg.generator else vg.GeneratorConfig()
    gen.validate()
    ok, failures, rejections = [], [], []
    for i in range(cfg.n_samples):
        done = False
        for j in range(cfg.max_resamples):
            seed = derived_seed(cfg.seed, i, j)
            try:
                tree, mesh, norm = synthesize(gen, seed, cfg.rings_per_node, fluid,
                                              cfg.reject_inflow, cfg.reject_p_in)
            except SampleRejected as exc:
                rejections.append({"sample": i, "attempt": j, "seed": seed, "reason": str(exc)})
                continue
            except (vg.LoftError, vg.StenosisRangeError, vg.StenosisOverlapError,
                    hs.SolverError, feat.GeodesicError, ValueError) as exc:
                rejections.append({"sample": i, "attempt": j, "seed": seed,
                                   "reason": f"{type(exc).__name__}: {exc}"})
                continue
            meta = {
                "sample": i,
                "seed": seed,
                "attempt": j,
                "stenoses": [
                    {"branch_id": s.branch_id, "start": s.start, "length": s.length,
                     "grade": s.grade, "profile": s.profile, "cad_rads_bin": vg.grade_bin(s.grade)}
                    for s in tree.stenoses
                ],
                "fluid": fluid.to_dict(),
                "inflows_ml_s": list(hs.INFLOWS_ML_S),
                "normalization": norm,
                "n_vertices": int(mesh.n_vertices),
                "n_nodes": int(tree.n_nodes),
                "generator": gen.to_dict(),
            }
            write_sample(sample_dir(root, i), tree, mesh, meta)
            ok.append(i)
            done = True
            break
        if not done:
            log.error("sample %d failed after %d attempts", i, cfg.max_resamples)
            failures.append(i)
    manifest = {
        "seed": cfg.seed,
        "n_requested": cfg.n_samples,
        "samples": [f"sample_{i:04d}" for i in ok],
        "splits": {k: [f"sample_{i:04d}" for i in v] for k, v in assign_splits(ok, cfg).items()},
        "failures": failures,
        "rejections": rejections,
        "rings_per_node": cfg.rings_per_node,
    }
    _dump_json(root / MANIFEST, manifest)
    return manifest


def load_manifest(root) -> dict:
    return json.loads((Path(root) / MANIFEST).read_text())


@dataclass
class Sample:
    name: str
    tree: vg.CenterlineTree
    mesh: vg.SurfaceMesh
    meta: dict

    def cloud(self, inflow=None) -> feat.FeaturedPointCloud:
        norm = self.meta["normalization"]
        labels = None if inflow is None else self.mesh.channels[f"drop_q{int(inflow)}"]
        return feat.normalize(self.mesh.vertices, self.mesh.channels["radius"],
                              self.mesh.channels["geodesic"], labels,
                              center=norm["center"], scale=norm["scale"])


def load_sample(root, name) -> Sample:
    d = Path(root) / name
    meta = json.loads((d / "meta.json").read_text())
    specs = [vg.StenosisSpec(s["branch_id"], s["start"], s["length"], s["grade"], s["profile"])
             for s in meta["stenoses"]]
    tree = vg.CenterlineTree.from_json(json.loads((d / "centerline.json").read_text()), specs)
    return Sample(name, tree, read_mesh_ply(d / "mesh.ply"), meta)


def featurize_dataset(root) -> list:
    """Recompute radius/geodesic channels and normalisation for every sample.

    Samples whose stored feature hash already matches are left untouched.
    Returns the names that were rewritten.
    """
    root = Path(root)
    changed = []
    for name in load_manifest(root)["samples"]:
        s = load_sample(root, name)
        norm = featurize_mesh(s.mesh, s.tree)
        if s.meta.get("normalization") == norm:
            continue
        s.meta["normalization"] = norm
        write_mesh_ply(root / name / "mesh.ply", s.mesh)
        _dump_json(root / name / "meta.json", s.meta)
        changed.append(name)
    return changed
