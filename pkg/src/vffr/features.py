"""Surface mesh -> five-channel point cloud (x, y, z, radius, geodesic)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

log = logging.getLogger(__name__)

N_FEATURES = 5


class GeodesicError(RuntimeError):
    pass


class DegenerateCloudError(ValueError):
    pass


def extract_point_cloud(mesh) -> np.ndarray:
    """Vertex positions only, in mesh order."""
    return np.array(mesh.vertices, dtype=np.float64, copy=True)


def edge_graph(vertices, edges):
    w = np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)
    n = len(vertices)
    return coo_matrix((w, (edges[:, 0], edges[:, 1])), shape=(n, n)).tocsr()


def geodesic_from_inlet(mesh) -> np.ndarray:
    """Shortest edge-path length from the inlet vertex set (multi-source)."""
    inlet = np.asarray(mesh.inlet_vertex_ids, dtype=np.int64)
    if inlet.size == 0:
        raise GeodesicError("mesh has no inlet vertices")
    edges = mesh.edges()
    graph = edge_graph(mesh.vertices, edges)
    dist = dijkstra(graph, directed=False, indices=inlet, min_only=True)
    unreachable = ~np.isfinite(dist)
    if unreachable.any():
        ncomp, labels = connected_components(graph, directed=False)
        raise GeodesicError(
            f"{int(unreachable.sum())} vertices unreachable from the inlet "
            f"({ncomp} components)"
        )
    dist[inlet] = 0.0
    return dist


def radius_feature(mesh, tree, chunk: int = 2048) -> np.ndarray:
    """Distance from each vertex to the nearest centerline segment."""
    if tree.n_nodes == 0:
        raise ValueError("empty centerline")
    pts = np.asarray(mesh.vertices if hasattr(mesh, "vertices") else mesh, dtype=np.float64)
    a = tree.positions[tree.edges[:, 0]]
    ab = tree.positions[tree.edges[:, 1]] - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    out = np.empty(len(pts))
    if len(ab) == 0:
        d = pts[:, None, :] - tree.positions[None, :, :]
        return np.sqrt(np.einsum("nmk,nmk->nm", d, d).min(axis=1))
    for lo in range(0, len(pts), chunk):
        p = pts[lo:lo + chunk, None, :]
        ap = p - a[None]
        t = np.clip(np.einsum("nmk,mk->nm", ap, ab) / ab2[None], 0.0, 1.0)
        e = ap - t[..., None] * ab[None]
        out[lo:lo + chunk] = np.sqrt(np.einsum("nmk,nmk->nm", e, e).min(axis=1))
    return out


@dataclass
class FeaturedPointCloud:
    xyz: np.ndarray  # normalised coordinates
    radius: np.ndarray
    geodesic: np.ndarray
    center: np.ndarray
    scale: float
    labels: np.ndarray | None = None
    flags: dict = field(default_factory=dict)

    @property
    def features(self) -> np.ndarray:
        return np.column_stack([self.xyz, self.radius, self.geodesic])

    def __len__(self):
        return len(self.xyz)

    def denormalize(self, xyz=None) -> np.ndarray:
        xyz = self.xyz if xyz is None else xyz
        return xyz / self.scale + self.center

    def take(self, idx) -> "FeaturedPointCloud":
        return replace(
            self,
            xyz=self.xyz[idx],
            radius=self.radius[idx],
            geodesic=self.geodesic[idx],
            labels=None if self.labels is None else self.labels[idx],
            flags=dict(self.flags),
        )


def normalization(points):
    """Bounding-box center and the uniform scale that fits it in the unit cube."""
    points = np.asarray(points, dtype=np.float64)
    lo, hi = points.min(axis=0), points.max(axis=0)
    extent = float((hi - lo).max())
    if not extent > 0:
        raise DegenerateCloudError("all points coincide; cannot normalise")
    return (lo + hi) * 0.5, 1.0 / extent


def normalize(points, radius, geodesic, labels=None, center=None, scale=None) -> FeaturedPointCloud:
    """Center on the bbox midpoint and scale by 1/largest extent.

    ``radius`` and ``geodesic`` are lengths and get the same scale factor.
    A stored ``center``/``scale`` pair may be passed to reuse a cached record.
    """
    points = np.asarray(points, dtype=np.float64)
    if center is None or scale is None:
        center, scale = normalization(points)
    center = np.asarray(center, dtype=np.float64)
    return FeaturedPointCloud(
        xyz=(points - center) * scale,
        radius=np.asarray(radius, dtype=np.float64) * scale,
        geodesic=np.asarray(geodesic, dtype=np.float64) * scale,
        center=center,
        scale=float(scale),
        labels=None if labels is None else np.asarray(labels, dtype=np.float64),
    )


def subsample(cloud: FeaturedPointCloud, m: int, seed) -> FeaturedPointCloud:
    """Uniform random subset of ``m`` points without replacement.

    Clouds with fewer than ``m`` points pass through unchanged with
    ``flags["subsample_passthrough"]`` set.
    """
    n = len(cloud)
    if n < m:
        log.warning("cloud has %d < %d points; subsample passes through", n, m)
        out = cloud.take(np.arange(n))
        out.flags["subsample_passthrough"] = True
        return out
    idx = np.random.default_rng(seed).choice(n, size=m, replace=False)
    return cloud.take(idx)
