"""Point-neighbourhood kernels: FPS, ball query, eigenvector grouping, k-NN
and inverse-distance interpolation.

The compiled extension ``_kernels`` is used when it imports; otherwise the
numpy implementation in ``_fallback`` takes over.  Set
``VFFR_PCOPS_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from vffr.pcops import _fallback

log = logging.getLogger(__name__)

try:
    from vffr.pcops import _kernels
except ImportError:  # extension not built
    _kernels = None

_BACKENDS = {"python": _fallback}
if _kernels is not None:
    _BACKENDS["cython"] = _kernels

_impl = _fallback
BACKEND = "python"


def set_backend(name: str) -> None:
    """Switch the kernel implementation ("cython" or "python")."""
    global _impl, BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(_BACKENDS)}")
    _impl = _BACKENDS[name]
    BACKEND = name


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


set_backend(os.environ.get("VFFR_PCOPS_BACKEND", "cython" if _kernels is not None else "python"))

EIG_TIE_RTOL = 1e-9
DIST_GUARD = 1e-10


@dataclass
class NeighborLists:
    """Fixed-size neighbour groups.

    ``indices[c]`` holds the members of center ``c`` ascending by distance
    (ties by lower index), padded with the closest member up to ``max_k``.
    ``counts[c]`` is the number of genuine members (0 leaves the row at -1).
    """

    indices: np.ndarray
    counts: np.ndarray


@dataclass
class EvgGroups(NeighborLists):
    directions: np.ndarray = None
    fallback: np.ndarray = None


@dataclass(frozen=True)
class EvgParams:
    k: int
    half_length: float
    radius: float
    max_k: int

    def __post_init__(self):
        if self.k < 3:
            raise ValueError("EVG needs k >= 3 neighbours")
        if not (self.half_length > 0 and self.radius > 0):
            raise ValueError("EVG half_length and radius must be positive")
        if self.max_k < 1:
            raise ValueError("max_k must be >= 1")


def _xyz(a, name="points"):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {a.shape}")
    return a


def farthest_point_sampling(points, m: int, start_index: int = 0) -> np.ndarray:
    """Greedy FPS; each pick maximises the distance to the chosen set."""
    points = _xyz(points)
    n = points.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"cannot sample {m} of {n} points")
    if not 0 <= start_index < n:
        raise IndexError(f"start_index {start_index} out of range")
    return _impl.farthest_point_sampling(points, int(m), int(start_index))


def fps_start(points) -> int:
    """Permutation-invariant FPS seed: the point farthest from the bbox center."""
    points = np.asarray(points)
    mid = (points.min(axis=0) + points.max(axis=0)) * 0.5
    d = points - mid
    return int(np.argmax(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]))


def ball_query(points, centers, radius: float, max_k: int) -> NeighborLists:
    if radius <= 0:
        raise ValueError("radius must be positive")
    idx, cnt = _impl.ball_query(_xyz(points), _xyz(centers, "centers"), float(radius), int(max_k))
    return NeighborLists(idx, cnt)


def knn(points, queries, k: int):
    """Exact k nearest neighbours; returns ``(indices, distances)``."""
    points = _xyz(points)
    if k > points.shape[0]:
        raise ValueError(f"k={k} exceeds point count {points.shape[0]}")
    if k < 1:
        raise ValueError("k must be >= 1")
    return _impl.knn(points, _xyz(queries, "queries"), int(k))


def principal_directions(points, neighbors):
    """Unit top eigenvector of each neighbour set's covariance.

    Returns ``(directions, top_eigenvalue, degenerate)``.
    """
    points = _xyz(points)
    neighbors = np.ascontiguousarray(neighbors, dtype=np.int64)
    dirs, lam, scale2 = _impl.principal_directions(points, neighbors, EIG_TIE_RTOL)
    degenerate = lam <= 1e-20 * scale2 + 1e-300
    return dirs, lam, degenerate


def evg_query(points, centers, params: EvgParams) -> EvgGroups:
    """Group along the dominant local direction.

    For each center: take its ``k`` nearest points, estimate the vessel
    direction ``v`` as the top covariance eigenvector and keep the points
    within ``radius`` of the segment ``[c - L v, c + L v]``.  Centers whose
    neighbourhood collapses to a point fall back to a plain ball query and
    are flagged in ``fallback``.
    """
    points = _xyz(points)
    centers = _xyz(centers, "centers")
    if points.shape[0] < params.k:
        raise ValueError(f"EVG needs at least k={params.k} points, got {points.shape[0]}")
    nb, _ = _impl.knn(points, centers, params.k)
    dirs, _, degenerate = principal_directions(points, nb)
    dirs = np.ascontiguousarray(dirs)
    idx, cnt = _impl.capsule_query(
        points, centers, dirs, float(params.half_length), float(params.radius), params.max_k
    )
    if degenerate.any():
        log.debug("EVG: %d degenerate neighbourhoods, using ball query", int(degenerate.sum()))
        bidx, bcnt = _impl.ball_query(
            points, np.ascontiguousarray(centers[degenerate]), float(params.radius), params.max_k
        )
        idx[degenerate] = bidx
        cnt[degenerate] = bcnt
        dirs[degenerate] = 0.0
    return EvgGroups(idx, cnt, directions=dirs, fallback=degenerate)


def interpolation_weights(coarse_points, fine_points, k: int = 3):
    """Inverse-distance weights over the ``k`` nearest coarse points."""
    idx, dist = knn(coarse_points, fine_points, k)
    inv = 1.0 / np.maximum(dist, DIST_GUARD)
    return idx, inv / inv.sum(axis=1, keepdims=True)


def three_nn_interpolate(coarse_points, coarse_features, fine_points) -> np.ndarray:
    coarse_points = _xyz(coarse_points, "coarse_points")
    if coarse_points.shape[0] < 3:
        raise ValueError("three_nn_interpolate needs at least 3 coarse points")
    feats = np.asarray(coarse_features, dtype=np.float64)
    if feats.shape[0] != coarse_points.shape[0]:
        raise ValueError("coarse_features rows must match coarse_points")
    idx, w = interpolation_weights(coarse_points, fine_points, 3)
    if feats.ndim == 1:
        return w[:, 0] * feats[idx[:, 0]] + w[:, 1] * feats[idx[:, 1]] + w[:, 2] * feats[idx[:, 2]]
    return (
        w[:, 0, None] * feats[idx[:, 0]]
        + w[:, 1, None] * feats[idx[:, 1]]
        + w[:, 2, None] * feats[idx[:, 2]]
    )


def scatter_add_rows(src, idx, n_out: int) -> np.ndarray:
    src = np.ascontiguousarray(src, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    return _impl.scatter_add_rows(src, idx, int(n_out))


def group_max(x):
    """Max over the member axis of ``(groups, members, channels)``; first maximiser wins."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] == 0:
        raise ValueError(f"group_max expects a non-empty (m, k, c) block, got {x.shape}")
    return _impl.group_max(x)


def group_max_backward(grad, arg, k: int) -> np.ndarray:
    return _impl.group_max_backward(
        np.ascontiguousarray(grad, dtype=np.float64), np.ascontiguousarray(arg, dtype=np.int64), int(k)
    )
