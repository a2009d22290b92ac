import numpy as np
import pytest
from scipy.spatial import Delaunay

from vffr import pcops
from vffr.vesselgen import CenterlineTree, SurfaceMesh


@pytest.fixture(params=pcops.available_backends())
def backend(request):
    old = pcops.BACKEND
    pcops.set_backend(request.param)
    yield request.param
    pcops.set_backend(old)


def straight_tree(length=0.1, radius=0.002, step=0.0005, axis=(1.0, 0.0, 0.0)):
    n = int(round(length / step)) + 1
    axis = np.asarray(axis, dtype=float)
    return CenterlineTree(
        positions=np.arange(n)[:, None] * step * axis[None, :],
        radii=np.full(n, radius),
        edges=np.column_stack([np.arange(n - 1), np.arange(1, n)]),
        root=0,
        outlets=[n - 1],
        branch_ids=np.zeros(n, dtype=np.int64),
    )


def y_tree(r_left=0.002, r_right=0.001, step=0.0005, n_parent=21, n_child=21):
    """A parent branch splitting into two straight children."""
    r_p = (r_left ** 3 + r_right ** 3) ** (1 / 3)
    pos = [np.array([i * step, 0.0, 0.0]) for i in range(n_parent)]
    end = pos[-1]
    for sign in (1.0, -1.0):
        d = np.array([np.cos(0.5), sign * np.sin(0.5), 0.0])
        pos += [end + (j + 1) * step * d for j in range(n_child)]
    radii = [r_p] * n_parent + [r_left] * n_child + [r_right] * n_child
    edges = [(i, i + 1) for i in range(n_parent - 1)]
    a, b = n_parent, n_parent + n_child
    edges += [(n_parent - 1, a)] + [(a + j, a + j + 1) for j in range(n_child - 1)]
    edges += [(n_parent - 1, b)] + [(b + j, b + j + 1) for j in range(n_child - 1)]
    return CenterlineTree(
        positions=np.array(pos),
        radii=np.array(radii),
        edges=np.array(edges, dtype=np.int64),
        root=0,
        outlets=[a + n_child - 1, b + n_child - 1],
        branch_ids=np.repeat([0, 1, 2], [n_parent, n_child, n_child]),
    )


def random_mesh(rng, n_max=500):
    """Connected random triangle mesh: a lifted planar Delaunay triangulation."""
    n = int(rng.integers(20, n_max + 1))
    uv = rng.uniform(0, 1, (n, 2))
    tri = Delaunay(uv)
    z = 0.2 * np.sin(3 * uv[:, 0]) * np.cos(2 * uv[:, 1]) + rng.normal(0, 0.01, n)
    verts = np.column_stack([uv, z])
    inlet = rng.choice(n, size=int(rng.integers(1, 6)), replace=False)
    return SurfaceMesh(vertices=verts, faces=tri.simplices.astype(np.int64),
                       inlet_vertex_ids=np.sort(inlet), outlet_vertex_ids=[])
