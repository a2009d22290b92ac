"""Binary little-endian PLY for lofted meshes and their scalar channels."""
from __future__ import annotations

import numpy as np
from plyfile import PlyData, PlyElement

from vffr.vesselgen import SurfaceMesh

CHANNELS = ("radius", "geodesic", "drop_q3", "drop_q5", "drop_q7")


def write_mesh_ply(path, mesh: SurfaceMesh) -> None:
    """Vertices carry x, y, z, every channel in ``mesh.channels``, a boundary
    marker (0 wall, 1 inlet, 2 + j outlet j) and the source centerline node."""
    n = mesh.n_vertices
    names = [c for c in CHANNELS if c in mesh.channels] + sorted(
        c for c in mesh.channels if c not in CHANNELS)
    marker = np.zeros(n, dtype=np.int32)
    marker[np.asarray(mesh.inlet_vertex_ids)] = 1
    for j, ids in enumerate(mesh.outlet_vertex_ids):
        marker[np.asarray(ids)] = 2 + j
    node = mesh.vertex_node if mesh.vertex_node is not None else np.full(n, -1)
    dtype = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")] + [(c, "<f8") for c in names] + [
        ("marker", "<i4"), ("node", "<i4")]
    vert = np.empty(n, dtype=dtype)
    for k, c in enumerate("xyz"):
        vert[c] = mesh.vertices[:, k]
    for c in names:
        vert[c] = np.asarray(mesh.channels[c], dtype=np.float64)
    vert["marker"] = marker
    vert["node"] = node
    faces = np.empty(len(mesh.faces), dtype=[("vertex_indices", "<i4", (3,))])
    faces["vertex_indices"] = mesh.faces
    edges = np.empty(len(mesh.extra_edges), dtype=[("vertex1", "<i4"), ("vertex2", "<i4")])
    edges["vertex1"] = mesh.extra_edges[:, 0]
    edges["vertex2"] = mesh.extra_edges[:, 1]
    PlyData(
        [PlyElement.describe(vert, "vertex"),
         PlyElement.describe(faces, "face"),
         PlyElement.describe(edges, "edge")],
        text=False, byte_order="<",
    ).write(str(path))


def read_mesh_ply(path) -> SurfaceMesh:
    ply = PlyData.read(str(path))
    v = ply["vertex"].data
    names = v.dtype.names
    vertices = np.column_stack([v["x"], v["y"], v["z"]]).astype(np.float64)
    faces = np.vstack(ply["face"].data["vertex_indices"]).astype(np.int64).reshape(-1, 3)
    extra = np.zeros((0, 2), dtype=np.int64)
    if "edge" in ply:
        e = ply["edge"].data
        extra = np.column_stack([e["vertex1"], e["vertex2"]]).astype(np.int64).reshape(-1, 2)
    marker = np.asarray(v["marker"]) if "marker" in names else np.zeros(len(v), dtype=int)
    outlets = [np.flatnonzero(marker == 2 + j) for j in range(max(0, int(marker.max()) - 1))]
    channels = {c: np.asarray(v[c], dtype=np.float64) for c in names
                if c not in ("x", "y", "z", "marker", "node")}
    return SurfaceMesh(
        vertices=vertices,
        faces=faces,
        inlet_vertex_ids=np.flatnonzero(marker == 1),
        outlet_vertex_ids=outlets,
        extra_edges=extra,
        vertex_node=np.asarray(v["node"], dtype=np.int64) if "node" in names else None,
        channels=channels,
    )
