"""Procedural coronary-like vessel trees: centerline first, surface second.

Lengths are in meters throughout.  A tree is a set of *branches*; every
branch is an ordered run of nodes spaced ``node_step`` apart, and every
non-root branch hangs off the last node of its parent branch.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from vffr import pcops


class ConfigError(ValueError):
    pass


class StenosisOverlapError(ValueError):
    pass


class StenosisRangeError(ValueError):
    pass


class LoftError(RuntimeError):
    def __init__(self, branch_id, message):
        super().__init__(f"branch {branch_id}: {message}")
        self.branch_id = branch_id


# CAD-RADS severity bins (percent diameter reduction); occlusions excluded.
CAD_RADS_BINS = ((0, 0), (1, 24), (25, 49), (50, 69), (70, 99))


def grade_bin(grade: float) -> int:
    """Index into :data:`CAD_RADS_BINS` for a severity grade."""
    for i, (lo, hi) in enumerate(CAD_RADS_BINS):
        if grade <= hi:
            return i
    raise ValueError(f"grade {grade} outside [0, 99]")


@dataclass(frozen=True)
class StenosisSpec:
    branch_id: int
    start: float  # arclength from the branch's first node
    length: float
    grade: float  # percent diameter reduction
    profile: str = "cosine"

    def __post_init__(self):
        if not 0 <= self.grade <= 99:
            raise ValueError(f"stenosis grade {self.grade} outside [0, 99]")
        if self.length <= 0 or self.start < 0:
            raise StenosisRangeError("stenosis needs start >= 0 and length > 0")
        if self.profile != "cosine":
            raise ValueError(f"unknown stenosis profile {self.profile!r}")

    @property
    def end(self):
        return self.start + self.length

    def factor(self, s):
        """Radius multiplier at segment-relative arclength ``s`` in [0, length]."""
        s = np.asarray(s, dtype=float)
        return 1.0 - (self.grade / 100.0) * (1.0 - np.cos(2.0 * np.pi * s / self.length)) / 2.0


@dataclass
class GeneratorConfig:
    branch_length: tuple = (0.020, 0.080)
    root_radius: tuple = (0.0015, 0.004)
    taper: tuple = (0.05, 0.20)
    bifurcation_angle_deg: tuple = (30.0, 70.0)
    bifurcations: tuple = (1, 3)
    murray_fraction: tuple = (0.5, 0.85)
    curvature: tuple = (0.0, 12.0)  # 1/m
    node_step: float = 0.0005
    stenosis_count: tuple = (1, 3)
    stenosis_length: tuple = (0.005, 0.015)
    grade_bins: tuple = CAD_RADS_BINS
    stenosis_margin: tuple = (0.003, 0.006)  # clearance to branch start / end
    max_attempts: int = 12

    def validate(self):
        for name in ("branch_length", "root_radius", "taper", "bifurcation_angle_deg",
                     "bifurcations", "murray_fraction", "curvature", "stenosis_count",
                     "stenosis_length"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: empty range ({lo} > {hi})")
        for lo, hi in self.grade_bins:
            if lo > hi or lo < 0 or hi > 99:
                raise ConfigError(f"bad grade bin ({lo}, {hi})")
        if self.node_step <= 0:
            raise ConfigError("node_step must be positive")
        if self.root_radius[0] <= 0:
            raise ConfigError("radii must be positive")
        if not (0 <= self.taper[0] and self.taper[1] < 1):
            raise ConfigError("taper must lie in [0, 1)")
        if not (0 < self.murray_fraction[0] and self.murray_fraction[1] < 1):
            raise ConfigError("murray_fraction must lie in (0, 1)")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = {k: tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v
             for k, v in d.items()}
        return cls(**d)


@dataclass
class CenterlineTree:
    positions: np.ndarray  # (N, 3)
    radii: np.ndarray  # (N,)
    edges: np.ndarray  # (E, 2) parent -> child
    root: int
    outlets: list
    branch_ids: np.ndarray  # (N,)
    stenoses: list = field(default_factory=list)

    @property
    def n_nodes(self):
        return len(self.radii)

    def parents(self):
        par = np.full(self.n_nodes, -1, dtype=np.int64)
        par[self.edges[:, 1]] = self.edges[:, 0]
        return par

    def children(self):
        ch = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            ch[u].append(int(v))
        return ch

    def topological_order(self):
        ch = self.children()
        order, stack = [], [self.root]
        while stack:
            u = stack.pop()
            order.append(u)
            stack.extend(reversed(ch[u]))
        return np.asarray(order, dtype=np.int64)

    def branch_nodes(self, branch_id):
        """Node indices of a branch, proximal to distal."""
        return np.flatnonzero(self.branch_ids == branch_id)

    def branch_arclength(self, branch_id):
        nodes = self.branch_nodes(branch_id)
        seg = np.linalg.norm(np.diff(self.positions[nodes], axis=0), axis=1)
        return nodes, np.concatenate([[0.0], np.cumsum(seg)])

    def branch_parent(self, branch_id):
        """Branch id of the parent branch (-1 for the root branch)."""
        first = self.branch_nodes(branch_id)[0]
        p = self.parents()[first]
        return -1 if p < 0 else int(self.branch_ids[p])

    @property
    def n_branches(self):
        return int(self.branch_ids.max()) + 1

    def validate(self, step=None):
        n = self.n_nodes
        par = np.full(n, -1, dtype=np.int64)
        for u, v in self.edges:
            if par[v] != -1:
                raise ValueError(f"node {v} has two parents")
            par[v] = u
        roots = np.flatnonzero(par == -1)
        if len(roots) != 1 or roots[0] != self.root:
            raise ValueError(f"expected single root {self.root}, found {roots.tolist()}")
        if len(self.topological_order()) != n:
            raise ValueError("tree is not connected or has a cycle")
        if np.any(self.radii <= 0):
            raise ValueError(f"non-positive radius at node {int(np.argmin(self.radii))}")
        if step is not None:
            d = np.linalg.norm(self.positions[self.edges[:, 1]] - self.positions[self.edges[:, 0]], axis=1)
            if np.any(d > step * (1 + 1e-9)):
                raise ValueError("node spacing exceeds the configured step")
        return self

    def to_json(self):
        return {
            "nodes": [{"p": [float(x) for x in p], "r": float(r)}
                      for p, r in zip(self.positions, self.radii)],
            "edges": [[int(u), int(v)] for u, v in self.edges],
            "root": int(self.root),
            "outlets": [int(o) for o in self.outlets],
            "branch_ids": [int(b) for b in self.branch_ids],
        }

    @classmethod
    def from_json(cls, d, stenoses=()):
        return cls(
            positions=np.array([nd["p"] for nd in d["nodes"]], dtype=float).reshape(-1, 3),
            radii=np.array([nd["r"] for nd in d["nodes"]], dtype=float),
            edges=np.array(d["edges"], dtype=np.int64).reshape(-1, 2),
            root=int(d["root"]),
            outlets=list(d["outlets"]),
            branch_ids=np.array(d["branch_ids"], dtype=np.int64),
            stenoses=list(stenoses),
        )

    def dumps(self):
        return json.dumps(self.to_json(), separators=(",", ":"))


def _unit(v):
    return v / np.linalg.norm(v)


def _perpendicular(t):
    e = np.zeros(3)
    e[int(np.argmin(np.abs(t)))] = 1.0
    return _unit(e - np.dot(e, t) * t)


def _rotate(v, axis, angle):
    """Rodrigues rotation of ``v`` about unit ``axis``."""
    c, s = math.cos(angle), math.sin(angle)
    return v * c + np.cross(axis, v) * s + axis * np.dot(axis, v) * (1 - c)


def _grow_branch(start, direction, r0, length, taper, curvature, step, rng):
    """Nodes of one branch: gently curved, linearly tapered."""
    n = max(2, int(round(length / step)) + 1)
    t = _unit(np.asarray(direction, dtype=float))
    bend = _perpendicular(t)
    bend = _rotate(bend, t, rng.uniform(0, 2 * np.pi))
    twist = rng.uniform(-20.0, 20.0)  # rad/m, slow rotation of the bend plane
    pts = np.empty((n, 3))
    pts[0] = start
    for j in range(1, n):
        pts[j] = pts[j - 1] + step * t
        t = _unit(t + curvature * step * bend)
        bend = _rotate(bend - np.dot(bend, t) * t, t, twist * step)
        bend = _unit(bend)
    s = np.arange(n) * step
    radii = r0 * (1.0 - taper * s / s[-1])
    return pts, radii


def _collides(new_pts, new_r, skip_head, others):
    """True when ``new_pts`` (beyond the first ``skip_head`` nodes) come closer
    than the summed radii (+ one radius of clearance) to any node in ``others``."""
    if not others or len(new_pts) <= skip_head:
        return False
    pts = np.concatenate([o[0] for o in others])
    rad = np.concatenate([o[1] for o in others])
    q = new_pts[skip_head:]
    qr = new_r[skip_head:]
    d = np.linalg.norm(q[:, None, :] - pts[None, :, :], axis=2)
    return bool(np.any(d < qr[:, None] + rad[None, :] + np.maximum(qr[:, None], rad[None, :])))


def generate_centerline(config: GeneratorConfig, seed: int) -> CenterlineTree:
    """Random healthy tree: a root branch plus recursive Murray bifurcations."""
    config.validate()
    rng = np.random.default_rng(seed)
    step = config.node_step
    u = lambda rng_range: rng.uniform(*rng_range)  # noqa: E731

    direction = _unit(rng.normal(size=3))
    r0 = u(config.root_radius)
    pts, rad = _grow_branch(np.zeros(3), direction, r0, u(config.branch_length), u(config.taper),
                            u(config.curvature), step, rng)
    branches = [(pts, rad)]
    parent_of = [-1]
    leaves = [0]
    target = int(rng.integers(config.bifurcations[0], config.bifurcations[1] + 1))
    made = 0
    attempts = 0
    while made < target and attempts < config.max_attempts * max(target, 1):
        attempts += 1
        pb = leaves[int(rng.integers(len(leaves)))]
        ppts, prad = branches[pb]
        rp = prad[-1]
        f = u(config.murray_fraction)
        r_big, r_small = rp * f ** (1 / 3), rp * (1 - f) ** (1 / 3)
        theta = math.radians(u(config.bifurcation_angle_deg))
        w = r_small ** 2 / (r_big ** 2 + r_small ** 2)
        angles = (theta * w, -(theta - theta * w))
        t_end = _unit(ppts[-1] - ppts[-2])
        plane = _rotate(_perpendicular(t_end), t_end, rng.uniform(0, 2 * np.pi))
        axis = np.cross(t_end, plane)
        kids = []
        for r_c, ang in zip((r_big, r_small), angles):
            d = _rotate(t_end, axis, ang)
            cpts, crad = _grow_branch(ppts[-1] + step * d, d, r_c, u(config.branch_length),
                                      u(config.taper), u(config.curvature), step, rng)
            kids.append((cpts, crad))
        guard = int(math.ceil((6 * rp + 0.004) / step))
        others = [b for i, b in enumerate(branches) if i != pb]
        parent_tail = (ppts[:-guard], prad[:-guard]) if len(ppts) > guard else None
        if parent_tail is not None and len(parent_tail[0]):
            others.append(parent_tail)
        if (_collides(kids[0][0], kids[0][1], guard, others)
                or _collides(kids[1][0], kids[1][1], guard, others + [kids[0]])):
            continue
        leaves.remove(pb)
        for kid in kids:
            branches.append(kid)
            parent_of.append(pb)
            leaves.append(len(branches) - 1)
        made += 1

    positions, radii, branch_ids, edges = [], [], [], []
    first_node, last_node = [], []
    offset = 0
    for b, (bp, br) in enumerate(branches):
        n = len(bp)
        positions.append(bp)
        radii.append(br)
        branch_ids.append(np.full(n, b, dtype=np.int64))
        first_node.append(offset)
        last_node.append(offset + n - 1)
        edges.extend((offset + j, offset + j + 1) for j in range(n - 1))
        if parent_of[b] >= 0:
            edges.append((last_node[parent_of[b]], offset))
        offset += n
    outlets = [last_node[b] for b in sorted(leaves)]
    tree = CenterlineTree(
        positions=np.concatenate(positions),
        radii=np.concatenate(radii),
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        root=0,
        outlets=outlets,
        branch_ids=np.concatenate(branch_ids),
    )
    return tree.validate()


def sample_stenoses(tree: CenterlineTree, config: GeneratorConfig, seed: int) -> list:
    """Random non-overlapping lesions, grades drawn bin-balanced.

    Start and length are snapped to the node grid (even number of steps) so
    the profile minimum lands on a node.
    """
    rng = np.random.default_rng([seed, 1])
    step = config.node_step
    lengths = {b: tree.branch_arclength(b)[1][-1] for b in range(tree.n_branches)}
    m0, m1 = config.stenosis_margin
    count = int(rng.integers(config.stenosis_count[0], config.stenosis_count[1] + 1))
    specs = []
    for _ in range(count):
        for _attempt in range(config.max_attempts):
            length = 2 * step * max(1, round(rng.uniform(*config.stenosis_length) / (2 * step)))
            usable = {b: L for b, L in lengths.items() if L - length - m0 - m1 > 0}
            if not usable:
                break
            ids = sorted(usable)
            w = np.array([usable[b] for b in ids])
            b = ids[int(rng.choice(len(ids), p=w / w.sum()))]
            lo = int(math.ceil(m0 / step))
            hi = int(math.floor((lengths[b] - length - m1) / step))
            if hi < lo:
                continue
            start = step * int(rng.integers(lo, hi + 1))
            glo, ghi = config.grade_bins[int(rng.integers(len(config.grade_bins)))]
            grade = float(rng.integers(glo, ghi + 1))
            spec = StenosisSpec(b, start, length, grade)
            if any(s.branch_id == b and s.start < spec.end and spec.start < s.end for s in specs):
                continue
            specs.append(spec)
            break
    return specs


def insert_stenoses(tree: CenterlineTree, specs) -> CenterlineTree:
    """Narrow the lumen along each lesion; topology and other radii untouched."""
    specs = list(specs)
    all_specs = list(tree.stenoses) + specs
    for i, a in enumerate(all_specs):
        for b in all_specs[i + 1:]:
            if a.branch_id == b.branch_id and a.start < b.end and b.start < a.end:
                raise StenosisOverlapError(f"overlapping stenoses on branch {a.branch_id}")
    radii = tree.radii.copy()
    for spec in specs:
        if not 0 <= spec.branch_id < tree.n_branches:
            raise StenosisRangeError(f"no branch {spec.branch_id}")
        nodes, s = tree.branch_arclength(spec.branch_id)
        tol = 1e-9 * (s[1] - s[0] if len(s) > 1 else 1.0)
        if spec.end > s[-1] + tol:
            raise StenosisRangeError(
                f"stenosis [{spec.start}, {spec.end}] exceeds branch {spec.branch_id} length {s[-1]}")
        inside = (s >= spec.start - tol) & (s <= spec.end + tol)
        rel = np.clip(s[inside] - spec.start, 0.0, spec.length)
        radii[nodes[inside]] = radii[nodes[inside]] * spec.factor(rel)
    return replace(tree, radii=radii, stenoses=all_specs)


def stenosis_nodes(tree: CenterlineTree, spec: StenosisSpec):
    """``(nodes, rel_arclength)`` of the centerline nodes covered by a lesion."""
    nodes, s = tree.branch_arclength(spec.branch_id)
    tol = 1e-9 * (s[1] - s[0] if len(s) > 1 else 1.0)
    inside = (s >= spec.start - tol) & (s <= spec.end + tol)
    return nodes[inside], np.clip(s[inside] - spec.start, 0.0, spec.length)


# ---------------------------------------------------------------------------
# surface


@dataclass
class SurfaceMesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3)
    inlet_vertex_ids: np.ndarray
    outlet_vertex_ids: list
    extra_edges: np.ndarray = None  # (S, 2) junction stitches
    vertex_node: np.ndarray = None  # centerline node each vertex was lofted from
    channels: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.extra_edges is None:
            self.extra_edges = np.zeros((0, 2), dtype=np.int64)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def edges(self):
        """Unique undirected vertex pairs from faces and stitches (i < j)."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]], self.extra_edges])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    def face_areas(self):
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def components(self):
        e = self.edges()
        n = self.n_vertices
        g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return connected_components(g, directed=False)

    def validate(self):
        n = self.n_vertices
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise ValueError("face index out of range")
        ext = np.ptp(self.vertices, axis=0)
        tol = 1e-12 * float(np.dot(ext, ext))
        bad = np.flatnonzero(self.face_areas() <= tol)
        if bad.size:
            raise ValueError(f"{bad.size} degenerate faces (first {int(bad[0])})")
        ncomp, _ = self.components()
        if ncomp != 1:
            raise ValueError(f"vertex graph has {ncomp} connected components")
        if len(self.inlet_vertex_ids) == 0:
            raise ValueError("empty inlet vertex set")
        return self


def _tangents(pts):
    t = np.empty_like(pts)
    t[1:-1] = pts[2:] - pts[:-2]
    t[0] = pts[1] - pts[0]
    t[-1] = pts[-1] - pts[-2]
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def transported_frames(pts, n0=None):
    """Rotation-minimising (twist-free) frames by double reflection."""
    t = _tangents(pts)
    n = np.empty_like(pts)
    if n0 is not None:
        n0 = n0 - np.dot(n0, t[0]) * t[0]
        nn = np.linalg.norm(n0)
        n[0] = n0 / nn if nn > 1e-6 else _perpendicular(t[0])
    else:
        n[0] = _perpendicular(t[0])
    for i in range(len(pts) - 1):
        v1 = pts[i + 1] - pts[i]
        c1 = np.dot(v1, v1)
        rl = n[i] - (2.0 / c1) * np.dot(v1, n[i]) * v1
        tl = t[i] - (2.0 / c1) * np.dot(v1, t[i]) * v1
        v2 = t[i + 1] - tl
        c2 = np.dot(v2, v2)
        n[i + 1] = rl - (2.0 / c2) * np.dot(v2, rl) * v2 if c2 > 1e-30 else rl
    b = np.cross(t, n)
    return t, n, b


def _check_branch(bid, pts, radii):
    seg = np.diff(pts, axis=0)
    lens = np.linalg.norm(seg, axis=1)
    if len(seg) >= 2:
        cosang = np.einsum("ij,ij->i", seg[:-1], seg[1:]) / (lens[:-1] * lens[1:])
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        with np.errstate(divide="ignore"):
            rcurv = np.where(ang > 0, 0.5 * (lens[:-1] + lens[1:]) / ang, np.inf)
        bad = np.flatnonzero(rcurv < radii[1:-1])
        if bad.size:
            raise LoftError(bid, f"curvature radius below lumen radius at node {int(bad[0]) + 1}")
    s = np.concatenate([[0.0], np.cumsum(lens)])
    d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    rmax = np.maximum(radii[:, None], radii[None, :])
    far = np.abs(s[:, None] - s[None, :]) > np.pi * rmax
    hit = far & (d < rmax)
    if hit.any():
        i, j = np.argwhere(hit)[0]
        raise LoftError(bid, f"centerline passes within one radius of itself (nodes {i}, {j})")


def loft_surface(tree: CenterlineTree, rings_per_node: int) -> SurfaceMesh:
    """Sweep a circle of ``rings_per_node`` vertices along every branch.

    Each branch becomes an open triangulated tube; the first ring of a child
    branch is tied to the parent surface with stitch edges so the vertex
    graph stays connected.
    """
    K = int(rings_per_node)
    if K < 6:
        raise ValueError("rings_per_node must be >= 6")
    theta = 2.0 * np.pi * np.arange(K) / K
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    par = tree.parents()
    verts, faces, vnode, stitches = [], [], [], []
    branch_vrange = {}
    branch_end_normal = {}
    outlets = []
    offset = 0
    for bid in range(tree.n_branches):
        nodes = tree.branch_nodes(bid)
        pts = tree.positions[nodes]
        r = tree.radii[nodes]
        if len(nodes) < 2:
            raise LoftError(bid, "branch needs at least two nodes")
        _check_branch(bid, pts, r)
        pb = -1 if par[nodes[0]] < 0 else int(tree.branch_ids[par[nodes[0]]])
        _, n, b = transported_frames(pts, branch_end_normal.get(pb))
        branch_end_normal[bid] = n[-1]
        ring = (pts[:, None, :]
                + r[:, None, None] * (cos_t[None, :, None] * n[:, None, :]
                                      + sin_t[None, :, None] * b[:, None, :]))
        N = len(nodes)
        verts.append(ring.reshape(-1, 3))
        vnode.append(np.repeat(nodes, K))
        j = np.arange(N - 1)[:, None]
        k = np.arange(K)[None, :]
        a = offset + j * K + k
        a1 = offset + j * K + (k + 1) % K
        c = a + K
        c1 = a1 + K
        faces.append(np.stack([a, a1, c1], axis=-1).reshape(-1, 3))
        faces.append(np.stack([a, c1, c], axis=-1).reshape(-1, 3))
        branch_vrange[bid] = (offset, offset + N * K)
        if nodes[-1] in set(tree.outlets):
            outlets.append(np.arange(offset + (N - 1) * K, offset + N * K))
        offset += N * K
    vertices = np.concatenate(verts)
    for bid in range(tree.n_branches):
        nodes = tree.branch_nodes(bid)
        if par[nodes[0]] < 0:
            continue
        pb = int(tree.branch_ids[par[nodes[0]]])
        lo, hi = branch_vrange[pb]
        first = np.arange(branch_vrange[bid][0], branch_vrange[bid][0] + K)
        idx, _ = pcops.knn(vertices[lo:hi], vertices[first], 1)
        stitches.append(np.stack([first, lo + idx[:, 0]], axis=1))
    root_lo = branch_vrange[int(tree.branch_ids[tree.root])][0]
    mesh = SurfaceMesh(
        vertices=vertices,
        faces=np.concatenate(faces).astype(np.int64),
        inlet_vertex_ids=np.arange(root_lo, root_lo + K),
        outlet_vertex_ids=outlets,
        extra_edges=(np.concatenate(stitches).astype(np.int64) if stitches
                     else np.zeros((0, 2), dtype=np.int64)),
        vertex_node=np.concatenate(vnode).astype(np.int64),
    )
    return mesh
