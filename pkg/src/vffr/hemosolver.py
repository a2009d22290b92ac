"""Stationary reduced-order pressure drops on a centerline tree.

Viscous losses follow kinematic Poiseuille flow integrated edge by edge with
the trapezoid rule; each lesion adds a lumped expansion loss at its distal
end.  Pressures are kinematic (m^2/s^2, i.e. Pa per kg/m^3) and expressed as
drops relative to the inlet, so they are zero at the root and negative
downstream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vffr import pcops
from vffr.vesselgen import CenterlineTree, stenosis_nodes

MMHG_PA = 133.322
ML_PER_S = 1e-6  # m^3/s
INFLOWS_ML_S = (3, 5, 7)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class FluidModel:
    mu: float = 3.5e-3  # Pa s
    rho: float = 1060.0  # kg/m^3
    k_t: float = 1.52

    def __post_init__(self):
        if self.mu <= 0 or self.rho <= 0 or self.k_t < 0:
            raise ValueError("fluid model needs mu > 0, rho > 0, k_t >= 0")

    def to_dict(self):
        return {"mu": self.mu, "rho": self.rho, "k_t": self.k_t, "mmhg_pa": MMHG_PA}


@dataclass
class FlowAssignment:
    edge_flows: np.ndarray  # aligned with tree.edges
    node_flows: np.ndarray  # flow through the edge entering each node (root: Q_in)


@dataclass
class PressureField:
    values: np.ndarray
    inflow_ml_s: float | None = None


def _outlet_cube_sums(tree: CenterlineTree, order, children):
    s = np.zeros(tree.n_nodes)
    outlets = set(int(o) for o in tree.outlets)
    for u in order[::-1]:
        if children[u]:
            s[u] = sum(s[c] for c in children[u])
        elif u in outlets:
            s[u] = tree.radii[u] ** 3
    return s


def split_flows(tree: CenterlineTree, q_in: float) -> FlowAssignment:
    """Distribute ``q_in`` (m^3/s) in proportion to downstream outlet r^3 sums."""
    if not q_in > 0:
        raise ValueError("inflow must be positive")
    order = tree.topological_order()
    children = tree.children()
    cube = _outlet_cube_sums(tree, order, children)
    q = np.zeros(tree.n_nodes)
    q[tree.root] = q_in
    for u in order:
        kids = children[u]
        if len(kids) == 1:
            q[kids[0]] = q[u]
        elif kids:
            total = sum(cube[c] for c in kids)
            if total <= 0:
                raise SolverError(f"no outlet downstream of node {u}")
            for c in kids:
                q[c] = q[u] * (cube[c] / total)
    return FlowAssignment(edge_flows=q[tree.edges[:, 1]], node_flows=q)


def stenosis_loss(spec, tree: CenterlineTree, q: float, fluid: FluidModel) -> float:
    """Lumped expansion loss (kinematic) of one lesion carrying flow ``q``."""
    if spec.grade == 0:
        return 0.0
    nodes, rel = stenosis_nodes(tree, spec)
    i = int(np.argmin(tree.radii[nodes]))
    baseline = tree.radii[nodes[i]] / float(spec.factor(rel[i]))
    a0 = np.pi * baseline ** 2
    a_s = np.pi * (baseline * (1.0 - spec.grade / 100.0)) ** 2
    return 0.5 * fluid.k_t * (a0 / a_s - 1.0) ** 2 * (q / a0) ** 2


def solve_pressure_drops(tree: CenterlineTree, flows: FlowAssignment,
                         fluid: FluidModel = FluidModel()) -> PressureField:
    bad = np.flatnonzero(tree.radii <= 0)
    if bad.size:
        raise SolverError(f"non-positive radius at node {int(bad[0])}")
    c = 8.0 * fluid.mu / (np.pi * fluid.rho)
    pos, r = tree.positions, tree.radii
    u, v = tree.edges[:, 0], tree.edges[:, 1]
    ds = np.linalg.norm(pos[v] - pos[u], axis=1)
    inv4 = 1.0 / r ** 4
    edge_loss = 0.5 * ds * c * flows.edge_flows * (inv4[u] + inv4[v])
    node_loss = np.zeros(tree.n_nodes)
    node_loss[v] = edge_loss
    for spec in tree.stenoses:
        nodes, _ = stenosis_nodes(tree, spec)
        distal = int(nodes[-1])
        node_loss[distal] += stenosis_loss(spec, tree, flows.node_flows[distal], fluid)
    par = tree.parents()
    dp = np.zeros(tree.n_nodes)
    for n in tree.topological_order():
        if n != tree.root:
            dp[n] = dp[par[n]] - node_loss[n]
    return PressureField(dp)


def map_drops_to_surface(mesh, tree: CenterlineTree, node_drops: PressureField) -> PressureField:
    """Each vertex copies the drop of its nearest centerline node (lower index on ties)."""
    idx, _ = pcops.knn(tree.positions, mesh.vertices, 1)
    return PressureField(np.asarray(node_drops.values)[idx[:, 0]], node_drops.inflow_ml_s)


def compute_vffr(drops, p_in: float, fluid: FluidModel = FluidModel()):
    """Pointwise vFFR from kinematic drops and an inlet pressure in mmHg.

    Returns ``(vffr, degenerate)``; ``degenerate`` is set when any point's
    absolute pressure is non-positive.
    """
    if not p_in > 0:
        raise ValueError("inlet pressure must be positive")
    values = drops.values if isinstance(drops, PressureField) else np.asarray(drops, dtype=float)
    dp_mmhg = values * fluid.rho / MMHG_PA
    vffr = (p_in + dp_mmhg) / p_in
    return vffr, bool(np.any(p_in + dp_mmhg <= 0))


def solve_all_inflows(tree: CenterlineTree, fluid: FluidModel = FluidModel(),
                      inflows=INFLOWS_ML_S) -> dict:
    """Node drops for each inflow (ml/s) keyed by the inflow value."""
    out = {}
    for q in inflows:
        field = solve_pressure_drops(tree, split_flows(tree, q * ML_PER_S), fluid)
        field.inflow_ml_s = q
        out[q] = field
    return out
