import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vffr import hemosolver as hs
from vffr import vesselgen as vg
from vffr.hemosolver import FluidModel, PressureField

from conftest import straight_tree, y_tree

Q3 = 3e-6


def poiseuille(length, r, q, fluid=FluidModel()):
    return -(8 * fluid.mu * length * q) / (np.pi * r ** 4 * fluid.rho)


def test_symmetric_split():
    f = hs.split_flows(y_tree(0.0015, 0.0015), Q3)
    ch = y_tree().children()
    a, b = [c for u in range(len(ch)) if len(ch[u]) == 2 for c in ch[u]]
    assert f.node_flows[a] == f.node_flows[b] == Q3 / 2


def test_cube_rule_split():
    tree = y_tree(0.002, 0.001)
    f = hs.split_flows(tree, Q3)
    left, right = tree.branch_nodes(1)[0], tree.branch_nodes(2)[0]
    assert f.node_flows[left] == pytest.approx(8 / 9 * Q3, rel=1e-15)
    assert f.node_flows[right] == pytest.approx(1 / 9 * Q3, rel=1e-15)


def test_path_carries_inflow():
    f = hs.split_flows(straight_tree(), Q3)
    assert np.all(f.edge_flows == Q3)


def test_split_rejects_nonpositive():
    with pytest.raises(ValueError):
        hs.split_flows(straight_tree(), 0.0)


def test_straight_tube_matches_poiseuille():
    tree = straight_tree(length=0.1, radius=0.002)
    dp = hs.solve_pressure_drops(tree, hs.split_flows(tree, Q3)).values
    assert dp[tree.root] == 0.0
    assert poiseuille(0.1, 0.002, Q3) == pytest.approx(-0.15766, rel=1e-4)
    assert dp[-1] == pytest.approx(-0.15766, rel=1e-4)
    assert dp[-1] == pytest.approx(poiseuille(0.1, 0.002, Q3), rel=1e-4)


def test_viscous_term_is_linear_in_flow():
    tree = straight_tree()
    a = hs.solve_pressure_drops(tree, hs.split_flows(tree, Q3)).values
    b = hs.solve_pressure_drops(tree, hs.split_flows(tree, 2 * Q3)).values
    assert np.allclose(b, 2 * a, rtol=1e-14, atol=0)


def test_stenosis_adds_expansion_loss():
    fluid = FluidModel()
    base = straight_tree(radius=0.002)
    spec = vg.StenosisSpec(0, 0.02, 0.01, 50)
    tree = vg.insert_stenoses(base, [spec])
    flows = hs.split_flows(tree, Q3)
    dp = hs.solve_pressure_drops(tree, flows, fluid).values
    a0 = np.pi * 0.002 ** 2
    expected = 0.5 * fluid.k_t * (a0 / (a0 / 4) - 1) ** 2 * (Q3 / a0) ** 2
    assert hs.stenosis_loss(spec, tree, Q3, fluid) == pytest.approx(expected, rel=1e-12)
    distal = vg.stenosis_nodes(tree, spec)[0][-1]
    step = dp[distal - 1] - dp[distal]
    c = 8 * fluid.mu / (np.pi * fluid.rho)
    visc = 0.5 * 0.0005 * c * Q3 * (tree.radii[distal - 1] ** -4 + tree.radii[distal] ** -4)
    assert step == pytest.approx(visc + expected, rel=1e-12)


def test_nonpositive_radius_names_node():
    tree = straight_tree()
    tree.radii[7] = 0.0
    with pytest.raises(hs.SolverError, match="node 7"):
        hs.solve_pressure_drops(tree, hs.split_flows(straight_tree(), Q3))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_conservation_and_monotonicity(seed):
    cfg = vg.GeneratorConfig()
    tree = vg.generate_centerline(cfg, seed)
    tree = vg.insert_stenoses(tree, vg.sample_stenoses(tree, cfg, seed))
    f = hs.split_flows(tree, Q3)
    ch = tree.children()
    for u in range(tree.n_nodes):
        if len(ch[u]) > 1:
            qp = f.node_flows[u]
            assert abs(qp - sum(f.node_flows[c] for c in ch[u])) < 1e-12 * qp
    dp = hs.solve_pressure_drops(tree, f).values
    assert dp[tree.root] == 0.0
    assert np.all(dp[tree.edges[:, 1]] <= dp[tree.edges[:, 0]])
    assert np.all(f.edge_flows > 0) and f.node_flows[tree.root] == Q3


def test_map_nearest_node():
    tree = straight_tree(length=0.01)
    mesh = vg.loft_surface(tree, 8)
    drops = PressureField(-np.arange(tree.n_nodes, dtype=float))
    out = hs.map_drops_to_surface(mesh, tree, drops).values
    assert np.array_equal(out, drops.values[mesh.vertex_node])
    const = hs.map_drops_to_surface(mesh, tree, PressureField(np.full(tree.n_nodes, -0.3))).values
    assert np.all(const == -0.3)


def test_map_tie_lower_index():
    tree = straight_tree(length=0.001, step=0.0005)  # nodes at x = 0, 0.5, 1 mm
    mesh = vg.SurfaceMesh(np.array([[0.00025, 0.001, 0.0]]), np.zeros((0, 3), dtype=np.int64), [0], [])
    out = hs.map_drops_to_surface(mesh, tree, PressureField(np.array([0.0, -1.0, -2.0]))).values
    assert out.tolist() == [0.0]


def test_vffr_examples():
    v, bad = hs.compute_vffr(np.array([0.0]), 100)
    assert v[0] == 1.0 and not bad
    dp = -2.51552
    assert dp * 1060 / 133.322 == pytest.approx(-20.0, abs=1e-4)
    assert hs.compute_vffr(np.array([dp]), 100)[0][0] == pytest.approx(0.80, abs=2e-6)
    assert hs.compute_vffr(np.array([dp]), 80)[0][0] == pytest.approx(0.75, abs=2e-6)


def test_vffr_degenerate_flag():
    v, bad = hs.compute_vffr(np.array([0.0, -20.0]), 80)
    assert bad and v[1] <= 0
    with pytest.raises(ValueError):
        hs.compute_vffr(np.zeros(1), 0)


def test_density_scaling_leaves_vffr():
    tree = straight_tree()
    f = hs.split_flows(tree, Q3)
    a = FluidModel()
    b = FluidModel(rho=2 * a.rho)
    da = hs.solve_pressure_drops(tree, f, a).values
    db = hs.solve_pressure_drops(tree, f, b).values
    assert np.allclose(db, da / 2, rtol=1e-14, atol=0)
    assert np.allclose(hs.compute_vffr(da, 100, a)[0], hs.compute_vffr(db, 100, b)[0], rtol=1e-14)


def test_fluid_validation():
    with pytest.raises(ValueError):
        FluidModel(mu=0)


def test_solve_all_inflows_grows_with_q():
    tree = y_tree()
    out = hs.solve_all_inflows(tree)
    assert sorted(out) == [3, 5, 7]
    assert out[7].values.min() < out[5].values.min() < out[3].values.min() < 0
