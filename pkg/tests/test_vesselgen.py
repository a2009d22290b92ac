import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vffr import vesselgen as vg
from vffr.vesselgen import GeneratorConfig, StenosisSpec

from conftest import straight_tree


def test_no_bifurcations_gives_single_path():
    tree = vg.generate_centerline(GeneratorConfig(bifurcations=(0, 0)), 4)
    assert len(tree.outlets) == 1
    assert tree.n_branches == 1
    assert len(tree.edges) == tree.n_nodes - 1
    assert np.all(np.diff(tree.radii) <= 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_murray_rule_at_bifurcations(seed):
    tree = vg.generate_centerline(GeneratorConfig(), seed)
    ch = tree.children()
    for u in range(tree.n_nodes):
        if len(ch[u]) == 2:
            rp = tree.radii[u] ** 3
            rc = sum(tree.radii[c] ** 3 for c in ch[u])
            assert abs(rp - rc) <= 1e-9 * rp


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_tree_invariants(seed):
    cfg = GeneratorConfig()
    tree = vg.generate_centerline(cfg, seed)
    tree.validate(step=cfg.node_step)
    par = tree.parents()
    for u, v in tree.edges:
        if tree.branch_ids[u] == tree.branch_ids[v]:
            assert tree.radii[v] <= tree.radii[u]
    assert sorted(tree.outlets) == sorted(set(range(tree.n_nodes)) - set(par[par >= 0].tolist()))


def test_generation_is_deterministic():
    a = vg.generate_centerline(GeneratorConfig(), 123)
    b = vg.generate_centerline(GeneratorConfig(), 123)
    assert a.dumps() == b.dumps()


def test_empty_range_rejected():
    with pytest.raises(vg.ConfigError):
        vg.generate_centerline(GeneratorConfig(root_radius=(0.004, 0.001)), 0)


def test_grade_zero_is_identity():
    tree = straight_tree()
    out = vg.insert_stenoses(tree, [StenosisSpec(0, 0.01, 0.008, 0)])
    assert np.array_equal(out.radii, tree.radii)


def test_grade_fifty_halves_radius():
    tree = straight_tree(radius=0.002)
    out = vg.insert_stenoses(tree, [StenosisSpec(0, 0.02, 0.01, 50)])
    assert abs(out.radii.min() - 0.001) <= 1e-12


def test_cosine_profile_closed_form():
    tree = straight_tree(radius=0.002)
    spec = StenosisSpec(0, 0.02, 0.008, 60)
    out = vg.insert_stenoses(tree, [spec])
    nodes, s = tree.branch_arclength(0)
    mid = nodes[np.argmin(np.abs(s - 0.024))]
    start = nodes[np.argmin(np.abs(s - 0.02))]
    end = nodes[np.argmin(np.abs(s - 0.028))]
    profile = lambda x: 0.002 * (1 - 0.6 * (1 - np.cos(2 * np.pi * x / 0.008)) / 2)  # noqa: E731
    assert out.radii[mid] == pytest.approx(0.4 * 0.002, rel=1e-9)
    assert out.radii[start] == pytest.approx(profile(0.0), rel=1e-9)
    assert out.radii[end] == pytest.approx(profile(0.008), rel=1e-9)


def test_stenosis_is_local_and_keeps_topology():
    tree = vg.generate_centerline(GeneratorConfig(), 9)
    specs = vg.sample_stenoses(tree, GeneratorConfig(), 9)
    out = vg.insert_stenoses(tree, specs)
    touched = np.zeros(tree.n_nodes, dtype=bool)
    for sp in specs:
        touched[vg.stenosis_nodes(tree, sp)[0]] = True
    assert np.array_equal(out.radii[~touched], tree.radii[~touched])
    assert np.array_equal(out.edges, tree.edges)
    for sp in specs:
        nodes, rel = vg.stenosis_nodes(tree, sp)
        base = tree.radii[nodes]
        assert np.min(out.radii[nodes] / base) == pytest.approx(1 - sp.grade / 100, rel=1e-9)


def test_overlapping_stenoses_rejected():
    tree = straight_tree()
    with pytest.raises(vg.StenosisOverlapError):
        vg.insert_stenoses(tree, [StenosisSpec(0, 0.01, 0.01, 30), StenosisSpec(0, 0.015, 0.01, 30)])


def test_stenosis_past_branch_end_rejected():
    with pytest.raises(vg.StenosisRangeError):
        vg.insert_stenoses(straight_tree(length=0.02), [StenosisSpec(0, 0.015, 0.01, 30)])


def test_grade_bins():
    assert [vg.grade_bin(g) for g in (0, 1, 24, 25, 49, 50, 69, 70, 99)] == [0, 1, 1, 2, 2, 3, 3, 4, 4]
    with pytest.raises(ValueError):
        StenosisSpec(0, 0.0, 0.01, 100)


def test_cylinder_loft_exact():
    r = 0.0015
    tree = straight_tree(length=0.01, radius=r, axis=(0.6, 0.0, 0.8))
    mesh = vg.loft_surface(tree, 12)
    axis = np.array([0.6, 0.0, 0.8])
    v = mesh.vertices
    radial = v - (v @ axis)[:, None] * axis[None, :]
    assert np.max(np.abs(np.linalg.norm(radial, axis=1) - r)) < 1e-9 * r


def test_loft_counts():
    n, k = 21, 10
    mesh = vg.loft_surface(straight_tree(length=0.01), k)
    assert mesh.n_vertices == n * k
    assert len(mesh.faces) == 2 * (n - 1) * k
    assert mesh.inlet_vertex_ids.tolist() == list(range(k))


def test_loft_rejects_few_rings():
    with pytest.raises(ValueError):
        vg.loft_surface(straight_tree(), 5)


def test_loft_self_intersection_reports_branch():
    t = np.linspace(0, 2 * np.pi, 60)
    pos = np.column_stack([0.002 * np.cos(t), 0.002 * np.sin(t), np.zeros_like(t)])
    tree = vg.CenterlineTree(pos, np.full(60, 0.0015), np.column_stack([np.arange(59), np.arange(1, 60)]),
                             0, [59], np.zeros(60, dtype=np.int64))
    with pytest.raises(vg.LoftError) as err:
        vg.loft_surface(tree, 8)
    assert err.value.branch_id == 0


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_generated_mesh_is_valid(seed):
    tree = vg.generate_centerline(GeneratorConfig(), seed)
    mesh = vg.loft_surface(tree, 8)
    mesh.validate()
    assert mesh.components()[0] == 1
    assert len(mesh.outlet_vertex_ids) == len(tree.outlets)


def test_transported_frames_are_orthonormal():
    t = np.linspace(0, 1, 50)
    pts = np.column_stack([t, 0.2 * np.sin(3 * t), 0.1 * t ** 2])
    tan, n, b = vg.transported_frames(pts)
    for a, c in ((tan, n), (tan, b), (n, b)):
        assert np.allclose(np.einsum("ij,ij->i", a, c), 0, atol=1e-12)
    assert np.allclose(np.linalg.norm(n, axis=1), 1)


def test_tree_json_round_trip():
    tree = vg.generate_centerline(GeneratorConfig(), 5)
    back = vg.CenterlineTree.from_json(json.loads(tree.dumps()))
    assert back.dumps() == tree.dumps()


def test_config_round_trip():
    cfg = replace(GeneratorConfig(), bifurcations=(2, 2))
    assert GeneratorConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
