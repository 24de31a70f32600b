import math

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import synthetic_maps, wall_maps
from terranav import reeds_shepp as rs
from terranav.errors import InvalidEdgeError, NoFeasibleSampleError, PlanningFailure
from terranav.planner import (PathSegment, PlannedPath, PlannerConfig, SamplingBounds, SearchTree,
                              assign_desired_velocity, dem_cost_baseline, edge_cost, edge_cost_raw, path_is_clear,
                              plan, plan_with_tree, read_path_csv, rejection_sample, sampling_weight, steer,
                              weight_grid, write_path_csv, write_tree_csv)


def segment(rho, length=1.0, z=None, gamma=None):
    n = len(rho)
    pts = np.zeros((n, 3))
    pts[:, 0] = np.linspace(length / n, length, n)
    if z is not None:
        pts[:, 2] = z
    return PathSegment(pts, np.zeros(n), np.ones(n, dtype=int), pts[:, 0].copy(), length,
                       np.asarray(rho, dtype=float), 1 - np.asarray(rho, dtype=float),
                       np.zeros(n, dtype=int) if gamma is None else np.asarray(gamma))


# -- sampling ------------------------------------------------------------------

def test_sampling_weight_values():
    assert sampling_weight(0.0, 0) == 1.0
    assert sampling_weight(0.25, 0) == 0.75
    assert sampling_weight(0.25, 1) == 0.0
    np.testing.assert_array_equal(sampling_weight([0, 0.5, 1], [0, 0, 0]), [1, 0.5, 0])
    with pytest.raises(ValueError):
        sampling_weight(1.2, 0)
    with pytest.raises(ValueError):
        sampling_weight(0.2, 2)


def test_weight_grid_modes():
    tau = np.array([[0.0, 0.5], [0.3, 1.0]])
    gamma = np.array([[0, 1], [0, 1]])
    m = synthetic_maps(tau, gamma)
    np.testing.assert_allclose(weight_grid(m, "tao"), [[1, 0], [0.7, 0]])
    np.testing.assert_allclose(weight_grid(m, "tau_only"), [[1, 0.5], [0.7, 0]])
    np.testing.assert_allclose(weight_grid(m, "dem"), 1.0)


def test_first_proposal_accepted_on_free_map():
    m = synthetic_maps(np.zeros((20, 30)))
    b = SamplingBounds.from_spec(m.spec)
    rng, twin = np.random.default_rng(4), np.random.default_rng(4)
    for _ in range(500):
        node = rejection_sample(b, m, rng)
        x, y = twin.uniform(b.x_min, b.x_max), twin.uniform(b.y_min, b.y_max)
        twin.random()
        assert (node.position[0], node.position[1]) == (x, y)
        assert node.gamma == 0


def test_two_region_acceptance_ratio():
    tau = np.zeros((20, 40))
    tau[:, 20:] = 0.8  # rho 1.0 on the left, 0.2 on the right
    m = synthetic_maps(tau)
    b = SamplingBounds.from_spec(m.spec)
    rng = np.random.default_rng(7)
    n = 100_000
    xs = np.array([rejection_sample(b, m, rng).position[0] for _ in range(n)])
    left = int(np.sum(xs < 2.0))
    counts = np.array([left, n - left])
    expected = n * np.array([1.0, 0.2]) / 1.2
    assert chisquare(counts, expected).pvalue > 0.01
    sigma = math.sqrt(n * (1 / 1.2) * (0.2 / 1.2))
    assert abs(left - expected[0]) < 3 * sigma


def test_fully_constrained_map_has_no_sample():
    m = synthetic_maps(np.ones((10, 10)), np.ones((10, 10)))
    with pytest.raises(NoFeasibleSampleError):
        rejection_sample(SamplingBounds.from_spec(m.spec), m, np.random.default_rng(0), max_iter=2000)


def test_bounds_validation():
    with pytest.raises(ValueError):
        SamplingBounds(1, 1, 0, 2)


# -- edge costs ----------------------------------------------------------------

def test_edge_cost_clamps_negative_form():
    seg = segment(np.ones(10))
    assert edge_cost_raw(seg, 5.0) == pytest.approx(-48.5, abs=1e-12)
    assert edge_cost(seg, 5.0) == 0.0


def test_edge_cost_kappa_zero_is_length():
    for rho in (np.ones(10), np.full(7, 0.3), np.linspace(0.1, 1, 12)):
        assert edge_cost(segment(rho, 1.7), 0.0) == pytest.approx(1.7)
        assert edge_cost(segment(rho, 1.7), 0.0, "ratio") == pytest.approx(1.7)


def test_edge_cost_monotone_in_rho():
    for n in (1, 3, 10):
        for kappa in (0.5, 5.0):
            for form in ("verbatim", "ratio"):
                hi = edge_cost_raw(segment(np.ones(n)), kappa, form)
                lo = edge_cost_raw(segment(np.full(n, 0.5)), kappa, form)
                assert lo >= hi
                assert edge_cost(segment(np.full(n, 0.5)), kappa, form) >= edge_cost(segment(np.ones(n)), kappa, form)


def test_ratio_form_values():
    assert edge_cost(segment(np.ones(10)), 5.0, "ratio") == pytest.approx(1.0)
    assert edge_cost(segment(np.full(10, 0.5)), 5.0, "ratio") == pytest.approx(6.0)


def test_invalid_edges():
    with pytest.raises(InvalidEdgeError):
        edge_cost(segment(np.zeros(4)), 5.0)
    with pytest.raises(InvalidEdgeError):
        edge_cost(segment(np.ones(4), gamma=[0, 1, 0, 0]), 5.0)


def test_dem_baseline():
    assert dem_cost_baseline(segment(np.ones(10)), 5.0, 0.1, start_z=0.0) == pytest.approx(1.0)
    climb = segment(np.ones(10), 1.0, z=np.linspace(0.01, 0.1, 10))
    assert dem_cost_baseline(climb, 5.0, 0.1, start_z=0.0) == pytest.approx(1.5)
    empty = PathSegment(np.empty((0, 3)), np.empty(0), np.empty(0, dtype=int), np.empty(0), 0.0,
                        np.empty(0), np.empty(0), np.empty(0, dtype=int))
    assert dem_cost_baseline(empty) == 0.0


def test_steer_annotates_weights():
    tau = np.zeros((20, 40))
    tau[:, 20:] = 0.5
    m = synthetic_maps(tau)
    seg = steer((0.55, 1.05, 0), (3.55, 1.05, 0), 0.5, 0.1, m)
    expected = np.where(seg.points[:, 0] < 2.0, 1.0, 0.5)
    np.testing.assert_allclose(seg.rho_values, expected)


# -- search --------------------------------------------------------------------

def _flat(shape=(40, 120)):
    return synthetic_maps(np.zeros(shape))


def test_flat_plan_near_straight_line():
    path = plan((1, 2, 0), (11, 2, 0), _flat(), rng=0)
    assert path.length <= 10 * 1.05
    assert np.hypot(*(path.positions[-1, :2] - [11, 2])) <= 0.5
    assert np.all(path.desired_speed == PlannerConfig().nominal_speed)


def test_wall_gap_is_used():
    m = wall_maps()
    for seed in range(3):
        path = plan((1.0, 1.0, 0.0), (5.0, 1.0, 0.0), m, rng=seed)
        assert path_is_clear(path, m)
        _, gamma, _, _ = m.lookup(path.positions[:, 0], path.positions[:, 1])
        assert np.all(gamma == 0)
        in_wall = (path.positions[:, 0] > 2.4) & (path.positions[:, 0] < 2.8)
        assert in_wall.any()
        assert np.all(np.abs(path.positions[in_wall, 1] - 2.5) <= 0.4)


def test_enclosed_goal_fails():
    spec_shape = (50, 60)
    m0 = _flat(spec_shape)
    X, Y = m0.spec.cell_centers()
    r = np.hypot(X - 4.5, Y - 2.5)
    ring = ((r > 0.8) & (r < 1.1)).astype(np.int8)
    m = synthetic_maps(ring.astype(float), ring)
    with pytest.raises(PlanningFailure) as err:
        plan((1, 2.5, 0), (4.5, 2.5, 0), m, PlannerConfig(iterations=600), rng=0)
    assert err.value.tree is not None
    assert err.value.stats["closest_goal_distance"] > 0.5


def test_endpoint_checks():
    m = wall_maps()
    with pytest.raises(PlanningFailure):
        plan((1, 1, 0), (2.6, 0.5, 0), m, rng=0)  # goal inside the wall
    with pytest.raises(PlanningFailure):
        plan((1, 1, 0), (9, 1, 0), m, rng=0)  # goal off the map


def _check_tree(tree: SearchTree, maps, cfg: PlannerConfig):
    rho = weight_grid(maps, cfg.mode)
    for k in range(1, tree.size):
        p = tree.parent[k]
        assert 0 <= p < tree.size and p != k
        assert k in tree.children[p]
        seg = steer(tree.pose[p], tree.pose[k], cfg.turning_radius, cfg.delta_l, maps, weights=rho)
        assert np.all(seg.gamma_values == 0)
        assert seg.length == pytest.approx(tree.edge_length[k], abs=1e-9)
        assert edge_cost(seg, cfg.kappa, cfg.cost_form) == pytest.approx(tree.edge_cost[k], abs=1e-9)
    # Costs along the chain sum to the stored cost-from-start.
    for k in range(tree.size):
        chain = tree.chain(k)
        assert chain[0] == 0
        assert sum(tree.edge_cost[c] for c in chain[1:]) == pytest.approx(tree.cost[k], abs=1e-9)
        assert sum(tree.edge_length[c] for c in chain[1:]) == pytest.approx(tree.length[k], abs=1e-9)
    assert sum(len(c) for c in tree.children[:tree.size]) == tree.size - 1


@pytest.mark.parametrize("form", ["verbatim", "ratio"])
def test_tree_consistency(form):
    rng = np.random.default_rng(3)
    tau = np.clip(rng.random((50, 60)), 0, 0.9)
    m0 = wall_maps()
    m = synthetic_maps(np.maximum(tau, m0.trav.cells), m0.constraints.cells)
    cfg = PlannerConfig(cost_form=form, iterations=800)
    try:
        res = plan_with_tree((1, 1, 0), (5, 1, 0), m, cfg, rng=1)
        tree = res.tree
    except PlanningFailure as e:
        tree = e.tree
    assert tree.size > 50
    _check_tree(tree, m, cfg)


def test_rewiring_never_raises_cost(monkeypatch):
    original = SearchTree.rewire
    seen = []

    def checked(self, k, parent, cost, raw, length):
        before = self.cost[:self.size].copy()
        original(self, k, parent, cost, raw, length)
        assert np.all(self.cost[:self.size] <= before + 1e-12)
        seen.append(k)

    monkeypatch.setattr(SearchTree, "rewire", checked)
    rng = np.random.default_rng(5)
    m = synthetic_maps(rng.uniform(0, 0.8, (40, 60)))
    plan_with_tree((0.5, 0.5, 0), (5.5, 3.5, 0), m, PlannerConfig(cost_form="ratio", iterations=800), rng=2)
    assert seen


def test_kappa_zero_converges_to_reeds_shepp_distance():
    m = _flat((50, 80))
    start, goal = (1.0, 1.0, 0.0), (6.0, 3.5, math.pi / 2)
    d = rs.path_length(start, goal, 0.5)
    lengths = [plan(start, goal, m, PlannerConfig(kappa=0.0), rng=s).length for s in range(20)]
    assert abs(np.median(lengths) - d) <= 0.1 * d


def test_determinism():
    m = wall_maps()
    a = plan_with_tree((1, 1, 0), (5, 1, 0), m, rng=11)
    b = plan_with_tree((1, 1, 0), (5, 1, 0), m, rng=11)
    np.testing.assert_array_equal(a.path.positions, b.path.positions)
    np.testing.assert_array_equal(a.path.headings, b.path.headings)
    np.testing.assert_array_equal(a.tree.pose[:a.tree.size], b.tree.pose[:b.tree.size])
    assert a.stats == b.stats


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(mode="astar")
    with pytest.raises(ValueError):
        PlannerConfig(cost_form="other")
    with pytest.raises(ValueError):
        PlannerConfig(delta_l=0)
    with pytest.raises(ValueError):
        PlannerConfig(nominal_speed=1.5)


# -- velocity and export ------------------------------------------------------

def _path(n):
    pos = np.column_stack([np.arange(n) * 0.1, np.zeros(n), np.zeros(n)])
    return PlannedPath(pos, np.zeros(n), np.ones(n, dtype=int), np.zeros(n), np.zeros(n))


def test_assign_desired_velocity():
    assert np.all(assign_desired_velocity(_path(7), 0.5).desired_speed == 0.5)
    assert len(assign_desired_velocity(_path(7), 0.5).desired_speed) == 7
    assert len(assign_desired_velocity(_path(0), 0.5).desired_speed) == 0
    with pytest.raises(ValueError):
        assign_desired_velocity(_path(3), 0.0)
    with pytest.raises(ValueError):
        assign_desired_velocity(_path(3), 2.0, speed_max=1.0)


def test_path_csv_round_trip(tmp_path):
    m = wall_maps()
    res = plan_with_tree((1, 1, 0), (5, 1, 0), m, rng=0)
    write_path_csv(tmp_path / "p.csv", res.path)
    back = read_path_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.positions, res.path.positions)
    np.testing.assert_array_equal(back.headings, res.path.headings)
    np.testing.assert_array_equal(back.desired_speed, res.path.desired_speed)
    np.testing.assert_array_equal(back.tau, res.path.tau)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "x,y,z,heading,desired_speed,tau"
    write_tree_csv(tmp_path / "t.csv", res.tree)
    assert len((tmp_path / "t.csv").read_text().splitlines()) == res.tree.size + 1


def test_read_path_rejects_missing_columns(tmp_path):
    (tmp_path / "bad.csv").write_text("x,y\n0,0\n")
    with pytest.raises(ValueError):
        read_path_csv(tmp_path / "bad.csv")
