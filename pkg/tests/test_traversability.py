import itertools
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment
from scipy.spatial.transform import Rotation

from terranav.errors import DegenerateFitError, DegenerateFrameError
from terranav.gridmap import GridSpec, HeightMap, Kernel, compute_normal_map, extract_kernel, fit_plane
from terranav.traversability import (AssessmentConfig, CellFeatures, FeatureThresholds, FeatureWeights,
                                     apparent_traversability, assess, build_maps, bumpiness_feature,
                                     compute_features, emd_1d, normalize_features, regional_constraint,
                                     relative_traversability, relative_traversability_batch, slope_feature,
                                     sparsity_feature)

TH = FeatureThresholds()
W = FeatureWeights()


def test_weights_validation():
    with pytest.raises(ValueError):
        FeatureWeights(0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        FeatureThresholds(r_min=0.8, r_max=0.2)


@pytest.mark.parametrize("normal, expected", [
    ((0, 0, 1), 0.0),
    ((1, 0, 0), math.pi / 2),
    (np.array([0, -0.2, 1]) / math.sqrt(1.04), math.atan(0.2)),
])
def test_slope(normal, expected):
    assert slope_feature(normal) == pytest.approx(expected, abs=1e-12)


def test_slope_rejects_non_unit():
    with pytest.raises(ValueError):
        slope_feature((0, 0, 2))


@pytest.mark.parametrize("r, expected", [(0.1, 0.0), (0.5, 0.5), (0.9, 1.0), (0.2, 0.0), (0.8, 1.0)])
def test_sparsity(r, expected):
    assert sparsity_feature(r, TH) == pytest.approx(expected, abs=1e-12)


def _kernel(points):
    pts = np.asarray(points, dtype=float)
    return Kernel((0, 0), 5, pts, 25 - len(pts))


def _hungarian_bumpiness(kernel, fit):
    obs = kernel.points[:, 2]
    plane = fit.height_at(kernel.points[:, 0], kernel.points[:, 1])
    cost = np.abs(obs[:, None] - plane[None, :])
    r, c = linear_sum_assignment(cost)
    return cost[r, c].sum() / len(obs)


def test_bumpiness_on_plane_is_zero():
    xy = np.array(list(itertools.product([-0.1, 0, 0.1], repeat=2)))
    k = _kernel(np.column_stack([xy, 0.3 * xy[:, 0]]))
    assert bumpiness_feature(k, fit_plane(k)) == pytest.approx(0.0, abs=1e-12)


def test_bumpiness_two_residuals():
    # Fitted plane z = 0 with residuals +0.1 and -0.1 at the two off-plane points.
    pts = [(-0.1, -0.1, 0.0), (0.1, -0.1, 0.0), (-0.1, 0.1, 0.0), (0.1, 0.1, 0.0), (0.0, 0.0, 0.1),
           (0.0, 0.05, -0.1)]
    k = _kernel(pts)
    fit = fit_plane(k)
    assert bumpiness_feature(k, fit) == pytest.approx(_hungarian_bumpiness(k, fit), abs=1e-12)
    assert emd_1d([0.1, -0.1], [0.0, 0.0]) == pytest.approx(0.1)


def test_bumpiness_matches_hungarian_random():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(3, 13))
        k = _kernel(np.column_stack([rng.uniform(-0.25, 0.25, (n, 2)), rng.normal(0, 0.1, n)]))
        try:
            fit = fit_plane(k)
        except DegenerateFitError:
            continue
        assert bumpiness_feature(k, fit) == pytest.approx(_hungarian_bumpiness(k, fit), abs=1e-9)


def test_emd_requires_equal_sizes():
    with pytest.raises(ValueError):
        emd_1d([1, 2], [1])


def test_normalize():
    s, p, b = normalize_features(CellFeatures(math.pi / 4, 0.3, 0.0))
    assert (s, p, b) == (pytest.approx(0.5), 0.3, 0.0)
    assert normalize_features(CellFeatures(0, 0, 0.2))[2] == 1.0


@pytest.mark.parametrize("feats, expected", [((0, 0, 0), 0.0), ((1, 1, 1), 1.0), ((0.5, 0, 0.25), 0.25)])
def test_apparent_traversability(feats, expected):
    assert apparent_traversability(feats, W) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("feats, expected", [((0.8, 0.1, 0.1), 1), ((0.8, 0.9, 0.1), 0), ((0, 0, 0), 0)])
def test_regional_constraint(feats, expected):
    assert regional_constraint(feats, TH) == expected


def test_regional_constraint_all_orderings():
    eps = (TH.eps_slope, TH.eps_sparsity, TH.eps_bumpiness)
    for above in itertools.product([False, True], repeat=3):
        feats = tuple(e + 0.05 if a else e - 0.05 for e, a in zip(eps, above))
        s_hi, p_hi, b_hi = above
        assert regional_constraint(feats, TH) == int((s_hi or b_hi) and not p_hi)


@given(st.integers(0, 2), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_tau_monotone_in_each_feature(k, a, b, c):
    base = [a, b, c]
    prev = -1.0
    for v in np.linspace(0, 1, 100):
        base[k] = v
        tau = apparent_traversability(tuple(base), W)
        assert tau >= prev - 1e-15
        prev = tau


def test_flat_map_interior_zero_border_sparsity():
    spec = GridSpec(12, 14, 0.1)
    hmap = HeightMap(spec, np.zeros(spec.shape))
    trav, cons = build_maps(hmap, compute_normal_map(hmap, 5))
    assert np.all(trav.cells[2:-2, 2:-2] == 0.0)
    assert np.all(cons.cells == 0)
    # Border kernels are clipped; clipped cells count as vacant.
    corner_r = 16 / 25
    assert trav.cells[0, 0] == pytest.approx(W.alpha_sparsity * sparsity_feature(corner_r, TH), abs=1e-12)
    edge_r = 10 / 25
    assert trav.cells[0, 6] == pytest.approx(W.alpha_sparsity * sparsity_feature(edge_r, TH), abs=1e-12)


def _direct(hmap, cfg=AssessmentConfig()):
    """Per-cell scalar evaluation of the whole pipeline, the oracle for build_maps."""
    H, Wd = hmap.spec.shape
    tau = np.ones((H, Wd))
    gamma = np.zeros((H, Wd), dtype=int)
    for i in range(H):
        for j in range(Wd):
            k = extract_kernel(hmap, (i, j), cfg.kernel_side)
            sparsity = sparsity_feature(k.vacancy_ratio, cfg.thresholds)
            try:
                fit = fit_plane(k)
            except DegenerateFitError:
                gamma[i, j] = regional_constraint((0.0, sparsity, 0.0), cfg.thresholds)
                continue
            feats = normalize_features(CellFeatures(slope_feature(fit.normal), sparsity,
                                                    bumpiness_feature(k, fit)), cfg)
            tau[i, j] = apparent_traversability(feats, cfg.weights)
            gamma[i, j] = regional_constraint(feats, cfg.thresholds)
    return tau, gamma


def test_ridge_constraint_matches_direct_evaluation():
    spec = GridSpec(20, 24, 0.1)
    X, _ = spec.cell_centers()
    steep = math.tan(0.75 * math.pi / 2 + 0.02)  # normalized slope just over 0.75
    z = np.where(X < 1.0, 0.0, np.where(X < 1.4, steep * (X - 1.0), steep * 0.4))
    hmap = HeightMap(spec, z)
    trav, cons = build_maps(hmap, compute_normal_map(hmap, 5))
    tau, gamma = _direct(hmap)
    np.testing.assert_allclose(trav.cells, tau, atol=1e-9)
    np.testing.assert_array_equal(cons.cells, gamma)
    ridge_core = (X > 1.15) & (X < 1.25)
    assert cons.cells[2:-2][ridge_core[2:-2]].all()
    assert not cons.cells[:, :5].any() and not cons.cells[:, -5:].any()


def test_direct_evaluation_on_rough_map_with_holes():
    rng = np.random.default_rng(2)
    spec = GridSpec(14, 15, 0.1)
    z = rng.normal(0, 0.04, spec.shape)
    z[rng.random(spec.shape) < 0.3] = np.nan
    hmap = HeightMap(spec, z)
    maps = assess(hmap)
    tau, gamma = _direct(hmap)
    np.testing.assert_allclose(maps.trav.cells, tau, atol=1e-9)
    np.testing.assert_array_equal(maps.constraints.cells, gamma)


def test_traversability_is_weighted_feature_sum():
    rng = np.random.default_rng(4)
    spec = GridSpec(16, 16, 0.1)
    z = np.cumsum(rng.normal(0, 0.03, spec.shape), axis=1)
    z[rng.random(spec.shape) < 0.1] = np.nan
    hmap = HeightMap(spec, z)
    normals = compute_normal_map(hmap, 5)
    feats = compute_features(hmap, normals)
    trav, _ = build_maps(hmap, normals)
    expect = feats.normalized @ W.as_array()
    has = feats.has_normal
    np.testing.assert_allclose(trav.cells[has], expect[has], atol=1e-12)
    assert np.all(trav.cells[~has] == 1.0)


def test_flatness_option():
    spec = GridSpec(10, 10, 0.1)
    rng = np.random.default_rng(0)
    hmap = HeightMap(spec, rng.normal(0, 0.02, spec.shape))
    a = assess(hmap, AssessmentConfig(roughness="flatness"))
    b = assess(hmap)
    assert a.trav.cells.shape == b.trav.cells.shape
    assert not np.allclose(a.trav.cells, b.trav.cells)


# -- relative traversability ------------------------------------------------------------------------

def test_psi_flat_aligned():
    assert relative_traversability((1, 0, 0), (0, 0, 1), (1, 0, 0)).psi == pytest.approx(0.0, abs=1e-15)


def _symbolic_psi(q, n, p):
    """Independent sympy evaluation of the frame equations."""
    q, n, p = (sp.Matrix([sp.nsimplify(v) for v in vec]) for vec in (q, n, p))
    e_z = n
    t = p - (p.dot(e_z)) * e_z
    e_x = t / sp.sqrt(t.dot(t))
    e_y = e_x.cross(e_z)
    q_xz = q - q.dot(e_y) * e_y
    q_xz = q_xz / sp.sqrt(q_xz.dot(q_xz))
    p_hat = p / sp.sqrt(p.dot(p))
    return float(sp.asin(q_xz.cross(p_hat).dot(e_y)).evalf(30))


def test_psi_pitched_robot_level_path():
    a = math.radians(20)
    fwd = (math.cos(a), 0.0, math.sin(a))
    psi = relative_traversability(fwd, (0, 0, 1), (1, 0, 0)).psi
    assert abs(psi) == pytest.approx(0.3490658503988659, abs=1e-12)
    assert psi == pytest.approx(_symbolic_psi(fwd, (0, 0, 1), (1, 0, 0)), abs=1e-12)
    assert psi < 0  # robot pitched above the path


def test_psi_positive_when_path_climbs():
    a = math.radians(15)
    psi = relative_traversability((1, 0, 0), (0, 0, 1), (math.cos(a), 0, math.sin(a))).psi
    assert psi == pytest.approx(a, abs=1e-12)


def test_psi_matches_symbolic_on_random_inputs():
    rng = np.random.default_rng(9)
    for _ in range(20):
        n = rng.normal(size=3)
        n[2] = abs(n[2]) + 0.5
        n /= np.linalg.norm(n)
        q = rng.normal(size=3)
        q /= np.linalg.norm(q)
        p = rng.normal(size=3)
        assert relative_traversability(q, n, p).psi == pytest.approx(_symbolic_psi(q, n, p), abs=1e-9)


def test_psi_forward_equal_to_path():
    n = np.array([0.1, -0.2, 1.0])
    n /= np.linalg.norm(n)
    p = np.array([1.0, 0.5, 0.0])
    p = p - (p @ n) * n
    p /= np.linalg.norm(p)
    assert relative_traversability(p, n, p).psi == pytest.approx(0.0, abs=1e-12)


def test_psi_degenerate_frame():
    with pytest.raises(DegenerateFrameError):
        relative_traversability((1, 0, 0), (0, 0, 1), (0, 0, 2))


unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: 0.2 < math.sqrt(sum(c * c for c in v)))


def _valid_inputs(q, n, p):
    q = np.array(q) / np.linalg.norm(q)
    n = np.array(n) / np.linalg.norm(n)
    p = np.array(p)
    t = p - (p @ n) * n
    if np.linalg.norm(t) < 0.1 * np.linalg.norm(p):
        return None
    e_x = t / np.linalg.norm(t)
    e_y = np.cross(e_x, n)
    if np.linalg.norm(q - (q @ e_y) * e_y) < 0.1:
        return None
    return q, n, p


@given(unit, unit, unit, st.floats(0.01, 100))
def test_frame_orthonormal_and_scale_invariant(q, n, p, scale):
    got = _valid_inputs(q, n, p)
    if got is None:
        return
    q, n, p = got
    r = relative_traversability(q, n, p)
    F = np.column_stack([r.e_x, r.e_y, r.e_z])
    np.testing.assert_allclose(F.T @ F, np.eye(3), atol=1e-9)
    # e_y = e_x x e_z, so the frame (e_x, e_y, e_z) has determinant -1.
    assert np.linalg.det(F) == pytest.approx(-1.0, abs=1e-9)
    # Compare sines: arcsin is ill-conditioned next to +-pi/2.
    assert math.sin(relative_traversability(q, n, scale * p).psi) == pytest.approx(math.sin(r.psi), abs=1e-12)


@given(unit, unit, unit, st.integers(0, 2 ** 31))
def test_psi_rotation_invariant(q, n, p, seed):
    got = _valid_inputs(q, n, p)
    if got is None:
        return
    q, n, p = got
    R = Rotation.random(random_state=seed).as_matrix()
    a = relative_traversability(q, n, p).psi
    b = relative_traversability(R @ q, R @ n, R @ p).psi
    assert math.sin(b) == pytest.approx(math.sin(a), abs=1e-12)


def test_batch_matches_scalar():
    rng = np.random.default_rng(3)
    q = np.array([0.9, 0.1, 0.2])
    q /= np.linalg.norm(q)
    N = rng.normal(size=(50, 3))
    N[:, 2] = np.abs(N[:, 2]) + 0.5
    N /= np.linalg.norm(N, axis=1)[:, None]
    P = rng.normal(size=(50, 3))
    batch = relative_traversability_batch(q, N, P)
    for k in range(50):
        assert batch[k] == pytest.approx(relative_traversability(q, N[k], P[k]).psi, abs=1e-12)
    assert np.isnan(relative_traversability_batch(q, [[0, 0, 1.0]], [[0, 0, 1.0]]))[0]
