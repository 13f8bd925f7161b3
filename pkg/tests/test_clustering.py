import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellfree_rmmse.channel import (CsiModel, LargeScaleCoefficients, NetworkGeometry,
                                    PropagationParams, draw_channel, large_scale, random_geometry)
from cellfree_rmmse.clustering import (ClusterPlan, InfeasiblePartition, analytic_psi,
                                       assign_clusters, build_selection, in_cluster_mask,
                                       monte_carlo_psi, ocl_mask, partition_channels,
                                       write_cluster_csv)


def _network(M=24, K=6, seed=0, shadow=8.0):
    rng = np.random.default_rng(seed)
    geom = random_geometry(M, K, 400.0, rng)
    lsc = large_scale(geom, PropagationParams(shadow_sigma_db=shadow), rng)
    return geom, lsc


def test_single_cluster():
    geom, lsc = _network()
    plan = assign_clusters(lsc, geom, 1)
    assert np.all(plan.ap_cluster == 0) and np.all(plan.user_cluster == 0)
    assert not plan.selection.any()
    ch = draw_channel(lsc, CsiModel(0.1), np.random.default_rng(1))
    parts = partition_channels(ch, plan, lsc)
    np.testing.assert_array_equal(parts.g_hat_eff, ch.g_hat)
    assert not parts.g_ocl_true.any() and not parts.g_ocl_hat.any()
    assert not parts.psi.any()


def test_two_by_two_nearest_pairing():
    aps = np.array([[10.0, 10.0], [390.0, 390.0]])
    users = np.array([[385.0, 392.0], [12.0, 5.0]])
    geom = NetworkGeometry(aps, users, 400.0)
    lsc = large_scale(geom, PropagationParams(shadow_sigma_db=0.0), np.random.default_rng(0))
    plan = assign_clusters(lsc, geom, 2)
    # brute force: every user sits with the AP of largest gain
    for k in range(2):
        assert plan.user_cluster[k] == plan.ap_cluster[np.argmax(lsc.zeta[:, k])]
    assert plan.user_cluster[0] == plan.ap_cluster[1]
    assert plan.user_cluster[1] == plan.ap_cluster[0]


def test_reference_sized_partition():
    geom, lsc = _network()
    plan = assign_clusters(lsc, geom, 3)
    Mi, Ki = plan.cluster_sizes
    assert Mi.sum() == 24 and Ki.sum() == 6
    assert np.all(Mi >= 1) and np.all(Ki >= 1)
    assert len(plan.ap_cluster) == 24 and len(plan.user_cluster) == 6


def test_empty_user_cluster_repaired():
    # all users cluster next to AP 0, far from the others
    aps = np.array([[5.0, 5.0], [200.0, 200.0], [395.0, 395.0], [10.0, 380.0]])
    users = np.array([[6.0, 6.0], [7.0, 4.0], [4.0, 8.0], [9.0, 9.0]])
    geom = NetworkGeometry(aps, users, 400.0)
    lsc = large_scale(geom, PropagationParams(shadow_sigma_db=0.0), np.random.default_rng(0))
    plan = assign_clusters(lsc, geom, 3)
    assert np.all(plan.cluster_sizes[1] >= 1)


def test_infeasible_partition():
    geom, lsc = _network(M=4, K=2)
    with pytest.raises(InfeasiblePartition):
        assign_clusters(lsc, geom, 3)


def test_assignment_deterministic():
    geom, lsc = _network(seed=4)
    a = assign_clusters(lsc, geom, 3, seed=11)
    b = assign_clusters(lsc, geom, 3, seed=11)
    np.testing.assert_array_equal(a.ap_cluster, b.ap_cluster)
    np.testing.assert_array_equal(a.user_cluster, b.user_cluster)


def test_plan_invariants_enforced():
    with pytest.raises(ValueError):
        ClusterPlan(2, [0, 0, 1], [0, 0], np.zeros((2, 3), bool))
    sel = np.zeros((2, 2), bool)
    sel[0, 0] = True
    with pytest.raises(ValueError):
        ClusterPlan(2, [0, 1], [0, 1], sel)


def test_selection_all_and_none():
    geom, lsc = _network()
    plan = assign_clusters(lsc, geom, 3)
    full = build_selection(plan, lsc, "ALL")
    foreign = plan.ap_cluster[None, :] != np.arange(3)[:, None]
    np.testing.assert_array_equal(full.selection, foreign)
    none = build_selection(plan, lsc, math.inf)
    assert not none.selection.any()
    assert not analytic_psi(lsc, none).any()


def test_selection_threshold_toy():
    # two clusters, AP 1 (cluster 1) has one strong gain toward user 0 (cluster 0)
    zeta = np.array([[1e-9, 1e-14],
                     [5e-11, 1e-9],
                     [1e-14, 1e-9]])
    lsc = LargeScaleCoefficients(zeta, 1e-13)
    plan = ClusterPlan(2, [0, 1, 1], [0, 1], np.zeros((2, 3), bool))
    sel = build_selection(plan, lsc, 20.0).selection
    # level 1e-11: only AP1->cluster0 (5e-11) and AP0->cluster1 (1e-14) compete
    expected = np.zeros((2, 3), bool)
    expected[0, 1] = True
    np.testing.assert_array_equal(sel, expected)


def test_partition_entries_and_norms():
    geom, lsc = _network(seed=2)
    plan = assign_clusters(lsc, geom, 3)
    ch = draw_channel(lsc, CsiModel(0.05), np.random.default_rng(3))
    for thr in ("ALL", 0.0, 10.0):
        p = build_selection(plan, lsc, thr)
        parts = partition_channels(ch, p, lsc)
        inside, ocl = in_cluster_mask(p), ocl_mask(p)
        assert not np.any(inside & ocl)
        np.testing.assert_array_equal(parts.g_hat_eff[inside], ch.g_hat[inside])
        assert np.all(parts.g_hat_eff[~inside] == 0)
        np.testing.assert_array_equal(parts.g_ocl_hat[ocl], ch.g_hat[ocl])
        np.testing.assert_array_equal(parts.g_ocl_true[ocl], ch.g_true[ocl])
        assert np.all(parts.g_ocl_true[~ocl] == 0)
        lhs = np.linalg.norm(parts.g_hat_eff) ** 2 + np.linalg.norm(parts.g_ocl_hat) ** 2
        total = np.linalg.norm(ch.g_hat) ** 2
        if thr == "ALL":
            assert lhs == pytest.approx(total, rel=1e-13)
        else:
            assert lhs <= total * (1 + 1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-30.0, 60.0))
def test_masks_disjoint_property(seed, thr):
    geom, lsc = _network(M=8, K=4, seed=seed)
    plan = build_selection(assign_clusters(lsc, geom, 2), lsc, thr)
    inside, ocl = in_cluster_mask(plan), ocl_mask(plan)
    assert not np.any(inside & ocl)
    psi = analytic_psi(lsc, plan)
    assert np.all(np.diag(psi) >= 0)
    np.testing.assert_array_equal(psi, np.diag(np.diag(psi)))


def test_psi_single_pair():
    zeta = np.array([[1.0, 2.0], [3.0, 4.0]])
    sel = np.zeros((2, 2), bool)
    sel[1, 0] = True  # AP 0 interferes with cluster 1 (user 1)
    plan = ClusterPlan(2, [0, 1], [0, 1], sel)
    psi = analytic_psi(zeta, plan)
    expected = np.zeros((2, 2))
    expected[0, 0] = 2.0
    np.testing.assert_array_equal(psi, expected)


def test_psi_monte_carlo_small():
    geom, lsc = _network(M=5, K=3, seed=7)
    plan = assign_clusters(lsc, geom, 2)
    psi = analytic_psi(lsc, plan)
    mean, se = monte_carlo_psi(lsc.zeta, plan, 40_000, np.random.default_rng(8))
    diff = mean - psi
    assert np.all(np.abs(diff.real) <= 4 * se.real + 1e-30)
    assert np.all(np.abs(diff.imag) <= 4 * se.imag + 1e-30)


def test_partition_requires_zeta_for_psi():
    geom, lsc = _network(M=4, K=2)
    plan = assign_clusters(lsc, geom, 2)
    ch = draw_channel(lsc, CsiModel(0.0), np.random.default_rng(0))
    with pytest.raises(ValueError):
        partition_channels(ch, plan)


def test_cluster_csv(tmp_path):
    geom, lsc = _network(M=6, K=3)
    plan = assign_clusters(lsc, geom, 2)
    write_cluster_csv(plan, tmp_path / "ap.csv", tmp_path / "user.csv")
    rows = list(csv.reader(open(tmp_path / "ap.csv")))
    assert rows[0] == ["ap_index", "cluster_id"]
    assert [int(r[1]) for r in rows[1:]] == list(plan.ap_cluster)
    rows = list(csv.reader(open(tmp_path / "user.csv")))
    assert rows[0] == ["user_index", "cluster_id"] and len(rows) == 4
