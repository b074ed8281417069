"""Cluster tree structure, bounding boxes and box distances."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from samplet_lasso.cluster_tree import (
    ClusterNode,
    as_points,
    bbox_distance,
    build_cluster_tree,
    node_distance,
)


def _box_node(lo, hi):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return ClusterNode(0, 0, 1, 0, lo, hi, (), float(np.linalg.norm(hi - lo)), 0.5 * (lo + hi))


class TestBuild:
    def test_unit_square_corners(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        tree, _ = build_cluster_tree(pts, 1)
        assert tree.depth == 2
        assert tree.leaves.size == 4
        assert tree.diameter[0] == pytest.approx(np.sqrt(2.0))

    def test_single_point(self):
        tree, perm = build_cluster_tree(np.array([[0.3, 0.7]]), 4)
        assert tree.n_nodes == 1
        assert tree.diameter[0] == 0.0
        np.testing.assert_array_equal(perm.forward, [0])

    def test_structural_audit(self):
        """Leaf sizes bounded and every level a partition of the storage range."""
        rng = np.random.default_rng(0)
        pts = rng.random((10_000, 2))
        tree, perm = build_cluster_tree(pts, 10)
        sizes = tree.sizes[tree.leaves]
        assert sizes.min() >= 1 and sizes.max() <= 20
        np.testing.assert_array_equal(np.sort(perm.forward), np.arange(10_000))
        np.testing.assert_array_equal(perm.inverse[perm.forward], np.arange(10_000))
        covered = np.zeros(10_000, dtype=int)
        for leaf in tree.leaves:
            covered[tree.start[leaf]:tree.end[leaf]] += 1
        np.testing.assert_array_equal(covered, 1)
        for lev in range(tree.depth + 1):
            # nodes that stopped splitting earlier keep covering their range
            nodes = np.flatnonzero((tree.level == lev) | (tree.is_leaf & (tree.level < lev)))
            ranges = sorted(zip(tree.start[nodes], tree.end[nodes]))
            assert ranges[0][0] == 0 and ranges[-1][1] == 10_000
            for (a0, a1), (b0, b1) in zip(ranges, ranges[1:]):
                assert a1 == b0

    def test_median_split_is_balanced(self):
        rng = np.random.default_rng(1)
        tree, _ = build_cluster_tree(rng.random((1000, 2)), 8)
        internal = np.flatnonzero(~tree.is_leaf)
        diff = np.abs(tree.sizes[tree.left[internal]] - tree.sizes[tree.right[internal]])
        assert diff.max() <= 1

    def test_midpoint_split_option(self):
        rng = np.random.default_rng(2)
        pts = rng.random((500, 2)) ** 3
        tree, _ = build_cluster_tree(pts, 8, split="midpoint")
        assert tree.split == "midpoint"
        assert tree.sizes[tree.leaves].sum() == 500

    def test_bbox_and_centroid_match_points(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(3000, 3))
        tree, _ = build_cluster_tree(pts, 12)
        for node in range(tree.n_nodes):
            sub = pts[tree.indices(node)]
            np.testing.assert_array_equal(tree.bbox_min[node], sub.min(axis=0))
            np.testing.assert_array_equal(tree.bbox_max[node], sub.max(axis=0))
            np.testing.assert_allclose(tree.centroid[node], sub.mean(axis=0), rtol=1e-12, atol=1e-12)
            diam = np.linalg.norm(sub.max(axis=0) - sub.min(axis=0))
            np.testing.assert_allclose(tree.diameter[node], diam, rtol=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        pts = rng.random((2000, 2))
        t1, p1 = build_cluster_tree(pts, 10)
        t2, p2 = build_cluster_tree(pts.copy(), 10)
        np.testing.assert_array_equal(p1.forward, p2.forward)
        np.testing.assert_array_equal(t1.start, t2.start)
        np.testing.assert_array_equal(t1.bbox_max, t2.bbox_max)

    def test_arrays_are_read_only(self):
        tree, _ = build_cluster_tree(np.random.default_rng(5).random((50, 2)), 4)
        with pytest.raises(ValueError):
            tree.start[0] = 3

    def test_duplicates_allowed(self):
        pts = np.zeros((9, 2))
        tree, _ = build_cluster_tree(pts, 2)
        assert tree.has_duplicates()
        assert tree.sizes[tree.leaves].sum() == 9

    @pytest.mark.parametrize("bad", [np.empty((0, 2)), np.array([[np.nan, 0.0]]), np.zeros((2, 2, 2))])
    def test_rejects_bad_points(self, bad):
        with pytest.raises(ValueError):
            as_points(bad)

    def test_rejects_bad_options(self):
        with pytest.raises(ValueError):
            build_cluster_tree(np.zeros((3, 2)), 0)
        with pytest.raises(ValueError):
            build_cluster_tree(np.zeros((3, 2)), 2, split="mean")


class TestNodeDistance:
    def test_identical_boxes(self):
        a = _box_node([0, 0], [1, 1])
        assert node_distance(a, a) == 0.0

    def test_axis_gap(self):
        assert node_distance(_box_node([0, 0], [1, 1]), _box_node([3, 0], [4, 1])) == pytest.approx(2.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            node_distance(_box_node([0, 0], [1, 1]), _box_node([0, 0, 0], [1, 1, 1]))

    def test_lower_bound_monte_carlo(self):
        """Box distance never exceeds the distance of sampled boundary points."""
        rng = np.random.default_rng(6)
        for _ in range(50):
            la, lb = rng.uniform(-2, 2, (2, 2))
            ha, hb = la + rng.random(2), lb + rng.random(2)
            d = bbox_distance(la, ha, lb, hb)
            sa = rng.uniform(la, ha, (400, 2))
            sb = rng.uniform(lb, hb, (400, 2))
            # snap one coordinate to a face to sample the boundary
            sa[:200, 0] = np.where(rng.random(200) < 0.5, la[0], ha[0])
            sb[:200, 1] = np.where(rng.random(200) < 0.5, lb[1], hb[1])
            sampled = np.min(np.linalg.norm(sa[:, None] - sb[None], axis=2))
            assert d <= sampled + 1e-12

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (4, 3), elements=st.floats(-10, 10)))
    def test_symmetric_and_nonnegative(self, c):
        la, lb = np.minimum(c[0], c[1]), np.minimum(c[2], c[3])
        ha, hb = np.maximum(c[0], c[1]), np.maximum(c[2], c[3])
        d1 = bbox_distance(la, ha, lb, hb)
        assert d1 >= 0
        assert d1 == pytest.approx(bbox_distance(lb, hb, la, ha))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 300), cap=st.integers(1, 40), seed=st.integers(0, 2**16))
def test_leaves_partition_any_input(n, cap, seed):
    pts = np.random.default_rng(seed).random((n, 2))
    tree, perm = build_cluster_tree(pts, cap)
    assert tree.sizes[tree.leaves].sum() == n
    assert tree.sizes[tree.leaves].max() <= max(cap, 1)
    assert np.all(tree.sizes >= 1)
    np.testing.assert_array_equal(np.sort(perm.forward), np.arange(n))
