"""Balanced binary cluster tree over scattered data sites.

Nodes are stored in flat arrays in breadth-first order, so node ``0`` is the
root and node ids increase level by level.  Every node owns a contiguous
range ``[start, end)`` of the storage permutation ``perm``; ``perm[i]`` is the
original index of the point stored at position ``i``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ClusterTree",
    "ClusterNode",
    "Permutation",
    "build_cluster_tree",
    "node_distance",
    "bbox_distance",
    "as_points",
]


def as_points(points) -> np.ndarray:
    """Validate a point set and return it as a float ``(N, d)`` array."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValueError("points must be an (N, d) array")
    if pts.shape[0] == 0:
        raise ValueError("empty point set")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point set contains non-finite coordinates")
    return pts


@dataclass(frozen=True)
class Permutation:
    forward: np.ndarray  # storage position -> original index
    inverse: np.ndarray  # original index -> storage position

    def to_storage(self, v):
        return np.asarray(v)[self.forward]

    def to_original(self, v):
        v = np.asarray(v)
        out = np.empty_like(v)
        out[self.forward] = v
        return out


@dataclass(frozen=True)
class ClusterNode:
    """Read-only view of one tree node."""

    id: int
    start: int
    end: int
    level: int
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    children: tuple
    diameter: float
    centroid: np.ndarray

    @property
    def size(self) -> int:
        return self.end - self.start

    @property
    def is_leaf(self) -> bool:
        return not self.children


class ClusterTree:
    """Array-backed binary cluster tree.

    Attributes
    ----------
    points : (N, d) array
        Coordinates in original order.
    perm : Permutation
    start, end, level, parent, left, right : int arrays of length ``n_nodes``
        ``left``/``right`` are ``-1`` for leaves, ``parent`` is ``-1`` at the root.
    bbox_min, bbox_max, centroid : (n_nodes, d) arrays
    diameter : (n_nodes,) array
        Length of the bounding-box diagonal.
    """

    def __init__(self, points, perm, start, end, level, parent, left, right,
                 bbox_min, bbox_max, centroid, leaf_capacity, split):
        self.points = points
        self.perm = perm
        self.start = start
        self.end = end
        self.level = level
        self.parent = parent
        self.left = left
        self.right = right
        self.bbox_min = bbox_min
        self.bbox_max = bbox_max
        self.centroid = centroid
        self.diameter = np.linalg.norm(bbox_max - bbox_min, axis=1)
        self.leaf_capacity = leaf_capacity
        self.split = split
        for arr in (start, end, level, parent, left, right, bbox_min,
                    bbox_max, centroid, self.diameter):
            arr.setflags(write=False)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.start.shape[0]

    @property
    def depth(self) -> int:
        return int(self.level.max())

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left < 0

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.left < 0)

    @property
    def sizes(self) -> np.ndarray:
        return self.end - self.start

    def children(self, node: int) -> tuple:
        if self.left[node] < 0:
            return ()
        return int(self.left[node]), int(self.right[node])

    def node(self, i: int) -> ClusterNode:
        return ClusterNode(
            id=int(i), start=int(self.start[i]), end=int(self.end[i]),
            level=int(self.level[i]), bbox_min=self.bbox_min[i],
            bbox_max=self.bbox_max[i], children=self.children(i),
            diameter=float(self.diameter[i]), centroid=self.centroid[i])

    def indices(self, node: int) -> np.ndarray:
        """Original point indices contained in ``node``."""
        return self.perm.forward[self.start[node]:self.end[node]]

    def level_nodes(self, level: int) -> np.ndarray:
        return np.flatnonzero(self.level == level)

    @property
    def storage_points(self) -> np.ndarray:
        """Points in storage order (cached)."""
        sp = getattr(self, "_storage_points", None)
        if sp is None:
            sp = self.points[self.perm.forward]
            sp.setflags(write=False)
            self._storage_points = sp
        return sp

    def has_duplicates(self) -> bool:
        return np.unique(self.points, axis=0).shape[0] < self.n_points

    def __repr__(self):
        return (f"ClusterTree(N={self.n_points}, d={self.dim}, "
                f"nodes={self.n_nodes}, depth={self.depth})")


def build_cluster_tree(points, leaf_capacity: int, split: str = "median"):
    """Build a balanced binary cluster tree.

    Nodes holding more than ``leaf_capacity`` points are split along the
    longest edge of their (tight) bounding box, at the coordinate median
    (``split="median"``) or at the box midpoint (``split="midpoint"``).

    Returns
    -------
    tree : ClusterTree
    perm : Permutation
    """
    pts = as_points(points)
    if leaf_capacity < 1:
        raise ValueError("leaf_capacity must be positive")
    if split not in ("median", "midpoint"):
        raise ValueError(f"unknown split rule {split!r}")
    n, d = pts.shape
    idx = np.arange(n)

    start, end, level, parent, left, right = [], [], [], [], [], []
    bmin, bmax, cent = [], [], []
    queue = deque([(0, n, 0, -1)])
    while queue:
        s, e, lev, par = queue.popleft()
        nid = len(start)
        sub = pts[idx[s:e]]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        start.append(s)
        end.append(e)
        level.append(lev)
        parent.append(par)
        bmin.append(lo)
        bmax.append(hi)
        cent.append(sub.mean(axis=0))
        left.append(-1)
        right.append(-1)
        if par >= 0:
            if left[par] < 0:
                left[par] = nid
            else:
                right[par] = nid
        if e - s <= leaf_capacity:
            continue
        axis = int(np.argmax(hi - lo))
        order = np.argsort(sub[:, axis], kind="stable")
        idx[s:e] = idx[s:e][order]
        mid = (e - s) // 2
        if split == "midpoint":
            cut = 0.5 * (lo[axis] + hi[axis])
            k = int(np.searchsorted(sub[order, axis], cut, side="right"))
            if 0 < k < e - s:
                mid = k
        queue.append((s, s + mid, lev + 1, nid))
        queue.append((s + mid, e, lev + 1, nid))

    inv = np.empty(n, dtype=np.int64)
    inv[idx] = np.arange(n)
    perm = Permutation(forward=idx, inverse=inv)
    perm.forward.setflags(write=False)
    perm.inverse.setflags(write=False)
    ia = lambda v: np.asarray(v, dtype=np.int64)
    tree = ClusterTree(
        pts, perm, ia(start), ia(end), ia(level), ia(parent), ia(left),
        ia(right), np.asarray(bmin), np.asarray(bmax), np.asarray(cent),
        leaf_capacity, split)
    return tree, perm


def bbox_distance(min_a, max_a, min_b, max_b):
    """Euclidean distance between axis-aligned boxes (vectorized over rows)."""
    gap = np.maximum(0.0, np.maximum(np.asarray(min_a) - max_b,
                                     np.asarray(min_b) - max_a))
    return np.sqrt(np.sum(gap * gap, axis=-1))


def node_distance(a: ClusterNode, b: ClusterNode) -> float:
    """Distance between the bounding boxes of two nodes (0 if they overlap).

    This lower-bounds the distance between the point sets of the nodes.
    """
    if a.bbox_min.shape != b.bbox_min.shape:
        raise ValueError("nodes live in different ambient dimensions")
    return float(bbox_distance(a.bbox_min, a.bbox_max, b.bbox_min, b.bbox_max))
