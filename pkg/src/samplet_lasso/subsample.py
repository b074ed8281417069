"""Tree-adaptive selection of representative data sites.

The energy of the data (squared samplet coefficients, or their native-space
counterpart) is attributed to the clusters supporting each samplet, summed
up the tree, propagated down as a modified energy, and thresholded.  Every
leaf of the resulting subtree contributes the data site closest to its
centroid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cluster_tree import ClusterTree, as_points
from .compression import CompressionConfig, assemble_compressed_square
from .kernel import KernelModel
from .samplets import CoefficientVector, SampletBasis, forward_transform, samplet_basis_for_points

__all__ = [
    "EnergyTree",
    "Subtree",
    "Subsample",
    "lumped_diagonal",
    "compute_energies",
    "propagate_modified_energies",
    "adaptive_subtree",
    "select_representatives",
    "separation_radius",
    "fill_distance",
    "subsample_points",
    "MODES",
]

MODES = ("Xprime", "Hprime")


@dataclass
class EnergyTree:
    """Per-cluster energies ``e`` and modified energies ``e_mod``."""

    tree: ClusterTree
    mode: str
    local: np.ndarray
    e: np.ndarray
    e_mod: np.ndarray | None = None

    @property
    def total(self) -> float:
        return float(self.e[0])


@dataclass
class Subtree:
    tree: ClusterTree
    mask: np.ndarray
    threshold: float

    @property
    def nodes(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def leaves(self) -> np.ndarray:
        t = self.tree
        internal = (t.left >= 0)
        kept_child = np.zeros_like(self.mask)
        kept_child[internal] = self.mask[np.where(internal, t.left, 0)[internal]]
        return np.flatnonzero(self.mask & ~kept_child)


@dataclass
class Subsample:
    """Selected sites with their separation radius and fill distance."""

    indices: np.ndarray
    points: np.ndarray
    separation: float
    fill: float
    eps2: float | None = None
    mode: str | None = None

    @property
    def size(self) -> int:
        return int(self.indices.size)


def lumped_diagonal(hsig, zsig) -> np.ndarray:
    """``d_i = z_i / h_i`` with ``d_i = 0`` where ``h_i = 0``."""
    h = np.asarray(hsig, dtype=float)
    z = np.asarray(zsig, dtype=float)
    d = np.zeros_like(h)
    nz = h != 0
    with np.errstate(over="ignore"):
        d[nz] = z[nz] / h[nz]
    # subnormal h_i can overflow the quotient; their energy share is negligible
    d[~np.isfinite(d)] = 0.0
    return d


def _accumulate_up(tree, local):
    e = np.array(local, dtype=float)
    for lev in range(tree.depth, 0, -1):
        nodes = tree.level_nodes(lev)
        np.add.at(e, tree.parent[nodes], e[nodes])
    return e


def compute_energies(basis: SampletBasis, hsig, mode: str = "Xprime",
                     weights=None) -> EnergyTree:
    """Localize the energy of ``hsig`` in the clusters of ``basis.tree``.

    ``weights`` is the lumped diagonal (required in ``"Hprime"`` mode).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if isinstance(hsig, CoefficientVector):
        if hsig.basis != "samplet":
            raise ValueError("energies need samplet coefficients")
        hsig = hsig.values
    h = np.asarray(hsig, dtype=float)
    if h.shape != (basis.n,):
        raise ValueError("coefficient vector does not match the basis")
    if mode == "Hprime":
        if weights is None:
            raise ValueError("Hprime mode needs the lumped diagonal")
        c = np.asarray(weights, dtype=float) * h * h
    else:
        if weights is not None:
            raise ValueError("Xprime mode takes no weights")
        c = h * h
    local = np.bincount(basis.owner, weights=c, minlength=basis.tree.n_nodes)
    return EnergyTree(basis.tree, mode, local, _accumulate_up(basis.tree, local))


def propagate_modified_energies(et: EnergyTree) -> EnergyTree:
    """Top-down pass: all children of ``tau`` get ``S * em(tau) / (e(tau) + em(tau))``.

    ``S`` is the summed energy of the children; the value is 0 when the
    denominator vanishes.
    """
    t = et.tree
    e = et.e
    em = np.zeros_like(e)
    em[0] = e[0]
    for lev in range(t.depth):
        nodes = t.level_nodes(lev)
        nodes = nodes[t.left[nodes] >= 0]
        a, b = t.left[nodes], t.right[nodes]
        s = e[a] + e[b]
        den = e[nodes] + em[nodes]
        safe = np.where(den != 0, den, 1.0)
        q = np.where(den != 0, s * em[nodes] / safe, 0.0)
        em[a] = q
        em[b] = q
    et.e_mod = em
    return et


def adaptive_subtree(et: EnergyTree, eps2: float, total: float | None = None) -> Subtree:
    """Clusters with ``|e_mod| > eps2 * total``, closed under ancestors and siblings.

    Sibling completion makes the subtree leaves a partition of the data.
    ``total`` defaults to the root energy of the active mode.
    """
    if not eps2 > 0:
        raise ValueError("eps2 must be positive")
    if et.e_mod is None:
        propagate_modified_energies(et)
    t = et.tree
    thr = eps2 * (et.total if total is None else float(total))
    keep = np.abs(et.e_mod) > thr
    keep[0] = True
    for lev in range(t.depth, 0, -1):
        nodes = t.level_nodes(lev)
        nodes = nodes[keep[nodes]]
        keep[t.parent[nodes]] = True
    internal = np.flatnonzero(keep & (t.left >= 0))
    split = keep[t.left[internal]] | keep[t.right[internal]]
    keep[t.left[internal[split]]] = True
    keep[t.right[internal[split]]] = True
    return Subtree(t, keep, thr)


def separation_radius(centers) -> float:
    """Minimum distance between distinct centers (``inf`` for a single one)."""
    c = np.unique(as_points(centers), axis=0)
    if c.shape[0] < 2:
        return float("inf")
    d, _ = cKDTree(c).query(c, k=2)
    return float(d[:, 1].min())


def fill_distance(centers, points) -> float:
    """Largest distance from a site in ``points`` to its nearest center."""
    d, _ = cKDTree(as_points(centers)).query(as_points(points))
    return float(d.max())


def select_representatives(subtree: Subtree, tree: ClusterTree | None = None,
                           points=None) -> Subsample:
    """One site per subtree leaf: the one nearest the leaf centroid.

    Ties go to the smallest original index.
    """
    t = tree if tree is not None else subtree.tree
    pts = t.points if points is None else as_points(points)
    leaves = subtree.leaves
    sizes = t.end[leaves] - t.start[leaves]
    pos = np.repeat(t.start[leaves], sizes) + _ramp(sizes)
    grp = np.repeat(np.arange(leaves.size), sizes)
    orig = t.perm.forward[pos]
    d2 = np.sum((pts[orig] - t.centroid[leaves][grp]) ** 2, axis=1)
    order = np.lexsort((orig, d2, grp))
    first = np.concatenate(([0], np.flatnonzero(np.diff(grp[order])) + 1))
    idx = np.sort(orig[order[first]])
    centers = pts[idx]
    return Subsample(idx, centers, separation_radius(centers), fill_distance(centers, pts))


def _ramp(k):
    starts = np.repeat(np.cumsum(k) - k, k)
    return np.arange(int(k.sum())) - starts


def subsample_points(points, values, eps2: float, mode: str = "Xprime",
                     kernel: KernelModel | None = None, q: int = 3,
                     cfg: CompressionConfig | None = None,
                     basis: SampletBasis | None = None, return_details: bool = False):
    """Full pipeline: basis, transform, energies, subtree, representatives.

    In ``"Hprime"`` mode ``kernel`` defines the native-space energy through
    the compressed Gramian on all data sites.
    """
    pts = as_points(points)
    h = np.asarray(values, dtype=float)
    if h.shape != (pts.shape[0],):
        raise ValueError("need one value per data site")
    if basis is None:
        basis = samplet_basis_for_points(pts, q=q)
    hsig = forward_transform(basis, h)
    weights = None
    if mode == "Hprime":
        if kernel is None:
            raise ValueError("Hprime mode needs a kernel")
        Ks = assemble_compressed_square(basis, kernel, cfg)
        weights = lumped_diagonal(hsig, Ks @ hsig)
    et = propagate_modified_energies(compute_energies(basis, hsig, mode, weights))
    st = adaptive_subtree(et, eps2)
    sub = select_representatives(st)
    sub.eps2, sub.mode = eps2, mode
    if return_details:
        return sub, {"basis": basis, "hsig": hsig, "energy": et, "subtree": st}
    return sub
