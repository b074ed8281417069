"""Kernel matrices in samplet coordinates with admissibility-based dropping.

For a row basis over ``X`` and a column side over ``Y`` (either a samplet
basis or plain Dirac deltas) the compressed matrix keeps exactly the entries
``<sigma, K sigma'>`` whose supporting clusters ``(tau, tau')`` violate

    dist(tau, tau') >= rho * max(diam(tau), diam(tau'))

and then removes entries smaller than ``kappa`` times the Frobenius norm of
the kept entries.

Inadmissible cluster pairs are enumerated by a dual-tree sweep.  Each pair is
evaluated from the side whose cluster is larger: its explicit basis functions
are applied to a dense kernel strip covering all smaller partners at once,
and the partners' basis functions are applied to the result as a sparse
product.  No far-field interpolation is used, so the assembly costs
``O(N^2)`` kernel evaluations at the coarse levels and is exact up to
round-off on the kept pattern.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cluster_tree import ClusterTree, bbox_distance, build_cluster_tree
from .kernel import KernelDictionary, KernelModel, kernel_matrix
from .samplets import SampletBasis

__all__ = [
    "CompressionConfig",
    "CompressedKernelMatrix",
    "assemble_compressed_square",
    "assemble_compressed_rect",
    "inadmissible_pairs",
    "spmv",
    "spmv_t",
    "sp_col_gather",
    "write_triplets",
    "read_triplets",
]

STRIP_ENTRIES = 4_000_000


@dataclass(frozen=True)
class CompressionConfig:
    """Admissibility parameter ``rho`` (``None`` means the dimension) and threshold ``kappa``."""

    rho: float | None = None
    kappa: float = 1e-7

    def __post_init__(self):
        if self.rho is not None and not self.rho >= 0:
            raise ValueError("rho must be nonnegative")
        if not self.kappa >= 0:
            raise ValueError("kappa must be nonnegative")

    def rho_for(self, dim: int) -> float:
        return float(dim) if self.rho is None else float(self.rho)


class CompressedKernelMatrix:
    """Sparse kernel matrix in samplet coordinates (CSR) with bookkeeping.

    Attributes
    ----------
    csr : scipy.sparse.csr_matrix
    col_offsets : int array
        Column offsets of the dictionary blocks (``[0, M]`` for one kernel).
    frobenius_estimate : float
        Frobenius norm of the inadmissible part before thresholding.
    threshold : float
        Absolute cut ``kappa * frobenius_estimate`` that was applied.
    n_pairs : int
        Number of inadmissible cluster pairs evaluated.
    """

    def __init__(self, csr, col_offsets, frobenius_estimate, threshold, n_pairs):
        self.csr = csr
        self.col_offsets = np.asarray(col_offsets, dtype=np.int64)
        self.frobenius_estimate = float(frobenius_estimate)
        self.threshold = float(threshold)
        self.n_pairs = int(n_pairs)

    @property
    def shape(self):
        return self.csr.shape

    @property
    def nnz(self) -> int:
        return int(self.csr.nnz)

    @property
    def T(self):
        return self.csr.T

    def __matmul__(self, v):
        return self.csr @ v

    def toarray(self):
        return self.csr.toarray()

    def __repr__(self):
        return f"CompressedKernelMatrix(shape={self.shape}, nnz={self.nnz})"


# one side of the product -----------------------------------------------------

class _Side:
    """Explicit emitted functions of one side, indexed by local ids.

    ``E`` is CSR with rows = local ids and columns = storage positions; node
    ``i`` emits the contiguous local ids ``[g0[i], g1[i])``; ``out_ids`` maps
    local ids to row/column indices of the output matrix.
    """

    def __init__(self, tree: ClusterTree, E, g0, g1, out_ids):
        self.tree = tree
        self.E = E
        self.g0 = np.asarray(g0, dtype=np.int64)
        self.g1 = np.asarray(g1, dtype=np.int64)
        self.out_ids = np.asarray(out_ids, dtype=np.int64)
        self.points = tree.storage_points
        self.k = self.g1 - self.g0
        self.owner = np.full(E.shape[0], -1, dtype=np.int64)
        self.owner[np.repeat(self.g0, self.k) + _ramp(self.k)] = np.repeat(
            np.arange(tree.n_nodes), self.k)

    @classmethod
    def from_basis(cls, basis: SampletBasis):
        n = basis.tree.n_nodes
        g0 = basis.offset.copy()
        g0[0] = 0
        g1 = basis.offset + basis.nsamp
        return cls(basis.tree, basis.sparse_transform, g0, g1, np.arange(basis.n))

    @classmethod
    def dirac(cls, tree: ClusterTree):
        leaf = tree.left < 0
        g0 = np.where(leaf, tree.start, 0)
        g1 = np.where(leaf, tree.end, 0)
        E = sp.identity(tree.n_points, format="csr")
        return cls(tree, E, g0, g1, tree.perm.forward)

    def dense_functions(self, node):
        """``(|node|, k)`` dense block of the functions emitted at ``node``."""
        s, e = self.tree.start[node], self.tree.end[node]
        return self.E[self.g0[node]:self.g1[node]][:, s:e].toarray().T


def _ramp(k):
    """Concatenation of ``arange(k_i)`` for all ``i``."""
    tot = int(k.sum())
    if tot == 0:
        return np.zeros(0, dtype=np.int64)
    starts = np.repeat(np.cumsum(k) - k, k)
    return np.arange(tot) - starts


def inadmissible_pairs(row_tree: ClusterTree, col_tree: ClusterTree, rho: float):
    """All cluster pairs ``(r, c)`` violating the admissibility condition.

    The sweep starts at the two roots; a pair is refined only if it is
    inadmissible, column clusters are split first, and row clusters are split
    only against the column root.  Each inadmissible pair is produced once.
    Pairs at distance zero are never admissible.
    """
    rt, ct = row_tree, col_tree
    R = np.zeros(1, dtype=np.int64)
    C = np.zeros(1, dtype=np.int64)
    out_r, out_c = [], []
    while R.size:
        dist = bbox_distance(rt.bbox_min[R], rt.bbox_max[R], ct.bbox_min[C], ct.bbox_max[C])
        diam = np.maximum(rt.diameter[R], ct.diameter[C])
        if np.isinf(rho):
            adm = np.zeros(R.size, dtype=bool)
        else:
            adm = (dist > 0) & (dist >= rho * diam)
        R, C = R[~adm], C[~adm]
        out_r.append(R)
        out_c.append(C)
        split_c = ct.left[C] >= 0
        rc, cc = R[split_c], C[split_c]
        split_r = (C == 0) & (rt.left[R] >= 0)
        rr = R[split_r]
        R = np.concatenate((rc, rc, rt.left[rr], rt.right[rr]))
        C = np.concatenate((ct.left[cc], ct.right[cc], np.zeros(2 * rr.size, dtype=np.int64)))
    return np.concatenate(out_r), np.concatenate(out_c)


def _union_positions(starts, ends):
    """Sorted storage positions covered by nested-or-disjoint ranges."""
    order = np.lexsort((-ends, starts))
    s, e = starts[order], ends[order]
    prev = np.maximum.accumulate(np.concatenate(([-1], e[:-1])))
    keep = e > prev
    s, e = s[keep], e[keep]
    return np.concatenate([np.arange(a, b) for a, b in zip(s, e)])


class _Accumulator:
    """Collects triplets with a running-Frobenius pre-filter.

    Any entry below ``kappa`` times the running norm is also below ``kappa``
    times the final norm, so discarding it early is exact.
    """

    def __init__(self, kappa):
        self.kappa = kappa
        self.sumsq = 0.0
        self.rows, self.cols, self.vals = [], [], []

    def add(self, r, c, v, weight=None):
        sq = v * v
        self.sumsq += float(sq.sum() if weight is None else (sq * weight).sum())
        thr = self.kappa * np.sqrt(self.sumsq)
        keep = (np.abs(v) >= thr) & (v != 0)
        self.rows.append(r[keep])
        self.cols.append(c[keep])
        self.vals.append(v[keep])

    def finish(self, shape):
        thr = self.kappa * np.sqrt(self.sumsq)
        if self.vals:
            r = np.concatenate(self.rows)
            c = np.concatenate(self.cols)
            v = np.concatenate(self.vals)
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        keep = (np.abs(v) >= thr) & (v != 0)
        A = sp.csr_matrix((v[keep], (r[keep], c[keep])), shape=shape)
        A.sum_duplicates()
        A.sort_indices()
        return A, np.sqrt(self.sumsq), thr


def _strip(model, big, node, small, positions):
    """``E_node^T K(big_node, small[positions])`` evaluated in column chunks."""
    t = big.tree
    X = big.points[t.start[node]:t.end[node]]
    E = big.dense_functions(node)
    W = np.empty((E.shape[1], positions.size))
    step = max(1, STRIP_ENTRIES // max(1, X.shape[0]))
    for a in range(0, positions.size, step):
        Kb = kernel_matrix(model, X, small.points[positions[a:a + step]])
        W[:, a:a + step] = E.T @ Kb
    return W


def _grouped_blocks(model, big, small, big_nodes, small_nodes, lookup):
    """Yield ``(big local ids, small local ids, block)`` per big-side node.

    ``block[i, j] = <big function i, K small function j>``.
    """
    t = small.tree
    order = np.argsort(big_nodes, kind="stable")
    bn, sn = big_nodes[order], small_nodes[order]
    cuts = np.flatnonzero(np.diff(bn)) + 1
    for grp_b, grp_s in zip(np.split(bn, cuts), np.split(sn, cuts)):
        node = int(grp_b[0])
        pos = _union_positions(t.start[grp_s], t.end[grp_s])
        W = _strip(model, big, node, small, pos)
        lookup[pos] = np.arange(pos.size)
        ids = np.concatenate([np.arange(small.g0[c], small.g1[c]) for c in grp_s])
        Es = small.E[ids]
        Es = sp.csr_matrix((Es.data, lookup[Es.indices], Es.indptr),
                           shape=(ids.size, pos.size))
        B = Es @ W.T
        yield np.arange(big.g0[node], big.g1[node]), ids, B.T


def _assemble(row: _Side, cols, models, cfg: CompressionConfig, symmetric=False):
    dim = row.tree.dim
    rho = cfg.rho_for(dim)
    acc = _Accumulator(cfg.kappa)
    offsets = [0]
    n_pairs = 0
    for col, model in zip(cols, models):
        off = offsets[-1]
        R, C = inadmissible_pairs(row.tree, col.tree, rho)
        live = (row.k[R] > 0) & (col.k[C] > 0)
        R, C = R[live], C[live]
        n_pairs += R.size
        dr, dc = row.tree.diameter[R], col.tree.diameter[C]
        if symmetric:
            f1 = (dr > dc) | ((dr == dc) & (R >= C))
        else:
            f1 = dr >= dc
        lookup_c = np.zeros(col.tree.n_points, dtype=np.int64)
        for rid, cid, B in _grouped_blocks(model, row, col, R[f1], C[f1], lookup_c):
            rr = np.repeat(row.out_ids[rid], cid.size)
            cc = np.tile(col.out_ids[cid], rid.size) + off
            v = B.ravel()
            if symmetric:
                mirror = np.tile(col.owner[cid] != row.owner[rid[0]], rid.size)
                acc.add(np.concatenate((rr, cc[mirror])), np.concatenate((cc, rr[mirror])),
                        np.concatenate((v, v[mirror])))
            else:
                acc.add(rr, cc, v)
        if not symmetric and np.any(~f1):
            lookup_r = np.zeros(row.tree.n_points, dtype=np.int64)
            for cid, rid, B in _grouped_blocks(model, col, row, C[~f1], R[~f1], lookup_r):
                rr = np.repeat(row.out_ids[rid], cid.size)
                cc = np.tile(col.out_ids[cid], rid.size) + off
                acc.add(rr, cc, B.T.ravel())
        offsets.append(off + col.tree.n_points)
    csr, fro, thr = acc.finish((row.tree.n_points, offsets[-1]))
    return CompressedKernelMatrix(csr, offsets, fro, thr, n_pairs)


def assemble_compressed_square(basis: SampletBasis, model: KernelModel,
                               cfg: CompressionConfig | None = None) -> CompressedKernelMatrix:
    """Compressed ``T K T^T`` for a single kernel on one point set.

    Only one triangle of cluster pairs is evaluated; the other is mirrored,
    so the dropping pattern is symmetric by construction.
    """
    cfg = cfg or CompressionConfig()
    side = _Side.from_basis(basis)
    return _assemble(side, [side], [model], cfg, symmetric=True)


def assemble_compressed_rect(row_basis: SampletBasis, dictionary: KernelDictionary,
                             col_bases=None, cfg: CompressionConfig | None = None,
                             leaf_capacity: int | None = None) -> CompressedKernelMatrix:
    """Compressed ``[T K_1 T_1^T, ..., T K_L T_L^T]``.

    ``col_bases[l]`` may be a ``SampletBasis`` over the centers of entry ``l``
    or ``None``, in which case the columns stay Dirac deltas at the centers
    (``T K_l``); a cluster tree over the centers is then built only to group
    them for the admissibility test.
    """
    cfg = cfg or CompressionConfig()
    row = _Side.from_basis(row_basis)
    L = dictionary.n_entries
    if col_bases is None:
        col_bases = [None] * L
    if len(col_bases) != L:
        raise ValueError("need one column basis (or None) per dictionary entry")
    cap = leaf_capacity or row_basis.tree.leaf_capacity
    cols, models = [], []
    cache = {}
    for (model, centers), cb in zip(dictionary.entries, col_bases):
        if centers.shape[1] != row_basis.tree.dim:
            raise ValueError("centers and rows live in different dimensions")
        if cb is None:
            key = id(centers)
            if key not in cache:
                tree, _ = build_cluster_tree(centers, cap)
                cache[key] = _Side.dirac(tree)
            cols.append(cache[key])
        else:
            if cb.n != centers.shape[0]:
                raise ValueError("column basis does not match the dictionary centers")
            key = id(cb)
            if key not in cache:
                cache[key] = _Side.from_basis(cb)
            cols.append(cache[key])
        models.append(model)
    if L == 0:
        n = row_basis.n
        return CompressedKernelMatrix(sp.csr_matrix((n, 0)), [0], 0.0, 0.0, 0)
    return _assemble(row, cols, models, cfg)


# sparse plumbing -------------------------------------------------------------

def _csr(A):
    return A.csr if isinstance(A, CompressedKernelMatrix) else A


def spmv(A, v):
    A = _csr(A)
    v = np.asarray(v)
    if v.shape[0] != A.shape[1]:
        raise ValueError(f"shape mismatch: {A.shape} @ {v.shape}")
    return A @ v


def spmv_t(A, v):
    A = _csr(A)
    v = np.asarray(v)
    if v.shape[0] != A.shape[0]:
        raise ValueError(f"shape mismatch: {A.shape}^T @ {v.shape}")
    return A.T @ v


def sp_col_gather(A, idx) -> np.ndarray:
    """Dense copy of the columns ``idx`` of ``A`` in the given order."""
    A = _csr(A)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return np.zeros((A.shape[0], 0))
    if idx.min() < 0 or idx.max() >= A.shape[1]:
        raise ValueError("column index out of range")
    if sp.issparse(A):
        return A[:, idx].toarray()
    return np.asarray(A)[:, idx]


def write_triplets(A, path):
    """Write ``row col value`` lines (0-based indices)."""
    coo = sp.coo_matrix(_csr(A))
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")


def read_triplets(path) -> sp.csr_matrix:
    with open(path) as fh:
        head = fh.readline().split()
        shape = (int(head[1]), int(head[2]))
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape)
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)
