"""Samplet multiresolution basis on a cluster tree.

At every leaf the Dirac deltas of the leaf's points are orthogonally split
into scaling distributions (spanning the local polynomial moments) and
samplets (orthogonal to them, hence annihilating all polynomials of total
degree <= q).  Internal nodes repeat this on the stacked scaling
distributions of their two children.  The root keeps its scaling
distributions as basis elements.

Global coefficient ordering: root scaling distributions first, then the
samplets node by node in breadth-first order (i.e. by increasing level and
then left to right).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from math import comb

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .cluster_tree import ClusterTree, as_points, build_cluster_tree

__all__ = [
    "MomentSpec",
    "SampletBasis",
    "CoefficientVector",
    "monomial_exponents",
    "compute_samplet_basis",
    "forward_transform",
    "inverse_transform",
    "samplet_basis_for_points",
    "transform_op_count",
]

RANK_TOL = 1e-10


def monomial_exponents(q: int, d: int) -> np.ndarray:
    """Exponents of all monomials of total degree <= q, graded lex order."""
    out = []
    for deg in range(q + 1):
        out.extend(_exponents_of_degree(deg, d))
    return np.array(out, dtype=np.int64).reshape(-1, d)


def _exponents_of_degree(deg, d):
    if d == 1:
        return [(deg,)]
    res = []
    for first in range(deg, -1, -1):
        for rest in _exponents_of_degree(deg - first, d - 1):
            res.append((first,) + rest)
    return res


@dataclass(frozen=True)
class MomentSpec:
    """Polynomial degree ``q`` (``q + 1`` vanishing moments) in dimension ``dim``."""

    q: int
    dim: int

    def __post_init__(self):
        if self.q < 0 or self.dim < 1:
            raise ValueError("need q >= 0 and dim >= 1")

    @property
    def m_q(self) -> int:
        return comb(self.q + self.dim, self.dim)

    @cached_property
    def exponents(self) -> np.ndarray:
        return monomial_exponents(self.q, self.dim)

    def vandermonde(self, u: np.ndarray) -> np.ndarray:
        """Monomials evaluated at the rows of ``u`` -> ``(n, m_q)``."""
        u = np.atleast_2d(u)
        pw = u[:, None, :] ** self.exponents[None, :, :]
        return np.prod(pw, axis=2)

    def shift_matrix(self, scale: float, shift: np.ndarray) -> np.ndarray:
        """Matrix ``A`` with ``(scale*u + shift)^a = sum_b A[a, b] u^b``."""
        ex = self.exponents
        m = ex.shape[0]
        A = np.zeros((m, m))
        for i, a in enumerate(ex):
            for j, b in enumerate(ex):
                if np.any(b > a):
                    continue
                c = scale ** int(b.sum())
                for k in range(self.dim):
                    c *= comb(int(a[k]), int(b[k])) * shift[k] ** int(a[k] - b[k])
                A[i, j] = c
        return A


@dataclass(frozen=True)
class CoefficientVector:
    """Coefficient array tagged with its basis (``"dirac"`` or ``"samplet"``)."""

    values: np.ndarray
    basis: str
    tree: ClusterTree

    def __post_init__(self):
        if self.basis not in ("dirac", "samplet"):
            raise ValueError("basis must be 'dirac' or 'samplet'")
        if np.shape(self.values)[0] != self.tree.n_points:
            raise ValueError("coefficient length does not match the tree")


def _local_frame(lo, hi):
    center = 0.5 * (lo + hi)
    half = 0.5 * float(np.max(hi - lo))
    return center, (half if half > 0 else 1.0)


class SampletBasis:
    """Per-node orthogonal blocks of a samplet basis.

    Attributes
    ----------
    tree : ClusterTree
    spec : MomentSpec
    Q : list of arrays
        ``Q[node]`` is the orthogonal ``n_in x n_in`` block; columns
        ``[:nscal[node]]`` are the scaling distributions, the rest samplets.
    nscal, nsamp : int arrays
    offset : int array
        Global index of the first samplet of each node.
    levels : int array, length N
        0 for the root scaling distributions, ``node level + 1`` for samplets.
    owner : int array, length N
        Node supporting each global coefficient (root for scaling ones).
    """

    def __init__(self, tree, spec, Q, nscal, nsamp, rank_deficient):
        self.tree = tree
        self.spec = spec
        self.Q = Q
        self.nscal = nscal
        self.nsamp = nsamp
        self.rank_deficient = rank_deficient
        r0 = int(nscal[0])
        self.n_root_scaling = r0
        self.offset = r0 + np.concatenate(([0], np.cumsum(nsamp)[:-1]))
        owner = np.repeat(np.arange(tree.n_nodes), nsamp)
        self.owner = np.concatenate((np.zeros(r0, dtype=np.int64), owner))
        self.levels = np.concatenate(
            (np.zeros(r0, dtype=np.int64), tree.level[owner] + 1))
        self.is_scaling = np.zeros(tree.n_points, dtype=bool)
        self.is_scaling[:r0] = True

    @property
    def n(self) -> int:
        return self.tree.n_points

    @property
    def n_levels(self) -> int:
        return int(self.levels.max()) + 1

    def emitted_range(self, node: int):
        """Global index range of the basis elements attached to ``node``."""
        lo = int(self.offset[node])
        hi = lo + int(self.nsamp[node])
        if node == 0:
            lo = 0
        return lo, hi

    # explicit coefficient vectors -------------------------------------------

    @cached_property
    def sparse_transform(self) -> sp.csr_matrix:
        """``T`` as CSR with columns in *storage* order of the tree."""
        tree = self.tree
        rows, cols, vals = [], [], []
        phi = {}
        for node in range(tree.n_nodes - 1, -1, -1):
            s, e = int(tree.start[node]), int(tree.end[node])
            Qn = self.Q[node]
            if tree.left[node] < 0:
                E = Qn
            else:
                a, b = int(tree.left[node]), int(tree.right[node])
                pa, pb = phi.pop(a), phi.pop(b)
                ra = pa.shape[1]
                E = np.vstack((pa @ Qn[:ra], pb @ Qn[ra:]))
            r = int(self.nscal[node])
            if node != 0:
                phi[node] = E[:, :r]
                E = E[:, r:]
                g0 = int(self.offset[node])
            else:
                g0 = 0
            if E.shape[1]:
                k = E.shape[1]
                rows.append(np.repeat(np.arange(g0, g0 + k), e - s))
                cols.append(np.tile(np.arange(s, e), k))
                vals.append(E.T.ravel())
        n = tree.n_points
        T = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n))
        T.sort_indices()
        return T

    def dense_transform(self, max_n: int = 8192) -> np.ndarray:
        """Dense ``T`` acting on coefficient vectors in original point order."""
        if self.n > max_n:
            raise MemoryError(f"dense transform refused for N={self.n} > {max_n}")
        Ts = self.sparse_transform.toarray()
        T = np.empty_like(Ts)
        T[:, self.tree.perm.forward] = Ts
        return T

    def __repr__(self):
        return (f"SampletBasis(N={self.n}, q={self.spec.q}, m_q={self.spec.m_q}, "
                f"levels={self.n_levels})")


def compute_samplet_basis(tree: ClusterTree, points, spec: MomentSpec,
                          rank_tol: float = RANK_TOL) -> SampletBasis:
    """Construct the samplet basis with ``spec.q + 1`` vanishing moments.

    Moments are taken against monomials centred and scaled to each node's
    bounding box; children's moment matrices are carried to the parent's frame
    by an exact polynomial change of variables.
    """
    pts = as_points(points)
    if pts.shape != tree.points.shape:
        raise ValueError("points do not match the cluster tree")
    if spec.dim != tree.dim:
        raise ValueError("moment spec dimension does not match the tree")
    pts = pts[tree.perm.forward]
    n_nodes = tree.n_nodes
    Q = [None] * n_nodes
    nscal = np.zeros(n_nodes, dtype=np.int64)
    nsamp = np.zeros(n_nodes, dtype=np.int64)
    mphi = {}
    frames = [_local_frame(tree.bbox_min[i], tree.bbox_max[i])
              for i in range(n_nodes)]
    deficient = []
    for node in range(n_nodes - 1, -1, -1):
        center, half = frames[node]
        if tree.left[node] < 0:
            s, e = tree.start[node], tree.end[node]
            M = spec.vandermonde((pts[s:e] - center) / half).T
        else:
            blocks = []
            for c in (int(tree.left[node]), int(tree.right[node])):
                cc, ch = frames[c]
                A = spec.shift_matrix(ch / half, (cc - center) / half)
                blocks.append(A @ mphi.pop(c))
            M = np.hstack(blocks)
        n_in = M.shape[1]
        Qn, R, _ = scipy.linalg.qr(M.T, pivoting=True, mode="full")
        k = min(n_in, M.shape[0])
        diag = np.abs(np.diag(R)[:k])
        r = int(np.count_nonzero(diag > rank_tol * diag[0])) if k and diag[0] > 0 else 0
        if r < k:
            deficient.append(node)
        Q[node] = Qn
        nscal[node] = r
        nsamp[node] = n_in - r
        if node != 0:
            mphi[node] = M @ Qn[:, :r]
    if deficient:
        warnings.warn(
            f"degenerate geometry: {len(deficient)} cluster(s) with rank-deficient "
            "moment matrices; scaling blocks reduced", RuntimeWarning, stacklevel=2)
    return SampletBasis(tree, spec, Q, nscal, nsamp, np.array(deficient, dtype=np.int64))


def samplet_basis_for_points(points, q: int = 3, leaf_capacity: int | None = None,
                             split: str = "median") -> SampletBasis:
    """Convenience: cluster tree plus samplet basis with default leaf size ``2 m_q``."""
    pts = as_points(points)
    spec = MomentSpec(q, pts.shape[1])
    if leaf_capacity is None:
        leaf_capacity = 2 * spec.m_q
    tree, _ = build_cluster_tree(pts, leaf_capacity, split=split)
    return compute_samplet_basis(tree, pts, spec)


def _values(v, basis, tag):
    if isinstance(v, CoefficientVector):
        if v.basis != tag:
            raise ValueError(f"expected a {tag} coefficient vector, got {v.basis}")
        v = v.values
    v = np.asarray(v, dtype=float)
    if v.shape[0] != basis.n:
        raise ValueError(f"vector length {v.shape[0]} does not match basis size {basis.n}")
    return v


def forward_transform(basis: SampletBasis, v):
    """Apply ``T`` (Dirac -> samplet coordinates) in O(N) by a leaf-to-root sweep.

    ``v`` may be 1-D or a 2-D array whose columns are transformed together.
    Returns the same container kind as the input.
    """
    tagged = isinstance(v, CoefficientVector)
    x = _values(v, basis, "dirac")
    tree = basis.tree
    xs = x[tree.perm.forward]
    out = np.empty_like(xs)
    scal = {}
    for node in range(tree.n_nodes - 1, -1, -1):
        if tree.left[node] < 0:
            inp = xs[tree.start[node]:tree.end[node]]
        else:
            inp = np.concatenate((scal.pop(int(tree.left[node])),
                                  scal.pop(int(tree.right[node]))))
        c = basis.Q[node].T @ inp
        r = int(basis.nscal[node])
        o = int(basis.offset[node])
        out[o:o + c.shape[0] - r] = c[r:]
        scal[node] = c[:r]
    out[:basis.n_root_scaling] = scal[0]
    if tagged:
        return CoefficientVector(out, "samplet", tree)
    return out


def inverse_transform(basis: SampletBasis, w):
    """Apply ``T^T`` (samplet -> Dirac coordinates) by a root-to-leaf sweep."""
    tagged = isinstance(w, CoefficientVector)
    y = _values(w, basis, "samplet")
    tree = basis.tree
    xs = np.empty_like(y)
    scal = {0: y[:basis.n_root_scaling]}
    for node in range(tree.n_nodes):
        o = int(basis.offset[node])
        c = np.concatenate((scal.pop(node), y[o:o + int(basis.nsamp[node])]))
        inp = basis.Q[node] @ c
        if tree.left[node] < 0:
            xs[tree.start[node]:tree.end[node]] = inp
        else:
            a, b = int(tree.left[node]), int(tree.right[node])
            ra = int(basis.nscal[a])
            scal[a] = inp[:ra]
            scal[b] = inp[ra:]
    out = np.empty_like(xs)
    out[tree.perm.forward] = xs
    if tagged:
        return CoefficientVector(out, "dirac", tree)
    return out


def transform_op_count(basis: SampletBasis) -> int:
    """Multiply-adds of one forward (or inverse) transform of a single vector."""
    return int(sum(Qn.shape[0] ** 2 for Qn in basis.Q))
