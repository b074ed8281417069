"""Weighted l1-regularized least squares by a trust-region semismooth Newton method.

The iteration works on the normal map

    F(z) = K^T (K SS(z) - h) + (z - SS(z)) / lam,    SS = soft shrinkage at lam * w,

whose roots ``z`` give minimizers ``alpha = SS(z)`` of

    Phi(alpha) = 0.5 * ||h - K alpha||^2 + sum_i w_i |alpha_i|.

Trust-region subproblems on the active columns are solved either through an
incrementally updated thin SVD of all columns that have been active so far
(``factor="svd"`` or ``"eigh"``), or by shifted Cholesky factorizations of
the active block of ``K^T K`` (``factor="cholesky"``, the default).
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp

from .compression import CompressedKernelMatrix
from .kernel import estimate_lipschitz

__all__ = [
    "soft_shrinkage",
    "LassoProblem",
    "OnlineSVD",
    "ReducedFactor",
    "CholeskyFactor",
    "FACTORS",
    "TRConfig",
    "ContinuationConfig",
    "SolveReport",
    "SolverError",
    "eval_normal_map",
    "solve_reduced_newton",
    "lift_and_clip_step",
    "merit",
    "predicted_reduction",
    "tr_ssn",
    "continuation_solve",
    "ista",
    "kkt_violation",
    "merit_parameters",
]

log = logging.getLogger(__name__)

GRAM_MAX_COLUMNS = 6000


class SolverError(RuntimeError):
    """Raised when the iteration cannot proceed; ``state`` holds a snapshot."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


def soft_shrinkage(v, thresholds):
    """Componentwise ``sign(v) * max(|v| - t, 0)``."""
    v = np.asarray(v, dtype=float)
    t = np.broadcast_to(np.asarray(thresholds, dtype=float), v.shape)
    if np.any(t < 0):
        raise ValueError("thresholds must be nonnegative")
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


# problem --------------------------------------------------------------------

class LassoProblem:
    """``min 0.5 ||h - K alpha||^2 + sum w_i |alpha_i| (+ const)``.

    Parameters
    ----------
    K : ndarray, sparse matrix or CompressedKernelMatrix, shape (N, M)
    h : (N,) array
    w : (M,) positive array or scalar
    lam : float, optional
        Normal-map parameter; defaults to ``2 / L``.
    lipschitz : float, optional
        ``||K^T K||_2``; estimated by power iteration when omitted.
    const : float
        Constant added to the objective (used by row reduction).
    """

    def __init__(self, K, h, w, lam=None, lipschitz=None, const=0.0, seed=0):
        if isinstance(K, CompressedKernelMatrix):
            K = K.csr
        if not sp.issparse(K):
            K = np.asarray(K, dtype=float)
            if K.ndim != 2:
                raise ValueError("K must be a matrix")
        self.K = K
        self.h = np.asarray(h, dtype=float)
        n, m = K.shape
        if self.h.shape != (n,):
            raise ValueError(f"data vector has shape {self.h.shape}, expected ({n},)")
        self.w = np.broadcast_to(np.asarray(w, dtype=float), (m,)).copy()
        if np.any(self.w < 0) or not np.all(np.isfinite(self.w)):
            raise ValueError("weights must be finite and nonnegative")
        if lipschitz is None:
            lipschitz = estimate_lipschitz(K, seed=seed)
        self.lipschitz = float(lipschitz)
        if lam is None:
            if self.lipschitz <= 0:
                raise SolverError("zero operator: lambda = 2/L is undefined")
            lam = 2.0 / self.lipschitz
        if not lam > 0:
            raise ValueError("lambda must be positive")
        self.lam = float(lam)
        self.const = float(const)
        # shared by the copies made in with_weights: the operator is the same
        self._cache = {}

    @property
    def shape(self):
        return self.K.shape

    def with_weights(self, w):
        out = object.__new__(LassoProblem)
        out.__dict__.update(self.__dict__)
        out.w = np.broadcast_to(np.asarray(w, dtype=float), (self.shape[1],)).copy()
        return out

    def matvec(self, a):
        return self.K @ a

    def rmatvec(self, r):
        return self.K.T @ r

    def columns(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        if sp.issparse(self.K):
            return self.K[:, idx].toarray()
        return self.K[:, idx]

    def gram_block(self, idx) -> np.ndarray:
        """``K[:, idx]^T K[:, idx]``, sliced from a cached ``K^T K`` when ``M`` is small."""
        idx = np.asarray(idx, dtype=np.int64)
        m = self.shape[1]
        if m <= GRAM_MAX_COLUMNS:
            G = self._cache.get("gram")
            if G is None:
                KtK = self.K.T @ self.K
                G = KtK.toarray() if sp.issparse(KtK) else np.asarray(KtK)
                self._cache["gram"] = G
            return G[np.ix_(idx, idx)]
        C = self.columns(idx)
        return C.T @ C

    def residual(self, alpha):
        return self.matvec(alpha) - self.h

    def gradient(self, alpha):
        return self.rmatvec(self.residual(alpha))

    def objective(self, alpha):
        r = self.residual(alpha)
        return 0.5 * float(r @ r) + float(self.w @ np.abs(alpha)) + self.const

    def reduced(self, chunk_entries: int = 20_000_000) -> "LassoProblem":
        """Equivalent problem with at most ``M + 1`` rows.

        Zero rows are dropped (their data enter ``const``) and the rest of
        ``[K | h]`` is reduced by a row-blocked Householder QR, so residual
        norms are preserved exactly up to round-off.
        """
        K, h = self.K, self.h
        n, m = K.shape
        const = self.const
        if sp.issparse(K):
            K = sp.csr_matrix(K)
            rows = np.flatnonzero(np.diff(K.indptr) > 0)
            drop = np.ones(n, dtype=bool)
            drop[rows] = False
            const += 0.5 * float(h[drop] @ h[drop])
        else:
            rows = np.arange(n)
        if rows.size <= m + 1:
            Kr = K[rows]
            Kr = Kr.toarray() if sp.issparse(Kr) else np.array(Kr)
            return LassoProblem(Kr, h[rows], self.w, self.lam, self.lipschitz, const)
        step = max(m + 1, chunk_entries // (m + 1))
        R = np.zeros((0, m + 1))
        for a in range(0, rows.size, step):
            r = rows[a:a + step]
            blk = K[r]
            blk = blk.toarray() if sp.issparse(blk) else np.asarray(blk)
            stack = np.vstack((R, np.hstack((blk, h[r, None]))))
            R = scipy.linalg.qr(stack, mode="r", overwrite_a=True, check_finite=False)[0]
            R = R[:min(R.shape[0], m + 1)]
        return LassoProblem(R[:, :m], R[:, m], self.w, self.lam, self.lipschitz, const)


# normal map -----------------------------------------------------------------

@dataclass
class NormalMapEval:
    F: np.ndarray
    alpha: np.ndarray
    grad: np.ndarray
    residual: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.F))


def eval_normal_map(p: LassoProblem, z) -> NormalMapEval:
    """Normal map at ``z`` together with ``alpha = SS(z)`` and ``grad f(alpha)``."""
    z = np.asarray(z, dtype=float)
    if z.shape != (p.shape[1],):
        raise ValueError("iterate has the wrong length")
    alpha = soft_shrinkage(z, p.lam * p.w)
    r = p.residual(alpha)
    g = p.rmatvec(r)
    F = g + (z - alpha) / p.lam
    return NormalMapEval(F, alpha, g, r)


def merit(p: LassoProblem, ev: NormalMapEval, tau: float) -> float:
    """``Phi(SS(z)) + tau * lam / 2 * ||F(z)||^2``."""
    r = ev.residual
    phi = 0.5 * float(r @ r) + float(p.w @ np.abs(ev.alpha)) + p.const
    return phi + 0.5 * tau * p.lam * float(ev.F @ ev.F)


def merit_parameters(p: LassoProblem, c_tau=0.05, c_nu=0.05):
    """``(tau, nu)`` from the Lipschitz constant and ``lam``."""
    a = (p.lipschitz * p.lam) ** 2
    tau = 2.0 * c_tau / (a + 2.0)
    nu = 0.5 * min(tau, c_nu * (1.0 - 0.5 * tau * (0.5 * a + 1.0)))
    return tau, nu


def predicted_reduction(p: LassoProblem, Fnorm, delta, dalpha_norm, tau, nu_k):
    lam = p.lam
    lead = 0.5 * tau * Fnorm * min(lam, delta, lam * Fnorm)
    den = min(delta, lam * Fnorm)
    tail = nu_k * Fnorm / den * dalpha_norm**2 if den > 0 else 0.0
    return lead + tail


# online SVD -----------------------------------------------------------------

class OnlineSVD:
    """Thin SVD ``U diag(S) V^T`` of a growing block of tracked columns.

    ``columns`` lists the global column index of every row of ``V``; it only
    grows.  The rank never exceeds the number of rows of the block.
    """

    ORTH_TOL = 1e-8

    def __init__(self, n_rows: int, reorthogonalize: bool = True):
        self.n_rows = int(n_rows)
        self.reorthogonalize = reorthogonalize
        self.U = np.zeros((self.n_rows, 0))
        self.S = np.zeros(0)
        self.V = np.zeros((0, 0))
        self.columns = np.zeros(0, dtype=np.int64)
        self.n_reorth = 0

    @property
    def rank(self) -> int:
        return self.S.size

    @property
    def n_columns(self) -> int:
        return self.columns.size

    def append(self, B, indices=None):
        """Append the columns ``B`` (``n_rows x p``) with global ``indices``."""
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if B.shape[0] != self.n_rows:
            raise ValueError("block has the wrong number of rows")
        p = B.shape[1]
        if p == 0:
            return self
        if indices is None:
            indices = np.arange(self.n_columns, self.n_columns + p)
        indices = np.asarray(indices, dtype=np.int64)
        l, s = self.rank, self.n_columns
        if l == 0:
            Ub, Sb, Vbt = np.linalg.svd(B, full_matrices=False)
            V = np.zeros((s + p, Sb.size))
            V[s:] = Vbt.T
            self.U, self.S, self.V = Ub, Sb, V
        else:
            C = self.U.T @ B
            Rz = B - self.U @ C
            if self.reorthogonalize:
                C2 = self.U.T @ Rz
                C += C2
                Rz -= self.U @ C2
            Q, R = np.linalg.qr(Rz)
            core = np.zeros((l + Q.shape[1], l + p))
            core[:l, :l] = np.diag(self.S)
            core[:l, l:] = C
            core[l:, l:] = R
            Ut, St, Vtt = np.linalg.svd(core, full_matrices=False)
            Vbig = np.zeros((s + p, l + p))
            Vbig[:s, :l] = self.V
            Vbig[s:, l:] = np.eye(p)
            self.U = np.hstack((self.U, Q)) @ Ut
            self.S = St
            self.V = Vbig @ Vtt.T
        k = min(self.n_rows, self.S.size)
        self.U, self.S, self.V = self.U[:, :k], self.S[:k], self.V[:, :k]
        self.columns = np.concatenate((self.columns, indices))
        self._check_orthogonality()
        return self

    def _check_orthogonality(self):
        l = self.rank
        if l == 0:
            return
        err = np.linalg.norm(self.U.T @ self.U - np.eye(l))
        if err > self.ORTH_TOL:
            Q, R = np.linalg.qr(self.U)
            Uw, S, Vwt = np.linalg.svd(R * self.S[None, :])
            self.U = Q @ Uw
            self.S = S
            self.V = self.V @ Vwt.T
            self.n_reorth += 1

    def reconstruct(self):
        return (self.U * self.S) @ self.V.T


def svd_append_columns(svd: OnlineSVD, B, indices=None) -> OnlineSVD:
    return svd.append(B, indices)


class ReducedFactor:
    """Eigen-factorization ``K_A^T K_A = P diag(sig^2) P^T`` of an active block.

    ``sig`` are the singular values of ``K_A``, taken from an SVD of the
    rows of ``V S`` at the active positions.  With ``gram=True`` the cheaper
    symmetric eigensolver on ``G G^T`` is used first.  Its small eigenvalues
    carry absolute errors near ``eps * sig_max^2``; whenever a solve would
    resolve them (``cond(K_A) > GRAM_COND`` and a shift below
    ``MU_SAFE * sig_max^2``) the factor is recomputed by SVD.
    """

    GRAM_COND = 1e6
    MU_SAFE = 1e-10

    def __init__(self, svd: OnlineSVD, active, rcond: float = 1e-12, positions=None,
                 gram: bool = False):
        active = np.asarray(active, dtype=np.int64)
        self.active = active
        self.rcond = rcond
        self.exact = True
        self.P, self.sig, self.cond = np.zeros((active.size, 0)), np.zeros(0), 1.0
        if active.size == 0:
            return
        if positions is None:
            lookup = {int(c): i for i, c in enumerate(svd.columns)}
            try:
                positions = np.array([lookup[int(a)] for a in active], dtype=np.int64)
            except KeyError as exc:
                raise ValueError(f"column {exc.args[0]} is not tracked") from None
        self._G = svd.V[positions] * svd.S[None, :]
        if gram and self._G.shape[1] > 0:
            ev, P = scipy.linalg.eigh(self._G @ self._G.T, driver="evd", check_finite=False)
            sig = np.sqrt(np.maximum(ev[::-1], 0.0))
            self._set(P[:, ::-1], sig)
            self.exact = sig[0] > 0 and sig[-1] > sig[0] / self.GRAM_COND
        else:
            self._svd()

    def _svd(self):
        P, sig, _ = np.linalg.svd(self._G, full_matrices=False)
        self._set(P, sig)
        self.exact = True

    def _set(self, P, sig):
        if sig.size == 0 or sig[0] == 0:
            self.P, self.sig, self.cond = np.zeros((P.shape[0], 0)), np.zeros(0), np.inf
            return
        self.cond = float(sig[0] / sig[-1]) if sig[-1] > 0 else np.inf
        keep = sig > self.rcond * sig[0]
        self.P, self.sig = P[:, keep], sig[keep]

    def solve(self, rhs, delta=None):
        """Minimizer of ``<rhs, q> + 0.5 q^T K_A^T K_A q``, optionally with ``||q|| <= delta``.

        Without ``delta`` this is the minimum-norm least-squares solution of
        ``K_A^T K_A q = -rhs`` (components outside the retained range are
        ignored).  With ``delta`` the constrained minimizer is found from the
        secular equation in the shift ``mu``.
        """
        rhs = np.asarray(rhs, dtype=float)
        if self.active.size == 0:
            return np.zeros(0)
        q, mu = self._solve(rhs, delta)
        if not self.exact and mu < self.MU_SAFE * self.sig[0] ** 2:
            self._svd()
            q, mu = self._solve(rhs, delta)
        return q

    def _solve(self, rhs, delta):
        if self.sig.size == 0:
            if delta is None or not np.any(rhs):
                return np.zeros_like(rhs), np.inf
            return -rhs * (delta / np.linalg.norm(rhs)), np.inf
        c = self.P.T @ rhs
        s2 = self.sig**2
        q0 = -(self.P @ (c / s2))
        if delta is None:
            return q0, 0.0
        perp = rhs - self.P @ c
        np2 = float(perp @ perp)
        # flat directions make the model unbounded below, forcing mu > 0
        if np2 <= 1e-28 * float(rhs @ rhs) and np.linalg.norm(q0) <= delta:
            return q0, 0.0

        def norm_q(mu):
            return np.sqrt(np.sum((c / (s2 + mu)) ** 2) + np2 / mu**2)

        hi = max(np.linalg.norm(rhs) / delta, 1e-300)
        while norm_q(hi) > delta:
            hi *= 2.0
        lo = hi
        while norm_q(lo) < delta and lo > 1e-300:
            lo *= 1e-3
        if norm_q(lo) < delta:
            mu = lo
        else:
            mu = scipy.optimize.brentq(lambda m: 1.0 / norm_q(m) - 1.0 / delta, lo, hi,
                                       xtol=1e-300, rtol=1e-12)
        return -(self.P @ (c / (s2 + mu))) - perp / mu, mu


class CholeskyFactor:
    """Trust-region solves with ``H = K_A^T K_A`` by shifted Cholesky factorizations.

    The base factor is ``H + mu0 I`` with ``mu0 = 0`` when ``H`` is safely
    positive definite.  Otherwise ``mu0`` is a small multiple of ``||H||_1``,
    which damps directions whose singular values fall below roughly
    ``sqrt(MU_FLOOR)`` times the largest one.  Boundary solutions come from
    a safeguarded Newton iteration on ``1 / ||q(mu)||`` (More-Sorensen
    without the hard case, since ``H`` is positive semidefinite), stopped once
    ``||q||`` is within ``TOL * delta`` of the radius.  Any such ``q`` solves
    the subproblem exactly for the radius ``||q||``.  The iteration is warm
    started from the previous shift.

    ``cond`` estimates the condition number of ``K_A`` from LAPACK's
    reciprocal condition estimate of ``H``; it is ``inf`` when ``H`` is not
    numerically positive definite.
    """

    MU_FLOOR = 1e-13
    RCOND_MIN = 1e-13
    TOL = 0.1
    MAXIT = 60

    def __init__(self, H, active, mu_hint: float = 0.0):
        self.active = np.asarray(active, dtype=np.int64)
        self.H = np.asarray(H, dtype=float)
        self.cond = 1.0
        self.mu0 = 0.0
        self.n_factorizations = 0
        self.mu_last = float(mu_hint)
        self._base = None
        if self.active.size == 0:
            return
        self.norm1 = float(np.abs(self.H).sum(axis=0).max())
        base = self._chol(0.0)
        rc = 0.0
        if base is not None and self.norm1 > 0:
            rc = float(scipy.linalg.lapack.dpocon(base, self.norm1)[0])
        self.cond = float(np.sqrt(1.0 / rc)) if rc > 0 else np.inf
        if base is None or rc < self.RCOND_MIN:
            mu = self.MU_FLOOR * (self.norm1 if self.norm1 > 0 else 1.0)
            base = self._chol(mu)
            while base is None:
                mu *= 10.0
                base = self._chol(mu)
            self.mu0 = mu
        self._base = base

    def _chol(self, mu):
        A = self.H.copy()
        A.flat[::A.shape[0] + 1] += mu
        c, info = scipy.linalg.lapack.dpotrf(A, lower=0, clean=1, overwrite_a=1)
        self.n_factorizations += 1
        return c if info == 0 else None

    @staticmethod
    def _apply(c, g):
        return scipy.linalg.cho_solve((c, False), g, check_finite=False)

    def solve(self, rhs, delta=None):
        """Minimizer of ``<rhs, q> + 0.5 q^T H q`` (within ``||q|| <= delta`` if given)."""
        g = np.asarray(rhs, dtype=float)
        if self.active.size == 0:
            return np.zeros(0)
        q = -self._apply(self._base, g)
        nq = float(np.linalg.norm(q))
        if delta is None or nq <= delta:
            return q
        lo, hi = self.mu0, max(float(np.linalg.norm(g)) / delta, self.mu0)
        mu, c = self.mu0, self._base
        if lo < self.mu_last < hi:
            # consecutive solves usually need similar shifts
            c_warm = self._chol(self.mu_last)
            if c_warm is not None:
                lo = mu
                mu, c = self.mu_last, c_warm
                q = -self._apply(c, g)
                nq = float(np.linalg.norm(q))
        for _ in range(self.MAXIT):
            if abs(nq - delta) <= self.TOL * delta:
                break
            if nq > delta:
                lo = max(lo, mu)
            else:
                hi = min(hi, mu)
            w = scipy.linalg.solve_triangular(c, q, trans="T", check_finite=False)
            step = (nq / np.linalg.norm(w)) ** 2 * (nq - delta) / delta
            mu_new = mu + step
            if not lo < mu_new < hi:
                mu_new = np.sqrt(max(lo, 1e-16 * hi) * hi)
            c_new = self._chol(mu_new)
            if c_new is None:
                lo = mu_new
                continue
            mu, c = mu_new, c_new
            q = -self._apply(c, g)
            nq = float(np.linalg.norm(q))
        self.mu_last = mu
        return q


def solve_reduced_newton(svd: OnlineSVD, active, rhs, rcond: float = 1e-12,
                         positions=None, delta=None):
    """Reduced Newton step on the active block from the tracked SVD.

    ``active`` are global column indices (all tracked); ``rhs`` is indexed
    like ``active``.  Returns ``(q, cond)`` where ``cond`` is the ratio of
    extreme singular values of ``K_A`` before truncation.  With ``delta`` the
    step minimizes the quadratic model inside the ball of that radius.
    """
    fac = ReducedFactor(svd, active, rcond, positions)
    return fac.solve(rhs, delta), fac.cond


def lift_and_clip_step(p: LassoProblem, F, active, q, delta, Kq=None):
    """Lifted step, scaled into the trust region.

    Returns ``(s, s_bar_norm)``.
    """
    m = p.shape[1]
    active = np.asarray(active, dtype=np.int64)
    s_bar = np.empty(m)
    inactive = np.ones(m, dtype=bool)
    inactive[active] = False
    if active.size:
        full_q = np.zeros(m)
        full_q[active] = q
        if Kq is None:
            Kq = p.matvec(full_q)
        KtKq = p.rmatvec(Kq)
        s_bar[inactive] = -p.lam * (F[inactive] + KtKq[inactive])
    else:
        s_bar[inactive] = -p.lam * F[inactive]
    s_bar[active] = q
    nb = float(np.linalg.norm(s_bar))
    if nb > delta:
        return s_bar * (delta / nb), nb
    return s_bar, nb


# driver ---------------------------------------------------------------------

FACTORS = ("cholesky", "svd", "eigh")


@dataclass(frozen=True)
class TRConfig:
    tol: float = 1e-8
    maxit: int = 200
    eta1: float = 1e-3
    eta2: float = 0.1
    delta0: float = 1.0
    delta_min: float = 1e-5
    delta_max: float = 1e3
    c_tau: float = 0.05
    c_nu: float = 0.05
    p_tilde: float = 0.1
    rcond: float = 1e-12
    subproblem: str = "constrained"
    factor: str = "cholesky"

    def __post_init__(self):
        if self.subproblem not in ("constrained", "unconstrained"):
            raise ValueError("subproblem must be 'constrained' or 'unconstrained'")
        if self.factor not in FACTORS:
            raise ValueError(f"factor must be one of {FACTORS}")
        if not (0 < self.eta1 <= self.eta2 < 1):
            raise ValueError("need 0 < eta1 <= eta2 < 1")
        if not (0 < self.delta_min <= self.delta0 <= self.delta_max):
            raise ValueError("need 0 < delta_min <= delta0 <= delta_max")


@dataclass
class SolveReport:
    alpha: np.ndarray
    z: np.ndarray
    converged: bool
    iterations: int
    residual: list = field(default_factory=list)
    active: list = field(default_factory=list)
    condition: list = field(default_factory=list)
    ratio: list = field(default_factory=list)
    radius: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    tracked_columns: list = field(default_factory=list)
    final_residual: float = np.nan
    objective: float = np.nan
    n_successful: int = 0

    def to_csv(self, path, level=None):
        with open(path, "w", newline="") as fh:
            self.write_rows(csv.writer(fh), header=True, level=level)

    def write_rows(self, writer, header=True, level=None):
        cols = ["iteration", "residual", "active", "condition", "ratio", "radius", "accepted"]
        if level is not None:
            cols = ["level"] + cols
        if header:
            writer.writerow(cols)
        for k in range(len(self.ratio)):
            row = [k, _fmt(self.residual[k]), self.active[k], _fmt(self.condition[k]),
                   _fmt(self.ratio[k]), _fmt(self.radius[k]), int(self.accepted[k])]
            writer.writerow(([level] if level is not None else []) + row)


def _fmt(x):
    return f"{float(x):.17g}"


def _lifted(p, F, active, q):
    full_q = np.zeros(p.shape[1])
    full_q[active] = q
    return lift_and_clip_step(p, F, active, q, np.inf, Kq=p.matvec(full_q))


def tr_ssn(p: LassoProblem, z0=None, cfg: TRConfig | None = None) -> SolveReport:
    """Trust-region semismooth Newton iteration on the normal map."""
    cfg = cfg or TRConfig()
    n, m = p.shape
    z = np.zeros(m) if z0 is None else np.array(z0, dtype=float)
    tau, nu = merit_parameters(p, cfg.c_tau, cfg.c_nu)
    ev = eval_normal_map(p, z)
    H = merit(p, ev, tau)
    delta = cfg.delta0
    svd = OnlineSVD(n)
    pos = np.full(m, -1, dtype=np.int64)
    n_tracked = 0
    n_s = 0
    rep = SolveReport(alpha=ev.alpha, z=z, converged=False, iterations=0)
    fac = None
    cache = None
    k = 0
    while ev.norm > cfg.tol and k < cfg.maxit:
        Fn = ev.norm
        active = np.flatnonzero(np.abs(z) > p.lam * p.w)
        if fac is None or not np.array_equal(fac.active, active):
            new = active[pos[active] < 0]
            if new.size:
                pos[new] = np.arange(n_tracked, n_tracked + new.size)
                n_tracked += new.size
                if cfg.factor != "cholesky":
                    svd.append(p.columns(new), new)
            if cfg.factor == "cholesky":
                hint = fac.mu_last if isinstance(fac, CholeskyFactor) else 0.0
                fac = CholeskyFactor(p.gram_block(active), active, hint)
            else:
                fac = ReducedFactor(svd, active, cfg.rcond, positions=pos[active],
                                   gram=cfg.factor == "eigh")
            cache = None
        if cfg.subproblem == "unconstrained":
            # the step direction does not depend on the radius; only rescale it
            if cache is None:
                cache = _lifted(p, ev.F, active, fac.solve(ev.F[active]))
            s_bar, nb = cache
        else:
            s_bar, nb = _lifted(p, ev.F, active, fac.solve(ev.F[active], delta))
        cond = fac.cond
        s = s_bar * (delta / nb) if nb > delta else s_bar
        z_try = z + s
        ev_try = eval_normal_map(p, z_try)
        H_try = merit(p, ev_try, tau)
        if not np.isfinite(H_try):
            raise SolverError("merit function is not finite",
                              {"k": k, "z": z, "delta": delta, "residual": Fn})
        da = float(np.linalg.norm(ev_try.alpha - ev.alpha))
        ns = max(n_s, 2)
        nu_k = min(nu, (ns * np.log(ns) ** 2 * da) ** (2 * cfg.p_tilde))
        pred = predicted_reduction(p, Fn, delta, da, tau, nu_k)
        ared = H - H_try
        if pred > 0:
            ratio = ared / pred
        else:
            warnings.warn("nonpositive predicted reduction; step rejected", RuntimeWarning)
            ratio = -np.inf
        accept = ratio >= cfg.eta1
        rep.residual.append(Fn)
        rep.active.append(int(active.size))
        rep.condition.append(cond)
        rep.ratio.append(ratio)
        rep.radius.append(delta)
        rep.accepted.append(bool(accept))
        if accept:
            z, ev, H = z_try, ev_try, H_try
            n_s += 1
            cache = None
            if ratio >= cfg.eta2:
                delta = min(cfg.delta_max, 2.0 * delta)
        else:
            delta = max(cfg.delta_min, 0.5 * delta)
        rep.tracked_columns.append(n_tracked)
        k += 1
    rep.alpha, rep.z = ev.alpha, z
    rep.iterations = k
    rep.final_residual = ev.norm
    rep.converged = ev.norm <= cfg.tol
    rep.objective = p.objective(ev.alpha)
    rep.n_successful = n_s
    return rep


@dataclass(frozen=True)
class ContinuationConfig:
    r0: float = 10.0
    gamma: float = 0.7
    r_min: float = 1e-3
    tr: TRConfig = TRConfig()

    def __post_init__(self):
        if not (0 < self.gamma < 1):
            raise ValueError("gamma must lie in (0, 1)")
        if not (0 < self.r_min < self.r0):
            raise ValueError("need 0 < r_min < r0")

    def levels(self) -> np.ndarray:
        out = []
        j = 0
        while True:
            r = self.r0 * self.gamma**j
            if r < self.r_min:
                break
            out.append(r)
            j += 1
        return np.array(out)


@dataclass
class ContinuationResult:
    alpha: np.ndarray
    reports: list
    levels: np.ndarray
    block_counts: list | None = None


def continuation_solve(p: LassoProblem, cc: ContinuationConfig | None = None,
                       block_offsets=None, reduce_rows: bool = True) -> ContinuationResult:
    """Solve a sequence of problems with weights ``r_j * w``, warm-starting each."""
    cc = cc or ContinuationConfig()
    base = p.reduced() if reduce_rows else p
    alpha = np.zeros(p.shape[1])
    reports = []
    levels = cc.levels()
    for j, r in enumerate(levels):
        pj = base.with_weights(r * p.w)
        z0 = alpha - pj.lam * pj.gradient(alpha)
        rep = tr_ssn(pj, z0, cc.tr)
        log.info("level %d r=%.3g: %d iterations, residual %.2e, active %d",
                 j, r, rep.iterations, rep.final_residual, np.count_nonzero(rep.alpha))
        reports.append(rep)
        alpha = rep.alpha
    counts = None
    if block_offsets is not None:
        o = np.asarray(block_offsets)
        counts = [int(np.count_nonzero(alpha[o[i]:o[i + 1]])) for i in range(o.size - 1)]
    return ContinuationResult(alpha, reports, levels, counts)


# references -----------------------------------------------------------------

def ista(p: LassoProblem, x0=None, tol: float = 1e-10, maxit: int = 1_000_000):
    """Proximal-gradient iteration with step ``1 / L`` (FISTA-free reference).

    Stops when the fixed-point residual ``||x - prox(x - grad/L)||`` is below
    ``tol``.
    """
    m = p.shape[1]
    x = np.zeros(m) if x0 is None else np.array(x0, dtype=float)
    K = p.K.toarray() if sp.issparse(p.K) else p.K
    L = np.linalg.norm(K, 2) ** 2
    t = 1.0 / L
    KtK = K.T @ K
    Kth = K.T @ p.h
    for it in range(maxit):
        g = KtK @ x - Kth
        xn = soft_shrinkage(x - t * g, t * p.w)
        if np.linalg.norm(xn - x) <= tol:
            return xn, it + 1
        x = xn
    return x, maxit


def kkt_violation(p: LassoProblem, alpha, w=None) -> float:
    """Largest violation of the lasso optimality conditions at ``alpha``."""
    w = p.w if w is None else np.broadcast_to(w, alpha.shape)
    g = p.gradient(alpha)
    on = alpha != 0
    v_on = np.abs(g[on] + np.sign(alpha[on]) * w[on])
    v_off = np.maximum(np.abs(g[~on]) - w[~on], 0.0)
    return float(max(v_on.max(initial=0.0), v_off.max(initial=0.0)))
