"""Radial kernels, multi-kernel dictionaries and spectral-norm estimation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .cluster_tree import as_points

__all__ = [
    "KernelModel",
    "KernelDictionary",
    "LengthscaleSchedule",
    "eval_kernel",
    "kernel_matrix",
    "assemble_dense",
    "estimate_lipschitz",
    "DENSE_GUARD",
    "FAMILIES",
]

FAMILIES = ("exponential", "gaussian", "matern32")
DENSE_GUARD = 10**8
_SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class KernelModel:
    """Isotropic kernel ``phi(||x - y|| / lengthscale)`` with ``phi(0) = 1``."""

    family: str
    lengthscale: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; choose from {FAMILIES}")
        if not (np.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise ValueError("lengthscale must be positive and finite")

    def radial(self, r):
        """Kernel profile evaluated at distances ``r`` (in place when possible)."""
        r = np.asarray(r, dtype=float)
        s = r / self.lengthscale
        if self.family == "exponential":
            return np.exp(-s)
        if self.family == "gaussian":
            return np.exp(-0.5 * s * s)
        s *= _SQRT3
        return (1.0 + s) * np.exp(-s)

    def __call__(self, x, y):
        """Kernel matrix between the rows of ``x`` and ``y``."""
        return kernel_matrix(self, x, y)


def kernel_matrix(model: KernelModel, x, y) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[1] != y.shape[1]:
        raise ValueError("point sets live in different dimensions")
    if model.family == "gaussian":
        return np.exp(cdist(x, y, "sqeuclidean") * (-0.5 / model.lengthscale**2))
    return model.radial(cdist(x, y))


def eval_kernel(model: KernelModel, x, y) -> float:
    """Kernel value for a single pair of points."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("points have different dimensions")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input")
    return float(model.radial(np.linalg.norm(x - y)))


@dataclass(frozen=True)
class LengthscaleSchedule:
    """Geometric sequence of ``count`` lengthscales from ``lower`` to ``upper``."""

    lower: float
    upper: float
    count: int

    def __post_init__(self):
        if not (self.lower > 0 and self.upper > 0):
            raise ValueError("schedule endpoints must be positive")
        if self.count < 1:
            raise ValueError("schedule needs at least one entry")

    def values(self) -> np.ndarray:
        if self.count == 1:
            return np.array([float(self.lower)])
        j = np.arange(self.count) / (self.count - 1)
        out = self.lower * (self.upper / self.lower) ** j
        out[0], out[-1] = self.lower, self.upper
        return out


@dataclass
class KernelDictionary:
    """List of ``(KernelModel, centers)`` pairs forming ``K = [K_1, ..., K_L]``."""

    entries: list = field(default_factory=list)

    def __post_init__(self):
        self.entries = [(m, as_points(c)) for m, c in self.entries]

    @classmethod
    def from_schedule(cls, family: str, schedule: LengthscaleSchedule, centers):
        c = as_points(centers)
        return cls([(KernelModel(family, float(l)), c) for l in schedule.values()])

    def add(self, model: KernelModel, centers):
        self.entries.append((model, as_points(centers)))

    @property
    def n_entries(self) -> int:
        return len(self.entries)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([c.shape[0] for _, c in self.entries], dtype=np.int64)

    @property
    def offsets(self) -> np.ndarray:
        """Column offsets, length ``L + 1``."""
        return np.concatenate(([0], np.cumsum(self.sizes))).astype(np.int64)

    @property
    def n_columns(self) -> int:
        return int(self.sizes.sum()) if self.entries else 0

    def split(self, alpha):
        """Split a length-M coefficient vector into per-entry blocks."""
        o = self.offsets
        return [alpha[o[i]:o[i + 1]] for i in range(self.n_entries)]

    def evaluate(self, alpha, x, chunk: int = 4096) -> np.ndarray:
        """Evaluate ``sum_l K_l(x, X_l) alpha_l`` at the rows of ``x``, chunked."""
        x = as_points(x)
        out = np.zeros(x.shape[0])
        for (m, c), a in zip(self.entries, self.split(np.asarray(alpha, float))):
            nz = np.flatnonzero(a)
            if nz.size == 0:
                continue
            cc, aa = c[nz], a[nz]
            step = max(1, int(4e6 // max(1, nz.size)))
            for s in range(0, x.shape[0], step):
                out[s:s + step] += kernel_matrix(m, x[s:s + step], cc) @ aa
        return out


def _check_distinct(c):
    if np.unique(c, axis=0).shape[0] < c.shape[0]:
        raise ValueError("duplicate centers in a dictionary entry")


def assemble_dense(rows, dictionary: KernelDictionary,
                   guard: int = DENSE_GUARD) -> np.ndarray:
    """Dense ``N x M`` multi-kernel matrix ``[K_1, ..., K_L]``."""
    x = as_points(rows)
    m = dictionary.n_columns
    if x.shape[0] * m > guard:
        raise MemoryError(f"dense assembly of {x.shape[0]}x{m} exceeds the guard of {guard} entries")
    blocks = []
    for model, c in dictionary.entries:
        _check_distinct(c)
        blocks.append(kernel_matrix(model, x, c))
    if not blocks:
        return np.zeros((x.shape[0], 0))
    return np.hstack(blocks)


def _as_operator(K):
    if hasattr(K, "shape") and hasattr(K, "T") and not callable(K):
        return K.shape, (lambda v: K @ v), (lambda v: K.T @ v)
    shape, mv, rmv = K
    return shape, mv, rmv


def estimate_lipschitz(K, tol: float = 1e-4, maxit: int = 200, seed: int = 0,
                       return_history: bool = False):
    """Power iteration for ``||K^T K||_2``.

    ``K`` is an array, a sparse matrix, or a tuple ``(shape, matvec, rmatvec)``.
    Stops when the relative change of the Rayleigh quotient drops to ``tol``.
    A zero operator returns 0.
    """
    shape, mv, rmv = _as_operator(K)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape[1])
    x /= np.linalg.norm(x)
    lam = 0.0
    hist = []
    for _ in range(maxit):
        y = rmv(mv(x))
        new = float(x @ y)
        hist.append(new)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            lam = 0.0
            break
        x = y / ny
        if lam > 0 and abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    if return_history:
        return lam, np.array(hist)
    return lam
