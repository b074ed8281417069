"""Reference problems, error metrics and desk-scale reruns of the reconstruction tests.

Every driver follows the same pipeline: sample data, select centers by
tree-adaptive subsampling, build a kernel dictionary on the centers, fit the
coefficients, and measure the relative l2 error on a seeded evaluation set.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .cluster_tree import as_points
from .compression import CompressionConfig, assemble_compressed_rect
from .kernel import (KernelDictionary, KernelModel, LengthscaleSchedule,
                     assemble_dense)
from .lasso_solver import ContinuationConfig, LassoProblem, TRConfig, continuation_solve
from .samplets import forward_transform, inverse_transform, samplet_basis_for_points
from .subsample import separation_radius, subsample_points
from .testfunctions import eval_gauss4, eval_heterogeneous2d, eval_phong

__all__ = [
    "ErrorReport",
    "TestSpec",
    "TEST_SPECS",
    "relative_l2_error",
    "sample_uniform",
    "fit_pipeline",
    "run_test",
    "read_ply",
    "vertex_normals",
    "procedural_surface",
    "read_points",
]

log = logging.getLogger(__name__)


@dataclass
class ErrorReport:
    """Outcome of one reconstruction run."""

    e2: float
    max_error: float
    sparsity: list
    block_sizes: list
    n_centers: int = 0
    separation: float = np.nan
    fill: float = np.nan
    lengthscales: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    name: str = ""

    @property
    def total_active(self) -> int:
        return int(sum(self.sparsity))

    def as_row(self) -> dict:
        return {
            "test": self.name,
            "n_centers": self.n_centers,
            "separation": self.separation,
            "fill": self.fill,
            "e2": self.e2,
            "max_error": self.max_error,
            "sparsity": "/".join(f"{a}:{b}" for a, b in zip(self.sparsity, self.block_sizes)),
            "lengthscales": "/".join(f"{l:.6g}" for l in self.lengthscales),
        }


def relative_l2_error(approx, reference, eval_set=None) -> float:
    """``||s - h||_2 / ||h||_2`` over an evaluation set.

    ``approx`` and ``reference`` are callables evaluated on ``eval_set`` or
    arrays of values already sampled there.
    """
    s = approx(eval_set) if callable(approx) else np.asarray(approx, dtype=float)
    h = reference(eval_set) if callable(reference) else np.asarray(reference, dtype=float)
    if h.size == 0:
        raise ValueError("empty evaluation set")
    nh = np.linalg.norm(h)
    if nh == 0:
        raise ValueError("reference vanishes on the evaluation set")
    return float(np.linalg.norm(s - h) / nh)


def sample_uniform(n: int, lo, hi, seed: int = 0) -> np.ndarray:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random((n, lo.size))


# geometry input -------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def read_ply(path):
    """Vertices, faces and (if present) vertex normals from a PLY file.

    Supports ASCII and binary little/big endian files with a vertex element
    and an optional triangle-list face element.
    """
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise ValueError(f"{path}: not a PLY file")
        fmt = None
        elements = []
        while True:
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: truncated header")
            tok = line.decode("ascii", "replace").split()
            if not tok or tok[0] in ("comment", "obj_info"):
                continue
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element":
                elements.append((tok[1], int(tok[2]), []))
            elif tok[0] == "property":
                if tok[1] == "list":
                    elements[-1][2].append((tok[4], "list", tok[2], tok[3]))
                else:
                    elements[-1][2].append((tok[2], tok[1]))
            elif tok[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
            raise ValueError(f"{path}: unsupported PLY format {fmt}")
        data = {}
        if fmt == "ascii":
            text = fh.read().decode("ascii").split()
            pos = 0
            for name, count, props in elements:
                if any(len(p) == 4 for p in props):
                    rows = []
                    for _ in range(count):
                        k = int(text[pos])
                        rows.append([int(v) for v in text[pos + 1:pos + 1 + k]])
                        pos += 1 + k
                    data[name] = rows
                else:
                    n = len(props)
                    arr = np.array(text[pos:pos + n * count], dtype=float).reshape(count, n)
                    pos += n * count
                    data[name] = {p[0]: arr[:, i] for i, p in enumerate(props)}
        else:
            end = "<" if fmt == "binary_little_endian" else ">"
            for name, count, props in elements:
                if any(len(p) == 4 for p in props):
                    rows = []
                    for _ in range(count):
                        rec = []
                        for p in props:
                            if len(p) == 4:
                                ct = np.dtype(end + _PLY_TYPES[p[2]])
                                it = np.dtype(end + _PLY_TYPES[p[3]])
                                k = int(np.frombuffer(fh.read(ct.itemsize), ct)[0])
                                rec = np.frombuffer(fh.read(k * it.itemsize), it).tolist()
                            else:
                                fh.read(np.dtype(_PLY_TYPES[p[1]]).itemsize)
                        rows.append(rec)
                    data[name] = rows
                else:
                    dt = np.dtype([(p[0], end + _PLY_TYPES[p[1]]) for p in props])
                    arr = np.frombuffer(fh.read(dt.itemsize * count), dt)
                    data[name] = {p[0]: arr[p[0]].astype(float) for p in props}
    v = data.get("vertex")
    if v is None or not all(k in v for k in "xyz"):
        raise ValueError(f"{path}: no vertex coordinates")
    verts = np.column_stack([v["x"], v["y"], v["z"]])
    faces = None
    if "face" in data:
        tris = [f for f in data["face"] if len(f) >= 3]
        faces = np.array([[f[0], f[i], f[i + 1]] for f in tris for i in range(1, len(f) - 1)],
                         dtype=np.int64)
    normals = None
    if all(k in v for k in ("nx", "ny", "nz")):
        normals = np.column_stack([v["nx"], v["ny"], v["nz"]])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return verts, faces, normals


def vertex_normals(verts, faces) -> np.ndarray:
    """Area-weighted average of adjacent face normals, normalized."""
    v = np.asarray(verts, dtype=float)
    f = np.asarray(faces, dtype=np.int64)
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    n = np.zeros_like(v)
    for k in range(3):
        np.add.at(n, f[:, k], fn)
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("isolated vertices have no normal")
    return n / norm


def _icosphere(levels: int):
    t = (1 + np.sqrt(5)) / 2
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    v = np.array(v, dtype=float)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(f, dtype=np.int64)
    for _ in range(levels):
        edges = np.sort(np.vstack([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        m = inv.reshape(3, -1) + v.shape[0]
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        ab, bc, ca = m[0], m[1], m[2]
        f = np.vstack([np.column_stack(x) for x in
                       ((a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca))])
        v = np.vstack((v, mid))
    return v, f


def procedural_surface(levels: int = 6):
    """Closed bumpy surface used when no scanned mesh is available.

    A unit icosphere is displaced radially by a few smooth lobes, giving a
    star-shaped body with regions of high and low curvature.  Returns
    ``(vertices, faces, normals)`` with area-weighted vertex normals.
    """
    v, f = _icosphere(levels)
    x, y, z = v.T
    r = (1.0 + 0.25 * np.exp(-((x - 0.6) ** 2 + (y - 0.5) ** 2 + (z - 0.6) ** 2) / 0.08)
         + 0.35 * np.exp(-((x + 0.2) ** 2 + (y + 0.1) ** 2 + (z - 0.95) ** 2) / 0.05)
         + 0.1 * np.sin(3 * x) * np.cos(2 * y) - 0.15 * z ** 2)
    verts = v * r[:, None] * np.array([1.0, 0.8, 0.9])
    return verts, f, vertex_normals(verts, f)


def read_points(path, dim: int | None = None):
    """Read a whitespace- or comma-separated point list.

    Lines starting with ``#`` are skipped; a non-numeric first line is taken
    as a header.  Returns the raw 2-D array; parse errors report the line.
    """
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.replace(",", " ").split()
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                if not rows and lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: cannot parse {s!r}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows)
    if dim is not None and arr.shape[1] < dim:
        raise ValueError(f"{path}: need at least {dim} columns")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{path}: non-finite values")
    return arr


# pipeline -------------------------------------------------------------------

def geometric_lengthscales(lower, upper, count):
    return LengthscaleSchedule(lower, upper, count).values()


@dataclass
class FitResult:
    dictionary: KernelDictionary
    alpha: np.ndarray
    coeffs: np.ndarray
    centers_idx: np.ndarray
    separation: float
    fill: float
    sparsity: list
    reports: list
    timings: dict

    def predict(self, x):
        return self.dictionary.evaluate(self.alpha, x)


def fit_pipeline(points, values, *, eps2: float, mode: str = "Xprime",
                 subsample_kernel: KernelModel | None = None,
                 family: str = "gaussian",
                 lengthscales: Callable[[float, float], np.ndarray],
                 formulation: str = "samplet", solver: str = "lasso",
                 cc: ContinuationConfig | None = None, q: int = 3,
                 cfg: CompressionConfig | None = None) -> FitResult:
    """Subsample, build a dictionary and fit coefficients.

    ``lengthscales(separation, fill)`` returns the dictionary lengthscales.
    ``formulation`` is ``"dense"`` (Dirac coordinates, dense matrix),
    ``"samplet"`` (two-sided samplet transform, compressed) or
    ``"samplet_rows"`` (data side transformed only).  ``solver`` is
    ``"lasso"`` (continuation TR-SSN) or ``"lstsq"`` (QR least squares).
    """
    tm = {}
    t0 = time.perf_counter()
    X = as_points(points)
    h = np.asarray(values, dtype=float)
    cfg = cfg or CompressionConfig()
    basis = samplet_basis_for_points(X, q=q)
    sub, det = subsample_points(X, h, eps2, mode, subsample_kernel, q=q, cfg=cfg,
                                basis=basis, return_details=True)
    hsig = det["hsig"]
    tm["subsample"] = time.perf_counter() - t0
    centers = X[sub.indices]
    ells = np.atleast_1d(lengthscales(sub.separation, sub.fill)).astype(float)
    dic = KernelDictionary([(KernelModel(family, float(l)), centers) for l in ells])
    m = centers.shape[0]
    t0 = time.perf_counter()
    if formulation == "dense":
        K = assemble_dense(X, dic)
        rhs = h
        col_bases = None
    elif formulation in ("samplet", "samplet_rows"):
        if formulation == "samplet":
            cb = samplet_basis_for_points(centers, q=q)
            col_bases = [cb] * len(ells)
        else:
            col_bases = None
        K = assemble_compressed_rect(basis, dic, col_bases, cfg)
        rhs = hsig
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    tm["assemble"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    reports = []
    if solver == "lstsq":
        A = K.toarray() if hasattr(K, "toarray") else K
        Q, R = np.linalg.qr(A)
        coeffs = scipy.linalg.solve_triangular(R, Q.T @ rhs)
    else:
        cc = cc or ContinuationConfig()
        w = np.full(dic.n_columns, 1.0 / np.sqrt(m))
        p = LassoProblem(K, rhs, w)
        res = continuation_solve(p, cc)
        coeffs = res.alpha
        reports = res.reports
    tm["solve"] = time.perf_counter() - t0
    if formulation == "samplet":
        alpha = np.concatenate([inverse_transform(cb, b) for cb, b in zip(col_bases, dic.split(coeffs))])
    else:
        alpha = coeffs
    o = dic.offsets
    sparsity = [int(np.count_nonzero(coeffs[o[i]:o[i + 1]])) for i in range(len(ells))]
    return FitResult(dic, alpha, coeffs, sub.indices, sub.separation, sub.fill,
                     sparsity, reports, tm)


# test drivers ---------------------------------------------------------------

@dataclass(frozen=True)
class TestSpec:
    """Desk-scale parameters of one reconstruction test."""

    name: str
    function: str
    n: int
    eps2: float
    mode: str
    family: str
    count: int
    lower: tuple  # (factor, "separation" | "fill")
    upper: tuple
    formulation: str = "samplet"
    solver: str = "lasso"
    tol: float = 1e-6
    maxit: int = 100
    r_min: float = 1e-5
    gamma: float = 0.7
    subsample_kernel: str | None = None
    n_eval: int = 100_000


def _ref(spec, rho, h):
    return spec[0] * (rho if spec[1] == "separation" else h)


TEST_SPECS = {
    "1-A": TestSpec("1-A", "heterogeneous2d", 30_000, 1e-4, "Xprime", "exponential", 1,
                    (10.0, "fill"), (10.0, "fill"), "samplet_rows", "lstsq"),
    "1-B": TestSpec("1-B", "heterogeneous2d", 30_000, 1e-7, "Xprime", "exponential", 1,
                    (10.0, "fill"), (10.0, "fill"), "samplet_rows", "lstsq"),
    "1-C": TestSpec("1-C", "heterogeneous2d", 30_000, 1e-10, "Xprime", "exponential", 1,
                    (10.0, "fill"), (10.0, "fill"), "samplet_rows", "lstsq"),
    "2-A": TestSpec("2-A", "gauss4", 100_000, 1e-13, "Xprime", "gaussian", 1,
                    (1.0, "fill"), (1.0, "fill"), "dense"),
    "2-B": TestSpec("2-B", "gauss4", 100_000, 1e-13, "Xprime", "gaussian", 1,
                    (1.0, "fill"), (1.0, "fill"), "samplet"),
    "2-C": TestSpec("2-C", "gauss4", 100_000, 1e-13, "Xprime", "gaussian", 4,
                    (1.0, "separation"), (2.0, "fill"), "samplet"),
    "3": TestSpec("3", "heterogeneous2d", 100_000, 1e-8, "Hprime", "exponential", 5,
                  (2.0, "separation"), (2.0, "fill"), "samplet", maxit=50, r_min=1e-7,
                  subsample_kernel="exponential"),
    "4": TestSpec("4", "phong", 0, 1e-5, "Xprime", "exponential", 3,
                  (5.0, "separation"), (2.0, "fill"), "samplet", tol=1e-5, maxit=50,
                  r_min=1e-4, gamma=0.75),
}

H_PRIME_TEST1 = KernelModel("exponential", 1.0)


def _problem_data(spec: TestSpec, n: int, seed: int, mesh_path=None, mesh_levels: int = 6):
    """Data sites, values, evaluation sites and reference values."""
    if spec.function == "phong":
        if mesh_path:
            verts, faces, normals = read_ply(mesh_path)
            if normals is None:
                if faces is None:
                    raise ValueError("mesh has neither normals nor faces")
                normals = vertex_normals(verts, faces)
        else:
            verts, _, normals = procedural_surface(mesh_levels)
        vals = eval_phong(verts, normals)
        rng = np.random.default_rng(seed)
        held = np.zeros(verts.shape[0], dtype=bool)
        held[rng.permutation(verts.shape[0])[:verts.shape[0] // 10]] = True
        return verts[~held], vals[~held], verts[held], vals[held]
    if spec.function == "gauss4":
        f, lo, hi = eval_gauss4, [0, 0], [1, 1]
    else:
        f, lo, hi = eval_heterogeneous2d, [0, 0], [6, 6]
    X = sample_uniform(n, lo, hi, seed)
    E = sample_uniform(spec.n_eval, lo, hi, seed + 1)
    return X, f(X), E, f(E)


def run_test(name: str, scale: float = 1.0, seed: int = 0, mode: str | None = None,
             n: int | None = None, mesh_path=None, mesh_levels: int = 6,
             large_scale: bool = False, return_fit: bool = False):
    """Run one reconstruction test at desk scale.

    ``scale`` multiplies the default number of data sites; runs above
    ``2 * 10^5`` sites require ``large_scale=True``.
    """
    if name not in TEST_SPECS:
        raise ValueError(f"unknown test {name!r}; choose from {sorted(TEST_SPECS)}")
    spec = TEST_SPECS[name]
    if mode is not None:
        spec = TestSpec(**{**spec.__dict__, "mode": mode})
    n = int(n if n is not None else round(spec.n * scale))
    if n > 200_000 and not large_scale:
        raise MemoryError(f"N={n} exceeds the desk-scale guard; pass large_scale=True")
    X, h, E, hE = _problem_data(spec, n, seed, mesh_path, mesh_levels)
    sk = None
    if spec.mode == "Hprime":
        if spec.subsample_kernel is None or name.startswith("1"):
            sk = H_PRIME_TEST1
        else:
            sk = KernelModel(spec.subsample_kernel, separation_radius(X))

    def ells(rho, fill):
        a, b = _ref(spec.lower, rho, fill), _ref(spec.upper, rho, fill)
        return geometric_lengthscales(a, b, spec.count)

    cc = ContinuationConfig(r0=10.0, gamma=spec.gamma, r_min=spec.r_min,
                            tr=TRConfig(tol=spec.tol, maxit=spec.maxit))
    fit = fit_pipeline(X, h, eps2=spec.eps2, mode=spec.mode, subsample_kernel=sk,
                       family=spec.family, lengthscales=ells, formulation=spec.formulation,
                       solver=spec.solver, cc=cc)
    s = fit.predict(E)
    rep = ErrorReport(
        e2=relative_l2_error(s, hE), max_error=float(np.abs(s - hE).max()),
        sparsity=fit.sparsity, block_sizes=[int(c.shape[0]) for _, c in fit.dictionary.entries],
        n_centers=int(fit.centers_idx.size), separation=fit.separation, fill=fit.fill,
        lengthscales=[m.lengthscale for m, _ in fit.dictionary.entries],
        timings=fit.timings, name=name)
    if return_fit:
        return rep, fit
    return rep
