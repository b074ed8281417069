"""Command-line interface: ``subsample``, ``solve`` and ``evaluate``.

Each command reads an INI configuration (``--config``), applies ``--set
section.key=value`` overrides, writes the effective configuration next to its
CSV outputs and exits with

* 0 on success,
* 1 on usage or configuration errors,
* 2 on data errors (unreadable or malformed input),
* 3 on solver failures.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import sys

import numpy as np

from .compression import CompressionConfig
from .experiments import (fit_pipeline, geometric_lengthscales, procedural_surface,
                          read_points, read_ply, relative_l2_error, sample_uniform,
                          vertex_normals)
from .kernel import KernelDictionary, KernelModel
from .lasso_solver import FACTORS, ContinuationConfig, SolverError, TRConfig
from .subsample import MODES, separation_radius, subsample_points
from .testfunctions import eval_gauss4, eval_heterogeneous2d, eval_phong

log = logging.getLogger("samplet_lasso")

DEFAULTS = {
    "run": {"seed": "0", "output": "out"},
    "data": {"source": "gauss4", "path": "", "n": "500", "dim": "2",
             "value_column": "", "mesh_levels": "4"},
    "samplets": {"vanishing_moments": "4"},
    "compression": {"rho": "auto", "kappa": "1e-7"},
    "subsample": {"mode": "Xprime", "eps2": "1e-7", "kernel": "exponential",
                  "lengthscale": "auto"},
    "dictionary": {"family": "gaussian", "formulation": "samplet", "count": "1",
                   "lower_factor": "1.0", "lower_ref": "fill",
                   "upper_factor": "1.0", "upper_ref": "fill"},
    "solver": {"tol": "1e-6", "maxit": "100", "r0": "10", "gamma": "0.7", "r_min": "1e-5",
               "eta1": "1e-3", "eta2": "0.1", "delta0": "1.0", "delta_min": "1e-5",
               "delta_max": "1e3", "c_tau": "0.05", "c_nu": "0.05", "p_tilde": "0.1",
               "rcond": "1e-12", "subproblem": "constrained", "factor": "cholesky"},
    "evaluate": {"n_eval": "10000", "grid": "64", "model": "coefficients",
                 "coefficients": ""},
}

SOURCES = ("gauss4", "heterogeneous2d", "surface", "file")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# configuration --------------------------------------------------------------

def load_config(path=None, overrides=()):
    """Defaults, then the file, then ``section.key=value`` overrides.

    Unknown sections or keys are rejected with the list of valid ones.
    """
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.read_dict(DEFAULTS)
    if path:
        user = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                user.read_file(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise UsageError(f"malformed config {path}: {exc}") from None
        for sec in user.sections():
            for key, val in user.items(sec, raw=True):
                _set(cfg, sec, key, val)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise UsageError(f"override {item!r} must look like section.key=value")
        lhs, val = item.split("=", 1)
        sec, key = lhs.split(".", 1)
        _set(cfg, sec.strip(), key.strip(), val.strip())
    _validate(cfg)
    return cfg


def _set(cfg, sec, key, val):
    if sec not in DEFAULTS:
        raise UsageError(f"unknown section [{sec}]; valid sections: {', '.join(DEFAULTS)}")
    if key not in DEFAULTS[sec]:
        raise UsageError(f"unknown key {key!r} in [{sec}]; valid keys: "
                         f"{', '.join(DEFAULTS[sec])}")
    cfg.set(sec, key, val)


def _validate(cfg):
    def choice(sec, key, allowed):
        v = cfg.get(sec, key)
        if v not in allowed:
            raise UsageError(f"[{sec}] {key} = {v!r}; expected one of {', '.join(allowed)}")

    choice("data", "source", SOURCES)
    choice("subsample", "mode", MODES)
    choice("subsample", "kernel", ("exponential", "gaussian", "matern32"))
    choice("dictionary", "family", ("exponential", "gaussian", "matern32"))
    choice("dictionary", "formulation", ("samplet", "dense"))
    choice("dictionary", "lower_ref", ("separation", "fill"))
    choice("dictionary", "upper_ref", ("separation", "fill"))
    choice("solver", "subproblem", ("constrained", "unconstrained"))
    choice("solver", "factor", FACTORS)
    choice("evaluate", "model", ("coefficients", "reference", "zero"))
    try:
        for sec, keys in DEFAULTS.items():
            for key, default in keys.items():
                v = cfg.get(sec, key)
                if _is_number(default) and not (v == "auto" and default == "auto"):
                    float(v)
                elif default == "auto" and v != "auto":
                    float(v)
    except ValueError:
        raise UsageError(f"[{sec}] {key} = {v!r} is not a number") from None
    if cfg.get("data", "source") == "file" and not cfg.get("data", "path"):
        raise UsageError("[data] source = file needs a path")


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_config(cfg, path):
    with open(path, "w") as fh:
        cfg.write(fh)


# data -----------------------------------------------------------------------

class Dataset:
    """Data sites with values, plus an evaluation set and its reference."""

    def __init__(self, points, values, eval_points, eval_values, domain=None):
        self.points = points
        self.values = values
        self.eval_points = eval_points
        self.eval_values = eval_values
        self.domain = domain


def load_data(cfg) -> Dataset:
    src = cfg.get("data", "source")
    seed = cfg.getint("run", "seed")
    n = cfg.getint("data", "n")
    n_eval = cfg.getint("evaluate", "n_eval")
    if src in ("gauss4", "heterogeneous2d"):
        if n < 1:
            raise DataError("[data] n must be positive")
        f, hi = (eval_gauss4, 1.0) if src == "gauss4" else (eval_heterogeneous2d, 6.0)
        X = sample_uniform(n, [0, 0], [hi, hi], seed)
        E = sample_uniform(n_eval, [0, 0], [hi, hi], seed + 1)
        return Dataset(X, f(X), E, f(E), (0.0, hi))
    if src == "surface":
        path = cfg.get("data", "path")
        if path:
            try:
                verts, faces, normals = read_ply(path)
            except (OSError, ValueError) as exc:
                raise DataError(str(exc)) from None
            if normals is None:
                if faces is None:
                    raise DataError(f"{path}: mesh has neither normals nor faces")
                normals = vertex_normals(verts, faces)
        else:
            verts, _, normals = procedural_surface(cfg.getint("data", "mesh_levels"))
        vals = eval_phong(verts, normals)
        rng = np.random.default_rng(seed)
        held = np.zeros(verts.shape[0], dtype=bool)
        held[rng.permutation(verts.shape[0])[:max(1, verts.shape[0] // 10)]] = True
        return Dataset(verts[~held], vals[~held], verts[held], vals[held])
    path = cfg.get("data", "path")
    dim = cfg.getint("data", "dim")
    try:
        arr = read_points(path, dim + 1)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None
    vc = cfg.get("data", "value_column")
    col = int(vc) if vc else dim
    if not -arr.shape[1] <= col < arr.shape[1]:
        raise DataError(f"{path}: value column {col} out of range")
    X, h = arr[:, :dim], arr[:, col]
    # without a reference function the data sites double as evaluation set
    return Dataset(X, h, X, h)


# pipeline -------------------------------------------------------------------

def _compression(cfg):
    rho = cfg.get("compression", "rho")
    return CompressionConfig(rho=None if rho == "auto" else float(rho),
                             kappa=cfg.getfloat("compression", "kappa"))


def _subsample_kernel(cfg, X):
    if cfg.get("subsample", "mode") != "Hprime":
        return None
    ls = cfg.get("subsample", "lengthscale")
    ell = separation_radius(X) if ls == "auto" else float(ls)
    return KernelModel(cfg.get("subsample", "kernel"), ell)


def _q(cfg):
    m = cfg.getint("samplets", "vanishing_moments")
    if m < 1:
        raise UsageError("[samplets] vanishing_moments must be at least 1")
    return m - 1


def _solver_config(cfg):
    s = "solver"
    tr = TRConfig(tol=cfg.getfloat(s, "tol"), maxit=cfg.getint(s, "maxit"),
                  eta1=cfg.getfloat(s, "eta1"), eta2=cfg.getfloat(s, "eta2"),
                  delta0=cfg.getfloat(s, "delta0"), delta_min=cfg.getfloat(s, "delta_min"),
                  delta_max=cfg.getfloat(s, "delta_max"), c_tau=cfg.getfloat(s, "c_tau"),
                  c_nu=cfg.getfloat(s, "c_nu"), p_tilde=cfg.getfloat(s, "p_tilde"),
                  rcond=cfg.getfloat(s, "rcond"), subproblem=cfg.get(s, "subproblem"),
                  factor=cfg.get(s, "factor"))
    return ContinuationConfig(r0=cfg.getfloat(s, "r0"), gamma=cfg.getfloat(s, "gamma"),
                              r_min=cfg.getfloat(s, "r_min"), tr=tr)


def _lengthscale_rule(cfg):
    d = "dictionary"
    lf, lr = cfg.getfloat(d, "lower_factor"), cfg.get(d, "lower_ref")
    uf, ur = cfg.getfloat(d, "upper_factor"), cfg.get(d, "upper_ref")
    count = cfg.getint(d, "count")

    def rule(rho, fill):
        a = lf * (rho if lr == "separation" else fill)
        b = uf * (rho if ur == "separation" else fill)
        return geometric_lengthscales(a, b, count)

    return rule


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _outdir(cfg):
    out = cfg.get("run", "output")
    os.makedirs(out, exist_ok=True)
    return out


def cmd_subsample(cfg):
    """Select representative sites and write them with their statistics."""
    data = load_data(cfg)
    out = _outdir(cfg)
    X, h = data.points, data.values
    sub = subsample_points(X, h, cfg.getfloat("subsample", "eps2"), cfg.get("subsample", "mode"),
                           _subsample_kernel(cfg, X), q=_q(cfg),
                           cfg=_compression(cfg))
    dim = X.shape[1]
    coords = [f"x{i}" for i in range(dim)]
    _write_csv(os.path.join(out, "subsample.csv"), ["index"] + coords + ["value"],
               ([int(i)] + list(X[i]) + [h[i]] for i in sub.indices))
    _write_csv(os.path.join(out, "subsample_stats.csv"),
               ["n_points", "n_centers", "separation", "fill", "eps2", "mode"],
               [[X.shape[0], sub.size, sub.separation, sub.fill, sub.eps2, sub.mode]])
    write_config(cfg, os.path.join(out, "effective_config.ini"))
    print(f"{sub.size} of {X.shape[0]} sites selected; separation {sub.separation:.6g}, "
          f"fill {sub.fill:.6g}")
    return 0


def cmd_solve(cfg):
    """Fit sparse kernel coefficients on the selected sites."""
    data = load_data(cfg)
    out = _outdir(cfg)
    X, h = data.points, data.values
    cc = _solver_config(cfg)
    fit = fit_pipeline(X, h, eps2=cfg.getfloat("subsample", "eps2"),
                       mode=cfg.get("subsample", "mode"),
                       subsample_kernel=_subsample_kernel(cfg, X),
                       family=cfg.get("dictionary", "family"),
                       lengthscales=_lengthscale_rule(cfg),
                       formulation=cfg.get("dictionary", "formulation"),
                       cc=cc, q=_q(cfg), cfg=_compression(cfg))
    dic = fit.dictionary
    dim = X.shape[1]
    rows = []
    o = dic.offsets
    for b, (model, centers) in enumerate(dic.entries):
        for j in range(centers.shape[0]):
            rows.append([b, model.family, model.lengthscale, int(fit.centers_idx[j])]
                        + list(centers[j]) + [fit.alpha[o[b] + j], fit.coeffs[o[b] + j]])
    coords = [f"x{i}" for i in range(dim)]
    _write_csv(os.path.join(out, "coefficients.csv"),
               ["block", "family", "lengthscale", "index"] + coords + ["alpha", "coefficient"],
               rows)
    _write_csv(os.path.join(out, "sparsity.csv"), ["block", "lengthscale", "nonzero", "size"],
               [[b, m.lengthscale, fit.sparsity[b], c.shape[0]]
                for b, (m, c) in enumerate(dic.entries)])
    with open(os.path.join(out, "iterations.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for j, rep in enumerate(fit.reports):
            rep.write_rows(w, header=(j == 0), level=j)
    write_config(cfg, os.path.join(out, "effective_config.ini"))
    conv = sum(r.converged for r in fit.reports)
    print(f"{fit.centers_idx.size} centers, {len(dic.entries)} kernels, "
          f"nonzeros {'/'.join(map(str, fit.sparsity))}; "
          f"{conv}/{len(fit.reports)} continuation levels converged")
    return 0


def _read_coefficients(path, dim):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if len(rows) < 2:
        raise DataError(f"{path}: no coefficients")
    head = rows[0]
    try:
        ib, ifam, il = head.index("block"), head.index("family"), head.index("lengthscale")
        ic = [head.index(f"x{i}") for i in range(dim)]
        ia = head.index("alpha")
    except ValueError:
        raise DataError(f"{path}: unexpected header {head}") from None
    blocks = {}
    for lineno, r in enumerate(rows[1:], 2):
        try:
            key = (int(r[ib]), r[ifam], float(r[il]))
            blocks.setdefault(key, []).append([float(r[i]) for i in ic] + [float(r[ia])])
        except (ValueError, IndexError):
            raise DataError(f"{path}:{lineno}: malformed row") from None
    entries, alpha = [], []
    for (_, fam, ell), vals in sorted(blocks.items()):
        arr = np.array(vals)
        entries.append((KernelModel(fam, ell), arr[:, :dim]))
        alpha.append(arr[:, dim])
    return KernelDictionary(entries), np.concatenate(alpha)


def cmd_evaluate(cfg):
    """Evaluate a fitted model against the reference data."""
    data = load_data(cfg)
    out = _outdir(cfg)
    E, hE = data.eval_points, data.eval_values
    dim = E.shape[1]
    model = cfg.get("evaluate", "model")
    if model == "coefficients":
        path = cfg.get("evaluate", "coefficients") or os.path.join(out, "coefficients.csv")
        dic, alpha = _read_coefficients(path, dim)
        predict = lambda x: dic.evaluate(alpha, x)  # noqa: E731
    elif model == "reference":
        predict = None
    else:
        predict = lambda x: np.zeros(x.shape[0])  # noqa: E731
    s = hE.copy() if predict is None else predict(E)
    e2 = relative_l2_error(s, hE)
    emax = float(np.abs(s - hE).max())
    _write_csv(os.path.join(out, "errors.csv"), ["n_eval", "e2", "max_error"],
               [[E.shape[0], e2, emax]])
    if data.domain is not None and dim == 2:
        g = cfg.getint("evaluate", "grid")
        t = np.linspace(data.domain[0], data.domain[1], g)
        G = np.column_stack([a.ravel() for a in np.meshgrid(t, t, indexing="xy")])
        f = eval_gauss4 if cfg.get("data", "source") == "gauss4" else eval_heterogeneous2d
        ref = f(G)
        val = ref if predict is None else predict(G)
        _write_csv(os.path.join(out, "grid.csv"), ["x0", "x1", "value", "reference"],
                   ([*G[i], val[i], ref[i]] for i in range(G.shape[0])))
    write_config(cfg, os.path.join(out, "effective_config.ini"))
    print(f"e2 = {e2:.6e}, max error = {emax:.6e} on {E.shape[0]} points")
    return 0


COMMANDS = {"subsample": cmd_subsample, "solve": cmd_solve, "evaluate": cmd_evaluate}


def build_parser():
    ap = argparse.ArgumentParser(prog="samplet-lasso",
                                 description="Sparse multiscale kernel approximation.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", "-c", help="INI configuration file")
        p.add_argument("--set", "-s", action="append", default=[], metavar="SEC.KEY=VALUE",
                       help="override one configuration value")
        p.add_argument("--output", "-o", help="output directory (overrides [run] output)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.set)
        if args.output:
            overrides.append(f"run.output={args.output}")
        cfg = load_config(args.config, overrides)
        print(f"# effective configuration ({args.command})")
        cfg.write(sys.stdout)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except MemoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
