"""Closed-form reference functions for the reconstruction experiments."""
from __future__ import annotations

import numpy as np

from .cluster_tree import as_points

__all__ = [
    "GAUSS4_CENTERS",
    "GAUSS4_AMPLITUDES",
    "GAUSS4_WIDTHS",
    "eval_gauss4",
    "eval_heterogeneous2d",
    "heterogeneous2d_features",
    "eval_phong",
    "PHONG",
]

GAUSS4_CENTERS = np.array([[0.20, 0.80], [0.75, 0.25], [0.65, 0.65], [0.30, 0.30]])
GAUSS4_AMPLITUDES = np.array([0.50, 0.60, 0.40, 0.55])
GAUSS4_WIDTHS = np.array([0.03, 0.06, 0.13, 0.25])


def eval_gauss4(x) -> np.ndarray:
    """Sum of four isotropic Gaussian bumps on the unit square."""
    x = as_points(x)
    d2 = np.sum((x[:, None, :] - GAUSS4_CENTERS[None]) ** 2, axis=2)
    return np.exp(-d2 / (2 * GAUSS4_WIDTHS**2)) @ GAUSS4_AMPLITUDES


# heterogeneous composite on [0, 6]^2 ------------------------------------------
# Six features: linear gradient, constant block, cone peak, exponential cusp,
# curved ridge and an oscillatory wedge.  The layout is fixed once and for all.

_GRAD_BOX = (0.3, 2.7, 0.3, 2.7)
_BLOCK_BOX = (3.6, 5.6, 0.4, 1.8)
_BLOCK_VALUE = 0.7
_CONE_CENTER = np.array([1.6, 4.4])
_CONE_RADIUS = 1.1
_CUSP_CENTER = np.array([4.4, 2.2])
_CUSP_SCALE = 0.25
_CUSP_CUTOFF = 1.2
_RIDGE_X = (2.9, 5.7)
_RIDGE_WIDTH = 0.06
_WEDGE_APEX = np.array([3.0, 3.6])
_WEDGE_ANGLES = (np.deg2rad(60.0), np.deg2rad(120.0))
_WEDGE_RADIUS = 2.2


def _in_box(x, box):
    return (x[:, 0] >= box[0]) & (x[:, 0] <= box[1]) & (x[:, 1] >= box[2]) & (x[:, 1] <= box[3])


def _ridge_center(xc):
    return 2.8 + 0.4 * np.sin(1.5 * (xc - 2.8))


def heterogeneous2d_features(x) -> dict:
    """Individual feature layers; their sum is :func:`eval_heterogeneous2d`."""
    x = as_points(x)
    px, py = x[:, 0], x[:, 1]
    out = {}
    grad = 0.1 + 0.15 * (px - 0.3) + 0.1 * (py - 0.3)
    out["linear_gradient"] = np.where(_in_box(x, _GRAD_BOX), grad, 0.0)
    out["constant_block"] = np.where(_in_box(x, _BLOCK_BOX), _BLOCK_VALUE, 0.0)
    r = np.linalg.norm(x - _CONE_CENTER, axis=1)
    out["cone_peak"] = np.maximum(0.0, 1.0 - r / _CONE_RADIUS)
    r = np.linalg.norm(x - _CUSP_CENTER, axis=1)
    cusp = 0.9 * (np.exp(-r / _CUSP_SCALE) - np.exp(-_CUSP_CUTOFF / _CUSP_SCALE))
    out["exponential_cusp"] = np.maximum(cusp, 0.0)
    lo, hi = _RIDGE_X
    t = np.clip((px - lo) / (hi - lo), 0.0, 1.0)
    taper = np.where((px >= lo) & (px <= hi), np.sin(np.pi * t) ** 2, 0.0)
    dy = py - _ridge_center(px)
    out["curved_ridge"] = 0.6 * taper * np.exp(-(dy / _RIDGE_WIDTH) ** 2)
    v = x - _WEDGE_APEX
    rw = np.linalg.norm(v, axis=1)
    ang = np.arctan2(v[:, 1], v[:, 0])
    inside = (ang >= _WEDGE_ANGLES[0]) & (ang <= _WEDGE_ANGLES[1]) & (rw <= _WEDGE_RADIUS)
    out["oscillatory_wedge"] = np.where(inside, 0.3 * np.sin(12.0 * rw), 0.0)
    return out


def eval_heterogeneous2d(x) -> np.ndarray:
    """Composite multiscale test function on ``[0, 6]^2``."""
    return sum(heterogeneous2d_features(x).values())


PHONG = {
    "alpha": 0.50,
    "beta": 0.10,
    "sigma": 2.0,
    "v_l": np.array([1.0, 0.0, 1.0]) / np.sqrt(2.0),
    "v_o": np.array([1.0, 1.0, 2.0]) / np.sqrt(6.0),
}


def eval_phong(x, normals) -> np.ndarray:
    """Diffuse plus specular reflectance for unit surface normals.

    ``x`` only fixes the number of sites; the value depends on the normal.
    """
    n = np.atleast_2d(np.asarray(normals, dtype=float))
    if x is not None and as_points(x).shape[0] != n.shape[0]:
        raise ValueError("need one normal per site")
    if n.shape[1] != 3:
        raise ValueError("normals must be 3-vectors")
    if not np.allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-6):
        raise ValueError("normals must have unit length")
    vl, vo = PHONG["v_l"], PHONG["v_o"]
    ndl = n @ vl
    r = 2.0 * ndl[:, None] * n - vl
    spec = np.exp(-np.sum((r - vo) ** 2, axis=1) / (2 * PHONG["sigma"] ** 2))
    return PHONG["alpha"] * np.maximum(ndl, 0.0) + PHONG["beta"] * spec
