"""Build a samplet basis on scattered points and look at what it does.

Run with ``python demos/01_samplet_basis.py``.  Prints orthonormality and
moment residuals, shows that a cubic polynomial has no fine-level
coefficients, and reports how sparse a compressed kernel matrix gets.
"""
import numpy as np

from samplet_lasso import (CompressionConfig, KernelModel, assemble_compressed_square,
                           forward_transform, samplet_basis_for_points)
from samplet_lasso.samplets import monomial_exponents

rng = np.random.default_rng(0)
x = rng.random((4096, 2))
basis = samplet_basis_for_points(x, q=3)
print(basis)

T = basis.dense_transform()
print(f"||T T' - I||_F            = {np.linalg.norm(T @ T.T - np.eye(basis.n)):.2e}")

ex = monomial_exponents(3, 2)
V = np.prod(x[:, None, :] ** ex[None], axis=2)
samp = ~basis.is_scaling
print(f"max |moment| of samplets  = {np.abs(T[samp] @ V).max():.2e}")

# A cubic lives entirely in the coarse scaling block.
h = 1 + x[:, 0] - 2 * x[:, 1] ** 2 + x[:, 0] * x[:, 1] ** 2
c = forward_transform(basis, h)
print(f"largest samplet coefficient of a cubic: {np.abs(c[samp]).max():.2e}"
      f" (scaling block max {np.abs(c[~samp]).max():.2e})")

# A smooth-but-not-polynomial function decays with level.
g = np.exp(-20 * np.sum((x - 0.4) ** 2, axis=1))
cg = forward_transform(basis, g)
print("level  max|coefficient|")
for lev in range(basis.levels.max() + 1):
    m = samp & (basis.levels == lev)
    if m.any():
        print(f"{lev:5d}  {np.abs(cg[m]).max():.2e}")

for ell in (0.02, 0.1):
    A = assemble_compressed_square(basis, KernelModel("matern32", ell), CompressionConfig())
    print(f"Matern-3/2, lengthscale {ell}: {A.nnz / basis.n**2:.1%} of entries kept")
