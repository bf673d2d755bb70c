"""Weak-form operators and projections.

Assembles mass, diffusion, convection and the gradient-jump penalty on a
disc mesh, verifies their structural properties numerically, and shows the
L2 projection error of the benchmark Gaussian shrinking at the expected
order under refinement.
"""

import numpy as np

from cipimex.assembly import (StabParams, VelocityField, assemble_cip,
                              assemble_convection, assemble_diffusion,
                              assemble_mass)
from cipimex.mesh import generate_disc_mesh
from cipimex.norms import l2_error, stab_seminorm
from cipimex.spaces import build_space, interpolate, l2_project

beta = VelocityField.rotation()  # (y, -x), tangential on the circle
mesh = generate_disc_mesh(24)
space = build_space(mesh, 2)

M = assemble_mass(space)
A = assemble_diffusion(space, mu=1.0)
C = assemble_convection(space, beta)
S = assemble_cip(space, beta, StabParams(gamma=1.0))

ones = np.ones(space.n_dofs)
print(f"1' M 1 = {ones @ (M @ ones):.6f}  (mesh area {mesh.signed_areas().sum():.6f})")
print(f"|A 1|_max = {np.abs(A @ ones).max():.2e}  (constants in the kernel)")

rng = np.random.default_rng(0)
v = rng.standard_normal(space.n_dofs)
v[space.boundary_dofs] = 0.0
print(f"skew symmetry |v'Cv| / (|v||Cv|) = "
      f"{abs(v @ (C @ v)) / (np.linalg.norm(v) * np.linalg.norm(C @ v)):.2e}")

poly = interpolate(space, lambda x, y: 1.0 + x * y - 0.5 * y ** 2)
print(f"jump seminorm of a global quadratic: {stab_seminorm(S, poly):.2e}")
bump = interpolate(space, lambda x, y: np.exp(-30.0 * ((x - 0.5) ** 2 + y ** 2)))
print(f"jump seminorm of the narrow Gaussian: {stab_seminorm(S, bump):.4f}")

print("\nL2 projection of the Gaussian, P1 spaces:")
f = lambda x, y: np.exp(-30.0 * ((x - 0.5) ** 2 + y ** 2))
prev = None
for nele in (40, 80, 160):
    sp = build_space(generate_disc_mesh(nele), 1)
    err = l2_error(sp, l2_project(sp, f), f)
    note = "" if prev is None else f"  ratio {prev / err:.2f} (4 = O(h^2))"
    print(f"  nele={nele:4d}: error {err:.4e}{note}")
    prev = err
