"""Meshes and finite element spaces.

Builds the two benchmark geometries, prints their quality statistics, writes
a mesh to the ASCII format and reads it back, and inspects the Lagrange
space sizes on each.
"""

import numpy as np

from cipimex.mesh import (generate_disc_mesh, generate_square_mesh, load_mesh,
                          mesh_statistics, save_mesh)
from cipimex.spaces import build_space

print("unit square, 8 cells per side")
sq = generate_square_mesh(8)
st = mesh_statistics(sq)
print(f"  nodes={sq.n_nodes} triangles={sq.n_triangles} "
      f"interior faces={sq.n_interior_faces} boundary faces={sq.n_boundary_faces}")
print(f"  h_max={st.h_max:.4f} h_min={st.h_min:.4f} min angle={st.min_angle:.1f} deg "
      f"area={st.area:.6f}")

print("\nunit disc, 40 boundary faces")
disc = generate_disc_mesh(40)
st = mesh_statistics(disc)
print(f"  nodes={disc.n_nodes} triangles={disc.n_triangles} "
      f"boundary faces={disc.n_boundary_faces}")
print(f"  h_max={st.h_max:.4f} ratio={st.h_max / st.h_min:.2f} "
      f"min angle={st.min_angle:.1f} deg  area deficit "
      f"{(np.pi - st.area) / np.pi:.2%} (inscribed polygon)")

save_mesh(disc, "/tmp/disc40.tmesh")
again = load_mesh("/tmp/disc40.tmesh")
print(f"  round trip: nodes equal = {np.array_equal(disc.nodes, again.nodes)}")

print("\nLagrange spaces on the disc")
for p in (1, 2, 3):
    space = build_space(disc, p)
    print(f"  P{p}: {space.n_dofs} DOFs, {len(space.boundary_dofs)} on the boundary")
