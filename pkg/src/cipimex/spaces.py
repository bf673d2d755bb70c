"""Lagrange finite element spaces on triangle meshes.

Provides symmetric triangle quadrature (degree <= 8), Gauss edge quadrature
(degree <= 11), P1/P2/P3 reference bases with gradients, the global DOF map
(vertex, edge, interior numbering), and the L2 / piecewise-constant
projections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

from cipimex.mesh import TriMesh

MAX_TRI_DEGREE = 8
MAX_EDGE_DEGREE = 11


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle or reference edge [0, 1].

    Triangle points are barycentric (n, 3) and weights sum to 1/2; edge
    points are 1D parameters (n,) and weights sum to 1.
    """

    kind: str  # 'triangle' | 'edge'
    degree: int
    points: np.ndarray
    weights: np.ndarray


def _orbit3(a):
    c = 1.0 - 2.0 * a
    return [(c, a, a), (a, c, a), (a, a, c)]


def _tri_rule_points(degree):
    # symmetric rules up to degree 5, conical product above
    if degree <= 1:
        return np.array([(1 / 3, 1 / 3, 1 / 3)]), np.array([1.0])
    if degree == 2:
        return np.array(_orbit3(1 / 6)), np.full(3, 1 / 3)
    if degree <= 4:
        a, wa = 0.445948490915965, 0.223381589678011
        b, wb = 0.091576213509771, 0.109951743655322
        pts = np.array(_orbit3(a) + _orbit3(b))
        w = np.array([wa] * 3 + [wb] * 3)
        return pts, w
    if degree == 5:
        a, wa = 0.470142064105115, 0.132394152788506
        b, wb = 0.101286507323456, 0.125939180544827
        pts = np.array([(1 / 3, 1 / 3, 1 / 3)] + _orbit3(a) + _orbit3(b))
        w = np.array([0.225] + [wa] * 3 + [wb] * 3)
        return pts, w
    if degree <= MAX_TRI_DEGREE:
        # conical product (Duffy map): Gauss-Jacobi(1,0) x Gauss-Legendre
        k = (degree + 2) // 2
        tj, wj = roots_jacobi(k, 1.0, 0.0)
        xi = 0.5 * (tj + 1.0)
        wxi = 0.25 * wj  # absorbs the (1 - xi) Jacobian factor
        tl, wl = np.polynomial.legendre.leggauss(k)
        eta = 0.5 * (tl + 1.0)
        weta = 0.5 * wl
        L1 = np.repeat(xi, k)
        L2 = np.tile(eta, k) * (1.0 - L1)
        w = (np.repeat(wxi, k) * np.tile(weta, k)) * 2.0  # normalized to sum 1
        pts = np.column_stack([1.0 - L1 - L2, L1, L2])
        return pts, w
    raise ValueError(f"triangle quadrature degree {degree} unsupported (max {MAX_TRI_DEGREE})")


def quadrature_rule(kind: str, exact_degree: int) -> QuadratureRule:
    """Rule integrating polynomials up to ``exact_degree`` exactly.

    ``kind='triangle'`` returns barycentric points with weights summing to
    the reference area 1/2; ``kind='edge'`` returns Gauss points on [0, 1].
    """
    if exact_degree < 0:
        raise ValueError("exact_degree must be non-negative")
    if kind == "triangle":
        pts, w = _tri_rule_points(exact_degree)
        return QuadratureRule("triangle", exact_degree, pts, 0.5 * w)
    if kind == "edge":
        if exact_degree > MAX_EDGE_DEGREE:
            raise ValueError(f"edge quadrature degree {exact_degree} unsupported (max {MAX_EDGE_DEGREE})")
        npts = max(1, (exact_degree + 2) // 2)
        t, w = np.polynomial.legendre.leggauss(npts)
        return QuadratureRule("edge", exact_degree, 0.5 * (t + 1.0), 0.5 * w)
    raise ValueError(f"unknown quadrature kind {kind!r}")


def n_local_dofs(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


# local reference coordinates (barycentric) of the Lagrange nodes, matching
# the local numbering: vertices, then p-1 nodes per edge (0,1),(1,2),(2,0)
# in edge direction, then the interior node for p=3
def local_node_barycentric(degree: int) -> np.ndarray:
    v = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    if degree == 1:
        return np.array(v, dtype=float)
    edges = [(0, 1), (1, 2), (2, 0)]
    nodes = list(v)
    for i, j in edges:
        for k in range(1, degree):
            lam = [0.0, 0.0, 0.0]
            lam[i] = 1.0 - k / degree
            lam[j] = k / degree
            nodes.append(tuple(lam))
    if degree == 3:
        nodes.append((1 / 3, 1 / 3, 1 / 3))
    return np.array(nodes, dtype=float)


def reference_basis(degree: int, bary: np.ndarray):
    """Values and reference gradients of the local basis.

    Parameters
    ----------
    bary : (n, 3) array of barycentric coordinates.

    Returns
    -------
    values : (n, nloc)
    grads : (n, nloc, 2)
        Derivatives with respect to the reference coordinates
        ``(xi, eta) = (lambda_1, lambda_2)``.
    """
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    n = bary.shape[0]
    nloc = n_local_dofs(degree)
    vals = np.empty((n, nloc))
    glam = np.zeros((n, nloc, 3))  # d/d(lambda_i), lambdas treated independent
    L = [bary[:, 0], bary[:, 1], bary[:, 2]]

    if degree == 1:
        for i in range(3):
            vals[:, i] = L[i]
            glam[:, i, i] = 1.0
    elif degree == 2:
        for i in range(3):
            vals[:, i] = L[i] * (2.0 * L[i] - 1.0)
            glam[:, i, i] = 4.0 * L[i] - 1.0
        for k, (i, j) in enumerate([(0, 1), (1, 2), (2, 0)]):
            vals[:, 3 + k] = 4.0 * L[i] * L[j]
            glam[:, 3 + k, i] = 4.0 * L[j]
            glam[:, 3 + k, j] = 4.0 * L[i]
    elif degree == 3:
        for i in range(3):
            vals[:, i] = 0.5 * L[i] * (3.0 * L[i] - 1.0) * (3.0 * L[i] - 2.0)
            glam[:, i, i] = 0.5 * (27.0 * L[i] ** 2 - 18.0 * L[i] + 2.0)
        for k, (i, j) in enumerate([(0, 1), (1, 2), (2, 0)]):
            # node nearer vertex i, then nearer vertex j
            vals[:, 3 + 2 * k] = 4.5 * L[i] * L[j] * (3.0 * L[i] - 1.0)
            glam[:, 3 + 2 * k, i] = 4.5 * L[j] * (6.0 * L[i] - 1.0)
            glam[:, 3 + 2 * k, j] = 4.5 * L[i] * (3.0 * L[i] - 1.0)
            vals[:, 4 + 2 * k] = 4.5 * L[i] * L[j] * (3.0 * L[j] - 1.0)
            glam[:, 4 + 2 * k, i] = 4.5 * L[j] * (3.0 * L[j] - 1.0)
            glam[:, 4 + 2 * k, j] = 4.5 * L[i] * (6.0 * L[j] - 1.0)
        vals[:, 9] = 27.0 * L[0] * L[1] * L[2]
        glam[:, 9, 0] = 27.0 * L[1] * L[2]
        glam[:, 9, 1] = 27.0 * L[0] * L[2]
        glam[:, 9, 2] = 27.0 * L[0] * L[1]
    else:
        raise ValueError(f"unsupported degree {degree} (need 1, 2 or 3)")

    grads = np.empty((n, nloc, 2))
    grads[:, :, 0] = glam[:, :, 1] - glam[:, :, 0]
    grads[:, :, 1] = glam[:, :, 2] - glam[:, :, 0]
    return vals, grads


@dataclass
class FeSpace:
    """Continuous degree-p Lagrange space over a :class:`TriMesh`.

    ``constrained=True`` marks the subspace with homogeneous Dirichlet data:
    assembled operators eliminate boundary rows/columns (unit diagonal) and
    projected fields carry zero boundary coefficients.
    """

    mesh: TriMesh
    degree: int
    dof_coords: np.ndarray
    cell_dofs: np.ndarray
    boundary_dofs: np.ndarray
    constrained: bool
    # affine geometry, precomputed per cell
    corners: np.ndarray = field(repr=False)
    jac: np.ndarray = field(repr=False)
    inv_jac_t: np.ndarray = field(repr=False)
    det_jac: np.ndarray = field(repr=False)

    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_dofs(self) -> int:
        return self.dof_coords.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cell_dofs.shape[0]

    def volume_rule(self) -> QuadratureRule:
        """Default over-integrating volume rule, exact to degree 2p+2."""
        return quadrature_rule("triangle", 2 * self.degree + 2)

    def edge_rule(self) -> QuadratureRule:
        """Default face/boundary rule with max(p+1, 3) Gauss points."""
        npts = max(self.degree + 1, 3)
        return quadrature_rule("edge", 2 * npts - 1)


@dataclass
class FieldVector:
    """Coefficients of a discrete function over a :class:`FeSpace`."""

    values: np.ndarray
    space: FeSpace

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.n_dofs,):
            raise ValueError(
                f"coefficient length {self.values.shape} does not match "
                f"{self.space.n_dofs} DOFs")

    def copy(self) -> "FieldVector":
        return FieldVector(self.values.copy(), self.space)


def _edge_table(triangles: np.ndarray):
    """Canonical edge enumeration: (n_edges, 2) sorted node pairs plus the
    per-cell edge ids and a flag telling whether the cell traverses the edge
    in canonical (low -> high) direction."""
    directed = np.stack(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=1)
    canon = np.sort(directed, axis=2)
    flat = canon.reshape(-1, 2)
    edges, inverse = np.unique(flat, axis=0, return_inverse=True)
    cell_edges = inverse.reshape(-1, 3)
    forward = directed[:, :, 0] == canon[:, :, 0]
    return edges, cell_edges, forward


def build_space(mesh: TriMesh, degree: int, constrained: bool = False) -> FeSpace:
    """Global continuous numbering: vertex DOFs first, then p-1 DOFs per edge
    (in canonical edge direction), then one interior DOF per cell for p=3."""
    if degree not in (1, 2, 3):
        raise ValueError(f"unsupported degree {degree} (need 1, 2 or 3)")
    tris = mesh.triangles
    nv = mesh.n_nodes
    nloc = n_local_dofs(degree)
    ncell = mesh.n_triangles

    cell_dofs = np.empty((ncell, nloc), dtype=np.int64)
    cell_dofs[:, :3] = tris

    if degree >= 2:
        edges, cell_edges, forward = _edge_table(tris)
        ne = len(edges)
        per_edge = degree - 1
        for k in range(3):
            base = nv + per_edge * cell_edges[:, k]
            if degree == 2:
                cell_dofs[:, 3 + k] = base
            else:
                fwd = forward[:, k]
                cell_dofs[:, 3 + 2 * k] = np.where(fwd, base, base + 1)
                cell_dofs[:, 4 + 2 * k] = np.where(fwd, base + 1, base)
        if degree == 3:
            cell_dofs[:, 9] = nv + per_edge * ne + np.arange(ncell)

    # DOF coordinates
    coords = [mesh.nodes]
    if degree >= 2:
        pa, pb = mesh.nodes[edges[:, 0]], mesh.nodes[edges[:, 1]]
        if degree == 2:
            coords.append(0.5 * (pa + pb))
        else:
            coords.append(np.stack([pa + (pb - pa) / 3.0, pa + 2.0 * (pb - pa) / 3.0],
                                   axis=1).reshape(-1, 2))
    if degree == 3:
        coords.append(mesh.nodes[tris].mean(axis=1))
    dof_coords = np.vstack(coords)

    # boundary DOFs: boundary vertices plus DOFs of boundary edges
    bset = set(np.unique(mesh.bface_nodes).tolist())
    if degree >= 2:
        lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
        for a, b in mesh.bface_nodes:
            eid = lookup[(min(int(a), int(b)), max(int(a), int(b)))]
            for k in range(degree - 1):
                bset.add(nv + (degree - 1) * eid + k)
    boundary_dofs = np.array(sorted(bset), dtype=np.int64)

    corners = mesh.triangle_corners()
    jac = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv_jac_t = np.empty_like(jac)
    inv_jac_t[:, 0, 0] = jac[:, 1, 1] / det
    inv_jac_t[:, 0, 1] = -jac[:, 1, 0] / det
    inv_jac_t[:, 1, 0] = -jac[:, 0, 1] / det
    inv_jac_t[:, 1, 1] = jac[:, 0, 0] / det

    return FeSpace(mesh=mesh, degree=degree, dof_coords=dof_coords,
                   cell_dofs=cell_dofs, boundary_dofs=boundary_dofs,
                   constrained=constrained, corners=corners, jac=jac,
                   inv_jac_t=inv_jac_t, det_jac=det)


def eval_basis(space: FeSpace, tri: int, point):
    """Basis values and physical gradients of one cell at one reference point.

    ``point`` may be barycentric (3 entries) or reference coordinates
    ``(xi, eta)``.  Values satisfy the partition of unity; gradients are
    mapped through the inverse Jacobian transpose of the cell.
    """
    point = np.asarray(point, dtype=float)
    if point.shape[-1] == 2:
        bary = np.array([1.0 - point[0] - point[1], point[0], point[1]])
    else:
        bary = point
    vals, grads = reference_basis(space.degree, bary[None, :])
    phys = grads[0] @ space.inv_jac_t[tri].T
    return vals[0], phys


def interpolate(space: FeSpace, f) -> FieldVector:
    """Nodal interpolant: evaluate ``f(x, y)`` at the DOF coordinates."""
    vals = np.asarray(f(space.dof_coords[:, 0], space.dof_coords[:, 1]), dtype=float)
    vals = np.broadcast_to(vals, (space.n_dofs,)).copy()
    if space.constrained:
        vals[space.boundary_dofs] = 0.0
    return FieldVector(vals, space)


def l2_project(space: FeSpace, f, tol: float = 1e-12) -> FieldVector:
    """L2 projection of ``f(x, y)`` onto the space (mass-matrix CG solve)."""
    from cipimex.assembly import assemble_mass, assemble_source
    from cipimex.linsolve import cg_solve

    M = space._cache.get("mass")
    if M is None:
        M = assemble_mass(space)
        space._cache["mass"] = M
    b = assemble_source(space, lambda x, y, t: f(x, y), 0.0)
    x, _ = cg_solve(M, b.values, tol_rel=tol, preconditioner="jacobi")
    return FieldVector(x, space)


def p0_project(space: FeSpace, v: FieldVector) -> np.ndarray:
    """Cell averages of a discrete function (projection onto piecewise
    constants), returned as an array of length n_cells."""
    rule = quadrature_rule("triangle", space.degree)
    vals, _ = reference_basis(space.degree, rule.points)
    coeffs = v.values[space.cell_dofs]  # (T, nloc)
    vq = coeffs @ vals.T  # (T, nq)
    return (vq @ rule.weights) / 0.5
