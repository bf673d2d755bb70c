"""Assembly of the weak-form operators.

Builds the sparse matrices entering the schemes: mass, diffusion, convection
``C_ij = (beta . grad phi_j, phi_i)``, the gradient-jump face penalty, the
upwind weak-inflow boundary operator, and load functionals.  Velocity fields
are sampled at quadrature points; volume forms over-integrate to degree
2p+2 so quadrature error stays below the discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cipimex.linsolve import SparseMatrix
from cipimex.spaces import FeSpace, FieldVector, reference_basis

_CHUNK = 16384


@dataclass
class VelocityField:
    """Divergence-free advecting velocity.

    ``evaluator(x, y, t)`` must accept coordinate arrays and return an array
    of shape ``x.shape + (2,)``.  ``inf_norm`` is the max Euclidean norm of
    the field over the closure of the domain, used by CFL formulas.
    """

    evaluator: object
    inf_norm: float
    divergence_free: bool = True
    time_dependent: bool = False

    def __call__(self, x, y, t=0.0):
        v = np.asarray(self.evaluator(x, y, t), dtype=float)
        return np.broadcast_to(v, np.shape(x) + (2,))

    @classmethod
    def constant(cls, bx: float, by: float) -> "VelocityField":
        b = np.array([bx, by])
        return cls(lambda x, y, t: np.broadcast_to(b, np.shape(x) + (2,)),
                   inf_norm=float(np.hypot(bx, by)))

    @classmethod
    def rotation(cls) -> "VelocityField":
        """The solid rotation (y, -x); unit inf-norm on the unit disc."""
        return cls(lambda x, y, t: np.stack([y, -x], axis=-1), inf_norm=1.0)


@dataclass
class StabParams:
    """Gradient-penalty weight and optional crosswind coefficient."""

    gamma: float
    eps_cross: float = 0.0

    def __post_init__(self):
        if self.gamma < 0.0 or self.eps_cross < 0.0:
            raise ValueError("stabilization parameters must be non-negative")


def _finalize(space: FeSpace, rows, cols, vals) -> SparseMatrix:
    """Sum COO triplets into CSR; for constrained spaces eliminate boundary
    rows/columns symmetrically and put a unit diagonal there."""
    n = space.n_dofs
    rows = np.concatenate(rows) if isinstance(rows, list) else rows
    cols = np.concatenate(cols) if isinstance(cols, list) else cols
    vals = np.concatenate(vals) if isinstance(vals, list) else vals
    if space.constrained and len(space.boundary_dofs):
        is_bdry = np.zeros(n, dtype=bool)
        is_bdry[space.boundary_dofs] = True
        keep = ~(is_bdry[rows] | is_bdry[cols])
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        rows = np.concatenate([rows, space.boundary_dofs])
        cols = np.concatenate([cols, space.boundary_dofs])
        vals = np.concatenate([vals, np.ones(len(space.boundary_dofs))])
    return SparseMatrix.from_coo(rows, cols, vals, (n, n))


def _zero_constrained(space: FeSpace, b: np.ndarray) -> np.ndarray:
    if space.constrained and len(space.boundary_dofs):
        b[space.boundary_dofs] = 0.0
    return b


def assemble_mass(space: FeSpace) -> SparseMatrix:
    """Mass matrix ``(phi_j, phi_i)``; SPD, exact for affine cells."""
    rule = space.volume_rule()
    V, _ = reference_basis(space.degree, rule.points)
    m_ref = np.einsum("q,qi,qj->ij", rule.weights, V, V)
    vals = space.det_jac[:, None, None] * m_ref[None, :, :]
    rows = np.broadcast_to(space.cell_dofs[:, :, None], vals.shape)
    cols = np.broadcast_to(space.cell_dofs[:, None, :], vals.shape)
    return _finalize(space, rows.ravel(), cols.ravel(), vals.ravel())


def assemble_diffusion(space: FeSpace, mu: float) -> SparseMatrix:
    """Diffusion matrix ``mu (grad phi_j, grad phi_i)``; returns an all-zero
    matrix for ``mu = 0``."""
    if mu < 0.0:
        raise ValueError("mu must be non-negative")
    n = space.n_dofs
    if mu == 0.0:
        return SparseMatrix.zeros(n)
    rule = space.volume_rule()
    _, G = reference_basis(space.degree, rule.points)
    rows, cols, vals = [], [], []
    for lo in range(0, space.n_cells, _CHUNK):
        hi = min(lo + _CHUNK, space.n_cells)
        gp = np.einsum("qie,tde->tqid", G, space.inv_jac_t[lo:hi], optimize=True)
        a_loc = mu * np.einsum("q,t,tqid,tqjd->tij", rule.weights,
                               space.det_jac[lo:hi], gp, gp, optimize=True)
        dofs = space.cell_dofs[lo:hi]
        rows.append(np.broadcast_to(dofs[:, :, None], a_loc.shape).ravel())
        cols.append(np.broadcast_to(dofs[:, None, :], a_loc.shape).ravel())
        vals.append(a_loc.ravel())
    return _finalize(space, rows, cols, vals)


def assemble_convection(space: FeSpace, beta: VelocityField, t: float = 0.0) -> SparseMatrix:
    """Convection matrix ``C_ij = (beta . grad phi_j, phi_i)``."""
    rule = space.volume_rule()
    V, G = reference_basis(space.degree, rule.points)
    rows, cols, vals = [], [], []
    for lo in range(0, space.n_cells, _CHUNK):
        hi = min(lo + _CHUNK, space.n_cells)
        x = np.einsum("qk,tkd->tqd", rule.points, space.corners[lo:hi])
        bq = beta(x[..., 0], x[..., 1], t)
        gp = np.einsum("qie,tde->tqid", G, space.inv_jac_t[lo:hi], optimize=True)
        bg = np.einsum("tqjd,tqd->tqj", gp, bq, optimize=True)
        c_loc = np.einsum("q,t,qi,tqj->tij", rule.weights, space.det_jac[lo:hi],
                          V, bg, optimize=True)
        dofs = space.cell_dofs[lo:hi]
        rows.append(np.broadcast_to(dofs[:, :, None], c_loc.shape).ravel())
        cols.append(np.broadcast_to(dofs[:, None, :], c_loc.shape).ravel())
        vals.append(c_loc.ravel())
    return _finalize(space, rows, cols, vals)


def assemble_convective_gram(space: FeSpace, beta: VelocityField, t: float = 0.0) -> SparseMatrix:
    """Gram matrix of the convective derivative,
    ``G_ij = (beta . grad phi_j, beta . grad phi_i)``; used by the material
    derivative error norm."""
    rule = space.volume_rule()
    _, G = reference_basis(space.degree, rule.points)
    rows, cols, vals = [], [], []
    for lo in range(0, space.n_cells, _CHUNK):
        hi = min(lo + _CHUNK, space.n_cells)
        x = np.einsum("qk,tkd->tqd", rule.points, space.corners[lo:hi])
        bq = beta(x[..., 0], x[..., 1], t)
        gp = np.einsum("qie,tde->tqid", G, space.inv_jac_t[lo:hi], optimize=True)
        bg = np.einsum("tqjd,tqd->tqj", gp, bq, optimize=True)
        g_loc = np.einsum("q,t,tqi,tqj->tij", rule.weights, space.det_jac[lo:hi],
                          bg, bg, optimize=True)
        dofs = space.cell_dofs[lo:hi]
        rows.append(np.broadcast_to(dofs[:, :, None], g_loc.shape).ravel())
        cols.append(np.broadcast_to(dofs[:, None, :], g_loc.shape).ravel())
        vals.append(g_loc.ravel())
    return _finalize(space, rows, cols, vals)


def _face_normal_gradients(space: FeSpace, cells, x, normals):
    """Normal component of every cell basis gradient at physical points.

    ``cells`` (F,), ``x`` (F, q, 2), ``normals`` (F, 2) ->  (F, q, nloc).
    """
    dx = x - space.corners[cells, 0][:, None, :]
    inv_j = np.swapaxes(space.inv_jac_t[cells], 1, 2)  # J^{-1}
    ref = np.einsum("fed,fqd->fqe", inv_j, dx)
    bary = np.concatenate([1.0 - ref.sum(axis=2, keepdims=True), ref], axis=2)
    nq = x.shape[1]
    _, G = reference_basis(space.degree, bary.reshape(-1, 3))
    G = G.reshape(len(cells), nq, -1, 2)
    gp = np.einsum("fqie,fde->fqid", G, space.inv_jac_t[cells], optimize=True)
    return np.einsum("fqid,fd->fqi", gp, normals, optimize=True)


def assemble_cip(space: FeSpace, beta: VelocityField, params: StabParams,
                 t: float = 0.0) -> SparseMatrix:
    """Interior-face gradient-jump penalty.

    For each interior face F the form adds
    ``int_F h_F^2 (|beta.n| + eps) [grad w][grad v] ds`` where ``[grad w]``
    is the jump of the normal derivative across F.  The factor ``gamma`` is
    NOT included; the schemes scale the assembled matrix.
    """
    mesh = space.mesh
    nf = mesh.n_interior_faces
    if nf == 0:
        return SparseMatrix.zeros(space.n_dofs)
    rule = space.edge_rule()
    tq, wq = rule.points, rule.weights
    rows, cols, vals = [], [], []
    for lo in range(0, nf, _CHUNK):
        hi = min(lo + _CHUNK, nf)
        a = mesh.nodes[mesh.iface_nodes[lo:hi, 0]]
        b = mesh.nodes[mesh.iface_nodes[lo:hi, 1]]
        x = a[:, None, :] + tq[None, :, None] * (b - a)[:, None, :]
        nrm = mesh.iface_normal[lo:hi]
        length = mesh.iface_length[lo:hi]
        tl, tr = mesh.iface_tris[lo:hi, 0], mesh.iface_tris[lo:hi, 1]

        gn_l = _face_normal_gradients(space, tl, x, nrm)
        gn_r = _face_normal_gradients(space, tr, x, nrm)
        jump = np.concatenate([gn_l, -gn_r], axis=2)  # (F, q, 2*nloc)

        bq = beta(x[..., 0], x[..., 1], t)
        bn = np.abs(np.einsum("fqd,fd->fq", bq, nrm)) + params.eps_cross
        w = (wq[None, :] * bn) * (length ** 3)[:, None]  # h_F^2 * ds
        s_loc = np.einsum("fq,fqi,fqj->fij", w, jump, jump, optimize=True)

        dofs = np.concatenate([space.cell_dofs[tl], space.cell_dofs[tr]], axis=1)
        rows.append(np.broadcast_to(dofs[:, :, None], s_loc.shape).ravel())
        cols.append(np.broadcast_to(dofs[:, None, :], s_loc.shape).ravel())
        vals.append(s_loc.ravel())
    return _finalize(space, rows, cols, vals)


class InflowBC:
    """Precomputed weak-inflow machinery for a static velocity field.

    Faces with ``beta . n < 0`` at their midpoint (evaluated at
    ``t_classify``) form the inflow boundary.  The penalty matrix
    ``B_ij = int_{inflow} |beta.n| phi_j phi_i`` is fixed; the load
    ``b_i(t) = int_{inflow} |beta.n| g(x, t) phi_i`` is re-evaluated per
    step through :meth:`load`.
    """

    def __init__(self, space: FeSpace, beta: VelocityField, t_classify: float = 0.0):
        self.space = space
        mesh = space.mesh
        mid = 0.5 * (mesh.nodes[mesh.bface_nodes[:, 0]] + mesh.nodes[mesh.bface_nodes[:, 1]])
        bn_mid = np.einsum("fd,fd->f", beta(mid[:, 0], mid[:, 1], t_classify),
                           mesh.bface_normal)
        sel = np.flatnonzero(bn_mid < -1e-12)
        self.face_ids = sel
        rule = space.edge_rule()
        if len(sel) == 0:
            self.points = np.zeros((0, len(rule.points), 2))
            self.weights = np.zeros((0, len(rule.points)))
            self.trace = np.zeros((0, len(rule.points), space.cell_dofs.shape[1]))
            self.dofs = np.zeros((0, space.cell_dofs.shape[1]), dtype=np.int64)
            return
        a = mesh.nodes[mesh.bface_nodes[sel, 0]]
        b = mesh.nodes[mesh.bface_nodes[sel, 1]]
        x = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
        cells = mesh.bface_tri[sel]
        bq = beta(x[..., 0], x[..., 1], t_classify)
        bn = np.abs(np.einsum("fqd,fd->fq", bq, mesh.bface_normal[sel]))
        self.points = x
        self.weights = rule.weights[None, :] * bn * mesh.bface_length[sel][:, None]

        dx = x - space.corners[cells, 0][:, None, :]
        inv_j = np.swapaxes(space.inv_jac_t[cells], 1, 2)
        ref = np.einsum("fed,fqd->fqe", inv_j, dx)
        bary = np.concatenate([1.0 - ref.sum(axis=2, keepdims=True), ref], axis=2)
        V, _ = reference_basis(space.degree, bary.reshape(-1, 3))
        self.trace = V.reshape(len(sel), x.shape[1], -1)
        self.dofs = space.cell_dofs[cells]

    def matrix(self) -> SparseMatrix:
        b_loc = np.einsum("fq,fqi,fqj->fij", self.weights, self.trace, self.trace,
                          optimize=True)
        rows = np.broadcast_to(self.dofs[:, :, None], b_loc.shape).ravel()
        cols = np.broadcast_to(self.dofs[:, None, :], b_loc.shape).ravel()
        return _finalize(self.space, rows, cols, b_loc.ravel())

    def load(self, g, t: float) -> np.ndarray:
        out = np.zeros(self.space.n_dofs)
        if len(self.face_ids) == 0 or g is None:
            return out
        gq = np.asarray(g(self.points[..., 0], self.points[..., 1], t), dtype=float)
        contrib = np.einsum("fq,fq,fqi->fi", self.weights, gq, self.trace, optimize=True)
        np.add.at(out, self.dofs.ravel(), contrib.ravel())
        return _zero_constrained(self.space, out)


def assemble_weak_inflow(space: FeSpace, beta: VelocityField, g, t: float = 0.0):
    """Upwind penalty matrix and load for weakly imposed inflow data.

    Returns ``(B, b)`` with ``B_ij = int_{inflow} |beta.n| phi_j phi_i`` and
    ``b_i = int_{inflow} |beta.n| g phi_i``; both vanish on faces where
    ``beta . n >= 0``.
    """
    bc = InflowBC(space, beta, t_classify=t)
    return bc.matrix(), FieldVector(bc.load(g, t), space)


def assemble_source(space: FeSpace, f, t: float = 0.0) -> FieldVector:
    """Load vector ``b_i = (f(., t), phi_i)`` with degree-2p+2 quadrature;
    ``f=None`` yields the zero vector."""
    n = space.n_dofs
    if f is None:
        return FieldVector(np.zeros(n), space)
    rule = space.volume_rule()
    V, _ = reference_basis(space.degree, rule.points)
    out = np.zeros(n)
    for lo in range(0, space.n_cells, _CHUNK):
        hi = min(lo + _CHUNK, space.n_cells)
        x = np.einsum("qk,tkd->tqd", rule.points, space.corners[lo:hi])
        fq = np.asarray(f(x[..., 0], x[..., 1], t), dtype=float)
        fq = np.broadcast_to(fq, x.shape[:2])
        loc = np.einsum("q,t,tq,qi->ti", rule.weights, space.det_jac[lo:hi], fq, V,
                        optimize=True)
        np.add.at(out, space.cell_dofs[lo:hi].ravel(), loc.ravel())
    return FieldVector(_zero_constrained(space, out), space)
