"""Error and stability functionals.

Global/subdomain L2 errors against an exact solution, the gradient-jump
seminorm |v|_s = sqrt(s(v, v)), the dissipation energy
E(v)^2 = gamma |v|_s^2 + ||sqrt(mu) grad v||^2, and the discrete material
derivative error accumulated over a run:

* BDF2:  (tau sum ||D_tau u^{n+1} + beta . grad(2u^n - u^{n-1})||^2)^{1/2}
* AB2/CN: (tau sum ||delta u^{n+1}/tau + beta . grad((3/2)u^n - (1/2)u^{n-1})||^2)^{1/2}
* AB3:   the same increment residual with the three-level extrapolant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cipimex.assembly import (VelocityField, assemble_convection,
                              assemble_convective_gram, assemble_mass)
from cipimex.linsolve import SparseMatrix
from cipimex.spaces import FeSpace, FieldVector, quadrature_rule, reference_basis

_CHUNK = 16384
_CLAMP = -1e-12


@dataclass
class ErrorReport:
    """Error quantities of one run on one mesh."""

    l2_global: float
    l2_local: float | None
    material_derivative: float | None
    dissipation: float
    h: float
    tau: float
    dof_count: int

    def __post_init__(self):
        for name in ("l2_global", "l2_local", "material_derivative", "dissipation"):
            v = getattr(self, name)
            if v is not None and v < 0.0:
                raise ValueError(f"{name} must be non-negative, got {v}")


def _sqrt_clamped(q: float) -> float:
    if q < _CLAMP:
        raise ValueError(f"quadratic form is significantly negative ({q:.3e})")
    return float(np.sqrt(max(q, 0.0)))


def l2_error(space: FeSpace, v: FieldVector, exact, region="all") -> float:
    """L2 norm of ``v - exact`` with degree-2p+2 quadrature.

    ``region`` is either ``'all'`` or a predicate ``region(x, y) -> bool``
    evaluated at triangle centroids; triangles are included whole.
    """
    rule = quadrature_rule("triangle", 2 * space.degree + 2)
    V, _ = reference_basis(space.degree, rule.points)
    if region == "all":
        cells = np.arange(space.n_cells)
    else:
        cent = space.corners.mean(axis=1)
        mask = np.asarray(region(cent[:, 0], cent[:, 1]), dtype=bool)
        cells = np.flatnonzero(mask)
    total = 0.0
    for lo in range(0, len(cells), _CHUNK):
        idx = cells[lo:lo + _CHUNK]
        x = np.einsum("qk,tkd->tqd", rule.points, space.corners[idx])
        vq = v.values[space.cell_dofs[idx]] @ V.T
        eq = np.asarray(exact(x[..., 0], x[..., 1]), dtype=float)
        d = vq - np.broadcast_to(eq, vq.shape)
        total += float(np.einsum("q,t,tq->", rule.weights, space.det_jac[idx], d * d))
    return _sqrt_clamped(total)


def l2_norm(space: FeSpace, v: FieldVector) -> float:
    """Plain L2 norm of a discrete function."""
    return l2_error(space, v, lambda x, y: np.zeros_like(x))


def stab_seminorm(S: SparseMatrix, v) -> float:
    """Jump seminorm sqrt(v^T S v); tiny negative round-off clamps to 0."""
    x = v.values if isinstance(v, FieldVector) else np.asarray(v, dtype=float)
    return _sqrt_clamped(float(x @ (S @ x)))


def energy(A_mu: SparseMatrix | None, S: SparseMatrix | None, gamma: float, v) -> float:
    """Dissipation energy sqrt(gamma v^T S v + v^T A_mu v); either operator
    may be None (treated as zero)."""
    x = v.values if isinstance(v, FieldVector) else np.asarray(v, dtype=float)
    q = 0.0
    if S is not None and gamma != 0.0:
        q += gamma * float(x @ (S @ x))
    if A_mu is not None:
        q += float(x @ (A_mu @ x))
    return _sqrt_clamped(q)


class MaterialDerivativeAccumulator:
    """Streaming accumulator for the material-derivative error norm.

    Feed every state (startup levels included) through :meth:`add`; terms
    start once the difference/extrapolation window of the scheme is full.
    The squared residual of each step is expressed through the mass M,
    convection C and convective Gram G matrices as
    ``d^T M d + 2 d^T C v* + v*^T G v*``.  Callers that already hold
    ``M @ u`` or ``C @ v*`` (the time loop does) can pass them to avoid
    recomputing; ``v*`` must then match the scheme's extrapolant.
    """

    def __init__(self, scheme: str, tau: float, M: SparseMatrix, C: SparseMatrix,
                 G: SparseMatrix):
        if scheme not in ("bdf2", "cn", "ab2", "ab3"):
            raise ValueError(f"unknown scheme {scheme!r}")
        self.scheme = scheme
        self.tau = tau
        self.M, self.C, self.G = M, C, G
        self.window: list[tuple[np.ndarray, np.ndarray]] = []  # (u, M u)
        self.total = 0.0
        self.terms: list[float] = []  # squared residual per step

    @property
    def depth(self) -> int:
        return 4 if self.scheme == "ab3" else 3

    def add(self, u: np.ndarray, m_u: np.ndarray | None = None,
            cv_star: np.ndarray | None = None):
        u = np.asarray(u, dtype=float)
        if m_u is None:
            m_u = self.M @ u
        self.window.append((u, m_u))
        if len(self.window) > self.depth:
            self.window.pop(0)
        if len(self.window) < self.depth:
            return
        w = self.window
        (new, m_new), (p0, m0), (p1, m1) = w[-1], w[-2], w[-3]
        if self.scheme == "bdf2":
            d = (3.0 * new - 4.0 * p0 + p1) / (2.0 * self.tau)
            m_d = (3.0 * m_new - 4.0 * m0 + m1) / (2.0 * self.tau)
            v_star = 2.0 * p0 - p1
        elif self.scheme == "ab3":
            p2 = w[-4][0]
            d = (new - p0) / self.tau
            m_d = (m_new - m0) / self.tau
            a, b, c = 23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0
            v_star = a * p0 + b * p1 + c * p2
        else:
            d = (new - p0) / self.tau
            m_d = (m_new - m0) / self.tau
            v_star = 1.5 * p0 - 0.5 * p1
        if cv_star is None:
            cv_star = self.C @ v_star
        q = max(float(d @ m_d) + 2.0 * float(d @ cv_star)
                + float(v_star @ (self.G @ v_star)), 0.0)
        self.total += q
        self.terms.append(q)

    def value(self) -> float:
        return _sqrt_clamped(self.tau * self.total)


def material_derivative_error(scheme: str, series, beta: VelocityField,
                              tau: float, space: FeSpace, f=None) -> float:
    """Material-derivative error of a full state series.

    ``series`` is a sequence of FieldVectors (or coefficient arrays) at the
    consecutive time levels of the run.  Only f = 0 runs are supported; the
    correct residual for a forced problem is not defined here.
    """
    if f is not None:
        raise ValueError("material derivative error is defined for f = 0 runs only")
    states = [s.values if isinstance(s, FieldVector) else np.asarray(s, dtype=float)
              for s in series]
    need = 4 if scheme == "ab3" else 3
    if len(states) < need:
        raise ValueError(f"{scheme} needs at least {need} states, got {len(states)}")
    M = assemble_mass(space)
    C = assemble_convection(space, beta, 0.0)
    G = assemble_convective_gram(space, beta, 0.0)
    acc = MaterialDerivativeAccumulator(scheme, tau, M, C, G)
    for u in states:
        acc.add(u)
    return acc.value()
