"""Implicit-explicit multistep schemes for convection-diffusion transport.

Diffusion is treated implicitly; convection, the gradient-jump penalty and
the weak-inflow terms are explicit, evaluated on an extrapolated state:

* BDF2:  ``D_tau u^{n+1} = (3u^{n+1} - 4u^n + u^{n-1}) / (2 tau)`` with the
  extrapolant ``2u^n - u^{n-1}`` (to the new time level);
* CN:    increment ``delta u / tau`` with the extrapolant
  ``(3/2)u^n - (1/2)u^{n-1}`` (to the half level); AB2 is its mu=0 limit and
  shares the code path;
* AB3:   mass-matrix update with the three-level extrapolation
  ``(23 u^n - 16 u^{n-1} + 5 u^{n-2}) / 12``.

Time steps follow the hyperbolic CFL ``tau = Co h / (|beta| + 1)`` for p=1
and the stronger 4/3 scaling ``tau = Co h^{4/3} / max(|beta|, 1)^{4/3}``
for p >= 2, rounded so an integer number of steps lands exactly on T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from cipimex.assembly import (InflowBC, StabParams, VelocityField,
                              assemble_cip, assemble_convection,
                              assemble_convective_gram, assemble_diffusion,
                              assemble_mass, assemble_source)
from cipimex.linsolve import SparseMatrix, cg_solve
from cipimex.spaces import FeSpace, FieldVector, build_space, l2_project

SCHEMES = ("bdf2", "cn", "ab2", "ab3")
AB3_WEIGHTS = (23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0)

SOLVER_TOL = 1e-10


@dataclass
class SchemeConfig:
    """Run parameters: scheme, polynomial degree, penalty weight, Courant
    number, diffusion, horizon and boundary treatment."""

    scheme: str
    degree: int
    gamma: float
    courant: float
    final_time: float
    mu: float = 0.0
    eps_cross: float = 0.0
    bc_mode: str = "none"  # 'strong' | 'weak_inflow' | 'none'
    stabilized: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.degree not in (1, 2, 3):
            raise ValueError(f"unsupported degree {self.degree}")
        if self.courant <= 0.0:
            raise ValueError("Courant number must be positive")
        if self.final_time <= 0.0:
            raise ValueError("final_time must be positive")
        if self.mu < 0.0 or self.gamma < 0.0 or self.eps_cross < 0.0:
            raise ValueError("mu, gamma, eps_cross must be non-negative")
        if self.scheme in ("ab2", "ab3") and self.mu != 0.0:
            raise ValueError(f"{self.scheme} is a pure-transport scheme; mu must be 0")
        if self.bc_mode not in ("strong", "weak_inflow", "none"):
            raise ValueError(f"unknown bc_mode {self.bc_mode!r}")

    @property
    def history_depth(self) -> int:
        return 3 if self.scheme == "ab3" else 2

    @property
    def effective_gamma(self) -> float:
        return self.gamma if self.stabilized else 0.0


class History:
    """Ring of the most recent states u^n, u^{n-1}, u^{n-2}."""

    def __init__(self, vectors, n_index: int | None = None):
        vectors = list(vectors)
        if not vectors:
            raise ValueError("history needs at least one state")
        space = vectors[0].space
        if any(v.space is not space for v in vectors):
            raise ValueError("history entries must share one FeSpace")
        self.space = space
        self._ring = vectors[-3:]
        self.n = (len(vectors) - 1) if n_index is None else n_index

    def __len__(self):
        return len(self._ring)

    def push(self, v: FieldVector):
        self._ring.append(v)
        if len(self._ring) > 3:
            self._ring.pop(0)
        self.n += 1

    def latest(self, back: int = 0) -> FieldVector:
        """State u^{n-back}."""
        if back >= len(self._ring):
            raise ValueError(f"history holds {len(self._ring)} entries, asked for u^(n-{back})")
        return self._ring[-1 - back]

    def arrays(self):
        return [v.values for v in reversed(self._ring)]  # newest first


def select_timestep(config: SchemeConfig, h_max: float, beta_inf: float,
                    T: float | None = None):
    """CFL time step and step count; tau is shrunk so N*tau = T exactly."""
    if h_max <= 0.0:
        raise ValueError("h_max must be positive")
    T = config.final_time if T is None else T
    if config.degree == 1:
        tau_raw = config.courant * h_max / (beta_inf + 1.0)
    else:
        tau_raw = config.courant * h_max ** (4.0 / 3.0) / max(beta_inf, 1.0) ** (4.0 / 3.0)
    n_steps = max(1, math.ceil(T / tau_raw))
    return T / n_steps, n_steps


def bdf2_difference(history: History, u_new: FieldVector, tau: float) -> FieldVector:
    """Backward difference (3u^{n+1} - 4u^n + u^{n-1}) / (2 tau)."""
    if len(history) < 2:
        raise ValueError("BDF2 difference needs two history levels")
    u0, u1 = history.latest(0).values, history.latest(1).values
    return FieldVector((3.0 * u_new.values - 4.0 * u0 + u1) / (2.0 * tau), history.space)


def extrapolate(history: History, kind: str) -> FieldVector:
    """Explicit extrapolants: 'tilde' = 2u^n - u^{n-1} (new level),
    'hat' = (3/2)u^n - (1/2)u^{n-1} (half level),
    'ab3' = (23u^n - 16u^{n-1} + 5u^{n-2})/12."""
    if kind in ("tilde", "hat"):
        if len(history) < 2:
            raise ValueError(f"{kind} extrapolation needs two history levels")
        u0, u1 = history.latest(0).values, history.latest(1).values
        if kind == "tilde":
            return FieldVector(2.0 * u0 - u1, history.space)
        return FieldVector(1.5 * u0 - 0.5 * u1, history.space)
    if kind == "ab3":
        if len(history) < 3:
            raise ValueError("ab3 extrapolation needs three history levels")
        u0, u1, u2 = (history.latest(k).values for k in range(3))
        w = AB3_WEIGHTS
        return FieldVector(w[0] * u0 + w[1] * u1 + w[2] * u2, history.space)
    raise ValueError(f"unknown extrapolation kind {kind!r}")


class SchemeOperators:
    """Assembled operators and solver state for one run.

    Holds the mass matrix M, diffusion A (mu > 0 only), convection C, the
    weak-inflow penalty B with its load, the jump penalty S (stabilized runs),
    and the prefactored implicit matrix of the chosen scheme.  For
    time-dependent velocity fields the explicit operators are reassembled at
    the extrapolation target time of each step.
    """

    def __init__(self, space: FeSpace, config: SchemeConfig, beta: VelocityField,
                 tau: float, f=None, g=None):
        self.space = space
        self.config = config
        self.beta = beta
        self.tau = tau
        self.f = f
        self.g = g
        self.gamma = config.effective_gamma

        self.M = assemble_mass(space)
        self.A = assemble_diffusion(space, config.mu) if config.mu > 0.0 else None
        self._assemble_explicit(0.0)
        self.G = assemble_convective_gram(space, beta, 0.0) if f is None else None

        if config.scheme == "bdf2":
            self.H = (1.5 / tau) * self.M
            if self.A is not None:
                self.H = self.H + self.A
        elif config.scheme == "cn":
            self.H = (1.0 / tau) * self.M
            if self.A is not None:
                self.H = self.H + 0.5 * self.A
        else:  # ab2 / ab3 advance the mass matrix only
            self.H = (1.0 / tau) * self.M
        d = self.H.diagonal()
        self._h_inv_diag = np.where(d != 0.0, 1.0 / np.where(d != 0.0, d, 1.0), 1.0)
        dm = self.M.diagonal()
        self._m_inv_diag = np.where(dm != 0.0, 1.0 / np.where(dm != 0.0, dm, 1.0), 1.0)
        # last two implicit solutions; their linear extrapolation seeds CG
        self._warm = np.zeros(space.n_dofs)
        self._warm2 = np.zeros(space.n_dofs)

    def _assemble_explicit(self, t: float):
        cfg = self.config
        self.C = assemble_convection(self.space, self.beta, t)
        self.S = (assemble_cip(self.space, self.beta,
                               StabParams(cfg.gamma, cfg.eps_cross), t)
                  if (cfg.stabilized and cfg.gamma > 0.0) else None)
        if cfg.bc_mode == "weak_inflow":
            self.inflow = InflowBC(self.space, self.beta, t_classify=t)
            self.B = self.inflow.matrix()
        else:
            self.inflow = None
            self.B = None

    def explicit_rhs(self, v_star: np.ndarray, t_data: float) -> np.ndarray:
        """- (C + B) v* - gamma S v* + b_inflow(t) + b_source(t).

        The convection product is kept on ``self._last_cv``; the time loop
        reuses it in the material-derivative accumulator.
        """
        if self.beta.time_dependent:
            self._assemble_explicit(t_data)
        cv = self.C @ v_star
        self._last_cv = cv
        rhs = -cv
        if self.B is not None:
            rhs -= self.B @ v_star
            rhs += self.inflow.load(self.g, t_data)
        if self.S is not None:
            rhs -= self.gamma * (self.S @ v_star)
        if self.f is not None:
            rhs += assemble_source(self.space, self.f, t_data).values
        return rhs

    def solve_implicit(self, rhs: np.ndarray):
        x0 = 2.0 * self._warm - self._warm2
        x, _ = cg_solve(self.H, rhs, tol_rel=SOLVER_TOL,
                        preconditioner=self._h_inv_diag, x0=x0)
        self._warm2 = self._warm
        self._warm = x
        return x

    def mass_solve(self, rhs: np.ndarray, tol: float = SOLVER_TOL):
        x, _ = cg_solve(self.M, rhs, tol_rel=tol, preconditioner=self._m_inv_diag)
        return x


def bdf2_step(history: History, ops: SchemeOperators, tau: float,
              gamma: float) -> FieldVector:
    """One BDF2-IMEX step: implicit (3/(2 tau)) M + A against the explicit
    convection/penalty applied to the tilde extrapolant."""
    u0, u1 = history.latest(0).values, history.latest(1).values
    t_new = (history.n + 1) * tau
    u_tilde = 2.0 * u0 - u1
    rhs = ops.explicit_rhs(u_tilde, t_new)
    u_star = (4.0 * u0 - u1) / 3.0
    if ops.A is not None:
        rhs = rhs - (ops.A @ u_star)
    delta = ops.solve_implicit(rhs)
    u_new = FieldVector(u_star + delta, history.space)
    return u_new


def cn_step(history: History, ops: SchemeOperators, tau: float,
            gamma: float) -> FieldVector:
    """One Crank-Nicolson-IMEX step (AB2 when mu = 0): implicit
    (1/tau) M + A/2 against the hat extrapolant at the half level."""
    u0 = history.latest(0).values
    u1 = history.latest(1).values
    t_half = history.n * tau + 0.5 * tau
    u_hat = 1.5 * u0 - 0.5 * u1
    rhs = ops.explicit_rhs(u_hat, t_half)
    if ops.A is not None:
        rhs = rhs - (ops.A @ u0)
    delta = ops.solve_implicit(rhs)
    return FieldVector(u0 + delta, history.space)


def ab2_step(history: History, ops: SchemeOperators, tau: float,
             gamma: float) -> FieldVector:
    """Second order Adams-Bashforth: identical to the mu = 0 CN path."""
    if ops.A is not None:
        raise ValueError("AB2 requires mu = 0")
    return cn_step(history, ops, tau, gamma)


def ab3_step(history: History, ops: SchemeOperators, tau: float,
             gamma: float) -> FieldVector:
    """Third order Adams-Bashforth mass update with the 23/-16/5 weights."""
    if ops.A is not None:
        raise ValueError("AB3 requires mu = 0")
    u0 = history.latest(0).values
    t_half = history.n * tau + 0.5 * tau
    v_star = extrapolate(history, "ab3").values
    rhs = ops.explicit_rhs(v_star, t_half)
    delta = ops.solve_implicit(rhs)
    return FieldVector(u0 + delta, history.space)


_STEPPERS = {"bdf2": bdf2_step, "cn": cn_step, "ab2": ab2_step, "ab3": ab3_step}


def initialize_history(space: FeSpace, data, tau: float, mode: str = "exact",
                       levels: int = 2, ops: SchemeOperators | None = None) -> History:
    """Startup states u^0 .. u^{levels-1}.

    ``mode='exact'`` projects the exact solution ``data(x, y, t)`` at
    ``t = 0, tau, ...``; ``mode='rk2'`` projects the initial datum
    ``data(x, y)`` and advances with explicit midpoint steps (requires the
    assembled operators).
    """
    if mode == "exact":
        vectors = [l2_project(space, lambda x, y, ti=i * tau: data(x, y, ti))
                   for i in range(levels)]
        return History(vectors, n_index=levels - 1)
    if mode == "rk2":
        if ops is None:
            raise ValueError("rk2 startup needs the assembled operators")
        u = l2_project(space, data).values
        vectors = [FieldVector(u.copy(), space)]
        for i in range(levels - 1):
            t0 = i * tau

            def rate(v, t):
                rhs = ops.explicit_rhs(v, t)
                if ops.A is not None:
                    rhs = rhs - (ops.A @ v)
                return ops.mass_solve(rhs, tol=1e-12)

            k1 = rate(u, t0)
            k2 = rate(u + 0.5 * tau * k1, t0 + 0.5 * tau)
            u = u + tau * k2
            vectors.append(FieldVector(u.copy(), space))
        return History(vectors, n_index=levels - 1)
    raise ValueError(f"unknown startup mode {mode!r}")


@dataclass
class SimulationResult:
    """Final state plus per-step diagnostic series.

    ``l2_norms[i]`` is the L2 norm of u^i for every time level including the
    startup states; the energy, increment and material-derivative series
    cover the computed levels only.  ``dissipation`` accumulates
    ``tau * sum E(u^{n+1})^2 + (1/4) * sum ||u^{n+1} - tilde u^{n+1}||^2``.
    """

    final: FieldVector
    tau: float
    n_steps: int
    l2_norms: np.ndarray
    energy_sq: np.ndarray
    increment_sq: np.ndarray
    md_increments: np.ndarray | None
    dissipation: float
    material_derivative: float | None
    max_l2: float
    space: FeSpace
    ops: SchemeOperators = field(repr=False, default=None)


def run_simulation(config: SchemeConfig, mesh, beta: VelocityField, f=None,
                   g=None, exact=None, u0=None, startup: str = "exact",
                   debug: bool = False) -> SimulationResult:
    """Advance the configured scheme from projected startup states to T.

    ``exact(x, y, t)`` drives exact-projection startup and is required when
    ``startup='exact'``; otherwise ``u0(x, y)`` seeds an explicit midpoint
    startup.  Diagnostics are recorded every step; the material-derivative
    series is accumulated only for f = 0 runs.
    """
    from cipimex.mesh import mesh_statistics

    space = build_space(mesh, config.degree, constrained=(config.bc_mode == "strong"))
    stats = mesh_statistics(mesh)
    tau, n_steps = select_timestep(config, stats.h_max, beta.inf_norm)
    ops = SchemeOperators(space, config, beta, tau, f=f, g=g)

    depth = config.history_depth
    if startup == "exact":
        if exact is None:
            raise ValueError("exact startup requires the exact solution")
        history = initialize_history(space, exact, tau, "exact", levels=depth)
    else:
        if u0 is None:
            u0 = (lambda x, y: exact(x, y, 0.0)) if exact is not None else None
        if u0 is None:
            raise ValueError("rk2 startup requires initial data")
        history = initialize_history(space, u0, tau, "rk2", levels=depth, ops=ops)

    step = _STEPPERS[config.scheme]
    gamma = config.effective_gamma

    from cipimex.norms import MaterialDerivativeAccumulator

    # cached M u^k for the newest levels (avoids extra matvecs in norms)
    startup_states = [history.latest(k).values for k in range(len(history) - 1, -1, -1)]
    m_hist = [ops.M @ v for v in startup_states]
    l2_norms = [float(np.sqrt(max(v @ mv, 0.0))) for v, mv in zip(startup_states, m_hist)]
    m_prev2, m_prev = m_hist[-2], m_hist[-1]

    energy_sq, increment_sq = [], []
    track_md = f is None
    md_acc = None
    if track_md:
        md_acc = MaterialDerivativeAccumulator(config.scheme, tau, ops.M, ops.C, ops.G)
        for u, mu_vec in zip(startup_states, m_hist):
            md_acc.add(u, m_u=mu_vec)

    for n in range(depth - 1, n_steps):
        u0v, u1v = history.latest(0).values, history.latest(1).values
        if config.scheme == "bdf2":
            v_star = 2.0 * u0v - u1v
        elif config.scheme == "ab3":
            v_star = extrapolate(history, "ab3").values
        else:
            v_star = 1.5 * u0v - 0.5 * u1v

        try:
            u_new = step(history, ops, tau, gamma)
        except Exception as exc:
            raise RuntimeError(f"time step {n + 1} of {n_steps} (t = {(n + 1) * tau:.6g}) "
                               f"failed: {exc}") from exc
        un = u_new.values

        if debug and config.scheme in ("cn", "ab2"):
            u_bar = 0.5 * (un + u0v)
            dd = un - 2.0 * u0v + u1v
            assert np.allclose(v_star, u_bar - 0.5 * dd, atol=1e-12 * max(1.0, np.abs(un).max()))

        m_new = ops.M @ un
        l2_norms.append(float(np.sqrt(max(un @ m_new, 0.0))))

        e2 = 0.0
        if ops.S is not None:
            e2 += gamma * max(float(un @ (ops.S @ un)), 0.0)
        if ops.A is not None:
            e2 += max(float(un @ (ops.A @ un)), 0.0)
        energy_sq.append(e2)

        minc = m_new - 2.0 * m_prev + m_prev2
        inc = un - 2.0 * u0v + u1v
        increment_sq.append(max(float(inc @ minc), 0.0))

        if track_md:
            md_acc.add(un, m_u=m_new, cv_star=ops._last_cv)

        history.push(u_new)
        m_prev2, m_prev = m_prev, m_new

    energy_sq = np.array(energy_sq)
    increment_sq = np.array(increment_sq)
    l2_norms = np.array(l2_norms)
    dissipation = float(tau * energy_sq.sum() + 0.25 * increment_sq.sum())
    md_arr = np.array(md_acc.terms) if track_md else None
    md_total = md_acc.value() if track_md else None

    return SimulationResult(final=history.latest(0), tau=tau, n_steps=n_steps,
                            l2_norms=l2_norms, energy_sq=energy_sq,
                            increment_sq=increment_sq, md_increments=md_arr,
                            dissipation=dissipation, material_derivative=md_total,
                            max_l2=float(l2_norms.max()), space=space, ops=ops)
