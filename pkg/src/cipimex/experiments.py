"""Benchmark drivers: rotating disc and tube transport with weak inflow.

Reproduces the convergence and stability studies: one full turn of smooth
and/or rough data on the unit disc under the rotation field (y, -x), and
translation through the unit square under (1, 0) with time-dependent inflow
imposed weakly.  Results are written as CSV rows; rate fitting works on
(h, error) pairs.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from cipimex.assembly import VelocityField
from cipimex.integrators import SchemeConfig, run_simulation
from cipimex.mesh import generate_disc_mesh, generate_square_mesh, mesh_statistics
from cipimex.norms import ErrorReport, l2_error

# Courant number and penalty weight per (scheme, degree), the combinations
# reported to work well for the pure-transport benchmarks
TABLE1_PARAMS = {
    ("bdf2", 1): (0.15, 0.01),
    ("bdf2", 2): (0.05, 0.005),
    ("ab2", 1): (0.3, 0.01),
    ("ab2", 2): (0.1, 0.005),
    ("cn", 1): (0.3, 0.01),
    ("cn", 2): (0.1, 0.005),
    ("ab3", 2): (0.025, 0.001),
    ("ab3", 3): (0.025, 0.0003),
}

CSV_COLUMNS = ["case", "scheme", "degree", "nele", "h", "tau", "N_steps", "dofs",
               "l2_global", "l2_local", "material_derivative", "dissipation",
               "max_l2_over_time", "wall_seconds"]


def smooth_bump(x, y):
    """Gaussian of width factor 30 centered at (0.5, 0)."""
    return np.exp(-30.0 * ((x - 0.5) ** 2 + y ** 2))


def rough_bump(x, y):
    """Indicator of the disc of radius 0.2 centered at (-0.5, 0)."""
    return (np.hypot(x + 0.5, y) < 0.2).astype(float)


@dataclass
class ProblemCase:
    """Geometry, velocity field, data and horizon of one benchmark."""

    name: str
    make_mesh: object
    beta: VelocityField
    final_time: float
    exact: object            # exact(x, y, t)
    inflow_data: object      # g(x, y, t) or None
    bc_mode: str
    local_region: object = None  # predicate(x, y) for the local L2 norm


def rotating_disc_case(data: str = "smooth") -> ProblemCase:
    """Transport of smooth/rough/combined data once around the unit disc.

    The rotation field is tangential on the boundary, so no boundary
    condition is applied; after T = 2 pi the exact solution equals the
    initial data.  For combined data the local L2 region {x > 0} isolates
    the smooth part at the final time.
    """
    if data == "smooth":
        init = smooth_bump
    elif data == "rough":
        init = rough_bump
    elif data == "combined":
        init = lambda x, y: smooth_bump(x, y) + rough_bump(x, y)
    else:
        raise ValueError(f"unknown data kind {data!r}")

    def exact(x, y, t):
        c, s = np.cos(t), np.sin(t)
        return init(x * c - y * s, x * s + y * c)

    return ProblemCase(
        name="disc", make_mesh=generate_disc_mesh, beta=VelocityField.rotation(),
        final_time=2.0 * np.pi, exact=exact, inflow_data=None, bc_mode="none",
        local_region=(lambda x, y: x > 0.0) if data == "combined" else None)


def tube_case() -> ProblemCase:
    """Translation through the unit square with weakly imposed inflow.

    Initial data: a cylinder of radius 0.2 centered at (0.5, 0.5) plus a
    Gaussian centered at (0, 0.5) on the left boundary.  Everything exits
    through the right side; the cylinder has left the domain by t = 0.7 and
    at T = 1 the smooth Gaussian is centered on the right boundary.
    """
    def init(x, y):
        cyl = (np.hypot(x - 0.5, y - 0.5) < 0.2).astype(float)
        return cyl + np.exp(-30.0 * (x ** 2 + (y - 0.5) ** 2))

    def exact(x, y, t):
        return init(x - t, y)

    return ProblemCase(
        name="tube", make_mesh=generate_square_mesh, beta=VelocityField.constant(1.0, 0.0),
        final_time=1.0, exact=exact, inflow_data=exact, bc_mode="weak_inflow")


def make_case(name: str, data: str = "smooth") -> ProblemCase:
    if name == "disc":
        return rotating_disc_case(data)
    if name == "tube":
        return tube_case()
    raise ValueError(f"unknown case {name!r} (use 'disc' or 'tube', or pass a "
                     f"ProblemCase for custom runs)")


@dataclass
class ExperimentSpec:
    """One configuration-driven study over a sequence of meshes."""

    case: str                      # 'disc' | 'tube' | 'custom'
    config: SchemeConfig
    nele: tuple
    data: str = "smooth"
    out: str | None = None
    problem: ProblemCase | None = field(default=None, repr=False)

    def __post_init__(self):
        self.nele = tuple(int(n) for n in self.nele)
        if any(n < 8 for n in self.nele):
            raise ValueError("every nele must be >= 8")
        if any(b <= a for a, b in zip(self.nele, self.nele[1:])):
            raise ValueError("nele list must be strictly increasing")
        if self.case == "custom" and self.problem is None:
            raise ValueError("custom case needs an explicit ProblemCase")
        if self.case in ("disc", "tube") and self.config.mu != 0.0:
            raise ValueError("disc/tube exact solutions assume mu = 0; use a "
                             "custom case for diffusive runs")


@dataclass
class RateFit:
    pairwise: list
    slope: float


def fit_convergence_rate(pairs) -> RateFit:
    """Pairwise rates log(e_i/e_{i+1}) / log(h_i/h_{i+1}) plus the global
    least-squares slope of log e against log h."""
    pairs = [(float(h), float(e)) for h, e in pairs]
    if len(pairs) < 2:
        raise ValueError("need at least two (h, error) pairs")
    if any(e <= 0.0 for _, e in pairs):
        raise ValueError("errors must be positive to fit rates")
    if any(h <= 0.0 for h, _ in pairs):
        raise ValueError("mesh sizes must be positive")
    pw = [math.log(pairs[i][1] / pairs[i + 1][1]) / math.log(pairs[i][0] / pairs[i + 1][0])
          for i in range(len(pairs) - 1)]
    lh = np.log([h for h, _ in pairs])
    le = np.log([e for _, e in pairs])
    slope = float(np.polyfit(lh, le, 1)[0])
    return RateFit(pairwise=pw, slope=slope)


def run_single(case_name: str, data: str, scheme: str, degree: int, gamma: float,
               courant: float, nele: int, stabilized: bool = True,
               eps_cross: float = 0.0, mu: float = 0.0,
               problem: ProblemCase | None = None) -> dict:
    """Run one (case, scheme, mesh) combination and return its CSV row.

    Top-level and picklable so independent runs can execute in worker
    processes.
    """
    case = problem if problem is not None else make_case(case_name, data)
    config = SchemeConfig(scheme=scheme, degree=degree, gamma=gamma,
                          courant=courant, final_time=case.final_time, mu=mu,
                          bc_mode=case.bc_mode, stabilized=stabilized,
                          eps_cross=eps_cross)
    mesh = case.make_mesh(nele)
    stats = mesh_statistics(mesh)
    t0 = time.perf_counter()
    result = run_simulation(config, mesh, case.beta, g=case.inflow_data,
                            exact=case.exact)
    T = case.final_time
    l2g = l2_error(result.space, result.final, lambda x, y: case.exact(x, y, T))
    l2l = None
    if case.local_region is not None:
        l2l = l2_error(result.space, result.final, lambda x, y: case.exact(x, y, T),
                       region=case.local_region)
    wall = time.perf_counter() - t0

    report = ErrorReport(l2_global=l2g, l2_local=l2l,
                         material_derivative=result.material_derivative,
                         dissipation=result.dissipation, h=stats.h_max,
                         tau=result.tau, dof_count=result.space.n_dofs)
    return {
        "case": case.name, "scheme": scheme, "degree": degree, "nele": nele,
        "h": report.h, "tau": report.tau, "N_steps": result.n_steps,
        "dofs": report.dof_count, "l2_global": report.l2_global,
        "l2_local": report.l2_local,
        "material_derivative": report.material_derivative,
        "dissipation": report.dissipation,
        "max_l2_over_time": result.max_l2, "wall_seconds": wall,
        # extra key (not part of the CSV schema): initial-state norm, used by
        # stability ratio checks
        "initial_l2": float(result.l2_norms[0]),
    }


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def summarize_rates(rows) -> str:
    """Pairwise and least-squares rates per (case, scheme, degree) group for
    every error column present."""
    groups = {}
    for r in rows:
        groups.setdefault((r["case"], r["scheme"], r["degree"]), []).append(r)
    lines = []
    for key, rs in groups.items():
        rs = sorted(rs, key=lambda r: r["nele"])
        lines.append(f"{key[0]} {key[1]} P{key[2]}: nele {[r['nele'] for r in rs]}")
        for col in ("l2_global", "l2_local", "material_derivative"):
            vals = [(r["h"], r[col]) for r in rs
                    if r[col] not in (None, "") and float(r[col]) > 0.0]
            if len(vals) >= 2:
                fit = fit_convergence_rate(vals)
                pw = ", ".join(f"{p:.3f}" for p in fit.pairwise)
                lines.append(f"  {col}: pairwise [{pw}]  ls-slope {fit.slope:.3f}")
    return "\n".join(lines)


def run_experiment(spec: ExperimentSpec):
    """Run every mesh of the spec; returns (rows, summary string).

    Rows accumulated so far are flushed to ``spec.out`` even when a mesh
    fails, then the failure propagates.
    """
    rows = []
    try:
        for nele in spec.nele:
            rows.append(run_single(
                spec.case, spec.data, spec.config.scheme, spec.config.degree,
                spec.config.gamma, spec.config.courant, nele,
                stabilized=spec.config.stabilized, eps_cross=spec.config.eps_cross,
                mu=spec.config.mu, problem=spec.problem))
    finally:
        if spec.out is not None:
            with open(spec.out, "w", encoding="ascii") as f:
                f.write(rows_to_csv(rows))
    return rows, summarize_rates(rows)
