"""CIP-stabilized IMEX finite elements for convection-diffusion and transport.

A small numpy/scipy library organized by concern:

* :mod:`cipimex.mesh` -- conforming triangle meshes (unit square, unit disc),
  face connectivity, ASCII mesh I/O;
* :mod:`cipimex.spaces` -- Lagrange P1/P2/P3 spaces, quadrature, basis
  evaluation, L2 and piecewise-constant projections;
* :mod:`cipimex.assembly` -- mass, diffusion, convection, gradient-jump
  penalty and weak-inflow operators;
* :mod:`cipimex.linsolve` -- CSR matrices and Jacobi-preconditioned CG;
* :mod:`cipimex.integrators` -- BDF2/CN/AB2/AB3 implicit-explicit steppers,
  CFL time-step selection, the time loop with diagnostics;
* :mod:`cipimex.norms` -- error and stability functionals;
* :mod:`cipimex.experiments` -- benchmark drivers with rate fitting and CSV
  output (command line in :mod:`cipimex.cli`).
"""

from cipimex.assembly import (InflowBC, StabParams, VelocityField,
                              assemble_cip, assemble_convection,
                              assemble_convective_gram, assemble_diffusion,
                              assemble_mass, assemble_source,
                              assemble_weak_inflow)
from cipimex.experiments import (ExperimentSpec, ProblemCase, TABLE1_PARAMS,
                                 fit_convergence_rate, make_case,
                                 rotating_disc_case, run_experiment,
                                 run_single, tube_case)
from cipimex.integrators import (History, SchemeConfig, SchemeOperators,
                                 SimulationResult, ab2_step, ab3_step,
                                 bdf2_difference, bdf2_step, cn_step,
                                 extrapolate, initialize_history,
                                 run_simulation, select_timestep)
from cipimex.linsolve import NonConvergenceError, SparseMatrix, cg_solve, spmv
from cipimex.mesh import (MalformedMeshError, MeshStats, TriMesh,
                          build_face_connectivity, generate_disc_mesh,
                          generate_square_mesh, load_mesh, mesh_statistics,
                          save_mesh)
from cipimex.norms import (ErrorReport, MaterialDerivativeAccumulator, energy,
                           l2_error, l2_norm, material_derivative_error,
                           stab_seminorm)
from cipimex.spaces import (FeSpace, FieldVector, QuadratureRule, build_space,
                            eval_basis, interpolate, l2_project, p0_project,
                            quadrature_rule)

__version__ = "0.1.0"
