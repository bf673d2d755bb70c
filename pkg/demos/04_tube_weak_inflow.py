"""Transport through the unit square with weakly imposed inflow.

A cylinder plus a boundary-centered Gaussian translate to the right under
beta = (1, 0); the time-dependent inflow trace is imposed weakly through an
upwind penalty.  By t = 0.7 the cylinder has left the domain and the final
solution is the smooth Gaussian centered on the right boundary, so the
final-time L2 error converges at the optimal stabilized rate.
"""

from cipimex.experiments import ExperimentSpec, TABLE1_PARAMS, run_experiment, tube_case
from cipimex.integrators import SchemeConfig

case = tube_case()
print(f"final time {case.final_time}, bc mode {case.bc_mode}")
print(f"exact peak at the right boundary: exact(1, 0.5, 1) = "
      f"{float(case.exact(1.0, 0.5, 1.0)):.3f}")

co, gamma = TABLE1_PARAMS[("bdf2", 1)]
spec = ExperimentSpec(
    case="tube",
    config=SchemeConfig("bdf2", 1, gamma, courant=co, final_time=1.0,
                        bc_mode="weak_inflow"),
    nele=(20, 40))
rows, summary = run_experiment(spec)
for r in rows:
    print(f"  nele={r['nele']:3d}  h={r['h']:.4f}  steps={r['N_steps']:4d}  "
          f"l2={r['l2_global']:.4e}")
print(summary)
