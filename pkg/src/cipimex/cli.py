"""Command line driver.

Subcommands:

* ``run``   -- execute a benchmark over a mesh sequence and emit CSV
* ``rates`` -- print convergence rates of an existing CSV
* ``mesh``  -- generate and store a square or disc mesh
"""

from __future__ import annotations

import argparse
import csv
import sys

from cipimex.experiments import (TABLE1_PARAMS, ExperimentSpec, make_case,
                                 rows_to_csv, run_experiment, summarize_rates)
from cipimex.integrators import SchemeConfig
from cipimex.mesh import generate_disc_mesh, generate_square_mesh, save_mesh


def _add_run_parser(sub):
    p = sub.add_parser("run", help="run a convergence/stability experiment")
    p.add_argument("--case", choices=("disc", "tube"), required=True)
    p.add_argument("--scheme", choices=("bdf2", "cn", "ab2", "ab3"), required=True)
    p.add_argument("--degree", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--data", choices=("smooth", "rough", "combined"), default="smooth",
                   help="initial data for the disc case (tube data is fixed)")
    p.add_argument("--nele", type=str, required=True,
                   help="comma separated mesh resolutions, e.g. 40,80,160")
    p.add_argument("--co", type=float, default=None,
                   help="Courant number (defaults to the tabulated value)")
    p.add_argument("--gamma", type=float, default=None,
                   help="penalty weight (defaults to the tabulated value)")
    p.add_argument("--mu", type=float, default=0.0, help="diffusion coefficient")
    p.add_argument("--eps-cross", type=float, default=0.0,
                   help="crosswind coefficient in the face penalty")
    p.add_argument("--no-stab", action="store_true",
                   help="disable the gradient-jump stabilization")
    p.add_argument("--out", type=str, default=None, help="CSV output path")


def _cmd_run(args) -> int:
    defaults = TABLE1_PARAMS.get((args.scheme, args.degree))
    co, gamma = args.co, args.gamma
    if co is None:
        if defaults is None:
            print(f"no tabulated Courant number for {args.scheme}/P{args.degree}; "
                  f"pass --co explicitly", file=sys.stderr)
            return 2
        co = defaults[0]
    if gamma is None:
        if defaults is None:
            print(f"no tabulated gamma for {args.scheme}/P{args.degree}; "
                  f"pass --gamma explicitly", file=sys.stderr)
            return 2
        gamma = defaults[1]
    nele = tuple(int(v) for v in args.nele.split(",") if v)
    case = make_case(args.case, args.data)
    config = SchemeConfig(scheme=args.scheme, degree=args.degree, gamma=gamma,
                          courant=co, final_time=case.final_time, mu=args.mu,
                          eps_cross=args.eps_cross, bc_mode=case.bc_mode,
                          stabilized=not args.no_stab)
    spec = ExperimentSpec(case=args.case, config=config, nele=nele,
                          data=args.data, out=args.out)
    rows, summary = run_experiment(spec)
    if args.out is None:
        sys.stdout.write(rows_to_csv(rows))
    print(summary)
    return 0


def _cmd_rates(args) -> int:
    with open(args.input, "r", encoding="ascii") as f:
        reader = csv.DictReader(f)
        rows = []
        for raw in reader:
            row = dict(raw)
            row["nele"] = int(row["nele"])
            row["degree"] = int(row["degree"])
            row["h"] = float(row["h"])
            for col in ("l2_global", "l2_local", "material_derivative"):
                row[col] = float(row[col]) if row[col] else None
            rows.append(row)
    if not rows:
        print("no data rows")
        return 0
    print(summarize_rates(rows))
    return 0


def _cmd_mesh(args) -> int:
    if args.square is not None:
        mesh = generate_square_mesh(args.square)
    else:
        mesh = generate_disc_mesh(args.disc)
    save_mesh(mesh, args.out)
    print(f"wrote {mesh.n_nodes} nodes, {mesh.n_triangles} triangles, "
          f"{mesh.n_boundary_faces} boundary faces to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cipimex",
        description="Stabilized IMEX transport experiments on triangle meshes")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_parser(sub)

    p_rates = sub.add_parser("rates", help="convergence rates of a results CSV")
    p_rates.add_argument("--in", dest="input", required=True)

    p_mesh = sub.add_parser("mesh", help="generate a mesh file")
    grp = p_mesh.add_mutually_exclusive_group(required=True)
    grp.add_argument("--square", type=int, default=None, metavar="N")
    grp.add_argument("--disc", type=int, default=None, metavar="N")
    p_mesh.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "rates":
        return _cmd_rates(args)
    return _cmd_mesh(args)


if __name__ == "__main__":
    raise SystemExit(main())
