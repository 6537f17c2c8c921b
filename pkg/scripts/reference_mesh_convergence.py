"""Mesh convergence of the 2D plane-strain reference (center deflection over KL).

    python3 scripts/reference_mesh_convergence.py --case CC-UP --slenderness 200
"""

import argparse
import time

from pgd_strip.model import CASE_IDS, make_case, plane_strain_moduli
from pgd_strip.oracles import kl_solution, reference_mesh, solve_reference_2d


def cli():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--case", choices=CASE_IDS, default="CC-UP")
    parser.add_argument("--slenderness", type=float, default=200.0)
    parser.add_argument("--nz", default="8,10,14,20", help="elements through the thickness")
    parser.add_argument("--aspect", default="4,2,1", help="element length / height")
    parser.add_argument("--nu", type=float, default=0.3)
    args = parser.parse_args()
    mat = plane_strain_moduli(1.0, args.nu)
    case = make_case(args.case, args.slenderness)
    kl = kl_solution(case, mat).w_center
    print(f"{case.case_id} L/t={case.slenderness:g}  KL center {kl:.10e}")
    print(f"{'nz':>4} {'aspect':>6} {'dofs':>8} {'w/w_KL - 1':>14} {'refine':>6} {'time s':>7}")
    for nz in map(int, args.nz.split(",")):
        for aspect in map(float, args.aspect.split(",")):
            mesh = reference_mesh(case, nz=nz, aspect=aspect)
            start = time.perf_counter()
            ref = solve_reference_2d(case, mat, mesh)
            elapsed = time.perf_counter() - start
            print(f"{nz:>4} {aspect:>6g} {mesh.n_dofs:>8} {ref.w_center / kl - 1:>14.6e} "
                  f"{ref.refinement_steps:>6} {elapsed:>7.2f}")


if __name__ == "__main__":
    cli()
