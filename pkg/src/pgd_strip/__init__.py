"""Block and greedy PGD for plane-strain bending strips, with reference oracles."""

from .model import (BoundaryCondition, CaseSpec, Integration, LoadKind, AxialOrder,
                    MaterialPlaneStrain, SolverSettings, make_case, plane_strain_moduli)
from .pgd import (PGDSolution, center_deflection, fixed_point_block, greedy_enrich,
                  solve_block, solve_greedy, strain_energy)

__all__ = [
    "AxialOrder", "BoundaryCondition", "CaseSpec", "Integration", "LoadKind",
    "MaterialPlaneStrain", "PGDSolution", "SolverSettings", "center_deflection",
    "fixed_point_block", "greedy_enrich", "make_case", "plane_strain_moduli",
    "solve_block", "solve_greedy", "strain_energy",
]
