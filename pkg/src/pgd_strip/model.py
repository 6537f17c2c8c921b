"""Material law, strip cases and solver settings for the plane-strain bending strip."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np


class BoundaryCondition(enum.Enum):
    CLAMPED = "clamped"
    SIMPLY_SUPPORTED = "simply-supported"


class LoadKind(enum.Enum):
    SINUS = "sinus"
    UNIFORM = "uniform"


class Integration(enum.Enum):
    FULL = "full"
    SELECTIVE = "selective"


class AxialOrder(enum.Enum):
    LINEAR = 1
    QUADRATIC = 2


@dataclass(frozen=True)
class MaterialPlaneStrain:
    """Isotropic material in plane strain, with Voigt stiffness entries in Pa."""

    young_modulus: float
    poisson_ratio: float
    c11: float
    c13: float
    c33: float
    c55: float

    @property
    def bending_stiffness_factor(self) -> float:
        """E / (1 - nu^2); multiply by t^3/12 for the strip bending stiffness."""
        return self.young_modulus / (1.0 - self.poisson_ratio**2)


def plane_strain_moduli(E: float, nu: float) -> MaterialPlaneStrain:
    if not E > 0:
        raise ValueError(f"Young modulus must be positive, got {E}")
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
    # 1 - 2 nu close to zero makes c11, c13 blow up; treat as incompressible
    if 1.0 - 2.0 * nu < 1e-5:
        raise ValueError(f"Poisson ratio {nu} is too close to the incompressible limit")
    lam_den = (1.0 + nu) * (1.0 - 2.0 * nu)
    c11 = E * (1.0 - nu) / lam_den
    c13 = E * nu / lam_den
    c55 = E / (2.0 * (1.0 + nu))
    return MaterialPlaneStrain(E, nu, c11, c13, c11, c55)


# catalog identifiers used throughout the harness
CASE_IDS = ("SS-SP", "SS-UP", "CC-SP", "CC-UP")

_BC_CODES = {"SS": BoundaryCondition.SIMPLY_SUPPORTED, "CC": BoundaryCondition.CLAMPED}
_LOAD_CODES = {"SP": LoadKind.SINUS, "UP": LoadKind.UNIFORM}


@dataclass(frozen=True)
class CaseSpec:
    """A strip of length L and thickness t loaded by g3 on both faces."""

    length: float
    thickness: float
    bc_kind: BoundaryCondition
    load_kind: LoadKind
    load_amplitude: float = 1.0

    def __post_init__(self):
        if not (self.length > 0 and self.thickness > 0):
            raise ValueError("length and thickness must be positive")

    @property
    def slenderness(self) -> float:
        return self.length / self.thickness

    @property
    def case_id(self) -> str:
        bc = "SS" if self.bc_kind is BoundaryCondition.SIMPLY_SUPPORTED else "CC"
        load = "SP" if self.load_kind is LoadKind.SINUS else "UP"
        return f"{bc}-{load}"

    @property
    def clamped(self) -> bool:
        return self.bc_kind is BoundaryCondition.CLAMPED

    def with_amplitude(self, amplitude: float) -> CaseSpec:
        return replace(self, load_amplitude=amplitude)


def make_case(case_id: str, slenderness: float, length: float = 1.0,
              amplitude: float = 1.0) -> CaseSpec:
    """Build one of the catalog cases ("SS-SP", "CC-UP", ...) at a given L/t."""
    try:
        bc_code, load_code = case_id.upper().split("-")
        bc, load = _BC_CODES[bc_code], _LOAD_CODES[load_code]
    except (ValueError, KeyError):
        raise ValueError(f"unknown case {case_id!r}; expected one of {CASE_IDS}") from None
    if not slenderness > 0:
        raise ValueError("slenderness must be positive")
    return CaseSpec(length, length / slenderness, bc, load, amplitude)


def load_profile(case: CaseSpec, x1):
    """Surface traction g3(x1) applied on each face (the net line load is 2*g3)."""
    x = np.asarray(x1, dtype=float)
    tol = 1e-12 * case.length
    if np.any(x < -tol) or np.any(x > case.length + tol):
        raise ValueError(f"x1 outside [0, {case.length}]")
    if case.load_kind is LoadKind.SINUS:
        g = case.load_amplitude * np.sin(math.pi * x / case.length)
    else:
        g = np.full_like(x, case.load_amplitude)
    return float(g) if g.ndim == 0 else g


def line_load(case: CaseSpec, x1):
    return 2.0 * load_profile(case, x1)


@dataclass(frozen=True)
class SolverSettings:
    fp_tolerance: float = 1e-3
    fp_max_iters: int = 100
    integration: Integration = Integration.SELECTIVE
    n_greedy_modes: int = 0
    thickness_degree: int = 4
    axial_order: AxialOrder = AxialOrder.QUADRATIC
    n_axial_elements: int = 64
    boundary_layer_mesh: bool = True
    divergence_window: int = 5  # growing updates in a row that stop the fixed point; 0 = off

    def __post_init__(self):
        if not self.fp_tolerance > 0:
            raise ValueError("fixed-point tolerance eta must be > 0")
        if self.fp_max_iters < 1:
            raise ValueError("fp_max_iters must be >= 1")
        if self.thickness_degree < 1:
            raise ValueError("thickness_degree must be >= 1")
        if self.n_axial_elements < 1:
            raise ValueError("n_axial_elements must be >= 1")
        if self.divergence_window < 0:
            raise ValueError("divergence_window must be >= 0")
        if self.n_greedy_modes < 0:
            raise ValueError("n_greedy_modes must be >= 0")

    def replace(self, **changes) -> SolverSettings:
        return replace(self, **changes)
