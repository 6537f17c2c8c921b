"""Deflection and energy error measures, and first-mode kinematics diagnostics."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .discretization import OperatorBundle, interpolate, quadrature_points
from .pgd import PGDSolution, center_deflection


class ReferenceKind(enum.Enum):
    KL = "kl"
    FINE_2D = "fine-2d"
    ASYMPTOTIC = "asymptotic"
    LIMIT_ODE = "limit-ode"


@dataclass(frozen=True)
class ConvergenceRecord:
    """One CSV row. ``method`` is e.g. "block-2", "greedy-3" or "asymptotic"."""

    case_id: str
    slenderness: float
    n_modes: int
    method: str
    integration: str
    reference_kind: ReferenceKind
    defl_err_1: float
    defl_err_2: float
    energy_err: float = math.nan
    fp_iterations: int = 0
    runtime_ms: float = 0.0
    status: str = "ok"
    center_ratio: float = math.nan  # signed u3(L/2, 0) / reference, not written to CSV

    def __post_init__(self):
        for name in ("defl_err_1", "defl_err_2", "energy_err"):
            value = getattr(self, name)
            if value < 0:
                raise ValueError(f"{name} must be nonnegative, got {value}")


def _relative(value: float, ref: float) -> float:
    return abs(value - ref) / abs(ref)


def deflection_errors(sol: PGDSolution, ref_center: float) -> tuple[float, float]:
    """(err1, err2) at midspan: err1 drops the s3(0) w3(L/2) term of the block mode."""
    if ref_center == 0 or not math.isfinite(ref_center):
        raise ValueError("reference center deflection must be finite and nonzero")
    err2 = _relative(center_deflection(sol, include_corrector=True), ref_center)
    if sol.block is None:
        return err2, err2
    return _relative(center_deflection(sol, include_corrector=False), ref_center), err2


def energy_error(energy: float, energy_ref: float) -> float:
    if not energy_ref > 0:
        raise ValueError(f"reference energy must be positive, got {energy_ref}")
    return abs(energy - energy_ref) / energy_ref


def _linear_fit(ops: OperatorBundle, coeffs: np.ndarray):
    """L2(-t/2, t/2) projection onto span{1, x3}: returns (constant, slope, residual)."""
    basis = ops.basis
    P = np.column_stack([basis.constant(), basis.monomial(1)])
    G = P.T @ ops.m3 @ P
    c = np.linalg.solve(G, P.T @ ops.m3 @ coeffs)
    rest = coeffs - P @ c
    return c[0], c[1], float(np.sqrt(max(rest @ ops.m3 @ rest, 0.0)))


def kinematics_diagnostics(sol: PGDSolution, ops: OperatorBundle | None = None):
    """(r1 linearity residual, shear-constraint residual) of the leading mode.

    The in-plane function r1 is compared with its best fit a + b x3; the shear
    residual uses v1 scaled by that slope b, so that b v1 + v3' is the mid-surface
    transverse shear of the leading mode.
    """
    ops = ops or sol.ops
    if sol.block is not None:
        r1, v1, v3, r3_scale = sol.block.r1, sol.block.v1, sol.block.v3, 1.0
    elif sol.extras:
        mode = sol.extras[0]
        r1, v1, v3 = mode.r1, mode.v1, mode.v3
        r3_scale, _, _ = _linear_fit(ops, mode.r3)
    else:
        raise ValueError("solution has no modes")
    norm = float(np.sqrt(r1 @ ops.m3 @ r1))
    if norm == 0:
        raise ValueError("r1 vanishes")
    _, slope, resid = _linear_fit(ops, r1)
    x, _ = quadrature_points(ops.mesh)
    dv3 = r3_scale * interpolate(ops.mesh, v3, x, derivative=True)
    shear = slope * interpolate(ops.mesh, v1, x) + dv3
    scale = np.max(np.abs(dv3))
    if scale == 0:
        return resid / norm, 0.0
    return resid / norm, float(np.max(np.abs(shear)) / scale)
