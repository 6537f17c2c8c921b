"""Block and greedy PGD solvers for the plane-strain bending strip.

A displacement is stored as a list of separated terms ``(component, a, b)``
meaning ``u_component(x1, x3) += (N3(x3) . a) * (N1(x1) . b)``.

The block mode is::

    u1 = r1(x3) v1(x1)
    u3 = v3(x1) + s3(x3) w3(x1)

and greedy modes are ``(r1 v1, r3 v3)``.  All matrices below come from the
plane-strain bilinear form with Voigt coefficients c11, c13, c33, c55; under
selective integration the c55 * v1 * v1 axial mass uses the reduced rule.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .discretization import (OperatorBundle, ThicknessBasis, build_mesh, build_operators,
                             interpolate)
from .model import CaseSpec, MaterialPlaneStrain, SolverSettings, load_profile

log = logging.getLogger(__name__)

# a greedy mode below this fraction of the known energy norm is roundoff
ZERO_MODE_RTOL = 1e-10
# iterative refinement of the axial solves (see _spd_solve)
REFINE_MAX_STEPS = 10
REFINE_RTOL = 1e-18
XP = np.longdouble


class SingularSystemError(RuntimeError):
    """A PGD sub-problem matrix is not positive definite."""


class SeparatedTerm(NamedTuple):
    component: int  # 1 or 3
    thickness: np.ndarray
    axial: np.ndarray


@dataclass(frozen=True)
class BlockMode:
    v1: np.ndarray
    v3: np.ndarray
    w3: np.ndarray
    r1: np.ndarray
    s3: np.ndarray

    def terms(self, r3_const: np.ndarray) -> list[SeparatedTerm]:
        return [SeparatedTerm(1, self.r1, self.v1),
                SeparatedTerm(3, r3_const, self.v3),
                SeparatedTerm(3, self.s3, self.w3)]


@dataclass(frozen=True)
class GreedyMode:
    v1: np.ndarray
    v3: np.ndarray
    r1: np.ndarray
    r3: np.ndarray

    def terms(self) -> list[SeparatedTerm]:
        return [SeparatedTerm(1, self.r1, self.v1), SeparatedTerm(3, self.r3, self.v3)]


@dataclass(frozen=True)
class FixedPointReport:
    iterations: int
    final_rel_change: float
    converged: bool
    per_iteration_change: tuple[float, ...] = ()
    runtime_s: float = 0.0
    diverged: bool = False


@dataclass(frozen=True)
class PGDSolution:
    block: BlockMode | None
    extras: tuple[GreedyMode, ...]
    case: CaseSpec
    settings: SolverSettings
    report: FixedPointReport
    material: MaterialPlaneStrain
    ops: OperatorBundle = field(repr=False)
    mode_reports: tuple[FixedPointReport, ...] = ()

    @property
    def n_modes(self) -> int:
        return (2 if self.block is not None else 0) + len(self.extras)

    @property
    def total_iterations(self) -> int:
        its = self.report.iterations if self.block is not None else 0
        return its + sum(r.iterations for r in self.mode_reports)

    def terms(self) -> list[SeparatedTerm]:
        out = [] if self.block is None else self.block.terms(self.ops.r3_const)
        for mode in self.extras:
            out.extend(mode.terms())
        return out


# ---------------------------------------------------------------------------
# operator setup


def operators_for(case: CaseSpec, settings: SolverSettings) -> OperatorBundle:
    # the 0.1t / 0.9t end bands need L > 2t; thicker strips get a uniform mesh
    layered = settings.boundary_layer_mesh and case.length > 2.0 * case.thickness
    mesh = build_mesh(case.length, case.thickness, settings.n_axial_elements,
                      settings.axial_order, layered)
    basis = ThicknessBasis(settings.thickness_degree, case.thickness)
    return build_operators(mesh, basis, settings.integration)


def nodal_load(ops: OperatorBundle, case: CaseSpec) -> np.ndarray:
    """Face traction g3 interpolated at the axial nodes."""
    return load_profile(case, np.clip(ops.mesh.node_coords, 0.0, case.length))


def free_mask(ops: OperatorBundle, component: int, clamped: bool) -> np.ndarray:
    mask = np.ones(ops.n_axial, dtype=bool)
    if component == 3 or clamped:
        mask[[0, -1]] = False
    return mask


def _spd_solve(A: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    """Cholesky solve with symmetric Jacobi scaling.

    An extended-precision system is factored in double precision and then
    refined against its extended-precision residual, which thin strips need:
    their axial operators have condition numbers near 1/eps.
    """
    d = np.diag(A).astype(float)
    if not np.all(np.isfinite(A)) or np.any(d <= 0):
        raise SingularSystemError(f"{what}: matrix has a non-positive diagonal")
    s = 1.0 / np.sqrt(d)
    As = A.astype(float) * s[:, None] * s[None, :]
    try:
        factor = scipy.linalg.cho_factor(As, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"{what}: matrix is not positive definite") from exc

    def solve(rhs):
        return s * scipy.linalg.cho_solve(factor, s * rhs, check_finite=False)

    x = solve(np.asarray(b, dtype=float))
    if A.dtype != np.longdouble:
        return x
    x = x.astype(np.longdouble)
    prev = np.inf
    for _ in range(REFINE_MAX_STEPS):
        dx = solve((b - A @ x).astype(float))
        x += dx
        change = np.abs(dx).max()
        if change <= REFINE_RTOL * np.abs(x).max() or change > 0.5 * prev:
            break
        prev = change
    return x.astype(float)


def _remove_mean(ops: OperatorBundle, coeffs: np.ndarray) -> np.ndarray:
    """Project out the constant; v3 + s3 w3 spans the same space either way."""
    one = ops.r3_const
    return coeffs - (one @ ops.m3 @ coeffs) / (one @ ops.m3 @ one) * one


def _l2_normalize(ops: OperatorBundle, coeffs: np.ndarray) -> np.ndarray:
    norm = np.sqrt(coeffs @ ops.m3 @ coeffs)
    if not norm > 0:
        raise SingularSystemError("cannot normalize a zero thickness function")
    return coeffs / norm


# ---------------------------------------------------------------------------
# the bilinear form on separated terms


def axial_pair_matrix(ops: OperatorBundle, mat: MaterialPlaneStrain,
                      ci: int, a: np.ndarray, cj: int, c: np.ndarray) -> np.ndarray:
    """G with a((ci, a, b), (cj, c, d)) = b^T G d, thickness vectors fixed."""
    if ci == 1 and cj == 1:
        return (mat.c11 * (a @ ops.m3 @ c) * ops.k1
                + mat.c55 * (a @ ops.k3 @ c) * ops.m1_shear)
    if ci == 3 and cj == 3:
        return mat.c33 * (a @ ops.k3 @ c) * ops.m1 + mat.c55 * (a @ ops.m3 @ c) * ops.k1
    if ci == 1 and cj == 3:
        return mat.c13 * (c @ ops.h3 @ a) * ops.h1 + mat.c55 * (a @ ops.h3 @ c) * ops.h1.T
    return axial_pair_matrix(ops, mat, cj, c, ci, a).T


def thickness_pair_matrix(ops: OperatorBundle, mat: MaterialPlaneStrain,
                          ci: int, b: np.ndarray, cj: int, d: np.ndarray) -> np.ndarray:
    """T with a((ci, a, b), (cj, c, d)) = a^T T c, axial vectors fixed."""
    if ci == 1 and cj == 1:
        return (mat.c11 * (b @ ops.k1 @ d) * ops.m3
                + mat.c55 * (b @ ops.m1_shear @ d) * ops.k3)
    if ci == 3 and cj == 3:
        return mat.c33 * (b @ ops.m1 @ d) * ops.k3 + mat.c55 * (b @ ops.k1 @ d) * ops.m3
    if ci == 1 and cj == 3:
        return mat.c13 * (b @ ops.h1 @ d) * ops.h3.T + mat.c55 * (d @ ops.h1 @ b) * ops.h3
    return thickness_pair_matrix(ops, mat, cj, d, ci, b).T


def bilinear(ops: OperatorBundle, mat: MaterialPlaneStrain,
             u: Sequence[SeparatedTerm], w: Sequence[SeparatedTerm],
             precise: bool = False) -> float:
    """a(u, w); ``precise`` evaluates in extended precision (for energies of thin strips)."""
    dtype = XP if precise else float
    total = dtype(0.0)
    for p in u:
        for q in w:
            G = axial_pair_matrix(ops, mat, p.component, p.thickness.astype(dtype),
                                  q.component, q.thickness.astype(dtype))
            total += p.axial @ G @ q.axial
    return float(total)


def load_functional(ops: OperatorBundle, g3: np.ndarray, u: Sequence[SeparatedTerm]) -> float:
    """Work of g3 applied on both faces (no body force)."""
    mg = ops.m1 @ g3.astype(XP)
    return float(sum((p.thickness.astype(XP) @ ops.f3_trace) * (p.axial @ mg)
                     for p in u if p.component == 3))


def energy_norm(ops, mat, u: Sequence[SeparatedTerm]) -> float:
    return float(np.sqrt(max(bilinear(ops, mat, u, u), 0.0)))


def _negate(u: Sequence[SeparatedTerm]) -> list[SeparatedTerm]:
    return [SeparatedTerm(p.component, p.thickness, -p.axial) for p in u]


def energy_norm_diff(a_repr, b_repr, ops: OperatorBundle, mat: MaterialPlaneStrain) -> float:
    """||a - b||_E / ||b||_E for two separated representations."""
    a_terms = a_repr.terms() if isinstance(a_repr, PGDSolution) else list(a_repr)
    b_terms = b_repr.terms() if isinstance(b_repr, PGDSolution) else list(b_repr)
    nb = energy_norm(ops, mat, b_terms)
    if not nb > 0:
        raise ValueError("reference representation has zero energy norm")
    return energy_norm(ops, mat, a_terms + _negate(b_terms)) / nb


# ---------------------------------------------------------------------------
# block mode: coupled matrix systems


def inplane_matrix(ops: OperatorBundle, mat: MaterialPlaneStrain, r1, s3):
    """The 3x3 block operator acting on (V1, V3, W3) for fixed (r1, s3).

    Built from the same pair matrices as the bilinear form, so that energies
    of the computed mode are consistent with the system it solves.
    """
    parts = ((1, r1), (3, np.asarray(ops.r3_const, dtype=np.asarray(r1).dtype)), (3, s3))
    return np.block([[axial_pair_matrix(ops, mat, ci, a, cj, c) for cj, c in parts]
                     for ci, a in parts])


def inplane_rhs(ops: OperatorBundle, s3, g3) -> np.ndarray:
    mg = ops.m1 @ g3
    return np.concatenate([np.zeros(ops.n_axial), 2.0 * mg, (s3 @ ops.f3_trace) * mg])


def solve_inplane_step(ops: OperatorBundle, mat: MaterialPlaneStrain, case: CaseSpec,
                       r1, s3, g3_nodal, precise: bool = False):
    """Axial functions (v1, v3, w3) for fixed thickness functions (r1, s3).

    ``precise`` forms the system in extended precision and refines the solve.
    """
    dtype = XP if precise else float
    A = inplane_matrix(ops, mat, np.asarray(r1, dtype=dtype), np.asarray(s3, dtype=dtype))
    b = inplane_rhs(ops, np.asarray(s3, dtype=dtype), np.asarray(g3_nodal, dtype=dtype))
    free = np.concatenate([free_mask(ops, 1, case.clamped), free_mask(ops, 3, case.clamped),
                           free_mask(ops, 3, case.clamped)])
    x = np.zeros_like(b)
    x[free] = _spd_solve(A[np.ix_(free, free)], b[free], "in-plane block system")
    n = ops.n_axial
    return x[:n], x[n:2 * n], x[2 * n:]


def thickness_matrix(ops: OperatorBundle, mat: MaterialPlaneStrain, v1, w3):
    K1, M1, H1, MS = ops.k1, ops.m1, ops.h1, ops.m1_shear
    K3, M3, H3 = ops.k3, ops.m3, ops.h3
    c11, c13, c33, c55 = mat.c11, mat.c13, mat.c33, mat.c55
    P11 = c11 * (v1 @ K1 @ v1) * M3 + c55 * (v1 @ MS @ v1) * K3
    P33 = c33 * (w3 @ M1 @ w3) * K3 + c55 * (w3 @ K1 @ w3) * M3
    P13 = c13 * (v1 @ H1 @ w3) * H3.T + c55 * (w3 @ H1 @ v1) * H3
    return np.block([[P11, P13], [P13.T, P33]])


def thickness_rhs(ops: OperatorBundle, mat: MaterialPlaneStrain, v1, v3, w3, g3):
    R3 = ops.r3_const
    top = -mat.c55 * (v3 @ ops.h1 @ v1) * (ops.h3 @ R3)
    bottom = ((w3 @ ops.m1 @ g3) * ops.f3_trace
              - mat.c55 * (w3 @ ops.k1 @ v3) * (ops.m3 @ R3))
    return np.concatenate([top, bottom])


def solve_thickness_step(ops: OperatorBundle, mat: MaterialPlaneStrain, v1, v3, w3, g3_nodal):
    """Unnormalized thickness functions (r1, s3) for fixed axial functions."""
    A = thickness_matrix(ops, mat, v1, w3)
    b = thickness_rhs(ops, mat, v1, v3, w3, g3_nodal)
    x = _spd_solve(A, b, "thickness block system")
    m = ops.n_thick
    return x[:m], x[m:]


def initial_thickness_functions(basis: ThicknessBasis, kind: str = "kinematic",
                                seed: int | None = None):
    """Starting (r1, s3): x3 and x3^2 - t^2/12, or seeded random polynomials."""
    if kind == "kinematic":
        r1 = basis.monomial(1)
        s3 = basis.monomial(2) - basis.thickness**2 / 12.0 * basis.constant()
    elif kind == "random":
        rng = np.random.default_rng(seed)
        scale = (0.5 * basis.thickness) ** -basis.powers.astype(float)
        r1 = rng.standard_normal(basis.size) * scale
        s3 = rng.standard_normal(basis.size) * scale
    else:
        raise ValueError(f"unknown initial guess {kind!r}")
    return r1, s3


def _track_change(history: list[float], window: int) -> bool:
    """True when the update has grown for ``window`` consecutive iterations (0: never)."""
    if window < 1 or len(history) <= window:
        return False
    tail = history[-window - 1:]
    return all(b > a for a, b in zip(tail, tail[1:]))


def _zero_report() -> FixedPointReport:
    return FixedPointReport(1, 0.0, True, (0.0,), 0.0)


def fixed_point_block(case: CaseSpec, mat: MaterialPlaneStrain,
                      settings: SolverSettings | None = None, *,
                      ops: OperatorBundle | None = None, normalize: bool = True,
                      initial: str = "kinematic", seed: int | None = None) -> PGDSolution:
    """Compute the block mode (first two modes together) by alternating solves.

    Each iteration solves the axial system for the current thickness pair and
    compares the resulting displacement with the previous one in the energy
    norm; the thickness pair is then updated (and L2-normalized).  The
    returned mode always ends on an axial solve, so it is a Galerkin solution
    for its own thickness functions.
    """
    settings = settings or SolverSettings()
    ops = ops or operators_for(case, settings)
    g3 = nodal_load(ops, case)
    start = time.perf_counter()
    n = ops.n_axial
    if not np.any(g3):
        zero = np.zeros(n)
        r1, s3 = initial_thickness_functions(ops.basis)
        block = BlockMode(zero, zero.copy(), zero.copy(), _l2_normalize(ops, r1),
                          _l2_normalize(ops, s3))
        return PGDSolution(block, (), case, settings, _zero_report(), mat, ops)

    r1, s3 = initial_thickness_functions(ops.basis, initial, seed)
    s3 = _remove_mean(ops, s3)
    if normalize:
        r1, s3 = _l2_normalize(ops, r1), _l2_normalize(ops, s3)
    history: list[float] = []
    diverged = False
    prev_terms = None
    converged = False
    it = 0
    for it in range(1, settings.fp_max_iters + 1):
        v1, v3, w3 = solve_inplane_step(ops, mat, case, r1, s3, g3)
        block = BlockMode(v1, v3, w3, r1, s3)
        terms = block.terms(ops.r3_const)
        if prev_terms is not None:
            history.append(energy_norm_diff(terms, prev_terms, ops, mat))
            if history[-1] < settings.fp_tolerance:
                converged = True
                break
            if _track_change(history, settings.divergence_window):
                diverged = True
                log.warning("block fixed point diverging for %s at L/t=%g",
                            case.case_id, case.slenderness)
                break
        prev_terms = terms
        r1, s3 = solve_thickness_step(ops, mat, v1, v3, w3, g3)
        s3 = _remove_mean(ops, s3)
        if normalize:
            r1, s3 = _l2_normalize(ops, r1), _l2_normalize(ops, s3)

    # the returned mode is the Galerkin solution for its thickness pair, solved accurately
    v1, v3, w3 = solve_inplane_step(ops, mat, case, block.r1, block.s3, g3, precise=True)
    block = BlockMode(v1, v3, w3, block.r1, block.s3)
    if not converged:
        log.warning("block fixed point not converged after %d iterations (%s, L/t=%g)",
                    it, case.case_id, case.slenderness)
    report = FixedPointReport(it, history[-1] if history else float("nan"), converged,
                              tuple(history), time.perf_counter() - start, diverged)
    return PGDSolution(block, (), case, settings, report, mat, ops)


# ---------------------------------------------------------------------------
# greedy single-mode enrichment


def _greedy_axial_step(ops, mat, case, r1, r3, known, g3, precise=False):
    n = ops.n_axial
    dtype = XP if precise else float
    r1, r3, g3 = r1.astype(dtype), r3.astype(dtype), g3.astype(dtype)
    G11 = axial_pair_matrix(ops, mat, 1, r1, 1, r1)
    G13 = axial_pair_matrix(ops, mat, 1, r1, 3, r3)
    G33 = axial_pair_matrix(ops, mat, 3, r3, 3, r3)
    A = np.block([[G11, G13], [G13.T, G33]])
    b = np.concatenate([np.zeros(n), (r3 @ ops.f3_trace) * (ops.m1 @ g3)])
    for p in known:
        a = p.thickness.astype(dtype)
        b[:n] -= axial_pair_matrix(ops, mat, p.component, a, 1, r1).T @ p.axial
        b[n:] -= axial_pair_matrix(ops, mat, p.component, a, 3, r3).T @ p.axial
    free = np.concatenate([free_mask(ops, 1, case.clamped), free_mask(ops, 3, case.clamped)])
    x = np.zeros(2 * n)
    if np.any(b[free] != 0):
        x[free] = _spd_solve(A[np.ix_(free, free)], b[free], "greedy axial system")
    return x[:n], x[n:]


def _greedy_thickness_step(ops, mat, v1, v3, known, g3):
    m = ops.n_thick
    T11 = thickness_pair_matrix(ops, mat, 1, v1, 1, v1)
    T13 = thickness_pair_matrix(ops, mat, 1, v1, 3, v3)
    T33 = thickness_pair_matrix(ops, mat, 3, v3, 3, v3)
    A = np.block([[T11, T13], [T13.T, T33]])
    b = np.concatenate([np.zeros(m), (v3 @ ops.m1 @ g3) * ops.f3_trace])
    for p in known:
        # a(p, (1, r*, v1)) = (r*)^T [T(p->1)]^T a_p  with T from thickness_pair_matrix
        b[:m] -= thickness_pair_matrix(ops, mat, p.component, p.axial, 1, v1).T @ p.thickness
        b[m:] -= thickness_pair_matrix(ops, mat, p.component, p.axial, 3, v3).T @ p.thickness
    x = _spd_solve(A, b, "greedy thickness system")
    return x[:m], x[m:]


def compute_greedy_mode(ops: OperatorBundle, mat: MaterialPlaneStrain, case: CaseSpec,
                        settings: SolverSettings, known: Sequence[SeparatedTerm],
                        *, normalize: bool = True, initial: str = "kinematic",
                        seed: int | None = None) -> tuple[GreedyMode, FixedPointReport]:
    """One rank-one mode r o v minimizing the energy of the residual problem."""
    g3 = nodal_load(ops, case)
    start = time.perf_counter()
    if initial == "kinematic":
        r1, r3 = ops.basis.monomial(1), ops.basis.constant()
    else:
        r1, r3 = initial_thickness_functions(ops.basis, initial, seed)
    r1, r3 = _l2_normalize(ops, r1), _l2_normalize(ops, r3)
    known = list(known)
    ref_norm = energy_norm(ops, mat, known) if known else 0.0

    history: list[float] = []
    diverged = False
    prev = None
    converged = False
    it = 0
    for it in range(1, settings.fp_max_iters + 1):
        v1, v3 = _greedy_axial_step(ops, mat, case, r1, r3, known, g3)
        mode = GreedyMode(v1, v3, r1, r3)
        mode_norm = energy_norm(ops, mat, mode.terms())
        if mode_norm <= ZERO_MODE_RTOL * ref_norm or not np.any(v3) and not np.any(v1):
            # residual is zero up to solver roundoff: nothing left to enrich
            report = FixedPointReport(it, 0.0, True, tuple(history),
                                      time.perf_counter() - start)
            return GreedyMode(np.zeros_like(v1), np.zeros_like(v3), r1, r3), report
        if prev is not None:
            history.append(energy_norm_diff(mode.terms(), prev.terms(), ops, mat))
            if history[-1] < settings.fp_tolerance:
                converged = True
                break
            if _track_change(history, settings.divergence_window):
                diverged = True
                log.warning("greedy fixed point diverging (%s, L/t=%g)",
                            case.case_id, case.slenderness)
                break
        prev = mode
        r1, r3 = _greedy_thickness_step(ops, mat, v1, v3, known, g3)
        if normalize:
            r1, r3 = _l2_normalize(ops, r1), _l2_normalize(ops, r3)
    v1, v3 = _greedy_axial_step(ops, mat, case, mode.r1, mode.r3, known, g3, precise=True)
    mode = GreedyMode(v1, v3, mode.r1, mode.r3)
    if not converged:
        log.warning("greedy mode not converged after %d iterations (%s, L/t=%g)",
                    it, case.case_id, case.slenderness)
    report = FixedPointReport(it, history[-1] if history else float("nan"), converged,
                              tuple(history), time.perf_counter() - start, diverged)
    return mode, report


def greedy_enrich(current: PGDSolution, k: int, **kwargs) -> PGDSolution:
    """Append k greedy modes, each computed against the residual of all earlier ones."""
    if k < 1:
        raise ValueError("k must be >= 1")
    extras = list(current.extras)
    reports = list(current.mode_reports)
    for _ in range(k):
        known = PGDSolution(current.block, tuple(extras), current.case, current.settings,
                            current.report, current.material, current.ops).terms()
        mode, report = compute_greedy_mode(current.ops, current.material, current.case,
                                           current.settings, known, **kwargs)
        extras.append(mode)
        reports.append(report)
    return PGDSolution(current.block, tuple(extras), current.case, current.settings,
                       current.report, current.material, current.ops, tuple(reports))


def solve_greedy(case: CaseSpec, mat: MaterialPlaneStrain, settings: SolverSettings | None = None,
                 n_modes: int = 1, *, ops: OperatorBundle | None = None, **kwargs) -> PGDSolution:
    """Standard PGD: n_modes rank-one modes computed one after the other."""
    settings = settings or SolverSettings()
    ops = ops or operators_for(case, settings)
    empty = PGDSolution(None, (), case, settings, FixedPointReport(0, float("nan"), True),
                        mat, ops)
    sol = greedy_enrich(empty, n_modes, **kwargs)
    return PGDSolution(None, sol.extras, case, settings, sol.mode_reports[0], mat, ops,
                       sol.mode_reports)


def solve_block(case: CaseSpec, mat: MaterialPlaneStrain,
                settings: SolverSettings | None = None, **kwargs) -> PGDSolution:
    """Block mode followed by ``settings.n_greedy_modes`` greedy enrichments."""
    settings = settings or SolverSettings()
    sol = fixed_point_block(case, mat, settings, **kwargs)
    if settings.n_greedy_modes:
        sol = greedy_enrich(sol, settings.n_greedy_modes)
    return sol


# ---------------------------------------------------------------------------
# post-processing


def strain_energy(sol: PGDSolution | Sequence[SeparatedTerm], ops: OperatorBundle | None = None,
                  mat: MaterialPlaneStrain | None = None) -> float:
    """Half the bilinear form of the solution with itself (J per unit width)."""
    if isinstance(sol, PGDSolution):
        ops = ops or sol.ops
        mat = mat or sol.material
        terms = sol.terms()
    else:
        terms = list(sol)
    return 0.5 * bilinear(ops, mat, terms, terms, precise=True)


def external_work(sol: PGDSolution) -> float:
    return load_functional(sol.ops, nodal_load(sol.ops, sol.case), sol.terms())


def evaluate_displacement(sol: PGDSolution, x1, x3):
    """Displacement (u1, u3) at points (x1, x3) of the strip."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x3 = np.atleast_1d(np.asarray(x3, dtype=float))
    x1, x3 = np.broadcast_arrays(x1, x3)
    L, t = sol.case.length, sol.case.thickness
    tol = 1e-12
    if (np.any(x1 < -tol * L) or np.any(x1 > L * (1 + tol))
            or np.any(np.abs(x3) > 0.5 * t * (1 + tol))):
        raise ValueError("point outside the strip [0, L] x [-t/2, t/2]")
    basis = sol.ops.basis
    N3 = basis.values(x3.ravel())
    u = {1: np.zeros(x1.size), 3: np.zeros(x1.size)}
    for p in sol.terms():
        u[p.component] += (N3 @ p.thickness) * interpolate(sol.ops.mesh, p.axial, x1.ravel())
    return u[1].reshape(x1.shape), u[3].reshape(x1.shape)


def center_deflection(sol: PGDSolution, include_corrector: bool = True) -> float:
    """Mid-surface deflection u3(L/2, 0); without the corrector only v3 is kept for blocks."""
    mid = 0.5 * sol.case.length
    ops = sol.ops
    N0 = ops.basis.values(0.0)[0]
    total = 0.0
    if sol.block is not None:
        total += interpolate(ops.mesh, sol.block.v3, mid)[0]
        if include_corrector:
            total += (N0 @ sol.block.s3) * interpolate(ops.mesh, sol.block.w3, mid)[0]
    for mode in sol.extras:
        total += (N0 @ mode.r3) * interpolate(ops.mesh, mode.v3, mid)[0]
    return float(total)
