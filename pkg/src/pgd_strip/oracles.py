"""Reference solutions used to grade PGD output.

* Kirchhoff-Love strip deflections in closed form,
* the two-term asymptotic field (KL kinematics plus the Poisson thickness corrector),
* the nonlinear limit equation satisfied by the first PGD mode as t -> 0,
* a 9-node quadrilateral plane-strain FE solution on a fine mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from numpy.polynomial.legendre import leggauss

from .model import BoundaryCondition, CaseSpec, LoadKind, MaterialPlaneStrain, load_profile


class OracleError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Kirchhoff-Love strip


@dataclass(frozen=True)
class KLCase:
    bending_stiffness: float  # D = E t^3 / (12 (1 - nu^2)), per unit width
    line_load: Callable[[np.ndarray], np.ndarray]
    bc_kind: BoundaryCondition
    length: float

    def __post_init__(self):
        if not self.bending_stiffness > 0:
            raise ValueError("bending stiffness must be positive")


@dataclass(frozen=True)
class KLSolution:
    """Deflection w(x) of D w'''' = p with derivatives up to third order."""

    w: Callable[..., np.ndarray]
    w_center: float
    energy: float
    length: float

    def __call__(self, x, derivative: int = 0):
        return self.w(np.asarray(x, dtype=float), derivative)


def kl_case(case: CaseSpec, mat: MaterialPlaneStrain) -> KLCase:
    D = mat.bending_stiffness_factor * case.thickness**3 / 12.0
    return KLCase(D, lambda x: 2.0 * load_profile(case, x), case.bc_kind, case.length)


def _kl_closed_form(bc: BoundaryCondition, load: LoadKind, p: float, L: float, D: float):
    """Closed-form w and its derivatives (checked against sympy and FD in the tests)."""
    pi = math.pi
    if load is LoadKind.SINUS:
        W = p * L**4 / (pi**4 * D)
        k = pi / L
        if bc is BoundaryCondition.SIMPLY_SUPPORTED:
            def w(x, d=0):
                return W * k**d * [np.sin, np.cos, lambda y: -np.sin(y),
                                   lambda y: -np.cos(y)][d](k * x)
            energy = p**2 * L**5 / (4 * pi**4 * D)
        else:
            # sine plus the even cubic that restores zero slope at the ends
            def w(x, d=0):
                y = k * x
                if d == 0:
                    return W * (np.sin(y) + pi / L**2 * (x - L / 2) ** 2 - pi / 4)
                if d == 1:
                    return W * (k * np.cos(y) + 2 * pi / L**2 * (x - L / 2))
                if d == 2:
                    return W * (-k**2 * np.sin(y) + 2 * pi / L**2)
                return W * (-k**3 * np.cos(y))
            energy = p * W * L * (pi**2 - 8) / (4 * pi**2)
    else:
        if bc is BoundaryCondition.SIMPLY_SUPPORTED:
            def w(x, d=0):
                c = p / (24 * D)
                return c * [x * (L**3 - 2 * L * x**2 + x**3),
                            L**3 - 6 * L * x**2 + 4 * x**3,
                            -12 * L * x + 12 * x**2,
                            -12 * L + 24 * x][d]
            energy = p**2 * L**5 / (240 * D)
        else:
            def w(x, d=0):
                c = p / (24 * D)
                return c * [x**2 * (L - x) ** 2,
                            2 * x * (L - x) * (L - 2 * x),
                            2 * (L**2 - 6 * L * x + 6 * x**2),
                            -12 * L + 24 * x][d]
            energy = p**2 * L**5 / (1440 * D)
    return w, energy


def kl_solution(case: CaseSpec, mat: MaterialPlaneStrain) -> KLSolution:
    """Kirchhoff-Love deflection of the strip under the net line load 2 g3."""
    if case.bc_kind not in BoundaryCondition or case.load_kind not in LoadKind:
        raise OracleError(f"unsupported case {case}")
    kc = kl_case(case, mat)
    p = 2.0 * case.load_amplitude
    w, energy = _kl_closed_form(case.bc_kind, case.load_kind, p, case.length,
                                kc.bending_stiffness)
    return KLSolution(w, float(w(np.array(case.length / 2.0))), float(energy), case.length)


def scaled_kl_center(nu: float, bc: BoundaryCondition, load: LoadKind,
                     amplitude: float = 1.0) -> float:
    """Center deflection of (1/(12(1-nu^2))) w'''' = p3 on (0, 1)."""
    w, _ = _kl_closed_form(bc, load, amplitude, 1.0, 1.0 / (12.0 * (1.0 - nu**2)))
    return float(w(np.array(0.5)))


# ---------------------------------------------------------------------------
# asymptotic two-term expansion


def asymptotic_solution(case: CaseSpec, mat: MaterialPlaneStrain, x1, x3):
    """u1 = -x3 w', u3 = w + (x3^2 - t^2/12)/2 * (c13/c33) * w''."""
    kl = kl_solution(case, mat)
    x1 = np.asarray(x1, dtype=float)
    x3 = np.asarray(x3, dtype=float)
    ratio = mat.c13 / mat.c33
    u1 = -x3 * kl(x1, 1)
    u3 = kl(x1) + 0.5 * (x3**2 - case.thickness**2 / 12.0) * ratio * kl(x1, 2)
    return u1, u3


def asymptotic_energy(case: CaseSpec, mat: MaterialPlaneStrain, n_panels: int = 256) -> float:
    """Plane-strain strain energy of the asymptotic field (exact in x3, Gauss in x1)."""
    kl = kl_solution(case, mat)
    t = case.thickness
    xi, wq = leggauss(6)
    edges = np.linspace(0.0, case.length, n_panels + 1)
    h = np.diff(edges)
    x = (edges[:-1, None] + (xi[None, :] + 1) * h[:, None] / 2).ravel()
    w = (wq[None, :] * h[:, None] / 2).ravel()
    ratio = mat.c13 / mat.c33
    # bending: eps11 = -x3 w'', eps33 = x3 ratio w''; shear: (x3^2 - t^2/12) ratio w''' / 2
    bend = (mat.c11 - 2 * mat.c13 * ratio + mat.c33 * ratio**2) * t**3 / 12.0
    shear = mat.c55 * ratio**2 / 4.0 * t**5 / 180.0
    return float(0.5 * np.sum(w * (bend * kl(x, 2) ** 2 + shear * kl(x, 3) ** 2)))


# ---------------------------------------------------------------------------
# limit equation of the first PGD mode


@dataclass(frozen=True)
class LimitODEProblem:
    """a w'''' - b (2 mu w'' - mu^2 w) = p3 on (0, 1), mu = int w w'' / int w^2."""

    a_coeff: float
    b_coeff: float
    bc_kind: BoundaryCondition
    scaled_load: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if not self.a_coeff > 0 or self.b_coeff < 0:
            raise ValueError("need a > 0 and b >= 0")


def limit_ode_problem(nu: float, bc: BoundaryCondition, load: LoadKind,
                      amplitude: float = 1.0) -> LimitODEProblem:
    """Isotropic coefficients with E as the reference stiffness."""
    if not -1.0 < nu < 0.5:
        raise ValueError("nu must lie in (-1, 0.5)")
    a = (1 - nu) / (12 * (1 + nu) * (1 - 2 * nu))
    b = nu**2 / (12 * (1 - nu**2) * (1 - 2 * nu))
    if load is LoadKind.SINUS:
        def p3(x):
            return amplitude * np.sin(math.pi * x)
    else:
        def p3(x):
            return np.full_like(np.asarray(x, dtype=float), amplitude)
    return LimitODEProblem(a, b, bc, p3)


@dataclass(frozen=True)
class LimitODESolution:
    nodes: np.ndarray
    w: np.ndarray  # Hermite dofs (w_0, w'_0, w_1, w'_1, ...)
    mu: float
    iterations: int
    mu_trace: tuple[float, ...]
    converged: bool

    @property
    def values(self) -> np.ndarray:
        return self.w[0::2]

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        e = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, len(self.nodes) - 2)
        h = self.nodes[e + 1] - self.nodes[e]
        s = (x - self.nodes[e]) / h
        H, _, _ = _hermite(s, h)
        dofs = np.stack([self.w[2 * e], self.w[2 * e + 1], self.w[2 * e + 2],
                         self.w[2 * e + 3]], axis=1)
        return np.sum(H * dofs, axis=1)

    @property
    def w_center(self) -> float:
        return float(self.evaluate(0.5)[0])


def _hermite(s, h):
    """Cubic Hermite basis on an element of length h, at local s in [0, 1]."""
    s = np.atleast_1d(s)
    h = np.broadcast_to(np.asarray(h, dtype=float), s.shape)
    N = np.column_stack([1 - 3 * s**2 + 2 * s**3, h * (s - 2 * s**2 + s**3),
                         3 * s**2 - 2 * s**3, h * (-s**2 + s**3)])
    dN = np.column_stack([-6 * s + 6 * s**2, h * (1 - 4 * s + 3 * s**2),
                          6 * s - 6 * s**2, h * (-2 * s + 3 * s**2)]) / h[:, None]
    d2N = np.column_stack([-6 + 12 * s, h * (-4 + 6 * s), 6 - 12 * s,
                           h * (-2 + 6 * s)]) / h[:, None] ** 2
    return N, dN, d2N


def _hermite_matrices(nodes, load):
    n = len(nodes)
    ndof = 2 * n
    K2 = np.zeros((ndof, ndof))
    K1 = np.zeros((ndof, ndof))
    M = np.zeros((ndof, ndof))
    f = np.zeros(ndof)
    xi, wq = leggauss(5)
    s = (xi + 1) / 2
    for e in range(n - 1):
        h = nodes[e + 1] - nodes[e]
        N, dN, d2N = _hermite(s, h)
        wt = wq * h / 2
        idx = np.arange(2 * e, 2 * e + 4)
        ix = np.ix_(idx, idx)
        K2[ix] += np.einsum("q,qi,qj->ij", wt, d2N, d2N)
        K1[ix] += np.einsum("q,qi,qj->ij", wt, dN, dN)
        M[ix] += np.einsum("q,qi,qj->ij", wt, N, N)
        f[idx] += np.einsum("q,qi,q->i", wt, N, load(nodes[e] + s * h))
    return K2, K1, M, f


def solve_limit_ode(problem: LimitODEProblem, n_elems: int = 256, tol: float = 1e-10,
                    max_iters: int = 200) -> LimitODESolution:
    """Hermite-cubic solve with an outer fixed point on the ratio mu."""
    if n_elems < 4:
        raise ValueError("need at least 4 elements")
    nodes = np.linspace(0.0, 1.0, n_elems + 1)
    K2, K1, M, f = _hermite_matrices(nodes, problem.scaled_load)
    ndof = len(f)
    fixed = [0, ndof - 2]
    if problem.bc_kind is BoundaryCondition.CLAMPED:
        fixed += [1, ndof - 1]
    free = np.setdiff1d(np.arange(ndof), fixed)
    a, b = problem.a_coeff, problem.b_coeff

    def solve(mu):
        # weak form: a (w'', v'') + 2 b mu (w', v') + b mu^2 (w, v) = (p3, v)
        A = a * K2 + 2 * b * mu * K1 + b * mu**2 * M
        w = np.zeros(ndof)
        w[free] = scipy.linalg.solve(A[np.ix_(free, free)], f[free], assume_a="pos")
        return w

    def ratio(w):
        # int w w'' = -int w'^2 since w vanishes at both ends
        return -(w @ K1 @ w) / (w @ M @ w)

    w = solve(0.0)
    mu = ratio(w)
    trace = [mu]
    if b == 0.0:
        return LimitODESolution(nodes, w, mu, 1, tuple(trace), True)
    damping = 1.0
    last_step = 0.0
    for it in range(1, max_iters + 1):
        w = solve(mu)
        step = ratio(w) - mu
        if last_step * step < 0:
            damping = 0.5
        mu_new = mu + damping * step
        trace.append(mu_new)
        last_step = step
        if abs(mu_new - mu) <= tol * abs(mu_new):
            w = solve(mu_new)
            return LimitODESolution(nodes, w, mu_new, it, tuple(trace), True)
        mu = mu_new
    raise OracleError(f"limit ODE mu iteration did not converge; trace tail {trace[-5:]}")


# ---------------------------------------------------------------------------
# fine-mesh 2D plane-strain reference


@dataclass(frozen=True)
class ReferenceMesh2D:
    """Structured Q9 mesh of [0, L] x [-t/2, t/2]; x_vertices are element edges."""

    x_vertices: np.ndarray
    nz: int
    thickness: float

    def __post_init__(self):
        if self.nz < 8:
            raise ValueError("reference mesh needs nz >= 8 elements through the thickness")
        if np.any(np.diff(self.x_vertices) <= 0):
            raise ValueError("x vertices must be strictly increasing")

    @property
    def nx(self) -> int:
        return len(self.x_vertices) - 1

    @property
    def length(self) -> float:
        return float(self.x_vertices[-1] - self.x_vertices[0])

    @property
    def node_x(self) -> np.ndarray:
        v = self.x_vertices
        out = np.empty(2 * self.nx + 1)
        out[0::2] = v
        out[1::2] = 0.5 * (v[:-1] + v[1:])
        return out

    @property
    def node_z(self) -> np.ndarray:
        return np.linspace(-self.thickness / 2, self.thickness / 2, 2 * self.nz + 1)

    @property
    def n_dofs(self) -> int:
        return 2 * len(self.node_x) * len(self.node_z)

    def dof(self, i, j, comp):
        """Global dof of node column i, row j; comp 0 -> u1, 1 -> u3."""
        return 2 * (np.asarray(i) * (2 * self.nz + 1) + np.asarray(j)) + comp


def reference_mesh(case: CaseSpec, nz: int = 10, aspect: float = 2.0,
                   end_refinement: bool | None = None) -> ReferenceMesh2D:
    """Elements of length <= aspect * t/nz, with 0.1t / 0.9t end elements under clamping."""
    L, t = case.length, case.thickness
    if end_refinement is None:
        end_refinement = case.clamped
    hmax = aspect * t / nz
    if end_refinement and L > 2 * t:
        inner = L - 2 * t
        n = max(2, math.ceil(inner / hmax))
        n += n % 2  # keep a vertex at L/2
        verts = np.concatenate([[0.0, 0.1 * t], np.linspace(t, L - t, n + 1),
                                [L - 0.1 * t, L]])
    else:
        n = max(2, math.ceil(L / hmax))
        n += n % 2
        verts = np.linspace(0.0, L, n + 1)
    return ReferenceMesh2D(verts, nz, t)


_XDTYPE = np.longdouble  # extended precision for the operator used in refinement


def _gauss3(dtype):
    r = np.sqrt(dtype(3) / dtype(5))
    return np.array([-r, dtype(0), r], dtype=dtype), np.array([5, 8, 5], dtype=dtype) / 9


def _q9_stiffness(hx: float, hz: float, mat: MaterialPlaneStrain, dtype=np.float64) -> np.ndarray:
    """Q9 element stiffness, 3x3 Gauss; local node 3*a + b (a along x1, b along x3)."""
    xi, wq = _gauss3(dtype)
    X, Z = np.meshgrid(xi, xi, indexing="ij")
    X, Z = X.ravel(), Z.ravel()
    W = np.outer(wq, wq).ravel()

    def lag(s):
        return np.stack([s * (s - 1) / 2, 1 - s**2, s * (s + 1) / 2], axis=-1)

    def dlag(s):
        return np.stack([s - dtype(0.5), -2 * s, s + dtype(0.5)], axis=-1)

    hx, hz = dtype(hx), dtype(hz)
    dx = np.einsum("qa,qb->qab", dlag(X), lag(Z)).reshape(9, 9) * (2 / hx)
    dz = np.einsum("qa,qb->qab", lag(X), dlag(Z)).reshape(9, 9) * (2 / hz)
    B = np.zeros((9, 3, 18), dtype=dtype)
    B[:, 0, 0::2] = dx
    B[:, 1, 1::2] = dz
    B[:, 2, 0::2] = dz
    B[:, 2, 1::2] = dx
    c11, c13, c33, c55 = (dtype(v) for v in (mat.c11, mat.c13, mat.c33, mat.c55))
    Dm = np.array([[c11, c13, 0], [c13, c33, 0], [0, 0, c55]], dtype=dtype)
    return np.einsum("q,qki,kl,qlj->ij", W * hx * hz / 4, B, Dm, B)


def _element_dofs(mesh: ReferenceMesh2D):
    ex, ez = np.meshgrid(np.arange(mesh.nx), np.arange(mesh.nz), indexing="ij")
    ex, ez = ex.ravel(), ez.ravel()
    a = np.arange(3)
    cols = 2 * ex[:, None, None] + a[None, :, None]
    rows = 2 * ez[:, None, None] + a[None, None, :]
    nodes = (cols * (2 * mesh.nz + 1) + rows).reshape(len(ex), 9)
    dofs = np.empty((len(ex), 18), dtype=np.int64)
    dofs[:, 0::2] = 2 * nodes
    dofs[:, 1::2] = 2 * nodes + 1
    return dofs, ex


def half_bandwidth(mesh: ReferenceMesh2D) -> int:
    dofs, _ = _element_dofs(mesh)
    return int(np.max(dofs.max(axis=1) - dofs.min(axis=1)))


def assemble_reference_stiffness(mesh: ReferenceMesh2D, mat: MaterialPlaneStrain,
                                 dtype=np.float64) -> np.ndarray:
    """Upper banded storage (LAPACK 'ab' layout) of the unconstrained stiffness.

    On the structured mesh a fixed local pair maps to distinct global pairs for
    distinct elements, so each pair is scattered with one fancy-indexed add.
    """
    u = half_bandwidth(mesh)
    ab = np.zeros((u + 1, mesh.n_dofs), dtype=dtype)
    dofs, ex = _element_dofs(mesh)
    hx = np.diff(mesh.x_vertices)
    keys = np.round(hx / hx.max(), 12)
    hz = mesh.thickness / mesh.nz
    for key in np.unique(keys):
        sel = keys[ex] == key
        Ke = _q9_stiffness(float(hx[keys == key][0]), hz, mat, dtype)
        d = dofs[sel]
        for i in range(18):
            for j in range(i, 18):
                lo = np.minimum(d[:, i], d[:, j])
                hi = np.maximum(d[:, i], d[:, j])
                ab[u - (hi - lo), hi] += Ke[i, j]
    return ab


def banded_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y = K x for K symmetric in upper banded storage, in the wider of the two dtypes."""
    u = ab.shape[0] - 1
    n = ab.shape[1]
    x = np.asarray(x, dtype=np.result_type(ab, x))
    y = ab[u] * x
    for k in range(1, u + 1):
        band = ab[u - k, k:]
        y[:n - k] += band * x[k:]
        y[k:] += band * x[:n - k]
    return y


def reference_load(mesh: ReferenceMesh2D, case: CaseSpec) -> np.ndarray:
    """Consistent nodal forces of +g3 e3 on both faces."""
    f = np.zeros(mesh.n_dofs)
    s, wq = leggauss(4)
    N = np.stack([s * (s - 1) / 2, 1 - s**2, s * (s + 1) / 2], axis=1)
    v = mesh.x_vertices
    h = np.diff(v)
    x = v[:-1, None] + (s[None, :] + 1) * h[:, None] / 2
    g = load_profile(case, np.clip(x, 0.0, case.length))
    fe = np.einsum("eq,qa->ea", wq[None, :] * h[:, None] / 2 * g, N)
    cols = 2 * np.arange(mesh.nx)[:, None] + np.arange(3)[None, :]
    for j in (0, 2 * mesh.nz):
        np.add.at(f, mesh.dof(cols, j, 1).ravel(), fe.ravel())
    return f


def rigid_modes(mesh: ReferenceMesh2D) -> np.ndarray:
    """Columns: translation along x1, translation along x3, rotation about the origin."""
    X, Z = np.meshgrid(mesh.node_x, mesh.node_z, indexing="ij")
    X, Z = X.ravel(), Z.ravel()
    modes = np.zeros((mesh.n_dofs, 3))
    modes[0::2, 0] = 1.0
    modes[1::2, 1] = 1.0
    modes[0::2, 2] = -Z
    modes[1::2, 2] = X
    return modes


@dataclass(frozen=True)
class ReferenceSolution:
    mesh: ReferenceMesh2D
    dofs: np.ndarray
    w_center: float
    energy: float
    work: float
    refinement_steps: int


def reference_constraints(mesh: ReferenceMesh2D, case: CaseSpec) -> np.ndarray:
    nzn = 2 * mesh.nz + 1
    last = 2 * mesh.nx
    rows = np.arange(nzn)
    fixed = [mesh.dof(0, rows, 1), mesh.dof(last, rows, 1)]
    if case.clamped:
        fixed += [mesh.dof(0, rows, 0), mesh.dof(last, rows, 0)]
    else:
        # u1 is odd in x3 under pure bending: pinning the center kills the translation only
        fixed.append(np.array([mesh.dof(mesh.nx, mesh.nz, 0)]))
    return np.unique(np.concatenate(fixed))


def _constrain(ab: np.ndarray, fixed: np.ndarray, diag: float) -> None:
    """Zero the rows/columns of fixed dofs inside the band and set their diagonal."""
    u = ab.shape[0] - 1
    n = ab.shape[1]
    for k in range(1, u + 1):
        ab[u - k, fixed[fixed >= k]] = 0.0        # entry (dof - k, dof)
        ab[u - k, fixed[fixed + k < n] + k] = 0.0  # entry (dof, dof + k)
    ab[u, fixed] = diag


def solve_reference_2d(case: CaseSpec, mat: MaterialPlaneStrain,
                       mesh: ReferenceMesh2D | None = None, max_refinements: int = 20,
                       rtol: float = 1e-12) -> ReferenceSolution:
    """Plane-strain Q9 solve; returns u3(L/2, 0), the strain energy and the load work.

    The operator is assembled in extended precision and the float64 banded Cholesky
    factor is used only as a preconditioner for iterative refinement: for slender
    strips the condition number approaches 1/eps and a plain solve loses most digits.
    """
    mesh = mesh or reference_mesh(case)
    if abs(mesh.length - case.length) > 1e-12 * case.length:
        raise ValueError("reference mesh length does not match the case")
    if abs(mesh.node_x[mesh.nx] - case.length / 2) > 1e-12 * case.length:
        raise ValueError("mesh has no node column at L/2")
    f = reference_load(mesh, case)
    fixed = reference_constraints(mesh, case)
    K = assemble_reference_stiffness(mesh, mat, _XDTYPE)
    u = K.shape[0] - 1
    diag = float(np.mean(K[u]))
    _constrain(K, fixed, diag)
    rhs = f.copy()
    rhs[fixed] = 0.0
    try:
        factor = scipy.linalg.cholesky_banded(K.astype(np.float64), lower=False,
                                              check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise OracleError("reference stiffness is singular; check the constraints") from exc

    def correction(r):
        return scipy.linalg.cho_solve_banded((factor, False), np.asarray(r, dtype=np.float64),
                                             check_finite=False)

    x = correction(rhs).astype(_XDTYPE)
    steps, last = 0, np.inf
    if not np.any(rhs):
        max_refinements = 0
    for steps in range(1, max_refinements + 1):
        dx = correction(rhs - banded_matvec(K, x))
        x = x + dx
        change = float(np.max(np.abs(dx))) / float(np.max(np.abs(x)))
        # stop at the tolerance or once the corrections only stir the roundoff floor
        if change <= rtol or change > 0.5 * last:
            break
        last = change
    center = mesh.dof(mesh.nx, mesh.nz, 1)
    # fixed entries of x vanish, so the constrained and free quadratic forms agree
    energy = 0.5 * float(x @ banded_matvec(K, x))
    work = float(f.astype(_XDTYPE) @ x)
    return ReferenceSolution(mesh, x.astype(np.float64), float(x[center]), energy, work, steps)
