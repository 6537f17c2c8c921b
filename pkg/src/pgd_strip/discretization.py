"""Axial Lagrange meshes, thickness monomials and the separated operator matrices.

Axial matrices (n = number of axial nodes)::

    K1 = int N' N'^T,  M1 = int N N^T,  H1 = int N' N^T

and the same definitions over (-t/2, t/2) for the monomial basis
N3 = [x3^d, ..., x3, 1].  ``m1_ri`` is M1 integrated with one Gauss point
fewer per element, used for the transverse-shear terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .model import AxialOrder, Integration


@dataclass(frozen=True)
class Mesh1D:
    node_coords: np.ndarray
    elements: np.ndarray  # (n_elem, order+1) node indices, (left, [mid,] right)
    order: AxialOrder

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def length(self) -> float:
        return float(self.node_coords[-1] - self.node_coords[0])

    @property
    def vertices(self) -> np.ndarray:
        return self.node_coords[self.elements[:, [0, -1]]]

    @property
    def element_sizes(self) -> np.ndarray:
        v = self.vertices
        return v[:, 1] - v[:, 0]

    @classmethod
    def from_vertices(cls, vertices, order: AxialOrder) -> Mesh1D:
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 1 or len(v) < 2 or np.any(np.diff(v) <= 0):
            raise ValueError("element vertices must be strictly increasing")
        ne = len(v) - 1
        if order is AxialOrder.LINEAR:
            nodes = v.copy()
            elements = np.column_stack([np.arange(ne), np.arange(1, ne + 1)])
        else:
            nodes = np.empty(2 * ne + 1)
            nodes[0::2] = v
            nodes[1::2] = 0.5 * (v[:-1] + v[1:])
            elements = np.column_stack([2 * np.arange(ne), 2 * np.arange(ne) + 1,
                                        2 * np.arange(ne) + 2])
        return cls(nodes, elements, order)

    def locate(self, x) -> np.ndarray:
        """Element index containing each point (right end belongs to the last element)."""
        v = self.vertices[:, 0]
        idx = np.searchsorted(v, np.asarray(x, dtype=float), side="right") - 1
        return np.clip(idx, 0, len(self.elements) - 1)

    def reflected(self) -> Mesh1D:
        """Mirror image x -> L - x, with node order kept ascending."""
        L0, L1 = self.node_coords[0], self.node_coords[-1]
        v = self.vertices
        verts = np.concatenate([[v[0, 0]], v[:, 1]])
        return Mesh1D.from_vertices((L0 + L1 - verts)[::-1], self.order)


def build_mesh(L: float, t: float, n: int, order: AxialOrder = AxialOrder.QUADRATIC,
               boundary_layer: bool = False) -> Mesh1D:
    """Uniform mesh of n elements, optionally with 0.1t / 0.9t elements at each end."""
    if n < 1:
        raise ValueError("need at least one element")
    if not (L > 0 and t > 0):
        raise ValueError("L and t must be positive")
    if not boundary_layer:
        return Mesh1D.from_vertices(np.linspace(0.0, L, n + 1), order)
    if L <= 2.0 * t:
        raise ValueError(f"boundary-layer bands (2t = {2 * t}) do not fit in L = {L}")
    interior = np.linspace(t, L - t, n + 1)
    verts = np.concatenate([[0.0, 0.1 * t], interior, [L - 0.1 * t, L]])
    return Mesh1D.from_vertices(verts, order)


def lagrange_reference(order: AxialOrder, xi):
    """Shape functions and xi-derivatives on [-1, 1]; rows are points."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if order is AxialOrder.LINEAR:
        N = np.column_stack([(1 - xi) / 2, (1 + xi) / 2])
        dN = np.column_stack([np.full_like(xi, -0.5), np.full_like(xi, 0.5)])
    else:
        N = np.column_stack([xi * (xi - 1) / 2, 1 - xi**2, xi * (xi + 1) / 2])
        dN = np.column_stack([xi - 0.5, -2 * xi, xi + 0.5])
    return N, dN


def gauss_points(order: AxialOrder, reduced: bool = False) -> int:
    full = 2 if order is AxialOrder.LINEAR else 3
    return full - 1 if reduced else full


def _element_integrals(mesh: Mesh1D, n_gauss: int):
    xi, wq = leggauss(n_gauss)
    N, dN = lagrange_reference(mesh.order, xi)
    h = mesh.element_sizes
    nloc = N.shape[1]
    n = mesh.n_nodes
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    H = np.zeros((n, n))
    Me = np.einsum("q,qi,qj->ij", wq, N, N)
    Ke = np.einsum("q,qi,qj->ij", wq, dN, dN)
    He = np.einsum("q,qi,qj->ij", wq, dN, N)
    for e, conn in enumerate(mesh.elements):
        he = h[e]
        ix = np.ix_(conn, conn)
        K[ix] += Ke * (2.0 / he)
        M[ix] += Me * (he / 2.0)
        H[ix] += He
    assert nloc == mesh.elements.shape[1]
    return K, M, H


def assemble_axial_operators(mesh: Mesh1D):
    """Return (k1, m1, h1, m1_ri) for the mesh.

    k1, m1, h1 use the exact Gauss rule; m1_ri drops one point per element.
    """
    k1, m1, h1 = _element_integrals(mesh, gauss_points(mesh.order))
    _, m1_ri, _ = _element_integrals(mesh, gauss_points(mesh.order, reduced=True))
    return k1, m1, h1, m1_ri


@dataclass(frozen=True)
class ThicknessBasis:
    degree: int
    thickness: float

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("thickness degree must be >= 1")

    @property
    def size(self) -> int:
        return self.degree + 1

    @property
    def powers(self) -> np.ndarray:
        # ordering [x^d, ..., x, 1]
        return np.arange(self.degree, -1, -1)

    def values(self, x3) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x3, dtype=float))
        return x[:, None] ** self.powers[None, :]

    def derivatives(self, x3) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x3, dtype=float))
        p = self.powers
        out = np.zeros((len(x), len(p)))
        nz = p > 0
        out[:, nz] = p[nz] * x[:, None] ** (p[nz] - 1)
        return out

    def constant(self) -> np.ndarray:
        c = np.zeros(self.size)
        c[-1] = 1.0
        return c

    def monomial(self, power: int) -> np.ndarray:
        c = np.zeros(self.size)
        c[self.degree - power] = 1.0
        return c


def assemble_thickness_operators(basis: ThicknessBasis):
    """Return (k3, m3, h3, f3_trace, r3_const) over (-t/2, t/2)."""
    t = basis.thickness
    nq = math.ceil((2 * basis.degree + 2) / 2)
    xi, wq = leggauss(nq)
    x = 0.5 * t * xi
    w = 0.5 * t * wq
    N = basis.values(x)
    dN = basis.derivatives(x)
    m3 = np.einsum("q,qi,qj->ij", w, N, N)
    k3 = np.einsum("q,qi,qj->ij", w, dN, dN)
    h3 = np.einsum("q,qi,qj->ij", w, dN, N)
    # odd integrands vanish on the symmetric interval; drop their rounding residue
    p = basis.powers
    odd = (p[:, None] + p[None, :]) % 2 == 1
    m3[odd] = 0.0
    k3[odd] = 0.0
    h3[~odd] = 0.0
    m3 = 0.5 * (m3 + m3.T)
    k3 = 0.5 * (k3 + k3.T)
    f3 = (basis.values(0.5 * t) + basis.values(-0.5 * t))[0]
    return k3, m3, h3, f3, basis.constant()


@dataclass(frozen=True)
class OperatorBundle:
    mesh: Mesh1D
    basis: ThicknessBasis
    k1: np.ndarray
    m1: np.ndarray
    h1: np.ndarray
    m1_ri: np.ndarray
    k3: np.ndarray
    m3: np.ndarray
    h3: np.ndarray
    f3_trace: np.ndarray
    r3_const: np.ndarray
    integration: Integration = Integration.SELECTIVE
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def thickness(self) -> float:
        return self.basis.thickness

    @property
    def m1_shear(self) -> np.ndarray:
        """Axial mass matrix used in the transverse-shear terms."""
        return self.m1_ri if self.integration is Integration.SELECTIVE else self.m1

    @property
    def n_axial(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_thick(self) -> int:
        return self.basis.size

    def end_nodes(self) -> tuple[int, int]:
        return 0, self.mesh.n_nodes - 1


def build_operators(mesh: Mesh1D, basis: ThicknessBasis,
                    integration: Integration = Integration.SELECTIVE) -> OperatorBundle:
    k1, m1, h1, m1_ri = assemble_axial_operators(mesh)
    k3, m3, h3, f3, r3 = assemble_thickness_operators(basis)
    return OperatorBundle(mesh, basis, k1, m1, h1, m1_ri, k3, m3, h3, f3, r3, integration)


def interpolate(mesh: Mesh1D, coeffs, x, derivative: bool = False):
    """Evaluate a nodal field (or its x-derivative) at points x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    coeffs = np.asarray(coeffs)
    e = mesh.locate(x)
    v = mesh.vertices[e]
    h = v[:, 1] - v[:, 0]
    xi = 2.0 * (x - v[:, 0]) / h - 1.0
    N, dN = lagrange_reference(mesh.order, xi)
    local = coeffs[mesh.elements[e]]
    if derivative:
        return np.sum(dN * local, axis=1) * (2.0 / h)
    return np.sum(N * local, axis=1)


def quadrature_points(mesh: Mesh1D, n_gauss: int | None = None):
    """Physical Gauss points and weights over every element, flattened."""
    nq = n_gauss or gauss_points(mesh.order)
    xi, wq = leggauss(nq)
    v = mesh.vertices
    h = v[:, 1] - v[:, 0]
    x = (v[:, 0, None] + (xi[None, :] + 1.0) * h[:, None] / 2.0).ravel()
    w = (wq[None, :] * h[:, None] / 2.0).ravel()
    return x, w
