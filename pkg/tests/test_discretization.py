import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial.legendre import leggauss

from pgd_strip.discretization import (Mesh1D, ThicknessBasis, assemble_axial_operators,
                                      assemble_thickness_operators, build_mesh, build_operators,
                                      interpolate, lagrange_reference)
from pgd_strip.model import AxialOrder, Integration


@st.composite
def random_meshes(draw):
    n = draw(st.integers(1, 12))
    sizes = draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n))
    order = draw(st.sampled_from(list(AxialOrder)))
    L = draw(st.floats(0.5, 20.0))
    v = np.concatenate([[0.0], np.cumsum(sizes)])
    return Mesh1D.from_vertices(v * L / v[-1], order)


def high_order_integrals(mesh):
    """Independent oracle: 8-point Gauss per element, evaluated through interpolate."""
    xi, wq = leggauss(8)
    n = mesh.n_nodes
    eye = np.eye(n)
    K, M, H = np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n))
    for a, b in mesh.vertices:
        x = a + (xi + 1) * (b - a) / 2
        w = wq * (b - a) / 2
        N = np.array([interpolate(mesh, eye[i], x) for i in range(n)])
        dN = np.array([interpolate(mesh, eye[i], x, derivative=True) for i in range(n)])
        K += (dN * w) @ dN.T
        M += (N * w) @ N.T
        H += (dN * w) @ N.T
    return K, M, H


class TestMesh:
    def test_uniform(self):
        m = build_mesh(1.0, 0.1, 2, AxialOrder.LINEAR, False)
        np.testing.assert_allclose(m.node_coords, [0, 0.5, 1])

    def test_boundary_layer_pattern(self):
        m = build_mesh(1.0, 0.1, 1, AxialOrder.LINEAR, True)
        np.testing.assert_allclose(m.element_sizes, [0.01, 0.09, 0.8, 0.09, 0.01])

    def test_boundary_layer_quadratic_nodes(self):
        m = build_mesh(2.0, 0.1, 4, AxialOrder.QUADRATIC, True)
        assert m.n_nodes == 2 * 8 + 1
        np.testing.assert_allclose(m.node_coords[1], 0.005)

    def test_bands_must_fit(self):
        with pytest.raises(ValueError):
            build_mesh(0.1, 0.1, 4, AxialOrder.LINEAR, True)

    def test_invalid_counts(self):
        with pytest.raises(ValueError):
            build_mesh(1.0, 0.1, 0)
        with pytest.raises(ValueError):
            Mesh1D.from_vertices([0.0, 0.5, 0.5, 1.0], AxialOrder.LINEAR)

    @given(random_meshes())
    def test_tiling(self, mesh):
        v = mesh.vertices
        assert np.all(np.diff(mesh.node_coords) > 0)
        np.testing.assert_array_equal(v[1:, 0], v[:-1, 1])
        assert v[0, 0] == 0.0
        assert mesh.length == pytest.approx(v[-1, 1])

    def test_reflection(self):
        m = build_mesh(1.0, 0.05, 5, AxialOrder.QUADRATIC, True)
        r = m.reflected()
        np.testing.assert_allclose(r.node_coords, 1.0 - m.node_coords[::-1], atol=1e-15)


class TestReferenceElement:
    @pytest.mark.parametrize("order", list(AxialOrder))
    def test_partition_of_unity(self, order):
        xi = np.linspace(-1, 1, 11)
        N, dN = lagrange_reference(order, xi)
        np.testing.assert_allclose(N.sum(axis=1), 1.0)
        np.testing.assert_allclose(dN.sum(axis=1), 0.0, atol=1e-14)


class TestAxialOperators:
    def test_linear_element_closed_forms(self):
        h = 0.7
        k1, m1, h1, m1_ri = assemble_axial_operators(
            Mesh1D.from_vertices([0.0, h], AxialOrder.LINEAR))
        np.testing.assert_allclose(m1, h / 6 * np.array([[2, 1], [1, 2]]))
        np.testing.assert_allclose(k1, 1 / h * np.array([[1, -1], [-1, 1]]))
        np.testing.assert_allclose(m1_ri, h / 4 * np.ones((2, 2)))

    def test_quadratic_reduced_differs(self):
        mesh = Mesh1D.from_vertices([0.0, 0.4], AxialOrder.QUADRATIC)
        k1, m1, h1, m1_ri = assemble_axial_operators(mesh)
        _, M_exact, _ = high_order_integrals(mesh)
        np.testing.assert_allclose(m1, M_exact, atol=1e-15)
        assert np.linalg.norm(m1_ri - m1) > 1e-3
        np.testing.assert_allclose(m1_ri, m1_ri.T)
        # 2-point rule of the quadratic element, frozen from the exact Gauss values
        np.testing.assert_allclose(m1_ri * 9 / 0.4,
                                   np.array([[1, 1, -0.5], [1, 4, 1], [-0.5, 1, 1]]), atol=1e-13)

    @settings(max_examples=100)
    @given(random_meshes())
    def test_invariants_on_random_meshes(self, mesh):
        k1, m1, h1, m1_ri = assemble_axial_operators(mesh)
        L = mesh.length
        for A in (k1, m1, m1_ri):
            np.testing.assert_allclose(A, A.T, atol=1e-12 * np.abs(A).max())
        assert np.linalg.eigvalsh(m1).min() > 0
        assert np.linalg.eigvalsh(k1).min() > -1e-10 * np.abs(k1).max()
        one = np.ones(mesh.n_nodes)
        np.testing.assert_allclose(k1 @ one, 0.0, atol=1e-11 * np.abs(k1).max())
        assert one @ m1 @ one == pytest.approx(L, rel=1e-12)
        assert one @ m1_ri @ one == pytest.approx(L, rel=1e-12)
        # integration by parts: h1 + h1^T = e_L e_L^T - e_0 e_0^T
        B = np.zeros_like(h1)
        B[-1, -1], B[0, 0] = 1.0, -1.0
        np.testing.assert_allclose(h1 + h1.T, B, atol=1e-12)
        K, M, H = high_order_integrals(mesh)
        np.testing.assert_allclose(k1, K, atol=1e-10 * np.abs(K).max())
        np.testing.assert_allclose(m1, M, atol=1e-12 * np.abs(M).max())
        np.testing.assert_allclose(h1, H, atol=1e-11)


class TestThicknessOperators:
    def test_closed_form_entries(self):
        t = 0.3
        basis = ThicknessBasis(4, t)
        k3, m3, h3, f3, r3 = assemble_thickness_operators(basis)
        i0, i1 = basis.degree - 0, basis.degree - 1  # positions of 1 and x3
        assert m3[i0, i0] == pytest.approx(t)
        assert m3[i1, i1] == pytest.approx(t**3 / 12)
        assert k3[i1, i1] == pytest.approx(t)
        np.testing.assert_allclose(r3, [0, 0, 0, 0, 1])
        np.testing.assert_allclose(f3, [2 * (t / 2) ** 4, 0, 2 * (t / 2) ** 2, 0, 2], atol=1e-17)

    @settings(max_examples=100)
    @given(st.integers(1, 6), st.floats(1e-3, 2.0))
    def test_invariants(self, degree, t):
        basis = ThicknessBasis(degree, t)
        k3, m3, h3, f3, r3 = assemble_thickness_operators(basis)
        p = basis.powers
        # exact monomial integrals
        s = p[:, None] + p[None, :]
        exact = np.where(s % 2 == 0, 2 * (t / 2) ** (s + 1) / (s + 1), 0.0)
        scale = np.sqrt(np.outer(np.diag(exact), np.diag(exact)))
        np.testing.assert_allclose(m3 / scale, exact / scale, atol=1e-13)
        odd_even = (p[:, None] + p[None, :]) % 2 == 1
        assert np.all(np.abs(m3 / scale)[odd_even] < 1e-13)
        np.testing.assert_allclose(m3, m3.T)
        np.testing.assert_allclose(k3, k3.T)
        assert np.linalg.eigvalsh(k3).min() > -1e-12 * max(np.abs(k3).max(), 1e-300)
        # integration by parts over the thickness
        top, bot = basis.values(t / 2)[0], basis.values(-t / 2)[0]
        np.testing.assert_allclose(h3 + h3.T, np.outer(top, top) - np.outer(bot, bot),
                                   atol=1e-12 * max(1.0, np.abs(h3).max()))
        assert r3 @ m3 @ r3 == pytest.approx(t)

    def test_odd_even_orthogonality_exact(self):
        basis = ThicknessBasis(4, 0.2)
        _, m3, _, _, _ = assemble_thickness_operators(basis)
        p = basis.powers
        mask = (p[:, None] + p[None, :]) % 2 == 1
        assert np.max(np.abs(m3[mask])) < 1e-18

    def test_degree_validated(self):
        with pytest.raises(ValueError):
            ThicknessBasis(0, 1.0)


class TestBundle:
    def test_shear_mass_follows_integration(self):
        mesh = build_mesh(1.0, 0.1, 4, AxialOrder.QUADRATIC)
        basis = ThicknessBasis(4, 0.1)
        sel = build_operators(mesh, basis, Integration.SELECTIVE)
        full = build_operators(mesh, basis, Integration.FULL)
        assert sel.m1_shear is sel.m1_ri
        assert full.m1_shear is full.m1

    def test_interpolation_reproduces_quadratics(self):
        mesh = build_mesh(2.0, 0.1, 5, AxialOrder.QUADRATIC, True)
        x = mesh.node_coords
        coeffs = 3 * x**2 - x + 1
        xs = np.linspace(0, 2, 37)
        np.testing.assert_allclose(interpolate(mesh, coeffs, xs), 3 * xs**2 - xs + 1)
        np.testing.assert_allclose(interpolate(mesh, coeffs, xs, derivative=True), 6 * xs - 1,
                                   atol=1e-12)
